#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace pulleytens {

using Vec3 = Eigen::Vector3d;
using VectorXd = Eigen::VectorXd;
using MatrixXd = Eigen::MatrixXd;
using Matrix3Xd = Eigen::Matrix3Xd;

/// Out-of-plane axis used by all side/rotation conventions. Models that
/// contain a pulley of nonzero radius must be laid out in a z = const plane.
inline const Vec3 kOutOfPlane{0.0, 0.0, 1.0};

class ModelError : public std::runtime_error {
public:
    explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

enum class SegmentKind { Bar, String };

/// One connection point at a physical node: either the pinned center
/// (radius 0, side 0) or a pulley wheel (radius > 0, side -1/+1).
/// side = +1 means the string passes on the right of the wheel relative to
/// its direction of travel, -1 on the left.
struct Attachment {
    double radius = 0.0;
    int side = 0;
};

struct PhysicalNode {
    int id = 0;
    Vec3 position = Vec3::Zero();
    std::vector<Attachment> attachments{Attachment{}};
    bool fixed_x = false;
    bool fixed_y = false;
    bool fixed_z = false;
    double point_mass = 0.0;
};

/// (node id, attachment index). Attachment indices are 1-based to match the
/// usual node/wheel numbering in structural drawings.
struct AttachmentRef {
    int node = 0;
    int attachment = 1;

    friend bool operator==(const AttachmentRef& a, const AttachmentRef& b) {
        return a.node == b.node && a.attachment == b.attachment;
    }
};

struct Segment {
    int id = 0;
    SegmentKind kind = SegmentKind::String;
    AttachmentRef start;
    AttachmentRef end;
    double mass = 0.0;
};

/// A member is the force-carrying unit: a bar, a plain string, or a whole
/// clustered string listed as the ordered sequence of segments it traverses.
struct MemberDef {
    int id = 0;
    std::vector<int> segments;
    double youngs_modulus = 0.0;
    double area = 0.0;
    double rest_length = 0.0;
};

struct PointLoad {
    int node = 0;
    Vec3 force = Vec3::Zero();
};

struct StructureModel {
    std::string name;
    std::vector<PhysicalNode> nodes;
    std::vector<Segment> segments;
    std::vector<MemberDef> members;
    std::vector<PointLoad> loads;
    Vec3 gravity = Vec3::Zero();
};

/// All constant index/topology matrices derived from a StructureModel.
/// Immutable after construction; shareable across concurrent solves.
struct TopologySet {
    int node_count = 0;        // physical nodes
    int attachment_count = 0;  // attachments, counting repeats (n_n)
    int segment_count = 0;     // n_e
    int member_count = 0;      // n_ec

    /// Global attachment index of (node i, attachment 1); attachments of one
    /// node are contiguous, node-major ordering.
    std::vector<int> attachment_offset;
    /// Physical node index of each global attachment.
    std::vector<int> attachment_node;

    MatrixXd connectivity;  // C      (n_e x n_n), rows: -1 at start, +1 at end
    MatrixXd start_map;     // C_start(n_e x n_n)
    MatrixXd end_map;       // C_end  (n_e x n_n)
    MatrixXd clustering;    // S      (n_ec x n_e)
    MatrixXd sequence;      // stacked sequence matrix (n_e x n_e)

    /// Per member, the ordered 0-based segment indices it traverses.
    std::vector<std::vector<int>> member_segments;
    /// Member index of each segment.
    std::vector<int> segment_member;

    VectorXd radii;  // per attachment (n_n)
    VectorXd sides;  // per attachment, in {-1, 0, +1}

    VectorXd radius_start;  // per segment: radius at the start attachment
    VectorXd radius_end;    // per segment: radius at the end attachment
    VectorXd side_start;    // per segment: side flag at the start attachment
    VectorXd side_end;      // per segment: side flag at the end attachment
    VectorXd sign_start;    // per segment: sign of the start radius in the tangent triangle
    VectorXd sign_end;      // per segment: sign of the end radius
    VectorXd segment_radius;  // per segment: effective radius of the tangent triangle

    /// Per-segment wrap weight used by the stiffness assembly: row of C applied
    /// to the elementwise product side*radius over attachments.
    VectorXd wrap_weight;

    /// Maps from free/fixed physical coordinates to the repeated attachment
    /// vector. Column j carries a 1 in every attachment copy of that physical
    /// coordinate, so transposing sums forces over the copies of a node.
    MatrixXd expand_free;   // E_a (3 n_n x n_free)
    MatrixXd expand_fixed;  // E_b (3 n_n x n_fixed)
    std::vector<int> free_coords;   // physical coordinate ids 3*node+axis
    std::vector<int> fixed_coords;
    int free_count = 0;
    int fixed_count = 0;

    bool planar = false;  // true when any pulley radius is nonzero

    int attachment_index(const AttachmentRef& ref) const {
        return attachment_offset[node_of(ref.node)] + (ref.attachment - 1);
    }

    int node_of(int node_id) const {
        auto it = node_index.find(node_id);
        if (it == node_index.end()) throw ModelError("unknown node id " + std::to_string(node_id));
        return it->second;
    }

    int member_of(int member_id) const {
        auto it = member_index.find(member_id);
        if (it == member_index.end()) throw ModelError("unknown member id " + std::to_string(member_id));
        return it->second;
    }

    int segment_of(int segment_id) const {
        auto it = segment_index.find(segment_id);
        if (it == segment_index.end()) throw ModelError("unknown segment id " + std::to_string(segment_id));
        return it->second;
    }

    std::map<int, int> node_index;     // node id -> position in nodes
    std::map<int, int> segment_index;  // segment id -> row in connectivity
    std::map<int, int> member_index;   // member id -> row in clustering
};

namespace detail {

inline void check_attachment(const StructureModel& model, const std::map<int, int>& node_index,
                             const AttachmentRef& ref, const std::string& where) {
    auto it = node_index.find(ref.node);
    if (it == node_index.end())
        throw ModelError(where + ": unknown node id " + std::to_string(ref.node));
    const auto& node = model.nodes[it->second];
    if (ref.attachment < 1 || ref.attachment > static_cast<int>(node.attachments.size()))
        throw ModelError("DofOutOfRange: " + where + ": attachment " + std::to_string(ref.attachment) +
                         " out of range on node " + std::to_string(ref.node));
}

}  // namespace detail

/// Builds and validates every constant matrix of the formulation. Throws
/// ModelError on any invariant violation; malformed models are rejected,
/// never repaired.
inline TopologySet build_topology(const StructureModel& model) {
    TopologySet topo;
    topo.node_count = static_cast<int>(model.nodes.size());
    if (topo.node_count == 0) throw ModelError("model has no nodes");

    for (int i = 0; i < topo.node_count; ++i) {
        const auto& node = model.nodes[i];
        if (topo.node_index.count(node.id))
            throw ModelError("duplicate node id " + std::to_string(node.id));
        topo.node_index[node.id] = i;
        if (node.attachments.empty())
            throw ModelError("node " + std::to_string(node.id) + " has no attachments");
        for (const auto& att : node.attachments) {
            if (att.radius < 0.0)
                throw ModelError("node " + std::to_string(node.id) + " has a negative pulley radius");
            if ((att.radius == 0.0) != (att.side == 0))
                throw ModelError("node " + std::to_string(node.id) +
                                 ": side flag must be 0 exactly for radius-0 attachments");
            if (att.side < -1 || att.side > 1)
                throw ModelError("node " + std::to_string(node.id) + ": side flag outside {-1,0,1}");
        }
    }

    topo.attachment_offset.resize(topo.node_count);
    int n_att = 0;
    for (int i = 0; i < topo.node_count; ++i) {
        topo.attachment_offset[i] = n_att;
        n_att += static_cast<int>(model.nodes[i].attachments.size());
        for (size_t j = 0; j < model.nodes[i].attachments.size(); ++j)
            topo.attachment_node.push_back(i);
    }
    topo.attachment_count = n_att;

    topo.radii.resize(n_att);
    topo.sides.resize(n_att);
    for (int i = 0; i < topo.node_count; ++i)
        for (size_t j = 0; j < model.nodes[i].attachments.size(); ++j) {
            topo.radii[topo.attachment_offset[i] + static_cast<int>(j)] = model.nodes[i].attachments[j].radius;
            topo.sides[topo.attachment_offset[i] + static_cast<int>(j)] = model.nodes[i].attachments[j].side;
        }

    topo.segment_count = static_cast<int>(model.segments.size());
    if (topo.segment_count == 0) throw ModelError("model has no segments");
    topo.connectivity = MatrixXd::Zero(topo.segment_count, n_att);
    topo.start_map = MatrixXd::Zero(topo.segment_count, n_att);
    topo.end_map = MatrixXd::Zero(topo.segment_count, n_att);

    for (int k = 0; k < topo.segment_count; ++k) {
        const auto& seg = model.segments[k];
        if (topo.segment_index.count(seg.id))
            throw ModelError("duplicate segment id " + std::to_string(seg.id));
        topo.segment_index[seg.id] = k;
        detail::check_attachment(model, topo.node_index, seg.start, "segment " + std::to_string(seg.id));
        detail::check_attachment(model, topo.node_index, seg.end, "segment " + std::to_string(seg.id));
        if (seg.start == seg.end)
            throw ModelError("segment " + std::to_string(seg.id) + " starts and ends on the same attachment");
        if (seg.mass < 0.0) throw ModelError("segment " + std::to_string(seg.id) + " has negative mass");

        const int s = topo.attachment_index(seg.start);
        const int e = topo.attachment_index(seg.end);
        if (seg.kind == SegmentKind::Bar && (topo.radii[s] > 0.0 || topo.radii[e] > 0.0))
            throw ModelError("BarOnPulley: bar segment " + std::to_string(seg.id) +
                             " attaches to a pulley wheel");
        topo.connectivity(k, s) = -1.0;
        topo.connectivity(k, e) = 1.0;
        topo.start_map(k, s) = 1.0;
        topo.end_map(k, e) = 1.0;
    }

    // Members must partition the segments; segments not covered by any member
    // become singleton members appended in segment order.
    std::vector<MemberDef> members = model.members;
    {
        std::set<int> covered;
        for (const auto& m : members)
            for (int sid : m.segments) covered.insert(sid);
        int next_id = 0;
        for (const auto& m : members) next_id = std::max(next_id, m.id);
        for (const auto& seg : model.segments)
            if (!covered.count(seg.id))
                throw ModelError("segment " + std::to_string(seg.id) +
                                 " belongs to no member; every segment must be listed in exactly one member");
    }

    topo.member_count = static_cast<int>(members.size());
    topo.clustering = MatrixXd::Zero(topo.member_count, topo.segment_count);
    topo.sequence = MatrixXd::Zero(topo.segment_count, topo.segment_count);
    topo.segment_member.assign(topo.segment_count, -1);
    topo.member_segments.resize(topo.member_count);

    int seq_row = 0;
    for (int m = 0; m < topo.member_count; ++m) {
        const auto& mem = members[m];
        if (topo.member_index.count(mem.id))
            throw ModelError("duplicate member id " + std::to_string(mem.id));
        topo.member_index[mem.id] = m;
        if (mem.segments.empty())
            throw ModelError("member " + std::to_string(mem.id) + " lists no segments");
        if (!(mem.youngs_modulus > 0.0) || !(mem.area > 0.0) || !(mem.rest_length > 0.0))
            throw ModelError("member " + std::to_string(mem.id) +
                             " needs positive modulus, area, and rest length");

        std::set<int> seen;
        for (size_t j = 0; j < mem.segments.size(); ++j) {
            if (!seen.insert(mem.segments[j]).second)
                throw ModelError("DuplicateSegmentInCluster: member " + std::to_string(mem.id) +
                                 " lists segment " + std::to_string(mem.segments[j]) + " twice");
            const int k = topo.segment_of(mem.segments[j]);
            if (topo.segment_member[k] != -1)
                throw ModelError("DuplicateSegmentInCluster: segment " + std::to_string(mem.segments[j]) +
                                 " appears in more than one member");
            topo.segment_member[k] = m;
            topo.member_segments[m].push_back(k);
            topo.clustering(m, k) = 1.0;
            topo.sequence(seq_row++, k) = 1.0;

            if (j > 0) {
                const int prev = topo.member_segments[m][j - 1];
                if (!(model.segments[prev].end == model.segments[k].start))
                    throw ModelError("UnsharedJunction: member " + std::to_string(mem.id) +
                                     ": consecutive segments " + std::to_string(model.segments[prev].id) +
                                     " and " + std::to_string(mem.segments[j]) +
                                     " do not chain end-to-start through one attachment");
                // Interior junctions normally ride a wheel; radius 0 is the
                // classical sliding-cable degeneration and stays legal.
            }
            if (mem.segments.size() > 1 && model.segments[k].kind == SegmentKind::Bar)
                throw ModelError("BarOnPulley: member " + std::to_string(mem.id) +
                                 " clusters bar segment " + std::to_string(mem.segments[j]));
        }

        // A member terminates at anchors; only interior junctions ride wheels.
        const int first = topo.member_segments[m].front();
        const int last = topo.member_segments[m].back();
        const int a0 = topo.attachment_index(model.segments[first].start);
        const int a1 = topo.attachment_index(model.segments[last].end);
        if (topo.radii[a0] > 0.0 || topo.radii[a1] > 0.0)
            throw ModelError("member " + std::to_string(mem.id) +
                             " must start and end on pinned (radius-0) attachments");
    }

    topo.radius_start = topo.start_map * topo.radii;
    topo.radius_end = topo.end_map * topo.radii;
    topo.side_start = topo.start_map * topo.sides;
    topo.side_end = topo.end_map * topo.sides;

    // Signs of the two end radii in the right triangle behind the straight
    // part. When the string passes both wheels on the same side the radii
    // subtract (external tangent), otherwise they add. Equal radii on the
    // same side degenerate to a tangent parallel to the center line.
    topo.sign_start.resize(topo.segment_count);
    topo.sign_end.resize(topo.segment_count);
    for (int k = 0; k < topo.segment_count; ++k) {
        const bool same_side = topo.side_start[k] * topo.side_end[k] > 0.0;
        const double rs = topo.radius_start[k];
        const double re = topo.radius_end[k];
        topo.sign_start[k] = (same_side && rs < re) ? -1.0 : 1.0;
        topo.sign_end[k] = (same_side && re <= rs) ? -1.0 : 1.0;
    }
    topo.segment_radius = topo.sign_start.cwiseProduct(topo.radius_start) +
                          topo.sign_end.cwiseProduct(topo.radius_end);
    for (int k = 0; k < topo.segment_count; ++k)
        if (topo.segment_radius[k] < 0.0)
            throw ModelError("internal error: negative effective segment radius");

    topo.wrap_weight = topo.connectivity * topo.sides.cwiseProduct(topo.radii);

    topo.planar = topo.radii.maxCoeff() > 0.0;
    if (topo.planar) {
        const double z0 = model.nodes.front().position.z();
        for (const auto& node : model.nodes) {
            if (std::abs(node.position.z() - z0) > 1e-12)
                throw ModelError("planar model required: node " + std::to_string(node.id) +
                                 " leaves the z = const plane while pulleys are present");
            if (!node.fixed_z)
                throw ModelError("planar model required: node " + std::to_string(node.id) +
                                 " must have its z coordinate fixed while pulleys are present");
        }
    }

    for (int i = 0; i < topo.node_count; ++i) {
        const auto& node = model.nodes[i];
        const bool fixed[3] = {node.fixed_x, node.fixed_y, node.fixed_z};
        for (int axis = 0; axis < 3; ++axis) {
            if (fixed[axis])
                topo.fixed_coords.push_back(3 * i + axis);
            else
                topo.free_coords.push_back(3 * i + axis);
        }
    }
    topo.free_count = static_cast<int>(topo.free_coords.size());
    topo.fixed_count = static_cast<int>(topo.fixed_coords.size());

    topo.expand_free = MatrixXd::Zero(3 * n_att, topo.free_count);
    topo.expand_fixed = MatrixXd::Zero(3 * n_att, topo.fixed_count);
    auto fill = [&](MatrixXd& E, const std::vector<int>& coords) {
        for (size_t c = 0; c < coords.size(); ++c) {
            const int node = coords[c] / 3;
            const int axis = coords[c] % 3;
            const int first = topo.attachment_offset[node];
            const int count = static_cast<int>(model.nodes[node].attachments.size());
            for (int j = 0; j < count; ++j) E(3 * (first + j) + axis, static_cast<int>(c)) = 1.0;
        }
    };
    fill(topo.expand_free, topo.free_coords);
    fill(topo.expand_fixed, topo.fixed_coords);

    for (const auto& load : model.loads) topo.node_of(load.node);

    return topo;
}

/// Repeated nodal vector of the model's drawn configuration. Every attachment
/// copy of a node carries the node's coordinates, so the equal-coordinate
/// invariant holds by construction.
inline VectorXd initial_coordinates(const StructureModel& model, const TopologySet& topo) {
    VectorXd n(3 * topo.attachment_count);
    for (int a = 0; a < topo.attachment_count; ++a)
        n.segment<3>(3 * a) = model.nodes[topo.attachment_node[a]].position;
    return n;
}

/// Extracts the free/fixed physical coordinates from a repeated nodal vector
/// (the pseudo-inverse of the expansion maps: an average over copies).
inline std::pair<VectorXd, VectorXd> partition_dofs(const TopologySet& topo, const VectorXd& n) {
    if (n.size() != 3 * topo.attachment_count)
        throw ModelError("partition_dofs: nodal vector has wrong size");
    auto average = [&](const MatrixXd& E) {
        VectorXd out(E.cols());
        for (int c = 0; c < E.cols(); ++c) {
            double sum = 0.0, count = 0.0;
            for (int r = 0; r < E.rows(); ++r)
                if (E(r, c) != 0.0) {
                    sum += n[r];
                    count += 1.0;
                }
            out[c] = sum / count;
        }
        return out;
    };
    return {average(topo.expand_free), average(topo.expand_fixed)};
}

/// n = E_a n_a + E_b n_b.
inline VectorXd assemble_coordinates(const TopologySet& topo, const VectorXd& free_vals,
                                     const VectorXd& fixed_vals) {
    return topo.expand_free * free_vals + topo.expand_fixed * fixed_vals;
}

/// Nodal force vector on all attachment dofs. Point loads act on the physical
/// node; placing them on the first attachment copy is equivalent because the
/// free-coordinate reduction sums over copies.
inline VectorXd load_vector(const StructureModel& model, const TopologySet& topo) {
    VectorXd f = VectorXd::Zero(3 * topo.attachment_count);
    for (const auto& load : model.loads) {
        const int node = topo.node_of(load.node);
        f.segment<3>(3 * topo.attachment_offset[node]) += load.force;
    }
    return f;
}

}  // namespace pulleytens
