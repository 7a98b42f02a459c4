#pragma once

#include "pulleytens/geometry.hpp"
#include "pulleytens/model.hpp"

#include <cmath>
#include <vector>

namespace pulleytens {

class StaticsError : public std::runtime_error {
public:
    explicit StaticsError(const std::string& what) : std::runtime_error(what) {}
};

/// Mutable per-member material data. Rest lengths change under actuation
/// schedules, so they live here rather than in the immutable model.
struct MaterialState {
    VectorXd youngs_modulus;  // per member
    VectorXd area;
    VectorXd rest_length;
    std::vector<SegmentKind> kind;  // a member is a bar only if its single segment is
};

inline MaterialState make_materials(const StructureModel& model, const TopologySet& topo) {
    MaterialState mats;
    mats.youngs_modulus.resize(topo.member_count);
    mats.area.resize(topo.member_count);
    mats.rest_length.resize(topo.member_count);
    mats.kind.resize(topo.member_count);
    for (const auto& mem : model.members) {
        const int m = topo.member_of(mem.id);
        mats.youngs_modulus[m] = mem.youngs_modulus;
        mats.area[m] = mem.area;
        mats.rest_length[m] = mem.rest_length;
        mats.kind[m] = model.segments[topo.member_segments[m].front()].kind;
    }
    return mats;
}

/// Member and segment forces. Strings cannot push: a member whose current
/// length is below its rest length carries zero force and is flagged slack.
struct MemberForces {
    VectorXd member_force;   // per member (n_ec)
    VectorXd segment_force;  // per segment (n_e), the member force repeated
    std::vector<bool> slack;
};

inline MemberForces member_forces(const TopologySet& topo, const MaterialState& mats,
                                  const VectorXd& member_length) {
    MemberForces f;
    f.member_force.resize(topo.member_count);
    f.slack.assign(topo.member_count, false);
    for (int m = 0; m < topo.member_count; ++m) {
        const double stiffness = mats.youngs_modulus[m] * mats.area[m] / mats.rest_length[m];
        const double elongation = member_length[m] - mats.rest_length[m];
        double t = stiffness * elongation;
        if (mats.kind[m] == SegmentKind::String && t < 0.0) {
            t = 0.0;
            f.slack[m] = true;
        }
        f.member_force[m] = t;
    }
    f.segment_force = topo.clustering.transpose() * f.member_force;
    return f;
}

/// Gravity force on all attachment dofs: half of each segment mass to each of
/// its end attachments plus the nodal point masses, times the acceleration.
inline VectorXd gravity_vector(const StructureModel& model, const TopologySet& topo) {
    VectorXd lumped = VectorXd::Zero(topo.attachment_count);
    for (int k = 0; k < topo.segment_count; ++k) {
        const double half = 0.5 * model.segments[k].mass;
        for (int a = 0; a < topo.attachment_count; ++a)
            if (topo.connectivity(k, a) != 0.0) lumped[a] += half;
    }
    for (int i = 0; i < topo.node_count; ++i)
        lumped[topo.attachment_offset[i]] += model.nodes[i].point_mass;

    VectorXd g(3 * topo.attachment_count);
    for (int a = 0; a < topo.attachment_count; ++a) g.segment<3>(3 * a) = lumped[a] * model.gravity;
    return g;
}

/// Everything the linearized theory derives at one configuration.
struct StaticsState {
    MemberForces forces;

    double strain_energy = 0.0;
    double gravity_energy = 0.0;  // potential of the gravity loads, -g.n
    double total_energy = 0.0;

    MatrixXd stiffness;        // K, maps the nodal vector to internal nodal force
    MatrixXd stiffness_aa;     // free-free partition
    MatrixXd stiffness_ab;     // free-fixed partition

    MatrixXd equilibrium_matrix;          // A_2c (3 n_n x n_ec)
    MatrixXd reduced_equilibrium_matrix;  // free-dof rows of A_2c

    MatrixXd segment_compatibility;  // B_l  (n_e x 3 n_n)
    MatrixXd compatibility;          // B_lc = A_2c^T

    MatrixXd tangent_stiffness;  // K_T = K_g + K_e
    MatrixXd geometric_stiffness;
    MatrixXd material_stiffness;
    MatrixXd tangent_aa;
    MatrixXd tangent_ab;
};

namespace detail {

inline void add_block(MatrixXd& M, int row_att, int col_att, const Eigen::Matrix3d& block) {
    M.block<3, 3>(3 * row_att, 3 * col_att) += block;
}

/// Start/end attachment of a segment.
inline std::pair<int, int> segment_ends(const TopologySet& topo, int k) {
    int s = -1, e = -1;
    for (int a = 0; a < topo.attachment_count; ++a) {
        if (topo.start_map(k, a) != 0.0) s = a;
        if (topo.end_map(k, a) != 0.0) e = a;
    }
    return {s, e};
}

inline Eigen::Matrix3d cross_operator() {
    Eigen::Matrix3d z = Eigen::Matrix3d::Zero();
    z(0, 1) = -1.0;
    z(1, 0) = 1.0;
    return z;
}

}  // namespace detail

/// Stiffness matrix K: the internal nodal force at configuration n is K n.
/// First term carries the straight parts, second term the wrap angles.
inline MatrixXd stiffness_matrix(const TopologySet& topo, const GeometryState& g,
                                 const VectorXd& segment_force) {
    const int na = topo.attachment_count;
    MatrixXd K = MatrixXd::Zero(3 * na, 3 * na);
    const Eigen::Matrix3d I = Eigen::Matrix3d::Identity();
    const Eigen::Matrix3d Z = detail::cross_operator();
    for (int k = 0; k < topo.segment_count; ++k) {
        const auto [s, e] = detail::segment_ends(topo, k);
        const double l = g.length[k];
        const double c1 = segment_force[k] * g.straight_length[k] / (l * l);
        const double c2 = segment_force[k] * topo.wrap_weight[k] / (l * l);
        const Eigen::Matrix3d block = c1 * I - c2 * Z;
        detail::add_block(K, s, s, block);
        detail::add_block(K, e, e, block);
        detail::add_block(K, s, e, -block);
        detail::add_block(K, e, s, -block);
    }
    return K;
}

/// Equilibrium matrix A_2c: maps member forces to internal nodal forces,
/// A_2c t_c = K n at the same configuration.
inline MatrixXd equilibrium_matrix(const TopologySet& topo, const GeometryState& g) {
    MatrixXd A = MatrixXd::Zero(3 * topo.attachment_count, topo.member_count);
    for (int k = 0; k < topo.segment_count; ++k) {
        const auto [s, e] = detail::segment_ends(topo, k);
        const double l = g.length[k];
        const Vec3 h = g.axis.col(k);
        const Vec3 v = (g.straight_length[k] / (l * l)) * h -
                       (topo.wrap_weight[k] / (l * l)) * kOutOfPlane.cross(h);
        const int m = topo.segment_member[k];
        A.col(m).segment<3>(3 * s) -= v;
        A.col(m).segment<3>(3 * e) += v;
    }
    return A;
}

/// Independent reference for the clustered tangent stiffness at zero pulley
/// radius; used only as a degeneration oracle.
inline MatrixXd cts_reference_tangent(const TopologySet& topo, const GeometryState& g,
                                      const MaterialState& mats, const MemberForces& forces) {
    if (topo.radii.maxCoeff() != 0.0)
        throw StaticsError("NonzeroRadius: the reference tangent stiffness requires all radii zero");

    const int na3 = 3 * topo.attachment_count;
    const Eigen::Matrix3d I = Eigen::Matrix3d::Identity();

    // Segment-level equilibrium matrix of the classical formulation.
    MatrixXd A2 = MatrixXd::Zero(na3, topo.segment_count);
    for (int k = 0; k < topo.segment_count; ++k) {
        const auto [s, e] = detail::segment_ends(topo, k);
        const Vec3 u = g.axis.col(k) / g.length[k];
        A2.col(k).segment<3>(3 * s) -= u;
        A2.col(k).segment<3>(3 * e) += u;
    }
    const MatrixXd A2c = A2 * topo.clustering.transpose();

    MatrixXd K_T = MatrixXd::Zero(na3, na3);
    for (int k = 0; k < topo.segment_count; ++k) {
        const auto [s, e] = detail::segment_ends(topo, k);
        const Eigen::Matrix3d block = (forces.segment_force[k] / g.length[k]) * I;
        detail::add_block(K_T, s, s, block);
        detail::add_block(K_T, e, e, block);
        detail::add_block(K_T, s, e, -block);
        detail::add_block(K_T, e, s, -block);
    }
    for (int k = 0; k < topo.segment_count; ++k)
        K_T -= (forces.segment_force[k] / g.length[k]) * A2.col(k) * A2.col(k).transpose();
    for (int m = 0; m < topo.member_count; ++m) {
        double axial = mats.youngs_modulus[m] * mats.area[m] / mats.rest_length[m];
        if (forces.slack[m]) axial = 0.0;
        K_T += axial * A2c.col(m) * A2c.col(m).transpose();
    }
    return K_T;
}

/// Assembles the full statics state at one configuration.
inline StaticsState compute_statics(const TopologySet& topo, const GeometryState& g,
                                    const MaterialState& mats, const VectorXd& gravity_force) {
    StaticsState st;
    st.forces = member_forces(topo, mats, g.member_length);

    st.strain_energy = 0.0;
    for (int m = 0; m < topo.member_count; ++m) {
        if (st.forces.slack[m]) continue;
        const double stiffness = mats.youngs_modulus[m] * mats.area[m] / mats.rest_length[m];
        const double e = g.member_length[m] - mats.rest_length[m];
        st.strain_energy += 0.5 * stiffness * e * e;
    }
    st.gravity_energy = -gravity_force.dot(g.coordinates);
    st.total_energy = st.strain_energy + st.gravity_energy;

    st.stiffness = stiffness_matrix(topo, g, st.forces.segment_force);
    st.stiffness_aa = topo.expand_free.transpose() * st.stiffness * topo.expand_free;
    st.stiffness_ab = topo.expand_free.transpose() * st.stiffness * topo.expand_fixed;

    st.equilibrium_matrix = equilibrium_matrix(topo, g);
    st.reduced_equilibrium_matrix = topo.expand_free.transpose() * st.equilibrium_matrix;

    st.segment_compatibility = length_gradient(topo, g);
    st.compatibility = st.equilibrium_matrix.transpose();

    // Tangent stiffness: K plus the length-derivative terms plus the material
    // part. The middle terms come from differentiating K n at frozen forces.
    const int na3 = 3 * topo.attachment_count;
    MatrixXd K_T = st.stiffness;
    for (int k = 0; k < topo.segment_count; ++k) {
        const double l = g.length[k];
        const double ls = g.straight_length[k];
        const double r = topo.segment_radius[k];
        const double coeff = (r * r - ls * ls) * st.forces.segment_force[k] / (l * l * ls);
        K_T += coeff * st.segment_compatibility.row(k).transpose() * st.segment_compatibility.row(k);
    }
    for (int k = 0; k < topo.segment_count; ++k) {
        const double w = topo.wrap_weight[k];
        if (w == 0.0) continue;
        const auto [s, e] = detail::segment_ends(topo, k);
        const double c = 2.0 * st.forces.segment_force[k] * w / std::pow(g.length[k], 3);
        const Vec3 zh = kOutOfPlane.cross(g.axis.col(k));
        VectorXd u = VectorXd::Zero(na3);
        u.segment<3>(3 * s) -= zh;
        u.segment<3>(3 * e) += zh;
        K_T += c * u * st.segment_compatibility.row(k);
    }
    st.geometric_stiffness = K_T;

    st.material_stiffness = MatrixXd::Zero(na3, na3);
    for (int m = 0; m < topo.member_count; ++m) {
        double axial = mats.youngs_modulus[m] * mats.area[m] / mats.rest_length[m];
        if (st.forces.slack[m]) axial = 0.0;
        st.material_stiffness +=
            axial * st.equilibrium_matrix.col(m) * st.equilibrium_matrix.col(m).transpose();
    }
    st.tangent_stiffness = st.geometric_stiffness + st.material_stiffness;
    st.tangent_aa = topo.expand_free.transpose() * st.tangent_stiffness * topo.expand_free;
    st.tangent_ab = topo.expand_free.transpose() * st.tangent_stiffness * topo.expand_fixed;

    return st;
}

/// Out-of-balance force on the free coordinates. `applied_force` is the
/// external nodal force vector; the gravity force enters with a plus sign
/// because gravity_vector() returns a force, not a potential gradient.
inline VectorXd residual(const TopologySet& topo, const GeometryState& g, const StaticsState& st,
                         const VectorXd& applied_force, const VectorXd& gravity_force) {
    return topo.expand_free.transpose() *
           (applied_force + gravity_force - st.stiffness * g.coordinates);
}

}  // namespace pulleytens
