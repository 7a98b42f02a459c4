#pragma once

#include "pulleytens/model.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

namespace pulleytens {

class GeometryError : public std::runtime_error {
public:
    enum class Kind { ZeroLengthSegment, PulleyOverlap, DegenerateJunction };

    GeometryError(Kind kind, const std::string& what) : std::runtime_error(what), kind(kind) {}
    Kind kind;
};

/// Relative slack before two wheels are reported as overlapping; guards the
/// square root in the straight length and the 1/l_S terms in the gradients.
inline constexpr double kOverlapTolerance = 1e-9;

/// A junction where the computed contact arc came out negative: the string
/// geometrically lifts off the wheel. The formulation assumes contact, so
/// this is a warning, not an error.
struct LiftOffWarning {
    int member = 0;    // member index
    int junction = 0;  // junction index within the member (0-based)
    double wrap_angle = 0.0;
};

/// Every configuration-dependent geometric quantity of one nodal vector.
struct GeometryState {
    VectorXd coordinates;  // the repeated nodal vector this state was built from

    Matrix3Xd axis;            // center-line vector per segment (3 x n_e)
    VectorXd length;           // center-line length per segment
    VectorXd straight_length;  // tangent-line portion per segment
    VectorXd straight_angle;   // angle between center line and tangent line, per segment

    /// Per member: angle between the reversed incoming and outgoing center
    /// lines at each interior junction, wrapped into [0, 2pi).
    std::vector<VectorXd> junction_angle;
    std::vector<VectorXd> junction_sign;  // arccos branch indicator, -1 or +1
    std::vector<VectorXd> wrap_angle;     // contact arc per interior junction

    VectorXd member_length;  // total length per member, straight parts plus arcs

    Matrix3Xd tangent_start;  // tangent point on the start wheel, per segment
    Matrix3Xd tangent_end;    // tangent point on the end wheel, per segment

    std::vector<LiftOffWarning> lift_offs;
};

namespace detail {

inline double wrap_two_pi(double angle) {
    const double two_pi = 2.0 * std::numbers::pi;
    double out = std::fmod(angle, two_pi);
    if (out < 0.0) out += two_pi;
    return out;
}

/// Rotation of an in-plane vector about the out-of-plane axis.
inline Vec3 rotate_in_plane(const Vec3& v, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return Vec3{c * v.x() - s * v.y(), s * v.x() + c * v.y(), v.z()};
}

}  // namespace detail

/// Center-line vectors and lengths for one configuration.
inline void compute_center_lines(const TopologySet& topo, const VectorXd& n, Matrix3Xd& axis,
                                 VectorXd& length) {
    const int ne = topo.segment_count;
    axis.resize(3, ne);
    length.resize(ne);
    const double scale = std::max(1.0, n.size() ? n.cwiseAbs().maxCoeff() : 1.0);
    for (int k = 0; k < ne; ++k) {
        int s = -1, e = -1;
        for (int a = 0; a < topo.attachment_count; ++a) {
            if (topo.start_map(k, a) != 0.0) s = a;
            if (topo.end_map(k, a) != 0.0) e = a;
        }
        axis.col(k) = n.segment<3>(3 * e) - n.segment<3>(3 * s);
        length[k] = axis.col(k).norm();
        if (length[k] <= 1e-12 * scale)
            throw GeometryError(GeometryError::Kind::ZeroLengthSegment,
                                "segment " + std::to_string(k) + " has (near) coincident end points");
    }
}

/// l_S = sqrt(l^2 - r^2) per segment; the zero-radius branch returns l exactly.
inline VectorXd straight_lengths(const TopologySet& topo, const VectorXd& length) {
    VectorXd ls(topo.segment_count);
    for (int k = 0; k < topo.segment_count; ++k) {
        const double r = topo.segment_radius[k];
        if (r == 0.0) {
            ls[k] = length[k];
            continue;
        }
        if (length[k] <= r * (1.0 + kOverlapTolerance))
            throw GeometryError(GeometryError::Kind::PulleyOverlap,
                                "segment " + std::to_string(k) +
                                    ": no tangent line exists, wheel spacing " + std::to_string(length[k]) +
                                    " vs effective radius " + std::to_string(r));
        ls[k] = std::sqrt(length[k] * length[k] - r * r);
    }
    return ls;
}

inline VectorXd straight_angles(const TopologySet& topo, const VectorXd& length) {
    VectorXd phi(topo.segment_count);
    for (int k = 0; k < topo.segment_count; ++k) {
        const double r = topo.segment_radius[k];
        phi[k] = (r == 0.0) ? 0.0 : std::asin(r / length[k]);
    }
    return phi;
}

/// Full geometric evaluation of one configuration. Throws GeometryError when
/// the configuration is invalid (coincident nodes, overlapping wheels).
inline GeometryState compute_geometry(const TopologySet& topo, const VectorXd& n) {
    GeometryState g;
    g.coordinates = n;
    compute_center_lines(topo, n, g.axis, g.length);
    g.straight_length = straight_lengths(topo, g.length);
    g.straight_angle = straight_angles(topo, g.length);

    const int nec = topo.member_count;
    g.junction_angle.resize(nec);
    g.junction_sign.resize(nec);
    g.wrap_angle.resize(nec);
    g.member_length.resize(nec);

    for (int m = 0; m < nec; ++m) {
        const auto& segs = topo.member_segments[m];
        const int junctions = static_cast<int>(segs.size()) - 1;
        g.junction_angle[m].resize(std::max(junctions, 0));
        g.junction_sign[m].resize(std::max(junctions, 0));
        g.wrap_angle[m].resize(std::max(junctions, 0));

        double total = 0.0;
        for (int j = 0; j < static_cast<int>(segs.size()); ++j) total += g.straight_length[segs[j]];

        for (int j = 0; j < junctions; ++j) {
            const int a = segs[j], b = segs[j + 1];
            const Vec3 ha = g.axis.col(a), hb = g.axis.col(b);
            double c = -ha.dot(hb) / (g.length[a] * g.length[b]);
            c = std::clamp(c, -1.0, 1.0);

            // Perpendicular on the wrap side of the incoming segment decides
            // the arccos branch; ties take the principal branch.
            const Vec3 perp = topo.side_end[a] * kOutOfPlane.cross(ha);
            const double probe = perp.dot(hb);
            const double eta = (probe != 0.0) ? (probe > 0.0 ? 1.0 : -1.0) : 1.0;
            g.junction_sign[m][j] = eta;
            g.junction_angle[m][j] = detail::wrap_two_pi(eta * std::acos(c));

            const double wrap = std::numbers::pi - g.junction_angle[m][j] +
                                topo.sign_end[a] * g.straight_angle[a] +
                                topo.sign_start[b] * g.straight_angle[b];
            g.wrap_angle[m][j] = wrap;
            if (wrap < 0.0) g.lift_offs.push_back({m, j, wrap});

            total += topo.radius_end[a] * wrap;
        }
        g.member_length[m] = total;
    }

    // Tangent points: rotate the unit center line by the signed complement of
    // the straight angle and scale by the wheel radius at each end.
    g.tangent_start.resize(3, topo.segment_count);
    g.tangent_end.resize(3, topo.segment_count);
    for (int k = 0; k < topo.segment_count; ++k) {
        Vec3 cs = Vec3::Zero(), ce = Vec3::Zero();
        for (int a = 0; a < topo.attachment_count; ++a) {
            if (topo.start_map(k, a) != 0.0) cs = n.segment<3>(3 * a);
            if (topo.end_map(k, a) != 0.0) ce = n.segment<3>(3 * a);
        }
        const Vec3 unit = g.axis.col(k) / g.length[k];
        const double half_pi = 0.5 * std::numbers::pi;
        const double theta_start =
            -topo.side_start[k] * (half_pi - topo.sign_start[k] * g.straight_angle[k]);
        const double theta_end =
            topo.side_end[k] * (half_pi - topo.sign_end[k] * g.straight_angle[k]);
        g.tangent_start.col(k) =
            cs + topo.radius_start[k] * detail::rotate_in_plane(unit, theta_start);
        g.tangent_end.col(k) = ce - topo.radius_end[k] * detail::rotate_in_plane(unit, theta_end);
    }

    return g;
}

/// d l / d n, one dense row per segment. Also the segment-level compatibility
/// matrix: a length increment per unit nodal motion.
inline MatrixXd length_gradient(const TopologySet& topo, const GeometryState& g) {
    MatrixXd grad = MatrixXd::Zero(topo.segment_count, 3 * topo.attachment_count);
    for (int k = 0; k < topo.segment_count; ++k) {
        const Vec3 unit = g.axis.col(k) / g.length[k];
        for (int a = 0; a < topo.attachment_count; ++a) {
            const double c = topo.connectivity(k, a);
            if (c != 0.0) grad.block<1, 3>(k, 3 * a) += c * unit.transpose();
        }
    }
    return grad;
}

/// d l_S / d n = (l / l_S) d l / d n per segment.
inline MatrixXd straight_length_gradient(const TopologySet& topo, const GeometryState& g,
                                         const MatrixXd& dl) {
    MatrixXd grad = dl;
    for (int k = 0; k < topo.segment_count; ++k)
        grad.row(k) *= g.length[k] / g.straight_length[k];
    return grad;
}

/// d phi_S / d n = -(r / (l l_S)) d l / d n per segment.
inline MatrixXd straight_angle_gradient(const TopologySet& topo, const GeometryState& g,
                                        const MatrixXd& dl) {
    MatrixXd grad = dl;
    for (int k = 0; k < topo.segment_count; ++k)
        grad.row(k) *= -topo.segment_radius[k] / (g.length[k] * g.straight_length[k]);
    return grad;
}

/// Gradient of the junction angle between segments j and j+1 of a member.
/// Closed form of the arccos derivative after the planar cross-product
/// cancellation; finite in the collinear configuration.
inline VectorXd junction_angle_gradient(const TopologySet& topo, const GeometryState& g, int member,
                                        int junction) {
    const auto& segs = topo.member_segments[member];
    const int a = segs[junction], b = segs[junction + 1];
    VectorXd grad = VectorXd::Zero(3 * topo.attachment_count);
    const double side = topo.side_end[a];
    const Vec3 za = kOutOfPlane.cross(g.axis.col(a)) / (g.length[a] * g.length[a]);
    const Vec3 zb = kOutOfPlane.cross(g.axis.col(b)) / (g.length[b] * g.length[b]);
    for (int att = 0; att < topo.attachment_count; ++att) {
        const double ca = topo.connectivity(a, att);
        const double cb = topo.connectivity(b, att);
        if (ca != 0.0) grad.segment<3>(3 * att) += side * ca * za;
        if (cb != 0.0) grad.segment<3>(3 * att) -= side * cb * zb;
    }
    return grad;
}

/// d l_C / d n, one row per member, assembled from the straight-length,
/// junction-angle, and straight-angle gradients.
inline MatrixXd member_length_gradient(const TopologySet& topo, const GeometryState& g) {
    const MatrixXd dl = length_gradient(topo, g);
    const MatrixXd dls = straight_length_gradient(topo, g, dl);
    const MatrixXd dphi = straight_angle_gradient(topo, g, dl);

    MatrixXd grad = MatrixXd::Zero(topo.member_count, 3 * topo.attachment_count);
    for (int m = 0; m < topo.member_count; ++m) {
        const auto& segs = topo.member_segments[m];
        for (size_t j = 0; j < segs.size(); ++j) {
            const int k = segs[j];
            grad.row(m) += dls.row(k);
            grad.row(m) += (topo.sign_start[k] * topo.radius_start[k] +
                            topo.sign_end[k] * topo.radius_end[k]) *
                           dphi.row(k);
            if (j + 1 < segs.size())
                grad.row(m) -= topo.radius_end[k] *
                               junction_angle_gradient(topo, g, m, static_cast<int>(j)).transpose();
        }
    }
    return grad;
}

}  // namespace pulleytens
