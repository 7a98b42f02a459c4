#pragma once

#include "pulleytens/geometry.hpp"
#include "pulleytens/model.hpp"
#include "pulleytens/statics.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pulleytens {

class SolveError : public std::runtime_error {
public:
    enum class Kind { SingularTangent, MaxIterExceeded, InvalidGeometry };

    SolveError(Kind kind, const std::string& what) : std::runtime_error(what), kind(kind) {}
    Kind kind;
};

struct SolveConfig {
    double tol_rel = 1e-6;
    /// Absolute residual tolerance in newtons; 0 selects 1e-9 times the
    /// substep force scale.
    double tol_abs = 0.0;
    int max_iter = 100;
    int substeps = 1;
    bool line_search = true;
};

/// End-of-schedule targets, reached by linear interpolation over the
/// substeps: applied loads, member rest lengths, and support motion.
struct Schedule {
    std::map<int, Vec3> load_target;      // node id -> final force
    std::map<int, double> rest_target;    // member id -> final rest length
    std::map<int, Vec3> support_target;   // node id -> final position (fixed nodes)
};

struct SolveWarning {
    enum class Kind { LiftOff, SlackTransition, RegularizedTangent };
    Kind kind;
    int substep = 0;
    std::string detail;
};

struct SubstepRecord {
    int substep = 0;
    int iterations = 0;
    double residual_norm = 0.0;
    double tolerance = 0.0;
    std::vector<double> residual_history;  // one entry per iteration, fresh evaluations

    VectorXd free_coords;         // converged n_a
    VectorXd coordinates;         // full repeated nodal vector
    VectorXd straight_length;     // per segment
    VectorXd member_length;       // per member
    VectorXd member_force;        // per member
    std::vector<VectorXd> wrap_angle;  // per member, per interior junction
};

struct SolveResult {
    bool converged = false;
    std::vector<SubstepRecord> trajectory;
    std::vector<SolveWarning> warnings;
    GeometryState final_geometry;
    StaticsState final_statics;
    VectorXd final_coordinates;
    std::string failure;  // empty on success
};

namespace detail {

struct Evaluation {
    GeometryState geometry;
    StaticsState statics;
    VectorXd residual;
    double residual_norm = 0.0;
};

inline std::optional<Evaluation> try_evaluate(const TopologySet& topo, const MaterialState& mats,
                                              const VectorXd& applied, const VectorXd& gravity,
                                              const VectorXd& free_vals,
                                              const VectorXd& fixed_vals) {
    try {
        Evaluation ev;
        const VectorXd n = assemble_coordinates(topo, free_vals, fixed_vals);
        ev.geometry = compute_geometry(topo, n);
        ev.statics = compute_statics(topo, ev.geometry, mats, gravity);
        ev.residual = residual(topo, ev.geometry, ev.statics, applied, gravity);
        ev.residual_norm = ev.residual.norm();
        return ev;
    } catch (const GeometryError&) {
        return std::nullopt;
    }
}

}  // namespace detail

/// One Newton correction dn_a = K_Taa^{-1} P_a. A singular tangent gets a
/// small diagonal shift, reported through `regularized`; if the shifted
/// matrix still fails to factor the step throws SingularTangent.
inline VectorXd newton_step(const MatrixXd& tangent_aa, const VectorXd& residual_a,
                            bool& regularized) {
    regularized = false;
    Eigen::FullPivLU<MatrixXd> lu(tangent_aa);
    lu.setThreshold(1e-13);
    if (lu.isInvertible()) return lu.solve(residual_a);

    const double shift = 1e-12 * std::abs(tangent_aa.trace()) / tangent_aa.rows() + 1e-300;
    MatrixXd shifted =
        tangent_aa + shift * MatrixXd::Identity(tangent_aa.rows(), tangent_aa.cols());
    Eigen::FullPivLU<MatrixXd> lu2(shifted);
    lu2.setThreshold(1e-13);
    if (!lu2.isInvertible())
        throw SolveError(SolveError::Kind::SingularTangent,
                         "tangent stiffness is singular even after regularization; the structure "
                         "has a mechanism along the load");
    regularized = true;
    return lu2.solve(residual_a);
}

/// Full Newton solve of one load/rest-length/support state, warm-started from
/// `free0`. The tangent is reassembled every iteration.
inline SolveResult solve_state(const TopologySet& topo, const MaterialState& mats,
                               const VectorXd& applied, const VectorXd& gravity,
                               const VectorXd& free0, const VectorXd& fixed_vals,
                               const SolveConfig& config, int substep_label = 1) {
    SolveResult out;
    SubstepRecord rec;
    rec.substep = substep_label;

    VectorXd free_vals = free0;
    auto ev = detail::try_evaluate(topo, mats, applied, gravity, free_vals, fixed_vals);
    if (!ev) {
        out.failure = "initial configuration is geometrically invalid";
        return out;
    }

    const double load_scale =
        std::max((topo.expand_free.transpose() * (applied + gravity)).norm(),
                 ev->statics.forces.member_force.cwiseAbs().maxCoeff());
    const double tol_abs =
        config.tol_abs > 0.0 ? config.tol_abs : 1e-9 * std::max(load_scale, 1.0);
    const double tol = std::max(tol_abs, config.tol_rel * load_scale);
    rec.tolerance = tol;

    bool converged = false;
    std::vector<bool> prev_slack = ev->statics.forces.slack;
    double damping = 0.0;  // diagonal shift carried across iterations
    for (int iter = 0; iter <= config.max_iter; ++iter) {
        rec.residual_history.push_back(ev->residual_norm);
        for (const auto& lift : ev->geometry.lift_offs)
            out.warnings.push_back({SolveWarning::Kind::LiftOff, substep_label,
                                    "member " + std::to_string(lift.member) + " junction " +
                                        std::to_string(lift.junction) + " wrap angle " +
                                        std::to_string(lift.wrap_angle)});
        if (ev->residual_norm <= tol) {
            converged = true;
            rec.iterations = iter;
            break;
        }
        if (iter == config.max_iter) break;

        bool regularized = false;
        VectorXd step;
        try {
            step = newton_step(ev->statics.tangent_aa, ev->residual, regularized);
        } catch (const SolveError& err) {
            out.failure = err.what();
            break;
        }
        if (regularized)
            out.warnings.push_back({SolveWarning::Kind::RegularizedTangent, substep_label,
                                    "singular tangent stiffness at iteration " +
                                        std::to_string(iter)});

        auto potential = [&](const detail::Evaluation& e) {
            return e.statics.total_energy - applied.dot(e.geometry.coordinates);
        };

        std::optional<detail::Evaluation> accepted;
        VectorXd accepted_point;
        if (!config.line_search) {
            // bare Newton: halve only while the geometry is invalid
            double lambda = 1.0;
            for (int halving = 0; halving <= 10 && !accepted; ++halving) {
                accepted_point = free_vals + lambda * step;
                accepted = detail::try_evaluate(topo, mats, applied, gravity, accepted_point,
                                                fixed_vals);
                lambda *= 0.5;
            }
        } else {
            // Guarded Newton. The full step is kept whenever it reduces the
            // out-of-balance force. Wrap angles bend the energy valley hard
            // enough that halving alone can stall on a tangent direction, so
            // the fallback solves with a diagonal shift instead: the residual
            // is minus the gradient of the total potential, so a shifted step
            // that lowers the potential always exists. The shift persists
            // between iterations and decays after successes.
            const double trace_scale =
                std::abs(ev->statics.tangent_aa.trace()) / ev->statics.tangent_aa.rows() + 1e-300;
            if (damping == 0.0) {
                double lambda = 1.0;
                for (int halving = 0; halving <= 3 && !accepted; ++halving) {
                    const VectorXd candidate = free_vals + lambda * step;
                    auto trial =
                        detail::try_evaluate(topo, mats, applied, gravity, candidate, fixed_vals);
                    if (trial && trial->residual_norm < (1.0 - 1e-4) * ev->residual_norm) {
                        accepted = trial;
                        accepted_point = candidate;
                    }
                    lambda *= 0.5;
                }
            }
            if (!accepted) {
                const double base_energy = potential(*ev);
                if (damping == 0.0) damping = 1e-8 * trace_scale;
                for (int attempt = 0; attempt < 60 && !accepted; ++attempt) {
                    MatrixXd damped = ev->statics.tangent_aa;
                    damped.diagonal().array() += damping;
                    Eigen::FullPivLU<MatrixXd> lu(damped);
                    if (lu.isInvertible()) {
                        const VectorXd candidate = free_vals + lu.solve(ev->residual);
                        auto trial = detail::try_evaluate(topo, mats, applied, gravity, candidate,
                                                          fixed_vals);
                        if (trial && (potential(*trial) < base_energy ||
                                      trial->residual_norm <
                                          (1.0 - 1e-4) * ev->residual_norm)) {
                            accepted = trial;
                            accepted_point = candidate;
                            break;
                        }
                    }
                    damping *= 10.0;
                }
                // relax toward pure Newton after a success
                damping = damping < 1e-10 * trace_scale ? 0.0 : damping * 0.1;
            }
        }
        if (!accepted) {
            out.failure = "no acceptable step found at iteration " + std::to_string(iter);
            break;
        }
        free_vals = accepted_point;
        for (size_t m = 0; m < accepted->statics.forces.slack.size(); ++m)
            if (accepted->statics.forces.slack[m] != prev_slack[m])
                out.warnings.push_back({SolveWarning::Kind::SlackTransition, substep_label,
                                        "member index " + std::to_string(m) +
                                            (accepted->statics.forces.slack[m] ? " went slack"
                                                                               : " went taut")});
        prev_slack = accepted->statics.forces.slack;
        ev = accepted;
    }

    rec.residual_norm = ev->residual_norm;
    rec.free_coords = free_vals;
    rec.coordinates = ev->geometry.coordinates;
    rec.straight_length = ev->geometry.straight_length;
    rec.member_length = ev->geometry.member_length;
    rec.member_force = ev->statics.forces.member_force;
    rec.wrap_angle = ev->geometry.wrap_angle;

    out.trajectory.push_back(std::move(rec));
    out.final_geometry = std::move(ev->geometry);
    out.final_statics = std::move(ev->statics);
    out.final_coordinates = assemble_coordinates(topo, free_vals, fixed_vals);
    out.converged = converged;
    if (!converged && out.failure.empty())
        out.failure = "did not converge within " + std::to_string(config.max_iter) + " iterations";
    return out;
}

/// Interpolated substep values of loads, rest lengths, and supports.
struct SubstepState {
    VectorXd applied;      // nodal force vector
    VectorXd rest_length;  // per member
    VectorXd fixed_vals;   // fixed physical coordinates
};

inline SubstepState substep_state(const StructureModel& model, const TopologySet& topo,
                                  const MaterialState& mats, const Schedule& schedule,
                                  double fraction) {
    SubstepState s;
    StructureModel scaled = model;
    for (auto& load : scaled.loads) {
        auto it = schedule.load_target.find(load.node);
        if (it != schedule.load_target.end())
            load.force += fraction * (it->second - load.force);
    }
    // Scheduled loads on nodes without a base entry start from zero.
    for (const auto& [node, target] : schedule.load_target) {
        bool found = false;
        for (const auto& load : model.loads) found = found || load.node == node;
        if (!found) scaled.loads.push_back({node, fraction * target});
    }
    s.applied = load_vector(scaled, topo);

    s.rest_length = mats.rest_length;
    for (const auto& [member, target] : schedule.rest_target) {
        const int m = topo.member_of(member);
        s.rest_length[m] += fraction * (target - s.rest_length[m]);
    }

    VectorXd fixed0(topo.fixed_count);
    {
        const VectorXd n0 = initial_coordinates(model, topo);
        fixed0 = partition_dofs(topo, n0).second;
    }
    for (const auto& [node, target] : schedule.support_target) {
        const int idx = topo.node_of(node);
        for (int axis = 0; axis < 3; ++axis) {
            const int coord = 3 * idx + axis;
            for (size_t c = 0; c < topo.fixed_coords.size(); ++c)
                if (topo.fixed_coords[c] == coord)
                    fixed0[c] += fraction * (target[axis] - fixed0[c]);
        }
    }
    s.fixed_vals = fixed0;
    return s;
}

/// Substepped solve: each substep is solved to equilibrium, warm-started from
/// the previous converged state. A failed substep aborts the trajectory and
/// keeps the partial results.
inline SolveResult stepped_solve(const StructureModel& model, const TopologySet& topo,
                                 const Schedule& schedule, const SolveConfig& config) {
    const MaterialState base_mats = make_materials(model, topo);
    const VectorXd n0 = initial_coordinates(model, topo);
    auto [free_vals, fixed_vals] = partition_dofs(topo, n0);
    const VectorXd gravity = gravity_vector(model, topo);

    SolveResult out;
    out.converged = true;
    const int steps = std::max(config.substeps, 1);
    for (int k = 1; k <= steps; ++k) {
        const double fraction = static_cast<double>(k) / steps;
        SubstepState target = substep_state(model, topo, base_mats, schedule, fraction);
        MaterialState mats = base_mats;
        mats.rest_length = target.rest_length;

        SolveResult sub = solve_state(topo, mats, target.applied, gravity, free_vals,
                                      target.fixed_vals, config, k);
        for (auto& w : sub.warnings) out.warnings.push_back(w);
        if (!sub.trajectory.empty()) out.trajectory.push_back(sub.trajectory.front());
        if (!sub.converged) {
            out.converged = false;
            out.failure = "substep " + std::to_string(k) + ": " + sub.failure;
            if (!sub.trajectory.empty()) {
                out.final_geometry = std::move(sub.final_geometry);
                out.final_statics = std::move(sub.final_statics);
                out.final_coordinates = std::move(sub.final_coordinates);
            }
            return out;
        }
        free_vals = sub.trajectory.front().free_coords;
        fixed_vals = target.fixed_vals;
        out.final_geometry = std::move(sub.final_geometry);
        out.final_statics = std::move(sub.final_statics);
        out.final_coordinates = std::move(sub.final_coordinates);
    }
    return out;
}

/// Plain solve of the model as loaded: one state, `config.substeps` substeps
/// of pure load ramping when the deck carries no schedule.
inline SolveResult solve_equilibrium(const StructureModel& model, const TopologySet& topo,
                                     const SolveConfig& config, const Schedule& schedule = {}) {
    return stepped_solve(model, topo, schedule, config);
}

}  // namespace pulleytens
