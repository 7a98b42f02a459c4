#pragma once

#include "pulleytens/model.hpp"
#include "pulleytens/solver.hpp"
#include "pulleytens/statics.hpp"

#include <Eigen/SVD>

#include <atomic>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace pulleytens {

/// Singular value decomposition of the reduced equilibrium matrix: the null
/// space spans the self-stress states, the left null space the mechanisms.
struct ModeDecomposition {
    MatrixXd left;        // W (n_a x n_a)
    VectorXd singular;    // descending
    MatrixXd right;       // V (n_ec x n_ec)
    int rank = 0;
    MatrixXd self_stress;  // V_2 (n_ec x (n_ec - rank))
    MatrixXd mechanisms;   // W_2 (n_a x (n_a - rank))
    double rank_tolerance = 0.0;
};

inline ModeDecomposition svd_modes(const MatrixXd& reduced_equilibrium, double rank_tol = 1e-10) {
    Eigen::JacobiSVD<MatrixXd> svd(reduced_equilibrium, Eigen::ComputeFullU | Eigen::ComputeFullV);
    ModeDecomposition out;
    out.left = svd.matrixU();
    out.right = svd.matrixV();
    out.singular = svd.singularValues();
    out.rank_tolerance = rank_tol;
    const double sigma_max = out.singular.size() > 0 ? out.singular[0] : 0.0;
    out.rank = 0;
    for (int i = 0; i < out.singular.size(); ++i)
        if (out.singular[i] > rank_tol * sigma_max && sigma_max > 0.0) ++out.rank;
    out.self_stress = out.right.rightCols(out.right.cols() - out.rank);
    out.mechanisms = out.left.rightCols(out.left.cols() - out.rank);
    return out;
}

/// Lowest eigenpairs of the symmetrized free-free tangent stiffness.
struct StiffnessSpectrum {
    VectorXd eigenvalues;  // ascending, `count` lowest
    MatrixXd shapes;       // matching columns, orthonormal
    double asymmetry = 0.0;       // ||K - K^T|| / ||K|| before symmetrizing
    bool at_equilibrium = true;   // false when called on a non-converged state
};

inline StiffnessSpectrum stiffness_spectrum(const MatrixXd& tangent_aa, int count,
                                            bool at_equilibrium = true) {
    StiffnessSpectrum out;
    out.at_equilibrium = at_equilibrium;
    const double norm = tangent_aa.norm();
    out.asymmetry = norm > 0.0 ? (tangent_aa - tangent_aa.transpose()).norm() / norm : 0.0;
    const MatrixXd sym = 0.5 * (tangent_aa + tangent_aa.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym);
    const int keep = std::min<int>(count, static_cast<int>(eig.eigenvalues().size()));
    out.eigenvalues = eig.eigenvalues().head(keep);
    out.shapes = eig.eigenvectors().leftCols(keep);
    return out;
}

/// One pulley (or pinned attachment) selected for a radius sweep.
struct PulleyTarget {
    int node = 0;
    int attachment = 1;  // 1-based
};

struct SweepPoint {
    double radius = 0.0;
    bool ok = false;
    std::string error;
    SolveResult result;
    double min_eigenvalue = 0.0;
    VectorXd eigenvalues;  // a few lowest, from the final tangent stiffness
};

struct SweepTable {
    std::vector<PulleyTarget> targets;
    std::vector<double> radii;
    std::vector<SweepPoint> points;  // in input order
};

namespace detail {

inline int sweep_thread_cap() {
    if (const char* env = std::getenv("PULLEYTENS_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace detail

/// Sets the radius of every target pulley. At radius zero the side flag is
/// cleared as well, so the attachment degenerates to a pinned pass-through;
/// restoring a positive radius needs the remembered side.
inline StructureModel with_pulley_radius(const StructureModel& model,
                                         const std::vector<PulleyTarget>& targets, double radius,
                                         const std::vector<int>& remembered_sides) {
    StructureModel out = model;
    for (size_t i = 0; i < targets.size(); ++i) {
        bool found = false;
        for (auto& node : out.nodes) {
            if (node.id != targets[i].node) continue;
            const int j = targets[i].attachment - 1;
            if (j < 0 || j >= static_cast<int>(node.attachments.size()))
                throw ModelError("sweep target attachment out of range on node " +
                                 std::to_string(node.id));
            node.attachments[j].radius = radius;
            node.attachments[j].side = radius > 0.0 ? remembered_sides[i] : 0;
            found = true;
        }
        if (!found) throw ModelError("sweep target node " + std::to_string(targets[i].node) +
                                     " not in model");
    }
    return out;
}

/// Runs an independent stepped solve for every radius value; no warm start
/// across radii, so the points stay comparable. Points may execute
/// concurrently (capped by PULLEYTENS_THREADS); the table keeps input order.
inline SweepTable radius_sweep(const StructureModel& model,
                               const std::vector<PulleyTarget>& targets,
                               const std::vector<double>& radii, const Schedule& schedule,
                               const SolveConfig& config, int spectrum_count = 4) {
    SweepTable table;
    table.targets = targets;
    table.radii = radii;
    table.points.resize(radii.size());

    std::vector<int> remembered_sides(targets.size(), 0);
    for (size_t i = 0; i < targets.size(); ++i) {
        for (const auto& node : model.nodes)
            if (node.id == targets[i].node) {
                const int j = targets[i].attachment - 1;
                if (j < 0 || j >= static_cast<int>(node.attachments.size()))
                    throw ModelError("sweep target attachment out of range on node " +
                                     std::to_string(node.id));
                remembered_sides[i] = node.attachments[j].side;
            }
        if (remembered_sides[i] == 0) remembered_sides[i] = 1;
    }

    auto run_point = [&](size_t idx) {
        SweepPoint& point = table.points[idx];
        point.radius = radii[idx];
        try {
            const StructureModel variant =
                with_pulley_radius(model, targets, radii[idx], remembered_sides);
            const TopologySet topo = build_topology(variant);
            point.result = stepped_solve(variant, topo, schedule, config);
            point.ok = point.result.converged;
            if (!point.ok) point.error = point.result.failure;
            if (point.ok) {
                const auto spec =
                    stiffness_spectrum(point.result.final_statics.tangent_aa, spectrum_count);
                point.eigenvalues = spec.eigenvalues;
                point.min_eigenvalue = spec.eigenvalues.size() ? spec.eigenvalues[0] : 0.0;
            }
        } catch (const std::exception& err) {
            point.ok = false;
            point.error = err.what();
        }
    };

    const int threads = std::min<int>(detail::sweep_thread_cap(), static_cast<int>(radii.size()));
    if (threads <= 1) {
        for (size_t i = 0; i < radii.size(); ++i) run_point(i);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (size_t i = next.fetch_add(1); i < radii.size(); i = next.fetch_add(1))
                    run_point(i);
            });
        for (auto& th : pool) th.join();
    }
    return table;
}

}  // namespace pulleytens
