#include "pulleytens/solver.hpp"

#include "pulleytens/oracle.hpp"
#include "support/fixtures.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace pulleytens;

namespace {

double configuration_scale(const VectorXd& n) { return std::max(1.0, n.cwiseAbs().maxCoeff()); }

/// Total potential for the minimization oracle, as a function of the free
/// physical coordinates at fixed loads/rest lengths.
std::function<double(const VectorXd&)> potential_of(const StructureModel& model,
                                                    const TopologySet& topo,
                                                    const MaterialState& mats,
                                                    const VectorXd& fixed_vals) {
    const VectorXd applied = load_vector(model, topo);
    const VectorXd gravity = gravity_vector(model, topo);
    return [=, &topo](const VectorXd& free_vals) {
        const VectorXd n = assemble_coordinates(topo, free_vals, fixed_vals);
        const GeometryState g = compute_geometry(topo, n);
        const StaticsState st = compute_statics(topo, g, mats, gravity);
        return st.total_energy - applied.dot(n);
    };
}

}  // namespace

TEST_CASE("newton step") {
    SECTION("zero out-of-balance force gives a zero correction") {
        MatrixXd k(2, 2);
        k << 4, 1, 1, 3;
        bool regularized = false;
        const VectorXd dn = newton_step(k, VectorXd::Zero(2), regularized);
        CHECK(dn.norm() == 0.0);
        CHECK_FALSE(regularized);
    }
    SECTION("one-dof linear spring solves in a single division") {
        MatrixXd k(1, 1);
        k << 250.0;
        VectorXd p(1);
        p << 5.0;
        bool regularized = false;
        CHECK(newton_step(k, p, regularized)[0] == Catch::Approx(5.0 / 250.0));
    }
    SECTION("singular tangent is regularized and reported") {
        MatrixXd k = MatrixXd::Zero(2, 2);
        k(0, 0) = 1.0;  // rank deficient
        VectorXd p(2);
        p << 1.0, 0.0;
        bool regularized = false;
        const VectorXd dn = newton_step(k, p, regularized);
        CHECK(regularized);
        CHECK(std::isfinite(dn.norm()));
    }
}

TEST_CASE("symmetric two-string node settles at the midpoint") {
    StructureModel model = pulleytens::testing::two_spring_model(1.2, 0.1);
    const TopologySet topo = build_topology(model);
    SolveConfig config;
    const SolveResult result = solve_equilibrium(model, topo, config);
    REQUIRE(result.converged);
    const Vec3 mid = result.final_coordinates.segment<3>(3 * 1);
    CHECK(mid.x() == Catch::Approx(1.0).margin(1e-9));
    CHECK(mid.y() == Catch::Approx(0.0).margin(1e-9));

    SECTION("already at the midpoint: converges without iterating") {
        StructureModel centered = pulleytens::testing::two_spring_model(1.0, 0.0);
        const TopologySet topo2 = build_topology(centered);
        const SolveResult again = solve_equilibrium(centered, topo2, config);
        REQUIRE(again.converged);
        CHECK(again.trajectory.front().iterations <= 1);
    }
}

TEST_CASE("converged states satisfy the residual criterion recomputed from scratch") {
    StructureModel model = pulleytens::testing::compound_pulley_model();
    const TopologySet topo = build_topology(model);
    SolveConfig config;
    config.substeps = 5;
    Schedule schedule;
    schedule.load_target[7] = {0.0, -9.5, 0.0};
    const SolveResult result = stepped_solve(model, topo, schedule, config);
    REQUIRE(result.converged);
    REQUIRE(result.trajectory.size() == 5);

    const MaterialState mats = make_materials(model, topo);
    for (const auto& rec : result.trajectory) {
        // rebuild everything from the recorded coordinates
        StructureModel staged = model;
        staged.loads.clear();
        staged.loads.push_back({6, {0.0, -7.75, 0.0}});
        const double w7 = -5.5 + (-9.5 + 5.5) * rec.substep / 5.0;
        staged.loads.push_back({7, {0.0, w7, 0.0}});
        const VectorXd applied = load_vector(staged, topo);
        const VectorXd gravity = gravity_vector(staged, topo);
        const GeometryState g = compute_geometry(topo, rec.coordinates);
        const StaticsState st = compute_statics(topo, g, mats, gravity);
        const VectorXd p = residual(topo, g, st, applied, gravity);
        CHECK(p.norm() <= rec.tolerance * (1.0 + 1e-12));
    }
}

TEST_CASE("constant schedule repeats the first substep") {
    StructureModel model = pulleytens::testing::two_spring_model();
    const TopologySet topo = build_topology(model);
    SolveConfig config;
    config.substeps = 4;
    const SolveResult result = stepped_solve(model, topo, Schedule{}, config);
    REQUIRE(result.converged);
    REQUIRE(result.trajectory.size() == 4);
    for (const auto& rec : result.trajectory) {
        CHECK((rec.free_coords - result.trajectory.front().free_coords).norm() == 0.0);
    }
}

TEST_CASE("warm start and cold start agree") {
    StructureModel model = pulleytens::testing::compound_pulley_model();
    const TopologySet topo = build_topology(model);
    SolveConfig config;
    config.substeps = 5;
    Schedule schedule;
    schedule.load_target[7] = {0.0, -9.5, 0.0};
    const SolveResult warm = stepped_solve(model, topo, schedule, config);
    REQUIRE(warm.converged);

    // cold: jump straight to the final loads from the drawn configuration
    StructureModel final_model = model;
    final_model.loads[1].force = {0.0, -9.5, 0.0};
    const TopologySet topo2 = build_topology(final_model);
    SolveConfig one;
    one.substeps = 1;
    const SolveResult cold = stepped_solve(final_model, topo2, Schedule{}, one);
    REQUIRE(cold.converged);

    const double scale = configuration_scale(warm.final_coordinates);
    CHECK((warm.final_coordinates - cold.final_coordinates).lpNorm<Eigen::Infinity>() <
          1e-8 * scale);
}

TEST_CASE("newton agrees with the energy-minimization oracle") {
    StructureModel model = pulleytens::testing::compound_pulley_model();
    const TopologySet topo = build_topology(model);
    SolveConfig config;
    const SolveResult newton = solve_equilibrium(model, topo, config);
    REQUIRE(newton.converged);

    const MaterialState mats = make_materials(model, topo);
    const VectorXd n0 = initial_coordinates(model, topo);
    const auto [free0, fixed0] = partition_dofs(topo, n0);
    const auto objective = potential_of(model, topo, mats, fixed0);
    const auto min = oracle::minimize_scalar(objective, free0, 1e-9);
    REQUIRE(min.converged);

    const auto [newton_free, unused] = partition_dofs(topo, newton.final_coordinates);
    const double scale = configuration_scale(newton.final_coordinates);
    CHECK((newton_free - min.point).lpNorm<Eigen::Infinity>() < 1e-5 * scale);
}

TEST_CASE("near-root convergence is superlinear") {
    StructureModel model = pulleytens::testing::compound_pulley_model();
    const TopologySet topo = build_topology(model);
    SolveConfig config;
    config.tol_rel = 1e-12;  // drive deep so the tail is visible
    const SolveResult result = solve_equilibrium(model, topo, config);
    REQUIRE(result.converged);
    const auto& history = result.trajectory.front().residual_history;
    REQUIRE(history.size() >= 4);

    // order estimate from the last three strictly decreasing residuals above
    // the roundoff floor
    std::vector<double> tail;
    for (double r : history)
        if (r > 1e-12 * history.front()) tail.push_back(r);
    REQUIRE(tail.size() >= 3);
    const double r0 = tail[tail.size() - 3], r1 = tail[tail.size() - 2], r2 = tail.back();
    const double order = std::log(r2 / r1) / std::log(r1 / r0);
    CHECK(order > 1.5);
}

TEST_CASE("rest-length actuation schedule shortens the driven member") {
    StructureModel model = pulleytens::testing::two_spring_model(1.0, 0.0);
    const TopologySet topo = build_topology(model);
    SolveConfig config;
    config.substeps = 5;
    Schedule schedule;
    schedule.rest_target[1] = 0.7;  // winch in the left string
    const SolveResult result = stepped_solve(model, topo, schedule, config);
    REQUIRE(result.converged);
    double prev_x = 1.0;
    for (const auto& rec : result.trajectory) {
        const double x = rec.coordinates[3];
        CHECK(x < prev_x);  // node pulled toward the shortened string
        prev_x = x;
    }
}

TEST_CASE("support motion schedule drags the structure") {
    StructureModel model = pulleytens::testing::two_spring_model(1.0, 0.0);
    const TopologySet topo = build_topology(model);
    SolveConfig config;
    config.substeps = 3;
    Schedule schedule;
    schedule.support_target[3] = {2.5, 0.0, 0.0};  // move the right anchor out
    const SolveResult result = stepped_solve(model, topo, schedule, config);
    REQUIRE(result.converged);
    // midpoint follows the anchors
    CHECK(result.final_coordinates[3] == Catch::Approx(1.25).margin(1e-6));
}

TEST_CASE("failure reporting keeps partial trajectories") {
    StructureModel model = pulleytens::testing::two_spring_model(1.0, 0.0);
    const TopologySet topo = build_topology(model);
    SolveConfig config;
    config.substeps = 4;
    config.max_iter = 1;  // too few for the later, harder substeps
    Schedule schedule;
    schedule.support_target[3] = {3.5, 1.0, 0.0};
    const SolveResult result = stepped_solve(model, topo, schedule, config);
    if (!result.converged) {
        CHECK(!result.failure.empty());
        CHECK(result.trajectory.size() >= 1);
    }
}
