#include <cmath>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "orbitvae/errors.hpp"
#include "orbitvae/propagation.hpp"
#include "orbitvae/refinement.hpp"
#include "support.hpp"

using namespace orbitvae;
using testing_support::discretize;
using testing_support::earth_moon;
using testing_support::Gen;
using testing_support::l1_family;
using testing_support::l1_orbit;

namespace {

Eigen::MatrixXd noisy(const Eigen::MatrixXd& m, Gen& g, double amp) {
    Eigen::MatrixXd p = m;
    for (Eigen::Index k = 0; k < p.cols(); ++k)
        for (int c = 0; c < 6; ++c) p(c, k) += g.uniform(-amp, amp);
    return p;
}

double reprop_error(const PeriodicOrbit& o) {
    return (propagate(earth_moon(), o.initial_state, o.period) - o.initial_state).norm();
}

}  // namespace

TEST(ShootingIndices, TenPercentOfHundred) {
    const auto idx = shooting_indices(100, 0.1);
    ASSERT_EQ(idx.size(), 10u);
    for (int k = 0; k < 10; ++k) EXPECT_EQ(idx[static_cast<std::size_t>(k)], 11 * k);
}

TEST(ShootingIndices, EndpointsAndErrors) {
    const auto idx = shooting_indices(57, 0.25);
    EXPECT_EQ(idx.size(), 14u);
    EXPECT_EQ(idx.front(), 0);
    EXPECT_EQ(idx.back(), 56);
    EXPECT_THROW(shooting_indices(100, 0.0), InvalidArgument);
    EXPECT_THROW(shooting_indices(100, 1.5), InvalidArgument);
    EXPECT_THROW(shooting_indices(20, 0.1), InvalidArgument);
}

TEST(ShootingVariables, FlattenLayoutAndValidation) {
    const ShootingVariables v = seed_from_trajectory(earth_moon(), discretize(l1_orbit(), 100));
    EXPECT_EQ(v.nodes(), 10);
    EXPECT_EQ(v.dimension(), 69);
    const Eigen::VectorXd x = v.flatten();
    ASSERT_EQ(x.size(), 69);
    EXPECT_EQ(x[6 + 4], v.states[1][4]);
    EXPECT_EQ(x[60 + 2], v.intervals[2]);
    const ShootingVariables back = ShootingVariables::unflatten(earth_moon(), x);
    EXPECT_EQ(back.flatten(), x);
    EXPECT_NEAR(v.period(), l1_orbit().period, 1e-12);
    ShootingVariables bad = v;
    bad.intervals[3] = -0.1;
    EXPECT_THROW(bad.validate(), InvalidArgument);
    bad = v;
    bad.intervals.pop_back();
    EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Seed, RequiresIncreasingNodeTimes) {
    Eigen::MatrixXd m = discretize(l1_orbit(), 100);
    m(6, 5) = -1.0;  // not a shooting node: ignored
    EXPECT_NO_THROW(seed_from_trajectory(earth_moon(), m));
    m(6, 22) = m(6, 11);
    EXPECT_THROW(seed_from_trajectory(earth_moon(), m), InvalidArgument);
}

TEST(Constraints, ExactSeedIsNearlyZero) {
    const ShootingVariables v = seed_from_trajectory(earth_moon(), discretize(l1_orbit(), 100));
    const Eigen::VectorXd F = constraints(v);
    EXPECT_EQ(F.size(), 60);
    EXPECT_LT(F.norm(), 1e-9);
}

TEST(Constraints, ContinuityBlockShiftsByPerturbation) {
    ShootingVariables v = seed_from_trajectory(earth_moon(), discretize(l1_orbit(), 100));
    const Eigen::VectorXd F0 = constraints(v);
    const StateVector delta(1e-4, -2e-4, 0, 3e-4, 0, 5e-5);
    v.states[1] += delta;
    const Eigen::VectorXd F1 = constraints(v);
    EXPECT_LT((F1.head<6>() - F0.head<6>() + delta).norm(), 1e-15);
    EXPECT_TRUE((F1.tail<6>().array() == F0.tail<6>().array()).all());
}

TEST(Constraints, ClosureUsesOnlyEndpoints) {
    ShootingVariables v = seed_from_trajectory(earth_moon(), discretize(l1_orbit(), 100));
    v.states[4][0] += 1e-3;
    v.intervals[2] *= 1.01;
    const Eigen::VectorXd F = constraints(v);
    const Eigen::VectorXd closure = v.states.front() - v.states.back();
    EXPECT_TRUE((F.tail<6>().array() == closure.array()).all());
}

TEST(Jacobian, MatchesFiniteDifferences) {
    ShootingVariables v = seed_from_trajectory(earth_moon(), discretize(l1_orbit(), 60));
    v.states[2][0] += 1e-3;
    const auto [F, DF] = constraints_and_jacobian(v);
    // the STM-augmented integration takes different steps, so agreement is to rounding only
    EXPECT_LT((F - constraints(v)).norm(), 1e-12);
    EXPECT_EQ(DF, constraint_jacobian(v));
    ASSERT_EQ(DF.rows(), 36);
    ASSERT_EQ(DF.cols(), 41);
    const Eigen::VectorXd x = v.flatten();
    Eigen::MatrixXd fd(DF.rows(), DF.cols());
    const double h = 1e-7;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        Eigen::VectorXd xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        fd.col(j) = (constraints(ShootingVariables::unflatten(earth_moon(), xp)) -
                     constraints(ShootingVariables::unflatten(earth_moon(), xm))) / (2 * h);
    }
    EXPECT_LT((DF - fd).norm() / fd.norm(), 1e-5);
}

TEST(Jacobian, BlockStructure) {
    const ShootingVariables v = seed_from_trajectory(earth_moon(), discretize(l1_orbit(), 50));
    const int n = v.nodes();
    const Eigen::MatrixXd DF = constraint_jacobian(v);
    for (int i = 0; i < n - 1; ++i) {
        const StmResult seg = propagate_with_stm(earth_moon(), v.states[static_cast<std::size_t>(i)],
                                                 v.intervals[static_cast<std::size_t>(i)]);
        EXPECT_LT((DF.block(6 * i, 6 * i, 6, 6) - seg.stm).norm(), 1e-10) << i;
        EXPECT_TRUE((DF.block<6, 6>(6 * i, 6 * (i + 1)) == -Mat6::Identity())) << i;
        const Vec6 f = eom(earth_moon(), seg.final_state);
        EXPECT_LT((DF.block(6 * i, 6 * n + i, 6, 1) - f).norm(), 1e-12) << i;
        // Interval column i touches only segment i.
        EXPECT_EQ(DF.col(6 * n + i).norm(), DF.block(6 * i, 6 * n + i, 6, 1).norm());
    }
    const Eigen::MatrixXd closure = DF.bottomRows(6);
    EXPECT_TRUE(closure.leftCols(6) == Mat6::Identity());
    EXPECT_TRUE(closure.middleCols(6 * (n - 1), 6) == -Mat6::Identity());
    EXPECT_EQ(closure.norm(), std::sqrt(12.0));
}

TEST(NewtonStep, ZeroResidualLeavesVariables) {
    const ShootingVariables v = seed_from_trajectory(earth_moon(), discretize(l1_orbit(), 50));
    const Eigen::MatrixXd DF = constraint_jacobian(v);
    const NewtonStep s = newton_step(v, Eigen::VectorXd::Zero(DF.rows()), DF);
    EXPECT_EQ(s.vars.flatten(), v.flatten());
    EXPECT_EQ(s.clamped_intervals, 0);
}

TEST(NewtonStep, MinimumNormSolutionOfAffineSystem) {
    Gen g(60);
    ShootingVariables v;
    for (int i = 0; i < 4; ++i) v.states.push_back(g.vector(6));
    v.intervals = {1.0, 1.2, 0.8};
    const Eigen::MatrixXd A = Eigen::MatrixXd::NullaryExpr(24, 27, [&] { return g.normal(); });
    const Eigen::VectorXd F = g.vector(24, 1e-3);
    const NewtonStep s = newton_step(v, F, A);
    const Eigen::VectorXd expected = v.flatten() - A.completeOrthogonalDecomposition().solve(F);
    EXPECT_LT((s.vars.flatten() - expected).norm(), 1e-12);
    // Minimum norm: the update lies in the row space of A.
    const Eigen::VectorXd dx = s.vars.flatten() - v.flatten();
    const Eigen::MatrixXd P = A.transpose() * (A * A.transpose()).inverse() * A;
    EXPECT_LT((P * dx - dx).norm(), 1e-12);
}

TEST(NewtonStep, RankDeficiency) {
    Gen g(61);
    ShootingVariables v;
    for (int i = 0; i < 4; ++i) v.states.push_back(g.vector(6));
    v.intervals = {1.0, 1.0, 1.0};
    Eigen::MatrixXd A = Eigen::MatrixXd::NullaryExpr(24, 27, [&] { return g.normal(); });
    const Eigen::VectorXd F = g.vector(24, 1e-3);
    A.row(5).setZero();
    EXPECT_NO_THROW(newton_step(v, F, A));  // one dropped direction is tolerated
    A.row(9).setZero();
    EXPECT_THROW(newton_step(v, F, A), NumericError);
}

TEST(NewtonStep, ClampsNonPositiveIntervals) {
    ShootingVariables v;
    for (int i = 0; i < 3; ++i) v.states.push_back(StateVector::Zero());
    v.intervals = {0.5, 0.5};
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(18, 20);
    for (int i = 0; i < 18; ++i) A(i, i) = 1.0;
    A(17, 17) = 0.0;
    A(17, 18) = 1.0;  // last row moves the first interval
    Eigen::VectorXd F = Eigen::VectorXd::Zero(18);
    F[17] = 2.0;
    const NewtonStep s = newton_step(v, F, A);
    EXPECT_EQ(s.clamped_intervals, 1);
    EXPECT_EQ(s.vars.intervals[0], kMinInterval);
    EXPECT_EQ(s.vars.intervals[1], 0.5);
}

TEST(NewtonStep, QuadraticContraction) {
    const ShootingVariables exact = seed_from_trajectory(earth_moon(), discretize(l1_orbit(), 100));
    Gen g(62);
    const Eigen::VectorXd dir = g.vector(exact.dimension()).normalized();
    double after[2];
    const double eps[2] = {1e-3, 1e-4};
    for (int i = 0; i < 2; ++i) {
        const ShootingVariables v = ShootingVariables::unflatten(earth_moon(), exact.flatten() + eps[i] * dir);
        const auto [F, DF] = constraints_and_jacobian(v);
        after[i] = constraints(newton_step(v, F, DF).vars).norm();
    }
    // linear convergence would give a ratio near 10
    EXPECT_GT(after[0] / after[1], 50.0);
}

TEST(RefineOptions, Validation) {
    RefineOptions o;
    EXPECT_NO_THROW(o.validate());
    o.tol = 0;
    EXPECT_THROW(o.validate(), InvalidArgument);
    o = {};
    o.max_iterations = 0;
    EXPECT_THROW(o.validate(), InvalidArgument);
    o = {};
    o.node_fraction = 0;
    EXPECT_THROW(o.validate(), InvalidArgument);
}

TEST(Refine, ExactOrbitNeedsNoIterations) {
    const auto& o = l1_orbit();
    const RefinementResult r = refine(earth_moon(), discretize(o, 100));
    ASSERT_TRUE(r.converged) << r.diagnostic;
    EXPECT_LE(r.iterations, 1);
    EXPECT_TRUE(r.diagnostic.empty());
    EXPECT_LT(r.final_norm, 1e-10);
    EXPECT_NEAR(r.orbit.period, o.period, 1e-9);
    EXPECT_EQ(r.orbit.family, "refined");
}

TEST(Refine, RecoversFromNodeNoise) {
    Gen g(63);
    const auto& fam = l1_family().orbits;
    for (std::size_t member : {5u, 20u, 29u}) {
        const PeriodicOrbit& o = fam[member];
        const Eigen::MatrixXd m = discretize(o, 100);
        for (int trial = 0; trial < 8; ++trial) {
            const RefinementResult r = refine(earth_moon(), noisy(m, g, 1e-3));
            ASSERT_TRUE(r.converged) << member << "/" << trial << ": " << r.diagnostic;
            EXPECT_LE(r.iterations, 10);
            EXPECT_LT(r.final_norm, 1e-10);
            EXPECT_LT(reprop_error(r.orbit), 1e-9) << member << "/" << trial;
            EXPECT_NEAR(r.orbit.jacobi, jacobi_constant(earth_moon(), r.orbit.initial_state), 1e-13);
            // noise may land on a neighbouring member of the same one-parameter family
            EXPECT_NEAR(r.orbit.period, o.period, 0.02 * o.period);
            EXPECT_EQ(static_cast<int>(r.history.size()) >= r.iterations + 1, true);
            // once inside the quadratic basin the residual only falls
            std::size_t k = 0;
            while (k < r.history.size() && r.history[k] > 1e-4) ++k;
            for (std::size_t j = k + 1; j < r.history.size(); ++j) EXPECT_LE(r.history[j], r.history[j - 1]);
        }
    }
}

TEST(Refine, StabilityOfRefinedOrbit) {
    Gen g(64);
    const auto& o = l1_orbit();
    const RefinementResult r = refine(earth_moon(), noisy(discretize(o, 100), g, 1e-4));
    ASSERT_TRUE(r.converged);
    EXPECT_NEAR(r.orbit.stability_index, stability_index(earth_moon(), r.orbit), 1e-6 * r.orbit.stability_index);
}

TEST(Refine, Deterministic) {
    Gen g(65);
    const Eigen::MatrixXd m = noisy(discretize(l1_orbit(), 100), g, 1e-3);
    const RefinementResult a = refine(earth_moon(), m);
    const RefinementResult b = refine(earth_moon(), m);
    EXPECT_EQ(a.history, b.history);
    EXPECT_TRUE((a.orbit.initial_state.array() == b.orbit.initial_state.array()).all());
    EXPECT_EQ(a.orbit.period, b.orbit.period);
}

TEST(Refine, IterationBudgetReportsFailure) {
    Gen g(66);
    RefineOptions opts;
    opts.max_iterations = 1;
    const RefinementResult r = refine(earth_moon(), noisy(discretize(l1_orbit(), 100), g, 1e-3), opts);
    EXPECT_FALSE(r.converged);
    EXPECT_FALSE(r.diagnostic.empty());
    EXPECT_EQ(r.iterations, 1);
}

TEST(Refine, GarbageInputFailsWithoutThrowing) {
    Gen g(67);
    Eigen::MatrixXd m(7, 100);
    for (int k = 0; k < 100; ++k) {
        m.col(k).head<6>() = g.vector(6, 0.5);
        m(6, k) = 0.05 * k;
    }
    RefinementResult r;
    EXPECT_NO_THROW(r = refine(earth_moon(), m));
    EXPECT_FALSE(r.converged);
    EXPECT_FALSE(r.diagnostic.empty());
}

TEST(Refine, DampingStillConverges) {
    Gen g(68);
    RefineOptions opts;
    opts.damping = true;
    const RefinementResult r = refine(earth_moon(), noisy(discretize(l1_orbit(), 100), g, 1e-3), opts);
    ASSERT_TRUE(r.converged) << r.diagnostic;
    EXPECT_LT(reprop_error(r.orbit), 1e-9);
}

TEST(PhysicalError, ExactTrajectory) {
    const PhysicalError e = physical_error(earth_moon(), discretize(l1_orbit(), 100));
    EXPECT_EQ(e.segments, 99);
    EXPECT_EQ(e.failed_segments, 0);
    EXPECT_LT(e.mean, 1e-9);
}

TEST(PhysicalError, SingleDisplacedNode) {
    Eigen::MatrixXd m = discretize(l1_orbit(), 40);
    const StateVector delta(2e-3, -1e-3, 0, 0, 1e-3, 0);
    const int k = 17;
    m.col(k).head<6>() += delta;
    const StateVector next = m.col(k + 1).head<6>();
    const double out = (propagate(earth_moon(), m.col(k).head<6>(), m(6, k + 1) - m(6, k)) - next).norm();
    const double expected = (delta.norm() + out) / 39.0;
    EXPECT_NEAR(physical_error(earth_moon(), m).mean, expected, 1e-10);
}

TEST(PhysicalError, CountsFailedSegments) {
    Eigen::MatrixXd m = discretize(l1_orbit(), 20);
    m.col(5).head<6>() << 1.0 - kEarthMoonMu + 1e-3, 0, 0, 0, 0, 0;
    const PhysicalError e = physical_error(earth_moon(), m);
    EXPECT_EQ(e.failed_segments, 1);
    EXPECT_EQ(e.segments, 18);
}

TEST(RefineReport, Format) {
    const std::string text = format_refine_report({{0, true, 3, 1.5e-11}, {4, false, 20, 0.25}});
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "orbit_index,converged,iterations,final_norm");
    std::getline(in, line);
    EXPECT_EQ(line.rfind("0,1,3,", 0), 0u) << line;
    EXPECT_DOUBLE_EQ(std::stod(line.substr(6)), 1.5e-11);
    std::getline(in, line);
    EXPECT_EQ(line, "4,0,20,0.25");
}
