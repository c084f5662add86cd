#pragma once

// Multiple-shooting Newton correction of approximate trajectories into periodic orbits.
//
// Unknowns are N node states and the N-1 intervals between them. Constraints are continuity
// of each segment (F_i = Phi(dt_i, X_i) - X_{i+1}) and closure (F_N = X_1 - X_N).

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "orbitvae/dynamics.hpp"
#include "orbitvae/families.hpp"
#include "orbitvae/integrator.hpp"

namespace orbitvae {

inline constexpr double kMinInterval = 1e-4;
inline constexpr double kMaxCondition = 1e12;
inline constexpr double kDivergenceNorm = 1e3;

struct ShootingVariables {
    MassRatio mu{kEarthMoonMu};
    std::vector<StateVector> states;
    std::vector<double> intervals;

    int nodes() const { return static_cast<int>(states.size()); }
    /// 6N + N - 1.
    int dimension() const { return 7 * nodes() - 1; }
    /// Throws InvalidArgument unless N >= 3, N-1 intervals, all positive and all finite.
    void validate() const;

    /// Flat layout: X_1..X_N (6 each), then dt_1..dt_{N-1}.
    Eigen::VectorXd flatten() const;
    static ShootingVariables unflatten(const MassRatio& mu, const Eigen::VectorXd& flat);

    double period() const;
};

/// Shooting-node indices round(k (n_total - 1) / (n_s - 1)), n_s = round(fraction * n_total).
std::vector<int> shooting_indices(int n_total, double node_fraction);

/// Picks equally spaced nodes of a 7 x N_total physical trajectory (row 6 = time) as the
/// initial shooting variables. Only the selected node times must be strictly increasing.
ShootingVariables seed_from_trajectory(const MassRatio& mu, const Eigen::MatrixXd& traj,
                                       double node_fraction = 0.1);

/// 6N constraint values. Propagation failures name the segment.
Eigen::VectorXd constraints(const ShootingVariables& vars, const IntegratorConfig& config = {});

/// Analytic 6N x (7N - 1) Jacobian of constraints().
Eigen::MatrixXd constraint_jacobian(const ShootingVariables& vars,
                                    const IntegratorConfig& config = {});

/// Both at once, sharing the segment propagations.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> constraints_and_jacobian(
    const ShootingVariables& vars, const IntegratorConfig& config = {});

struct NewtonStep {
    ShootingVariables vars;
    /// Number of intervals that went non-positive and were reset to kMinInterval.
    int clamped_intervals = 0;
};

/// Minimum-norm update X <- X - pinv(DF) F. Directions whose contribution to the condition
/// number of DF DF^T exceeds kMaxCondition (sigma < sigma_max / sqrt(kMaxCondition)) are
/// discarded. The step is rejected as rank deficient when more than one is: the Jacobi
/// integral already costs one rank at an exact solution, so that direction goes singular as
/// ||F|| -> 0 and must be dropped rather than inverted.
NewtonStep newton_step(const ShootingVariables& vars, const Eigen::VectorXd& F,
                       const Eigen::MatrixXd& DF);

struct RefineOptions {
    double node_fraction = 0.1;
    int max_iterations = 20;
    double tol = 1e-10;
    /// Step halving (up to 5 times) when a full step would increase ||F||.
    bool damping = false;
    /// Newton updates after convergence, kept only while ||F|| keeps dropping.
    int polish_iterations = 4;

    void validate() const;
};

struct RefinementResult {
    bool converged = false;
    int iterations = 0;
    double final_norm = 0.0;
    /// Valid when converged: X_1, sum of intervals, recomputed Jacobi and stability.
    PeriodicOrbit orbit;
    /// ||F||_2 at the seed and after every accepted update.
    std::vector<double> history;
    int clamped_intervals = 0;
    /// Why the run stopped without converging; empty on success.
    std::string diagnostic;
};

/// Never throws for numeric trouble: failures end as converged == false with a diagnostic.
RefinementResult refine(const MassRatio& mu, const Eigen::MatrixXd& traj,
                        const RefineOptions& options = {}, const IntegratorConfig& config = {});

/// Same, starting from explicit shooting variables.
RefinementResult refine(const ShootingVariables& seed, const RefineOptions& options = {},
                        const IntegratorConfig& config = {});

struct PhysicalError {
    /// Mean of ||Phi(t_{i+1} - t_i, X_i) - X_{i+1}||_2 over the segments that propagated.
    double mean = 0.0;
    int segments = 0;
    int failed_segments = 0;
};

/// Defect metric of a 7 x N physical trajectory.
PhysicalError physical_error(const MassRatio& mu, const Eigen::MatrixXd& traj,
                             const IntegratorConfig& config = {});

struct RefineReportRow {
    int orbit_index = 0;
    bool converged = false;
    int iterations = 0;
    double final_norm = 0.0;
};

/// orbit_index,converged,iterations,final_norm
std::string format_refine_report(const std::vector<RefineReportRow>& rows);

}  // namespace orbitvae
