#pragma once

#include <vector>

#include "orbitvae/dynamics.hpp"
#include "orbitvae/integrator.hpp"

namespace orbitvae {

struct TrajectoryNode {
    double t;
    StateVector state;
};

/// Time-stamped samples of one orbit. Times are strictly increasing; at least two nodes.
struct Trajectory {
    MassRatio mu;
    std::vector<TrajectoryNode> nodes;
};

struct StmResult {
    StateVector final_state;
    Mat6 stm;
};

enum class CrossingDirection { Any, Positive, Negative };

struct Crossing {
    double t;
    StateVector state;
};

struct CrossingWithStm {
    double t;
    StateVector state;
    Mat6 stm;
};

/// Flow map Phi(t_final, state0). t_final may be negative; t_final == 0 returns state0.
StateVector propagate(const MassRatio& mu, const StateVector& state0, double t_final,
                      const IntegratorConfig& config = {});

/// Samples at t_k = k * period / (n_nodes - 1), k = 0..n_nodes-1, integrating segment by
/// segment between node times.
Trajectory propagate_trajectory(const MassRatio& mu, const StateVector& state0, double period,
                                int n_nodes, const IntegratorConfig& config = {});

/// Integrates the state together with the variational equations dPhi/dt = A(x) Phi.
StmResult propagate_with_stm(const MassRatio& mu, const StateVector& state0, double t_final,
                             const IntegratorConfig& config = {});

/// First t > 0 with y(t) = 0 and the requested sign of vy at the crossing.
/// A start on the plane (y0 == 0) is not counted as a crossing.
Crossing find_y_crossing(const MassRatio& mu, const StateVector& state0,
                         CrossingDirection direction, const IntegratorConfig& config = {});

/// Same as find_y_crossing, also returning the STM at the crossing time.
CrossingWithStm find_y_crossing_with_stm(const MassRatio& mu, const StateVector& state0,
                                         CrossingDirection direction,
                                         const IntegratorConfig& config = {});

}  // namespace orbitvae
