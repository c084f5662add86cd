#pragma once

// Shared fixtures and random generators for the unit and property tests.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "orbitvae/dynamics.hpp"
#include "orbitvae/families.hpp"
#include "orbitvae/propagation.hpp"

namespace testing_support {

using namespace orbitvae;

inline const MassRatio& earth_moon() {
    static const MassRatio mu(kEarthMoonMu);
    return mu;
}

/// First 30 members of the L1 Lyapunov family, computed once per process.
inline const Catalog& l1_family() {
    static const Catalog cat = [] {
        ContinuationResult r = continue_family(earth_moon(), Libration::L1, 30);
        if (!r.complete) throw std::runtime_error(r.diagnostic);
        return r.catalog;
    }();
    return cat;
}

/// A mid-sized L1 Lyapunov orbit (member 20 of the cached family).
inline const PeriodicOrbit& l1_orbit() { return l1_family().orbits.at(20); }

/// 7 x n physical sequence (state rows then time) of one period.
inline Eigen::MatrixXd discretize(const PeriodicOrbit& o, int n, const MassRatio& mu = earth_moon()) {
    const Trajectory tr = propagate_trajectory(mu, o.initial_state, o.period, n);
    Eigen::MatrixXd m(7, n);
    for (int k = 0; k < n; ++k) {
        m.col(k).head<6>() = tr.nodes[static_cast<std::size_t>(k)].state;
        m(6, k) = tr.nodes[static_cast<std::size_t>(k)].t;
    }
    return m;
}

/// Central-difference relative error ||A - B|| / max(||B||, floor).
inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-300) {
    return (a - b).norm() / std::max(b.norm(), floor);
}

/// Seeded generator for the property tests.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }

    /// Position in [-1.5, 1.5]^2 x [-0.3, 0.3] at least 0.05 from both primaries.
    Vec3 position(const MassRatio& mu) {
        while (true) {
            Vec3 p(uniform(-1.5, 1.5), uniform(-1.5, 1.5), uniform(-0.3, 0.3));
            const double r1 = (p - Vec3(mu.primary1_x(), 0, 0)).norm();
            const double r2 = (p - Vec3(mu.primary2_x(), 0, 0)).norm();
            if (r1 > 0.05 && r2 > 0.05) return p;
        }
    }

    StateVector state(const MassRatio& mu) {
        StateVector s;
        s.head<3>() = position(mu);
        for (int i = 3; i < 6; ++i) s[i] = uniform(-1.0, 1.0);
        return s;
    }

    MassRatio mass_ratio() { return MassRatio(uniform(1e-3, 0.5)); }

    Eigen::VectorXd vector(Eigen::Index n, double scale = 1.0) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * normal();
        return v;
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

}  // namespace testing_support
