#include "orbitvae/propagation.hpp"

#include <cmath>
#include <string>

#include "orbitvae/errors.hpp"

namespace orbitvae {

void IntegratorConfig::validate() const {
    if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) {
        throw InvalidArgument("integrator tolerances must be positive");
    }
    if (!(initial_step > 0.0) || !(max_step > 0.0)) {
        throw InvalidArgument("integrator step sizes must be positive");
    }
    if (max_steps <= 0) {
        throw InvalidArgument("integrator max_steps must be positive");
    }
}

namespace {

using Vec42 = Eigen::Matrix<double, 42, 1>;

struct StateRhs {
    MassRatio mu;
    Vec6 operator()(double /*t*/, const Vec6& x) const { return eom(mu, x); }
};

// Augmented system: state followed by the column-major STM.
struct StmRhs {
    MassRatio mu;
    Vec42 operator()(double /*t*/, const Vec42& x) const {
        const StateVector s = x.head<6>();
        const Mat6 a = eom_jacobian(mu, s);
        const Eigen::Map<const Mat6> phi(x.data() + 6);
        Vec42 d;
        d.head<6>() = eom(mu, s);
        Eigen::Map<Mat6>(d.data() + 6) = a * phi;
        return d;
    }
};

Vec42 augment(const StateVector& s) {
    Vec42 x;
    x.head<6>() = s;
    Eigen::Map<Mat6>(x.data() + 6).setIdentity();
    return x;
}

Mat6 stm_of(const Vec42& x) { return Eigen::Map<const Mat6>(x.data() + 6); }

void require_finite(double t, const char* what) {
    if (!std::isfinite(t)) throw InvalidArgument(std::string(what) + " must be finite");
}

constexpr double kCrossingTol = 1e-12;
constexpr int kMaxRefinements = 200;

bool direction_matches(CrossingDirection dir, double vy) {
    switch (dir) {
        case CrossingDirection::Positive: return vy > 0.0;
        case CrossingDirection::Negative: return vy < 0.0;
        case CrossingDirection::Any: return true;
    }
    return true;
}

// Steps the integrator until y changes sign with the requested direction, then locates the
// root inside the bracketing step by safeguarded Newton (dy/dt = vy) with bisection fallback.
// Each trial point is re-integrated from the start of the bracketing step.
template <int Dim, class Rhs>
std::pair<double, Eigen::Matrix<double, Dim, 1>> locate_crossing(
    const Rhs& rhs, const Eigen::Matrix<double, Dim, 1>& x0, CrossingDirection dir,
    const IntegratorConfig& config) {
    using Vector = Eigen::Matrix<double, Dim, 1>;
    Dop853<Dim, Rhs> stepper(rhs, config);
    stepper.reset(0.0, x0);
    const double horizon = std::numeric_limits<double>::max();

    double ta = 0.0;
    Vector xa = x0;
    while (true) {
        stepper.step(horizon);
        const double tb = stepper.time();
        const Vector xb = stepper.state();
        const double ya = xa[1];
        const double yb = xb[1];
        const bool changed = (ya != 0.0) && ((ya < 0.0 && yb >= 0.0) || (ya > 0.0 && yb <= 0.0));
        if (changed && direction_matches(dir, yb - ya)) {
            if (std::abs(yb) < kCrossingTol) return {tb, xb};

            Dop853<Dim, Rhs> sub(rhs, config);
            double lo = ta;
            double hi = tb;
            double y_lo = ya;
            double t = tb - yb / xb[4];
            for (int it = 0; it < kMaxRefinements; ++it) {
                if (!(t > lo && t < hi)) t = 0.5 * (lo + hi);
                sub.reset(ta, xa);
                const Vector xt = sub.integrate_to(t);
                const double yt = xt[1];
                if (std::abs(yt) < kCrossingTol || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(hi)) {
                    return {t, xt};
                }
                if ((yt < 0.0) == (y_lo < 0.0)) {
                    lo = t;
                    y_lo = yt;
                } else {
                    hi = t;
                }
                t = t - yt / xt[4];
            }
            throw NumericError("y-crossing refinement did not converge");
        }
        ta = tb;
        xa = xb;
    }
}

}  // namespace

StateVector propagate(const MassRatio& mu, const StateVector& state0, double t_final,
                      const IntegratorConfig& config) {
    require_finite(t_final, "t_final");
    config.validate();
    if (t_final == 0.0) return state0;
    Dop853<6, StateRhs> stepper(StateRhs{mu}, config);
    stepper.reset(0.0, state0);
    return stepper.integrate_to(t_final);
}

Trajectory propagate_trajectory(const MassRatio& mu, const StateVector& state0, double period,
                                int n_nodes, const IntegratorConfig& config) {
    if (n_nodes < 2) throw InvalidArgument("propagate_trajectory needs n_nodes >= 2");
    if (!(period > 0.0) || !std::isfinite(period)) {
        throw InvalidArgument("propagate_trajectory needs a finite period > 0");
    }
    config.validate();
    Trajectory traj{mu, {}};
    traj.nodes.reserve(static_cast<std::size_t>(n_nodes));
    traj.nodes.push_back({0.0, state0});

    Dop853<6, StateRhs> stepper(StateRhs{mu}, config);
    stepper.reset(0.0, state0);
    for (int k = 1; k < n_nodes; ++k) {
        const double tk = (k == n_nodes - 1) ? period : k * period / (n_nodes - 1);
        traj.nodes.push_back({tk, stepper.integrate_to(tk)});
    }
    return traj;
}

StmResult propagate_with_stm(const MassRatio& mu, const StateVector& state0, double t_final,
                             const IntegratorConfig& config) {
    require_finite(t_final, "t_final");
    config.validate();
    if (t_final == 0.0) return {state0, Mat6::Identity()};
    Dop853<42, StmRhs> stepper(StmRhs{mu}, config);
    stepper.reset(0.0, augment(state0));
    const Vec42 x = stepper.integrate_to(t_final);
    return {x.head<6>(), stm_of(x)};
}

Crossing find_y_crossing(const MassRatio& mu, const StateVector& state0,
                         CrossingDirection direction, const IntegratorConfig& config) {
    config.validate();
    const auto [t, x] = locate_crossing<6>(StateRhs{mu}, state0, direction, config);
    return {t, x};
}

CrossingWithStm find_y_crossing_with_stm(const MassRatio& mu, const StateVector& state0,
                                         CrossingDirection direction,
                                         const IntegratorConfig& config) {
    config.validate();
    const auto [t, x] = locate_crossing<42>(StmRhs{mu}, augment(state0), direction, config);
    return {t, x.head<6>(), stm_of(x)};
}

}  // namespace orbitvae
