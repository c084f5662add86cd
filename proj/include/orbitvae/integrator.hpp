#pragma once

// Adaptive Dormand-Prince 8(5,3) Runge-Kutta integrator with PI step-size control.
// Coefficients follow Hairer & Wanner's DOP853.

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "orbitvae/errors.hpp"

namespace orbitvae {

struct IntegratorConfig {
    double abs_tol = 1e-13;
    double rel_tol = 1e-13;
    double initial_step = 1e-3;
    double max_step = 0.5;
    std::int64_t max_steps = 10'000'000;

    /// Throws InvalidArgument when any field violates its bounds.
    void validate() const;
};

namespace dop853 {

inline constexpr int kStages = 12;

inline constexpr std::array<double, kStages> kC = {
    0.0,
    0.526001519587677318785587544488e-01,
    0.789002279381515978178381316732e-01,
    0.118350341907227396726757197510,
    0.281649658092772603273242802490,
    0.333333333333333333333333333333,
    0.25,
    0.307692307692307692307692307692,
    0.651282051282051282051282051282,
    0.6,
    0.857142857142857142857142857142,
    1.0};

// Lower-triangular stage matrix; row i holds a(i, 0..i-1).
inline constexpr std::array<std::array<double, kStages>, kStages> kA = {{
    {},
    {5.26001519587677318785587544488e-2},
    {1.97250569845378994544595329183e-2, 5.91751709536136983633785987549e-2},
    {2.95875854768068491816892993775e-2, 0.0, 8.87627564304205475450678981324e-2},
    {2.41365134159266685502369798665e-1, 0.0, -8.84549479328286085344864962717e-1,
     9.24834003261792003115737966543e-1},
    {3.7037037037037037037037037037e-2, 0.0, 0.0, 1.70828608729473871279604482173e-1,
     1.25467687566822425016691814123e-1},
    {3.7109375e-2, 0.0, 0.0, 1.70252211019544039314978060272e-1,
     6.02165389804559606850219397283e-2, -1.7578125e-2},
    {3.70920001185047927108779319836e-2, 0.0, 0.0, 1.70383925712239993810214054705e-1,
     1.07262030446373284651809199168e-1, -1.53194377486244017527936158236e-2,
     8.27378916381402288758473766002e-3},
    {6.24110958716075717114429577812e-1, 0.0, 0.0, -3.36089262944694129406857109825,
     -8.68219346841726006818189891453e-1, 2.75920996994467083049415600797e1,
     2.01540675504778934086186788979e1, -4.34898841810699588477366255144e1},
    {4.77662536438264365890433908527e-1, 0.0, 0.0, -2.48811461997166764192642586468,
     -5.90290826836842996371446475743e-1, 2.12300514481811942347288949897e1,
     1.52792336328824235832596922938e1, -3.32882109689848629194453265587e1,
     -2.03312017085086261358222928593e-2},
    {-9.3714243008598732571704021658e-1, 0.0, 0.0, 5.18637242884406370830023853209,
     1.09143734899672957818500254654, -8.14978701074692612513997267357,
     -1.85200656599969598641566180701e1, 2.27394870993505042818970056734e1,
     2.49360555267965238987089396762, -3.0467644718982195003823669022},
    {2.27331014751653820792359768449, 0.0, 0.0, -1.05344954667372501984066689879e1,
     -2.00087205822486249909675718444, -1.79589318631187989172765950534e1,
     2.79488845294199600508499808837e1, -2.85899827713502369474065508674,
     -8.87285693353062954433549289258, 1.23605671757943030647266201528e1,
     6.43392746015763530355970484046e-1},
}};

inline constexpr std::array<double, kStages> kB = {
    5.42937341165687622380535766363e-2, 0.0, 0.0, 0.0, 0.0,
    4.45031289275240888144113950566,     1.89151789931450038304281599044,
    -5.8012039600105847814672114227,     3.1116436695781989440891606237e-1,
    -1.52160949662516078556178806805e-1, 2.01365400804030348374776537501e-1,
    4.47106157277725905176885569043e-2};

// Third-order embedded error weights: b - bhat3.
inline constexpr std::array<double, kStages> kE3 = {
    5.42937341165687622380535766363e-2 - 0.244094488188976377952755905512,
    0.0, 0.0, 0.0, 0.0,
    4.45031289275240888144113950566,
    1.89151789931450038304281599044,
    -5.8012039600105847814672114227,
    3.1116436695781989440891606237e-1 - 0.733846688281611857341361741547,
    -1.52160949662516078556178806805e-1,
    2.01365400804030348374776537501e-1,
    4.47106157277725905176885569043e-2 - 0.220588235294117647058823529412e-1};

// Fifth-order embedded error weights.
inline constexpr std::array<double, kStages> kE5 = {
    0.1312004499419488073250102996e-1, 0.0, 0.0, 0.0, 0.0,
    -0.1225156446376204440720569753e+1, -0.4957589496572501915214079952,
    0.1664377182454986536961530415e+1,  -0.3503288487499736816886487290,
    0.3341791187130174790297318841,     0.8192320648511571246570742613e-1,
    -0.2235530786388629525884427845e-1};

}  // namespace dop853

/// One adaptive integrator bound to a right-hand side `rhs(t, x) -> dx`.
///
/// The stepper keeps its own state (t, x, proposed step) so callers can drive it
/// step by step for event detection or call integrate_to() for a single endpoint.
template <int Dim, class Rhs>
class Dop853 {
public:
    using Vector = Eigen::Matrix<double, Dim, 1>;

    Dop853(Rhs rhs, const IntegratorConfig& config) : rhs_(std::move(rhs)), config_(config) {}

    void reset(double t, const Vector& x) {
        t_ = t;
        x_ = x;
        h_ = config_.initial_step;
        err_old_ = 1e-4;
        steps_ = 0;
    }

    double time() const noexcept { return t_; }
    const Vector& state() const noexcept { return x_; }
    std::int64_t steps_taken() const noexcept { return steps_; }

    /// Take one accepted step toward t_limit (never past it). Returns the step size taken.
    double step(double t_limit) {
        const double direction = t_limit >= t_ ? 1.0 : -1.0;
        const double remaining = std::abs(t_limit - t_);
        double h_abs = std::min({std::abs(h_), config_.max_step, remaining});

        Vector k1 = rhs_(t_, x_);
        while (true) {
            if (++steps_ > config_.max_steps) {
                throw NumericError("integrator exceeded max_steps (" +
                                   std::to_string(config_.max_steps) + ")");
            }
            const double min_step =
                16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t_));
            if (h_abs < min_step && h_abs < remaining) {
                throw NumericError("integrator step size underflow at t=" + std::to_string(t_));
            }
            const bool last = h_abs >= remaining;
            const double h = direction * (last ? remaining : h_abs);

            Vector x_new;
            const double err = attempt(h, k1, x_new);

            if (err <= 1.0) {
                // PI controller (Gustafsson), exponents as in DOP853 with beta = 0.04.
                constexpr double beta = 0.04;
                constexpr double expo = 1.0 / 8.0 - beta * 0.2;
                const double e = std::max(err, 1e-16);
                double fac = std::pow(e, expo) / std::pow(err_old_, beta) / kSafety;
                fac = std::clamp(fac, 1.0 / kFacMax, 1.0 / kFacMin);
                err_old_ = std::max(err, 1e-4);
                t_ = last ? t_limit : t_ + h;
                x_ = x_new;
                h_ = std::abs(h) / fac;
                return h;
            }
            const double fac = std::min(1.0 / kFacMin, std::pow(err, 1.0 / 8.0) / kSafety);
            h_abs = std::abs(h) / fac;
        }
    }

    /// Integrate to t_final, returning the final state.
    const Vector& integrate_to(double t_final) {
        while (t_ != t_final) {
            step(t_final);
        }
        return x_;
    }

private:
    static constexpr double kSafety = 0.9;
    static constexpr double kFacMin = 0.333;  // largest decrease factor 1/3
    static constexpr double kFacMax = 6.0;    // largest increase factor 6

    double attempt(double h, const Vector& k1, Vector& x_new) {
        using namespace dop853;
        std::array<Vector, kStages> k;
        k[0] = k1;
        for (int s = 1; s < kStages; ++s) {
            Vector acc = kA[s][0] * k[0];
            for (int j = 1; j < s; ++j) {
                if (kA[s][j] != 0.0) acc += kA[s][j] * k[j];
            }
            k[s] = rhs_(t_ + kC[s] * h, Vector(x_ + h * acc));
        }
        Vector incr = kB[0] * k[0];
        Vector err5 = kE5[0] * k[0];
        Vector err3 = kE3[0] * k[0];
        for (int s = 5; s < kStages; ++s) {
            incr += kB[s] * k[s];
            err5 += kE5[s] * k[s];
            err3 += kE3[s] * k[s];
        }
        x_new = x_ + h * incr;

        if (!x_new.allFinite()) return std::numeric_limits<double>::infinity();
        // Component-wise DOP853 estimate (fifth-order error damped by the third-order one),
        // reduced with the max norm.
        double worst = 0.0;
        for (int i = 0; i < x_.size(); ++i) {
            const double sk =
                config_.abs_tol + config_.rel_tol * std::max(std::abs(x_[i]), std::abs(x_new[i]));
            const double a = err5[i] / sk;
            const double b = err3[i] / sk;
            const double denom = std::sqrt(a * a + 0.01 * b * b);
            if (denom > 0.0) worst = std::max(worst, a * a / denom);
        }
        return std::abs(h) * worst;
    }

    Rhs rhs_;
    IntegratorConfig config_;
    double t_ = 0.0;
    Vector x_ = Vector::Zero();
    double h_ = 1e-3;
    double err_old_ = 1e-4;
    std::int64_t steps_ = 0;
};

}  // namespace orbitvae
