#include "orbitvae/families.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <optional>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "orbitvae/errors.hpp"
#include "orbitvae/propagation.hpp"
#include "orbitvae/text.hpp"

namespace orbitvae {

std::string to_string(Libration label) {
    static constexpr std::array<const char*, 5> names = {"L1", "L2", "L3", "L4", "L5"};
    return names[static_cast<std::size_t>(label)];
}

Libration parse_libration(const std::string& text) {
    std::string up = text;
    std::transform(up.begin(), up.end(), up.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    for (int i = 0; i < 5; ++i) {
        if (up == to_string(static_cast<Libration>(i))) return static_cast<Libration>(i);
    }
    throw InvalidArgument("unknown libration point '" + text + "'");
}

namespace {

constexpr double kEquilibriumTol = 1e-12;
constexpr int kMaxBisections = 200;

double ux_on_axis(const MassRatio& mu, double x) { return potential_gradient(mu, Vec3(x, 0, 0)).x(); }

double collinear_root(const MassRatio& mu, double lo, double hi) {
    double f_lo = ux_on_axis(mu, lo);
    for (int i = 0; i < kMaxBisections; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double f_mid = ux_on_axis(mu, mid);
        if (std::abs(f_mid) < kEquilibriumTol) return mid;
        if (mid <= lo || mid >= hi) break;
        if ((f_mid < 0.0) == (f_lo < 0.0)) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    const double mid = 0.5 * (lo + hi);
    if (std::abs(ux_on_axis(mu, mid)) < 1e-10) return mid;
    throw NumericError("collinear Lagrange point bisection did not converge");
}

}  // namespace

std::array<LagrangePoint, 5> lagrange_points(const MassRatio& mu) {
    const double m = mu.value();
    const double moon = mu.primary2_x();
    const double earth = mu.primary1_x();
    const double h = std::sqrt(3.0) / 2.0;
    return {{
        {Libration::L1, Vec3(collinear_root(mu, moon - 0.5, moon - 1e-6), 0, 0)},
        {Libration::L2, Vec3(collinear_root(mu, moon + 1e-6, moon + 0.5), 0, 0)},
        {Libration::L3, Vec3(collinear_root(mu, earth - 1.5, earth - 1e-6), 0, 0)},
        {Libration::L4, Vec3(0.5 - m, h, 0)},
        {Libration::L5, Vec3(0.5 - m, -h, 0)},
    }};
}

std::pair<double, double> linear_lyapunov_guess(const MassRatio& mu, Libration point, double dx) {
    if (point != Libration::L1 && point != Libration::L2 && point != Libration::L3) {
        throw InvalidArgument("Lyapunov guesses exist only for collinear points");
    }
    const Vec3 p = lagrange_points(mu)[static_cast<std::size_t>(point)].position;
    const Mat3 hess = potential_hessian(mu, p);
    const double uxx = hess(0, 0);
    const double uyy = hess(1, 1);
    // Planar characteristic polynomial s^4 + (4 - Uxx - Uyy) s^2 + Uxx Uyy = 0, s = i w.
    const double b = 4.0 - uxx - uyy;
    const double w2 = 0.5 * (b + std::sqrt(b * b - 4.0 * uxx * uyy));
    // x = A cos(wt), y = B sin(wt) with B = -(w^2 + Uxx) A / (2w).
    const double vy0 = -0.5 * (w2 + uxx) * dx;
    return {p.x() + dx, vy0};
}

PeriodicOrbit differential_correct(const MassRatio& mu, double guess_x0, double guess_vy0,
                                   const IntegratorConfig& config, const CorrectorOptions& options,
                                   int& iterations) {
    auto make_state = [&](double vy) {
        StateVector x0;
        x0 << guess_x0, 0, 0, 0, vy, 0;
        return x0;
    };
    // d(vx)/d(vy0) at the perpendicular crossing, with the crossing time free. The crossing
    // itself comes from the plain flow so vx is measured on the same integration path that
    // later checks periodicity; the STM only supplies the slope.
    auto newton_update = [&](double vy, const Crossing& cross) {
        const Mat6 stm = propagate_with_stm(mu, make_state(vy), cross.t, config).stm;
        const Vec6 f = eom(mu, cross.state);
        const double slope = stm(3, 4) - f[3] * stm(1, 4) / cross.state[4];
        if (!std::isfinite(slope) || slope == 0.0) {
            throw NumericError("differential corrector: singular update");
        }
        return cross.state[3] / slope;
    };

    double vy0 = guess_vy0;
    iterations = 0;
    auto cross = find_y_crossing(mu, make_state(vy0), CrossingDirection::Any, config);
    while (std::abs(cross.state[3]) >= options.vx_tol) {
        if (iterations == options.max_iterations) {
            throw NumericError("differential corrector exceeded " +
                               std::to_string(options.max_iterations) + " iterations");
        }
        vy0 -= newton_update(vy0, cross);
        ++iterations;
        if (!std::isfinite(vy0)) throw NumericError("differential corrector: non-finite vy0");
        cross = find_y_crossing(mu, make_state(vy0), CrossingDirection::Any, config);
    }

    // Polish below the acceptance threshold while |vx| keeps shrinking.
    for (int p = 0; p < options.polish_iterations && cross.state[3] != 0.0; ++p) {
        Crossing trial;
        double trial_vy0 = 0.0;
        try {
            trial_vy0 = vy0 - newton_update(vy0, cross);
            trial = find_y_crossing(mu, make_state(trial_vy0), CrossingDirection::Any, config);
        } catch (const NumericError&) {
            break;
        }
        if (!(std::abs(trial.state[3]) < std::abs(cross.state[3]))) break;
        vy0 = trial_vy0;
        cross = trial;
    }

    PeriodicOrbit orbit;
    orbit.initial_state = make_state(vy0);
    orbit.period = 2.0 * cross.t;
    orbit.jacobi = jacobi_constant(mu, orbit.initial_state);
    orbit.stability_index = stability_index(mu, orbit, config);
    return orbit;
}

PeriodicOrbit differential_correct(const MassRatio& mu, double guess_x0, double guess_vy0,
                                   const IntegratorConfig& config, const CorrectorOptions& options) {
    int iterations = 0;
    return differential_correct(mu, guess_x0, guess_vy0, config, options, iterations);
}

ContinuationResult continue_family(const MassRatio& mu, Libration point, int count, double dx_step,
                                   const IntegratorConfig& config, const CorrectorOptions& options) {
    if (count < 1) throw InvalidArgument("continue_family needs count >= 1");
    if (!(dx_step > 0.0)) throw InvalidArgument("continue_family needs dx_step > 0");
    if (point != Libration::L1 && point != Libration::L2) {
        throw InvalidArgument("continue_family supports L1 and L2 only");
    }
    const double outward = point == Libration::L1 ? -1.0 : 1.0;
    const std::string family = "lyapunov-" + to_string(point);

    ContinuationResult result;
    result.catalog.mu = mu;
    const double lp_x = lagrange_points(mu)[static_cast<std::size_t>(point)].position.x();
    auto [x0, vy0] = linear_lyapunov_guess(mu, point, outward * 1e-3);
    double period_trend = 0.0;
    double jacobi_trend = 0.0;
    for (int k = 0; k < count; ++k) {
        PeriodicOrbit orbit;
        try {
            orbit = differential_correct(mu, x0, vy0, config, options);
        } catch (const Error& e) {
            result.complete = false;
            result.diagnostic = family + " member " + std::to_string(k) + ": " + e.what();
            return result;
        }
        orbit.family = family;
        if (!result.catalog.orbits.empty()) {
            const auto& prev = result.catalog.orbits.back();
            const double dp = orbit.period - prev.period;
            const double dc = orbit.jacobi - prev.jacobi;
            if (result.catalog.orbits.size() == 1) {
                period_trend = dp;
                jacobi_trend = dc;
            }
            if (dp == 0.0 || dc == 0.0 || (dp > 0.0) != (period_trend > 0.0) ||
                (dc > 0.0) != (jacobi_trend > 0.0)) {
                result.complete = false;
                result.diagnostic = family + " member " + std::to_string(k) +
                                    ": period/Jacobi no longer monotone (period " +
                                    text::format_double(orbit.period) + ", jacobi " +
                                    text::format_double(orbit.jacobi) + ")";
                return result;
            }
        }
        result.catalog.orbits.push_back(std::move(orbit));
        x0 += outward * dx_step;
        // Secant predictor in x0 from the last two members; the linear guess seeds member 1.
        const auto& orbits = result.catalog.orbits;
        if (orbits.size() == 1) {
            vy0 = linear_lyapunov_guess(mu, point, x0 - lp_x).second;
        } else {
            const auto& a = orbits[orbits.size() - 2].initial_state;
            const auto& b = orbits.back().initial_state;
            vy0 = b[4] + (b[4] - a[4]) / (b[0] - a[0]) * (x0 - b[0]);
        }
    }
    return result;
}

double stability_index(const Mat6& monodromy) {
    const Eigen::EigenSolver<Mat6> solver(monodromy, false);
    if (solver.info() != Eigen::Success) {
        throw NumericError("monodromy eigen-decomposition failed");
    }
    double best = 0.0;
    for (int i = 0; i < 6; ++i) {
        const std::complex<double> lambda = solver.eigenvalues()[i];
        if (std::abs(lambda) == 0.0) continue;
        best = std::max(best, 0.5 * std::abs(lambda + 1.0 / lambda));
    }
    return best;
}

double stability_index(const MassRatio& mu, const PeriodicOrbit& orbit,
                       const IntegratorConfig& config) {
    return stability_index(propagate_with_stm(mu, orbit.initial_state, orbit.period, config).stm);
}

double periodicity_residual(const MassRatio& mu, const PeriodicOrbit& orbit,
                            const IntegratorConfig& config) {
    return (propagate(mu, orbit.initial_state, orbit.period, config) - orbit.initial_state).norm();
}

// ---------------------------------------------------------------------------
// Catalog CSV

namespace {

constexpr std::string_view kCatalogHeader = "family,x0,y0,z0,vx0,vy0,vz0,period,jacobi,stability";
constexpr std::string_view kMuPrefix = "# mu=";

}  // namespace

std::string format_catalog(const Catalog& catalog) {
    std::ostringstream out;
    out << kMuPrefix << text::format_double(catalog.mu.value()) << '\n' << kCatalogHeader << '\n';
    for (const auto& o : catalog.orbits) {
        if (o.family.find_first_of(",\n\r") != std::string::npos) {
            throw InvalidArgument("family label may not contain ',' or newlines: " + o.family);
        }
        out << o.family;
        for (int i = 0; i < 6; ++i) out << ',' << text::format_double(o.initial_state[i]);
        out << ',' << text::format_double(o.period) << ',' << text::format_double(o.jacobi) << ','
            << text::format_double(o.stability_index) << '\n';
    }
    return out.str();
}

Catalog parse_catalog(const std::string& contents) {
    const auto rows = text::lines(contents);
    std::optional<double> mu;
    std::size_t i = 0;
    for (; i < rows.size() && !rows[i].empty() && rows[i].front() == '#'; ++i) {
        if (rows[i].substr(0, kMuPrefix.size()) == kMuPrefix) {
            mu = text::parse_double(rows[i].substr(kMuPrefix.size()),
                                    "line " + std::to_string(i + 1));
            if (!(*mu > 0.0 && *mu <= 0.5)) {
                throw FormatError("line " + std::to_string(i + 1) + ": mu out of range");
            }
        }
    }
    if (i >= rows.size() || rows[i] != kCatalogHeader) {
        throw FormatError("line " + std::to_string(i + 1) + ": expected catalog header '" +
                          std::string(kCatalogHeader) + "'");
    }
    if (!mu) throw FormatError("catalog is missing the '# mu=<value>' comment line");

    Catalog catalog{MassRatio(*mu), {}};
    for (++i; i < rows.size(); ++i) {
        const std::string where = "line " + std::to_string(i + 1);
        if (rows[i].empty()) continue;
        const auto fields = text::split(rows[i], ',');
        if (fields.size() != 10) {
            throw FormatError(where + ": expected 10 fields, found " + std::to_string(fields.size()));
        }
        PeriodicOrbit o;
        o.family = std::string(fields[0]);
        std::array<double, 9> v{};
        for (std::size_t k = 0; k < 9; ++k) {
            v[k] = text::parse_double(fields[k + 1], where);
            if (!std::isfinite(v[k])) throw FormatError(where + ": non-finite value");
        }
        o.initial_state << v[0], v[1], v[2], v[3], v[4], v[5];
        o.period = v[6];
        o.jacobi = v[7];
        o.stability_index = v[8];
        catalog.orbits.push_back(std::move(o));
    }
    return catalog;
}

void write_catalog(const Catalog& catalog, const std::filesystem::path& path) {
    text::write_file(path, format_catalog(catalog));
}

Catalog read_catalog(const std::filesystem::path& path) {
    try {
        return parse_catalog(text::read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace orbitvae
