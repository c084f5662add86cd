#include "orbitvae/refinement.hpp"

#include <cmath>
#include <sstream>

#include "orbitvae/errors.hpp"
#include "orbitvae/propagation.hpp"
#include "orbitvae/text.hpp"

namespace orbitvae {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void ShootingVariables::validate() const {
    if (states.size() < 3) throw InvalidArgument("shooting variables need at least 3 nodes");
    if (intervals.size() + 1 != states.size()) {
        throw InvalidArgument("shooting variables need exactly N-1 intervals");
    }
    for (const auto& s : states) {
        if (!is_finite(s)) throw InvalidArgument("shooting node state is not finite");
    }
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        if (!(intervals[i] > 0.0) || !std::isfinite(intervals[i])) {
            throw InvalidArgument("shooting interval " + std::to_string(i) + " is not positive");
        }
    }
}

VectorXd ShootingVariables::flatten() const {
    VectorXd x(dimension());
    for (int i = 0; i < nodes(); ++i) x.segment<6>(6 * i) = states[static_cast<std::size_t>(i)];
    for (int i = 0; i + 1 < nodes(); ++i) x[6 * nodes() + i] = intervals[static_cast<std::size_t>(i)];
    return x;
}

ShootingVariables ShootingVariables::unflatten(const MassRatio& mu, const VectorXd& flat) {
    if ((flat.size() + 1) % 7 != 0) throw ShapeError("flat shooting vector must have 7N-1 entries");
    const auto n = static_cast<int>((flat.size() + 1) / 7);
    ShootingVariables v;
    v.mu = mu;
    for (int i = 0; i < n; ++i) v.states.push_back(flat.segment<6>(6 * i));
    for (int i = 0; i + 1 < n; ++i) v.intervals.push_back(flat[6 * n + i]);
    return v;
}

double ShootingVariables::period() const {
    double t = 0.0;
    for (double dt : intervals) t += dt;
    return t;
}

std::vector<int> shooting_indices(int n_total, double node_fraction) {
    if (!(node_fraction > 0.0 && node_fraction <= 1.0)) {
        throw InvalidArgument("node_fraction must lie in (0, 1]");
    }
    const int n_s = static_cast<int>(std::lround(node_fraction * n_total));
    if (n_s < 3) {
        throw InvalidArgument("node_fraction " + text::format_double(node_fraction) + " of " +
                              std::to_string(n_total) + " nodes selects fewer than 3 shooting nodes");
    }
    std::vector<int> idx;
    for (int k = 0; k < n_s; ++k) {
        idx.push_back(static_cast<int>(std::lround(static_cast<double>(k) * (n_total - 1) / (n_s - 1))));
    }
    return idx;
}

ShootingVariables seed_from_trajectory(const MassRatio& mu, const MatrixXd& traj,
                                       double node_fraction) {
    if (traj.rows() != 7) throw ShapeError("trajectory must have 7 rows (state + time)");
    if (traj.cols() < 20) throw InvalidArgument("trajectory needs at least 20 nodes");
    if (!traj.allFinite()) throw InvalidArgument("trajectory contains non-finite values");
    const auto idx = shooting_indices(static_cast<int>(traj.cols()), node_fraction);
    ShootingVariables v;
    v.mu = mu;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        v.states.push_back(traj.col(idx[k]).head<6>());
        if (k + 1 < idx.size()) {
            const double dt = traj(6, idx[k + 1]) - traj(6, idx[k]);
            if (!(dt > 0.0)) {
                throw InvalidArgument("trajectory times are not increasing between nodes " +
                                      std::to_string(idx[k]) + " and " + std::to_string(idx[k + 1]));
            }
            v.intervals.push_back(dt);
        }
    }
    return v;
}

namespace {

StmResult propagate_segment(const ShootingVariables& vars, std::size_t i,
                            const IntegratorConfig& config) {
    try {
        return propagate_with_stm(vars.mu, vars.states[i], vars.intervals[i], config);
    } catch (const Error& e) {
        throw NumericError("segment " + std::to_string(i) + ": " + e.what());
    }
}

}  // namespace

std::pair<VectorXd, MatrixXd> constraints_and_jacobian(const ShootingVariables& vars,
                                                       const IntegratorConfig& config) {
    vars.validate();
    const int n = vars.nodes();
    VectorXd F(6 * n);
    MatrixXd DF = MatrixXd::Zero(6 * n, vars.dimension());
    for (int i = 0; i + 1 < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const StmResult seg = propagate_segment(vars, ui, config);
        F.segment<6>(6 * i) = seg.final_state - vars.states[ui + 1];
        DF.block<6, 6>(6 * i, 6 * i) = seg.stm;
        DF.block<6, 6>(6 * i, 6 * (i + 1)) = -Mat6::Identity();
        DF.block<6, 1>(6 * i, 6 * n + i) = eom(vars.mu, seg.final_state);
    }
    F.segment<6>(6 * (n - 1)) = vars.states.front() - vars.states.back();
    DF.block<6, 6>(6 * (n - 1), 0) = Mat6::Identity();
    DF.block<6, 6>(6 * (n - 1), 6 * (n - 1)) = -Mat6::Identity();
    return {F, DF};
}

VectorXd constraints(const ShootingVariables& vars, const IntegratorConfig& config) {
    vars.validate();
    const int n = vars.nodes();
    VectorXd F(6 * n);
    for (int i = 0; i + 1 < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        StateVector end;
        try {
            end = propagate(vars.mu, vars.states[ui], vars.intervals[ui], config);
        } catch (const Error& e) {
            throw NumericError("segment " + std::to_string(i) + ": " + e.what());
        }
        F.segment<6>(6 * i) = end - vars.states[ui + 1];
    }
    F.segment<6>(6 * (n - 1)) = vars.states.front() - vars.states.back();
    return F;
}

MatrixXd constraint_jacobian(const ShootingVariables& vars, const IntegratorConfig& config) {
    return constraints_and_jacobian(vars, config).second;
}

NewtonStep newton_step(const ShootingVariables& vars, const VectorXd& F, const MatrixXd& DF) {
    const auto dim = vars.dimension();
    if (F.size() != 6 * vars.nodes() || DF.rows() != F.size() || DF.cols() != dim) {
        throw ShapeError("newton_step: F / DF dimensions do not match the shooting variables");
    }
    if (!F.allFinite() || !DF.allFinite()) throw NumericError("newton_step: non-finite F or DF");

    NewtonStep out{vars, 0};
    if (F.isZero(0.0)) return out;

    Eigen::JacobiSVD<MatrixXd> svd(DF, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VectorXd& sv = svd.singularValues();
    const double cutoff = sv[0] / std::sqrt(kMaxCondition);
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv[rank] > cutoff) ++rank;
    if (rank < F.size() - 1) {
        throw NumericError("newton_step: rank-deficient Jacobian (condition above " +
                           text::format_double(kMaxCondition) + ", rank " + std::to_string(rank) +
                           " of " + std::to_string(F.size()) + ")");
    }
    const VectorXd coeffs = (svd.matrixU().leftCols(rank).transpose() * F).cwiseQuotient(sv.head(rank));
    const VectorXd delta = svd.matrixV().leftCols(rank) * coeffs;
    if (!delta.allFinite()) throw NumericError("newton_step: non-finite update");

    out.vars = ShootingVariables::unflatten(vars.mu, vars.flatten() - delta);
    for (double& dt : out.vars.intervals) {
        if (!(dt > 0.0)) {
            dt = kMinInterval;
            ++out.clamped_intervals;
        }
    }
    return out;
}

void RefineOptions::validate() const {
    if (!(node_fraction > 0.0 && node_fraction <= 1.0)) {
        throw InvalidArgument("node_fraction must lie in (0, 1]");
    }
    if (max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");
    if (!(tol > 0.0) || !std::isfinite(tol)) throw InvalidArgument("tol must be > 0");
    if (polish_iterations < 0) throw InvalidArgument("polish_iterations must be >= 0");
}

namespace {

struct Evaluated {
    ShootingVariables vars;
    VectorXd F;
    MatrixXd DF;
    double norm = 0.0;
};

Evaluated evaluate(ShootingVariables vars, const IntegratorConfig& config) {
    auto [F, DF] = constraints_and_jacobian(vars, config);
    const double norm = F.norm();
    return {std::move(vars), std::move(F), std::move(DF), norm};
}

// Step-halving: scales the Newton update by 1/2 until ||F|| no longer grows.
Evaluated damped(const Evaluated& cur, const NewtonStep& step, const IntegratorConfig& config,
                 int& clamped) {
    Evaluated trial = evaluate(step.vars, config);
    const VectorXd x0 = cur.vars.flatten();
    const VectorXd full = step.vars.flatten() - x0;
    double scale = 1.0;
    for (int h = 0; h < 5 && !(trial.norm <= cur.norm); ++h) {
        scale *= 0.5;
        ShootingVariables v = ShootingVariables::unflatten(cur.vars.mu, x0 + scale * full);
        for (double& dt : v.intervals) {
            if (!(dt > 0.0)) {
                dt = kMinInterval;
                ++clamped;
            }
        }
        trial = evaluate(std::move(v), config);
    }
    return trial;
}

}  // namespace

RefinementResult refine(const ShootingVariables& seed, const RefineOptions& options,
                        const IntegratorConfig& config) {
    options.validate();
    seed.validate();
    RefinementResult r;
    Evaluated cur;
    try {
        cur = evaluate(seed, config);
    } catch (const Error& e) {
        r.diagnostic = std::string("seed: ") + e.what();
        return r;
    }
    r.history.push_back(cur.norm);

    try {
        while (true) {
            if (!std::isfinite(cur.norm) || cur.norm > kDivergenceNorm) {
                r.diagnostic = "diverged: ||F|| = " + text::format_double(cur.norm);
                break;
            }
            if (cur.norm < options.tol) {
                r.converged = true;
                break;
            }
            if (r.iterations == options.max_iterations) {
                r.diagnostic = "iteration limit reached";
                break;
            }
            const NewtonStep step = newton_step(cur.vars, cur.F, cur.DF);
            r.clamped_intervals += step.clamped_intervals;
            cur = options.damping ? damped(cur, step, config, r.clamped_intervals)
                                  : evaluate(step.vars, config);
            ++r.iterations;
            r.history.push_back(cur.norm);
        }
    } catch (const Error& e) {
        r.diagnostic = "iteration " + std::to_string(r.iterations + 1) + ": " + e.what();
    }

    if (r.converged) {
        for (int p = 0; p < options.polish_iterations; ++p) {
            try {
                const NewtonStep step = newton_step(cur.vars, cur.F, cur.DF);
                Evaluated next = evaluate(step.vars, config);
                if (!(next.norm < cur.norm)) break;
                cur = std::move(next);
                r.history.push_back(cur.norm);
            } catch (const Error&) {
                break;
            }
        }
    }
    r.final_norm = cur.norm;

    if (r.converged) {
        PeriodicOrbit& o = r.orbit;
        o.initial_state = cur.vars.states.front();
        o.period = cur.vars.period();
        o.jacobi = jacobi_constant(cur.vars.mu, o.initial_state);
        o.family = "refined";
        try {
            o.stability_index = stability_index(cur.vars.mu, o, config);
        } catch (const Error& e) {
            r.converged = false;
            r.diagnostic = std::string("stability index: ") + e.what();
        }
    }
    return r;
}

RefinementResult refine(const MassRatio& mu, const MatrixXd& traj, const RefineOptions& options,
                        const IntegratorConfig& config) {
    options.validate();
    ShootingVariables seed;
    try {
        seed = seed_from_trajectory(mu, traj, options.node_fraction);
        seed.validate();
    } catch (const Error& e) {
        RefinementResult r;
        r.diagnostic = std::string("seed: ") + e.what();
        return r;
    }
    return refine(seed, options, config);
}

PhysicalError physical_error(const MassRatio& mu, const MatrixXd& traj,
                             const IntegratorConfig& config) {
    if (traj.rows() != 7) throw ShapeError("trajectory must have 7 rows (state + time)");
    if (traj.cols() < 2) throw InvalidArgument("physical_error needs at least 2 nodes");
    PhysicalError out;
    double sum = 0.0;
    for (Eigen::Index i = 0; i + 1 < traj.cols(); ++i) {
        const StateVector x = traj.col(i).head<6>();
        const StateVector next = traj.col(i + 1).head<6>();
        const double dt = traj(6, i + 1) - traj(6, i);
        try {
            sum += (propagate(mu, x, dt, config) - next).norm();
            ++out.segments;
        } catch (const Error&) {
            ++out.failed_segments;
        }
    }
    out.mean = out.segments > 0 ? sum / out.segments : std::nan("");
    return out;
}

std::string format_refine_report(const std::vector<RefineReportRow>& rows) {
    std::ostringstream out;
    out << "orbit_index,converged,iterations,final_norm\n";
    for (const auto& r : rows) {
        out << r.orbit_index << ',' << (r.converged ? 1 : 0) << ',' << r.iterations << ','
            << text::format_double(r.final_norm) << '\n';
    }
    return out.str();
}

}  // namespace orbitvae
