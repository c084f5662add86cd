#include "orbitvae/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "orbitvae/dataset.hpp"
#include "orbitvae/errors.hpp"
#include "orbitvae/text.hpp"
#include "orbitvae/vae.hpp"

namespace orbitvae {

using Eigen::MatrixXd;
using Eigen::VectorXd;

LatentMap latent_map(const VaeModel& model, const OrbitTensor& tensor, const Catalog& catalog) {
    if (!tensor.normalized) throw InvalidArgument("latent_map: tensor must be normalized");
    if (static_cast<int>(tensor.n_nodes()) != model.arch.n_nodes) {
        throw ShapeError("latent_map: tensor has " + std::to_string(tensor.n_nodes()) +
                         " nodes, model expects " + std::to_string(model.arch.n_nodes));
    }
    if (catalog.orbits.size() != tensor.num_orbits()) {
        throw ShapeError("latent_map: catalog has " + std::to_string(catalog.orbits.size()) +
                         " orbits, tensor has " + std::to_string(tensor.num_orbits()));
    }
    const auto n = tensor.num_orbits();
    LatentMap map;
    map.points.resize(static_cast<Eigen::Index>(n), model.arch.latent_dim);
    constexpr std::size_t kChunk = 64;
    for (std::size_t start = 0; start < n; start += kChunk) {
        std::vector<Sequence> batch;
        for (std::size_t i = start; i < std::min(n, start + kChunk); ++i) {
            batch.push_back(sequence_of(tensor, i));
        }
        const auto encoded = encode_batch(model, batch);
        for (std::size_t j = 0; j < encoded.size(); ++j) {
            map.points.row(static_cast<Eigen::Index>(start + j)) = encoded[j].mean.transpose();
        }
    }
    for (const auto& o : catalog.orbits) {
        map.labels.push_back(o.family);
        map.features.push_back({o.jacobi, o.period, o.stability_index});
    }
    return map;
}

std::string format_latent_csv(const LatentMap& map) {
    std::ostringstream out;
    out << "family";
    for (Eigen::Index d = 0; d < map.points.cols(); ++d) out << ",z" << d;
    out << ",jacobi,period,stability\n";
    for (Eigen::Index i = 0; i < map.points.rows(); ++i) {
        const auto ui = static_cast<std::size_t>(i);
        out << map.labels[ui];
        for (Eigen::Index d = 0; d < map.points.cols(); ++d) {
            out << ',' << text::format_double(map.points(i, d));
        }
        const auto& f = map.features[ui];
        out << ',' << text::format_double(f.jacobi) << ',' << text::format_double(f.period) << ','
            << text::format_double(f.stability) << '\n';
    }
    return out.str();
}

LatentMap parse_latent_csv(const std::string& content) {
    const auto rows = text::lines(content);
    if (rows.empty()) throw FormatError("latent CSV is empty");
    const auto header = text::split(rows[0], ',');
    if (header.size() < 5 || header[0] != "family" || header[header.size() - 3] != "jacobi" ||
        header[header.size() - 2] != "period" || header.back() != "stability") {
        throw FormatError("line 1: expected latent CSV header family,z0,...,jacobi,period,stability");
    }
    const std::size_t dims = header.size() - 4;
    std::vector<std::vector<double>> coords;
    LatentMap map;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].empty()) continue;
        const std::string where = "line " + std::to_string(i + 1);
        const auto f = text::split(rows[i], ',');
        if (f.size() != header.size()) {
            throw FormatError(where + ": expected " + std::to_string(header.size()) + " fields");
        }
        map.labels.emplace_back(f[0]);
        std::vector<double> z;
        for (std::size_t d = 0; d < dims; ++d) z.push_back(text::parse_double(f[1 + d], where));
        coords.push_back(std::move(z));
        map.features.push_back({text::parse_double(f[dims + 1], where),
                                text::parse_double(f[dims + 2], where),
                                text::parse_double(f[dims + 3], where)});
    }
    map.points.resize(static_cast<Eigen::Index>(coords.size()), static_cast<Eigen::Index>(dims));
    for (std::size_t i = 0; i < coords.size(); ++i) {
        for (std::size_t d = 0; d < dims; ++d) {
            map.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = coords[i][d];
        }
    }
    return map;
}

// ---------------------------------------------------------------------------
// Gaussian mixture

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct LogDensity {
    Eigen::LLT<MatrixXd> chol;
    double log_norm = 0.0;  // -d/2 log 2pi - 1/2 log det
};

LogDensity factor(const MatrixXd& cov) {
    LogDensity out{Eigen::LLT<MatrixXd>(cov), 0.0};
    if (out.chol.info() != Eigen::Success) throw NumericError("GMM covariance is not positive definite");
    const MatrixXd L = out.chol.matrixL();
    const double log_det = 2.0 * L.diagonal().array().log().sum();
    out.log_norm = -0.5 * (static_cast<double>(cov.rows()) * kLog2Pi + log_det);
    return out;
}

// n x k matrix of log(weight_j N(x_i | mean_j, cov_j)).
MatrixXd weighted_log_densities(const GmmModel& model, const MatrixXd& points) {
    const int k = model.components();
    MatrixXd out(points.rows(), k);
    for (int j = 0; j < k; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        const LogDensity ld = factor(model.covariances[uj]);
        const MatrixXd centered = (points.rowwise() - model.means[uj].transpose()).transpose();
        const MatrixXd solved = ld.chol.matrixL().solve(centered);
        const VectorXd maha = solved.colwise().squaredNorm().transpose();
        out.col(j) = (std::log(model.weights[j]) + ld.log_norm - 0.5 * maha.array()).matrix();
    }
    return out;
}

// Row-wise log-sum-exp; fills `resp` with normalized posteriors.
double e_step(const GmmModel& model, const MatrixXd& points, MatrixXd& resp) {
    resp = weighted_log_densities(model, points);
    double total = 0.0;
    for (Eigen::Index i = 0; i < resp.rows(); ++i) {
        const double m = resp.row(i).maxCoeff();
        resp.row(i) = (resp.row(i).array() - m).exp().matrix();
        const double s = resp.row(i).sum();
        resp.row(i) /= s;
        total += m + std::log(s);
    }
    return total;
}

void m_step(GmmModel& model, const MatrixXd& points, const MatrixXd& resp, double reg) {
    const auto n = static_cast<double>(points.rows());
    const auto d = points.cols();
    for (int j = 0; j < model.components(); ++j) {
        const auto uj = static_cast<std::size_t>(j);
        const double nk = resp.col(j).sum();
        MatrixXd cov = reg * MatrixXd::Identity(d, d);
        if (nk > 0.0) {
            const VectorXd mean = (points.transpose() * resp.col(j)) / nk;
            const MatrixXd centered = points.rowwise() - mean.transpose();
            cov += (centered.transpose() * resp.col(j).asDiagonal() * centered) / nk;
            model.means[uj] = mean;
        }
        model.covariances[uj] = 0.5 * (cov + cov.transpose());
        model.weights[j] = nk / n;
    }
}

std::vector<VectorXd> kmeans_pp(const MatrixXd& points, int k, std::mt19937_64& rng) {
    const auto n = points.rows();
    std::vector<VectorXd> centers;
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    centers.push_back(points.row(first(rng)).transpose());
    VectorXd d2 = (points.rowwise() - centers.back().transpose()).rowwise().squaredNorm();
    while (static_cast<int>(centers.size()) < k) {
        std::discrete_distribution<Eigen::Index> pick(d2.data(), d2.data() + d2.size());
        centers.push_back(points.row(pick(rng)).transpose());
        d2 = d2.cwiseMin((points.rowwise() - centers.back().transpose()).rowwise().squaredNorm());
    }
    return centers;
}

GmmModel fit_once(const MatrixXd& points, int k, std::mt19937_64& rng, const GmmOptions& opt) {
    const auto d = points.cols();
    GmmModel model;
    model.means = kmeans_pp(points, k, rng);
    // Start from hard nearest-center assignments.
    MatrixXd resp = MatrixXd::Zero(points.rows(), k);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int j = 0; j < k; ++j) {
            const double dist = (points.row(i).transpose() - model.means[static_cast<std::size_t>(j)]).squaredNorm();
            if (dist < best_d) {
                best_d = dist;
                best = j;
            }
        }
        resp(i, best) = 1.0;
    }
    model.weights = VectorXd::Zero(k);
    model.covariances.assign(static_cast<std::size_t>(k), MatrixXd::Identity(d, d));
    m_step(model, points, resp, opt.reg);
    // A center that captured no points keeps its seed location with a global spread.
    for (int j = 0; j < k; ++j) {
        if (model.weights[j] == 0.0) {
            const MatrixXd centered = points.rowwise() - points.colwise().mean();
            model.covariances[static_cast<std::size_t>(j)] =
                centered.transpose() * centered / static_cast<double>(points.rows()) +
                opt.reg * MatrixXd::Identity(d, d);
            model.weights[j] = 1.0 / static_cast<double>(points.rows());
        }
    }
    model.weights /= model.weights.sum();

    for (int it = 0; it < opt.max_iterations; ++it) {
        const double ll = e_step(model, points, resp);
        if (!std::isfinite(ll)) throw NumericError("GMM log-likelihood became non-finite");
        model.log_likelihood.push_back(ll);
        const auto h = model.log_likelihood.size();
        if (h >= 2 && model.log_likelihood[h - 1] - model.log_likelihood[h - 2] < opt.tol) break;
        m_step(model, points, resp, opt.reg);
    }
    return model;
}

}  // namespace

GmmModel fit_gmm(const MatrixXd& points, int k, std::uint64_t seed, const GmmOptions& options) {
    if (k < 1) throw InvalidArgument("fit_gmm: k must be >= 1");
    if (options.max_iterations < 1 || options.restarts < 1) {
        throw InvalidArgument("fit_gmm: max_iterations and restarts must be >= 1");
    }
    if (!(options.reg > 0.0)) throw InvalidArgument("fit_gmm: reg must be > 0");
    if (points.rows() == 0 || points.cols() == 0) throw InvalidArgument("fit_gmm: no points");
    if (!points.allFinite()) throw InvalidArgument("fit_gmm: non-finite points");
    std::set<std::vector<double>> distinct;
    for (Eigen::Index i = 0; i < points.rows() && static_cast<int>(distinct.size()) < k; ++i) {
        std::vector<double> row(static_cast<std::size_t>(points.cols()));
        for (Eigen::Index d = 0; d < points.cols(); ++d) row[static_cast<std::size_t>(d)] = points(i, d);
        distinct.insert(std::move(row));
    }
    if (static_cast<int>(distinct.size()) < k) {
        throw InvalidArgument("fit_gmm: need at least k = " + std::to_string(k) + " distinct points");
    }

    std::mt19937_64 rng(seed);
    GmmModel best;
    for (int r = 0; r < options.restarts; ++r) {
        GmmModel m = fit_once(points, k, rng, options);
        if (r == 0 || m.log_likelihood.back() > best.log_likelihood.back()) best = std::move(m);
    }
    return best;
}

MatrixXd responsibilities(const GmmModel& model, const MatrixXd& points) {
    MatrixXd resp;
    e_step(model, points, resp);
    return resp;
}

std::vector<int> assign(const GmmModel& model, const MatrixXd& points) {
    const MatrixXd lw = weighted_log_densities(model, points);
    std::vector<int> out(static_cast<std::size_t>(points.rows()));
    for (Eigen::Index i = 0; i < lw.rows(); ++i) {
        Eigen::Index j = 0;
        lw.row(i).maxCoeff(&j);
        out[static_cast<std::size_t>(i)] = static_cast<int>(j);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scores

std::vector<int> encode_labels(const std::vector<std::string>& labels) {
    std::map<std::string, int> ids;
    std::vector<int> out;
    out.reserve(labels.size());
    for (const auto& l : labels) {
        const auto [it, inserted] = ids.try_emplace(l, static_cast<int>(ids.size()));
        out.push_back(it->second);
    }
    return out;
}

namespace {

// Contingency counts with dense row/column ids.
MatrixXd contingency(const std::vector<int>& rows, const std::vector<int>& cols) {
    if (rows.size() != cols.size()) {
        throw InvalidArgument("label sequences differ in length (" + std::to_string(rows.size()) +
                              " vs " + std::to_string(cols.size()) + ")");
    }
    std::map<int, int> r_id, c_id;
    for (int v : rows) r_id.try_emplace(v, static_cast<int>(r_id.size()));
    for (int v : cols) c_id.try_emplace(v, static_cast<int>(c_id.size()));
    MatrixXd m = MatrixXd::Zero(static_cast<Eigen::Index>(r_id.size()), static_cast<Eigen::Index>(c_id.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) m(r_id[rows[i]], c_id[cols[i]]) += 1.0;
    return m;
}

double entropy(const VectorXd& counts, double n) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < counts.size(); ++i) {
        if (counts[i] > 0.0) h -= counts[i] / n * std::log(counts[i] / n);
    }
    return h;
}

}  // namespace

double nmi(const std::vector<int>& a, const std::vector<int>& b) {
    const MatrixXd c = contingency(a, b);
    if (a.empty()) return 0.0;
    const double n = static_cast<double>(a.size());
    const VectorXd ra = c.rowwise().sum();
    const VectorXd cb = c.colwise().sum().transpose();
    const double ha = entropy(ra, n);
    const double hb = entropy(cb, n);
    if (ha == 0.0 && hb == 0.0) return 0.0;
    double mi = 0.0;
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
        for (Eigen::Index j = 0; j < c.cols(); ++j) {
            if (c(i, j) > 0.0) mi += c(i, j) / n * std::log(c(i, j) * n / (ra[i] * cb[j]));
        }
    }
    return std::clamp(mi / (0.5 * (ha + hb)), 0.0, 1.0);
}

std::vector<int> hungarian_max(const MatrixXd& weights) {
    const auto rows = static_cast<int>(weights.rows());
    const auto cols = static_cast<int>(weights.cols());
    if (rows == 0 || cols == 0) return std::vector<int>(static_cast<std::size_t>(rows), -1);
    if (rows > cols) {
        const std::vector<int> t = hungarian_max(weights.transpose());
        std::vector<int> out(static_cast<std::size_t>(rows), -1);
        for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(t[static_cast<std::size_t>(c)])] = c;
        return out;
    }
    // Shortest augmenting paths with potentials on cost = -weight, rows <= cols, 1-based.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(rows) + 1, 0.0), v(static_cast<std::size_t>(cols) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(cols) + 1, 0), way(static_cast<std::size_t>(cols) + 1, 0);
    for (int i = 1; i <= rows; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(cols) + 1, inf);
        std::vector<bool> used(static_cast<std::size_t>(cols) + 1, false);
        do {
            used[static_cast<std::size_t>(j0)] = true;
            const int i0 = p[static_cast<std::size_t>(j0)];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= cols; ++j) {
                const auto uj = static_cast<std::size_t>(j);
                if (used[uj]) continue;
                const double cur = -weights(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[uj];
                if (cur < minv[uj]) {
                    minv[uj] = cur;
                    way[uj] = j0;
                }
                if (minv[uj] < delta) {
                    delta = minv[uj];
                    j1 = j;
                }
            }
            for (int j = 0; j <= cols; ++j) {
                const auto uj = static_cast<std::size_t>(j);
                if (used[uj]) {
                    u[static_cast<std::size_t>(p[uj])] += delta;
                    v[uj] -= delta;
                } else {
                    minv[uj] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> out(static_cast<std::size_t>(rows), -1);
    for (int j = 1; j <= cols; ++j) {
        if (p[static_cast<std::size_t>(j)] != 0) out[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
    }
    return out;
}

double cluster_accuracy(const std::vector<int>& truth, const std::vector<int>& assignments) {
    const MatrixXd c = contingency(assignments, truth);
    if (truth.empty()) return 0.0;
    const std::vector<int> match = hungarian_max(c);
    double matched = 0.0;
    for (std::size_t r = 0; r < match.size(); ++r) {
        if (match[r] >= 0) matched += c(static_cast<Eigen::Index>(r), match[r]);
    }
    return matched / static_cast<double>(truth.size());
}

ClusterReport cluster_latent(const LatentMap& map, int k, std::uint64_t seed,
                             const GmmOptions& options) {
    ClusterReport r;
    r.k = k;
    r.seed = seed;
    const GmmModel gmm = fit_gmm(map.points, k, seed, options);
    r.assignments = assign(gmm, map.points);
    const std::vector<int> truth = encode_labels(map.labels);
    r.nmi = nmi(truth, r.assignments);
    r.accuracy = cluster_accuracy(truth, r.assignments);
    return r;
}

std::string format_cluster_report(const ClusterReport& report) {
    std::ostringstream out;
    out << "k,seed,nmi,accuracy\n"
        << report.k << ',' << report.seed << ',' << text::format_double(report.nmi) << ','
        << text::format_double(report.accuracy) << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------
// Profiles

std::vector<ProfileBin> axis_feature_profile(const LatentMap& map, int axis, int n_bins) {
    if (map.points.cols() != 2) throw InvalidArgument("axis_feature_profile needs a 2-D latent map");
    if (axis != 0 && axis != 1) throw InvalidArgument("axis must be 0 or 1");
    if (n_bins < 1) throw InvalidArgument("n_bins must be >= 1");
    if (map.features.size() != static_cast<std::size_t>(map.points.rows())) {
        throw ShapeError("latent map has mismatched feature rows");
    }
    const VectorXd x = map.points.col(axis);
    const double lo = x.minCoeff();
    const double hi = x.maxCoeff();
    if (!(hi > lo)) throw InvalidArgument("axis_feature_profile needs at least 2 distinct coordinates");
    const double width = (hi - lo) / n_bins;

    std::vector<ProfileBin> bins(static_cast<std::size_t>(n_bins));
    std::vector<OrbitFeatures> sums(bins.size());
    for (int b = 0; b < n_bins; ++b) {
        bins[static_cast<std::size_t>(b)].lower = lo + b * width;
        bins[static_cast<std::size_t>(b)].upper = b + 1 == n_bins ? hi : lo + (b + 1) * width;
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const int b = std::min(static_cast<int>((x[i] - lo) / width), n_bins - 1);
        const auto ub = static_cast<std::size_t>(b);
        const auto& f = map.features[static_cast<std::size_t>(i)];
        ++bins[ub].count;
        sums[ub].jacobi += f.jacobi;
        sums[ub].period += f.period;
        sums[ub].stability += f.stability;
    }
    for (std::size_t b = 0; b < bins.size(); ++b) {
        const double n = bins[b].count;
        const double nan = std::numeric_limits<double>::quiet_NaN();
        bins[b].mean = bins[b].count == 0
                           ? OrbitFeatures{nan, nan, nan}
                           : OrbitFeatures{sums[b].jacobi / n, sums[b].period / n, sums[b].stability / n};
    }
    return bins;
}

std::string format_profile_csv(const std::vector<ProfileBin>& bins) {
    std::ostringstream out;
    out << "bin,lower,upper,count,jacobi,period,stability\n";
    for (std::size_t b = 0; b < bins.size(); ++b) {
        const auto& p = bins[b];
        auto num = [&](double v) { return p.empty() ? std::string() : text::format_double(v); };
        out << b << ',' << text::format_double(p.lower) << ',' << text::format_double(p.upper) << ','
            << p.count << ',' << num(p.mean.jacobi) << ',' << num(p.mean.period) << ','
            << num(p.mean.stability) << '\n';
    }
    return out.str();
}

}  // namespace orbitvae
