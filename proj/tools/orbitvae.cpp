// orbitvae command-line front end: catalog -> tensor -> model -> samples -> refined orbits.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "orbitvae/analysis.hpp"
#include "orbitvae/dataset.hpp"
#include "orbitvae/dynamics.hpp"
#include "orbitvae/errors.hpp"
#include "orbitvae/families.hpp"
#include "orbitvae/propagation.hpp"
#include "orbitvae/refinement.hpp"
#include "orbitvae/text.hpp"
#include "orbitvae/vae.hpp"

using namespace orbitvae;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kBadArgs = 2, kIo = 3, kNumeric = 4 };

// Runs fn(i) for i in [0, n) on `jobs` threads. Results must be written by index. The
// exception of the lowest failing index is rethrown, so failures are scheduling-independent.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex mutex;
    std::size_t failed = n;
    std::exception_ptr error;
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(mutex);
                    if (i < failed) {
                        failed = i;
                        error = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

void emit(const std::string& path, const std::string& contents) {
    if (path.empty() || path == "-") {
        std::cout << contents;
    } else {
        text::write_file(path, contents);
    }
}

// Physical 7 x N trajectories of a (possibly normalized) tensor.
std::vector<Eigen::MatrixXd> physical_sequences(const OrbitTensor& tensor,
                                                const NormalizationParams& params) {
    const OrbitTensor phys = tensor.normalized ? denormalize(tensor, params) : tensor;
    std::vector<Eigen::MatrixXd> out;
    for (std::size_t i = 0; i < phys.num_orbits(); ++i) out.push_back(sequence_of(phys, i));
    return out;
}

// ---------------------------------------------------------------------------
// SVG

const std::vector<std::string> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

struct Frame {
    double x0, x1, y0, y1;
    static constexpr double kSize = 640.0;
    static constexpr double kMargin = 40.0;

    static Frame around(double x0, double x1, double y0, double y1, bool equal_aspect) {
        double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
        double hx = std::max(0.5 * (x1 - x0), 1e-9) * 1.05, hy = std::max(0.5 * (y1 - y0), 1e-9) * 1.05;
        if (equal_aspect) hx = hy = std::max(hx, hy);
        return {cx - hx, cx + hx, cy - hy, cy + hy};
    }
    double sx(double x) const { return kMargin + (x - x0) / (x1 - x0) * (kSize - 2 * kMargin); }
    double sy(double y) const { return kSize - kMargin - (y - y0) / (y1 - y0) * (kSize - 2 * kMargin); }
};

std::string svg_open(const Frame& f, const std::string& title, const std::string& xl,
                     const std::string& yl) {
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << Frame::kSize << "\" height=\""
      << Frame::kSize << "\" viewBox=\"0 0 " << Frame::kSize << ' ' << Frame::kSize << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<rect x=\"" << Frame::kMargin << "\" y=\"" << Frame::kMargin << "\" width=\""
      << Frame::kSize - 2 * Frame::kMargin << "\" height=\"" << Frame::kSize - 2 * Frame::kMargin
      << "\" fill=\"none\" stroke=\"black\"/>\n"
      << "<text x=\"" << Frame::kSize / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
      << title << "</text>\n"
      << "<text x=\"" << Frame::kSize / 2 << "\" y=\"" << Frame::kSize - 10
      << "\" text-anchor=\"middle\" font-size=\"12\">" << xl << " [" << f.x0 << ", " << f.x1
      << "]</text>\n"
      << "<text x=\"14\" y=\"" << Frame::kSize / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 "
      << Frame::kSize / 2 << ")\" text-anchor=\"middle\">" << yl << " [" << f.y0 << ", " << f.y1
      << "]</text>\n";
    return s.str();
}

std::string legend(const std::vector<std::string>& names) {
    std::ostringstream s;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const double y = Frame::kMargin + 16 + 16 * static_cast<double>(i);
        s << "<circle cx=\"" << Frame::kMargin + 12 << "\" cy=\"" << y - 4 << "\" r=\"4\" fill=\""
          << kPalette[i % kPalette.size()] << "\"/>\n"
          << "<text x=\"" << Frame::kMargin + 22 << "\" y=\"" << y << "\" font-size=\"11\">"
          << names[i] << "</text>\n";
    }
    return s.str();
}

std::vector<std::string> distinct_in_order(const std::vector<std::string>& labels) {
    std::vector<std::string> out;
    for (const auto& l : labels) {
        if (std::find(out.begin(), out.end(), l) == out.end()) out.push_back(l);
    }
    return out;
}

std::string latent_svg(const LatentMap& map) {
    if (map.points.cols() < 2) throw InvalidArgument("latent plot needs at least 2 latent dimensions");
    if (map.points.rows() == 0) throw InvalidArgument("latent map is empty");
    const auto x = map.points.col(0), y = map.points.col(1);
    const Frame f = Frame::around(x.minCoeff(), x.maxCoeff(), y.minCoeff(), y.maxCoeff(), false);
    const auto names = distinct_in_order(map.labels);
    const auto ids = encode_labels(map.labels);
    std::ostringstream s;
    s << svg_open(f, "latent means", "z0", "z1");
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        s << "<circle cx=\"" << f.sx(x[i]) << "\" cy=\"" << f.sy(y[i]) << "\" r=\"2.5\" fill=\""
          << kPalette[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)]) % kPalette.size()]
          << "\" fill-opacity=\"0.7\"/>\n";
    }
    s << legend(names) << "</svg>\n";
    return s.str();
}

std::string orbits_svg(const Catalog& catalog, unsigned jobs) {
    if (catalog.orbits.empty()) throw InvalidArgument("orbit catalog is empty");
    std::vector<std::vector<TrajectoryNode>> traces(catalog.orbits.size());
    parallel_for(traces.size(), jobs, [&](std::size_t i) {
        const auto& o = catalog.orbits[i];
        traces[i] = propagate_trajectory(catalog.mu, o.initial_state, o.period, 400).nodes;
    });
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& t : traces) {
        for (const auto& n : t) {
            x0 = std::min(x0, n.state[0]);
            x1 = std::max(x1, n.state[0]);
            y0 = std::min(y0, n.state[1]);
            y1 = std::max(y1, n.state[1]);
        }
    }
    const Frame f = Frame::around(x0, x1, y0, y1, true);
    std::vector<std::string> labels;
    for (const auto& o : catalog.orbits) labels.push_back(o.family);
    const auto names = distinct_in_order(labels);
    const auto ids = encode_labels(labels);
    std::ostringstream s;
    s << svg_open(f, "orbits (x-y projection)", "x", "y");
    for (std::size_t i = 0; i < traces.size(); ++i) {
        s << "<polyline fill=\"none\" stroke-width=\"0.8\" stroke=\""
          << kPalette[static_cast<std::size_t>(ids[i]) % kPalette.size()] << "\" points=\"";
        for (const auto& n : traces[i]) s << f.sx(n.state[0]) << ',' << f.sy(n.state[1]) << ' ';
        s << "\"/>\n";
    }
    const double primaries[2] = {catalog.mu.primary1_x(), catalog.mu.primary2_x()};
    for (double px : primaries) {
        if (px >= f.x0 && px <= f.x1 && 0.0 >= f.y0 && 0.0 <= f.y1) {
            s << "<circle cx=\"" << f.sx(px) << "\" cy=\"" << f.sy(0.0) << "\" r=\"4\" fill=\"black\"/>\n";
        }
    }
    s << legend(names) << "</svg>\n";
    return s.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Periodic-orbit catalogs, a convolutional VAE over orbit tensors, and "
                 "multiple-shooting refinement of generated orbits (Earth-Moon CR3BP)."};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    unsigned jobs = 1;
    auto add_jobs = [&](CLI::App* sub) {
        sub->add_option("--jobs", jobs, "Worker threads; output order does not depend on it")
            ->check(CLI::Range(1u, 1024u));
    };

    std::function<void()> action;

    // lagrange
    double lag_mu = kEarthMoonMu;
    auto* lag = app.add_subcommand("lagrange", "Print the five Lagrange points as CSV");
    lag->add_option("--mu", lag_mu, "Mass ratio in (0, 0.5]");
    lag->callback([&] {
        action = [&] {
            const auto pts = lagrange_points(MassRatio(lag_mu));
            std::ostringstream out;
            out << "point,x,y,z\n";
            for (const auto& p : pts) {
                out << to_string(p.label) << ',' << text::format_double(p.position[0]) << ','
                    << text::format_double(p.position[1]) << ',' << text::format_double(p.position[2]) << '\n';
            }
            std::cout << out.str();
        };
    });

    // family
    double fam_mu = kEarthMoonMu;
    std::vector<std::string> fam_points{"L1", "L2"};
    int fam_count = 250;
    double fam_step = kDefaultFamilyStep;
    std::string fam_out;
    auto* fam = app.add_subcommand("family", "Planar Lyapunov families by natural-parameter continuation");
    fam->add_option("--mu", fam_mu, "Mass ratio in (0, 0.5]");
    fam->add_option("--libration", fam_points, "Libration point, L1 or L2 (repeatable)");
    fam->add_option("--count", fam_count, "Members per family")->check(CLI::PositiveNumber);
    fam->add_option("--step", fam_step, "Continuation step in x0")->check(CLI::PositiveNumber);
    fam->add_option("--out", fam_out, "Catalog CSV to write")->required();
    fam->callback([&] {
        action = [&] {
            const MassRatio mu(fam_mu);
            Catalog catalog{mu, {}};
            for (const auto& name : fam_points) {
                const ContinuationResult r = continue_family(mu, parse_libration(name), fam_count, fam_step);
                if (!r.complete) throw NumericError(r.diagnostic);
                catalog.orbits.insert(catalog.orbits.end(), r.catalog.orbits.begin(), r.catalog.orbits.end());
                std::cerr << name << ": " << r.catalog.orbits.size() << " orbits\n";
            }
            write_catalog(catalog, fam_out);
        };
    });

    // ingest
    std::vector<std::string> ing_catalogs;
    int ing_nodes = 100;
    std::string ing_out;
    auto* ing = app.add_subcommand("ingest", "Sample catalog orbits into a normalized ORBT1 tensor");
    ing->add_option("--catalog", ing_catalogs, "Catalog CSV (repeatable; orbits are concatenated)")->required();
    ing->add_option("--nodes", ing_nodes, "Nodes per orbit, endpoints included")->check(CLI::Range(2, 100000));
    ing->add_option("--out", ing_out, "ORBT1 tensor to write")->required();
    add_jobs(ing);
    ing->callback([&] {
        action = [&] {
            Catalog all;
            for (std::size_t i = 0; i < ing_catalogs.size(); ++i) {
                Catalog c = read_catalog(ing_catalogs[i]);
                if (i == 0) {
                    all.mu = c.mu;
                } else if (c.mu.value() != all.mu.value()) {
                    throw InvalidArgument(ing_catalogs[i] + ": mass ratio differs from " + ing_catalogs[0]);
                }
                all.orbits.insert(all.orbits.end(), c.orbits.begin(), c.orbits.end());
            }
            const OrbitTensor raw = build_tensor(all, ing_nodes, {}, jobs);
            const auto [tensor, params] = normalize(raw);
            save_tensor(tensor, params, ing_out);
            std::cerr << "ingested " << tensor.num_orbits() << " orbits x " << ing_nodes << " nodes\n";
        };
    });

    // train
    std::string tr_data, tr_out;
    Architecture tr_arch;
    TrainConfig tr_cfg;
    std::uint64_t tr_init_seed = 0;
    auto* tr = app.add_subcommand("train", "Train the VAE on a normalized tensor (prints per-epoch losses)");
    tr->add_option("--data", tr_data, "Normalized ORBT1 tensor")->required();
    tr->add_option("--latent", tr_arch.latent_dim, "Latent dimension")->check(CLI::PositiveNumber);
    tr->add_option("--epochs", tr_cfg.epochs, "Training epochs")->check(CLI::PositiveNumber);
    tr->add_option("--batch-size", tr_cfg.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
    tr->add_option("--lr", tr_cfg.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
    tr->add_option("--dropout", tr_arch.dropout_rate, "Dropout rate")->check(CLI::Range(0.0, 0.99));
    tr->add_option("--seed", tr_cfg.seed, "Seed for shuffling, dropout and reparameterization noise");
    tr->add_option("--init-seed", tr_init_seed, "Seed for weight initialization");
    tr->add_option("--out", tr_out, "OVAE1 model to write")->required();
    tr->callback([&] {
        action = [&] {
            const auto [tensor, params] = load_tensor(tr_data);
            tr_arch.n_nodes = static_cast<int>(tensor.n_nodes());
            VaeModel model = VaeModel::initialize(tr_arch, tr_init_seed);
            std::cout << "epoch,total,recon,kl\n";
            train(model, tensor, tr_cfg, [](const EpochLoss& e) {
                std::cout << e.epoch << ',' << text::format_double(e.loss.total) << ','
                          << text::format_double(e.loss.recon) << ',' << text::format_double(e.loss.kl)
                          << std::endl;
            });
            save_model(model, tr_out);
        };
    });

    // generate
    std::string gen_model, gen_out;
    int gen_count = 100;
    std::uint64_t gen_seed = 0;
    double gen_mu = kEarthMoonMu;
    auto* gen = app.add_subcommand("generate", "Decode standard-normal latent draws into a normalized tensor");
    gen->add_option("--model", gen_model, "OVAE1 model")->required();
    gen->add_option("--count", gen_count, "Number of samples")->check(CLI::NonNegativeNumber);
    gen->add_option("--seed", gen_seed, "Latent sampling seed");
    gen->add_option("--mu", gen_mu, "Mass ratio recorded in the output header");
    gen->add_option("--out", gen_out, "ORBT1 tensor to write (identity params, normalized)")->required();
    gen->callback([&] {
        action = [&] {
            const VaeModel model = load_model(gen_model);
            const auto seqs = generate(model, gen_count, gen_seed);
            OrbitTensor t(seqs.size(), static_cast<std::size_t>(model.arch.n_nodes), MassRatio(gen_mu));
            t.normalized = true;
            for (std::size_t i = 0; i < seqs.size(); ++i) {
                t.labels[i] = "generated";
                for (std::size_t c = 0; c < OrbitTensor::channels(); ++c) {
                    for (std::size_t k = 0; k < t.n_nodes(); ++k) {
                        t.at(i, c, k) = seqs[i](static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k));
                    }
                }
            }
            save_tensor(t, identity_params(), gen_out);
        };
    });

    // refine
    std::string ref_in, ref_params, ref_out, ref_report;
    RefineOptions ref_opt;
    auto* ref = app.add_subcommand("refine", "Multiple-shooting correction of generated orbits");
    ref->add_option("--in", ref_in, "Generated ORBT1 tensor")->required();
    ref->add_option("--params", ref_params, "Training tensor whose header holds the normalization")->required();
    ref->add_option("--fraction", ref_opt.node_fraction, "Fraction of nodes used as shooting nodes")
        ->check(CLI::Range(0.0, 1.0));
    ref->add_option("--max-iters", ref_opt.max_iterations, "Newton iteration limit")->check(CLI::PositiveNumber);
    ref->add_option("--tol", ref_opt.tol, "Convergence threshold on ||F||_2")->check(CLI::PositiveNumber);
    ref->add_flag("--damping", ref_opt.damping, "Halve steps (up to 5 times) that increase ||F||");
    ref->add_option("--out", ref_out, "Catalog CSV of converged orbits")->required();
    ref->add_option("--report", ref_report, "Per-orbit CSV: orbit_index,converged,iterations,final_norm")->required();
    add_jobs(ref);
    ref->callback([&] {
        action = [&] {
            ref_opt.validate();
            const auto [gen_t, gen_p] = load_tensor(ref_in);
            const auto [train_t, train_p] = load_tensor(ref_params);
            const auto seqs = physical_sequences(gen_t, train_p);
            std::vector<RefinementResult> results(seqs.size());
            parallel_for(seqs.size(), jobs, [&](std::size_t i) {
                results[i] = refine(train_t.mu, seqs[i], ref_opt);
            });
            Catalog refined{train_t.mu, {}};
            std::vector<RefineReportRow> rows;
            int converged = 0;
            long long iterations = 0;
            for (std::size_t i = 0; i < results.size(); ++i) {
                const auto& r = results[i];
                rows.push_back({static_cast<int>(i), r.converged, r.iterations, r.final_norm});
                if (r.converged) {
                    ++converged;
                    iterations += r.iterations;
                    refined.orbits.push_back(r.orbit);
                }
            }
            write_catalog(refined, ref_out);
            text::write_file(ref_report, format_refine_report(rows));
            std::cout << "converged " << converged << " of " << results.size();
            if (!results.empty()) {
                std::cout << " (ratio " << static_cast<double>(converged) / static_cast<double>(results.size()) << ")";
            }
            if (converged > 0) {
                std::cout << ", mean iterations " << static_cast<double>(iterations) / converged;
            }
            std::cout << '\n';
        };
    });

    // check
    std::string chk_in, chk_params, chk_out;
    auto* chk = app.add_subcommand("check", "Per-orbit physical defect of a tensor (CSV)");
    chk->add_option("--in", chk_in, "ORBT1 tensor to check")->required();
    chk->add_option("--params", chk_params, "Training tensor whose header holds the normalization")->required();
    chk->add_option("--out", chk_out, "CSV path ('-' for stdout)");
    add_jobs(chk);
    chk->callback([&] {
        action = [&] {
            const auto [in_t, in_p] = load_tensor(chk_in);
            const auto [train_t, train_p] = load_tensor(chk_params);
            const auto seqs = physical_sequences(in_t, train_p);
            std::vector<PhysicalError> errs(seqs.size());
            parallel_for(seqs.size(), jobs, [&](std::size_t i) { errs[i] = physical_error(train_t.mu, seqs[i]); });
            std::ostringstream out;
            out << "orbit_index,mean_error,segments,failed_segments\n";
            for (std::size_t i = 0; i < errs.size(); ++i) {
                out << i << ',' << text::format_double(errs[i].mean) << ',' << errs[i].segments << ','
                    << errs[i].failed_segments << '\n';
            }
            emit(chk_out, out.str());
        };
    });

    // analyze
    auto* ana = app.add_subcommand("analyze", "Latent-space analysis");
    ana->require_subcommand(1);
    std::string al_model, al_data, al_out, al_profile;
    std::vector<std::string> al_catalogs;
    int al_axis = 0, al_bins = 20;
    auto* al = ana->add_subcommand("latent", "Encode a tensor and write per-orbit latent means");
    al->add_option("--model", al_model, "OVAE1 model")->required();
    al->add_option("--data", al_data, "Normalized ORBT1 tensor")->required();
    al->add_option("--catalog", al_catalogs, "Catalog CSV(s) the tensor was ingested from, same order")->required();
    al->add_option("--out", al_out, "Latent CSV to write")->required();
    al->add_option("--profile", al_profile, "Optional per-bin feature profile CSV");
    al->add_option("--axis", al_axis, "Latent axis for the profile")->check(CLI::Range(0, 1));
    al->add_option("--bins", al_bins, "Profile bins")->check(CLI::PositiveNumber);
    al->callback([&] {
        action = [&] {
            const VaeModel model = load_model(al_model);
            const auto [tensor, params] = load_tensor(al_data);
            Catalog all;
            for (const auto& path : al_catalogs) {
                Catalog c = read_catalog(path);
                all.orbits.insert(all.orbits.end(), c.orbits.begin(), c.orbits.end());
            }
            const LatentMap map = latent_map(model, tensor, all);
            text::write_file(al_out, format_latent_csv(map));
            if (!al_profile.empty()) {
                text::write_file(al_profile, format_profile_csv(axis_feature_profile(map, al_axis, al_bins)));
            }
        };
    });
    std::string ac_latent, ac_out;
    int ac_k = 2;
    std::uint64_t ac_seed = 0;
    GmmOptions ac_opt;
    auto* ac = ana->add_subcommand("cluster", "GMM clustering of a latent CSV; prints k,seed,nmi,accuracy");
    ac->add_option("--latent", ac_latent, "Latent CSV from 'analyze latent'")->required();
    ac->add_option("--k", ac_k, "Mixture components")->check(CLI::PositiveNumber);
    ac->add_option("--seed", ac_seed, "k-means++ seed");
    ac->add_option("--restarts", ac_opt.restarts, "EM restarts (best likelihood kept)")->check(CLI::PositiveNumber);
    ac->add_option("--max-iters", ac_opt.max_iterations, "EM iteration limit")->check(CLI::PositiveNumber);
    ac->add_option("--tol", ac_opt.tol, "EM log-likelihood gain threshold")->check(CLI::PositiveNumber);
    ac->add_option("--reg", ac_opt.reg, "Covariance diagonal regularization")->check(CLI::PositiveNumber);
    ac->add_option("--out", ac_out, "Optional per-point assignment CSV");
    ac->callback([&] {
        action = [&] {
            const LatentMap map = parse_latent_csv(text::read_file(ac_latent));
            const ClusterReport r = cluster_latent(map, ac_k, ac_seed, ac_opt);
            std::cout << format_cluster_report(r);
            if (!ac_out.empty()) {
                std::ostringstream out;
                out << "index,family,cluster\n";
                for (std::size_t i = 0; i < r.assignments.size(); ++i) {
                    out << i << ',' << map.labels[i] << ',' << r.assignments[i] << '\n';
                }
                text::write_file(ac_out, out.str());
            }
        };
    });

    // plot
    std::string pl_latent, pl_orbits, pl_out;
    auto* pl = app.add_subcommand("plot", "Static SVG: latent scatter or orbit x-y traces");
    auto* pl_l = pl->add_option("--latent", pl_latent, "Latent CSV to scatter");
    auto* pl_o = pl->add_option("--orbits", pl_orbits, "Catalog CSV whose orbits are traced");
    pl_l->excludes(pl_o);
    pl->add_option("--out", pl_out, "SVG to write")->required();
    add_jobs(pl);
    pl->callback([&] {
        action = [&] {
            if (pl_latent.empty() == pl_orbits.empty()) {
                throw InvalidArgument("plot needs exactly one of --latent or --orbits");
            }
            const std::string svg = !pl_latent.empty()
                                        ? latent_svg(parse_latent_csv(text::read_file(pl_latent)))
                                        : orbits_svg(read_catalog(pl_orbits), jobs);
            text::write_file(pl_out, svg);
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kBadArgs;
    }

    try {
        if (action) action();
        return kOk;
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kBadArgs;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumeric;
    } catch (const SingularityError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kOther;
    }
}
