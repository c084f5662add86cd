#include "orbitvae/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include "binary_io.hpp"
#include "orbitvae/errors.hpp"
#include "orbitvae/propagation.hpp"
#include "orbitvae/text.hpp"

namespace orbitvae {

OrbitTensor::OrbitTensor(std::size_t num_orbits, std::size_t n_nodes, MassRatio mu)
    : mu(mu),
      labels(num_orbits),
      num_orbits_(num_orbits),
      n_nodes_(n_nodes),
      data_(num_orbits * kNumChannels * n_nodes, 0.0) {}

StateVector OrbitTensor::state(std::size_t orbit, std::size_t node) const {
    StateVector s;
    for (int c = 0; c < 6; ++c) s[c] = at(orbit, static_cast<std::size_t>(c), node);
    return s;
}

bool NormalizationParams::is_degenerate(int channel) const {
    return std::find(degenerate.begin(), degenerate.end(), channel) != degenerate.end();
}

NormalizationParams identity_params() {
    NormalizationParams p;
    p.min.fill(0.0);
    p.max.fill(1.0);
    return p;
}

OrbitTensor build_tensor(const Catalog& catalog, int n_nodes, const IntegratorConfig& config,
                         unsigned jobs) {
    if (n_nodes < 2) throw InvalidArgument("build_tensor needs n_nodes >= 2");
    if (catalog.orbits.empty()) throw InvalidArgument("build_tensor needs a nonempty catalog");
    const auto n = static_cast<std::size_t>(n_nodes);
    OrbitTensor tensor(catalog.orbits.size(), n, catalog.mu);

    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::size_t failed_index = std::numeric_limits<std::size_t>::max();
    std::string failed_msg;

    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= catalog.orbits.size()) return;
            const auto& orbit = catalog.orbits[i];
            try {
                const Trajectory traj =
                    propagate_trajectory(catalog.mu, orbit.initial_state, orbit.period, n_nodes, config);
                for (std::size_t k = 0; k < n; ++k) {
                    for (int c = 0; c < 6; ++c) {
                        tensor.at(i, static_cast<std::size_t>(c), k) = traj.nodes[k].state[c];
                    }
                    tensor.at(i, kTime, k) = traj.nodes[k].t;
                }
                tensor.labels[i] = orbit.family;
            } catch (const Error& e) {
                std::lock_guard lock(err_mutex);
                if (i < failed_index) {
                    failed_index = i;
                    failed_msg = e.what();
                }
            }
        }
    };

    jobs = std::max(1u, jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failed_index != std::numeric_limits<std::size_t>::max()) {
        throw NumericError("build_tensor: orbit " + std::to_string(failed_index) + ": " + failed_msg);
    }
    return tensor;
}

std::pair<OrbitTensor, NormalizationParams> normalize(const OrbitTensor& tensor) {
    if (tensor.normalized) throw InvalidArgument("normalize: tensor is already normalized");
    if (tensor.num_orbits() == 0) throw InvalidArgument("normalize: empty tensor");
    NormalizationParams params;
    params.min.fill(std::numeric_limits<double>::infinity());
    params.max.fill(-std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < tensor.num_orbits(); ++i) {
        for (std::size_t c = 0; c < kNumChannels; ++c) {
            for (std::size_t k = 0; k < tensor.n_nodes(); ++k) {
                const double v = tensor.at(i, c, k);
                if (!std::isfinite(v)) throw NumericError("normalize: non-finite tensor value");
                params.min[c] = std::min(params.min[c], v);
                params.max[c] = std::max(params.max[c], v);
            }
        }
    }
    for (int c = 0; c < kNumChannels; ++c) {
        if (params.max[c] == params.min[c]) params.degenerate.push_back(c);
    }
    return {apply_normalization(tensor, params), params};
}

OrbitTensor apply_normalization(const OrbitTensor& tensor, const NormalizationParams& params) {
    if (tensor.normalized) return tensor;
    OrbitTensor out = tensor;
    for (std::size_t i = 0; i < tensor.num_orbits(); ++i) {
        for (int c = 0; c < kNumChannels; ++c) {
            const auto uc = static_cast<std::size_t>(c);
            const bool degenerate = params.is_degenerate(c);
            const double span = params.max[uc] - params.min[uc];
            if (!degenerate && !(span > 0.0)) {
                throw InvalidArgument("normalization params: channel " + std::to_string(c) +
                                      " has max <= min but is not marked degenerate");
            }
            for (std::size_t k = 0; k < tensor.n_nodes(); ++k) {
                out.at(i, uc, k) = degenerate ? 0.5 : (tensor.at(i, uc, k) - params.min[uc]) / span;
            }
        }
    }
    out.normalized = true;
    return out;
}

OrbitTensor denormalize(const OrbitTensor& tensor, const NormalizationParams& params) {
    if (!tensor.normalized) throw InvalidArgument("denormalize: tensor is not normalized");
    OrbitTensor out = tensor;
    for (std::size_t i = 0; i < tensor.num_orbits(); ++i) {
        for (int c = 0; c < kNumChannels; ++c) {
            const auto uc = static_cast<std::size_t>(c);
            const bool degenerate = params.is_degenerate(c);
            for (std::size_t k = 0; k < tensor.n_nodes(); ++k) {
                out.at(i, uc, k) =
                    degenerate ? params.min[uc] : std::lerp(params.min[uc], params.max[uc], tensor.at(i, uc, k));
            }
        }
    }
    out.normalized = false;
    return out;
}

// ---------------------------------------------------------------------------
// ORBT1

namespace {
constexpr const char* kTensorMagic = "ORBT1";
}

std::string encode_tensor(const OrbitTensor& tensor, const NormalizationParams& params) {
    if (tensor.labels.size() != tensor.num_orbits()) {
        throw ShapeError("ORBT1: " + std::to_string(tensor.labels.size()) + " labels for " +
                         std::to_string(tensor.num_orbits()) + " orbits");
    }
    nlohmann::ordered_json h;
    h["magic"] = kTensorMagic;
    h["num_orbits"] = tensor.num_orbits();
    h["channels"] = kNumChannels;
    h["n_nodes"] = tensor.n_nodes();
    h["mu"] = tensor.mu.value();
    h["normalized"] = tensor.normalized;
    h["min"] = params.min;
    h["max"] = params.max;
    h["labels"] = tensor.labels;
    h["degenerate"] = params.degenerate;
    std::string out = h.dump();
    out.push_back('\n');
    detail::append_f64_le(out, tensor.values());
    return out;
}

std::pair<OrbitTensor, NormalizationParams> decode_tensor(const std::string& bytes) {
    const auto [h, payload] = detail::split_container(bytes, kTensorMagic);
    try {
        const auto num_orbits = h.at("num_orbits").get<std::size_t>();
        const auto channels = h.at("channels").get<std::size_t>();
        const auto n_nodes = h.at("n_nodes").get<std::size_t>();
        if (channels != kNumChannels) {
            throw FormatError("ORBT1: expected 7 channels, header says " + std::to_string(channels));
        }
        const std::size_t count = num_orbits * channels * n_nodes;
        if (payload.size() < count * 8) {
            throw FormatError("ORBT1: truncated payload (" + std::to_string(payload.size()) +
                              " bytes, expected " + std::to_string(count * 8) + ")");
        }
        if (payload.size() != count * 8) {
            throw FormatError("ORBT1: payload length " + std::to_string(payload.size()) +
                              " does not match header (" + std::to_string(count * 8) + ")");
        }
        const double mu = h.at("mu").get<double>();
        if (!(mu > 0.0 && mu <= 0.5)) throw FormatError("ORBT1: mu out of range");
        OrbitTensor tensor(num_orbits, n_nodes, MassRatio(mu));
        tensor.normalized = h.at("normalized").get<bool>();
        tensor.labels = h.at("labels").get<std::vector<std::string>>();
        if (tensor.labels.size() != num_orbits) throw FormatError("ORBT1: label count mismatch");
        NormalizationParams params;
        params.min = h.at("min").get<std::array<double, kNumChannels>>();
        params.max = h.at("max").get<std::array<double, kNumChannels>>();
        params.degenerate = h.at("degenerate").get<std::vector<int>>();
        tensor.values() = detail::read_f64_le(payload.data(), count);
        for (double v : tensor.values()) {
            if (!std::isfinite(v)) throw FormatError("ORBT1: non-finite payload value");
        }
        return {std::move(tensor), std::move(params)};
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("ORBT1: bad header field: ") + e.what());
    }
}

void save_tensor(const OrbitTensor& tensor, const NormalizationParams& params,
                 const std::filesystem::path& path) {
    text::write_file(path, encode_tensor(tensor, params));
}

std::pair<OrbitTensor, NormalizationParams> load_tensor(const std::filesystem::path& path) {
    try {
        return decode_tensor(text::read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace orbitvae
