#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "orbitvae/dynamics.hpp"
#include "orbitvae/families.hpp"
#include "orbitvae/integrator.hpp"

namespace orbitvae {

/// Channel order of the training tensor.
enum Channel : int { kPosX = 0, kPosY, kPosZ, kVelX, kVelY, kVelZ, kTime, kNumChannels };

/// num_orbits x 7 x n_nodes array stored row-major in (orbit, channel, node) order.
class OrbitTensor {
public:
    OrbitTensor() = default;
    OrbitTensor(std::size_t num_orbits, std::size_t n_nodes, MassRatio mu);

    std::size_t num_orbits() const noexcept { return num_orbits_; }
    std::size_t n_nodes() const noexcept { return n_nodes_; }
    static constexpr std::size_t channels() noexcept { return kNumChannels; }

    double& at(std::size_t orbit, std::size_t channel, std::size_t node) {
        return data_[index(orbit, channel, node)];
    }
    double at(std::size_t orbit, std::size_t channel, std::size_t node) const {
        return data_[index(orbit, channel, node)];
    }

    /// Pointer to the 7 x n_nodes block of one orbit (channel-major).
    double* orbit_data(std::size_t orbit) { return data_.data() + orbit * kNumChannels * n_nodes_; }
    const double* orbit_data(std::size_t orbit) const {
        return data_.data() + orbit * kNumChannels * n_nodes_;
    }

    std::vector<double>& values() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    StateVector state(std::size_t orbit, std::size_t node) const;

    MassRatio mu{kEarthMoonMu};
    std::vector<std::string> labels;
    bool normalized = false;

    friend bool operator==(const OrbitTensor&, const OrbitTensor&) = default;

private:
    std::size_t index(std::size_t orbit, std::size_t channel, std::size_t node) const {
        return (orbit * kNumChannels + channel) * n_nodes_ + node;
    }

    std::size_t num_orbits_ = 0;
    std::size_t n_nodes_ = 0;
    std::vector<double> data_;
};

/// Per-channel global extrema. Degenerate channels (max == min) are normalized to 0.5 and
/// restored to their constant value.
struct NormalizationParams {
    std::array<double, kNumChannels> min{};
    std::array<double, kNumChannels> max{};
    std::vector<int> degenerate;

    bool is_degenerate(int channel) const;

    friend bool operator==(const NormalizationParams&, const NormalizationParams&) = default;
};

/// Identity params (min 0, max 1) used for tensors that are already in model space.
NormalizationParams identity_params();

/// Samples every catalog orbit at n_nodes inclusive-endpoint times over one period.
/// Channel 6 holds the node times. Propagation failures name the orbit index.
OrbitTensor build_tensor(const Catalog& catalog, int n_nodes, const IntegratorConfig& config = {},
                         unsigned jobs = 1);

/// Global per-channel min-max normalization.
std::pair<OrbitTensor, NormalizationParams> normalize(const OrbitTensor& tensor);

/// Applies existing params. An already-normalized tensor is returned unchanged.
OrbitTensor apply_normalization(const OrbitTensor& tensor, const NormalizationParams& params);

/// Exact affine inverse of the normalization.
OrbitTensor denormalize(const OrbitTensor& tensor, const NormalizationParams& params);

/// ORBT1 file: one-line JSON header, '\n', little-endian float64 payload.
std::string encode_tensor(const OrbitTensor& tensor, const NormalizationParams& params);
std::pair<OrbitTensor, NormalizationParams> decode_tensor(const std::string& bytes);
void save_tensor(const OrbitTensor& tensor, const NormalizationParams& params,
                 const std::filesystem::path& path);
std::pair<OrbitTensor, NormalizationParams> load_tensor(const std::filesystem::path& path);

}  // namespace orbitvae
