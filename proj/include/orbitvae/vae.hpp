#pragma once

// Convolutional variational autoencoder over 7 x N orbit sequences.
//
// Encoder: `conv_stages` Conv1D stages (kernel 5, stride 2, "same"-style padding so each
// stage maps L -> ceil(L/2)), each followed by ReLU and dropout; flatten; dense1 (ReLU);
// dense2 (ReLU); two linear heads for the latent mean and log-variance.
//
// Decoder: dense2 (ReLU); dense1 (ReLU); dense to the flattened conv shape (ReLU); then
// `conv_stages` transposed Conv1D stages walking the length chain back up. Transposed stage t
// mirrors encoder stage S-1-t: it uses the same left padding, so a transposed stage
// computes full-length output (L_in - 1) * stride + kernel, drops the first `pad` entries,
// and keeps exactly the mirrored target length (zero-padded on the right if short). All
// transposed stages but the last are followed by ReLU and dropout; the last has a sigmoid
// and emits `channels` channels.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace orbitvae {

class OrbitTensor;

struct Architecture {
    int n_nodes = 100;
    int channels = 7;
    int conv_stages = 5;
    int conv_channels = 64;
    int kernel = 5;
    int stride = 2;
    int dense1 = 512;
    int dense2 = 64;
    int latent_dim = 2;
    double dropout_rate = 0.2;

    void validate() const;
    /// n_nodes followed by the ceil-halved length after each encoder stage.
    std::vector<int> length_chain() const;
    /// Left zero padding of encoder stage s.
    int pad_left(int stage) const;
    int flatten_size() const;

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct ParameterBlock {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
    std::vector<int> shape;
    int fan_in = 0;
    int fan_out = 0;
    bool bias = false;
};

/// Ordered layout of the flat parameter vector.
class ParameterManifest {
public:
    explicit ParameterManifest(const Architecture& arch);

    const std::vector<ParameterBlock>& blocks() const noexcept { return blocks_; }
    std::size_t total() const noexcept { return total_; }
    /// Throws InvalidArgument for unknown names.
    const ParameterBlock& find(const std::string& name) const;

private:
    void add(std::string name, std::vector<int> shape, int fan_in, int fan_out, bool bias);

    std::vector<ParameterBlock> blocks_;
    std::size_t total_ = 0;
};

/// channels x n_nodes sequence.
using Sequence = Eigen::MatrixXd;

struct VaeModel {
    Architecture arch;
    Eigen::VectorXd parameters;
    std::uint64_t seed = 0;

    /// Glorot-uniform weights, zero biases, drawn from `seed`.
    static VaeModel initialize(const Architecture& arch, std::uint64_t seed);

    ParameterManifest manifest() const { return ParameterManifest(arch); }
    /// Throws when the parameter count mismatches the manifest or values are non-finite.
    void validate() const;

    /// Bitwise parameter equality plus identical architecture and seed.
    friend bool operator==(const VaeModel& a, const VaeModel& b);
};

struct LatentGaussian {
    Eigen::VectorXd mean;
    Eigen::VectorXd logvar;
};

/// Dropout multipliers (0 or 1/(1-rate)) per dropout site, laid out like the activations:
/// conv_channels x (batch * length). Encoder sites follow encoder stages 0..S-1; decoder
/// sites follow transposed stages that map to lengths L[S-1]..L[1].
struct DropoutMasks {
    std::vector<Eigen::MatrixXd> encoder;
    std::vector<Eigen::MatrixXd> decoder;
};

/// Fresh Bernoulli masks for a batch.
template <class Rng>
DropoutMasks draw_dropout_masks(const Architecture& arch, int batch, Rng& rng);

struct LossTerms {
    double total = 0.0;
    double recon = 0.0;
    double kl = 0.0;
};

struct LossAndGradient {
    LossTerms loss;
    Eigen::VectorXd gradient;
};

/// Inference-mode encoder (no dropout).
LatentGaussian encode(const VaeModel& model, const Sequence& x);
std::vector<LatentGaussian> encode_batch(const VaeModel& model, const std::vector<Sequence>& xs);

/// z = mean + exp(logvar / 2) * eps.
Eigen::VectorXd reparameterize(const LatentGaussian& g, const Eigen::VectorXd& eps);

/// Inference-mode decoder; outputs lie in (0, 1).
Sequence decode(const VaeModel& model, const Eigen::VectorXd& z);
std::vector<Sequence> decode_batch(const VaeModel& model, const std::vector<Eigen::VectorXd>& zs);

/// -1/2 sum(1 + logvar - mean^2 - exp(logvar)).
double kl_divergence(const LatentGaussian& g);

/// Single-sample ELBO estimate: recon = batch mean of summed squared error, kl = batch mean
/// of kl_divergence. Without masks the network runs in inference mode.
LossTerms elbo_loss(const VaeModel& model, const std::vector<Sequence>& batch,
                    const std::vector<Eigen::VectorXd>& eps, const DropoutMasks* masks = nullptr);

/// Exact gradient of elbo_loss().total with respect to every parameter.
LossAndGradient backward(const VaeModel& model, const std::vector<Sequence>& batch,
                         const std::vector<Eigen::VectorXd>& eps,
                         const DropoutMasks* masks = nullptr);

struct TrainConfig {
    int epochs = 200;
    int batch_size = 64;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
};

struct EpochLoss {
    int epoch = 0;
    LossTerms loss;  // sample-weighted mean over the epoch's batches
};

struct TrainReport {
    std::vector<EpochLoss> epochs;
};

using EpochCallback = std::function<void(const EpochLoss&)>;

/// Adam training over a normalized tensor. Deterministic for a given model, data and config.
TrainReport train(VaeModel& model, const OrbitTensor& tensor, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Decodes `count` standard-normal latent draws from `seed`.
std::vector<Sequence> generate(const VaeModel& model, int count, std::uint64_t seed);

/// One orbit of a tensor as a channels x n_nodes matrix.
Sequence sequence_of(const OrbitTensor& tensor, std::size_t orbit);

/// OVAE1 file: one-line JSON header, '\n', little-endian float64 parameters in manifest order.
std::string encode_model(const VaeModel& model);
VaeModel decode_model(const std::string& bytes);
void save_model(const VaeModel& model, const std::filesystem::path& path);
VaeModel load_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

template <class Rng>
DropoutMasks draw_dropout_masks(const Architecture& arch, int batch, Rng& rng) {
    const auto lengths = arch.length_chain();
    const double keep = 1.0 - arch.dropout_rate;
    const double scale = keep > 0.0 ? 1.0 / keep : 0.0;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto fill = [&](int rows, int cols) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng) < keep ? scale : 0.0;
        }
        return m;
    };
    DropoutMasks masks;
    for (int s = 0; s < arch.conv_stages; ++s) {
        masks.encoder.push_back(fill(arch.conv_channels, batch * lengths[static_cast<std::size_t>(s) + 1]));
    }
    for (int s = arch.conv_stages - 1; s >= 1; --s) {
        masks.decoder.push_back(fill(arch.conv_channels, batch * lengths[static_cast<std::size_t>(s)]));
    }
    return masks;
}

}  // namespace orbitvae
