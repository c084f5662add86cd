#include "orbitvae/vae.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include "binary_io.hpp"
#include "orbitvae/dataset.hpp"
#include "orbitvae/errors.hpp"
#include "orbitvae/text.hpp"

namespace orbitvae {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMajorMatrix>;
using Weights = Eigen::Map<RowMajorMatrix>;

// ---------------------------------------------------------------------------
// Architecture and manifest

void Architecture::validate() const {
    if (n_nodes < 2 || channels < 1 || conv_stages < 1 || conv_channels < 1 || kernel < 1 ||
        stride < 1 || dense1 < 1 || dense2 < 1 || latent_dim < 1) {
        throw InvalidArgument("architecture: all sizes must be positive (n_nodes >= 2)");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw InvalidArgument("architecture: dropout_rate must lie in [0, 1)");
    }
}

std::vector<int> Architecture::length_chain() const {
    std::vector<int> l{n_nodes};
    for (int s = 0; s < conv_stages; ++s) l.push_back((l.back() + stride - 1) / stride);
    return l;
}

int Architecture::pad_left(int stage) const {
    const auto l = length_chain();
    const int in = l[static_cast<std::size_t>(stage)];
    const int out = l[static_cast<std::size_t>(stage) + 1];
    const int total = std::max((out - 1) * stride + kernel - in, 0);
    return total / 2;
}

int Architecture::flatten_size() const { return length_chain().back() * conv_channels; }

ParameterManifest::ParameterManifest(const Architecture& arch) {
    arch.validate();
    const int c = arch.conv_channels;
    const int k = arch.kernel;
    for (int s = 0; s < arch.conv_stages; ++s) {
        const int in = s == 0 ? arch.channels : c;
        const std::string n = "enc.conv" + std::to_string(s);
        add(n + ".weight", {c, in, k}, in * k, c * k, false);
        add(n + ".bias", {c}, 0, 0, true);
    }
    const int flat = arch.flatten_size();
    auto dense = [&](const std::string& n, int in, int out) {
        add(n + ".weight", {out, in}, in, out, false);
        add(n + ".bias", {out}, 0, 0, true);
    };
    dense("enc.dense1", flat, arch.dense1);
    dense("enc.dense2", arch.dense1, arch.dense2);
    dense("enc.mean", arch.dense2, arch.latent_dim);
    dense("enc.logvar", arch.dense2, arch.latent_dim);
    dense("dec.dense2", arch.latent_dim, arch.dense2);
    dense("dec.dense1", arch.dense2, arch.dense1);
    dense("dec.reshape", arch.dense1, flat);
    for (int t = 0; t < arch.conv_stages; ++t) {
        const int out = t == arch.conv_stages - 1 ? arch.channels : c;
        const std::string n = "dec.tconv" + std::to_string(t);
        add(n + ".weight", {c, out, k}, c * k, out * k, false);
        add(n + ".bias", {out}, 0, 0, true);
    }
}

void ParameterManifest::add(std::string name, std::vector<int> shape, int fan_in, int fan_out,
                            bool bias) {
    std::size_t size = 1;
    for (int d : shape) size *= static_cast<std::size_t>(d);
    blocks_.push_back({std::move(name), total_, size, std::move(shape), fan_in, fan_out, bias});
    total_ += size;
}

const ParameterBlock& ParameterManifest::find(const std::string& name) const {
    for (const auto& b : blocks_) {
        if (b.name == name) return b;
    }
    throw InvalidArgument("no parameter block named '" + name + "'");
}

VaeModel VaeModel::initialize(const Architecture& arch, std::uint64_t seed) {
    const ParameterManifest manifest(arch);
    VaeModel model{arch, VectorXd::Zero(static_cast<Eigen::Index>(manifest.total())), seed};
    std::mt19937_64 rng(seed);
    for (const auto& b : manifest.blocks()) {
        if (b.bias) continue;
        const double limit = std::sqrt(6.0 / static_cast<double>(b.fan_in + b.fan_out));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (std::size_t i = 0; i < b.size; ++i) {
            model.parameters[static_cast<Eigen::Index>(b.offset + i)] = u(rng);
        }
    }
    return model;
}

void VaeModel::validate() const {
    const ParameterManifest m(arch);
    if (static_cast<std::size_t>(parameters.size()) != m.total()) {
        throw ShapeError("model has " + std::to_string(parameters.size()) +
                         " parameters, manifest expects " + std::to_string(m.total()));
    }
    if (!parameters.allFinite()) throw NumericError("model parameters are not all finite");
}

bool operator==(const VaeModel& a, const VaeModel& b) {
    if (!(a.arch == b.arch) || a.seed != b.seed || a.parameters.size() != b.parameters.size()) {
        return false;
    }
    return std::equal(a.parameters.data(), a.parameters.data() + a.parameters.size(),
                      b.parameters.data(), [](double x, double y) {
                          return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
                      });
}

// ---------------------------------------------------------------------------
// Network

namespace {

// Index map shared by conv and transposed conv: short-axis position o and tap k touch
// long-axis position o * stride + k - pad. Activations of a batch are stored as
// C x (batch * length) with each sample's positions contiguous.
struct Geometry {
    int batch;
    int l_long;
    int l_short;
    int kernel;
    int stride;
    int pad;
};

// (C*K) x (B*l_short) matrix of taps gathered from a C x (B*l_long) activation.
MatrixXd gather(const MatrixXd& src, const Geometry& g) {
    const auto c_count = src.rows();
    MatrixXd out = MatrixXd::Zero(c_count * g.kernel, static_cast<Eigen::Index>(g.batch) * g.l_short);
    for (int b = 0; b < g.batch; ++b) {
        for (int o = 0; o < g.l_short; ++o) {
            const Eigen::Index col = static_cast<Eigen::Index>(b) * g.l_short + o;
            for (int k = 0; k < g.kernel; ++k) {
                const int j = o * g.stride + k - g.pad;
                if (j < 0 || j >= g.l_long) continue;
                const Eigen::Index src_col = static_cast<Eigen::Index>(b) * g.l_long + j;
                for (Eigen::Index c = 0; c < c_count; ++c) {
                    out(c * g.kernel + k, col) = src(c, src_col);
                }
            }
        }
    }
    return out;
}

// Adjoint of gather: accumulates (C*K) x (B*l_short) taps into a C x (B*l_long) activation.
MatrixXd scatter(const MatrixXd& taps, Eigen::Index c_count, const Geometry& g) {
    MatrixXd out = MatrixXd::Zero(c_count, static_cast<Eigen::Index>(g.batch) * g.l_long);
    for (int b = 0; b < g.batch; ++b) {
        for (int o = 0; o < g.l_short; ++o) {
            const Eigen::Index col = static_cast<Eigen::Index>(b) * g.l_short + o;
            for (int k = 0; k < g.kernel; ++k) {
                const int j = o * g.stride + k - g.pad;
                if (j < 0 || j >= g.l_long) continue;
                const Eigen::Index dst_col = static_cast<Eigen::Index>(b) * g.l_long + j;
                for (Eigen::Index c = 0; c < c_count; ++c) {
                    out(c, dst_col) += taps(c * g.kernel + k, col);
                }
            }
        }
    }
    return out;
}

// C x (B*L) -> (C*L) x B, channel-major within a sample.
MatrixXd flatten(const MatrixXd& h, int batch, int length) {
    const auto c_count = h.rows();
    MatrixXd out(c_count * length, batch);
    for (int b = 0; b < batch; ++b) {
        for (Eigen::Index c = 0; c < c_count; ++c) {
            for (int l = 0; l < length; ++l) {
                out(c * length + l, b) = h(c, static_cast<Eigen::Index>(b) * length + l);
            }
        }
    }
    return out;
}

MatrixXd unflatten(const MatrixXd& f, Eigen::Index c_count, int batch, int length) {
    MatrixXd out(c_count, static_cast<Eigen::Index>(batch) * length);
    for (int b = 0; b < batch; ++b) {
        for (Eigen::Index c = 0; c < c_count; ++c) {
            for (int l = 0; l < length; ++l) {
                out(c, static_cast<Eigen::Index>(b) * length + l) = f(c * length + l, b);
            }
        }
    }
    return out;
}

MatrixXd relu(const MatrixXd& x) { return x.cwiseMax(0.0); }

// Gradient through ReLU given the post-activation values.
MatrixXd relu_back(const MatrixXd& grad, const MatrixXd& activated) {
    return (activated.array() > 0.0).select(grad, 0.0);
}

constexpr double kSigmoidFloor = std::numeric_limits<double>::min();
const double kSigmoidCeil = std::nextafter(1.0, 0.0);

double sigmoid(double x) {
    const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    return std::clamp(s, kSigmoidFloor, kSigmoidCeil);
}

class Network {
public:
    explicit Network(const VaeModel& model)
        : arch_(model.arch),
          manifest_(model.arch),
          params_(model.parameters),
          lengths_(arch_.length_chain()) {
        if (static_cast<std::size_t>(params_.size()) != manifest_.total()) {
            throw ShapeError("model parameter count does not match its architecture");
        }
    }

    struct EncoderCache {
        int batch = 0;
        std::vector<MatrixXd> cols;  // gathered input taps per stage
        std::vector<MatrixXd> act;   // post-ReLU, pre-dropout per stage
        MatrixXd flat, e1, e2;
        MatrixXd mean, logvar;
    };

    struct DecoderCache {
        int batch = 0;
        MatrixXd z, g2, g1, r;
        std::vector<MatrixXd> input;  // input to each transposed stage
        std::vector<MatrixXd> act;    // post-ReLU, pre-dropout (all but last stage)
        MatrixXd out;                 // sigmoid output, channels x (B * n_nodes)
    };

    EncoderCache encode(const MatrixXd& x, int batch, const DropoutMasks* masks) const {
        EncoderCache cache;
        cache.batch = batch;
        MatrixXd h = x;
        for (int s = 0; s < arch_.conv_stages; ++s) {
            const Geometry g = enc_geometry(s, batch);
            cache.cols.push_back(gather(h, g));
            MatrixXd pre = weights("enc.conv" + std::to_string(s)) * cache.cols.back();
            pre.colwise() += bias("enc.conv" + std::to_string(s));
            cache.act.push_back(relu(pre));
            h = masks ? MatrixXd(cache.act.back().cwiseProduct(masks->encoder[static_cast<std::size_t>(s)]))
                      : cache.act.back();
        }
        cache.flat = flatten(h, batch, lengths_.back());
        cache.e1 = relu(dense("enc.dense1", cache.flat));
        cache.e2 = relu(dense("enc.dense2", cache.e1));
        cache.mean = dense("enc.mean", cache.e2);
        cache.logvar = dense("enc.logvar", cache.e2);
        return cache;
    }

    DecoderCache decode(const MatrixXd& z, const DropoutMasks* masks) const {
        DecoderCache cache;
        const int batch = static_cast<int>(z.cols());
        cache.batch = batch;
        cache.z = z;
        cache.g2 = relu(dense("dec.dense2", z));
        cache.g1 = relu(dense("dec.dense1", cache.g2));
        cache.r = relu(dense("dec.reshape", cache.g1));
        MatrixXd h = unflatten(cache.r, arch_.conv_channels, batch, lengths_.back());
        const int stages = arch_.conv_stages;
        for (int t = 0; t < stages; ++t) {
            const std::string name = "dec.tconv" + std::to_string(t);
            const Geometry g = dec_geometry(t, batch);
            cache.input.push_back(h);
            const MatrixXd taps = weights(name).transpose() * h;
            const VectorXd b = bias(name);
            MatrixXd y = scatter(taps, b.size(), g);
            y.colwise() += b;
            if (t == stages - 1) {
                cache.out = y.unaryExpr([](double v) { return sigmoid(v); });
            } else {
                cache.act.push_back(relu(y));
                h = masks ? MatrixXd(cache.act.back().cwiseProduct(masks->decoder[static_cast<std::size_t>(t)]))
                          : cache.act.back();
            }
        }
        return cache;
    }

    /// Backpropagates d(loss)/d(output) through the decoder; returns d(loss)/dz.
    MatrixXd decoder_backward(const DecoderCache& cache, const MatrixXd& d_out,
                              const DropoutMasks* masks, VectorXd& grad) const {
        const int batch = cache.batch;
        const int stages = arch_.conv_stages;
        MatrixXd dy = d_out.cwiseProduct(
            cache.out.unaryExpr([](double s) { return s * (1.0 - s); }));
        for (int t = stages - 1; t >= 0; --t) {
            const std::string name = "dec.tconv" + std::to_string(t);
            if (t < stages - 1) {
                MatrixXd da = masks ? MatrixXd(dy.cwiseProduct(masks->decoder[static_cast<std::size_t>(t)])) : dy;
                dy = relu_back(da, cache.act[static_cast<std::size_t>(t)]);
            }
            const Geometry g = dec_geometry(t, batch);
            bias_grad(name, grad) += dy.rowwise().sum();
            const MatrixXd d_taps = gather(dy, g);
            const MatrixXd& in = cache.input[static_cast<std::size_t>(t)];
            weight_grad(name, grad) += in * d_taps.transpose();
            dy = weights(name) * d_taps;
        }
        MatrixXd d_r = relu_back(flatten(dy, batch, lengths_.back()), cache.r);
        MatrixXd d_g1 = relu_back(dense_backward("dec.reshape", cache.g1, d_r, grad), cache.g1);
        MatrixXd d_g2 = relu_back(dense_backward("dec.dense1", cache.g2, d_g1, grad), cache.g2);
        return dense_backward("dec.dense2", cache.z, d_g2, grad);
    }

    void encoder_backward(const EncoderCache& cache, const MatrixXd& d_mean,
                          const MatrixXd& d_logvar, const DropoutMasks* masks,
                          VectorXd& grad) const {
        const int batch = cache.batch;
        MatrixXd d_e2 = dense_backward("enc.mean", cache.e2, d_mean, grad) +
                        dense_backward("enc.logvar", cache.e2, d_logvar, grad);
        d_e2 = relu_back(d_e2, cache.e2);
        MatrixXd d_e1 = relu_back(dense_backward("enc.dense2", cache.e1, d_e2, grad), cache.e1);
        MatrixXd d_flat = dense_backward("enc.dense1", cache.flat, d_e1, grad);
        MatrixXd dh = unflatten(d_flat, arch_.conv_channels, batch, lengths_.back());
        for (int s = arch_.conv_stages - 1; s >= 0; --s) {
            const std::string name = "enc.conv" + std::to_string(s);
            const auto us = static_cast<std::size_t>(s);
            MatrixXd da = masks ? MatrixXd(dh.cwiseProduct(masks->encoder[us])) : dh;
            const MatrixXd d_pre = relu_back(da, cache.act[us]);
            bias_grad(name, grad) += d_pre.rowwise().sum();
            weight_grad(name, grad) += d_pre * cache.cols[us].transpose();
            if (s > 0) {
                const MatrixXd d_cols = weights(name).transpose() * d_pre;
                dh = scatter(d_cols, arch_.conv_channels, enc_geometry(s, batch));
            }
        }
    }

    const Architecture& arch() const { return arch_; }
    std::size_t parameter_count() const { return manifest_.total(); }

private:
    Geometry enc_geometry(int stage, int batch) const {
        const auto s = static_cast<std::size_t>(stage);
        return {batch, lengths_[s], lengths_[s + 1], arch_.kernel, arch_.stride, arch_.pad_left(stage)};
    }

    // Transposed stage t mirrors encoder stage S-1-t.
    Geometry dec_geometry(int t, int batch) const {
        return enc_geometry(arch_.conv_stages - 1 - t, batch);
    }

    ConstWeights weights(const std::string& name) const {
        const auto& b = manifest_.find(name + ".weight");
        const int rows = b.shape[0];
        const int cols = static_cast<int>(b.size) / rows;
        return ConstWeights(params_.data() + b.offset, rows, cols);
    }

    Eigen::Map<const VectorXd> bias(const std::string& name) const {
        const auto& b = manifest_.find(name + ".bias");
        return Eigen::Map<const VectorXd>(params_.data() + b.offset, static_cast<Eigen::Index>(b.size));
    }

    Weights weight_grad(const std::string& name, VectorXd& grad) const {
        const auto& b = manifest_.find(name + ".weight");
        const int rows = b.shape[0];
        const int cols = static_cast<int>(b.size) / rows;
        return Weights(grad.data() + b.offset, rows, cols);
    }

    Eigen::Map<VectorXd> bias_grad(const std::string& name, VectorXd& grad) const {
        const auto& b = manifest_.find(name + ".bias");
        return Eigen::Map<VectorXd>(grad.data() + b.offset, static_cast<Eigen::Index>(b.size));
    }

    MatrixXd dense(const std::string& name, const MatrixXd& x) const {
        MatrixXd y = weights(name) * x;
        y.colwise() += bias(name);
        return y;
    }

    // Accumulates weight/bias gradients and returns the gradient w.r.t. the layer input.
    MatrixXd dense_backward(const std::string& name, const MatrixXd& x, const MatrixXd& dy,
                            VectorXd& grad) const {
        weight_grad(name, grad) += dy * x.transpose();
        bias_grad(name, grad) += dy.rowwise().sum();
        return weights(name).transpose() * dy;
    }

    Architecture arch_;
    ParameterManifest manifest_;
    const VectorXd& params_;
    std::vector<int> lengths_;
};

MatrixXd stack_batch(const Architecture& arch, const std::vector<Sequence>& batch) {
    const int n = arch.n_nodes;
    MatrixXd x(arch.channels, static_cast<Eigen::Index>(batch.size()) * n);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        if (batch[b].rows() != arch.channels || batch[b].cols() != n) {
            throw ShapeError("input sequence is " + std::to_string(batch[b].rows()) + "x" +
                             std::to_string(batch[b].cols()) + ", expected " +
                             std::to_string(arch.channels) + "x" + std::to_string(n));
        }
        x.middleCols(static_cast<Eigen::Index>(b) * n, n) = batch[b];
    }
    return x;
}

MatrixXd stack_latents(const Architecture& arch, const std::vector<VectorXd>& zs) {
    MatrixXd z(arch.latent_dim, static_cast<Eigen::Index>(zs.size()));
    for (std::size_t b = 0; b < zs.size(); ++b) {
        if (zs[b].size() != arch.latent_dim) {
            throw ShapeError("latent vector has " + std::to_string(zs[b].size()) +
                             " components, expected " + std::to_string(arch.latent_dim));
        }
        z.col(static_cast<Eigen::Index>(b)) = zs[b];
    }
    return z;
}

void check_masks(const Architecture& arch, int batch, const DropoutMasks* masks) {
    if (!masks) return;
    if (masks->encoder.size() != static_cast<std::size_t>(arch.conv_stages) ||
        masks->decoder.size() != static_cast<std::size_t>(arch.conv_stages - 1)) {
        throw ShapeError("dropout mask count does not match the architecture");
    }
    const auto l = arch.length_chain();
    for (int s = 0; s < arch.conv_stages; ++s) {
        const auto& m = masks->encoder[static_cast<std::size_t>(s)];
        if (m.rows() != arch.conv_channels || m.cols() != batch * l[static_cast<std::size_t>(s) + 1]) {
            throw ShapeError("encoder dropout mask has the wrong shape");
        }
    }
    for (int t = 0; t + 1 < arch.conv_stages; ++t) {
        const auto& m = masks->decoder[static_cast<std::size_t>(t)];
        if (m.rows() != arch.conv_channels ||
            m.cols() != batch * l[static_cast<std::size_t>(arch.conv_stages - 1 - t)]) {
            throw ShapeError("decoder dropout mask has the wrong shape");
        }
    }
}

struct ForwardResult {
    Network::EncoderCache enc;
    Network::DecoderCache dec;
    MatrixXd x;
    MatrixXd eps;
    LossTerms loss;
};

ForwardResult forward(const Network& net, const std::vector<Sequence>& batch,
                      const std::vector<VectorXd>& eps, const DropoutMasks* masks) {
    const Architecture& arch = net.arch();
    if (batch.empty()) throw InvalidArgument("empty batch");
    if (eps.size() != batch.size()) throw ShapeError("need one eps vector per batch sample");
    const int b = static_cast<int>(batch.size());
    check_masks(arch, b, masks);

    ForwardResult r;
    r.x = stack_batch(arch, batch);
    r.eps = stack_latents(arch, eps);
    r.enc = net.encode(r.x, b, masks);
    const MatrixXd z =
        r.enc.mean + (0.5 * r.enc.logvar.array()).exp().matrix().cwiseProduct(r.eps);
    r.dec = net.decode(z, masks);

    const double inv_b = 1.0 / b;
    r.loss.recon = (r.dec.out - r.x).squaredNorm() * inv_b;
    double kl = 0.0;
    for (int i = 0; i < b; ++i) {
        kl += kl_divergence({r.enc.mean.col(i), r.enc.logvar.col(i)});
    }
    r.loss.kl = kl * inv_b;
    r.loss.total = r.loss.recon + r.loss.kl;
    return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public operations

LatentGaussian encode(const VaeModel& model, const Sequence& x) {
    return encode_batch(model, {x}).front();
}

std::vector<LatentGaussian> encode_batch(const VaeModel& model, const std::vector<Sequence>& xs) {
    if (xs.empty()) return {};
    const Network net(model);
    const auto cache = net.encode(stack_batch(model.arch, xs), static_cast<int>(xs.size()), nullptr);
    std::vector<LatentGaussian> out;
    out.reserve(xs.size());
    for (Eigen::Index i = 0; i < cache.mean.cols(); ++i) {
        out.push_back({cache.mean.col(i), cache.logvar.col(i)});
    }
    return out;
}

VectorXd reparameterize(const LatentGaussian& g, const VectorXd& eps) {
    if (eps.size() != g.mean.size() || g.logvar.size() != g.mean.size()) {
        throw ShapeError("reparameterize: dimension mismatch");
    }
    return g.mean + (0.5 * g.logvar.array()).exp().matrix().cwiseProduct(eps);
}

Sequence decode(const VaeModel& model, const VectorXd& z) { return decode_batch(model, {z}).front(); }

std::vector<Sequence> decode_batch(const VaeModel& model, const std::vector<VectorXd>& zs) {
    if (zs.empty()) return {};
    const Network net(model);
    const auto cache = net.decode(stack_latents(model.arch, zs), nullptr);
    const int n = model.arch.n_nodes;
    std::vector<Sequence> out;
    out.reserve(zs.size());
    for (std::size_t b = 0; b < zs.size(); ++b) {
        out.push_back(cache.out.middleCols(static_cast<Eigen::Index>(b) * n, n));
    }
    return out;
}

double kl_divergence(const LatentGaussian& g) {
    return -0.5 * (1.0 + g.logvar.array() - g.mean.array().square() - g.logvar.array().exp()).sum();
}

LossTerms elbo_loss(const VaeModel& model, const std::vector<Sequence>& batch,
                    const std::vector<VectorXd>& eps, const DropoutMasks* masks) {
    const Network net(model);
    return forward(net, batch, eps, masks).loss;
}

LossAndGradient backward(const VaeModel& model, const std::vector<Sequence>& batch,
                         const std::vector<VectorXd>& eps, const DropoutMasks* masks) {
    const Network net(model);
    const ForwardResult r = forward(net, batch, eps, masks);
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    LossAndGradient out{r.loss, VectorXd::Zero(static_cast<Eigen::Index>(net.parameter_count()))};
    const MatrixXd d_out = 2.0 * inv_b * (r.dec.out - r.x);
    const MatrixXd d_z = net.decoder_backward(r.dec, d_out, masks, out.gradient);

    // z = mean + exp(logvar/2) * eps, plus the KL term's own dependence on mean and logvar.
    const MatrixXd sigma = (0.5 * r.enc.logvar.array()).exp().matrix();
    const MatrixXd d_mean = d_z + inv_b * r.enc.mean;
    const MatrixXd d_logvar =
        0.5 * d_z.cwiseProduct(sigma).cwiseProduct(r.eps) +
        0.5 * inv_b * (r.enc.logvar.array().exp() - 1.0).matrix();
    net.encoder_backward(r.enc, d_mean, d_logvar, masks, out.gradient);
    return out;
}

Sequence sequence_of(const OrbitTensor& tensor, std::size_t orbit) {
    using RowMap = Eigen::Map<const RowMajorMatrix>;
    return RowMap(tensor.orbit_data(orbit), OrbitTensor::channels(),
                  static_cast<Eigen::Index>(tensor.n_nodes()));
}

TrainReport train(VaeModel& model, const OrbitTensor& tensor, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
    if (config.epochs < 1) throw InvalidArgument("train: epochs must be >= 1");
    if (config.batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");
    if (!(config.learning_rate > 0.0)) throw InvalidArgument("train: learning_rate must be > 0");
    if (!tensor.normalized) throw InvalidArgument("train: tensor must be normalized");
    if (tensor.num_orbits() == 0) throw InvalidArgument("train: empty tensor");
    if (static_cast<int>(tensor.n_nodes()) != model.arch.n_nodes ||
        static_cast<int>(OrbitTensor::channels()) != model.arch.channels) {
        throw ShapeError("train: tensor shape does not match the model architecture");
    }
    model.validate();

    std::vector<Sequence> data;
    data.reserve(tensor.num_orbits());
    for (std::size_t i = 0; i < tensor.num_orbits(); ++i) data.push_back(sequence_of(tensor, i));

    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    const auto n_params = model.parameters.size();
    VectorXd m1 = VectorXd::Zero(n_params);
    VectorXd m2 = VectorXd::Zero(n_params);
    long long step = 0;

    TrainReport report;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        LossTerms sum;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            std::vector<Sequence> batch;
            std::vector<VectorXd> eps;
            for (std::size_t j = start; j < end; ++j) {
                batch.push_back(data[order[j]]);
                VectorXd e(model.arch.latent_dim);
                for (Eigen::Index d = 0; d < e.size(); ++d) e[d] = normal(rng);
                eps.push_back(std::move(e));
            }
            const DropoutMasks masks = draw_dropout_masks(model.arch, static_cast<int>(batch.size()), rng);
            const LossAndGradient lg = backward(model, batch, eps, &masks);
            if (!std::isfinite(lg.loss.total) || !lg.gradient.allFinite()) {
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(start / static_cast<std::size_t>(config.batch_size)));
            }
            ++step;
            m1 = config.beta1 * m1 + (1.0 - config.beta1) * lg.gradient;
            m2 = config.beta2 * m2 + (1.0 - config.beta2) * lg.gradient.cwiseAbs2();
            const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            model.parameters.array() -=
                config.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + config.epsilon);

            const double w = static_cast<double>(batch.size());
            sum.total += w * lg.loss.total;
            sum.recon += w * lg.loss.recon;
            sum.kl += w * lg.loss.kl;
        }
        const double n = static_cast<double>(data.size());
        EpochLoss record{epoch, {sum.total / n, sum.recon / n, sum.kl / n}};
        report.epochs.push_back(record);
        if (on_epoch) on_epoch(record);
    }
    return report;
}

std::vector<Sequence> generate(const VaeModel& model, int count, std::uint64_t seed) {
    if (count < 0) throw InvalidArgument("generate: count must be >= 0");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<VectorXd> zs;
    for (int i = 0; i < count; ++i) {
        VectorXd z(model.arch.latent_dim);
        for (Eigen::Index d = 0; d < z.size(); ++d) z[d] = normal(rng);
        zs.push_back(std::move(z));
    }
    return decode_batch(model, zs);
}

// ---------------------------------------------------------------------------
// OVAE1

namespace {
constexpr const char* kModelMagic = "OVAE1";
}

std::string encode_model(const VaeModel& model) {
    model.validate();
    const Architecture& a = model.arch;
    nlohmann::ordered_json h;
    h["magic"] = kModelMagic;
    h["n_nodes"] = a.n_nodes;
    h["channels"] = a.channels;
    h["conv_stages"] = a.conv_stages;
    h["conv_channels"] = a.conv_channels;
    h["kernel"] = a.kernel;
    h["stride"] = a.stride;
    h["dense1"] = a.dense1;
    h["dense2"] = a.dense2;
    h["latent_dim"] = a.latent_dim;
    h["dropout_rate"] = a.dropout_rate;
    h["param_count"] = model.parameters.size();
    h["seed"] = model.seed;
    std::string out = h.dump();
    out.push_back('\n');
    detail::append_f64_le(out, std::vector<double>(model.parameters.data(),
                                                   model.parameters.data() + model.parameters.size()));
    return out;
}

VaeModel decode_model(const std::string& bytes) {
    const auto [h, payload] = detail::split_container(bytes, kModelMagic);
    VaeModel model;
    try {
        Architecture& a = model.arch;
        a.n_nodes = h.at("n_nodes").get<int>();
        a.channels = h.at("channels").get<int>();
        a.conv_stages = h.at("conv_stages").get<int>();
        a.conv_channels = h.at("conv_channels").get<int>();
        a.kernel = h.at("kernel").get<int>();
        a.stride = h.at("stride").get<int>();
        a.dense1 = h.at("dense1").get<int>();
        a.dense2 = h.at("dense2").get<int>();
        a.latent_dim = h.at("latent_dim").get<int>();
        a.dropout_rate = h.at("dropout_rate").get<double>();
        model.seed = h.at("seed").get<std::uint64_t>();
        const auto count = h.at("param_count").get<std::size_t>();
        try {
            a.validate();
        } catch (const InvalidArgument& e) {
            throw FormatError(std::string("OVAE1: ") + e.what());
        }
        const ParameterManifest manifest(a);
        if (count != manifest.total()) {
            throw FormatError("OVAE1: param_count " + std::to_string(count) +
                              " does not match architecture (" + std::to_string(manifest.total()) + ")");
        }
        if (payload.size() < count * 8) throw FormatError("OVAE1: truncated payload");
        if (payload.size() != count * 8) throw FormatError("OVAE1: payload length mismatch");
        const auto values = detail::read_f64_le(payload.data(), count);
        model.parameters = Eigen::Map<const VectorXd>(values.data(), static_cast<Eigen::Index>(count));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("OVAE1: bad header field: ") + e.what());
    }
    if (!model.parameters.allFinite()) throw FormatError("OVAE1: non-finite parameter");
    return model;
}

void save_model(const VaeModel& model, const std::filesystem::path& path) {
    text::write_file(path, encode_model(model));
}

VaeModel load_model(const std::filesystem::path& path) {
    try {
        return decode_model(text::read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace orbitvae
