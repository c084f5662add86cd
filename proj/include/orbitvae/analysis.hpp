#pragma once

// Latent-space maps, Gaussian-mixture clustering and clustering scores.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "orbitvae/families.hpp"

namespace orbitvae {

class OrbitTensor;
struct VaeModel;

struct OrbitFeatures {
    double jacobi = 0.0;
    double period = 0.0;
    double stability = 0.0;
};

struct LatentMap {
    /// One row per orbit: the encoder mean.
    Eigen::MatrixXd points;
    std::vector<std::string> labels;
    std::vector<OrbitFeatures> features;
};

/// Encodes every tensor orbit (inference mode). Catalog row i must describe tensor orbit i.
LatentMap latent_map(const VaeModel& model, const OrbitTensor& tensor, const Catalog& catalog);

/// family,z0..z{d-1},jacobi,period,stability
std::string format_latent_csv(const LatentMap& map);
LatentMap parse_latent_csv(const std::string& text);

struct GmmOptions {
    int max_iterations = 200;
    /// Stop once the log-likelihood gains less than this.
    double tol = 1e-6;
    /// Added to every covariance diagonal.
    double reg = 1e-6;
    /// Independent k-means++ starts; the best final log-likelihood wins.
    int restarts = 1;
};

struct GmmModel {
    Eigen::VectorXd weights;
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covariances;
    /// Total log-likelihood after each E-step of the winning run.
    std::vector<double> log_likelihood;

    int components() const { return static_cast<int>(weights.size()); }
};

/// EM for a full-covariance mixture, k-means++ initialized from `seed`.
GmmModel fit_gmm(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                 const GmmOptions& options = {});

/// n x k posterior probabilities; rows sum to 1.
Eigen::MatrixXd responsibilities(const GmmModel& model, const Eigen::MatrixXd& points);

/// Most probable component per point.
std::vector<int> assign(const GmmModel& model, const Eigen::MatrixXd& points);

/// Maps strings to 0, 1, ... in order of first appearance.
std::vector<int> encode_labels(const std::vector<std::string>& labels);

/// Mutual information over the arithmetic mean of the two entropies (natural log).
/// Returns 0 when both labelings are constant.
double nmi(const std::vector<int>& a, const std::vector<int>& b);

/// Fraction of points covered by the best injective cluster-to-label matching.
double cluster_accuracy(const std::vector<int>& truth, const std::vector<int>& assignments);

/// Maximum-weight assignment of rows to columns of a rectangular matrix. Entry r of the
/// result is the column matched to row r, or -1 when rows outnumber columns.
std::vector<int> hungarian_max(const Eigen::MatrixXd& weights);

struct ClusterReport {
    int k = 0;
    std::uint64_t seed = 0;
    std::vector<int> assignments;
    double nmi = 0.0;
    double accuracy = 0.0;
};

ClusterReport cluster_latent(const LatentMap& map, int k, std::uint64_t seed,
                             const GmmOptions& options = {});

/// k,seed,nmi,accuracy
std::string format_cluster_report(const ClusterReport& report);

struct ProfileBin {
    double lower = 0.0;
    double upper = 0.0;
    int count = 0;
    /// NaN when the bin is empty.
    OrbitFeatures mean;
    bool empty() const { return count == 0; }
};

/// Equal-width bins over the observed range of one latent axis.
std::vector<ProfileBin> axis_feature_profile(const LatentMap& map, int axis, int n_bins = 20);

/// bin,lower,upper,count,jacobi,period,stability
std::string format_profile_csv(const std::vector<ProfileBin>& bins);

}  // namespace orbitvae
