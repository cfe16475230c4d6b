#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nngpnas/archspec.hpp"
#include "nngpnas/dataset.hpp"
#include "nngpnas/forward.hpp"

namespace nngpnas {

/// Monte-Carlo estimates of K^tt (train x train) and K^vt (validation x train).
struct KernelPair {
  Eigen::MatrixXd k_tt;
  Eigen::MatrixXd k_vt;
  int n_ensemble = 0;
  int feature_dim = 0;
};

/// Running sums of feature Gram matrices; divides by n_ensemble * d only in finish().
class KernelAccumulator {
 public:
  KernelAccumulator(int n_train, int n_val, int feature_dim);

  void add(const FeatureBatch& train, const FeatureBatch& val);
  KernelPair finish() const;
  int members() const { return members_; }

 private:
  Eigen::MatrixXd sum_tt_;  // lower triangle only until finish()
  Eigen::MatrixXd sum_vt_;
  int feature_dim_;
  int members_ = 0;
};

/// Adds ensemble members [begin, end) to `acc`. Member k uses seeds derived from (cfg.seed, k) and its own
/// random batch-norm warmup subset of the NNGP training set.
void accumulate_members(const LayerGraph& graph, const InitConfig& cfg, const DatasetSplit& split,
                        KernelAccumulator& acc, int begin, int end);

KernelPair accumulate_kernels(const LayerGraph& graph, const InitConfig& cfg, const DatasetSplit& split,
                              int n_ensemble);

/// Closed-form one-hidden-layer ReLU NNGP kernel (degree-1 arc-cosine kernel), unit-variance weights.
double analytic_relu_mlp_kernel(std::span<const double> x, std::span<const double> y);

/// Monte-Carlo kernel of z = relu(W x), W_ij ~ N(0, 1), `width` hidden units: rows of `inputs` are samples.
Eigen::MatrixXd monte_carlo_relu_mlp_kernel(const Eigen::MatrixXd& inputs, int width, int n_ensemble,
                                            std::uint64_t seed);

/// Tr(K) / N.
double mean_eigenvalue(const Eigen::MatrixXd& k_tt);

/// Mean-zero one-hot targets: 1 - 1/L on the label, -1/L elsewhere.
Eigen::MatrixXd make_targets(std::span<const int> labels, int num_labels);

/// Posterior mean K^vt (K^tt + reg * lambda * I)^-1 targets via Cholesky. Throws SingularKernel.
Eigen::MatrixXd gp_predict(const KernelPair& kernels, const Eigen::MatrixXd& targets, double reg);

/// Row-wise argmax, ties resolved to the lowest class index.
std::vector<int> predict_labels(const Eigen::MatrixXd& scores);

/// numpy.logspace(-7, 2, 20).
std::vector<double> default_reg_grid();

struct InferenceConfig {
  std::vector<double> reg_grid = default_reg_grid();
  int n_ensemble = 8;

  void validate() const;
};

struct NngpResult {
  double accuracy = 0.0;
  double best_reg = 0.0;
  std::vector<double> accuracy_per_reg;  // NaN where the Cholesky factorisation failed
  KernelPair kernels;
};

/// Max over the regulariser grid of validation accuracy, given precomputed kernels.
NngpResult nngp_accuracy_from_kernels(const KernelPair& kernels, std::span<const int> train_labels,
                                      std::span<const int> val_labels, int num_labels,
                                      std::span<const double> reg_grid);

/// Full NNGP inference: kernel accumulation followed by the regulariser sweep.
NngpResult nngp_validation_accuracy(const LayerGraph& graph, const InitConfig& cfg, const DatasetSplit& split,
                                    const InferenceConfig& inf);

/// Header {N_D, N_val, d, n_ensemble} as little-endian uint64, then row-major float64 K^tt and K^vt.
void write_kernel_dump(const std::filesystem::path& path, const KernelPair& kernels);
KernelPair read_kernel_dump(const std::filesystem::path& path);

}  // namespace nngpnas
