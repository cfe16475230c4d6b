#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "nngpnas/archspec.hpp"
#include "nngpnas/layers.hpp"
#include "nngpnas/tensor.hpp"

namespace nngpnas {

struct InitConfig {
  std::uint64_t seed = 0;
  /// sigma_w^2 of the linear readout; each readout weight has variance sigma_w^2 / d.
  double readout_weight_variance = 1.0;
  /// Variance-scaling gain: conv weights have variance gain / fan_in (truncated normal).
  double conv_gain = 2.0;
  double bn_momentum = 0.997;
  int bn_warmup_batch = 250;

  void validate() const;
};

struct NodeParams {
  std::vector<double> weight;
  std::vector<double> bias;
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> moving_mean;
  std::vector<double> moving_var;

  bool operator==(const NodeParams&) const = default;
};

/// Parameter set theta, one entry per layer-graph node (empty for parameter-free nodes).
struct Parameters {
  std::vector<NodeParams> nodes;
  bool operator==(const Parameters&) const = default;
};

Parameters init_params(const LayerGraph& graph, const InitConfig& cfg);

/// One statistics-updating forward pass; returns the updated parameter set.
Parameters warmup_batchnorm(const LayerGraph& graph, const Parameters& params, const Tensor& warmup_inputs,
                            double momentum);

/// Penultimate (post global-average-pool, pre-readout) activations.
struct FeatureBatch {
  std::vector<double> features;  // row-major N x d
  int rows = 0;
  int feature_dim = 0;

  std::span<const double> row(int i) const {
    return {features.data() + static_cast<std::size_t>(i) * feature_dim, static_cast<std::size_t>(feature_dim)};
  }
};

FeatureBatch forward_features(const LayerGraph& graph, const Parameters& params, const Tensor& inputs);

/// N x L logits, row-major, as a (N, 1, 1, L) tensor.
Tensor forward_logits(const LayerGraph& graph, const Parameters& params, const Tensor& inputs);

enum class BatchNormMode { Inference, BatchStatistics };

/// Per-node intermediates retained for back-propagation.
struct NodeCache {
  Tensor conv_in;                         // conv input (after the downsample pool when present)
  std::vector<std::uint32_t> pool_argmax; // max-pool routing
  Tensor pre_bn;                          // conv output
  layers::ChannelStats stats;             // statistics used for normalisation
};

struct ForwardTrace {
  std::vector<Tensor> outputs;
  std::vector<NodeCache> caches;
};

/// Evaluates nodes [0, last_node] of the graph. `last_node` < 0 means the logits node.
ForwardTrace run_graph(const LayerGraph& graph, const Parameters& params, const Tensor& inputs, BatchNormMode mode,
                       int last_node = -1);

/// moving = momentum * moving + (1 - momentum) * batch, for every batch-norm node in the trace.
void update_moving_statistics(const LayerGraph& graph, const ForwardTrace& trace, double momentum, Parameters& params);

/// Little-endian float64 dump: 8-byte header (rows, cols as uint32) followed by row-major values.
void write_matrix_file(const std::filesystem::path& path, std::span<const double> values, std::uint32_t rows,
                       std::uint32_t cols);
std::vector<double> read_matrix_file(const std::filesystem::path& path, std::uint32_t& rows, std::uint32_t& cols);

/// Flat binary checkpoint of every parameter tensor in node order.
void save_parameters(const std::filesystem::path& path, const Parameters& params);
Parameters load_parameters(const std::filesystem::path& path);

}  // namespace nngpnas
