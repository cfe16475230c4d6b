#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nngpnas/tensor.hpp"

// Primitive layer kernels (forward and backward) on NHWC double tensors.
// Convolutions and pools use SAME padding; convolutions are stride 1.
namespace nngpnas::layers {

/// Weights laid out as [kh][kw][c_in][c_out].
Tensor conv2d(const Tensor& x, std::span<const double> weight, int kernel, int out_channels);

/// Writes dL/dx into `dx` (when non-null) and dL/dw into `dweight` (overwritten).
void conv2d_backward(const Tensor& x, std::span<const double> weight, int kernel, const Tensor& dy, Tensor* dx,
                     std::span<double> dweight);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> var;  // biased (population) variance
};

ChannelStats channel_stats(const Tensor& x);

inline constexpr double kBatchNormEpsilon = 1e-5;

Tensor batchnorm(const Tensor& x, std::span<const double> mean, std::span<const double> var,
                 std::span<const double> gamma, std::span<const double> beta, double eps = kBatchNormEpsilon);

/// Backward pass of batch-norm normalised with the batch's own statistics.
Tensor batchnorm_backward(const Tensor& x, const ChannelStats& stats, std::span<const double> gamma, const Tensor& dy,
                          std::span<double> dgamma, std::span<double> dbeta, double eps = kBatchNormEpsilon);

Tensor relu(const Tensor& x);
/// Uses the forward output `y` as the mask.
Tensor relu_backward(const Tensor& y, const Tensor& dy);

struct PoolResult {
  Tensor y;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

PoolResult max_pool(const Tensor& x, int window, int stride);
Tensor max_pool_backward(const Tensor& x_like, const std::vector<std::uint32_t>& argmax, const Tensor& dy);

Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const TensorShape& in_shape, const Tensor& dy);

/// y = x W + b with x flattened per sample; W is [d_in][d_out].
Tensor dense(const Tensor& x, std::span<const double> weight, std::span<const double> bias, int out_dim);
void dense_backward(const Tensor& x, std::span<const double> weight, const Tensor& dy, Tensor* dx,
                    std::span<double> dweight, std::span<double> dbias);

Tensor add(std::span<const Tensor* const> xs);
Tensor concat(std::span<const Tensor* const> xs);
/// Splits a channel-concatenated gradient back into per-input gradients.
std::vector<Tensor> concat_backward(std::span<const Tensor* const> xs, const Tensor& dy);

struct LossResult {
  double loss = 0.0;  // mean over the batch
  Tensor dlogits;
};

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace nngpnas::layers
