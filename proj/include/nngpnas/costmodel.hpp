#pragma once

#include <cstdint>

#include "nngpnas/archspec.hpp"

namespace nngpnas {

// Per-op FLOP conventions used by count_inference_flops:
//   conv         2 * k^2 * C_in * C_out * H_out * W_out   (one multiply + one add per MAC)
//   batch-norm   2 per element (inference: scale and shift)
//   ReLU         1 per element
//   max-pool     window - 1 comparisons per output element
//   add          1 per element per extra operand
//   concat       0
//   global pool  1 per input element
//   dense        2 * d_in * d_out, plus d_out when a bias is present
inline constexpr std::uint64_t kBatchNormFlopsPerElement = 2;
inline constexpr std::uint64_t kReluFlopsPerElement = 1;

std::uint64_t conv_flops(int kernel, int in_channels, int out_channels, int out_height, int out_width);
std::uint64_t dense_flops(int in_dim, int out_dim, bool bias);
std::uint64_t layer_flops(const LayerGraph& graph, const LayerNode& node);

/// F_A: inference FLOPs for one sample.
std::uint64_t count_inference_flops(const LayerGraph& graph);

/// Trainable parameters: conv weights, batch-norm scale and shift, dense weights and bias.
std::uint64_t count_params(const LayerGraph& graph);

struct NngpCostArgs {
  std::uint64_t inference_flops = 0;  // F_A
  std::uint64_t feature_dim = 0;      // d_A
  std::uint64_t n_ensemble = 0;
  std::uint64_t n_train = 0;          // N_D
  std::uint64_t n_val = 0;            // N_val
  std::uint64_t num_labels = 0;       // L
  std::uint64_t num_regs = 0;         // r, size of the regulariser grid
};

/// Exact FLOP counts in units of 1/3 FLOP (the Cholesky term carries a factor 1/3).
using FlopThirds = unsigned __int128;

/// n (F_A N_{D+val} + 2 d_A N_D N_{D+val}), in thirds.
FlopThirds kernel_evaluation_flops_thirds(const NngpCostArgs& a);
/// r (N_D^3 / 3 + 4 L N_D N_{D+val}), in thirds.
FlopThirds gp_inference_flops_thirds(const NngpCostArgs& a);
/// n F_A N_{D+val} + r N_D^3 / 3 + 2 (d_A n + 2 L r) N_D N_{D+val}, in thirds.
FlopThirds nngp_flops_thirds(const NngpCostArgs& a);

double to_flops(FlopThirds thirds);

struct NngpCost {
  double kernel_evaluation = 0.0;
  double gp_inference = 0.0;
  double total = 0.0;
};

NngpCost nngp_flops(const NngpCostArgs& a);

/// 2 E F_A N^all_D + F_A N^all_val (training cost per step per sample taken as G_A = 2 F_A).
std::uint64_t training_flops(std::uint64_t inference_flops, std::uint64_t epochs, std::uint64_t n_train_all,
                             std::uint64_t n_val_all);

struct CostBreakdown {
  std::uint64_t inference_flops = 0;   // F_A
  std::uint64_t training_step_flops = 0;  // G_A = 2 F_A
  double kernel_evaluation_flops = 0.0;
  double gp_inference_flops = 0.0;
  double total_nngp_flops = 0.0;
  std::uint64_t training_flops = 0;
  std::uint64_t param_count = 0;
};

struct TrainingCostArgs {
  std::uint64_t epochs = 0;
  std::uint64_t n_train_all = 0;
  std::uint64_t n_val_all = 0;
};

CostBreakdown cost_breakdown(const LayerGraph& graph, const NngpCostArgs& nngp, const TrainingCostArgs& training);

}  // namespace nngpnas
