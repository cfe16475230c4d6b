#include "nngpnas/costmodel.hpp"

namespace nngpnas {

std::uint64_t conv_flops(int kernel, int in_channels, int out_channels, int out_height, int out_width) {
  return 2ULL * kernel * kernel * in_channels * out_channels * out_height * out_width;
}

std::uint64_t dense_flops(int in_dim, int out_dim, bool bias) {
  return 2ULL * in_dim * out_dim + (bias ? static_cast<std::uint64_t>(out_dim) : 0ULL);
}

std::uint64_t layer_flops(const LayerGraph& graph, const LayerNode& node) {
  const auto& out = node.out_shape;
  const std::uint64_t out_elems = out.size();
  switch (node.kind) {
    case LayerKind::Input:
      return 0;
    case LayerKind::ConvBnRelu:
      return conv_flops(node.kernel, node.in_shape.channels, out.channels, out.height, out.width) +
             (kBatchNormFlopsPerElement + kReluFlopsPerElement) * out_elems;
    case LayerKind::Downsample: {
      const std::uint64_t pooled = static_cast<std::uint64_t>(out.height) * out.width * node.in_shape.channels;
      return 3 * pooled + conv_flops(1, node.in_shape.channels, out.channels, out.height, out.width) +
             kBatchNormFlopsPerElement * out_elems;
    }
    case LayerKind::MaxPool3x3:
      return 8 * out_elems;
    case LayerKind::Add:
      return (node.inputs.size() - 1) * out_elems;
    case LayerKind::Concat:
      return 0;
    case LayerKind::GlobalAvgPool:
      return graph.nodes.at(node.inputs.front()).out_shape.size();
    case LayerKind::Dense:
      return dense_flops(node.in_shape.channels, out.channels, true);
  }
  return 0;
}

std::uint64_t count_inference_flops(const LayerGraph& graph) {
  std::uint64_t total = 0;
  for (const auto& node : graph.nodes) total += layer_flops(graph, node);
  return total;
}

std::uint64_t count_params(const LayerGraph& graph) {
  std::uint64_t total = 0;
  for (const auto& node : graph.nodes) {
    const std::uint64_t cin = node.in_shape.channels, cout = node.out_shape.channels;
    switch (node.kind) {
      case LayerKind::ConvBnRelu:
      case LayerKind::Downsample:
        total += static_cast<std::uint64_t>(node.kernel) * node.kernel * cin * cout + 2 * cout;
        break;
      case LayerKind::Dense:
        total += cin * cout + cout;
        break;
      default:
        break;
    }
  }
  return total;
}

namespace {

using U = FlopThirds;

}  // namespace

FlopThirds kernel_evaluation_flops_thirds(const NngpCostArgs& a) {
  const U n_all = U(a.n_train) + a.n_val;
  return 3 * U(a.n_ensemble) * (U(a.inference_flops) * n_all + 2 * U(a.feature_dim) * a.n_train * n_all);
}

FlopThirds gp_inference_flops_thirds(const NngpCostArgs& a) {
  const U n_all = U(a.n_train) + a.n_val;
  const U nd = a.n_train;
  return U(a.num_regs) * (nd * nd * nd + 12 * U(a.num_labels) * nd * n_all);
}

FlopThirds nngp_flops_thirds(const NngpCostArgs& a) {
  const U n_all = U(a.n_train) + a.n_val;
  const U nd = a.n_train;
  return 3 * U(a.n_ensemble) * a.inference_flops * n_all + U(a.num_regs) * nd * nd * nd +
         6 * (U(a.feature_dim) * a.n_ensemble + 2 * U(a.num_labels) * a.num_regs) * nd * n_all;
}

double to_flops(FlopThirds thirds) { return static_cast<double>(thirds / 3) + static_cast<double>(thirds % 3) / 3.0; }

NngpCost nngp_flops(const NngpCostArgs& a) {
  return {to_flops(kernel_evaluation_flops_thirds(a)), to_flops(gp_inference_flops_thirds(a)),
          to_flops(nngp_flops_thirds(a))};
}

std::uint64_t training_flops(std::uint64_t inference_flops, std::uint64_t epochs, std::uint64_t n_train_all,
                             std::uint64_t n_val_all) {
  const std::uint64_t step_flops = 2 * inference_flops;  // G_A
  return epochs * step_flops * n_train_all + inference_flops * n_val_all;
}

CostBreakdown cost_breakdown(const LayerGraph& graph, const NngpCostArgs& nngp, const TrainingCostArgs& training) {
  CostBreakdown c;
  c.inference_flops = count_inference_flops(graph);
  c.training_step_flops = 2 * c.inference_flops;
  NngpCostArgs args = nngp;
  args.inference_flops = c.inference_flops;
  args.feature_dim = static_cast<std::uint64_t>(graph.feature_dim());
  const NngpCost n = nngp_flops(args);
  c.kernel_evaluation_flops = n.kernel_evaluation;
  c.gp_inference_flops = n.gp_inference;
  c.total_nngp_flops = n.total;
  c.training_flops = training_flops(c.inference_flops, training.epochs, training.n_train_all, training.n_val_all);
  c.param_count = count_params(graph);
  return c;
}

}  // namespace nngpnas
