#include "nngpnas/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "nngpnas/error.hpp"
#include "nngpnas/layers.hpp"
#include "nngpnas/rng.hpp"

namespace nngpnas {

void TrainConfig::validate() const {
  if (epochs < 0) throw Error(ErrorCode::InvalidArgument, "epochs must be non-negative");
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch size must be positive");
  if (!(learning_rate >= 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be non-negative");
  if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "bn momentum must be in [0, 1]");
}

namespace {

void accumulate(Tensor& dst, Tensor&& g) {
  if (dst.data.empty()) {
    dst = std::move(g);
    return;
  }
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += g.data[i];
}

}  // namespace

Parameters backward(const LayerGraph& graph, const Parameters& params, const ForwardTrace& trace,
                    const Tensor& dlogits) {
  const int last = static_cast<int>(trace.outputs.size()) - 1;
  std::vector<Tensor> grad_out(trace.outputs.size());
  grad_out[last] = dlogits;
  Parameters grads;
  grads.nodes.resize(graph.nodes.size());
  for (int i = last; i >= 1; --i) {
    Tensor& dy = grad_out[i];
    if (dy.data.empty()) continue;
    const LayerNode& node = graph.nodes[i];
    const NodeParams& p = params.nodes[i];
    NodeParams& g = grads.nodes[i];
    const NodeCache& cache = trace.caches[i];
    switch (node.kind) {
      case LayerKind::Dense: {
        g.weight.resize(p.weight.size());
        g.bias.resize(p.bias.size());
        Tensor dx;
        layers::dense_backward(trace.outputs[node.inputs[0]], p.weight, dy, &dx, g.weight, g.bias);
        accumulate(grad_out[node.inputs[0]], std::move(dx));
        break;
      }
      case LayerKind::GlobalAvgPool:
        accumulate(grad_out[node.inputs[0]], layers::global_avg_pool_backward(node.in_shape, dy));
        break;
      case LayerKind::Add:
        for (int src : node.inputs) accumulate(grad_out[src], Tensor(dy));
        break;
      case LayerKind::Concat: {
        std::vector<const Tensor*> xs;
        for (int src : node.inputs) xs.push_back(&trace.outputs[src]);
        auto parts = layers::concat_backward(xs, dy);
        for (std::size_t k = 0; k < parts.size(); ++k) accumulate(grad_out[node.inputs[k]], std::move(parts[k]));
        break;
      }
      case LayerKind::MaxPool3x3:
        accumulate(grad_out[node.inputs[0]],
                   layers::max_pool_backward(trace.outputs[node.inputs[0]], cache.pool_argmax, dy));
        break;
      case LayerKind::ConvBnRelu:
      case LayerKind::Downsample: {
        const Tensor d_bn_out = node.kind == LayerKind::ConvBnRelu ? layers::relu_backward(trace.outputs[i], dy) : dy;
        g.gamma.resize(p.gamma.size());
        g.beta.resize(p.beta.size());
        const Tensor d_conv_out = layers::batchnorm_backward(cache.pre_bn, cache.stats, p.gamma, d_bn_out, g.gamma, g.beta);
        g.weight.resize(p.weight.size());
        Tensor d_conv_in;
        layers::conv2d_backward(cache.conv_in, p.weight, node.kernel, d_conv_out, &d_conv_in, g.weight);
        if (node.kind == LayerKind::Downsample) {
          accumulate(grad_out[node.inputs[0]],
                     layers::max_pool_backward(trace.outputs[node.inputs[0]], cache.pool_argmax, d_conv_in));
        } else {
          accumulate(grad_out[node.inputs[0]], std::move(d_conv_in));
        }
        break;
      }
      case LayerKind::Input:
        break;
    }
    dy = Tensor();  // release
  }
  return grads;
}

namespace {

struct Velocity {
  std::vector<NodeParams> nodes;
};

void sgd_step(NodeParams& p, const NodeParams& g, NodeParams& v, double lr, double momentum, double weight_decay) {
  auto update = [&](std::vector<double>& w, const std::vector<double>& gw, std::vector<double>& vw, double wd) {
    if (gw.empty()) return;
    if (vw.empty()) vw.assign(w.size(), 0.0);
    for (std::size_t k = 0; k < w.size(); ++k) {
      vw[k] = momentum * vw[k] + gw[k] + wd * w[k];
      w[k] -= lr * vw[k];
    }
  };
  update(p.weight, g.weight, v.weight, weight_decay);
  update(p.bias, g.bias, v.bias, 0.0);
  update(p.gamma, g.gamma, v.gamma, 0.0);
  update(p.beta, g.beta, v.beta, 0.0);
}

}  // namespace

Parameters train_from(const LayerGraph& graph, Parameters params, const LabeledSet& train_pool,
                      const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  const std::size_t n = train_pool.size();
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "training pool is empty");
  const std::size_t batch = std::min<std::size_t>(cfg.batch_size, n);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const double total_steps = static_cast<double>(steps_per_epoch) * cfg.epochs;
  Velocity velocity{std::vector<NodeParams>(params.nodes.size())};
  std::vector<std::size_t> order(n);
  std::size_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < n; begin += batch, ++step) {
      const std::size_t end = std::min(begin + batch, n);
      const auto rows = std::span(order).subspan(begin, end - begin);
      const LabeledSet mb = train_pool.subset(rows);
      // A single-sample batch has zero batch variance; skip the degenerate tail.
      if (mb.size() < 2 && n >= 2) continue;
      const ForwardTrace trace = run_graph(graph, params, mb.inputs, BatchNormMode::BatchStatistics);
      const auto loss = layers::softmax_cross_entropy(trace.outputs[graph.logits_node], mb.labels);
      if (!std::isfinite(loss.loss))
        throw Error(ErrorCode::DivergedLoss, fmt::format("non-finite loss at epoch {} step {}", epoch + 1, step));
      const Parameters grads = backward(graph, params, trace, loss.dlogits);
      const double lr = cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * step / total_steps));
      for (std::size_t i = 0; i < params.nodes.size(); ++i)
        sgd_step(params.nodes[i], grads.nodes[i], velocity.nodes[i], lr, cfg.momentum, cfg.weight_decay);
      update_moving_statistics(graph, trace, cfg.bn_momentum, params);
    }
    if (on_epoch) on_epoch(epoch + 1, params);
  }
  return params;
}

Parameters train(const LayerGraph& graph, const InitConfig& init_cfg, const LabeledSet& train_pool,
                 const TrainConfig& cfg, const EpochCallback& on_epoch) {
  return train_from(graph, init_params(graph, init_cfg), train_pool, cfg, on_epoch);
}

double evaluate_accuracy(const LayerGraph& graph, const Parameters& params, const LabeledSet& pool, int batch_size) {
  if (pool.size() == 0) return 0.0;
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch size must be positive");
  std::size_t correct = 0;
  const int l = graph.num_classes();
  for (std::size_t begin = 0; begin < pool.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(begin + static_cast<std::size_t>(batch_size), pool.size());
    const Tensor logits = forward_logits(graph, params, pool.inputs.slice(begin, end));
    for (int b = 0; b < logits.n; ++b) {
      const double* z = logits.data.data() + static_cast<std::size_t>(b) * l;
      int best = 0;
      for (int c = 1; c < l; ++c)
        if (z[c] > z[best]) best = c;
      correct += best == pool.labels[begin + b] ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(pool.size());
}

}  // namespace nngpnas
