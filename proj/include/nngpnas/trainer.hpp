#pragma once

#include <cstdint>
#include <functional>

#include "nngpnas/archspec.hpp"
#include "nngpnas/dataset.hpp"
#include "nngpnas/forward.hpp"

namespace nngpnas {

struct TrainConfig {
  int epochs = 4;
  int batch_size = 64;
  double learning_rate = 0.05;  // initial value of the cosine schedule
  double momentum = 0.9;
  double weight_decay = 1e-4;
  /// Moving-statistics momentum while training. Kept separate from InitConfig::bn_momentum, which
  /// governs the single NNGP warmup pass.
  double bn_momentum = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Gradients of the loss with respect to every parameter tensor (weight, bias, gamma, beta);
/// moving statistics are left empty.
Parameters backward(const LayerGraph& graph, const Parameters& params, const ForwardTrace& trace,
                    const Tensor& dlogits);

/// Called after each completed epoch (1-based) with the current parameters.
using EpochCallback = std::function<void(int epoch, const Parameters& params)>;

/// Mini-batch SGD with momentum on softmax cross-entropy, cosine learning-rate decay, training-mode
/// batch-norm. Deterministic given the seeds.
Parameters train(const LayerGraph& graph, const InitConfig& init_cfg, const LabeledSet& train_pool,
                 const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Continues training from existing parameters.
Parameters train_from(const LayerGraph& graph, Parameters params, const LabeledSet& train_pool,
                      const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Inference-mode accuracy; argmax ties go to the lowest class index.
double evaluate_accuracy(const LayerGraph& graph, const Parameters& params, const LabeledSet& pool,
                         int batch_size = 128);

}  // namespace nngpnas
