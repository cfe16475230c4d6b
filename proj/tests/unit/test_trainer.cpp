#include "doctest.h"
#include "gradcheck.hpp"
#include "test_util.hpp"

#include "nngpnas/dataset.hpp"
#include "nngpnas/trainer.hpp"

using namespace nngpnas;
using testutil::code_of;

namespace {

LabeledSet random_pool(int n, TensorShape shape, int num_labels, std::uint64_t seed) {
  LabeledSet s;
  s.inputs = testutil::random_tensor(n, shape, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_int_distribution<int> lab(0, num_labels - 1);
  for (int i = 0; i < n; ++i) s.labels.push_back(lab(rng));
  return s;
}

double network_loss(const LayerGraph& g, const Parameters& p, const LabeledSet& mb) {
  const ForwardTrace t = run_graph(g, p, mb.inputs, BatchNormMode::BatchStatistics);
  return layers::softmax_cross_entropy(t.outputs[g.logits_node], mb.labels).loss;
}

}  // namespace

TEST_CASE("whole-network backward matches finite differences") {
  for (const CellSpec& cell : {testutil::branchy_cell(), testutil::conv_chain_cell()}) {
    const LayerGraph g = assemble_network(cell, NetworkPlan{4, 2, 1, {4, 4, 2}, 3});
    // A max-pool near-tie within one finite-difference step spoils every upstream estimate, so take the first
    // input draw whose loss is smooth at every parameter.
    bool checked = false;
    for (std::uint64_t seed = 0; seed < 10 && !checked; ++seed) {
      InitConfig cfg;
      cfg.seed = seed;
      Parameters p = init_params(g, cfg);
      std::mt19937_64 rng(seed + 100);
      std::normal_distribution<double> nd(0.0, 0.3);
      for (auto& n : p.nodes) {
        for (auto& v : n.gamma) v += nd(rng);
        for (auto& v : n.beta) v += nd(rng);
        for (auto& v : n.bias) v += nd(rng);
      }
      const LabeledSet mb = random_pool(3, {4, 4, 2}, 3, seed + 200);
      const ForwardTrace t = run_graph(g, p, mb.inputs, BatchNormMode::BatchStatistics);
      const auto loss = layers::softmax_cross_entropy(t.outputs[g.logits_node], mb.labels);
      const Parameters grads = backward(g, p, t, loss.dlogits);

      struct Item {
        std::string what;
        std::vector<double> analytic;
        gradcheck::SmoothGrad numeric;
      };
      std::vector<Item> items;
      std::size_t kinks = 0;
      for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        auto add = [&](std::vector<double>& param, const std::vector<double>& analytic, const char* what) {
          if (param.empty()) return;
          REQUIRE(analytic.size() == param.size());
          auto numeric = gradcheck::smooth_numeric_grad(param, [&] { return network_loss(g, p, mb); });
          kinks += numeric.kinks;
          items.push_back({g.nodes[i].name + " " + what, analytic, std::move(numeric)});
        };
        add(p.nodes[i].weight, grads.nodes[i].weight, "weight");
        add(p.nodes[i].bias, grads.nodes[i].bias, "bias");
        add(p.nodes[i].gamma, grads.nodes[i].gamma, "gamma");
        add(p.nodes[i].beta, grads.nodes[i].beta, "beta");
      }
      if (kinks > 0) continue;
      for (const auto& it : items) {
        INFO(it.what);
        CHECK(gradcheck::compare(it.analytic, it.numeric.grad) < 1e-5);
      }
      checked = true;
    }
    CHECK(checked);
  }
}

TEST_CASE("zero learning rate only moves batch-norm statistics") {
  const LayerGraph g = assemble_network(testutil::branchy_cell(), NetworkPlan{4, 2, 1, {4, 4, 2}, 3});
  const LabeledSet pool = random_pool(20, {4, 4, 2}, 3, 1);
  InitConfig icfg;
  const Parameters p0 = init_params(g, icfg);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.0;
  const Parameters p1 = train_from(g, p0, pool, cfg);
  bool stats_moved = false;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    CHECK(p1.nodes[i].weight == p0.nodes[i].weight);
    CHECK(p1.nodes[i].bias == p0.nodes[i].bias);
    CHECK(p1.nodes[i].gamma == p0.nodes[i].gamma);
    CHECK(p1.nodes[i].beta == p0.nodes[i].beta);
    stats_moved |= p1.nodes[i].moving_mean != p0.nodes[i].moving_mean;
  }
  CHECK(stats_moved);
}

TEST_CASE("training fits linearly separable data") {
  const LabeledSet pool = make_synthetic(2, 4, 20, 6.0, 3);
  const LayerGraph g = assemble_network(testutil::identity_cell(), NetworkPlan{8, 1, 1, {1, 1, 4}, 2});
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.1;
  int epochs_seen = 0;
  const Parameters p = train(g, {}, pool, cfg, [&](int e, const Parameters&) { epochs_seen = e; });
  CHECK(epochs_seen == 30);
  CHECK(evaluate_accuracy(g, p, pool) == 1.0);
}

TEST_CASE("training is deterministic and seed dependent") {
  const LayerGraph g = assemble_network(testutil::conv_chain_cell(), NetworkPlan{4, 2, 1, {4, 4, 2}, 3});
  const LabeledSet pool = random_pool(30, {4, 4, 2}, 3, 2);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 7;
  const Parameters a = train(g, {}, pool, cfg);
  CHECK(train(g, {}, pool, cfg) == a);
  cfg.seed = 1;
  CHECK_FALSE(train(g, {}, pool, cfg) == a);
}

TEST_CASE("evaluate_accuracy") {
  const LayerGraph g = assemble_network(testutil::branchy_cell(), NetworkPlan{8, 2, 1, {4, 4, 3}, 10});
  InitConfig icfg;
  icfg.seed = 4;
  LabeledSet pool = random_pool(1000, {4, 4, 3}, 10, 6);
  const Parameters p = warmup_batchnorm(g, init_params(g, icfg), pool.inputs.slice(0, 100), 0.0);

  SUBCASE("chance level on random labels") {
    const double acc = evaluate_accuracy(g, p, pool);
    CHECK(acc > 0.1 - 0.04);
    CHECK(acc < 0.1 + 0.04);
  }
  SUBCASE("batch size does not matter") {
    const double a = evaluate_accuracy(g, p, pool, 128);
    CHECK(evaluate_accuracy(g, p, pool, 1) == a);
    CHECK(evaluate_accuracy(g, p, pool, 333) == a);
  }
  SUBCASE("own predictions score 1") {
    const Tensor logits = forward_logits(g, p, pool.inputs);
    for (int b = 0; b < logits.n; ++b) {
      const double* z = logits.data.data() + b * 10;
      pool.labels[b] = static_cast<int>(std::max_element(z, z + 10) - z);
    }
    CHECK(evaluate_accuracy(g, p, pool) == 1.0);
  }
  CHECK(evaluate_accuracy(g, p, LabeledSet{Tensor(0, {4, 4, 3}), {}}) == 0.0);
  CHECK(code_of([&] { evaluate_accuracy(g, p, pool, 0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("training errors") {
  const LayerGraph g = assemble_network(testutil::identity_cell(), NetworkPlan{4, 1, 1, {2, 2, 1}, 2});
  LabeledSet pool = random_pool(8, {2, 2, 1}, 2, 1);
  pool.inputs.data[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 1;
  CHECK(code_of([&] { train(g, {}, pool, cfg); }) == ErrorCode::DivergedLoss);
  cfg.batch_size = 0;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
  cfg = {};
  cfg.epochs = -1;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
  cfg = {};
  CHECK(code_of([&] { train(g, {}, LabeledSet{Tensor(0, {2, 2, 1}), {}}, cfg); }) == ErrorCode::InvalidArgument);
}
