#include "doctest.h"
#include "test_util.hpp"

#include <random>

#include "nngpnas/costmodel.hpp"

using namespace nngpnas;

namespace {

// Counts multiplies and adds of a naive SAME conv, padding taps included.
std::uint64_t naive_conv_ops(int k, int cin, int cout, int h, int w) {
  std::uint64_t ops = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int co = 0; co < cout; ++co)
        for (int ci = 0; ci < cin; ++ci)
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) ops += 2;
  return ops;
}

NngpCostArgs random_args(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint64_t> small(0, 50), big(0, 1'000'000'000'000ULL), n(0, 20000);
  return {big(rng), small(rng) * 40, small(rng), n(rng), n(rng), small(rng), small(rng)};
}

}  // namespace

TEST_CASE("per-op conventions") {
  CHECK(dense_flops(7, 3, false) == 42);
  CHECK(dense_flops(7, 3, true) == 45);
  CHECK(conv_flops(3, 16, 16, 8, 8) == 294912);
  CHECK(conv_flops(3, 16, 16, 8, 8) == naive_conv_ops(3, 16, 16, 8, 8));
  CHECK(conv_flops(1, 5, 7, 3, 2) == naive_conv_ops(1, 5, 7, 3, 2));
}

TEST_CASE("inference flops of the identity network") {
  const NetworkPlan plan{16, 2, 1, {8, 8, 3}, 10};
  const LayerGraph g = assemble_network(testutil::identity_cell(), plan);
  // stem conv + BN + ReLU, downsample (pool comparisons, 1x1 conv, BN), global pool, dense
  const std::uint64_t stem = conv_flops(3, 3, 16, 8, 8) + 3 * 8 * 8 * 16;
  const std::uint64_t down = 3 * 4 * 4 * 16 + conv_flops(1, 16, 32, 4, 4) + 2 * 4 * 4 * 32;
  const std::uint64_t pool = 4 * 4 * 32;
  const std::uint64_t dense = dense_flops(32, 10, true);
  CHECK(count_inference_flops(g) == stem + down + pool + dense);
}

TEST_CASE("parameter counts") {
  const LayerGraph g = assemble_network(testutil::identity_cell(), NetworkPlan{});
  CHECK(count_params(g) == 174218);

  // stem-dominated toy: conv_chain with a single block, the 3x3 cell conv is C*C*9
  auto conv_params = [](int stem) {
    const LayerGraph cg = assemble_network(testutil::conv_chain_cell(), NetworkPlan{stem, 1, 1, {8, 8, 3}, 10});
    std::uint64_t total = 0;
    for (const auto& node : cg.nodes)
      if (node.kind == LayerKind::ConvBnRelu)
        total += static_cast<std::uint64_t>(node.kernel) * node.kernel * node.in_shape.channels *
                 node.out_shape.channels;
    return total;
  };
  const double ratio = static_cast<double>(conv_params(64)) / static_cast<double>(conv_params(32));
  CHECK(ratio > 3.8);
  CHECK(ratio <= 4.0);
}

TEST_CASE("nngp flops") {
  const NngpCostArgs large{2'510'000'000ULL, 512, 8, 8000, 10000, 10, 20};
  CHECK(nngp_flops_thirds(large) == FlopThirds(1098444544000000ULL));
  CHECK(kernel_evaluation_flops_thirds(large) == 3 * FlopThirds(362619648000000ULL));
  CHECK(gp_inference_flops_thirds(large) == FlopThirds(10585600000000ULL));
  const NngpCost c = nngp_flops(large);
  CHECK(c.total == doctest::Approx(366148181333333.33).epsilon(1e-15));
  CHECK(c.kernel_evaluation == 362619648000000.0);
  CHECK(c.gp_inference == doctest::Approx(10585600000000.0 / 3).epsilon(1e-15));

  NngpCostArgs zero = large;
  zero.n_ensemble = 0;
  zero.num_regs = 0;
  CHECK(nngp_flops_thirds(zero) == 0);

  NngpCostArgs twice = large;
  twice.n_ensemble *= 2;
  CHECK(kernel_evaluation_flops_thirds(twice) == 2 * kernel_evaluation_flops_thirds(large));
  CHECK(gp_inference_flops_thirds(twice) == gp_inference_flops_thirds(large));
}

TEST_CASE("decomposition identity and monotonicity over random arguments") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 10000; ++t) {
    const NngpCostArgs a = random_args(rng);
    REQUIRE(kernel_evaluation_flops_thirds(a) + gp_inference_flops_thirds(a) == nngp_flops_thirds(a));
    for (int field = 0; field < 7; ++field) {
      NngpCostArgs b = a;
      std::uint64_t* f[] = {&b.inference_flops, &b.feature_dim, &b.n_ensemble, &b.n_train,
                            &b.n_val,           &b.num_labels,  &b.num_regs};
      *f[field] += 1 + t % 5;
      REQUIRE(nngp_flops_thirds(b) >= nngp_flops_thirds(a));
      REQUIRE(kernel_evaluation_flops_thirds(b) >= kernel_evaluation_flops_thirds(a));
      REQUIRE(gp_inference_flops_thirds(b) >= gp_inference_flops_thirds(a));
    }
    const std::uint64_t fa = a.inference_flops % 1'000'000'000, e = a.n_ensemble, nt = a.n_train, nv = a.n_val;
    REQUIRE(training_flops(fa + 1, e, nt, nv) >= training_flops(fa, e, nt, nv));
    REQUIRE(training_flops(fa, e + 1, nt, nv) >= training_flops(fa, e, nt, nv));
    REQUIRE(training_flops(fa, e, nt + 1, nv) >= training_flops(fa, e, nt, nv));
    REQUIRE(training_flops(fa, e, nt, nv + 1) >= training_flops(fa, e, nt, nv));
  }
}

TEST_CASE("training flops") {
  CHECK(training_flops(1000, 0, 40000, 10000) == 1000ULL * 10000);
  const std::uint64_t e4 = training_flops(1000, 4, 40000, 0), e12 = training_flops(1000, 12, 40000, 0);
  CHECK(e12 == 3 * e4);
  CHECK(training_flops(2'510'000'000ULL, 12, 40000, 10000) == 2434700000000000ULL);
}

TEST_CASE("cost breakdown") {
  const LayerGraph g = assemble_network(testutil::branchy_cell(), NetworkPlan{8, 3, 1, {8, 8, 3}, 10});
  const CostBreakdown c = cost_breakdown(g, {0, 0, 2, 20, 30, 10, 20}, {5, 100, 50});
  CHECK(c.inference_flops == count_inference_flops(g));
  CHECK(c.training_step_flops == 2 * c.inference_flops);
  CHECK(c.total_nngp_flops == doctest::Approx(c.kernel_evaluation_flops + c.gp_inference_flops).epsilon(1e-15));
  CHECK(c.training_flops == training_flops(c.inference_flops, 5, 100, 50));
  CHECK(c.param_count == count_params(g));
  NngpCostArgs args{c.inference_flops, static_cast<std::uint64_t>(g.feature_dim()), 2, 20, 30, 10, 20};
  CHECK(c.total_nngp_flops == nngp_flops(args).total);
}

TEST_CASE("default-plan population lands in the GFLOPs range") {
  double total = 0;
  const int count = 40;
  for (int i = 0; i < count; ++i) {
    const LayerGraph g = assemble_network(sample_random_arch(1000 + i), NetworkPlan{});
    const double fa = static_cast<double>(count_inference_flops(g));
    CHECK(fa > 1e7);
    total += fa;
  }
  const double mean = total / count;
  MESSAGE("population mean F_A = " << mean);
  CHECK(mean > 2.51e9 / 10);
  CHECK(mean < 2.51e9 * 10);
}
