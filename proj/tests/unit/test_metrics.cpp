#include "doctest.h"
#include "oracles.hpp"
#include "test_util.hpp"

#include "nngpnas/metrics.hpp"

using namespace nngpnas;
using testutil::code_of;

namespace {

ScorePairSet random_pairs(std::size_t m, std::uint64_t seed, bool with_ties) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> coarse(0, 5);
  ScorePairSet s;
  for (std::size_t i = 0; i < m; ++i) {
    const double t = with_ties ? coarse(rng) : nd(rng);
    s.truth.push_back(t);
    s.proxy.push_back(with_ties ? std::round(t + nd(rng)) : t + nd(rng));
  }
  return s;
}

}  // namespace

TEST_CASE("kendall_tau examples") {
  CHECK(kendall_tau({{1, 2, 3}, {1, 2, 3}, {}}) == 1.0);
  CHECK(kendall_tau({{1, 2, 3}, {3, 2, 1}, {}}) == -1.0);
  CHECK(kendall_tau({{1, 1, 2}, {1, 2, 3}, {}}) == doctest::Approx(2.0 / std::sqrt(6.0)).epsilon(1e-15));
  const KendallCounts k = kendall_counts({{1, 1, 2}, {1, 2, 3}, {}});
  CHECK(k.concordant == 2);
  CHECK(k.discordant == 0);
  CHECK(k.proxy_ties == 1);
  CHECK(k.truth_ties == 0);
  CHECK(code_of([] { kendall_tau({{1, 1, 1}, {1, 2, 3}, {}}); }) == ErrorCode::DegenerateRanking);
  CHECK(code_of([] { kendall_tau({{1, 2}, {5, 5}, {}}); }) == ErrorCode::DegenerateRanking);
  CHECK(code_of([] { kendall_tau({{1}, {1}, {}}); }) == ErrorCode::DegenerateRanking);
  CHECK(code_of([] { kendall_tau({{1, 2}, {1}, {}}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { kendall_tau({{1, NAN}, {1, 2}, {}}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("kendall_tau matches pair enumeration and symmetries") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const bool ties = s % 2 == 0;
    const ScorePairSet p = random_pairs(5 + s * 3, s, ties);
    const double tau = kendall_tau(p);
    CHECK(tau == doctest::Approx(oracle::kendall_pairs(p.proxy, p.truth)).epsilon(1e-14));
    // swapping roles swaps T and U; the formula is symmetric under that swap
    CHECK(kendall_tau({p.truth, p.proxy, {}}) == doctest::Approx(tau).epsilon(1e-14));
    // strictly increasing transform of the proxy
    ScorePairSet q = p;
    for (auto& v : q.proxy) v = std::exp(v) * 3 + 1;
    CHECK(kendall_tau(q) == tau);
    if (!ties) {
      ScorePairSet r = p;
      for (auto& v : r.truth) v = -v;
      CHECK(kendall_tau(r) == doctest::Approx(-tau).epsilon(1e-14));
    }
  }
}

TEST_CASE("pearson") {
  ScorePairSet a{{1, 2, 3, 4}, {3, 5, 7, 9}, {}};
  CHECK(pearson(a) == doctest::Approx(1.0).epsilon(1e-15));
  ScorePairSet b{{1, 2, 3, 4}, {-1, -2, -3, -4}, {}};
  CHECK(pearson(b) == doctest::Approx(-1.0).epsilon(1e-15));
  for (std::uint64_t s = 0; s < 20; ++s) {
    ScorePairSet p = random_pairs(100, s + 100, false);
    for (auto& v : p.proxy) v += 1000.0;  // offset exercises the single-pass update
    CHECK(std::abs(pearson(p) - oracle::pearson_two_pass(p.proxy, p.truth)) < 1e-12);
  }
  CHECK(code_of([] { pearson({{1, 1, 1}, {1, 2, 3}, {}}); }) == ErrorCode::ZeroVariance);
  CHECK(code_of([] { pearson({{1}, {2}, {}}); }) == ErrorCode::ZeroVariance);
}

TEST_CASE("pqetp") {
  CHECK(pqetp({{1, 2, 3, 4}, {1, 2, 3, 4}, {}}, 2.5) == 1.0);
  CHECK(pqetp({{5, 5, 5, 5}, {1, 2, 3, 4}, {}}, 2.5) == 0.5);
  CHECK(pqetp({{0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}, {}}, 0.5) == 0.75);
  CHECK(code_of([] { pqetp({{1, 2}, {1, 2}, {}}, 5.0); }) == ErrorCode::SingleClass);
  CHECK(code_of([] { pqetp({{1, 2}, {1, 2}, {}}, 0.0); }) == ErrorCode::SingleClass);
  for (std::uint64_t s = 0; s < 30; ++s) {
    const bool ties = s % 3 == 0;
    const ScorePairSet p = random_pairs(20 + s, s + 7, ties);
    const double thr = ties ? 2.0 : 0.0;
    const double a = pqetp(p, thr);
    CHECK(a == doctest::Approx(oracle::auroc_pairs(p.proxy, p.truth, thr)).epsilon(1e-12));
    ScorePairSet q = p;
    for (auto& v : q.proxy) v = v * v * v + 2 * v;  // strictly increasing
    CHECK(pqetp(q, thr) == doctest::Approx(a).epsilon(1e-14));
    if (!ties) {
      for (auto& v : q.proxy) v = -v;
      CHECK(pqetp(q, thr) + a == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("discovered performance") {
  const ScorePairSet p{{0.3, 0.9, 0.1, 0.9, 0.5}, {0.5, 0.2, 0.99, 0.7, 0.6}, {"e", "d", "c", "b", "a"}};
  CHECK(discovered_performance(p, 5) == 0.99);
  // proxy tie at the top: "b" wins on id
  CHECK(top_k_by_proxy(p, 1) == std::vector<std::size_t>{3});
  CHECK(discovered_performance(p, 1) == 0.7);
  CHECK(top_k_by_proxy(p, 3) == std::vector<std::size_t>{3, 1, 4});
  double prev = 0.0;
  for (std::size_t k = 1; k <= 5; ++k) {
    const double d = discovered_performance(p, k);
    CHECK(d >= prev);
    prev = d;
  }
  const ScorePairSet same{{1, 4, 2, 3}, {1, 4, 2, 3}, {}};
  for (std::size_t k = 1; k <= 4; ++k) CHECK(discovered_performance(same, k) == 4.0);
  // without ids the position breaks ties
  CHECK(top_k_by_proxy({{1, 1}, {0, 0}, {}}, 1) == std::vector<std::size_t>{0});
  CHECK(code_of([&] { discovered_performance(p, 0); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { discovered_performance(p, 6); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("discovered performance with an uninformative proxy matches order statistics") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u;
  ScorePairSet p;
  for (int i = 0; i < 100; ++i) p.truth.push_back(u(rng));
  p.proxy.resize(100);
  const double expected = oracle::expected_subset_max(p.truth, 10);
  double total = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    for (auto& v : p.proxy) v = u(rng);
    total += discovered_performance(p, 10);
  }
  CHECK(std::abs(total / trials / expected - 1.0) < 0.01);
}

TEST_CASE("invariance of ranking metrics under monotone proxy transforms") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    ScorePairSet p = random_pairs(40, s + 300, false);
    ScorePairSet q = p;
    for (auto& v : q.proxy) v = std::atan(v) + 5;
    for (std::size_t k : {1u, 5u, 40u}) CHECK(discovered_performance(p, k) == discovered_performance(q, k));
  }
}

TEST_CASE("mnas_reward") {
  CHECK(mnas_reward(0.8, 75.0) == 0.8);
  CHECK(mnas_reward(0.0, 20.0) == 0.0);
  CHECK(mnas_reward(0.5, 150.0, 75.0) == doctest::Approx(0.47631899902196867).epsilon(1e-15));
  CHECK(mnas_reward(0.6, 50.0) > mnas_reward(0.5, 50.0));
  CHECK(mnas_reward(0.6, 50.0) > mnas_reward(0.6, 60.0));
  CHECK(code_of([] { mnas_reward(0.5, 0.0); }) == ErrorCode::NonPositiveLatency);
  CHECK(code_of([] { mnas_reward(0.5, -3.0); }) == ErrorCode::NonPositiveLatency);
}
