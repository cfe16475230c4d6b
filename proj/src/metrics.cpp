#include "nngpnas/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "nngpnas/error.hpp"

namespace nngpnas {

void ScorePairSet::validate() const {
  if (proxy.size() != truth.size() || (!ids.empty() && ids.size() != proxy.size()))
    throw Error(ErrorCode::InvalidArgument, "proxy, truth and ids must have equal lengths");
  for (std::size_t i = 0; i < proxy.size(); ++i)
    if (!std::isfinite(proxy[i]) || !std::isfinite(truth[i]))
      throw Error(ErrorCode::InvalidArgument, fmt::format("non-finite score at position {}", i));
}

namespace {

int sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

KendallCounts kendall_counts(const ScorePairSet& pairs) {
  pairs.validate();
  KendallCounts k;
  const std::size_t m = pairs.size();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      const int dp = sign(pairs.proxy[i] - pairs.proxy[j]);
      const int dt = sign(pairs.truth[i] - pairs.truth[j]);
      if (dp == 0 && dt == 0) continue;
      if (dp == 0) {
        ++k.proxy_ties;
      } else if (dt == 0) {
        ++k.truth_ties;
      } else if (dp == dt) {
        ++k.concordant;
      } else {
        ++k.discordant;
      }
    }
  return k;
}

double kendall_tau(const ScorePairSet& pairs) {
  if (pairs.size() < 2) throw Error(ErrorCode::DegenerateRanking, "kendall tau needs at least two entries");
  const KendallCounts k = kendall_counts(pairs);
  const double pq = static_cast<double>(k.concordant + k.discordant);
  const double denom = (pq + static_cast<double>(k.truth_ties)) * (pq + static_cast<double>(k.proxy_ties));
  if (denom == 0.0) throw Error(ErrorCode::DegenerateRanking, "all proxy or all truth values are tied");
  return static_cast<double>(k.concordant - k.discordant) / std::sqrt(denom);
}

double pearson(const ScorePairSet& pairs) {
  pairs.validate();
  if (pairs.size() < 2) throw Error(ErrorCode::ZeroVariance, "correlation needs at least two entries");
  double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double n = static_cast<double>(i + 1);
    const double dx = pairs.proxy[i] - mx;
    const double dy = pairs.truth[i] - my;
    mx += dx / n;
    my += dy / n;
    sxx += dx * (pairs.proxy[i] - mx);
    syy += dy * (pairs.truth[i] - my);
    sxy += dx * (pairs.truth[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) throw Error(ErrorCode::ZeroVariance, "proxy or truth has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double pqetp(const ScorePairSet& pairs, double threshold) {
  pairs.validate();
  const std::size_t m = pairs.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pairs.proxy[a] < pairs.proxy[b]; });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j < m && pairs.proxy[order[j]] == pairs.proxy[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1 .. j
    for (std::size_t t = i; t < j; ++t) {
      if (pairs.truth[order[t]] > threshold) {
        positive_rank_sum += mid_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = m - positives;
  if (positives == 0 || negatives == 0)
    throw Error(ErrorCode::SingleClass, fmt::format("threshold {} leaves a single class", threshold));
  const double np = static_cast<double>(positives), nn = static_cast<double>(negatives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

std::vector<std::size_t> top_k_by_proxy(const ScorePairSet& pairs, std::size_t k) {
  pairs.validate();
  if (k > pairs.size()) throw Error(ErrorCode::InvalidArgument, "k exceeds the number of entries");
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto id_less = [&](std::size_t a, std::size_t b) { return pairs.ids.empty() ? a < b : pairs.ids[a] < pairs.ids[b]; };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (pairs.proxy[a] != pairs.proxy[b]) return pairs.proxy[a] > pairs.proxy[b];
    return id_less(a, b);
  });
  order.resize(k);
  return order;
}

double discovered_performance(const ScorePairSet& pairs, std::size_t k) {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i : top_k_by_proxy(pairs, k)) best = std::max(best, pairs.truth[i]);
  return best;
}

double mnas_reward(double accuracy, double latency_ms, double target_latency_ms) {
  if (!(latency_ms > 0.0) || !(target_latency_ms > 0.0))
    throw Error(ErrorCode::NonPositiveLatency, "latencies must be positive");
  return accuracy * std::pow(target_latency_ms / latency_ms, 0.07);
}

}  // namespace nngpnas
