#pragma once

#include <string>
#include <vector>

namespace nngpnas {

/// A proxy score and a ground-truth score per architecture.
struct ScorePairSet {
  std::vector<double> proxy;
  std::vector<double> truth;
  std::vector<std::string> ids;  // optional; when empty the position is the id

  std::size_t size() const { return proxy.size(); }
  void validate() const;
};

struct KendallCounts {
  long long concordant = 0;   // P
  long long discordant = 0;   // Q
  long long proxy_ties = 0;   // T: tied in proxy only
  long long truth_ties = 0;   // U: tied in truth only
};

KendallCounts kendall_counts(const ScorePairSet& pairs);

/// tau = (P - Q) / sqrt((P + Q + U)(P + Q + T)), pairs tied in both orderings counted in neither.
double kendall_tau(const ScorePairSet& pairs);

/// Product-moment correlation (single-pass co-moment accumulation).
double pearson(const ScorePairSet& pairs);

/// AUROC of proxy for the event truth > threshold (Mann-Whitney with mid-ranks; proxy ties count 1/2).
double pqetp(const ScorePairSet& pairs, double threshold);

/// Positions of the top-k entries by proxy (descending; ties broken by lowest id).
std::vector<std::size_t> top_k_by_proxy(const ScorePairSet& pairs, std::size_t k);

/// Best truth among the top-k entries by proxy.
double discovered_performance(const ScorePairSet& pairs, std::size_t k);

inline constexpr double kMnasTargetLatencyMs = 75.0;

/// a * (l_T / l)^0.07
double mnas_reward(double accuracy, double latency_ms, double target_latency_ms = kMnasTargetLatencyMs);

}  // namespace nngpnas
