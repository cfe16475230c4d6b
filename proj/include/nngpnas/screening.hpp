#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace nngpnas {

struct PoolEntry {
  std::string id;
  std::optional<double> nngp_score;
  std::optional<double> short_train_score;
  std::optional<double> truth_score;
  std::string provenance;  // configuration that produced the scores
};

struct SearchPool {
  std::vector<PoolEntry> entries;

  std::size_t size() const { return entries.size(); }
  void validate() const;
};

struct ScreeningDecision {
  std::string id;
  std::size_t rank = 0;  // 1-based rank by NNGP score
  bool kept = false;
};

struct ScreeningResult {
  SearchPool kept;  // original pool order
  std::vector<ScreeningDecision> decisions;  // rank order
};

/// Keeps the ceil(p * M) entries with the highest NNGP score (ties: lowest id).
ScreeningResult reduce_search_space(const SearchPool& pool, double keep_fraction);

std::size_t kept_count(std::size_t pool_size, double keep_fraction);

struct HybridModel {
  double w_train = 0.0;
  double w_nngp = 0.0;
  double bias = 0.0;
  std::array<double, 3> std_errors{};  // (w_train, w_nngp, bias); zero when the fit has no residual dof
  bool fitted = false;
};

/// Least squares of target on [short_train_score, nngp_score, 1] via column-pivoted QR.
HybridModel fit_hybrid(const std::vector<double>& short_train, const std::vector<double>& nngp,
                       const std::vector<double>& target);
/// Uses the pool's short-train and NNGP scores; target is aligned with the pool entries.
HybridModel fit_hybrid(const SearchPool& pool, const std::vector<double>& target);

double hybrid_score(const HybridModel& model, double short_train, double nngp);
double hybrid_score(const HybridModel& model, const PoolEntry& entry);

struct DiscoveryEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::vector<double> per_subset;
};

/// Draws `n_subsets` uniform subsets of `subset_size` entries (without replacement, seeded) and returns the mean
/// and standard error of discovered_performance(metric, truth, k) over them.
DiscoveryEstimate simulate_discovery(const std::vector<double>& metric, const std::vector<double>& truth,
                                     std::size_t subset_size, std::size_t n_subsets, std::size_t k,
                                     std::uint64_t seed);

}  // namespace nngpnas
