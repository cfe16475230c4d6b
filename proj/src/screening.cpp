#include "nngpnas/screening.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "nngpnas/error.hpp"
#include "nngpnas/metrics.hpp"
#include "nngpnas/rng.hpp"

namespace nngpnas {

void SearchPool::validate() const {
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.id).second) throw Error(ErrorCode::InvalidArgument, fmt::format("duplicate id '{}'", e.id));
    for (const auto& s : {e.nngp_score, e.short_train_score, e.truth_score})
      if (s && !std::isfinite(*s)) throw Error(ErrorCode::InvalidArgument, fmt::format("non-finite score for '{}'", e.id));
  }
}

std::size_t kept_count(std::size_t pool_size, double keep_fraction) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "keep fraction must be in (0, 1]");
  // Guard against p * M landing a hair above an integer (0.3 * 10 = 3.0000000000000004).
  const double raw = keep_fraction * static_cast<double>(pool_size);
  const double rounded = std::round(raw);
  const double count = std::abs(raw - rounded) < 1e-9 ? rounded : std::ceil(raw);
  return std::min(pool_size, static_cast<std::size_t>(count));
}

ScreeningResult reduce_search_space(const SearchPool& pool, double keep_fraction) {
  pool.validate();
  const std::size_t keep = kept_count(pool.size(), keep_fraction);
  for (const auto& e : pool.entries)
    if (!e.nngp_score) throw Error(ErrorCode::MissingScores, fmt::format("entry '{}' has no NNGP score", e.id));
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = *pool.entries[a].nngp_score, sb = *pool.entries[b].nngp_score;
    if (sa != sb) return sa > sb;
    return pool.entries[a].id < pool.entries[b].id;
  });
  ScreeningResult r;
  std::vector<bool> kept(pool.size(), false);
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    kept[order[rank]] = rank < keep;
    r.decisions.push_back({pool.entries[order[rank]].id, rank + 1, rank < keep});
  }
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (kept[i]) r.kept.entries.push_back(pool.entries[i]);
  return r;
}

HybridModel fit_hybrid(const std::vector<double>& short_train, const std::vector<double>& nngp,
                       const std::vector<double>& target) {
  const std::size_t n = target.size();
  if (short_train.size() != n || nngp.size() != n)
    throw Error(ErrorCode::InvalidArgument, "hybrid fit inputs must have equal lengths");
  if (n < 3) throw Error(ErrorCode::RankDeficient, "hybrid fit needs at least three entries");
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = short_train[i];
    x(i, 1) = nngp[i];
    x(i, 2) = 1.0;
    y(i) = target[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < 3) throw Error(ErrorCode::RankDeficient, "design matrix [train, nngp, 1] is rank deficient");
  const Eigen::Vector3d beta = qr.solve(y);
  HybridModel m;
  m.w_train = beta(0);
  m.w_nngp = beta(1);
  m.bias = beta(2);
  m.fitted = true;
  if (n > 3) {
    const double sigma2 = (y - x * beta).squaredNorm() / static_cast<double>(n - 3);
    // (X^T X)^-1 = P R^-1 R^-T P^T
    const Eigen::Matrix3d r = qr.matrixR().topLeftCorner(3, 3).triangularView<Eigen::Upper>();
    const Eigen::Matrix3d rinv = r.inverse();
    const Eigen::Matrix3d perm = qr.colsPermutation();
    const Eigen::Matrix3d cov = perm * (rinv * rinv.transpose()) * perm.transpose() * sigma2;
    for (int i = 0; i < 3; ++i) m.std_errors[i] = std::sqrt(std::max(cov(i, i), 0.0));
  }
  return m;
}

HybridModel fit_hybrid(const SearchPool& pool, const std::vector<double>& target) {
  if (target.size() != pool.size()) throw Error(ErrorCode::InvalidArgument, "target must align with the pool");
  std::vector<double> tr, ng;
  for (const auto& e : pool.entries) {
    if (!e.short_train_score || !e.nngp_score)
      throw Error(ErrorCode::MissingScores, fmt::format("entry '{}' lacks a training or NNGP score", e.id));
    tr.push_back(*e.short_train_score);
    ng.push_back(*e.nngp_score);
  }
  return fit_hybrid(tr, ng, target);
}

double hybrid_score(const HybridModel& model, double short_train, double nngp) {
  if (!model.fitted) throw Error(ErrorCode::Unfitted, "hybrid model has not been fitted");
  return model.w_train * short_train + model.w_nngp * nngp + model.bias;
}

double hybrid_score(const HybridModel& model, const PoolEntry& entry) {
  if (!entry.short_train_score || !entry.nngp_score)
    throw Error(ErrorCode::MissingScores, fmt::format("entry '{}' lacks a training or NNGP score", entry.id));
  return hybrid_score(model, *entry.short_train_score, *entry.nngp_score);
}

DiscoveryEstimate simulate_discovery(const std::vector<double>& metric, const std::vector<double>& truth,
                                     std::size_t subset_size, std::size_t n_subsets, std::size_t k,
                                     std::uint64_t seed) {
  const std::size_t m = metric.size();
  if (truth.size() != m) throw Error(ErrorCode::InvalidArgument, "metric and truth must have equal lengths");
  if (subset_size > m || subset_size == 0) throw Error(ErrorCode::InvalidArgument, "subset size out of range");
  if (n_subsets == 0) throw Error(ErrorCode::InvalidArgument, "need at least one subset");
  DiscoveryEstimate est;
  std::vector<std::size_t> idx(m);
  for (std::size_t s = 0; s < n_subsets; ++s) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(derive_seed(seed, {s}));
    for (std::size_t i = 0; i < subset_size; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, m - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(subset_size));
    ScorePairSet sub;
    for (std::size_t i = 0; i < subset_size; ++i) {
      sub.proxy.push_back(metric[idx[i]]);
      sub.truth.push_back(truth[idx[i]]);
    }
    est.per_subset.push_back(discovered_performance(sub, std::min(k, subset_size)));
  }
  const double n = static_cast<double>(n_subsets);
  est.mean = std::accumulate(est.per_subset.begin(), est.per_subset.end(), 0.0) / n;
  if (n_subsets > 1) {
    double ss = 0.0;
    for (double v : est.per_subset) ss += (v - est.mean) * (v - est.mean);
    est.std_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return est;
}

}  // namespace nngpnas
