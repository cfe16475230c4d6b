#include "nngpnas/nngp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "nngpnas/error.hpp"
#include "nngpnas/rng.hpp"

namespace nngpnas {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMat> as_matrix(const FeatureBatch& fb) {
  return {fb.features.data(), fb.rows, fb.feature_dim};
}

}  // namespace

KernelAccumulator::KernelAccumulator(int n_train, int n_val, int feature_dim)
    : sum_tt_(Eigen::MatrixXd::Zero(n_train, n_train)),
      sum_vt_(Eigen::MatrixXd::Zero(n_val, n_train)),
      feature_dim_(feature_dim) {}

void KernelAccumulator::add(const FeatureBatch& train, const FeatureBatch& val) {
  if (train.rows != sum_tt_.rows() || val.rows != sum_vt_.rows() || train.feature_dim != feature_dim_ ||
      val.feature_dim != feature_dim_)
    throw Error(ErrorCode::ShapeMismatch, "feature batch does not match the kernel accumulator");
  const auto z = as_matrix(train);
  sum_tt_.selfadjointView<Eigen::Lower>().rankUpdate(z);
  if (val.rows > 0) sum_vt_.noalias() += as_matrix(val) * z.transpose();
  ++members_;
}

KernelPair KernelAccumulator::finish() const {
  if (members_ == 0) throw Error(ErrorCode::InvalidArgument, "no ensemble members accumulated");
  const double scale = 1.0 / (static_cast<double>(members_) * feature_dim_);
  KernelPair kp;
  kp.k_tt = sum_tt_.selfadjointView<Eigen::Lower>();
  kp.k_tt *= scale;
  kp.k_vt = sum_vt_ * scale;
  kp.n_ensemble = members_;
  kp.feature_dim = feature_dim_;
  return kp;
}

void accumulate_members(const LayerGraph& graph, const InitConfig& cfg, const DatasetSplit& split,
                        KernelAccumulator& acc, int begin, int end) {
  cfg.validate();
  const std::size_t n_train = split.nngp_train.size();
  if (n_train == 0) throw Error(ErrorCode::EmptyWarmupBatch, "NNGP training set is empty");
  const std::size_t warmup = std::min<std::size_t>(cfg.bn_warmup_batch, n_train);
  std::vector<std::size_t> order(n_train);
  for (int k = begin; k < end; ++k) {
    const auto member = static_cast<std::uint64_t>(k);
    InitConfig member_cfg = cfg;
    member_cfg.seed = derive_seed(cfg.seed, {member, 1});
    Parameters params = init_params(graph, member_cfg);

    Rng rng(derive_seed(cfg.seed, {member, 2}));
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < warmup; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n_train - 1);
      std::swap(order[i], order[pick(rng)]);
    }
    const Tensor warmup_batch = split.nngp_train.inputs.gather(std::span(order).first(warmup));
    params = warmup_batchnorm(graph, params, warmup_batch, cfg.bn_momentum);

    const FeatureBatch train = forward_features(graph, params, split.nngp_train.inputs);
    const FeatureBatch val = forward_features(graph, params, split.nngp_val.inputs);
    acc.add(train, val);
  }
}

KernelPair accumulate_kernels(const LayerGraph& graph, const InitConfig& cfg, const DatasetSplit& split,
                              int n_ensemble) {
  if (n_ensemble < 1) throw Error(ErrorCode::InvalidArgument, "n_ensemble must be at least 1");
  KernelAccumulator acc(static_cast<int>(split.nngp_train.size()), static_cast<int>(split.nngp_val.size()),
                        graph.feature_dim());
  accumulate_members(graph, cfg, split, acc, 0, n_ensemble);
  return acc.finish();
}

double analytic_relu_mlp_kernel(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::ShapeMismatch, "kernel arguments differ in dimension");
  double xx = 0.0, yy = 0.0, xy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx += x[i] * x[i];
    yy += y[i] * y[i];
    xy += x[i] * y[i];
  }
  const double norms = std::sqrt(xx * yy);
  if (norms == 0.0) return 0.0;
  const double cos_theta = std::clamp(xy / norms, -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  return norms / (2.0 * std::numbers::pi) * (std::sin(theta) + (std::numbers::pi - theta) * cos_theta);
}

Eigen::MatrixXd monte_carlo_relu_mlp_kernel(const Eigen::MatrixXd& inputs, int width, int n_ensemble,
                                            std::uint64_t seed) {
  if (width < 1 || n_ensemble < 1) throw Error(ErrorCode::InvalidArgument, "width and n_ensemble must be positive");
  const auto n = inputs.rows();
  KernelAccumulator acc(static_cast<int>(n), 0, width);
  Eigen::MatrixXd w(width, inputs.cols());
  FeatureBatch empty{{}, 0, width};
  for (int k = 0; k < n_ensemble; ++k) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(k)}));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
    const RowMat z = (inputs * w.transpose()).cwiseMax(0.0);
    FeatureBatch fb{std::vector<double>(z.data(), z.data() + z.size()), static_cast<int>(n), width};
    acc.add(fb, empty);
  }
  return acc.finish().k_tt;
}

double mean_eigenvalue(const Eigen::MatrixXd& k_tt) {
  if (k_tt.rows() != k_tt.cols() || k_tt.rows() == 0) throw Error(ErrorCode::ShapeMismatch, "K^tt must be square");
  return k_tt.trace() / static_cast<double>(k_tt.rows());
}

Eigen::MatrixXd make_targets(std::span<const int> labels, int num_labels) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(labels.size()), num_labels,
                                                -1.0 / num_labels);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_labels)
      throw Error(ErrorCode::LabelOutOfRange, fmt::format("label {} outside [0, {})", labels[i], num_labels));
    t(static_cast<Eigen::Index>(i), labels[i]) = 1.0 - 1.0 / num_labels;
  }
  return t;
}

Eigen::MatrixXd gp_predict(const KernelPair& kernels, const Eigen::MatrixXd& targets, double reg) {
  const auto n = kernels.k_tt.rows();
  if (kernels.k_tt.cols() != n || kernels.k_vt.cols() != n || targets.rows() != n)
    throw Error(ErrorCode::ShapeMismatch, "kernel and target dimensions disagree");
  if (!(reg >= 0.0)) throw Error(ErrorCode::InvalidArgument, "regulariser must be non-negative");
  const double lambda = mean_eigenvalue(kernels.k_tt);
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw Error(ErrorCode::SingularKernel, "mean eigenvalue of K^tt is not positive");
  // Solve in units of lambda: (K/lambda + reg I)^-1 has the same posterior mean and is O(1)-conditioned.
  Eigen::MatrixXd a = kernels.k_tt / lambda;
  a.diagonal().array() += reg;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success || !llt.matrixLLT().diagonal().allFinite())
    throw Error(ErrorCode::SingularKernel, fmt::format("Cholesky factorisation failed at reg={}", reg));
  const Eigen::MatrixXd alpha = llt.solve(targets);
  return (kernels.k_vt / lambda) * alpha;
}

std::vector<int> predict_labels(const Eigen::MatrixXd& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c)
      if (scores(r, c) > scores(r, best)) best = c;
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

std::vector<double> default_reg_grid() {
  constexpr int kNum = 20;
  constexpr double kStart = -7.0, kStop = 2.0;
  std::vector<double> grid(kNum);
  const double step = (kStop - kStart) / (kNum - 1);
  for (int i = 0; i < kNum; ++i) grid[i] = std::pow(10.0, i + 1 == kNum ? kStop : kStart + i * step);
  return grid;
}

void InferenceConfig::validate() const {
  if (reg_grid.empty()) throw Error(ErrorCode::InvalidArgument, "regulariser grid is empty");
  for (std::size_t i = 0; i < reg_grid.size(); ++i) {
    if (!(reg_grid[i] > 0.0)) throw Error(ErrorCode::InvalidArgument, "regulariser grid values must be positive");
    if (i > 0 && !(reg_grid[i] > reg_grid[i - 1]))
      throw Error(ErrorCode::InvalidArgument, "regulariser grid must be strictly increasing");
  }
  if (n_ensemble < 1) throw Error(ErrorCode::InvalidArgument, "n_ensemble must be at least 1");
}

NngpResult nngp_accuracy_from_kernels(const KernelPair& kernels, std::span<const int> train_labels,
                                      std::span<const int> val_labels, int num_labels,
                                      std::span<const double> reg_grid) {
  if (val_labels.size() != static_cast<std::size_t>(kernels.k_vt.rows()))
    throw Error(ErrorCode::ShapeMismatch, "validation labels do not match K^vt");
  if (val_labels.empty()) throw Error(ErrorCode::InvalidArgument, "validation set is empty");
  const Eigen::MatrixXd targets = make_targets(train_labels, num_labels);
  NngpResult result;
  result.accuracy_per_reg.assign(reg_grid.size(), std::numeric_limits<double>::quiet_NaN());
  bool any = false;
  for (std::size_t g = 0; g < reg_grid.size(); ++g) {
    Eigen::MatrixXd y;
    try {
      y = gp_predict(kernels, targets, reg_grid[g]);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::SingularKernel) throw;
      continue;
    }
    const std::vector<int> predicted = predict_labels(y);
    std::size_t correct = 0;
    for (std::size_t a = 0; a < predicted.size(); ++a) correct += predicted[a] == val_labels[a] ? 1 : 0;
    const double acc = static_cast<double>(correct) / static_cast<double>(val_labels.size());
    result.accuracy_per_reg[g] = acc;
    if (!any || acc > result.accuracy) {
      result.accuracy = acc;
      result.best_reg = reg_grid[g];
    }
    any = true;
  }
  if (!any) throw Error(ErrorCode::InferenceFailed, "every regulariser value produced a singular kernel");
  return result;
}

NngpResult nngp_validation_accuracy(const LayerGraph& graph, const InitConfig& cfg, const DatasetSplit& split,
                                    const InferenceConfig& inf) {
  inf.validate();
  KernelPair kernels = accumulate_kernels(graph, cfg, split, inf.n_ensemble);
  NngpResult r = nngp_accuracy_from_kernels(kernels, split.nngp_train.labels, split.nngp_val.labels,
                                            split.num_labels, inf.reg_grid);
  r.kernels = std::move(kernels);
  return r;
}

void write_kernel_dump(const std::filesystem::path& path, const KernelPair& kernels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, fmt::format("cannot open {}", path.string()));
  const std::uint64_t header[4] = {static_cast<std::uint64_t>(kernels.k_tt.rows()),
                                   static_cast<std::uint64_t>(kernels.k_vt.rows()),
                                   static_cast<std::uint64_t>(kernels.feature_dim),
                                   static_cast<std::uint64_t>(kernels.n_ensemble)};
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  const RowMat tt = kernels.k_tt, vt = kernels.k_vt;
  out.write(reinterpret_cast<const char*>(tt.data()), static_cast<std::streamsize>(tt.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(vt.data()), static_cast<std::streamsize>(vt.size() * sizeof(double)));
}

KernelPair read_kernel_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, fmt::format("cannot open {}", path.string()));
  std::uint64_t header[4] = {};
  in.read(reinterpret_cast<char*>(header), sizeof header);
  if (!in || header[0] > (1u << 20) || header[1] > (1u << 20))
    throw Error(ErrorCode::TruncatedFile, "kernel dump header is missing or corrupt");
  RowMat tt(header[0], header[0]), vt(header[1], header[0]);
  in.read(reinterpret_cast<char*>(tt.data()), static_cast<std::streamsize>(tt.size() * sizeof(double)));
  in.read(reinterpret_cast<char*>(vt.data()), static_cast<std::streamsize>(vt.size() * sizeof(double)));
  if (!in) throw Error(ErrorCode::TruncatedFile, "kernel dump ended early");
  return {tt, vt, static_cast<int>(header[3]), static_cast<int>(header[2])};
}

}  // namespace nngpnas
