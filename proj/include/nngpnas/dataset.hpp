#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "nngpnas/tensor.hpp"

namespace nngpnas {

/// Inputs with one integer label per sample.
struct LabeledSet {
  Tensor inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  LabeledSet subset(std::span<const std::size_t> rows) const;
};

/// Data used by one experiment: the (small) NNGP train/validation sets and the full pools used by gradient training.
struct DatasetSplit {
  LabeledSet nngp_train;
  LabeledSet nngp_val;
  LabeledSet full_train;
  LabeledSet full_val;
  int num_labels = 0;
};

/// Raw CIFAR-10 records: HWC uint8 pixels and labels.
struct RawImages {
  int height = 32;
  int width = 32;
  int channels = 3;
  std::vector<std::uint8_t> pixels;  // N x H x W x C
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

inline constexpr std::size_t kCifarRecordBytes = 1 + 3 * 1024;

/// Parses one CIFAR-10 binary batch body (1 label byte + 1024 R + 1024 G + 1024 B per record).
RawImages parse_cifar_batch(std::span<const std::uint8_t> bytes);

struct CifarData {
  RawImages train;  // data_batch_1..5
  RawImages test;   // test_batch
};

CifarData load_cifar(const std::filesystem::path& dir);

inline constexpr std::array<double, 3> kCifarChannelMean{125.3, 123.0, 113.9};
inline constexpr std::array<double, 3> kCifarChannelStd{63.0, 62.1, 66.7};

/// (pixel - mean_c) / std_c per channel; no augmentation.
Tensor standardize(const RawImages& images, std::span<const double> mean = kCifarChannelMean,
                   std::span<const double> stddev = kCifarChannelStd);

/// Deterministic class-balanced index subset: per-class counts differ by at most one.
std::vector<std::size_t> subsample_balanced(std::span<const int> labels, int num_labels, std::size_t count,
                                            std::uint64_t seed);

/// Isotropic Gaussian clusters in `dims` dimensions; class means sit at distance `separation`
/// from the origin (antipodal for two classes). Inputs are shaped (N, 1, 1, dims). The seed fixes both the
/// class means and the samples, so train and validation sets should be cut from a single call.
LabeledSet make_synthetic(int num_labels, int dims, int per_class, double separation, std::uint64_t seed);

/// Bayes-optimal accuracy of the two-class synthetic problem: Phi(separation).
double synthetic_two_class_bayes_rate(double separation);

/// Reinterprets each flat sample as an H x W x C image (H*W*C must equal the sample size).
LabeledSet reshape_inputs(LabeledSet set, TensorShape shape);

}  // namespace nngpnas
