#include "nngpnas/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include <fmt/format.h>

#include "nngpnas/error.hpp"
#include "nngpnas/rng.hpp"

namespace nngpnas {

LabeledSet LabeledSet::subset(std::span<const std::size_t> rows) const {
  LabeledSet out;
  out.inputs = inputs.gather(rows);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(labels.at(r));
  return out;
}

RawImages parse_cifar_batch(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % kCifarRecordBytes != 0)
    throw Error(ErrorCode::TruncatedFile,
                fmt::format("{} bytes is not a whole number of {}-byte records", bytes.size(), kCifarRecordBytes));
  RawImages out;
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  out.pixels.resize(n * 3072);
  out.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] > 9) throw Error(ErrorCode::LabelOutOfRange, fmt::format("record {} has label {}", r, rec[0]));
    out.labels[r] = rec[0];
    std::uint8_t* dst = out.pixels.data() + r * 3072;
    // planar (R plane, G plane, B plane) -> interleaved HWC
    for (int c = 0; c < 3; ++c)
      for (int p = 0; p < 1024; ++p) dst[p * 3 + c] = rec[1 + c * 1024 + p];
  }
  return out;
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, fmt::format("cannot open {}", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void append(RawImages& dst, RawImages src) {
  dst.pixels.insert(dst.pixels.end(), src.pixels.begin(), src.pixels.end());
  dst.labels.insert(dst.labels.end(), src.labels.begin(), src.labels.end());
}

}  // namespace

CifarData load_cifar(const std::filesystem::path& dir) {
  CifarData data;
  for (int b = 1; b <= 5; ++b) {
    const auto path = dir / fmt::format("data_batch_{}.bin", b);
    append(data.train, parse_cifar_batch(read_file(path)));
  }
  append(data.test, parse_cifar_batch(read_file(dir / "test_batch.bin")));
  return data;
}

Tensor standardize(const RawImages& images, std::span<const double> mean, std::span<const double> stddev) {
  const int c = images.channels;
  if (mean.size() != static_cast<std::size_t>(c) || stddev.size() != static_cast<std::size_t>(c))
    throw Error(ErrorCode::ShapeMismatch, "per-channel statistics do not match the image channels");
  Tensor t(static_cast<int>(images.size()), {images.height, images.width, c});
  for (std::size_t i = 0; i < images.pixels.size(); ++i) {
    const std::size_t ch = i % c;
    t.data[i] = (static_cast<double>(images.pixels[i]) - mean[ch]) / stddev[ch];
  }
  return t;
}

std::vector<std::size_t> subsample_balanced(std::span<const int> labels, int num_labels, std::size_t count,
                                            std::uint64_t seed) {
  if (num_labels < 1) throw Error(ErrorCode::InvalidArgument, "num_labels must be positive");
  if (count > labels.size())
    throw Error(ErrorCode::InsufficientClassSamples,
                fmt::format("requested {} samples from a pool of {}", count, labels.size()));
  std::vector<std::vector<std::size_t>> by_class(num_labels);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_labels)
      throw Error(ErrorCode::LabelOutOfRange, fmt::format("label {} outside [0, {})", labels[i], num_labels));
    by_class[labels[i]].push_back(i);
  }
  Rng rng(derive_seed(seed, {0x5ab5a3b1e}));
  for (auto& idx : by_class) std::shuffle(idx.begin(), idx.end(), rng);
  // Classes receiving the remainder are chosen by a seeded permutation.
  std::vector<int> class_order(num_labels);
  std::iota(class_order.begin(), class_order.end(), 0);
  std::shuffle(class_order.begin(), class_order.end(), rng);
  const std::size_t base = count / num_labels, extra = count % num_labels;
  std::vector<std::size_t> out;
  out.reserve(count);
  for (int r = 0; r < num_labels; ++r) {
    const int cls = class_order[r];
    const std::size_t want = base + (static_cast<std::size_t>(r) < extra ? 1 : 0);
    if (by_class[cls].size() < want)
      throw Error(ErrorCode::InsufficientClassSamples,
                  fmt::format("class {} has {} samples, {} needed", cls, by_class[cls].size(), want));
    out.insert(out.end(), by_class[cls].begin(), by_class[cls].begin() + static_cast<std::ptrdiff_t>(want));
  }
  std::sort(out.begin(), out.end());
  return out;
}

LabeledSet make_synthetic(int num_labels, int dims, int per_class, double separation, std::uint64_t seed) {
  if (num_labels < 1 || dims < 1 || per_class < 0)
    throw Error(ErrorCode::InvalidArgument, "synthetic dataset sizes must be positive");
  Rng rng(derive_seed(seed, {0x5e7}));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> means(num_labels, std::vector<double>(dims, 0.0));
  for (int k = 0; k < num_labels; ++k) {
    if (num_labels == 2 && k == 1) {
      for (int j = 0; j < dims; ++j) means[1][j] = -means[0][j];
      break;
    }
    double norm = 0.0;
    for (auto& m : means[k]) {
      m = normal(rng);
      norm += m * m;
    }
    norm = std::sqrt(norm);
    for (auto& m : means[k]) m *= separation / norm;
  }
  const int n = num_labels * per_class;
  LabeledSet set;
  set.inputs = Tensor(n, {1, 1, dims});
  set.labels.resize(n);
  // Interleave classes so any prefix is close to balanced.
  for (int i = 0; i < n; ++i) {
    const int k = i % num_labels;
    set.labels[i] = k;
    for (int j = 0; j < dims; ++j) set.inputs.data[static_cast<std::size_t>(i) * dims + j] = means[k][j] + normal(rng);
  }
  return set;
}

double synthetic_two_class_bayes_rate(double separation) { return 0.5 * std::erfc(-separation / std::sqrt(2.0)); }

LabeledSet reshape_inputs(LabeledSet set, TensorShape shape) {
  if (shape.size() != set.inputs.sample_size())
    throw Error(ErrorCode::ShapeMismatch, "reshape must preserve the per-sample size");
  set.inputs.shape = shape;
  return set;
}

}  // namespace nngpnas
