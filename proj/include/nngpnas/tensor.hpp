#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nngpnas/archspec.hpp"

namespace nngpnas {

/// Dense NHWC batch of double-precision activations.
struct Tensor {
  int n = 0;
  TensorShape shape{};
  std::vector<double> data;

  Tensor() = default;
  Tensor(int batch, TensorShape s) : n(batch), shape(s), data(static_cast<std::size_t>(batch) * s.size(), 0.0) {}

  std::size_t sample_size() const { return shape.size(); }
  std::size_t pixels() const { return static_cast<std::size_t>(n) * shape.height * shape.width; }
  double& at(int b, int y, int x, int c) {
    return data[((static_cast<std::size_t>(b) * shape.height + y) * shape.width + x) * shape.channels + c];
  }
  double at(int b, int y, int x, int c) const {
    return data[((static_cast<std::size_t>(b) * shape.height + y) * shape.width + x) * shape.channels + c];
  }
  std::size_t offset(int b, int y, int x) const {
    return ((static_cast<std::size_t>(b) * shape.height + y) * shape.width + x) * shape.channels;
  }
  std::span<double> sample(int b) { return {data.data() + b * sample_size(), sample_size()}; }
  std::span<const double> sample(int b) const { return {data.data() + b * sample_size(), sample_size()}; }

  /// Copies the listed samples (in order) into a new batch.
  Tensor gather(std::span<const std::size_t> rows) const;
  /// Contiguous sample range [begin, end).
  Tensor slice(std::size_t begin, std::size_t end) const;
};

}  // namespace nngpnas
