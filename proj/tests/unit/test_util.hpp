#pragma once

#include <optional>
#include <random>
#include <vector>

#include "nngpnas/archspec.hpp"
#include "nngpnas/error.hpp"
#include "nngpnas/rng.hpp"
#include "nngpnas/tensor.hpp"

namespace testutil {

using namespace nngpnas;

inline CellSpec conv_chain_cell() {
  return CellSpec({{0, 1, 0}, {0, 0, 1}, {0, 0, 0}}, {Op::Input, Op::Conv3x3BnRelu, Op::Output});
}

inline CellSpec identity_cell() { return CellSpec({{0, 1}, {0, 0}}, {Op::Input, Op::Output}); }

// Two branches into the output plus an input->output skip edge.
inline CellSpec branchy_cell() {
  return CellSpec({{0, 1, 1, 1, 1},
                   {0, 0, 0, 1, 1},
                   {0, 0, 0, 0, 1},
                   {0, 0, 0, 0, 1},
                   {0, 0, 0, 0, 0}},
                  {Op::Input, Op::Conv1x1BnRelu, Op::MaxPool3x3, Op::Conv3x3BnRelu, Op::Output});
}

inline Tensor random_tensor(int n, TensorShape s, std::uint64_t seed, double scale = 1.0) {
  Tensor t(n, s);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  for (auto& v : t.data) v = nd(rng);
  return t;
}

inline std::optional<ErrorCode> code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace testutil
