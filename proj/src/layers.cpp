#include "nngpnas/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "nngpnas/error.hpp"

namespace nngpnas {

Tensor Tensor::gather(std::span<const std::size_t> rows) const {
  Tensor out(static_cast<int>(rows.size()), shape);
  const std::size_t s = sample_size();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(rows[i] * s), s,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * s));
  return out;
}

Tensor Tensor::slice(std::size_t begin, std::size_t end) const {
  Tensor out(static_cast<int>(end - begin), shape);
  const std::size_t s = sample_size();
  std::copy(data.begin() + static_cast<std::ptrdiff_t>(begin * s), data.begin() + static_cast<std::ptrdiff_t>(end * s),
            out.data.begin());
  return out;
}

namespace layers {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

// Rows = output pixels, columns = [kh][kw][c_in] patch entries, zero-padded.
RowMat im2col(const Tensor& x, int k) {
  const int h = x.shape.height, w = x.shape.width, c = x.shape.channels;
  const int pad = (k - 1) / 2;
  RowMat cols = RowMat::Zero(static_cast<Eigen::Index>(x.pixels()), static_cast<Eigen::Index>(k) * k * c);
  Eigen::Index row = 0;
  for (int b = 0; b < x.n; ++b)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx, ++row) {
        double* dst = cols.row(row).data();
        for (int ky = 0; ky < k; ++ky) {
          const int iy = y + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = xx + kx - pad;
            if (ix < 0 || ix >= w) continue;
            const double* src = x.data.data() + x.offset(b, iy, ix);
            std::copy_n(src, c, dst + (ky * k + kx) * c);
          }
        }
      }
  return cols;
}

void col2im(const RowMat& cols, int k, Tensor& dx) {
  const int h = dx.shape.height, w = dx.shape.width, c = dx.shape.channels;
  const int pad = (k - 1) / 2;
  std::fill(dx.data.begin(), dx.data.end(), 0.0);
  Eigen::Index row = 0;
  for (int b = 0; b < dx.n; ++b)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx, ++row) {
        const double* src = cols.row(row).data();
        for (int ky = 0; ky < k; ++ky) {
          const int iy = y + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = xx + kx - pad;
            if (ix < 0 || ix >= w) continue;
            double* dst = dx.data.data() + dx.offset(b, iy, ix);
            const double* s = src + (ky * k + kx) * c;
            for (int ch = 0; ch < c; ++ch) dst[ch] += s[ch];
          }
        }
      }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.n != b.n || !(a.shape == b.shape))
    throw Error(ErrorCode::ShapeMismatch, fmt::format("{}: tensor shapes differ", what));
}

}  // namespace

Tensor conv2d(const Tensor& x, std::span<const double> weight, int kernel, int out_channels) {
  const int cin = x.shape.channels;
  if (weight.size() != static_cast<std::size_t>(kernel) * kernel * cin * out_channels)
    throw Error(ErrorCode::ShapeMismatch, "conv2d weight size does not match kernel and channels");
  Tensor y(x.n, {x.shape.height, x.shape.width, out_channels});
  const auto p = static_cast<Eigen::Index>(x.pixels());
  ConstMapMat wm(weight.data(), static_cast<Eigen::Index>(kernel) * kernel * cin, out_channels);
  MapMat ym(y.data.data(), p, out_channels);
  if (kernel == 1) {
    ym.noalias() = ConstMapMat(x.data.data(), p, cin) * wm;
  } else {
    ym.noalias() = im2col(x, kernel) * wm;
  }
  return y;
}

void conv2d_backward(const Tensor& x, std::span<const double> weight, int kernel, const Tensor& dy, Tensor* dx,
                     std::span<double> dweight) {
  const int cin = x.shape.channels;
  const int cout = dy.shape.channels;
  const auto p = static_cast<Eigen::Index>(x.pixels());
  const Eigen::Index kk = static_cast<Eigen::Index>(kernel) * kernel * cin;
  ConstMapMat wm(weight.data(), kk, cout);
  ConstMapMat dym(dy.data.data(), p, cout);
  MapMat dwm(dweight.data(), kk, cout);
  if (kernel == 1) {
    ConstMapMat xm(x.data.data(), p, cin);
    dwm.noalias() = xm.transpose() * dym;
    if (dx) {
      *dx = Tensor(x.n, x.shape);
      MapMat(dx->data.data(), p, cin).noalias() = dym * wm.transpose();
    }
    return;
  }
  const RowMat cols = im2col(x, kernel);
  dwm.noalias() = cols.transpose() * dym;
  if (dx) {
    RowMat dcols = dym * wm.transpose();
    *dx = Tensor(x.n, x.shape);
    col2im(dcols, kernel, *dx);
  }
}

ChannelStats channel_stats(const Tensor& x) {
  const int c = x.shape.channels;
  const std::size_t p = x.pixels();
  ChannelStats s{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  for (std::size_t i = 0; i < p; ++i)
    for (int ch = 0; ch < c; ++ch) s.mean[ch] += x.data[i * c + ch];
  for (auto& m : s.mean) m /= static_cast<double>(p);
  for (std::size_t i = 0; i < p; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const double d = x.data[i * c + ch] - s.mean[ch];
      s.var[ch] += d * d;
    }
  for (auto& v : s.var) v /= static_cast<double>(p);
  return s;
}

Tensor batchnorm(const Tensor& x, std::span<const double> mean, std::span<const double> var,
                 std::span<const double> gamma, std::span<const double> beta, double eps) {
  const int c = x.shape.channels;
  std::vector<double> scale(c), shift(c);
  for (int ch = 0; ch < c; ++ch) {
    scale[ch] = gamma[ch] / std::sqrt(var[ch] + eps);
    shift[ch] = beta[ch] - mean[ch] * scale[ch];
  }
  Tensor y(x.n, x.shape);
  const std::size_t p = x.pixels();
  for (std::size_t i = 0; i < p; ++i)
    for (int ch = 0; ch < c; ++ch) y.data[i * c + ch] = x.data[i * c + ch] * scale[ch] + shift[ch];
  return y;
}

Tensor batchnorm_backward(const Tensor& x, const ChannelStats& stats, std::span<const double> gamma, const Tensor& dy,
                          std::span<double> dgamma, std::span<double> dbeta, double eps) {
  const int c = x.shape.channels;
  const std::size_t p = x.pixels();
  std::vector<double> inv_std(c);
  for (int ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(stats.var[ch] + eps);
  std::fill(dgamma.begin(), dgamma.end(), 0.0);
  std::fill(dbeta.begin(), dbeta.end(), 0.0);
  for (std::size_t i = 0; i < p; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const double xhat = (x.data[i * c + ch] - stats.mean[ch]) * inv_std[ch];
      dgamma[ch] += dy.data[i * c + ch] * xhat;
      dbeta[ch] += dy.data[i * c + ch];
    }
  Tensor dx(x.n, x.shape);
  const double m = static_cast<double>(p);
  for (std::size_t i = 0; i < p; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const double xhat = (x.data[i * c + ch] - stats.mean[ch]) * inv_std[ch];
      dx.data[i * c + ch] =
          gamma[ch] * inv_std[ch] * (dy.data[i * c + ch] - dbeta[ch] / m - xhat * dgamma[ch] / m);
    }
  return dx;
}

Tensor relu(const Tensor& x) {
  Tensor y(x.n, x.shape);
  std::transform(x.data.begin(), x.data.end(), y.data.begin(), [](double v) { return v < 0.0 ? 0.0 : v; });
  return y;
}

Tensor relu_backward(const Tensor& y, const Tensor& dy) {
  check_same_shape(y, dy, "relu_backward");
  Tensor dx(y.n, y.shape);
  for (std::size_t i = 0; i < y.data.size(); ++i) dx.data[i] = y.data[i] > 0.0 ? dy.data[i] : 0.0;
  return dx;
}

PoolResult max_pool(const Tensor& x, int window, int stride) {
  const int h = x.shape.height, w = x.shape.width, c = x.shape.channels;
  const int oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
  const int pad_h = std::max((oh - 1) * stride + window - h, 0) / 2;
  const int pad_w = std::max((ow - 1) * stride + window - w, 0) / 2;
  PoolResult r{Tensor(x.n, {oh, ow, c}), {}};
  r.argmax.resize(r.y.data.size());
  std::size_t out = 0;
  for (int b = 0; b < x.n; ++b)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        for (int ch = 0; ch < c; ++ch, ++out) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_idx = 0;
          for (int ky = 0; ky < window; ++ky) {
            const int iy = oy * stride + ky - pad_h;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < window; ++kx) {
              const int ix = ox * stride + kx - pad_w;
              if (ix < 0 || ix >= w) continue;
              const std::size_t idx = ((static_cast<std::size_t>(b) * h + iy) * w + ix) * c + ch;
              if (x.data[idx] > best) {
                best = x.data[idx];
                best_idx = idx;
              }
            }
          }
          r.y.data[out] = best;
          r.argmax[out] = static_cast<std::uint32_t>(best_idx);
        }
  return r;
}

Tensor max_pool_backward(const Tensor& x_like, const std::vector<std::uint32_t>& argmax, const Tensor& dy) {
  Tensor dx(x_like.n, x_like.shape);
  for (std::size_t i = 0; i < dy.data.size(); ++i) dx.data[argmax[i]] += dy.data[i];
  return dx;
}

Tensor global_avg_pool(const Tensor& x) {
  const int c = x.shape.channels;
  const std::size_t hw = static_cast<std::size_t>(x.shape.height) * x.shape.width;
  Tensor y(x.n, {1, 1, c});
  for (int b = 0; b < x.n; ++b) {
    const double* src = x.data.data() + b * x.sample_size();
    double* dst = y.data.data() + static_cast<std::size_t>(b) * c;
    for (std::size_t i = 0; i < hw; ++i)
      for (int ch = 0; ch < c; ++ch) dst[ch] += src[i * c + ch];
    for (int ch = 0; ch < c; ++ch) dst[ch] /= static_cast<double>(hw);
  }
  return y;
}

Tensor global_avg_pool_backward(const TensorShape& in_shape, const Tensor& dy) {
  const int c = in_shape.channels;
  const std::size_t hw = static_cast<std::size_t>(in_shape.height) * in_shape.width;
  Tensor dx(dy.n, in_shape);
  for (int b = 0; b < dy.n; ++b) {
    const double* g = dy.data.data() + static_cast<std::size_t>(b) * c;
    double* dst = dx.data.data() + b * dx.sample_size();
    for (std::size_t i = 0; i < hw; ++i)
      for (int ch = 0; ch < c; ++ch) dst[i * c + ch] = g[ch] / static_cast<double>(hw);
  }
  return dx;
}

Tensor dense(const Tensor& x, std::span<const double> weight, std::span<const double> bias, int out_dim) {
  const auto din = static_cast<Eigen::Index>(x.sample_size());
  if (weight.size() != static_cast<std::size_t>(din) * out_dim || bias.size() != static_cast<std::size_t>(out_dim))
    throw Error(ErrorCode::ShapeMismatch, "dense parameters do not match input dimension");
  Tensor y(x.n, {1, 1, out_dim});
  MapMat ym(y.data.data(), x.n, out_dim);
  ym.noalias() = ConstMapMat(x.data.data(), x.n, din) * ConstMapMat(weight.data(), din, out_dim);
  ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data(), out_dim);
  return y;
}

void dense_backward(const Tensor& x, std::span<const double> weight, const Tensor& dy, Tensor* dx,
                    std::span<double> dweight, std::span<double> dbias) {
  const auto din = static_cast<Eigen::Index>(x.sample_size());
  const Eigen::Index dout = dy.shape.channels;
  ConstMapMat xm(x.data.data(), x.n, din);
  ConstMapMat dym(dy.data.data(), dy.n, dout);
  MapMat(dweight.data(), din, dout).noalias() = xm.transpose() * dym;
  Eigen::Map<Eigen::RowVectorXd>(dbias.data(), dout) = dym.colwise().sum();
  if (dx) {
    *dx = Tensor(x.n, x.shape);
    MapMat(dx->data.data(), x.n, din).noalias() = dym * ConstMapMat(weight.data(), din, dout).transpose();
  }
}

Tensor add(std::span<const Tensor* const> xs) {
  Tensor y = *xs.front();
  for (std::size_t i = 1; i < xs.size(); ++i) {
    check_same_shape(y, *xs[i], "add");
    for (std::size_t j = 0; j < y.data.size(); ++j) y.data[j] += xs[i]->data[j];
  }
  return y;
}

Tensor concat(std::span<const Tensor* const> xs) {
  const Tensor& first = *xs.front();
  int total = 0;
  for (const Tensor* t : xs) {
    if (t->n != first.n || t->shape.height != first.shape.height || t->shape.width != first.shape.width)
      throw Error(ErrorCode::ShapeMismatch, "concat: spatial shapes differ");
    total += t->shape.channels;
  }
  Tensor y(first.n, {first.shape.height, first.shape.width, total});
  const std::size_t p = first.pixels();
  int offset = 0;
  for (const Tensor* t : xs) {
    const int c = t->shape.channels;
    for (std::size_t i = 0; i < p; ++i)
      std::copy_n(t->data.data() + i * c, c, y.data.data() + i * total + offset);
    offset += c;
  }
  return y;
}

std::vector<Tensor> concat_backward(std::span<const Tensor* const> xs, const Tensor& dy) {
  std::vector<Tensor> out;
  const int total = dy.shape.channels;
  const std::size_t p = dy.pixels();
  int offset = 0;
  for (const Tensor* t : xs) {
    const int c = t->shape.channels;
    Tensor g(t->n, t->shape);
    for (std::size_t i = 0; i < p; ++i) std::copy_n(dy.data.data() + i * total + offset, c, g.data.data() + i * c);
    offset += c;
    out.push_back(std::move(g));
  }
  return out;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const int l = logits.shape.channels;
  if (labels.size() != static_cast<std::size_t>(logits.n))
    throw Error(ErrorCode::ShapeMismatch, "label count differs from batch size");
  LossResult r{0.0, Tensor(logits.n, logits.shape)};
  for (int b = 0; b < logits.n; ++b) {
    const double* z = logits.data.data() + static_cast<std::size_t>(b) * l;
    double* g = r.dlogits.data.data() + static_cast<std::size_t>(b) * l;
    const double zmax = *std::max_element(z, z + l);
    double denom = 0.0;
    for (int i = 0; i < l; ++i) denom += std::exp(z[i] - zmax);
    const double log_denom = std::log(denom) + zmax;
    r.loss += log_denom - z[labels[b]];
    for (int i = 0; i < l; ++i) g[i] = std::exp(z[i] - log_denom) / logits.n;
    g[labels[b]] -= 1.0 / logits.n;
  }
  r.loss /= logits.n;
  return r;
}

}  // namespace layers
}  // namespace nngpnas
