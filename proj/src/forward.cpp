#include "nngpnas/forward.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "nngpnas/error.hpp"
#include "nngpnas/rng.hpp"

namespace nngpnas {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

void InitConfig::validate() const {
  if (!(readout_weight_variance > 0.0)) throw Error(ErrorCode::InvalidArgument, "readout weight variance must be > 0");
  if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0)) throw Error(ErrorCode::InvalidArgument, "bn momentum must be in [0, 1]");
  if (!(conv_gain >= 0.0)) throw Error(ErrorCode::InvalidArgument, "conv gain must be non-negative");
  if (bn_warmup_batch < 1) throw Error(ErrorCode::InvalidArgument, "bn warmup batch must be positive");
}

namespace {

// Standard deviation of a unit normal truncated to [-2, 2].
constexpr double kTruncatedStd = 0.87962566103423978;

double truncated_normal(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    const double v = normal(rng);
    if (std::abs(v) <= 2.0) return v;
  }
}

void init_batchnorm(NodeParams& p, int channels) {
  p.gamma.assign(channels, 1.0);
  p.beta.assign(channels, 0.0);
  p.moving_mean.assign(channels, 0.0);
  p.moving_var.assign(channels, 1.0);
}

}  // namespace

Parameters init_params(const LayerGraph& graph, const InitConfig& cfg) {
  cfg.validate();
  Parameters params;
  params.nodes.resize(graph.nodes.size());
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const LayerNode& node = graph.nodes[i];
    NodeParams& p = params.nodes[i];
    Rng rng(derive_seed(cfg.seed, {i}));
    switch (node.kind) {
      case LayerKind::ConvBnRelu:
      case LayerKind::Downsample: {
        const int cin = node.in_shape.channels, cout = node.out_shape.channels;
        const int fan_in = node.kernel * node.kernel * cin;
        const double stddev = std::sqrt(cfg.conv_gain / fan_in) / kTruncatedStd;
        p.weight.resize(static_cast<std::size_t>(fan_in) * cout);
        for (auto& w : p.weight) w = stddev * truncated_normal(rng);
        init_batchnorm(p, cout);
        break;
      }
      case LayerKind::Dense: {
        const int din = node.in_shape.channels, dout = node.out_shape.channels;
        const double stddev = std::sqrt(cfg.readout_weight_variance / din);
        std::normal_distribution<double> normal(0.0, 1.0);
        p.weight.resize(static_cast<std::size_t>(din) * dout);
        for (auto& w : p.weight) w = stddev * normal(rng);
        p.bias.assign(dout, 0.0);
        break;
      }
      default:
        break;
    }
  }
  return params;
}

ForwardTrace run_graph(const LayerGraph& graph, const Parameters& params, const Tensor& inputs, BatchNormMode mode,
                       int last_node) {
  if (last_node < 0) last_node = graph.logits_node;
  if (!(inputs.shape == graph.input_shape()))
    throw Error(ErrorCode::ShapeMismatch,
                fmt::format("input shape {}x{}x{} does not match network input {}x{}x{}", inputs.shape.height,
                            inputs.shape.width, inputs.shape.channels, graph.input_shape().height,
                            graph.input_shape().width, graph.input_shape().channels));
  if (params.nodes.size() != graph.nodes.size())
    throw Error(ErrorCode::ShapeMismatch, "parameter set does not belong to this graph");
  ForwardTrace t;
  t.outputs.resize(last_node + 1);
  t.caches.resize(last_node + 1);
  t.outputs[0] = inputs;
  for (int i = 1; i <= last_node; ++i) {
    const LayerNode& node = graph.nodes[i];
    const NodeParams& p = params.nodes[i];
    NodeCache& cache = t.caches[i];
    Tensor& out = t.outputs[i];
    switch (node.kind) {
      case LayerKind::ConvBnRelu:
      case LayerKind::Downsample: {
        const Tensor& in = t.outputs[node.inputs[0]];
        if (node.kind == LayerKind::Downsample) {
          auto pooled = layers::max_pool(in, 2, 2);
          cache.conv_in = std::move(pooled.y);
          cache.pool_argmax = std::move(pooled.argmax);
        } else {
          cache.conv_in = in;
        }
        cache.pre_bn = layers::conv2d(cache.conv_in, p.weight, node.kernel, node.out_shape.channels);
        if (mode == BatchNormMode::BatchStatistics) {
          cache.stats = layers::channel_stats(cache.pre_bn);
        } else {
          cache.stats = {p.moving_mean, p.moving_var};
        }
        out = layers::batchnorm(cache.pre_bn, cache.stats.mean, cache.stats.var, p.gamma, p.beta);
        if (node.kind == LayerKind::ConvBnRelu) out = layers::relu(out);
        break;
      }
      case LayerKind::MaxPool3x3: {
        auto pooled = layers::max_pool(t.outputs[node.inputs[0]], 3, 1);
        out = std::move(pooled.y);
        cache.pool_argmax = std::move(pooled.argmax);
        break;
      }
      case LayerKind::Add:
      case LayerKind::Concat: {
        std::vector<const Tensor*> xs;
        for (int src : node.inputs) xs.push_back(&t.outputs[src]);
        out = node.kind == LayerKind::Add ? layers::add(xs) : layers::concat(xs);
        break;
      }
      case LayerKind::GlobalAvgPool:
        out = layers::global_avg_pool(t.outputs[node.inputs[0]]);
        break;
      case LayerKind::Dense:
        out = layers::dense(t.outputs[node.inputs[0]], p.weight, p.bias, node.out_shape.channels);
        break;
      case LayerKind::Input:
        throw Error(ErrorCode::ShapeMismatch, "input node inside the graph body");
    }
  }
  return t;
}

void update_moving_statistics(const LayerGraph& graph, const ForwardTrace& trace, double momentum,
                              Parameters& params) {
  for (std::size_t i = 1; i < trace.caches.size(); ++i) {
    if (!graph.nodes[i].has_batchnorm()) continue;
    NodeParams& p = params.nodes[i];
    const auto& s = trace.caches[i].stats;
    for (std::size_t c = 0; c < p.moving_mean.size(); ++c) {
      p.moving_mean[c] = momentum * p.moving_mean[c] + (1.0 - momentum) * s.mean[c];
      p.moving_var[c] = momentum * p.moving_var[c] + (1.0 - momentum) * s.var[c];
    }
  }
}

Parameters warmup_batchnorm(const LayerGraph& graph, const Parameters& params, const Tensor& warmup_inputs,
                            double momentum) {
  if (warmup_inputs.n == 0) throw Error(ErrorCode::EmptyWarmupBatch, "warmup batch has no samples");
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw Error(ErrorCode::InvalidArgument, "bn momentum must be in [0, 1]");
  const ForwardTrace trace =
      run_graph(graph, params, warmup_inputs, BatchNormMode::BatchStatistics, graph.features_node);
  Parameters out = params;
  update_moving_statistics(graph, trace, momentum, out);
  return out;
}

namespace {

constexpr std::size_t kInferenceChunk = 128;

void check_finite(std::span<const double> values) {
  for (double v : values)
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteActivation, "non-finite activation in forward pass");
}

}  // namespace

FeatureBatch forward_features(const LayerGraph& graph, const Parameters& params, const Tensor& inputs) {
  FeatureBatch fb;
  fb.rows = inputs.n;
  fb.feature_dim = graph.feature_dim();
  fb.features.reserve(static_cast<std::size_t>(fb.rows) * fb.feature_dim);
  for (std::size_t begin = 0; begin < static_cast<std::size_t>(inputs.n); begin += kInferenceChunk) {
    const std::size_t end = std::min<std::size_t>(begin + kInferenceChunk, inputs.n);
    const Tensor chunk = inputs.slice(begin, end);
    ForwardTrace t = run_graph(graph, params, chunk, BatchNormMode::Inference, graph.features_node);
    const auto& f = t.outputs[graph.features_node].data;
    fb.features.insert(fb.features.end(), f.begin(), f.end());
  }
  if (inputs.n == 0 && !(inputs.shape == graph.input_shape()))
    throw Error(ErrorCode::ShapeMismatch, "input shape does not match network input");
  check_finite(fb.features);
  return fb;
}

Tensor forward_logits(const LayerGraph& graph, const Parameters& params, const Tensor& inputs) {
  const FeatureBatch fb = forward_features(graph, params, inputs);
  Tensor features(fb.rows, {1, 1, fb.feature_dim});
  features.data = fb.features;
  const NodeParams& readout = params.nodes.at(graph.logits_node);
  Tensor logits = layers::dense(features, readout.weight, readout.bias, graph.num_classes());
  check_finite(logits.data);
  return logits;
}

void write_matrix_file(const std::filesystem::path& path, std::span<const double> values, std::uint32_t rows,
                       std::uint32_t cols) {
  if (values.size() != static_cast<std::size_t>(rows) * cols)
    throw Error(ErrorCode::ShapeMismatch, "matrix dump size does not match its header");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, fmt::format("cannot open {}", path.string()));
  out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
}

std::vector<double> read_matrix_file(const std::filesystem::path& path, std::uint32_t& rows, std::uint32_t& cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, fmt::format("cannot open {}", path.string()));
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  in.read(reinterpret_cast<char*>(&cols), sizeof cols);
  if (!in) throw Error(ErrorCode::TruncatedFile, fmt::format("{} has no header", path.string()));
  std::vector<double> values(static_cast<std::size_t>(rows) * cols);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!in) throw Error(ErrorCode::TruncatedFile, fmt::format("{} is shorter than its header", path.string()));
  return values;
}

namespace {

constexpr char kParamMagic[8] = {'N', 'N', 'G', 'P', 'P', 'A', 'R', '1'};

void write_vec(std::ofstream& out, const std::vector<double>& v) {
  const std::uint64_t n = v.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
}

std::vector<double> read_vec(std::ifstream& in) {
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || n > (1ULL << 32)) throw Error(ErrorCode::TruncatedFile, "corrupt parameter file");
  std::vector<double> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  return v;
}

}  // namespace

void save_parameters(const std::filesystem::path& path, const Parameters& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, fmt::format("cannot open {}", path.string()));
  out.write(kParamMagic, sizeof kParamMagic);
  const std::uint64_t n = params.nodes.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  for (const auto& p : params.nodes) {
    for (const auto* v : {&p.weight, &p.bias, &p.gamma, &p.beta, &p.moving_mean, &p.moving_var}) write_vec(out, *v);
  }
}

Parameters load_parameters(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, fmt::format("cannot open {}", path.string()));
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kParamMagic, sizeof magic) != 0)
    throw Error(ErrorCode::MalformedDocument, "not a parameter checkpoint");
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  Parameters params;
  params.nodes.resize(n);
  for (auto& p : params.nodes) {
    for (auto* v : {&p.weight, &p.bias, &p.gamma, &p.beta, &p.moving_mean, &p.moving_var}) *v = read_vec(in);
  }
  if (!in) throw Error(ErrorCode::TruncatedFile, "parameter checkpoint ended early");
  return params;
}

}  // namespace nngpnas
