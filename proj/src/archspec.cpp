#include "nngpnas/archspec.hpp"

#include <algorithm>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "nngpnas/error.hpp"
#include "nngpnas/rng.hpp"

namespace nngpnas {

using nlohmann::json;

std::string_view op_label(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Conv3x3BnRelu: return "conv3x3-bn-relu";
    case Op::Conv1x1BnRelu: return "conv1x1-bn-relu";
    case Op::MaxPool3x3: return "maxpool3x3";
    case Op::Output: return "output";
  }
  return "?";
}

Op op_from_label(std::string_view label) {
  for (Op op : {Op::Input, Op::Conv3x3BnRelu, Op::Conv1x1BnRelu, Op::MaxPool3x3, Op::Output}) {
    if (label == op_label(op)) return op;
  }
  throw Error(ErrorCode::BadOpLabel, fmt::format("unknown op label '{}'", label));
}

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Input: return "input";
    case LayerKind::ConvBnRelu: return "conv_bn_relu";
    case LayerKind::MaxPool3x3: return "maxpool3x3";
    case LayerKind::Downsample: return "downsample";
    case LayerKind::Add: return "add";
    case LayerKind::Concat: return "concat";
    case LayerKind::GlobalAvgPool: return "global_avg_pool";
    case LayerKind::Dense: return "dense";
  }
  return "?";
}

CellSpec::CellSpec(std::vector<std::vector<int>> matrix, std::vector<Op> ops) : ops_(std::move(ops)) {
  const std::size_t v = matrix.size();
  if (v != ops_.size()) {
    throw Error(ErrorCode::MalformedDocument,
                fmt::format("matrix has {} rows but ops has {} labels", v, ops_.size()));
  }
  adjacency_.assign(v * v, 0);
  for (std::size_t i = 0; i < v; ++i) {
    if (matrix[i].size() != v) throw Error(ErrorCode::MalformedDocument, "adjacency matrix is not square");
    for (std::size_t j = 0; j < v; ++j) {
      const int e = matrix[i][j];
      if (e != 0 && e != 1) throw Error(ErrorCode::MalformedDocument, "adjacency entries must be 0 or 1");
      adjacency_[i * v + j] = static_cast<std::uint8_t>(e);
    }
  }
}

std::size_t CellSpec::num_edges() const {
  return static_cast<std::size_t>(std::count(adjacency_.begin(), adjacency_.end(), std::uint8_t{1}));
}

std::vector<std::vector<int>> CellSpec::matrix() const {
  const std::size_t v = num_vertices();
  std::vector<std::vector<int>> m(v, std::vector<int>(v, 0));
  for (std::size_t i = 0; i < v; ++i)
    for (std::size_t j = 0; j < v; ++j) m[i][j] = edge(i, j) ? 1 : 0;
  return m;
}

void validate_structure(const CellSpec& spec) {
  const std::size_t v = spec.num_vertices();
  if (v < 2) throw Error(ErrorCode::MissingInputOrOutput, "a cell needs at least INPUT and OUTPUT");
  for (std::size_t i = 0; i < v; ++i)
    for (std::size_t j = 0; j <= i; ++j)
      if (spec.edge(i, j))
        throw Error(ErrorCode::NonUpperTriangular, fmt::format("edge ({}, {}) is on or below the diagonal", i, j));
  const auto& ops = spec.ops();
  if (ops.front() != Op::Input || ops.back() != Op::Output)
    throw Error(ErrorCode::MissingInputOrOutput, "ops must start with input and end with output");
  if (std::count(ops.begin(), ops.end(), Op::Input) != 1 || std::count(ops.begin(), ops.end(), Op::Output) != 1)
    throw Error(ErrorCode::MissingInputOrOutput, "input and output labels must appear exactly once");
}

CellSpec prune_cell(const CellSpec& spec) {
  validate_structure(spec);
  const std::size_t v = spec.num_vertices();
  std::vector<bool> from_input(v, false), to_output(v, false);
  from_input[0] = true;
  for (std::size_t j = 1; j < v; ++j)
    for (std::size_t i = 0; i < j && !from_input[j]; ++i) from_input[j] = from_input[i] && spec.edge(i, j);
  to_output[v - 1] = true;
  for (std::size_t i = v - 1; i-- > 0;)
    for (std::size_t j = i + 1; j < v && !to_output[i]; ++j) to_output[i] = to_output[j] && spec.edge(i, j);
  if (!from_input[v - 1]) throw Error(ErrorCode::DisconnectedCell, "no path from input to output");

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < v; ++i)
    if (from_input[i] && to_output[i]) keep.push_back(i);
  if (keep.size() == v) return spec;

  std::vector<std::vector<int>> m(keep.size(), std::vector<int>(keep.size(), 0));
  std::vector<Op> ops;
  for (std::size_t a = 0; a < keep.size(); ++a) {
    ops.push_back(spec.ops()[keep[a]]);
    for (std::size_t b = 0; b < keep.size(); ++b) m[a][b] = spec.edge(keep[a], keep[b]) ? 1 : 0;
  }
  return CellSpec(std::move(m), std::move(ops));
}

namespace {

CellSpec from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("matrix") || !doc.contains("ops"))
    throw Error(ErrorCode::MalformedDocument, "document must be an object with 'matrix' and 'ops'");
  const json& jm = doc.at("matrix");
  const json& jo = doc.at("ops");
  if (!jm.is_array() || !jo.is_array()) throw Error(ErrorCode::MalformedDocument, "'matrix' and 'ops' must be arrays");
  std::vector<std::vector<int>> matrix;
  for (const auto& row : jm) {
    if (!row.is_array()) throw Error(ErrorCode::MalformedDocument, "matrix rows must be arrays");
    std::vector<int> r;
    for (const auto& e : row) {
      if (!e.is_number_integer()) throw Error(ErrorCode::MalformedDocument, "matrix entries must be integers");
      r.push_back(e.get<int>());
    }
    matrix.push_back(std::move(r));
  }
  std::vector<Op> ops;
  for (const auto& o : jo) {
    if (!o.is_string()) throw Error(ErrorCode::MalformedDocument, "op labels must be strings");
    ops.push_back(op_from_label(o.get<std::string>()));
  }
  CellSpec spec(std::move(matrix), std::move(ops));
  return prune_cell(spec);
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedDocument, e.what());
  }
}

}  // namespace

CellSpec parse_arch(std::string_view text) { return from_json(parse_json(text)); }

std::vector<CellSpec> parse_arch_batch(std::string_view text) {
  std::vector<CellSpec> out;
  if (json::accept(text.begin(), text.end())) {
    json doc = json::parse(text.begin(), text.end());
    if (doc.is_array()) {
      for (const auto& d : doc) out.push_back(from_json(d));
    } else {
      out.push_back(from_json(doc));
    }
    return out;
  }
  std::istringstream lines{std::string(text)};
  std::string line;
  while (std::getline(lines, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_arch(line));
  }
  return out;
}

std::string to_json(const CellSpec& spec) {
  json doc;
  doc["matrix"] = spec.matrix();
  json ops = json::array();
  for (Op op : spec.ops()) ops.push_back(std::string(op_label(op)));
  doc["ops"] = std::move(ops);
  return doc.dump();
}

CellSpec sample_random_arch(std::uint64_t seed, const SamplingLimits& limits) {
  if (limits.max_vertices < 2) throw Error(ErrorCode::InvalidArgument, "max_vertices must be at least 2");
  constexpr Op kInternalOps[] = {Op::Conv3x3BnRelu, Op::Conv1x1BnRelu, Op::MaxPool3x3};
  Rng rng(mix_seed(seed));
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<int> pick_op(0, 2);
  const std::size_t v = limits.max_vertices;
  for (std::size_t attempt = 0; attempt < limits.max_retries; ++attempt) {
    std::vector<std::vector<int>> m(v, std::vector<int>(v, 0));
    for (std::size_t i = 0; i < v; ++i)
      for (std::size_t j = i + 1; j < v; ++j) m[i][j] = coin(rng) ? 1 : 0;
    std::vector<Op> ops(v);
    ops.front() = Op::Input;
    ops.back() = Op::Output;
    for (std::size_t i = 1; i + 1 < v; ++i) ops[i] = kInternalOps[pick_op(rng)];
    try {
      CellSpec pruned = prune_cell(CellSpec(std::move(m), std::move(ops)));
      if (pruned.num_edges() <= limits.max_edges) return pruned;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DisconnectedCell) throw;
    }
  }
  throw Error(ErrorCode::SamplingExhausted, fmt::format("no valid cell after {} draws", limits.max_retries));
}

std::vector<int> allocate_cell_channels(const CellSpec& spec, int channels) {
  const std::size_t v = spec.num_vertices();
  std::vector<int> c(v, 0);
  c.front() = channels;
  c.back() = channels;
  std::vector<std::size_t> branches;
  for (std::size_t i = 1; i + 1 < v; ++i)
    if (spec.edge(i, v - 1)) branches.push_back(i);
  if (branches.empty()) return c;
  const int n = static_cast<int>(branches.size());
  if (n > channels)
    throw Error(ErrorCode::ChannelAllocationError,
                fmt::format("{} output branches exceed the cell's {} channels", n, channels));
  for (int b = 0; b < n; ++b) c[branches[b]] = channels / n + (b < channels % n ? 1 : 0);
  for (std::size_t i = v - 1; i-- > 1;) {
    if (spec.edge(i, v - 1)) continue;
    for (std::size_t j = i + 1; j + 1 < v; ++j)
      if (spec.edge(i, j)) c[i] = std::max(c[i], c[j]);
  }
  return c;
}

namespace {

class GraphBuilder {
 public:
  explicit GraphBuilder(LayerGraph& g) : g_(g) {}

  int add(LayerKind kind, std::vector<int> inputs, TensorShape out, int kernel, std::string name) {
    LayerNode node;
    node.kind = kind;
    node.in_shape = inputs.empty() ? out : g_.nodes.at(inputs.front()).out_shape;
    node.inputs = std::move(inputs);
    node.out_shape = out;
    node.kernel = kernel;
    node.name = std::move(name);
    g_.nodes.push_back(std::move(node));
    return static_cast<int>(g_.nodes.size()) - 1;
  }

  const TensorShape& shape(int id) const { return g_.nodes.at(id).out_shape; }

  int conv(int in, int kernel, int out_channels, std::string name) {
    TensorShape s = shape(in);
    s.channels = out_channels;
    return add(LayerKind::ConvBnRelu, {in}, s, kernel, std::move(name));
  }

  int cell(const CellSpec& spec, int in, const std::string& prefix) {
    const std::size_t v = spec.num_vertices();
    const int channels = shape(in).channels;
    const std::vector<int> c = allocate_cell_channels(spec, channels);
    std::vector<int> node_of(v, -1);
    node_of[0] = in;
    for (std::size_t j = 1; j + 1 < v; ++j) {
      std::vector<int> srcs;
      for (std::size_t i = 0; i < j; ++i) {
        if (!spec.edge(i, j)) continue;
        int src = node_of[i];
        if (c[i] != c[j]) src = conv(src, 1, c[j], fmt::format("{}/proj{}->{}", prefix, i, j));
        srcs.push_back(src);
      }
      int merged = srcs.front();
      if (srcs.size() > 1) {
        TensorShape s = shape(srcs.front());
        merged = add(LayerKind::Add, srcs, s, 0, fmt::format("{}/add{}", prefix, j));
      }
      const std::string name = fmt::format("{}/v{}", prefix, j);
      switch (spec.ops()[j]) {
        case Op::Conv3x3BnRelu: node_of[j] = conv(merged, 3, c[j], name); break;
        case Op::Conv1x1BnRelu: node_of[j] = conv(merged, 1, c[j], name); break;
        case Op::MaxPool3x3: node_of[j] = add(LayerKind::MaxPool3x3, {merged}, shape(merged), 3, name); break;
        default: throw Error(ErrorCode::MissingInputOrOutput, "input/output label on an internal vertex");
      }
    }
    std::vector<int> branches;
    for (std::size_t i = 1; i + 1 < v; ++i)
      if (spec.edge(i, v - 1)) branches.push_back(node_of[i]);
    int out = in;
    if (branches.size() == 1) {
      out = branches.front();
    } else if (branches.size() > 1) {
      TensorShape s = shape(in);
      s.channels = channels;
      out = add(LayerKind::Concat, branches, s, 0, prefix + "/concat");
    }
    if (spec.edge(0, v - 1) && !branches.empty()) {
      out = add(LayerKind::Add, {out, in}, shape(in), 0, prefix + "/residual");
    }
    return out;
  }

 private:
  LayerGraph& g_;
};

}  // namespace

LayerGraph assemble_network(const CellSpec& spec, const NetworkPlan& plan) {
  if (plan.stem_channels < 1 || plan.num_blocks < 1 || plan.cells_per_block < 1 || plan.num_classes < 1 ||
      plan.input_shape.height < 1 || plan.input_shape.width < 1 || plan.input_shape.channels < 1)
    throw Error(ErrorCode::InvalidArgument, "network plan fields must be positive");
  const CellSpec cell = prune_cell(spec);
  LayerGraph g;
  GraphBuilder b(g);
  const auto& in = plan.input_shape;
  int cur = b.add(LayerKind::Input, {}, {in.height, in.width, in.channels}, 0, "input");
  cur = b.conv(cur, 3, plan.stem_channels, "stem");
  for (int block = 0; block < plan.num_blocks; ++block) {
    if (block > 0) {
      TensorShape s = b.shape(cur);
      s.height = (s.height + 1) / 2;
      s.width = (s.width + 1) / 2;
      s.channels *= 2;
      cur = b.add(LayerKind::Downsample, {cur}, s, 1, fmt::format("downsample{}", block));
    }
    for (int k = 0; k < plan.cells_per_block; ++k) cur = b.cell(cell, cur, fmt::format("block{}/cell{}", block, k));
  }
  TensorShape pooled{1, 1, b.shape(cur).channels};
  g.features_node = b.add(LayerKind::GlobalAvgPool, {cur}, pooled, 0, "global_avg_pool");
  g.logits_node = b.add(LayerKind::Dense, {g.features_node}, {1, 1, plan.num_classes}, 0, "readout");
  return g;
}

}  // namespace nngpnas
