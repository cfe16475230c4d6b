#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace nngpnas {

/// Vertex labels of a NAS-Bench-101-style cell.
enum class Op : std::uint8_t { Input, Conv3x3BnRelu, Conv1x1BnRelu, MaxPool3x3, Output };

std::string_view op_label(Op op);
Op op_from_label(std::string_view label);

/// Labelled DAG: a strictly upper-triangular adjacency matrix plus one label per vertex.
/// Edge (i, j) means data flows from vertex i to vertex j.
class CellSpec {
 public:
  CellSpec() = default;
  CellSpec(std::vector<std::vector<int>> matrix, std::vector<Op> ops);

  std::size_t num_vertices() const { return ops_.size(); }
  bool edge(std::size_t from, std::size_t to) const { return adjacency_[from * ops_.size() + to] != 0; }
  std::size_t num_edges() const;
  const std::vector<Op>& ops() const { return ops_; }
  std::vector<std::vector<int>> matrix() const;

  bool operator==(const CellSpec&) const = default;

 private:
  std::vector<std::uint8_t> adjacency_;
  std::vector<Op> ops_;
};

/// Throws on any structural violation (non-square matrix, lower-triangular entries,
/// misplaced INPUT/OUTPUT). Does not check connectivity; see prune_cell.
void validate_structure(const CellSpec& spec);

/// Removes internal vertices that are not on any INPUT->OUTPUT path.
CellSpec prune_cell(const CellSpec& spec);

/// Parses one architecture document ({"matrix": [...], "ops": [...]}), validates and prunes it.
CellSpec parse_arch(std::string_view text);

/// Parses a file body holding either one document or newline-delimited documents.
std::vector<CellSpec> parse_arch_batch(std::string_view text);

/// Single-line JSON rendering accepted by parse_arch.
std::string to_json(const CellSpec& spec);

struct SamplingLimits {
  std::size_t max_vertices = 7;
  std::size_t max_edges = 9;
  std::size_t max_retries = 100000;
};

/// Rejection sampler over uniformly drawn encodings with `max_vertices` vertices.
CellSpec sample_random_arch(std::uint64_t seed, const SamplingLimits& limits = {});

struct InputShape {
  int height = 32;
  int width = 32;
  int channels = 3;
  bool operator==(const InputShape&) const = default;
};

struct NetworkPlan {
  int stem_channels = 128;
  int num_blocks = 3;
  int cells_per_block = 3;
  InputShape input_shape{};
  int num_classes = 10;

  int penultimate_dim() const { return stem_channels << (num_blocks - 1); }
  bool operator==(const NetworkPlan&) const = default;
};

enum class LayerKind : std::uint8_t {
  Input,
  ConvBnRelu,     // k x k conv, batch-norm, ReLU (stem, cell convs, projections)
  MaxPool3x3,     // stride 1, SAME
  Downsample,     // 2x2/2 max-pool, 1x1 conv, batch-norm
  Add,
  Concat,
  GlobalAvgPool,
  Dense,
};

std::string_view layer_kind_name(LayerKind kind);

struct TensorShape {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::size_t size() const { return static_cast<std::size_t>(height) * width * channels; }
  bool operator==(const TensorShape&) const = default;
};

struct LayerNode {
  LayerKind kind = LayerKind::Input;
  std::vector<int> inputs;
  TensorShape in_shape;   // shape of (each) input
  TensorShape out_shape;
  int kernel = 0;         // conv kernel size; 0 when not a conv
  std::string name;

  bool has_batchnorm() const { return kind == LayerKind::ConvBnRelu || kind == LayerKind::Downsample; }
  bool operator==(const LayerNode&) const = default;
};

/// Topologically ordered layer graph. Node 0 is the network input.
struct LayerGraph {
  std::vector<LayerNode> nodes;
  int features_node = -1;  // global-average-pool output (penultimate features)
  int logits_node = -1;

  std::size_t layer_count() const { return nodes.empty() ? 0 : nodes.size() - 1; }
  int feature_dim() const { return nodes.at(features_node).out_shape.channels; }
  int num_classes() const { return nodes.at(logits_node).out_shape.channels; }
  const TensorShape& input_shape() const { return nodes.front().out_shape; }
  bool operator==(const LayerGraph&) const = default;
};

/// Vertex channel counts for a cell with `channels` in and out. Index 0 and V-1 hold `channels`.
std::vector<int> allocate_cell_channels(const CellSpec& spec, int channels);

LayerGraph assemble_network(const CellSpec& spec, const NetworkPlan& plan);

}  // namespace nngpnas
