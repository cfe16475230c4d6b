#include <set>

#include "doctest.h"
#include "test_util.hpp"

#include "nngpnas/archspec.hpp"

using namespace nngpnas;
using testutil::code_of;

TEST_CASE("parse_arch accepts minimal cells") {
  const CellSpec id = parse_arch(R"({"matrix": [[0,1],[0,0]], "ops": ["input","output"]})");
  CHECK(id.num_vertices() == 2);
  CHECK(id.edge(0, 1));

  const CellSpec conv =
      parse_arch(R"({"matrix": [[0,1,0],[0,0,1],[0,0,0]], "ops": ["input","conv3x3-bn-relu","output"]})");
  CHECK(conv == testutil::conv_chain_cell());
  CHECK(conv.num_edges() == 2);
}

TEST_CASE("parse_arch rejects invalid documents") {
  CHECK(code_of([] { parse_arch(R"({"matrix": [[0,1],[1,0]], "ops": ["input","output"]})"); }) ==
        ErrorCode::NonUpperTriangular);
  CHECK(code_of([] { parse_arch(R"({"matrix": [[1,1],[0,0]], "ops": ["input","output"]})"); }) ==
        ErrorCode::NonUpperTriangular);
  CHECK(code_of([] { parse_arch(R"({"matrix": [[0,1],[0,0]], "ops": ["input","conv5x5"]})"); }) ==
        ErrorCode::BadOpLabel);
  CHECK(code_of([] { parse_arch(R"({"matrix": [[0,1],[0,0]], "ops": ["output","input"]})"); }) ==
        ErrorCode::MissingInputOrOutput);
  CHECK(code_of([] {
          parse_arch(R"({"matrix": [[0,1,1],[0,0,1],[0,0,0]], "ops": ["input","output","output"]})");
        }) == ErrorCode::MissingInputOrOutput);
  CHECK(code_of([] { parse_arch(R"({"matrix": [[0]], "ops": ["input"]})"); }) == ErrorCode::MissingInputOrOutput);
  CHECK(code_of([] { parse_arch(R"({"ops": ["input","output"]})"); }) == ErrorCode::MalformedDocument);
  CHECK(code_of([] { parse_arch(R"({"matrix": [[0,1]], "ops": ["input","output"]})"); }) ==
        ErrorCode::MalformedDocument);
  CHECK(code_of([] { parse_arch(R"({"matrix": [[0,2],[0,0]], "ops": ["input","output"]})"); }) ==
        ErrorCode::MalformedDocument);
  CHECK(code_of([] { parse_arch("{not json"); }) == ErrorCode::MalformedDocument);
  CHECK(code_of([] { parse_arch("[1,2]"); }) == ErrorCode::MalformedDocument);
}

TEST_CASE("parse_arch_batch handles single, array and newline-delimited input") {
  const std::string a = to_json(testutil::identity_cell());
  const std::string b = to_json(testutil::conv_chain_cell());
  CHECK(parse_arch_batch(a).size() == 1);
  CHECK(parse_arch_batch("[" + a + "," + b + "]").size() == 2);
  const auto lines = parse_arch_batch(a + "\n\n" + b + "\n");
  REQUIRE(lines.size() == 2);
  CHECK(lines[1] == testutil::conv_chain_cell());
}

TEST_CASE("to_json round-trips") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const CellSpec c = sample_random_arch(s);
    CHECK(parse_arch(to_json(c)) == c);
  }
}

TEST_CASE("prune_cell removes dead vertices") {
  // vertex 2 has no outgoing edge
  const CellSpec dangling({{0, 1, 1, 0}, {0, 0, 0, 1}, {0, 0, 0, 0}, {0, 0, 0, 0}},
                          {Op::Input, Op::Conv3x3BnRelu, Op::MaxPool3x3, Op::Output});
  const CellSpec pruned = prune_cell(dangling);
  CHECK(pruned == testutil::conv_chain_cell());

  const CellSpec full = testutil::branchy_cell();
  CHECK(prune_cell(full) == full);

  // only internal vertex has no in-edge and the output is unreachable
  const CellSpec disconnected({{0, 0, 0}, {0, 0, 1}, {0, 0, 0}}, {Op::Input, Op::Conv1x1BnRelu, Op::Output});
  CHECK(code_of([&] { prune_cell(disconnected); }) == ErrorCode::DisconnectedCell);
}

TEST_CASE("prune_cell is idempotent on random encodings") {
  Rng rng(7);
  std::bernoulli_distribution coin(0.5);
  int checked = 0;
  for (int t = 0; t < 500; ++t) {
    std::vector<std::vector<int>> m(6, std::vector<int>(6, 0));
    for (int i = 0; i < 6; ++i)
      for (int j = i + 1; j < 6; ++j) m[i][j] = coin(rng);
    const CellSpec c(m, {Op::Input, Op::Conv3x3BnRelu, Op::MaxPool3x3, Op::Conv1x1BnRelu, Op::Conv3x3BnRelu,
                         Op::Output});
    try {
      const CellSpec once = prune_cell(c);
      CHECK(prune_cell(once) == once);
      ++checked;
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DisconnectedCell);
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("assemble_network: identity cell shapes") {
  const LayerGraph g = assemble_network(testutil::identity_cell(), NetworkPlan{});
  CHECK(g.feature_dim() == 512);
  CHECK(g.num_classes() == 10);
  // input, stem, 2 downsamples, pool, readout
  CHECK(g.nodes.size() == 6);
  CHECK(g.nodes[g.features_node].in_shape == TensorShape{8, 8, 512});

  NetworkPlan small;
  small.stem_channels = 16;
  CHECK(assemble_network(testutil::identity_cell(), small).feature_dim() == 64);
}

TEST_CASE("assemble_network: conv chain layer count") {
  NetworkPlan desk{16, 3, 3, {8, 8, 3}, 10};
  const LayerGraph g = assemble_network(testutil::conv_chain_cell(), desk);
  // oracle: walk the graph and count by kind
  int convs = 0, downs = 0, pools = 0, dense = 0, other = 0;
  for (std::size_t i = 1; i < g.nodes.size(); ++i) {
    switch (g.nodes[i].kind) {
      case LayerKind::ConvBnRelu: ++convs; break;
      case LayerKind::Downsample: ++downs; break;
      case LayerKind::GlobalAvgPool: ++pools; break;
      case LayerKind::Dense: ++dense; break;
      default: ++other;
    }
  }
  CHECK(convs == 1 + 9);
  CHECK(downs == 2);
  CHECK(pools == 1);
  CHECK(dense == 1);
  CHECK(other == 0);
  CHECK(g.layer_count() == 14);
  CHECK(g.nodes[g.features_node].in_shape == TensorShape{2, 2, 64});
}

TEST_CASE("assemble_network: branches, projections and residuals") {
  NetworkPlan plan{8, 1, 1, {4, 4, 3}, 3};
  const CellSpec cell = testutil::branchy_cell();
  const std::vector<int> c = allocate_cell_channels(cell, 8);
  // three branches into output: 3 + 3 + 2
  CHECK(c == std::vector<int>{8, 3, 3, 2, 8});
  const LayerGraph g = assemble_network(cell, plan);
  int concat = 0, adds = 0;
  for (const auto& n : g.nodes) {
    concat += n.kind == LayerKind::Concat;
    adds += n.kind == LayerKind::Add;
    if (n.kind == LayerKind::Concat) CHECK(n.out_shape.channels == 8);
  }
  CHECK(concat == 1);
  // v3 merges input and v1; the output adds the input skip
  CHECK(adds == 2);
  CHECK(g.feature_dim() == 8);
}

TEST_CASE("allocate_cell_channels rejects too many branches") {
  const CellSpec cell = testutil::branchy_cell();
  CHECK(code_of([&] { allocate_cell_channels(cell, 2); }) == ErrorCode::ChannelAllocationError);
  CHECK(code_of([&] { assemble_network(cell, NetworkPlan{2, 1, 1, {4, 4, 3}, 2}); }) ==
        ErrorCode::ChannelAllocationError);
}

TEST_CASE("assemble_network is pure and rejects bad plans") {
  const CellSpec c = sample_random_arch(3);
  NetworkPlan plan{8, 2, 2, {8, 8, 3}, 10};
  CHECK(assemble_network(c, plan) == assemble_network(c, plan));
  plan.num_blocks = 0;
  CHECK(code_of([&] { assemble_network(c, plan); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("penultimate dimension formula over small plans") {
  std::vector<CellSpec> cells{testutil::identity_cell(), testutil::conv_chain_cell(), testutil::branchy_cell()};
  for (std::uint64_t s = 0; s < 5; ++s) cells.push_back(sample_random_arch(s, {5, 9, 100000}));
  for (const auto& cell : cells)
    for (int stem : {4, 6, 9})
      for (int blocks = 1; blocks <= 3; ++blocks)
        for (int cpb = 1; cpb <= 2; ++cpb) {
          NetworkPlan plan{stem, blocks, cpb, {5, 7, 2}, 4};
          try {
            const LayerGraph g = assemble_network(cell, plan);
            CHECK(g.feature_dim() == stem * (1 << (blocks - 1)));
            CHECK(g.feature_dim() == plan.penultimate_dim());
          } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ChannelAllocationError);
          }
        }
}

TEST_CASE("sample_random_arch") {
  CHECK(sample_random_arch(0) == sample_random_arch(0));
  std::set<std::string> distinct;
  for (std::uint64_t s = 0; s < 20; ++s) distinct.insert(to_json(sample_random_arch(s)));
  CHECK(distinct.size() > 10);

  for (std::uint64_t s = 0; s < 20; ++s) CHECK(sample_random_arch(s, {2, 9, 100}) == testutil::identity_cell());

  for (std::uint64_t s = 0; s < 1000; ++s) {
    const CellSpec c = sample_random_arch(s, {5, 9, 100000});
    CHECK(c.num_vertices() <= 5);
    CHECK(c.num_edges() <= 9);
    CHECK_NOTHROW(validate_structure(c));
    CHECK(prune_cell(c) == c);
  }

  CHECK(code_of([] { sample_random_arch(0, {1, 9, 10}); }) == ErrorCode::InvalidArgument);
  // zero edges allowed on a 7-vertex draw: impossible
  CHECK(code_of([] { sample_random_arch(0, {7, 0, 50}); }) == ErrorCode::SamplingExhausted);
}
