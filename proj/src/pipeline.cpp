#include "nngpnas/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "nngpnas/costmodel.hpp"
#include "nngpnas/error.hpp"
#include "nngpnas/metrics.hpp"
#include "nngpnas/rng.hpp"

namespace nngpnas {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& text, const std::string& what) {
  std::istringstream in(trim(text));
  T v{};
  in >> v;
  if (in.fail() || !in.eof())
    throw Error(ErrorCode::InvalidArgument, fmt::format("cannot parse '{}' for {}", text, what));
  return v;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const std::string& what) {
  std::vector<T> out;
  for (const auto& tok : split(text, ',')) {
    if (trim(tok).empty()) continue;
    out.push_back(parse_number<T>(tok, what));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------------------------- config

std::vector<NngpTriple> ExperimentConfig::resolved_triples() const {
  std::vector<NngpTriple> out = triples;
  if (out.empty()) {
    for (int nd : train_sizes)
      for (int nv : val_sizes)
        for (int ne : ensembles) out.push_back({nd, nv, ne});
  }
  auto in = [](const std::vector<int>& grid, int v) { return std::find(grid.begin(), grid.end(), v) != grid.end(); };
  for (const auto& t : out) {
    if (t.n_train > 8000) throw Error(ErrorCode::InvalidArgument, fmt::format("N_D={} exceeds the 8000 cap", t.n_train));
    if (t.n_train < 1 || t.n_val < 1 || t.n_ensemble < 1)
      throw Error(ErrorCode::InvalidArgument, "NNGP triple entries must be positive");
    if (!in(train_sizes, t.n_train) || !in(val_sizes, t.n_val) || !in(ensembles, t.n_ensemble))
      throw Error(ErrorCode::InvalidArgument,
                  fmt::format("triple {}:{}:{} is not drawn from the declared grids", t.n_train, t.n_val, t.n_ensemble));
  }
  return out;
}

void ExperimentConfig::validate() const {
  resolved_triples();
  init.validate();
  train.validate();
  InferenceConfig{reg_grid, 1}.validate();
  for (int e : epoch_budgets)
    if (e < 1) throw Error(ErrorCode::InvalidArgument, "epoch budgets must be at least 1");
  if (workers < 1) throw Error(ErrorCode::InvalidArgument, "workers must be at least 1");
  if (discovered_k < 1) throw Error(ErrorCode::InvalidArgument, "discovered_k must be at least 1");
}

namespace {

using boost::property_tree::ptree;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"experiment", {"seed", "out_dir", "workers", "discovered_k", "pqetp_step", "include_model_size"}},
      {"nngp",
       {"train_sizes", "val_sizes", "ensembles", "triples", "reg_grid", "readout_variance", "conv_gain",
        "bn_momentum", "bn_warmup_batch"}},
      {"train", {"epochs", "batch_size", "learning_rate", "momentum", "weight_decay", "bn_momentum"}},
      {"network", {"stem_channels", "num_blocks", "cells_per_block"}},
      {"data",
       {"source", "cifar_dir", "num_labels", "input_shape", "train_per_class", "val_per_class", "separation",
        "max_train_pool", "max_val_pool"}},
      {"search", {"arch_file", "num_random", "max_vertices", "max_edges"}},
  };
  return keys;
}

std::vector<double> parse_reg_grid(const std::string& text) {
  const std::string t = trim(text);
  if (t.rfind("logspace(", 0) == 0 && t.back() == ')') {
    const auto args = parse_list<double>(t.substr(9, t.size() - 10), "reg_grid logspace");
    if (args.size() != 3 || args[2] < 1) throw Error(ErrorCode::InvalidArgument, "logspace needs (start, stop, num)");
    const int num = static_cast<int>(args[2]);
    std::vector<double> grid(num);
    const double step = num > 1 ? (args[1] - args[0]) / (num - 1) : 0.0;
    for (int i = 0; i < num; ++i) grid[i] = std::pow(10.0, i + 1 == num && num > 1 ? args[1] : args[0] + i * step);
    return grid;
  }
  return parse_list<double>(t, "reg_grid");
}

InputShape parse_shape(const std::string& text) {
  const auto parts = split(trim(text), 'x');
  if (parts.size() != 3) throw Error(ErrorCode::InvalidArgument, "input_shape must look like HxWxC");
  return {parse_number<int>(parts[0], "input_shape"), parse_number<int>(parts[1], "input_shape"),
          parse_number<int>(parts[2], "input_shape")};
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorCode::MalformedDocument, e.what());
  }
  for (const auto& [section, body] : tree) {
    auto it = known_keys().find(section);
    if (it == known_keys().end() || body.empty())
      throw Error(ErrorCode::InvalidArgument, fmt::format("unknown config section or top-level key '{}'", section));
    for (const auto& [key, value] : body)
      if (!it->second.contains(key))
        throw Error(ErrorCode::InvalidArgument, fmt::format("unknown config key '{}.{}'", section, key));
  }
  auto get = [&](const std::string& path) -> std::optional<std::string> {
    if (auto v = tree.get_optional<std::string>(path)) return trim(*v);
    return std::nullopt;
  };

  ExperimentConfig cfg;
  if (auto v = get("experiment.seed")) cfg.seed = parse_number<std::uint64_t>(*v, "seed");
  if (auto v = get("experiment.out_dir")) cfg.out_dir = *v;
  if (auto v = get("experiment.workers")) cfg.workers = parse_number<int>(*v, "workers");
  if (auto v = get("experiment.discovered_k")) cfg.discovered_k = parse_number<std::size_t>(*v, "discovered_k");
  if (auto v = get("experiment.pqetp_step")) cfg.pqetp_step = parse_number<double>(*v, "pqetp_step");
  if (auto v = get("experiment.include_model_size")) cfg.include_model_size = *v == "true" || *v == "1";

  if (auto v = get("nngp.train_sizes")) cfg.train_sizes = parse_list<int>(*v, "train_sizes");
  if (auto v = get("nngp.val_sizes")) cfg.val_sizes = parse_list<int>(*v, "val_sizes");
  if (auto v = get("nngp.ensembles")) cfg.ensembles = parse_list<int>(*v, "ensembles");
  if (auto v = get("nngp.triples")) {
    for (const auto& tok : split(*v, ',')) {
      if (trim(tok).empty()) continue;
      const auto parts = split(trim(tok), ':');
      if (parts.size() != 3) throw Error(ErrorCode::InvalidArgument, "triples must look like N_D:N_val:n_ensemble");
      cfg.triples.push_back({parse_number<int>(parts[0], "triple"), parse_number<int>(parts[1], "triple"),
                             parse_number<int>(parts[2], "triple")});
    }
  }
  if (auto v = get("nngp.reg_grid")) cfg.reg_grid = parse_reg_grid(*v);
  if (auto v = get("nngp.readout_variance")) cfg.init.readout_weight_variance = parse_number<double>(*v, "readout_variance");
  if (auto v = get("nngp.conv_gain")) cfg.init.conv_gain = parse_number<double>(*v, "conv_gain");
  if (auto v = get("nngp.bn_momentum")) cfg.init.bn_momentum = parse_number<double>(*v, "bn_momentum");
  if (auto v = get("nngp.bn_warmup_batch")) cfg.init.bn_warmup_batch = parse_number<int>(*v, "bn_warmup_batch");

  if (auto v = get("train.epochs")) cfg.epoch_budgets = parse_list<int>(*v, "epochs");
  if (auto v = get("train.batch_size")) cfg.train.batch_size = parse_number<int>(*v, "batch_size");
  if (auto v = get("train.learning_rate")) cfg.train.learning_rate = parse_number<double>(*v, "learning_rate");
  if (auto v = get("train.momentum")) cfg.train.momentum = parse_number<double>(*v, "momentum");
  if (auto v = get("train.weight_decay")) cfg.train.weight_decay = parse_number<double>(*v, "weight_decay");
  if (auto v = get("train.bn_momentum")) cfg.train.bn_momentum = parse_number<double>(*v, "train bn_momentum");

  if (auto v = get("network.stem_channels")) cfg.plan.stem_channels = parse_number<int>(*v, "stem_channels");
  if (auto v = get("network.num_blocks")) cfg.plan.num_blocks = parse_number<int>(*v, "num_blocks");
  if (auto v = get("network.cells_per_block")) cfg.plan.cells_per_block = parse_number<int>(*v, "cells_per_block");

  if (auto v = get("data.source")) {
    if (*v == "synthetic") {
      cfg.data.source = DataSource::Synthetic;
    } else if (*v == "cifar") {
      cfg.data.source = DataSource::Cifar;
    } else {
      throw Error(ErrorCode::InvalidArgument, fmt::format("unknown data source '{}'", *v));
    }
  }
  if (auto v = get("data.cifar_dir")) cfg.data.cifar_dir = *v;
  if (auto v = get("data.num_labels")) cfg.data.num_labels = parse_number<int>(*v, "num_labels");
  if (auto v = get("data.input_shape")) cfg.data.input_shape = parse_shape(*v);
  if (auto v = get("data.train_per_class")) cfg.data.train_per_class = parse_number<int>(*v, "train_per_class");
  if (auto v = get("data.val_per_class")) cfg.data.val_per_class = parse_number<int>(*v, "val_per_class");
  if (auto v = get("data.separation")) cfg.data.separation = parse_number<double>(*v, "separation");
  if (auto v = get("data.max_train_pool")) cfg.data.max_train_pool = parse_number<std::size_t>(*v, "max_train_pool");
  if (auto v = get("data.max_val_pool")) cfg.data.max_val_pool = parse_number<std::size_t>(*v, "max_val_pool");

  if (auto v = get("search.arch_file")) cfg.search.arch_file = *v;
  if (auto v = get("search.num_random")) cfg.search.num_random = parse_number<std::size_t>(*v, "num_random");
  if (auto v = get("search.max_vertices")) cfg.search.limits.max_vertices = parse_number<std::size_t>(*v, "max_vertices");
  if (auto v = get("search.max_edges")) cfg.search.limits.max_edges = parse_number<std::size_t>(*v, "max_edges");

  if (cfg.data.source == DataSource::Cifar) {
    cfg.data.input_shape = {32, 32, 3};
    cfg.data.num_labels = 10;
  }
  cfg.plan.input_shape = cfg.data.input_shape;
  cfg.plan.num_classes = cfg.data.num_labels;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, fmt::format("cannot open config {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

// ---------------------------------------------------------------------------------------------- data

namespace {

struct DataPools {
  LabeledSet train;
  LabeledSet val;
  int num_labels = 0;
};

LabeledSet cap_pool(const LabeledSet& pool, int num_labels, std::size_t cap, std::uint64_t seed) {
  if (cap == 0 || cap >= pool.size()) return pool;
  const auto idx = subsample_balanced(pool.labels, num_labels, cap, seed);
  return pool.subset(idx);
}

DataPools build_pools(const ExperimentConfig& cfg) {
  const auto& d = cfg.data;
  DataPools p;
  p.num_labels = d.num_labels;
  if (d.source == DataSource::Synthetic) {
    const int dims = static_cast<int>(TensorShape{d.input_shape.height, d.input_shape.width, d.input_shape.channels}.size());
    LabeledSet all = make_synthetic(d.num_labels, dims, d.train_per_class + d.val_per_class, d.separation,
                                    derive_seed(cfg.seed, {0xda7a}));
    all = reshape_inputs(std::move(all), {d.input_shape.height, d.input_shape.width, d.input_shape.channels});
    const std::size_t n_train = static_cast<std::size_t>(d.num_labels) * d.train_per_class;
    std::vector<std::size_t> tr(n_train), va(all.size() - n_train);
    std::iota(tr.begin(), tr.end(), std::size_t{0});
    std::iota(va.begin(), va.end(), n_train);
    p.train = all.subset(tr);
    p.val = all.subset(va);
  } else {
    const CifarData raw = load_cifar(d.cifar_dir);
    p.train = {standardize(raw.train), raw.train.labels};
    p.val = {standardize(raw.test), raw.test.labels};
  }
  p.train = cap_pool(p.train, p.num_labels, d.max_train_pool, derive_seed(cfg.seed, {0xca9, 0}));
  p.val = cap_pool(p.val, p.num_labels, d.max_val_pool, derive_seed(cfg.seed, {0xca9, 1}));
  return p;
}

DatasetSplit split_from_pools(const DataPools& pools, const ExperimentConfig& cfg, int n_train, int n_val) {
  DatasetSplit s;
  s.num_labels = pools.num_labels;
  s.full_train = pools.train;
  s.full_val = pools.val;
  // A single shared seed fixes the sub-sampled sets across all architectures.
  s.nngp_train = pools.train.subset(
      subsample_balanced(pools.train.labels, pools.num_labels, n_train, derive_seed(cfg.seed, {0x7a1, 0})));
  s.nngp_val = pools.val.subset(
      subsample_balanced(pools.val.labels, pools.num_labels, n_val, derive_seed(cfg.seed, {0x7a1, 1})));
  return s;
}

}  // namespace

DatasetSplit build_split(const ExperimentConfig& cfg, int n_train, int n_val) {
  return split_from_pools(build_pools(cfg), cfg, n_train, n_val);
}

// ---------------------------------------------------------------------------------------------- scores

std::string ScoreRow::key() const {
  return fmt::format("{},{},{},{},{},{},{}", arch_id, proxy_name, n_train, n_val, n_ensemble, epochs, seed);
}

std::string ScoreRow::proxy_label() const {
  if (proxy_name == "nngp") return fmt::format("nngp:{}:{}:{}", n_train, n_val, n_ensemble);
  if (proxy_name == "train") return fmt::format("train:{}", epochs);
  return proxy_name;
}

std::string format_score_row(const ScoreRow& r) {
  return fmt::format("{},{},{},{},{},{},{:.17g},{:.17g},{}", r.arch_id, r.proxy_name, r.n_train, r.n_val,
                     r.n_ensemble, r.epochs, r.score, r.flops, r.seed);
}

ScoreRow parse_score_row(const std::string& line) {
  const auto f = split(trim(line), ',');
  if (f.size() != 9) throw Error(ErrorCode::MalformedDocument, fmt::format("score row needs 9 fields: '{}'", line));
  ScoreRow r;
  r.arch_id = f[0];
  r.proxy_name = f[1];
  r.n_train = parse_number<int>(f[2], "N_D");
  r.n_val = parse_number<int>(f[3], "N_val");
  r.n_ensemble = parse_number<int>(f[4], "n_ensemble");
  r.epochs = parse_number<int>(f[5], "epochs");
  r.score = parse_number<double>(f[6], "score");
  r.flops = parse_number<double>(f[7], "flops");
  r.seed = parse_number<std::uint64_t>(f[8], "seed");
  return r;
}

namespace {

bool row_less(const ScoreRow& a, const ScoreRow& b) {
  return std::tie(a.arch_id, a.proxy_name, a.n_train, a.n_val, a.n_ensemble, a.epochs, a.seed) <
         std::tie(b.arch_id, b.proxy_name, b.n_train, b.n_val, b.n_ensemble, b.epochs, b.seed);
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream out(path, std::ios::out | mode);
  if (!out) throw Error(ErrorCode::IoError, fmt::format("cannot write {}", path.string()));
  return out;
}

}  // namespace

void write_scores(const std::filesystem::path& path, std::vector<ScoreRow> rows) {
  std::sort(rows.begin(), rows.end(), row_less);
  auto out = open_out(path);
  out << kScoreHeader << '\n';
  for (const auto& r : rows) out << format_score_row(r) << '\n';
}

std::vector<ScoreRow> read_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, fmt::format("cannot open {}", path.string()));
  std::vector<ScoreRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    if (first && trim(line) == kScoreHeader) {
      first = false;
      continue;
    }
    first = false;
    rows.push_back(parse_score_row(line));
  }
  return rows;
}

ProxyColumn select_proxy(const std::vector<ScoreRow>& rows, const std::string& label) {
  std::map<std::string, std::pair<double, double>> by_id;
  for (const auto& r : rows)
    if (r.proxy_label() == label) by_id[r.arch_id] = {r.score, r.flops};
  if (by_id.empty()) throw Error(ErrorCode::MissingScores, fmt::format("no rows for proxy '{}'", label));
  ProxyColumn c;
  for (const auto& [id, v] : by_id) {
    c.ids.push_back(id);
    c.scores.push_back(v.first);
    c.mean_flops += v.second;
  }
  c.mean_flops /= static_cast<double>(by_id.size());
  return c;
}

std::vector<std::string> proxy_labels(const std::vector<ScoreRow>& rows) {
  std::vector<ScoreRow> sorted = rows;
  std::sort(sorted.begin(), sorted.end(), [](const ScoreRow& a, const ScoreRow& b) {
    return std::tie(a.proxy_name, a.n_train, a.n_val, a.n_ensemble, a.epochs) <
           std::tie(b.proxy_name, b.n_train, b.n_val, b.n_ensemble, b.epochs);
  });
  std::vector<std::string> out;
  for (const auto& r : sorted) {
    const auto l = r.proxy_label();
    if (out.empty() || out.back() != l) out.push_back(l);
  }
  return out;
}

ScorePairSet align(const ProxyColumn& proxy, const ProxyColumn& truth) {
  std::map<std::string, double> t;
  for (std::size_t i = 0; i < truth.ids.size(); ++i) t[truth.ids[i]] = truth.scores[i];
  ScorePairSet s;
  for (std::size_t i = 0; i < proxy.ids.size(); ++i) {
    auto it = t.find(proxy.ids[i]);
    if (it == t.end()) continue;
    s.ids.push_back(proxy.ids[i]);
    s.proxy.push_back(proxy.scores[i]);
    s.truth.push_back(it->second);
  }
  return s;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<double> pqetp_thresholds(std::vector<double> truth, double step) {
  std::vector<double> out;
  for (double q : {50.0, 80.0, 95.0, 99.0}) out.push_back(percentile(truth, q));
  const double lo = out.front(), hi = out.back();
  if (step > 0.0 && hi > lo) {
    const auto n = static_cast<std::size_t>(std::min(1000.0, std::floor((hi - lo) / step)));
    for (std::size_t i = 0; i <= n; ++i) out.push_back(lo + static_cast<double>(i) * step);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void write_metric_tables(const std::vector<ScoreRow>& rows, const std::string& truth_label, std::size_t k,
                         double pqetp_step, const std::filesystem::path& out_dir) {
  auto metrics = open_out(out_dir / "metrics.csv");
  auto curves = open_out(out_dir / "pqetp.csv");
  metrics << "proxy,mean_flops,n_archs,kendall_tau,pearson,discovered_performance\n";
  curves << "proxy,p_T,auroc\n";
  const ProxyColumn truth = select_proxy(rows, truth_label);
  const std::vector<double> thresholds = pqetp_thresholds(truth.scores, pqetp_step);
  auto fmt_or_nan = [](auto&& fn) -> std::string {
    try {
      return fmt::format("{:.17g}", fn());
    } catch (const Error&) {
      return "nan";
    }
  };
  for (const auto& label : proxy_labels(rows)) {
    if (label == truth_label) continue;
    const ProxyColumn proxy = select_proxy(rows, label);
    const ScorePairSet pairs = align(proxy, truth);
    metrics << fmt::format("{},{:.17g},{},{},{},{}\n", label, proxy.mean_flops, pairs.size(),
                           fmt_or_nan([&] { return kendall_tau(pairs); }), fmt_or_nan([&] { return pearson(pairs); }),
                           fmt_or_nan([&] { return discovered_performance(pairs, std::min(k, pairs.size())); }));
    for (double t : thresholds) {
      try {
        curves << fmt::format("{},{:.17g},{:.17g}\n", label, t, pqetp(pairs, t));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::SingleClass) throw;
      }
    }
  }
}

// ---------------------------------------------------------------------------------------------- orchestration

std::vector<ArchEntry> resolve_architectures(const ExperimentConfig& cfg) {
  std::vector<ArchEntry> out;
  if (!cfg.search.arch_file.empty()) {
    std::ifstream in(cfg.search.arch_file);
    if (!in) throw Error(ErrorCode::IoError, fmt::format("cannot open {}", cfg.search.arch_file.string()));
    std::stringstream buf;
    buf << in.rdbuf();
    const auto cells = parse_arch_batch(buf.str());
    for (std::size_t i = 0; i < cells.size(); ++i) out.push_back({fmt::format("a{:05d}", i), cells[i]});
    return out;
  }
  for (std::size_t i = 0; i < cfg.search.num_random; ++i)
    out.push_back({fmt::format("a{:05d}", i), sample_random_arch(derive_seed(cfg.seed, {0xa5c, i}), cfg.search.limits)});
  return out;
}

namespace {

class CheckpointStore {
 public:
  explicit CheckpointStore(std::filesystem::path path) : path_(std::move(path)) {
    if (std::filesystem::exists(path_)) {
      for (auto& r : read_scores(path_)) rows_[r.key()] = r;
    }
    out_ = open_out(path_, std::ios::app);
  }

  std::optional<ScoreRow> find(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = rows_.find(key);
    if (it == rows_.end()) return std::nullopt;
    return it->second;
  }

  void put(const ScoreRow& row) {
    std::lock_guard lock(mu_);
    rows_[row.key()] = row;
    out_ << format_score_row(row) << '\n';
    out_.flush();
  }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::string, ScoreRow> rows_;
  std::ofstream out_;
};

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  const std::vector<ArchEntry> archs = resolve_architectures(cfg);
  {
    auto out = open_out(cfg.out_dir / "archs.ndjson");
    for (const auto& a : archs) out << fmt::format("{{\"id\":\"{}\",\"arch\":{}}}\n", a.id, to_json(a.cell));
  }
  const std::vector<NngpTriple> triples = opts.nngp ? cfg.resolved_triples() : std::vector<NngpTriple>{};
  const std::vector<int> budgets = opts.train ? cfg.epoch_budgets : std::vector<int>{};

  ExperimentResult result;
  result.out_dir = cfg.out_dir;
  if (archs.empty()) {
    write_scores(cfg.out_dir / "scores.csv", {});
    open_out(cfg.out_dir / "failures.csv") << "arch_id,stage,message\n";
    return result;
  }

  const DataPools pools = build_pools(cfg);
  std::vector<DatasetSplit> splits;
  for (const auto& t : triples) splits.push_back(split_from_pools(pools, cfg, t.n_train, t.n_val));

  CheckpointStore store(cfg.out_dir / "checkpoint.csv");
  std::mutex fail_mu;
  std::vector<FailureRecord> failures;
  auto fail = [&](const std::string& id, const std::string& stage, const std::string& msg) {
    std::lock_guard lock(fail_mu);
    failures.push_back({id, stage, msg});
  };

  auto process = [&](const ArchEntry& arch) {
    LayerGraph graph;
    try {
      graph = assemble_network(arch.cell, cfg.plan);
    } catch (const std::exception& e) {
      fail(arch.id, "assemble", e.what());
      return;
    }
    const std::uint64_t fa = count_inference_flops(graph);
    if (cfg.include_model_size) {
      ScoreRow row{arch.id, "params", 0, 0, 0, 0, static_cast<double>(count_params(graph)), 0.0, cfg.seed};
      if (!store.find(row.key())) store.put(row);
    }
    for (std::size_t t = 0; t < triples.size(); ++t) {
      ScoreRow row{arch.id, "nngp", triples[t].n_train, triples[t].n_val, triples[t].n_ensemble, 0, 0.0, 0.0, cfg.seed};
      if (store.find(row.key())) continue;
      try {
        InitConfig init = cfg.init;
        init.seed = cfg.seed;
        const InferenceConfig inf{cfg.reg_grid, triples[t].n_ensemble};
        row.score = nngp_validation_accuracy(graph, init, splits[t], inf).accuracy;
        NngpCostArgs args;
        args.inference_flops = fa;
        args.feature_dim = static_cast<std::uint64_t>(graph.feature_dim());
        args.n_ensemble = static_cast<std::uint64_t>(triples[t].n_ensemble);
        args.n_train = static_cast<std::uint64_t>(triples[t].n_train);
        args.n_val = static_cast<std::uint64_t>(triples[t].n_val);
        args.num_labels = static_cast<std::uint64_t>(pools.num_labels);
        args.num_regs = cfg.reg_grid.size();
        row.flops = nngp_flops(args).total;
        store.put(row);
      } catch (const std::exception& e) {
        fail(arch.id, fmt::format("nngp:{}:{}:{}", row.n_train, row.n_val, row.n_ensemble), e.what());
      }
    }
    for (int epochs : budgets) {
      ScoreRow row{arch.id, "train", 0, 0, 0, epochs, 0.0, 0.0, cfg.seed};
      if (store.find(row.key())) continue;
      try {
        InitConfig init = cfg.init;
        init.seed = cfg.seed;
        TrainConfig tc = cfg.train;
        tc.epochs = epochs;
        tc.seed = cfg.seed;
        const Parameters theta = train(graph, init, pools.train, tc);
        row.score = evaluate_accuracy(graph, theta, pools.val);
        row.flops = static_cast<double>(training_flops(fa, static_cast<std::uint64_t>(epochs), pools.train.size(),
                                                       pools.val.size()));
        store.put(row);
      } catch (const std::exception& e) {
        fail(arch.id, fmt::format("train:{}", epochs), e.what());
      }
    }
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < archs.size(); i = next++) process(archs[i]);
  };
  const int n_workers = std::min<int>(cfg.workers, static_cast<int>(archs.size()));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }

  for (const auto& arch : archs) {
    std::vector<ScoreRow> wanted;
    if (cfg.include_model_size) wanted.push_back({arch.id, "params", 0, 0, 0, 0, 0.0, 0.0, cfg.seed});
    for (const auto& t : triples) wanted.push_back({arch.id, "nngp", t.n_train, t.n_val, t.n_ensemble, 0, 0.0, 0.0, cfg.seed});
    for (int e : budgets) wanted.push_back({arch.id, "train", 0, 0, 0, e, 0.0, 0.0, cfg.seed});
    for (const auto& w : wanted)
      if (auto r = store.find(w.key())) result.scores.push_back(*r);
  }
  std::sort(result.scores.begin(), result.scores.end(), row_less);
  std::sort(failures.begin(), failures.end(), [](const FailureRecord& a, const FailureRecord& b) {
    return std::tie(a.arch_id, a.stage) < std::tie(b.arch_id, b.stage);
  });
  result.failures = std::move(failures);

  write_scores(cfg.out_dir / "scores.csv", result.scores);
  {
    auto out = open_out(cfg.out_dir / "failures.csv");
    out << "arch_id,stage,message\n";
    for (const auto& f : result.failures) {
      std::string msg = f.message;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      out << fmt::format("{},{},{}\n", f.arch_id, f.stage, msg);
    }
  }
  if (opts.metrics && !budgets.empty()) {
    const int max_budget = *std::max_element(budgets.begin(), budgets.end());
    const std::string truth_label = fmt::format("train:{}", max_budget);
    bool have_truth = false;
    for (const auto& r : result.scores) have_truth |= r.proxy_label() == truth_label;
    if (have_truth) write_metric_tables(result.scores, truth_label, cfg.discovered_k, cfg.pqetp_step, cfg.out_dir);
  }
  return result;
}

}  // namespace nngpnas
