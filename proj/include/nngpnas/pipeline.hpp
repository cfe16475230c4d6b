#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nngpnas/archspec.hpp"
#include "nngpnas/dataset.hpp"
#include "nngpnas/forward.hpp"
#include "nngpnas/metrics.hpp"
#include "nngpnas/nngp.hpp"
#include "nngpnas/trainer.hpp"

namespace nngpnas {

/// One NNGP dataset/ensemble configuration (N_D, N_val, n_ensemble).
struct NngpTriple {
  int n_train = 100;
  int n_val = 500;
  int n_ensemble = 1;
  bool operator==(const NngpTriple&) const = default;
};

enum class DataSource { Synthetic, Cifar };

struct DataConfig {
  DataSource source = DataSource::Synthetic;
  std::filesystem::path cifar_dir;
  // synthetic generator
  int num_labels = 10;
  InputShape input_shape{8, 8, 3};
  int train_per_class = 200;
  int val_per_class = 100;
  double separation = 3.0;
  // cap on the gradient-training pools (0 = use everything)
  std::size_t max_train_pool = 0;
  std::size_t max_val_pool = 0;
};

struct SearchConfig {
  std::filesystem::path arch_file;  // JSON / NDJSON; when empty, sample `num_random` cells
  std::size_t num_random = 10;
  SamplingLimits limits{};
};

struct ExperimentConfig {
  // Declared grids; every triple must be drawn from them.
  std::vector<int> train_sizes{100, 500, 2000, 8000};
  std::vector<int> val_sizes{500, 2000, 5000, 10000};
  std::vector<int> ensembles{1, 2, 4, 8, 16, 32};
  std::vector<NngpTriple> triples;  // defaults to the full product of the grids
  std::vector<int> epoch_budgets{4, 12, 36};
  std::vector<double> reg_grid = default_reg_grid();

  NetworkPlan plan{16, 3, 1, {8, 8, 3}, 10};
  InitConfig init{};
  TrainConfig train{};
  DataConfig data{};
  SearchConfig search{};

  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "nngp_nas_out";
  int workers = 1;
  std::size_t discovered_k = 10;
  double pqetp_step = 0.003;
  bool include_model_size = true;

  /// Returns the triples to run (explicit list or grid product) after checking the invariants.
  std::vector<NngpTriple> resolved_triples() const;
  void validate() const;
};

/// Flat key-value text with [section] groupings (INI). Unknown keys are rejected.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text);

/// Builds train/validation pools and the balanced NNGP subsets for the largest requested N_D / N_val.
DatasetSplit build_split(const ExperimentConfig& cfg, int n_train, int n_val);

/// One row of the score table.
struct ScoreRow {
  std::string arch_id;
  std::string proxy_name;  // "nngp", "train" or "params"
  int n_train = 0;
  int n_val = 0;
  int n_ensemble = 0;
  int epochs = 0;
  double score = 0.0;
  double flops = 0.0;
  std::uint64_t seed = 0;

  /// Identity of the configuration (everything but score and flops).
  std::string key() const;
  /// Short proxy label such as "nngp:100:500:8", "train:4" or "params".
  std::string proxy_label() const;
};

inline constexpr const char* kScoreHeader = "arch_id,proxy_name,N_D,N_val,n_ensemble,epochs,score,flops,seed";

std::string format_score_row(const ScoreRow& row);
ScoreRow parse_score_row(const std::string& line);
void write_scores(const std::filesystem::path& path, std::vector<ScoreRow> rows);
std::vector<ScoreRow> read_scores(const std::filesystem::path& path);

/// Architecture id -> score for the rows matching a proxy label.
struct ProxyColumn {
  std::vector<std::string> ids;
  std::vector<double> scores;
  double mean_flops = 0.0;
};

ProxyColumn select_proxy(const std::vector<ScoreRow>& rows, const std::string& label);
/// All distinct proxy labels present, in first-appearance order after sorting rows.
std::vector<std::string> proxy_labels(const std::vector<ScoreRow>& rows);

/// Aligns two proxy columns on common ids (sorted by id).
ScorePairSet align(const ProxyColumn& proxy, const ProxyColumn& truth);

struct FailureRecord {
  std::string arch_id;
  std::string stage;
  std::string message;
};

struct RunOptions {
  bool nngp = true;
  bool train = true;
  bool metrics = true;
};

struct ExperimentResult {
  std::vector<ScoreRow> scores;
  std::vector<FailureRecord> failures;
  std::filesystem::path out_dir;
};

/// Architectures under evaluation with their ids.
struct ArchEntry {
  std::string id;
  CellSpec cell;
};

std::vector<ArchEntry> resolve_architectures(const ExperimentConfig& cfg);

/// For every architecture: NNGP accuracy per triple and trained accuracy per epoch budget (with costs),
/// then metric tables against the longest-budget trained accuracy. Rows are checkpointed per
/// (arch, configuration) in out_dir/checkpoint.csv so interrupted runs resume.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// Metric tables: kendall tau, pearson and discovered performance per proxy vs truth, and PQETP curves.
void write_metric_tables(const std::vector<ScoreRow>& rows, const std::string& truth_label, std::size_t k,
                         double pqetp_step, const std::filesystem::path& out_dir);

/// Thresholds for PQETP curves: truth percentiles {50, 80, 95, 99} and a fixed-step scan between the
/// 50th and 99th percentiles.
std::vector<double> pqetp_thresholds(std::vector<double> truth, double step);

/// Linear-interpolated percentile (numpy default).
double percentile(std::vector<double> values, double q);

}  // namespace nngpnas
