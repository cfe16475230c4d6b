#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "nngpnas/error.hpp"
#include "nngpnas/metrics.hpp"
#include "nngpnas/pipeline.hpp"
#include "nngpnas/screening.hpp"

using namespace nngpnas;

namespace {

struct CommonFlags {
  std::string config;
  std::string data;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> workers;
};

void add_run_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("-c,--config", f.config, "INI experiment config")->check(CLI::ExistingFile);
  cmd->add_option("-d,--data", f.data, "CIFAR-10 binary directory (switches the data source to cifar)");
  cmd->add_option("-s,--seed", f.seed, "experiment seed");
  cmd->add_option("-o,--out", f.out, "output directory");
  cmd->add_option("-j,--workers", f.workers, "parallel architecture workers");
}

ExperimentConfig resolve_config(const CommonFlags& f) {
  ExperimentConfig cfg = f.config.empty() ? parse_config("") : load_config(f.config);
  if (!f.data.empty()) {
    cfg.data.source = DataSource::Cifar;
    cfg.data.cifar_dir = f.data;
    cfg.data.input_shape = {32, 32, 3};
    cfg.data.num_labels = 10;
    cfg.plan.input_shape = cfg.data.input_shape;
    cfg.plan.num_classes = 10;
  }
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (f.workers) cfg.workers = *f.workers;
  cfg.validate();
  return cfg;
}

int run(const CommonFlags& f, const RunOptions& opts) {
  const ExperimentConfig cfg = resolve_config(f);
  const ExperimentResult r = run_experiment(cfg, opts);
  std::cout << fmt::format("{} score rows written to {}\n", r.scores.size(), (r.out_dir / "scores.csv").string());
  for (const auto& fail : r.failures)
    std::cerr << fmt::format("failed {} [{}]: {}\n", fail.arch_id, fail.stage, fail.message);
  return r.failures.empty() ? 0 : 1;
}

struct TableFlags {
  std::string scores;
  std::string proxy;
  std::string truth;
};

void add_table_flags(CLI::App* cmd, TableFlags& f) {
  cmd->add_option("--scores", f.scores, "score CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--proxy", f.proxy, "proxy label, e.g. nngp:100:500:8 or train:4")->required();
  cmd->add_option("--truth", f.truth, "ground-truth label, e.g. train:36")->required();
}

ScorePairSet load_pairs(const TableFlags& f) {
  const auto rows = read_scores(f.scores);
  return align(select_proxy(rows, f.proxy), select_proxy(rows, f.truth));
}

std::string try_metric(auto&& fn) {
  try {
    return fmt::format("{:.6f}", fn());
  } catch (const Error& e) {
    return fmt::format("n/a ({})", to_string(e.code()));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural-network Gaussian process scoring for architecture search"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  auto* eval_nngp = app.add_subcommand("eval-nngp", "NNGP validation accuracy for every architecture and triple");
  auto* eval_train = app.add_subcommand("eval-train", "shortened-training accuracy for every epoch budget");
  auto* report = app.add_subcommand("report", "full sweep: NNGP, training and metric tables");
  for (auto* cmd : {eval_nngp, eval_train, report}) add_run_flags(cmd, run_flags);

  TableFlags rank_flags;
  std::size_t rank_k = 10;
  auto* rank = app.add_subcommand("rank", "kendall tau, pearson and discovered performance of a proxy");
  add_table_flags(rank, rank_flags);
  rank->add_option("-k", rank_k, "top-k for discovered performance");

  TableFlags pq_flags;
  std::vector<double> thresholds;
  double pq_step = 0.003;
  auto* pq = app.add_subcommand("pqetp", "AUROC of a proxy for 'truth exceeds p_T'");
  add_table_flags(pq, pq_flags);
  pq->add_option("--threshold", thresholds, "p_T values (default: truth percentiles plus a scan)");
  pq->add_option("--step", pq_step, "scan step for the default thresholds");

  std::string screen_scores, screen_proxy, screen_out;
  double keep = 0.3;
  auto* screen = app.add_subcommand("screen", "keep the top fraction of architectures by a proxy");
  screen->add_option("--scores", screen_scores, "score CSV")->required()->check(CLI::ExistingFile);
  screen->add_option("--proxy", screen_proxy, "screening proxy label")->required();
  screen->add_option("-p,--keep", keep, "fraction kept, in (0, 1]");
  screen->add_option("-o,--out", screen_out, "decisions CSV (id,rank,kept); stdout when omitted");

  std::string hy_scores, hy_short, hy_nngp, hy_target, hy_out;
  auto* hybrid = app.add_subcommand("hybrid", "fit target ~ short-train + NNGP + bias and score every architecture");
  hybrid->add_option("--scores", hy_scores, "score CSV")->required()->check(CLI::ExistingFile);
  hybrid->add_option("--short", hy_short, "short-training label, e.g. train:4")->required();
  hybrid->add_option("--nngp", hy_nngp, "NNGP label")->required();
  hybrid->add_option("--target", hy_target, "target label, e.g. train:12")->required();
  hybrid->add_option("-o,--out", hy_out, "write hybrid score rows to this CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*eval_nngp) return run(run_flags, {true, false, false});
    if (*eval_train) return run(run_flags, {false, true, false});
    if (*report) return run(run_flags, {true, true, true});

    if (*rank) {
      const ScorePairSet p = load_pairs(rank_flags);
      std::cout << fmt::format("proxy,truth,n,kendall_tau,pearson,discovered_performance\n{},{},{},{},{},{}\n",
                               rank_flags.proxy, rank_flags.truth, p.size(), try_metric([&] { return kendall_tau(p); }),
                               try_metric([&] { return pearson(p); }),
                               try_metric([&] { return discovered_performance(p, std::min(rank_k, p.size())); }));
      return 0;
    }
    if (*pq) {
      const ScorePairSet p = load_pairs(pq_flags);
      if (thresholds.empty()) thresholds = pqetp_thresholds(p.truth, pq_step);
      std::cout << "p_T,auroc\n";
      for (double t : thresholds) std::cout << fmt::format("{:.6f},{}\n", t, try_metric([&] { return pqetp(p, t); }));
      return 0;
    }
    if (*screen) {
      const ProxyColumn c = select_proxy(read_scores(screen_scores), screen_proxy);
      SearchPool pool;
      for (std::size_t i = 0; i < c.ids.size(); ++i) pool.entries.push_back({c.ids[i], c.scores[i], {}, {}, screen_proxy});
      const ScreeningResult r = reduce_search_space(pool, keep);
      std::ofstream file;
      if (!screen_out.empty()) {
        file.open(screen_out);
        if (!file) throw Error(ErrorCode::IoError, fmt::format("cannot write {}", screen_out));
      }
      std::ostream& out = screen_out.empty() ? std::cout : file;
      out << "id,rank,kept\n";
      for (const auto& d : r.decisions) out << fmt::format("{},{},{}\n", d.id, d.rank, d.kept ? 1 : 0);
      if (!screen_out.empty()) std::cout << fmt::format("kept {} of {}\n", r.kept.size(), pool.size());
      return 0;
    }
    if (*hybrid) {
      const auto rows = read_scores(hy_scores);
      const ProxyColumn s = select_proxy(rows, hy_short), n = select_proxy(rows, hy_nngp),
                        t = select_proxy(rows, hy_target);
      const ScorePairSet sn = align(s, n);  // ids with both inputs
      const ScorePairSet st = align(s, t);
      std::map<std::string, double> target;
      for (std::size_t i = 0; i < st.size(); ++i) target[st.ids[i]] = st.truth[i];
      std::vector<double> tr, ng, y;
      for (std::size_t i = 0; i < sn.size(); ++i) {
        auto it = target.find(sn.ids[i]);
        if (it == target.end()) continue;
        tr.push_back(sn.proxy[i]);
        ng.push_back(sn.truth[i]);
        y.push_back(it->second);
      }
      const HybridModel m = fit_hybrid(tr, ng, y);
      std::cout << fmt::format("w_train {:.6g} (se {:.3g})\nw_nngp {:.6g} (se {:.3g})\nbias {:.6g} (se {:.3g})\n",
                               m.w_train, m.std_errors[0], m.w_nngp, m.std_errors[1], m.bias, m.std_errors[2]);
      if (!hy_out.empty()) {
        std::vector<ScoreRow> out;
        for (std::size_t i = 0; i < sn.size(); ++i) {
          ScoreRow row;
          row.arch_id = sn.ids[i];
          row.proxy_name = "hybrid";
          row.score = hybrid_score(m, sn.proxy[i], sn.truth[i]);
          out.push_back(row);
        }
        write_scores(hy_out, out);
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
