#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "nngpnas/archspec.hpp"
#include "nngpnas/costmodel.hpp"
#include "nngpnas/dataset.hpp"
#include "nngpnas/error.hpp"
#include "nngpnas/metrics.hpp"
#include "nngpnas/nngp.hpp"
#include "nngpnas/pipeline.hpp"
#include "nngpnas/screening.hpp"
#include "nngpnas/trainer.hpp"

namespace py = pybind11;
using namespace nngpnas;

namespace {

ScorePairSet pairs(std::vector<double> proxy, std::vector<double> truth, std::vector<std::string> ids) {
  return {std::move(proxy), std::move(truth), std::move(ids)};
}

// (N, H, W, C) or (N, D) float array -> labelled set
LabeledSet to_set(const py::array_t<double, py::array::c_style | py::array::forcecast>& x, std::vector<int> labels) {
  TensorShape shape;
  if (x.ndim() == 2) {
    shape = {1, 1, static_cast<int>(x.shape(1))};
  } else if (x.ndim() == 4) {
    shape = {static_cast<int>(x.shape(1)), static_cast<int>(x.shape(2)), static_cast<int>(x.shape(3))};
  } else {
    throw Error(ErrorCode::ShapeMismatch, "inputs must be (N, D) or (N, H, W, C)");
  }
  if (static_cast<std::size_t>(x.shape(0)) != labels.size())
    throw Error(ErrorCode::ShapeMismatch, "inputs and labels differ in length");
  LabeledSet s;
  s.inputs = Tensor(static_cast<int>(x.shape(0)), shape);
  std::copy(x.data(), x.data() + x.size(), s.inputs.data.begin());
  s.labels = std::move(labels);
  return s;
}

py::array_t<double> to_array(const Tensor& t) {
  py::array_t<double> out({t.n, t.shape.height, t.shape.width, t.shape.channels});
  std::copy(t.data.begin(), t.data.end(), out.mutable_data());
  return out;
}

py::dict row_dict(const ScoreRow& r) {
  py::dict d;
  d["arch_id"] = r.arch_id;
  d["proxy_name"] = r.proxy_name;
  d["N_D"] = r.n_train;
  d["N_val"] = r.n_val;
  d["n_ensemble"] = r.n_ensemble;
  d["epochs"] = r.epochs;
  d["score"] = r.score;
  d["flops"] = r.flops;
  d["seed"] = r.seed;
  return d;
}

}  // namespace

PYBIND11_MODULE(_nngpnas, m) {
  m.doc() = "Monte-Carlo NNGP scoring of cell-based architectures";

  static py::exception<Error> error(m, "NngpError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error;
      py::object instance = exc(e.what());
      instance.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(exc.ptr(), instance.ptr());
    }
  });

  // architectures
  py::class_<CellSpec>(m, "Cell")
      .def(py::init([](std::vector<std::vector<int>> matrix, const std::vector<std::string>& ops) {
             std::vector<Op> parsed;
             for (const auto& o : ops) parsed.push_back(op_from_label(o));
             return CellSpec(std::move(matrix), std::move(parsed));
           }),
           py::arg("matrix"), py::arg("ops"))
      .def_property_readonly("matrix", &CellSpec::matrix)
      .def_property_readonly("ops",
                             [](const CellSpec& c) {
                               std::vector<std::string> out;
                               for (Op o : c.ops()) out.emplace_back(op_label(o));
                               return out;
                             })
      .def_property_readonly("num_vertices", &CellSpec::num_vertices)
      .def_property_readonly("num_edges", &CellSpec::num_edges)
      .def("to_json", [](const CellSpec& c) { return to_json(c); })
      .def("__eq__", [](const CellSpec& a, const CellSpec& b) { return a == b; })
      .def("__repr__", [](const CellSpec& c) { return "Cell(" + to_json(c) + ")"; });

  m.def("parse_arch", [](const std::string& text) { return parse_arch(text); }, py::arg("text"));
  m.def("parse_arch_batch", [](const std::string& text) { return parse_arch_batch(text); }, py::arg("text"));
  m.def("prune_cell", &prune_cell, py::arg("cell"));
  m.def(
      "sample_random_arch",
      [](std::uint64_t seed, std::size_t max_vertices, std::size_t max_edges) {
        return sample_random_arch(seed, {max_vertices, max_edges, 100000});
      },
      py::arg("seed"), py::arg("max_vertices") = 7, py::arg("max_edges") = 9);

  py::class_<NetworkPlan>(m, "NetworkPlan")
      .def(py::init([](int stem, int blocks, int cells, std::tuple<int, int, int> shape, int classes) {
             return NetworkPlan{stem, blocks, cells, {std::get<0>(shape), std::get<1>(shape), std::get<2>(shape)},
                                classes};
           }),
           py::arg("stem_channels") = 128, py::arg("num_blocks") = 3, py::arg("cells_per_block") = 3,
           py::arg("input_shape") = std::make_tuple(32, 32, 3), py::arg("num_classes") = 10)
      .def_readwrite("stem_channels", &NetworkPlan::stem_channels)
      .def_readwrite("num_blocks", &NetworkPlan::num_blocks)
      .def_readwrite("cells_per_block", &NetworkPlan::cells_per_block)
      .def_readwrite("num_classes", &NetworkPlan::num_classes);

  py::class_<LayerGraph>(m, "Network")
      .def(py::init(&assemble_network), py::arg("cell"), py::arg("plan") = NetworkPlan{})
      .def_property_readonly("feature_dim", &LayerGraph::feature_dim)
      .def_property_readonly("num_layers", [](const LayerGraph& g) { return g.nodes.size(); })
      .def_property_readonly("inference_flops", &count_inference_flops)
      .def_property_readonly("param_count", &count_params);

  // cost model
  m.def(
      "nngp_flops",
      [](std::uint64_t fa, std::uint64_t d, std::uint64_t n, std::uint64_t nd, std::uint64_t nv, std::uint64_t l,
         std::uint64_t r) {
        const NngpCost c = nngp_flops({fa, d, n, nd, nv, l, r});
        py::dict out;
        out["kernel_evaluation"] = c.kernel_evaluation;
        out["gp_inference"] = c.gp_inference;
        out["total"] = c.total;
        return out;
      },
      py::arg("inference_flops"), py::arg("feature_dim"), py::arg("n_ensemble"), py::arg("n_train"), py::arg("n_val"),
      py::arg("num_labels"), py::arg("num_regs"));
  m.def("training_flops", &training_flops, py::arg("inference_flops"), py::arg("epochs"), py::arg("n_train_all"),
        py::arg("n_val_all"));

  // metrics
  m.def(
      "kendall_tau", [](std::vector<double> p, std::vector<double> t) { return kendall_tau(pairs(p, t, {})); },
      py::arg("proxy"), py::arg("truth"));
  m.def(
      "pearson", [](std::vector<double> p, std::vector<double> t) { return pearson(pairs(p, t, {})); },
      py::arg("proxy"), py::arg("truth"));
  m.def(
      "pqetp",
      [](std::vector<double> p, std::vector<double> t, double threshold) {
        return pqetp(pairs(p, t, {}), threshold);
      },
      py::arg("proxy"), py::arg("truth"), py::arg("threshold"));
  m.def(
      "discovered_performance",
      [](std::vector<double> p, std::vector<double> t, std::size_t k, std::vector<std::string> ids) {
        return discovered_performance(pairs(p, t, ids), k);
      },
      py::arg("proxy"), py::arg("truth"), py::arg("k") = 10, py::arg("ids") = std::vector<std::string>{});
  m.def("mnas_reward", &mnas_reward, py::arg("accuracy"), py::arg("latency_ms"),
        py::arg("target_latency_ms") = kMnasTargetLatencyMs);

  // kernels and inference
  m.def(
      "analytic_relu_mlp_kernel",
      [](const std::vector<double>& x, const std::vector<double>& y) { return analytic_relu_mlp_kernel(x, y); },
      py::arg("x"), py::arg("y"));
  m.def("monte_carlo_relu_mlp_kernel", &monte_carlo_relu_mlp_kernel, py::arg("inputs"), py::arg("width"),
        py::arg("n_ensemble"), py::arg("seed"));
  m.def("default_reg_grid", &default_reg_grid);
  m.def(
      "gp_predict",
      [](const Eigen::MatrixXd& k_tt, const Eigen::MatrixXd& k_vt, const std::vector<int>& labels, int num_labels,
         double reg) {
        const KernelPair k{k_tt, k_vt, 1, 1};
        return gp_predict(k, make_targets(labels, num_labels), reg);
      },
      py::arg("k_tt"), py::arg("k_vt"), py::arg("train_labels"), py::arg("num_labels"), py::arg("reg"));
  m.def(
      "nngp_accuracy_from_kernels",
      [](const Eigen::MatrixXd& k_tt, const Eigen::MatrixXd& k_vt, const std::vector<int>& train_labels,
         const std::vector<int>& val_labels, int num_labels, std::optional<std::vector<double>> grid) {
        const KernelPair k{k_tt, k_vt, 1, 1};
        const auto g = grid.value_or(default_reg_grid());
        const NngpResult r = nngp_accuracy_from_kernels(k, train_labels, val_labels, num_labels, g);
        return py::make_tuple(r.accuracy, r.best_reg, r.accuracy_per_reg);
      },
      py::arg("k_tt"), py::arg("k_vt"), py::arg("train_labels"), py::arg("val_labels"), py::arg("num_labels"),
      py::arg("reg_grid") = py::none());
  m.def(
      "nngp_accuracy",
      [](const LayerGraph& g, py::array_t<double, py::array::c_style | py::array::forcecast> x_train,
         std::vector<int> y_train, py::array_t<double, py::array::c_style | py::array::forcecast> x_val,
         std::vector<int> y_val, int num_labels, int n_ensemble, std::uint64_t seed, double bn_momentum,
         int bn_warmup_batch) {
        DatasetSplit s;
        s.num_labels = num_labels;
        s.nngp_train = to_set(x_train, std::move(y_train));
        s.nngp_val = to_set(x_val, std::move(y_val));
        InitConfig init;
        init.seed = seed;
        init.bn_momentum = bn_momentum;
        init.bn_warmup_batch = bn_warmup_batch;
        InferenceConfig inf;
        inf.n_ensemble = n_ensemble;
        NngpResult r;
        {
          py::gil_scoped_release release;
          r = nngp_validation_accuracy(g, init, s, inf);
        }
        py::dict out;
        out["accuracy"] = r.accuracy;
        out["best_reg"] = r.best_reg;
        out["accuracy_per_reg"] = r.accuracy_per_reg;
        out["k_tt"] = r.kernels.k_tt;
        out["k_vt"] = r.kernels.k_vt;
        return out;
      },
      py::arg("network"), py::arg("x_train"), py::arg("y_train"), py::arg("x_val"), py::arg("y_val"),
      py::arg("num_labels"), py::arg("n_ensemble") = 8, py::arg("seed") = 0, py::arg("bn_momentum") = 0.997,
      py::arg("bn_warmup_batch") = 250);

  // data
  m.def(
      "make_synthetic",
      [](int num_labels, int dims, int per_class, double separation, std::uint64_t seed) {
        const LabeledSet s = make_synthetic(num_labels, dims, per_class, separation, seed);
        py::array_t<double> x({static_cast<py::ssize_t>(s.size()), static_cast<py::ssize_t>(dims)});
        std::copy(s.inputs.data.begin(), s.inputs.data.end(), x.mutable_data());
        return py::make_tuple(x, s.labels);
      },
      py::arg("num_labels"), py::arg("dims"), py::arg("per_class"), py::arg("separation"), py::arg("seed"));
  m.def("synthetic_two_class_bayes_rate", &synthetic_two_class_bayes_rate, py::arg("separation"));
  m.def(
      "standardize",
      [](py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> images) {
        if (images.ndim() != 4 || images.shape(3) != 3) throw Error(ErrorCode::ShapeMismatch, "expected (N, H, W, 3)");
        RawImages raw;
        raw.height = static_cast<int>(images.shape(1));
        raw.width = static_cast<int>(images.shape(2));
        raw.pixels.assign(images.data(), images.data() + images.size());
        raw.labels.assign(static_cast<std::size_t>(images.shape(0)), 0);
        return to_array(standardize(raw));
      },
      py::arg("images"));
  m.def(
      "subsample_balanced",
      [](const std::vector<int>& labels, int num_labels, std::size_t count, std::uint64_t seed) {
        return subsample_balanced(labels, num_labels, count, seed);
      },
      py::arg("labels"), py::arg("num_labels"), py::arg("count"), py::arg("seed"));

  // screening
  m.def(
      "reduce_search_space",
      [](const std::vector<std::string>& ids, const std::vector<double>& scores, double keep_fraction) {
        if (ids.size() != scores.size()) throw Error(ErrorCode::InvalidArgument, "ids and scores differ in length");
        SearchPool pool;
        for (std::size_t i = 0; i < ids.size(); ++i) pool.entries.push_back({ids[i], scores[i], {}, {}, ""});
        std::vector<std::string> kept;
        for (const auto& e : reduce_search_space(pool, keep_fraction).kept.entries) kept.push_back(e.id);
        return kept;
      },
      py::arg("ids"), py::arg("scores"), py::arg("keep_fraction"));
  py::class_<HybridModel>(m, "HybridModel")
      .def_readonly("w_train", &HybridModel::w_train)
      .def_readonly("w_nngp", &HybridModel::w_nngp)
      .def_readonly("bias", &HybridModel::bias)
      .def_readonly("std_errors", &HybridModel::std_errors)
      .def("__call__", py::overload_cast<const HybridModel&, double, double>(&hybrid_score), py::arg("short_train"),
           py::arg("nngp"))
      .def("__repr__", [](const HybridModel& h) {
        return "HybridModel(w_train=" + std::to_string(h.w_train) + ", w_nngp=" + std::to_string(h.w_nngp) +
               ", bias=" + std::to_string(h.bias) + ")";
      });
  m.def("fit_hybrid",
        py::overload_cast<const std::vector<double>&, const std::vector<double>&, const std::vector<double>&>(
            &fit_hybrid),
        py::arg("short_train"), py::arg("nngp"), py::arg("target"));

  // experiments
  m.def(
      "run_experiment",
      [](const std::filesystem::path& config, std::optional<std::filesystem::path> out_dir,
         std::optional<std::uint64_t> seed) {
        ExperimentConfig cfg = load_config(config);
        if (out_dir) cfg.out_dir = *out_dir;
        if (seed) cfg.seed = *seed;
        ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = run_experiment(cfg);
        }
        py::list rows, failures;
        for (const auto& s : r.scores) rows.append(row_dict(s));
        for (const auto& f : r.failures) failures.append(py::make_tuple(f.arch_id, f.stage, f.message));
        return py::make_tuple(rows, failures);
      },
      py::arg("config"), py::arg("out_dir") = py::none(), py::arg("seed") = py::none());
  m.def(
      "read_scores",
      [](const std::filesystem::path& path) {
        py::list rows;
        for (const auto& s : read_scores(path)) rows.append(row_dict(s));
        return rows;
      },
      py::arg("path"));
}
