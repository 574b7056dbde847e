#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ltsoups/config.hpp"
#include "ltsoups/data.hpp"
#include "ltsoups/error.hpp"
#include "ltsoups/eval.hpp"
#include "ltsoups/experiment.hpp"
#include "ltsoups/grid.hpp"
#include "ltsoups/io.hpp"
#include "ltsoups/merge.hpp"
#include "ltsoups/report.hpp"

namespace py = pybind11;
using namespace ltsoups;

namespace {

// Rows with absent values become None.
py::dict row_dict(const ReportRow& r) {
  py::dict d;
  d["method"] = r.method;
  d["rho"] = r.rho;
  d["eta"] = r.eta;
  d["seed"] = r.seed;
  for (std::size_t i = 0; i < kNumMetrics; ++i) {
    const std::string name(kMetricNames[i]);
    d[name.c_str()] = r.metrics[i] ? py::cast(*r.metrics[i]) : py::none();
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Long-tailed benchmark generation, weight merging and calibration metrics.";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  m.def("exp_decay_counts", [](int k, std::int64_t n_max, double rho) { return exp_decay_counts(k, n_max, rho).values(); },
        py::arg("num_classes"), py::arg("n_max"), py::arg("rho"));
  m.def("dual_axis_counts",
        [](int k, std::int64_t n_max, double rho, double eta, std::int64_t tau) {
          return dual_axis_counts({.num_classes = k, .n_max = n_max, .rho = rho, .eta = eta, .tau = tau}).values();
        },
        py::arg("num_classes"), py::arg("n_max"), py::arg("rho"), py::arg("eta"), py::arg("tau") = 100);
  m.def("imbalance_ratio", [](const std::vector<std::int64_t>& c) { return imbalance_ratio(c); });
  m.def("head_tail_ratio", [](const std::vector<std::int64_t>& c, std::int64_t tau) { return head_tail_ratio(c, tau); },
        py::arg("counts"), py::arg("tau") = 100);
  m.def("subsample_counts", [](const std::vector<std::int64_t>& c, double r) { return subsample_counts(c, r); });
  m.def("schedule", [](double rho, int levels) { return make_schedule(rho, levels, 1).ratios; }, py::arg("rho"),
        py::arg("levels"));
  m.def("effective_coefficients", &effective_coefficients, py::arg("levels"), py::arg("lam"));

  m.def("balanced_accuracy",
        [](const std::vector<int>& preds, const std::vector<int>& labels, int k) {
          return balanced_accuracy(preds, labels, k);
        });
  m.def("softmax", &softmax, py::arg("logits"), py::arg("temperature") = 1.0);
  m.def("fit_temperature",
        [](const Matrix& logits, const std::vector<int>& labels) { return fit_temperature(logits, labels).temperature; });
  m.def("ece", [](const Matrix& p, const std::vector<int>& y, int bins) { return ece(p, y, bins); }, py::arg("probs"),
        py::arg("labels"), py::arg("bins") = 15);
  m.def("brier", [](const Matrix& p, const std::vector<int>& y) { return brier(p, y); });
  m.def("nll", [](const Matrix& p, const std::vector<int>& y) { return nll(p, y).value; });

  m.def("load_dataset",
        [](const std::filesystem::path& path) {
          const Dataset d = load_ltds(path);
          return py::make_tuple(d.features(), d.labels(), d.num_classes());
        },
        "Returns (features, labels, num_classes) from an LTDS file.");
  m.def("save_dataset",
        [](const std::filesystem::path& path, const Matrix& x, const std::vector<int>& y, int k) {
          save_ltds(path, Dataset(x, y, k));
        },
        py::arg("path"), py::arg("features"), py::arg("labels"), py::arg("num_classes"));
  m.def("load_checkpoint",
        [](const std::filesystem::path& path) {
          const Checkpoint c = load_ltwt(path);
          py::dict d;
          d["flat"] = c.weights.flat();
          d["num_classes"] = c.weights.num_classes();
          d["dim"] = c.weights.dim();
          d["hidden"] = c.weights.backbone_config().hidden;
          d["logit_scale"] = c.weights.logit_scale();
          d["seed"] = c.meta.seed;
          d["subset_rho"] = c.meta.subset_rho;
          d["loss"] = loss_name(c.meta.loss);
          return d;
        });

  m.def("parse_config", [](const std::string& text) { return format_config(parse_config_text(text)); },
        "Parses `section.key = value` text and returns the fully resolved config in the same format.");
  m.def("run_grid",
        [](const std::string& config_text, const std::filesystem::path& out) {
          Config c = parse_config_text(config_text);
          validate_config(c);
          GridResult r;
          {
            py::gil_scoped_release release;
            r = run_grid(c, out);
          }
          return py::make_tuple(r.written, r.skipped, r.failures.size());
        },
        py::arg("config_text"), py::arg("out"), "Returns (written, skipped, failed).");
  m.def("read_report", [](const std::filesystem::path& path) {
    py::list rows;
    for (const auto& r : load_csv(path)) rows.append(row_dict(r));
    return rows;
  });
  m.attr("REPORT_HEADER") = std::string(kReportHeader);
}
