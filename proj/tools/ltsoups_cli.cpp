#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ltsoups/config.hpp"
#include "ltsoups/error.hpp"
#include "ltsoups/experiment.hpp"
#include "ltsoups/grid.hpp"
#include "ltsoups/io.hpp"
#include "ltsoups/report.hpp"
#include "ltsoups/rng.hpp"

namespace fs = std::filesystem;
using namespace ltsoups;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<double> lambda;
  bool skip_failed = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "config file (section.key = value)");
  cmd->add_option("--set", c.sets, "override one key: section.key=value");
  cmd->add_option("--seed", c.seed, "root seed (overrides LTSOUPS_SEED)");
  cmd->add_option("--workers", c.workers, "parallel jobs");
  cmd->add_option("--lambda", c.lambda, "recursive merge coefficient");
  cmd->add_flag("--skip-failed", c.skip_failed, "average a level's surviving jobs when some diverge");
}

// File, then LTSOUPS_SEED, then flags. Without -c, a benchmark directory's saved config is used.
Config resolve(const Common& c, const fs::path& data = {}) {
  Config cfg;
  if (!c.config_path.empty())
    cfg = parse_config(c.config_path);
  else if (!data.empty() && fs::exists(data / "config.txt"))
    cfg = parse_config(data / "config.txt");
  apply_seed_env(cfg);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) fail(Errc::parse_error, "--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.experiment.seed = *c.seed;
  if (c.workers) cfg.experiment.workers = *c.workers;
  if (c.lambda) cfg.experiment.merge.lambda = *c.lambda;
  if (c.skip_failed) cfg.experiment.skip_failed = true;
  validate_config(cfg);
  return cfg;
}

ExperimentConfig experiment(const Config& cfg) {
  ExperimentConfig x = cfg.experiment;
  x.train.seed = derive_seed(x.seed, "train");
  return x;
}

// A generated benchmark directory.
struct DataDir {
  fs::path root;
  fs::path train() const { return root / "train.ltds"; }
  fs::path val() const { return root / "val.ltds"; }
  fs::path test() const { return root / "test.ltds"; }
  fs::path theta0() const { return root / "theta0.ltwt"; }
};

Benchmark load_benchmark(const DataDir& dir) {
  Benchmark b;
  b.data.train = load_ltds(dir.train());
  b.data.val = load_ltds(dir.val());
  b.data.test = load_ltds(dir.test());
  b.theta0 = load_ltwt(dir.theta0()).weights;
  try {
    b.train_counts = ClassCounts(b.data.train.histogram());
  } catch (const Error& e) {
    fail(Errc::validation_error, std::string("training classes must be ordered by non-increasing count: ") + e.detail());
  }
  return b;
}

void save_model(const fs::path& path, const ModelWeights& w, std::uint64_t seed, double subset_rho, LossKind loss) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_ltwt(path, {w, {seed, subset_rho, loss}});
}

std::string fmt_opt(const std::optional<double>& x) {
  if (!x) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *x);
  return buf;
}

int cmd_generate(const Common& c, const fs::path& out) {
  const Config cfg = resolve(c);
  const Benchmark b = make_benchmark(cfg.experiment.benchmark, cfg.experiment.seed);
  const DataDir dir{out};
  fs::create_directories(out);
  save_ltds(dir.train(), b.data.train);
  save_ltds(dir.val(), b.data.val);
  save_ltds(dir.test(), b.data.test);
  save_model(dir.theta0(), b.theta0, cfg.experiment.seed, 0.0, LossKind::la);
  std::ofstream(out / "config.txt") << format_config(cfg);
  const auto& counts = b.train_counts;
  std::cout << "classes " << counts.num_classes() << "  train " << counts.total() << "  val " << b.data.val.size()
            << "  test " << b.data.test.size() << "  rho " << imbalance_ratio(counts) << "  eta "
            << head_tail_ratio(counts, cfg.experiment.benchmark.longtail.tau) << "\n";
  return 0;
}

int cmd_train(const Common& c, const fs::path& data, const fs::path& out, std::optional<double> rho, int bootstrap,
              bool resample) {
  const Config cfg = resolve(c, data);
  const ExperimentConfig x = experiment(cfg);
  const Benchmark b = load_benchmark({data});
  TrainJob job;
  if (rho) {
    job = make_subset_job(soups_job_id(*rho, bootstrap), *rho, bootstrap, resample, x.train);
  } else {
    job.id = "full";
    job.config = x.train;
  }
  const ModelWeights w = run_job(b.theta0, job, b.data.train, &b.data.val);
  const double trained_rho = rho ? *rho : imbalance_ratio(b.train_counts);
  save_model(out, w, job_train_config(job).seed, trained_rho, job.config.loss);
  std::cout << job.id << " -> " << out.string() << "  weight_change " << weight_distance(b.theta0, w) << "\n";
  return 0;
}

int cmd_merge(const Common& c, const std::vector<std::string>& inputs, const fs::path& out, bool uniform,
              const std::string& theta0_path) {
  const Config cfg = resolve(c);
  std::vector<Checkpoint> ckpts;
  for (const auto& p : inputs) ckpts.push_back(load_ltwt(p));
  std::stable_sort(ckpts.begin(), ckpts.end(),
                   [](const Checkpoint& a, const Checkpoint& b) { return a.meta.subset_rho < b.meta.subset_rho; });
  std::vector<ModelWeights> models;
  for (const auto& ck : ckpts) models.push_back(ck.weights);

  ModelWeights merged;
  if (uniform) {
    merged = uniform_average(models);
  } else {
    const auto& mc = cfg.experiment.merge;
    if (mc.include_pretrained_as_theta0 && theta0_path.empty())
      fail(Errc::validation_error, "recursive merge needs --theta0 (or merge.include_pretrained = false)");
    const ModelWeights theta0 = theta0_path.empty() ? ModelWeights{} : load_ltwt(theta0_path).weights;
    merged = recursive_merge(models, theta0, mc);
  }
  save_model(out, merged, cfg.experiment.seed, 0.0, ckpts.front().meta.loss);
  std::cout << "merged " << models.size() << " checkpoints -> " << out.string() << "\n";
  return 0;
}

int cmd_soup(const Common& c, const fs::path& data, const fs::path& out, const std::string& artifacts) {
  const Config cfg = resolve(c, data);
  const ExperimentConfig x = experiment(cfg);
  const Benchmark b = load_benchmark({data});
  const double rho = imbalance_ratio(b.train_counts);
  const SubsetSchedule schedule = make_schedule(rho, levels_for(x, rho), x.bootstraps);
  const PipelineOptions opts{.workers = x.workers, .skip_failed = x.skip_failed, .validation = &b.data.val};
  const SoupsResult r = lt_soups(b.theta0, b.data.train, schedule, x.merge, x.train, opts);
  save_model(out, r.model, x.train.seed, 0.0, x.train.loss);

  if (!artifacts.empty()) {
    const fs::path dir(artifacts);
    fs::create_directories(dir);
    std::ofstream recipe(dir / "recipe.txt");
    recipe << r.artifacts.merge_recipe << "\n";
    for (std::size_t i = 0; i < r.artifacts.jobs.size(); ++i) {
      const auto& j = r.artifacts.jobs[i];
      const std::string name = "job" + std::to_string(i) + ".ltwt";
      recipe << name << " " << j.job.id << " seed " << job_train_config(j.job).seed;
      if (j.weights)
        save_model(dir / name, *j.weights, job_train_config(j.job).seed, *j.job.subset_rho, j.job.config.loss);
      else
        recipe << " FAILED " << j.error;
      recipe << "\n";
    }
    save_model(dir / "merged.ltwt", r.artifacts.merged, x.train.seed, 0.0, x.train.loss);
  }
  std::cout << "lt_soups levels " << schedule.ratios.size() << " x " << schedule.bootstraps << " -> " << out.string()
            << "  weight_change " << weight_distance(b.theta0, r.model) << "\n";
  return 0;
}

int cmd_baseline(const Common& c, const std::string& name, const fs::path& data, const fs::path& out) {
  const Config cfg = resolve(c, data);
  const ExperimentConfig x = experiment(cfg);
  if (!is_known_method(name)) fail(Errc::validation_error, "unknown method '" + name + "'");
  const Benchmark b = load_benchmark({data});
  const ModelWeights w = run_method(name, b, x);
  save_model(out, w, x.train.seed, imbalance_ratio(b.train_counts), x.train.loss);
  std::cout << name << " -> " << out.string() << "  weight_change " << weight_distance(b.theta0, w) << "\n";
  return 0;
}

int cmd_eval(const Common& c, const fs::path& data, const fs::path& model, const std::string& out, int bins) {
  const Config cfg = resolve(c, data);
  const Benchmark b = load_benchmark({data});
  const ModelWeights w = load_ltwt(model).weights;
  const MetricsReport m = evaluate_on(w, b, cfg.experiment);

  const Matrix probs = softmax(forward(w, b.data.test.features()), m.temperature);
  const auto labels = b.data.test.labels();
  nlohmann::json j;
  const ReportRow row = make_row("eval", imbalance_ratio(b.train_counts), head_tail_ratio(b.train_counts,
                                 cfg.experiment.benchmark.longtail.tau), 0, m, 0.0);
  for (std::size_t i = 0; i + 1 < kNumMetrics; ++i)
    j[std::string(kMetricNames[i])] = row.metrics[i] ? nlohmann::json(*row.metrics[i]) : nlohmann::json(nullptr);
  j["nll_clamped"] = m.nll_clamped;
  auto opt = [](const std::optional<double>& x) { return x ? nlohmann::json(*x) : nlohmann::json(nullptr); };
  j["brier_head"] = opt(m.brier_head);
  j["brier_tail"] = opt(m.brier_tail);
  j["nll_head"] = opt(m.nll_head);
  j["nll_tail"] = opt(m.nll_tail);
  j["per_class_accuracy"] = per_class_accuracy(predictions(forward(w, b.data.test.features())), labels, w.num_classes());
  nlohmann::json rel = nlohmann::json::array();
  for (const auto& bin : reliability_bins(probs, labels, bins))
    rel.push_back({{"lo", bin.lo}, {"hi", bin.hi}, {"count", bin.count}, {"confidence", bin.confidence},
                   {"accuracy", bin.accuracy}});
  j["reliability"] = rel;

  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::ofstream f(out);
    if (!f) fail(Errc::io_error, "cannot write " + out);
    f << j.dump(2) << "\n";
    std::cout << "bal_acc " << m.bal_acc << "  head " << fmt_opt(m.groups.head) << "  tail " << fmt_opt(m.groups.tail)
              << "  ece " << m.ece << "\n";
  }
  return 0;
}

int cmd_grid(const Common& c, const fs::path& out) {
  const Config cfg = resolve(c);
  const GridResult r = run_grid(cfg, out, &std::cerr);
  std::cout << "rows written " << r.written << "  skipped " << r.skipped << "  failed " << r.failures.size() << "\n";
  if (!r.failures.empty()) return exit_code_for(r.failures.front().code);
  return 0;
}

int cmd_report(const fs::path& in, const std::string& format, const std::string& out) {
  const auto rows = load_csv(in);
  const ReportFormat f = parse_report_format(format);
  if (!out.empty()) emit_report(rows, f, out);
  std::printf("%-16s %8s %4s %8s %8s %8s %8s\n", "method", "rho", "n", "bal_acc", "head", "tail", "ece");
  for (const auto& a : eta_marginals(rows))
    std::printf("%-16s %8g %4zu %8s %8s %8s %8s\n", a.method.c_str(), a.rho, a.rows, fmt_opt(a.means[0]).c_str(),
                fmt_opt(a.means[4]).c_str(), fmt_opt(a.means[5]).c_str(), fmt_opt(a.means[6]).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ltsoups: long-tailed fine-tuning, weight averaging and evaluation"};
  app.require_subcommand(1);
  Common common;
  int rc = 0;

  std::string out, data, model, artifacts, theta0, format = "json", in;
  std::optional<double> rho;
  int bootstrap = 0, bins = 15;
  bool resample = false, uniform = false;
  std::vector<std::string> inputs;
  std::string method;

  auto* gen = app.add_subcommand("generate", "write a synthetic benchmark directory");
  add_common(gen, common);
  gen->add_option("-o,--out", out, "output directory")->required();
  gen->callback([&] { rc = cmd_generate(common, out); });

  auto* train = app.add_subcommand("train", "fine-tune one job");
  add_common(train, common);
  train->add_option("-d,--data", data, "benchmark directory")->required();
  train->add_option("-o,--out", out, "output checkpoint")->required();
  train->add_option("--rho", rho, "train on the cap-based subset at this ratio");
  train->add_option("--bootstrap", bootstrap, "bootstrap index within the level");
  train->add_flag("--resample", resample, "bootstrap-resample the subset");
  train->callback([&] { rc = cmd_train(common, data, out, rho, bootstrap, resample); });

  auto* merge = app.add_subcommand("merge", "merge checkpoints sorted by their subset ratio");
  add_common(merge, common);
  merge->add_option("inputs", inputs, "LTWT checkpoints")->required();
  merge->add_option("-o,--out", out, "output checkpoint")->required();
  merge->add_flag("--uniform", uniform, "uniform average instead of the recursive merge");
  merge->add_option("--theta0", theta0, "pretrained checkpoint that seeds the recursion");
  merge->callback([&] { rc = cmd_merge(common, inputs, out, uniform, theta0); });

  auto* soup = app.add_subcommand("soup", "run the full two-stage pipeline");
  add_common(soup, common);
  soup->add_option("-d,--data", data, "benchmark directory")->required();
  soup->add_option("-o,--out", out, "output checkpoint")->required();
  soup->add_option("--artifacts", artifacts, "directory for per-job and merged checkpoints");
  soup->callback([&] { rc = cmd_soup(common, data, out, artifacts); });

  auto* base = app.add_subcommand("baseline", "train a baseline method");
  add_common(base, common);
  base->add_option("name", method, "full_ft, linear_probe, model_soups, crt, lora, soups_rho_<r>")->required();
  base->add_option("-d,--data", data, "benchmark directory")->required();
  base->add_option("-o,--out", out, "output checkpoint")->required();
  base->callback([&] { rc = cmd_baseline(common, method, data, out); });

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a benchmark directory");
  add_common(ev, common);
  ev->add_option("-d,--data", data, "benchmark directory")->required();
  ev->add_option("-m,--model", model, "checkpoint")->required();
  ev->add_option("-o,--out", out, "JSON output (stdout when omitted)");
  ev->add_option("--bins", bins, "reliability bins")->check(CLI::PositiveNumber);
  ev->callback([&] { rc = cmd_eval(common, data, model, out, bins); });

  auto* grid = app.add_subcommand("grid", "run the (rho, eta) grid, appending to a CSV report");
  add_common(grid, common);
  grid->add_option("-o,--out", out, "CSV report")->required();
  grid->callback([&] { rc = cmd_grid(common, out); });

  auto* rep = app.add_subcommand("report", "aggregate a CSV report");
  rep->add_option("-i,--in", in, "CSV report")->required();
  rep->add_option("-f,--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  rep->add_option("-o,--out", out, "output file");
  rep->callback([&] { rc = cmd_report(in, format, out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(Errc::io_error);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
