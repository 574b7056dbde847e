#include "ltsoups/experiment.hpp"

#include <cmath>
#include <cstdlib>

#include "ltsoups/error.hpp"
#include "ltsoups/rng.hpp"

namespace ltsoups {

ClassCounts benchmark_counts(const LongTailSpec& spec) {
  if (spec.eta) return dual_axis_counts(spec);
  return exp_decay_counts(spec.num_classes, spec.n_max, spec.rho);
}

Benchmark make_benchmark(const BenchmarkConfig& config, std::uint64_t seed) {
  Benchmark b;
  b.train_counts = benchmark_counts(config.longtail);
  SyntheticSpec synth = config.synth;
  synth.seed = derive_seed(seed, "synth");
  if (synth.dim != config.backbone.dim) fail(Errc::validation_error, "data.dim must equal model.dim");
  const SplitPlan plan = split_eval(b.train_counts, config.test_per_class, config.val_per_class,
                                    derive_seed(seed, "split"));
  b.data = synth_splits(synth, plan);
  b.theta0 = init_pretrained(config.backbone, b.data.means, config.anchor_noise, derive_seed(seed, "pretrained"),
                             config.logit_scale);
  return b;
}

const std::vector<std::string>& registered_methods() {
  static const std::vector<std::string> names{"full_ft", "linear_probe", "model_soups", "crt",
                                              "lora",    "lt_soups",     "lt_soups_stage1"};
  return names;
}

namespace {

std::optional<double> soups_rho_level(const std::string& name) {
  constexpr std::string_view prefix = "soups_rho_";
  if (name.rfind(prefix, 0) != 0) return std::nullopt;
  const std::string tail = name.substr(prefix.size());
  char* end = nullptr;
  const double r = std::strtod(tail.c_str(), &end);
  if (tail.empty() || *end != '\0' || !(r >= 1.0)) return std::nullopt;
  return r;
}

}  // namespace

bool is_known_method(const std::string& name) {
  for (const auto& m : registered_methods())
    if (m == name) return true;
  return soups_rho_level(name).has_value();
}

int levels_for(const ExperimentConfig& config, double rho) {
  const int max_levels = static_cast<int>(std::ceil(std::log2(rho) - 1e-12));
  return std::max(1, std::min(config.levels, max_levels));
}

ModelWeights run_method(const std::string& name, const Benchmark& bench, const ExperimentConfig& config) {
  const Dataset& train = bench.data.train;
  const Dataset* val = &bench.data.val;
  const PipelineOptions opts{.workers = config.workers, .skip_failed = config.skip_failed, .validation = val};
  const TrainConfig& cfg = config.train;

  if (name == "full_ft") return baseline_full_ft(bench.theta0, train, cfg, val);
  if (name == "linear_probe") return baseline_linear_probe(bench.theta0, train, cfg, val);
  if (name == "model_soups")
    return baseline_model_soups(bench.theta0, train, model_soups_configs(cfg, config.soups_count), opts);
  if (name == "crt") return baseline_crt(bench.theta0, train, cfg, val);
  if (name == "lora") return baseline_lora(bench.theta0, train, config.lora, cfg, val);
  if (name == "lt_soups" || name == "lt_soups_stage1") {
    const double rho = imbalance_ratio(bench.train_counts);
    const auto schedule = make_schedule(rho, levels_for(config, rho), config.bootstraps);
    auto result = lt_soups(bench.theta0, train, schedule, config.merge, cfg, opts);
    return name == "lt_soups" ? result.model : result.artifacts.merged;
  }
  if (auto r = soups_rho_level(name)) return baseline_soups_rho(bench.theta0, train, *r, config.soups_count, cfg, opts).model;
  fail(Errc::validation_error, "unknown method '" + name + "'");
}

MetricsReport evaluate_on(const ModelWeights& model, const Benchmark& bench, const ExperimentConfig& config) {
  GroupThresholds t = config.thresholds;
  t.tau = config.benchmark.longtail.tau;
  return evaluate(model, bench.data.test, bench.data.val, bench.train_counts.values(), &bench.theta0, t);
}

}  // namespace ltsoups
