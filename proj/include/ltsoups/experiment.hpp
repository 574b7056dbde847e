#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ltsoups/data.hpp"
#include "ltsoups/eval.hpp"
#include "ltsoups/merge.hpp"
#include "ltsoups/nn.hpp"
#include "ltsoups/pipeline.hpp"

namespace ltsoups {

/// One synthetic long-tailed benchmark: data splits plus the pretrained model.
struct BenchmarkConfig {
  LongTailSpec longtail{.num_classes = 20, .n_max = 500, .rho = 100.0, .eta = 0.25, .tau = 100};
  SyntheticSpec synth{};
  std::int64_t val_per_class = 20;
  std::int64_t test_per_class = 200;
  BackboneConfig backbone{};
  double anchor_noise = 0.25;
  double logit_scale = 16.0;
};

struct Benchmark {
  SplitData data;
  ClassCounts train_counts;
  ModelWeights theta0;
};

ClassCounts benchmark_counts(const LongTailSpec& spec);
Benchmark make_benchmark(const BenchmarkConfig& config, std::uint64_t seed);

struct ExperimentConfig {
  BenchmarkConfig benchmark{};
  TrainConfig train{};
  int levels = 5;
  int bootstraps = 2;
  MergeConfig merge{};
  LoraConfig lora{};
  int soups_count = 4;
  int workers = 1;
  bool skip_failed = false;
  GroupThresholds thresholds{};
  std::uint64_t seed = 0;
};

// full_ft, linear_probe, model_soups, crt, lora, lt_soups, lt_soups_stage1,
// and soups_rho_<r> for any ratio r >= 1.
bool is_known_method(const std::string& name);
const std::vector<std::string>& registered_methods();

// Number of LT-Soups levels used at imbalance ratio rho.
int levels_for(const ExperimentConfig& config, double rho);

ModelWeights run_method(const std::string& name, const Benchmark& bench, const ExperimentConfig& config);

MetricsReport evaluate_on(const ModelWeights& model, const Benchmark& bench, const ExperimentConfig& config);

}  // namespace ltsoups
