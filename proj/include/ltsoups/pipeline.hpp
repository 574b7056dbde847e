#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ltsoups/data.hpp"
#include "ltsoups/merge.hpp"
#include "ltsoups/nn.hpp"

namespace ltsoups {

struct Trainable {
  bool backbone = true;
  bool prototypes = true;
  bool temperature = true;
};

struct FinetuneOptions {
  // Per-epoch checkpoint selection by balanced accuracy; the final EMA
  // weights are returned when null.
  const Dataset* validation = nullptr;
  Trainable trainable{};
};

ModelWeights finetune(const ModelWeights& theta0, const Dataset& train, const TrainConfig& cfg,
                      const FinetuneOptions& options = {});

// Backbone and log-temperature frozen; only the prototypes move.
ModelWeights classifier_retrain(const ModelWeights& theta, const Dataset& train, const TrainConfig& cfg,
                                const Dataset* validation = nullptr);

struct LoraConfig {
  int rank = 1;
  double alpha = 1.0;
  bool train_prototypes = true;

  void validate(const BackboneConfig& backbone) const;
};

/// Where a stage-1 model came from; enough to rebuild the job exactly.
struct TrainJob {
  std::string id;
  // Imbalance ratio of the training subset; empty for the full data.
  std::optional<double> subset_rho;
  int bootstrap = 0;
  bool resampled = false;
  TrainConfig config;
};

struct JobResult {
  TrainJob job;
  std::optional<ModelWeights> weights;
  std::string error;
};

struct RunArtifacts {
  std::vector<JobResult> jobs;
  std::vector<double> level_ratios;
  std::vector<ModelWeights> level_averages;
  ModelWeights merged;
  ModelWeights final_model;
  std::string merge_recipe;
};

struct PipelineOptions {
  int workers = 1;
  bool skip_failed = false;
  const Dataset* validation = nullptr;
};

struct SoupsResult {
  ModelWeights model;
  RunArtifacts artifacts;
};

// Job seeds are a hash of the root seed and the job id.
std::string soups_job_id(double rho, int bootstrap);
std::uint64_t job_seed(std::uint64_t root, const std::string& job_id);
std::uint64_t subset_seed(std::uint64_t root, double rho);

// The concrete training set and config a job trains on.
Dataset job_dataset(const TrainJob& job, const Dataset& full);
TrainJob make_subset_job(const std::string& id, double rho, int bootstrap, bool resample, const TrainConfig& base);
// Data selection uses the root seed in job.config; training uses a per-job stream.
TrainConfig job_train_config(const TrainJob& job);
ModelWeights run_job(const ModelWeights& theta0, const TrainJob& job, const Dataset& full,
                     const Dataset* validation = nullptr);

// Runs fn(i) for i in [0, n) on at most `workers` threads; fn must only
// touch slot i of any shared output.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

SoupsResult lt_soups(const ModelWeights& theta0, const Dataset& train, const SubsetSchedule& schedule,
                     const MergeConfig& merge_cfg, const TrainConfig& cfg, const PipelineOptions& options = {});

ModelWeights baseline_full_ft(const ModelWeights& theta0, const Dataset& train, const TrainConfig& cfg,
                              const Dataset* validation = nullptr);
ModelWeights baseline_linear_probe(const ModelWeights& theta0, const Dataset& train, const TrainConfig& cfg,
                                   const Dataset* validation = nullptr);
// Seeds and lr_max in {lr, lr/3} alternate across the `count` runs.
std::vector<TrainConfig> model_soups_configs(const TrainConfig& cfg, int count);
ModelWeights baseline_model_soups(const ModelWeights& theta0, const Dataset& train,
                                  const std::vector<TrainConfig>& cfgs, const PipelineOptions& options = {});
SoupsResult baseline_soups_rho(const ModelWeights& theta0, const Dataset& train, double rho_n, int count,
                               const TrainConfig& cfg, const PipelineOptions& options = {});
ModelWeights baseline_crt(const ModelWeights& theta0, const Dataset& train, const TrainConfig& cfg,
                          const Dataset* validation = nullptr);
ModelWeights baseline_lora(const ModelWeights& theta0, const Dataset& train, const LoraConfig& lora,
                           const TrainConfig& cfg, const Dataset* validation = nullptr);

}  // namespace ltsoups
