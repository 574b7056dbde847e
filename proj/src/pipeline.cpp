#include "ltsoups/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <memory>
#include <thread>

#include "ltsoups/error.hpp"
#include "ltsoups/eval.hpp"
#include "ltsoups/losses.hpp"
#include "ltsoups/rng.hpp"

namespace ltsoups {

namespace {

// Maps a trainable parameter vector onto a full model.
class Parameterization {
 public:
  virtual ~Parameterization() = default;
  virtual Vector initial() const = 0;
  virtual ModelWeights materialize(const Vector& p) const = 0;
  virtual LossAndGrad loss_and_grads(const Vector& p, const Matrix& x, std::span<const int> y,
                                     const LossSpec& loss) const = 0;
};

// A subset of the model's own coordinates.
class SegmentParams final : public Parameterization {
 public:
  SegmentParams(const ModelWeights& base, const Trainable& t) : base_(base) {
    const Layout& layout = base.layout();
    if (t.backbone) ranges_.push_back(layout.backbone());
    if (t.prototypes) ranges_.push_back(layout.prototypes());
    if (t.temperature) ranges_.push_back(layout.temperature());
    for (const auto& r : ranges_) size_ += r.size;
  }

  Vector initial() const override { return gather(base_.flat()); }

  ModelWeights materialize(const Vector& p) const override {
    ModelWeights m = base_;
    std::size_t at = 0;
    for (const auto& r : ranges_) {
      m.segment(r) = p.segment(static_cast<Eigen::Index>(at), static_cast<Eigen::Index>(r.size));
      at += r.size;
    }
    return m;
  }

  LossAndGrad loss_and_grads(const Vector& p, const Matrix& x, std::span<const int> y,
                             const LossSpec& loss) const override {
    auto full = ltsoups::loss_and_grads(materialize(p), x, y, loss);
    full.grad = gather(full.grad);
    return full;
  }

 private:
  Vector gather(const Vector& flat) const {
    Vector out(static_cast<Eigen::Index>(size_));
    std::size_t at = 0;
    for (const auto& r : ranges_) {
      out.segment(static_cast<Eigen::Index>(at), static_cast<Eigen::Index>(r.size)) =
          flat.segment(static_cast<Eigen::Index>(r.offset), static_cast<Eigen::Index>(r.size));
      at += r.size;
    }
    return out;
  }

  const ModelWeights& base_;
  std::vector<Range> ranges_;
  std::size_t size_ = 0;
};

// Frozen base weights plus W_l += (alpha / r) * B_l A_l on every backbone
// linear layer; B starts at zero. Optionally the prototypes train as well.
class LoraParams final : public Parameterization {
 public:
  LoraParams(const ModelWeights& base, const LoraConfig& cfg, std::uint64_t seed)
      : base_(base), cfg_(cfg), scale_(cfg.alpha / cfg.rank) {
    const auto& bb = base.backbone_config();
    std::size_t at = cfg.train_prototypes ? base.layout().prototypes().size : 0;
    for (int l = 0; l < bb.num_linear(); ++l) {
      Slot s{l, bb.out_dim(l), bb.in_dim(l), at, 0};
      at += static_cast<std::size_t>(cfg.rank * s.in);
      s.b_offset = at;
      at += static_cast<std::size_t>(s.out * cfg.rank);
      slots_.push_back(s);
    }
    init_ = Vector::Zero(static_cast<Eigen::Index>(at));
    if (cfg.train_prototypes) init_.head(static_cast<Eigen::Index>(base.layout().prototypes().size)) =
        base.segment(base.layout().prototypes());
    Rng rng(derive_seed(seed, "lora-init"));
    std::normal_distribution<double> normal;
    for (const auto& s : slots_) {
      const double std = 1.0 / std::sqrt(static_cast<double>(s.in));
      for (int i = 0; i < cfg.rank * s.in; ++i) init_[static_cast<Eigen::Index>(s.a_offset) + i] = std * normal(rng);
    }
  }

  Vector initial() const override { return init_; }

  ModelWeights materialize(const Vector& p) const override {
    ModelWeights m = base_;
    if (cfg_.train_prototypes) m.segment(m.layout().prototypes()) = p.head(static_cast<Eigen::Index>(m.layout().prototypes().size));
    for (const auto& s : slots_) m.weight(s.layer) += scale_ * (b(p, s) * a(p, s));
    return m;
  }

  LossAndGrad loss_and_grads(const Vector& p, const Matrix& x, std::span<const int> y,
                             const LossSpec& loss) const override {
    const ModelWeights m = materialize(p);
    auto full = ltsoups::loss_and_grads(m, x, y, loss);
    Vector g = Vector::Zero(p.size());
    const Layout& layout = m.layout();
    if (cfg_.train_prototypes)
      g.head(static_cast<Eigen::Index>(layout.prototypes().size)) = full.grad.segment(
          static_cast<Eigen::Index>(layout.prototypes().offset), static_cast<Eigen::Index>(layout.prototypes().size));
    for (const auto& s : slots_) {
      const auto wr = layout.weight(s.layer);
      const Eigen::Map<const Matrix> gw(full.grad.data() + wr.offset, s.out, s.in);
      Eigen::Map<Matrix>(g.data() + s.a_offset, cfg_.rank, s.in) = scale_ * b(p, s).transpose() * gw;
      Eigen::Map<Matrix>(g.data() + s.b_offset, s.out, cfg_.rank) = scale_ * gw * a(p, s).transpose();
    }
    full.grad = std::move(g);
    return full;
  }

 private:
  struct Slot {
    int layer;
    int out;
    int in;
    std::size_t a_offset;
    std::size_t b_offset;
  };
  Eigen::Map<const Matrix> a(const Vector& p, const Slot& s) const { return {p.data() + s.a_offset, cfg_.rank, s.in}; }
  Eigen::Map<const Matrix> b(const Vector& p, const Slot& s) const { return {p.data() + s.b_offset, s.out, cfg_.rank}; }

  const ModelWeights& base_;
  LoraConfig cfg_;
  double scale_;
  std::vector<Slot> slots_;
  Vector init_;
};

double validation_score(const ModelWeights& m, const Dataset& val) {
  return balanced_accuracy(predictions(forward(m, val.features())), val.labels(), m.num_classes());
}

ModelWeights run_training(const Parameterization& params, const Dataset& train, const TrainConfig& cfg,
                          const Dataset* validation) {
  cfg.validate();
  if (cfg.epochs == 0) return params.materialize(params.initial());
  if (train.size() == 0) fail(Errc::empty_input, "empty training set");

  const auto hist = train.histogram();
  LossSpec loss{.kind = cfg.loss, .priors = std::nullopt};
  if (cfg.loss == LossKind::la) loss.priors = class_priors(hist);

  const std::size_t n = train.size();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t batches = (n + batch - 1) / batch;
  const auto total = static_cast<std::int64_t>(batches) * cfg.epochs;
  const LRSchedule schedule = LRSchedule::make(cfg.lr_max, total, cfg.lr_floor_fraction, cfg.min_warmup_steps);

  Rng rng(derive_seed(cfg.seed, "batches"));
  std::optional<std::discrete_distribution<std::size_t>> balanced;
  if (cfg.loss == LossKind::cb) {
    const auto w = cb_sampling_weights(train.labels(), hist);
    balanced.emplace(w.begin(), w.end());
  }

  Vector p = params.initial();
  AdamW opt(static_cast<std::size_t>(p.size()), cfg.adamw());
  EmaState ema{p, cfg.ema_mu};
  std::optional<ModelWeights> best;
  double best_score = -std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(n);
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (balanced) {
      for (auto& i : order) i = (*balanced)(rng);
    } else {
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      std::shuffle(order.begin(), order.end(), rng);
    }
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t len = std::min(batch, n - start);
      Matrix x(static_cast<Eigen::Index>(len), train.features().cols());
      std::vector<int> y(len);
      for (std::size_t i = 0; i < len; ++i) {
        const auto row = order[start + i];
        x.row(static_cast<Eigen::Index>(i)) = train.features().row(static_cast<Eigen::Index>(row));
        y[i] = train.labels()[row];
      }
      const auto lg = params.loss_and_grads(p, x, y, loss);
      if (!std::isfinite(lg.loss) || !lg.grad.allFinite())
        fail(Errc::diverged, "non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(step));
      ++step;
      opt.step(p, lg.grad, lr_at(schedule, step));
      if (!p.allFinite()) fail(Errc::diverged, "non-finite weights at step " + std::to_string(step));
      ema_update(ema, p);
    }
    if (validation) {
      ModelWeights candidate = params.materialize(ema.theta);
      const double score = validation_score(candidate, *validation);
      if (score > best_score) {
        best_score = score;
        best = std::move(candidate);
      }
    }
  }
  if (!best) best = params.materialize(ema.theta);
  return std::move(*best);
}

std::string format_rho(double rho) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", rho);
  return buf;
}

TrainConfig with_seed(TrainConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  return cfg;
}

// Runs every job, storing weights or the error message per slot.
void run_jobs(std::vector<JobResult>& results, const ModelWeights& theta0, const Dataset& train,
              const PipelineOptions& options) {
  parallel_for(results.size(), options.workers, [&](std::size_t i) {
    auto& r = results[i];
    try {
      const Dataset data = job_dataset(r.job, train);
      r.weights = finetune(theta0, data, r.job.config, {.validation = options.validation});
    } catch (const Error& e) {
      r.error = e.what();
    }
  });
}

[[noreturn]] void rethrow_job_failure(const JobResult& r) {
  fail(Errc::diverged, "job " + r.job.id + " failed: " + r.error);
}

// Uniform average of each level's surviving bootstraps, in level order.
std::vector<ModelWeights> average_levels(const std::vector<JobResult>& results, std::size_t levels,
                                         std::size_t per_level, bool skip_failed) {
  std::vector<ModelWeights> out;
  for (std::size_t l = 0; l < levels; ++l) {
    std::vector<ModelWeights> ok;
    for (std::size_t b = 0; b < per_level; ++b) {
      const auto& r = results[l * per_level + b];
      if (r.weights) ok.push_back(*r.weights);
      else if (!skip_failed) rethrow_job_failure(r);
    }
    if (ok.empty()) rethrow_job_failure(results[l * per_level]);
    out.push_back(bootstrap_average(ok));
  }
  return out;
}

}  // namespace

void LoraConfig::validate(const BackboneConfig& backbone) const {
  if (rank < 1) fail(Errc::rank_too_large, "LoRA rank must be >= 1");
  for (int l = 0; l < backbone.num_linear(); ++l) {
    const int limit = std::min(backbone.in_dim(l), backbone.out_dim(l));
    if (rank >= limit)
      fail(Errc::rank_too_large, "rank " + std::to_string(rank) + " must be < " + std::to_string(limit));
  }
  if (!(alpha > 0.0)) fail(Errc::validation_error, "lora.alpha must be > 0");
}

ModelWeights finetune(const ModelWeights& theta0, const Dataset& train, const TrainConfig& cfg,
                      const FinetuneOptions& options) {
  if (train.dim() != theta0.dim() && train.size() > 0) fail(Errc::shape_mismatch, "data vs model dimension");
  if (train.num_classes() != theta0.num_classes()) fail(Errc::shape_mismatch, "data vs model class count");
  const SegmentParams params(theta0, options.trainable);
  return run_training(params, train, cfg, options.validation);
}

ModelWeights classifier_retrain(const ModelWeights& theta, const Dataset& train, const TrainConfig& cfg,
                                const Dataset* validation) {
  return finetune(theta, train, cfg,
                  {.validation = validation, .trainable = {.backbone = false, .prototypes = true, .temperature = false}});
}

std::string soups_job_id(double rho, int bootstrap) {
  return "rho=" + format_rho(rho) + "/boot=" + std::to_string(bootstrap);
}

std::uint64_t job_seed(std::uint64_t root, const std::string& job_id) { return derive_seed(root, "job/" + job_id); }

std::uint64_t subset_seed(std::uint64_t root, double rho) { return derive_seed(root, "subset/rho=" + format_rho(rho)); }

TrainJob make_subset_job(const std::string& id, double rho, int bootstrap, bool resample, const TrainConfig& base) {
  TrainJob job;
  job.id = id;
  job.subset_rho = rho;
  job.bootstrap = bootstrap;
  job.resampled = resample;
  // The subset is shared by a level; the bootstrap and training streams are per job.
  job.config = with_seed(base, base.seed);
  return job;
}

Dataset job_dataset(const TrainJob& job, const Dataset& full) {
  const std::uint64_t root = job.config.seed;
  Dataset data = job.subset_rho ? subsample_to_ratio(full, *job.subset_rho, subset_seed(root, *job.subset_rho)) : full;
  if (job.resampled) data = bootstrap_resample(data, derive_seed(job_seed(root, job.id), "bootstrap"));
  return data;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const auto threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

void run_subset_jobs(std::vector<JobResult>& results, const ModelWeights& theta0, const Dataset& train,
                     const PipelineOptions& options) {
  parallel_for(results.size(), options.workers, [&](std::size_t i) {
    auto& r = results[i];
    try {
      r.weights = run_job(theta0, r.job, train, options.validation);
    } catch (const Error& e) {
      r.error = e.what();
    }
  });
}

}  // namespace

TrainConfig job_train_config(const TrainJob& job) {
  return with_seed(job.config, derive_seed(job_seed(job.config.seed, job.id), "train"));
}

ModelWeights run_job(const ModelWeights& theta0, const TrainJob& job, const Dataset& full, const Dataset* validation) {
  return finetune(theta0, job_dataset(job, full), job_train_config(job), {.validation = validation});
}

SoupsResult lt_soups(const ModelWeights& theta0, const Dataset& train, const SubsetSchedule& schedule,
                     const MergeConfig& merge_cfg, const TrainConfig& cfg, const PipelineOptions& options) {
  merge_cfg.validate();
  cfg.validate();
  if (schedule.ratios.empty()) fail(Errc::invalid_spec, "empty subset schedule");
  if (schedule.bootstraps < 1) fail(Errc::invalid_spec, "need at least one bootstrap per level");
  std::vector<double> ratios = schedule.ratios;
  std::sort(ratios.begin(), ratios.end());
  for (double r : ratios)
    if (!(r >= 1.0)) fail(Errc::invalid_spec, "subset ratios must be >= 1");

  const auto per_level = static_cast<std::size_t>(schedule.bootstraps);
  const bool resample = schedule.bootstraps > 1;
  SoupsResult out;
  auto& art = out.artifacts;
  art.level_ratios = ratios;
  for (double r : ratios) {
    for (int b = 0; b < schedule.bootstraps; ++b) {
      const std::string id = soups_job_id(r, b);
      JobResult jr;
      jr.job = make_subset_job(id, r, b, resample, cfg);
      art.jobs.push_back(std::move(jr));
    }
  }
  std::vector<JobResult>& results = art.jobs;
  run_subset_jobs(results, theta0, train, options);

  art.level_averages = average_levels(results, ratios.size(), per_level, options.skip_failed);
  art.merged = recursive_merge(art.level_averages, theta0, merge_cfg);
  art.merge_recipe = "recursive lambda=" + format_rho(merge_cfg.lambda) + " levels=" + std::to_string(ratios.size()) +
                     " bootstraps=" + std::to_string(schedule.bootstraps);
  art.final_model = classifier_retrain(art.merged, train, with_seed(cfg, derive_seed(cfg.seed, "stage2")),
                                       options.validation);
  out.model = art.final_model;
  return out;
}

ModelWeights baseline_full_ft(const ModelWeights& theta0, const Dataset& train, const TrainConfig& cfg,
                              const Dataset* validation) {
  TrainConfig c = cfg;
  c.loss = LossKind::la;
  return finetune(theta0, train, c, {.validation = validation});
}

ModelWeights baseline_linear_probe(const ModelWeights& theta0, const Dataset& train, const TrainConfig& cfg,
                                   const Dataset* validation) {
  TrainConfig c = cfg;
  c.loss = LossKind::la;
  return classifier_retrain(theta0, train, c, validation);
}

std::vector<TrainConfig> model_soups_configs(const TrainConfig& cfg, int count) {
  if (count < 1) fail(Errc::invalid_spec, "model soups need at least one ingredient");
  std::vector<TrainConfig> out;
  for (int i = 0; i < count; ++i) {
    TrainConfig c = cfg;
    c.loss = LossKind::la;
    if (i > 0) c.seed = derive_seed(cfg.seed, "soup/" + std::to_string(i));
    if (i % 2 == 1) c.lr_max = cfg.lr_max / 3.0;
    out.push_back(c);
  }
  return out;
}

ModelWeights baseline_model_soups(const ModelWeights& theta0, const Dataset& train,
                                  const std::vector<TrainConfig>& cfgs, const PipelineOptions& options) {
  if (cfgs.empty()) fail(Errc::empty_input, "model soups need at least one config");
  std::vector<JobResult> results(cfgs.size());
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    results[i].job.id = "soup/" + std::to_string(i);
    results[i].job.config = cfgs[i];
  }
  run_jobs(results, theta0, train, options);
  std::vector<ModelWeights> ok;
  for (const auto& r : results) {
    if (r.weights) ok.push_back(*r.weights);
    else if (!options.skip_failed) rethrow_job_failure(r);
  }
  if (ok.empty()) rethrow_job_failure(results.front());
  return uniform_average(ok);
}

SoupsResult baseline_soups_rho(const ModelWeights& theta0, const Dataset& train, double rho_n, int count,
                               const TrainConfig& cfg, const PipelineOptions& options) {
  cfg.validate();
  if (count < 1) fail(Errc::invalid_spec, "Soups-rho needs at least one model");
  SoupsResult out;
  auto& art = out.artifacts;
  art.level_ratios = {rho_n};
  const bool resample = count > 1;
  for (int b = 0; b < count; ++b) {
    JobResult jr;
    jr.job = make_subset_job(soups_job_id(rho_n, b), rho_n, b, resample, cfg);
    art.jobs.push_back(std::move(jr));
  }
  run_subset_jobs(art.jobs, theta0, train, options);
  art.level_averages = average_levels(art.jobs, 1, static_cast<std::size_t>(count), options.skip_failed);
  art.merged = art.level_averages.front();
  art.merge_recipe = "uniform count=" + std::to_string(count) + " rho=" + format_rho(rho_n);
  art.final_model = classifier_retrain(art.merged, train, with_seed(cfg, derive_seed(cfg.seed, "stage2")),
                                       options.validation);
  out.model = art.final_model;
  return out;
}

ModelWeights baseline_crt(const ModelWeights& theta0, const Dataset& train, const TrainConfig& cfg,
                          const Dataset* validation) {
  TrainConfig stage1 = cfg;
  stage1.loss = LossKind::ce;
  const ModelWeights rep = finetune(theta0, train, stage1, {.validation = validation});
  TrainConfig stage2 = cfg;
  stage2.loss = LossKind::cb;
  stage2.seed = derive_seed(cfg.seed, "stage2");
  return classifier_retrain(rep, train, stage2, validation);
}

ModelWeights baseline_lora(const ModelWeights& theta0, const Dataset& train, const LoraConfig& lora,
                           const TrainConfig& cfg, const Dataset* validation) {
  lora.validate(theta0.backbone_config());
  if (train.num_classes() != theta0.num_classes()) fail(Errc::shape_mismatch, "data vs model class count");
  TrainConfig c = cfg;
  c.loss = LossKind::la;
  const LoraParams params(theta0, lora, c.seed);
  return run_training(params, train, c, validation);
}

}  // namespace ltsoups
