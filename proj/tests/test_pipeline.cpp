#include <doctest.h>

#include <algorithm>

#include "ltsoups/error.hpp"
#include "ltsoups/eval.hpp"
#include "ltsoups/experiment.hpp"
#include "ltsoups/pipeline.hpp"
#include "ltsoups/rng.hpp"

using namespace ltsoups;

namespace {

BenchmarkConfig tiny_bench() {
  BenchmarkConfig b;
  b.longtail = {.num_classes = 6, .n_max = 120, .rho = 16.0, .eta = std::nullopt, .tau = 60};
  b.synth = {.dim = 8, .class_sep = 1.0, .noise_sigma = 0.3};
  b.backbone = {.dim = 8, .hidden = {16}};
  b.val_per_class = 10;
  b.test_per_class = 20;
  b.anchor_noise = 0.2;
  b.logit_scale = 16.0;
  return b;
}

TrainConfig quick(int epochs = 3) {
  TrainConfig c;
  c.lr_max = 1e-2;
  c.epochs = epochs;
  c.batch_size = 32;
  c.min_warmup_steps = 5;
  c.seed = 42;
  return c;
}

double backbone_distance(const ModelWeights& a, const ModelWeights& b) {
  const auto r = a.layout().backbone();
  return (a.segment(r) - b.segment(r)).norm();
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("zero epochs returns the starting point") {
  const Benchmark b = make_benchmark(tiny_bench(), 1);
  const auto& d = b.data.train;
  CHECK(finetune(b.theta0, d, quick(0)).flat() == b.theta0.flat());
  CHECK(classifier_retrain(b.theta0, d, quick(0)).flat() == b.theta0.flat());
  CHECK(baseline_lora(b.theta0, d, {.rank = 2, .alpha = 2.0}, quick(0)).flat() == b.theta0.flat());
}

TEST_CASE("fine-tuning fits separable data") {
  SyntheticSpec s{.dim = 4, .class_sep = 1.0, .noise_sigma = 0.1, .shift = 0.0, .seed = 5};
  const Dataset d = synth_gaussians(s, ClassCounts({40, 40}));
  ModelWeights theta0 = init_pretrained({.dim = 4, .hidden = {8}}, class_means(s, 2), 1.0, 3, 16.0);
  TrainConfig c = quick(50);
  c.loss = LossKind::ce;
  ModelWeights m = finetune(theta0, d, c);
  CHECK(balanced_accuracy(predictions(forward(m, d.features())), d.labels(), 2) == 1.0);
}

TEST_CASE("training is deterministic") {
  const Benchmark b = make_benchmark(tiny_bench(), 2);
  auto a = finetune(b.theta0, b.data.train, quick());
  auto c = finetune(b.theta0, b.data.train, quick());
  CHECK(a.flat() == c.flat());
  CHECK(weight_distance(a, b.theta0) > 0.0);
}

TEST_CASE("classifier retraining freezes the backbone") {
  const Benchmark b = make_benchmark(tiny_bench(), 3);
  auto m = classifier_retrain(b.theta0, b.data.train, quick());
  CHECK(backbone_distance(m, b.theta0) == 0.0);
  CHECK(m.log_temperature() == b.theta0.log_temperature());
  CHECK(weight_distance(m, b.theta0) > 0.0);
  auto probe = baseline_linear_probe(b.theta0, b.data.train, quick());
  TrainConfig la = quick();
  la.loss = LossKind::la;
  CHECK(probe.flat() == classifier_retrain(b.theta0, b.data.train, la).flat());
}

TEST_CASE("LoRA updates have bounded rank") {
  const Benchmark b = make_benchmark(tiny_bench(), 4);
  auto m = baseline_lora(b.theta0, b.data.train, {.rank = 2, .alpha = 2.0}, quick());
  CHECK(weight_distance(m, b.theta0) > 0.0);
  for (int l = 0; l < m.backbone_config().num_linear(); ++l) {
    Matrix delta = m.weight(l) - b.theta0.weight(l);
    Eigen::JacobiSVD<Matrix> svd(delta);
    const auto& sv = svd.singularValues();
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) rank += sv[i] > 1e-10 * sv[0];
    CHECK(rank <= 2);
    CHECK((m.bias(l) - b.theta0.bias(l)).norm() == 0.0);
  }
  CHECK_THROWS_AS(baseline_lora(b.theta0, b.data.train, {.rank = 8, .alpha = 1.0}, quick()), Error);
}

TEST_CASE("LT-Soups collapses to one subset plus retraining") {
  const Benchmark b = make_benchmark(tiny_bench(), 5);
  const auto& d = b.data.train;
  TrainConfig c = quick();
  SubsetSchedule one{{4.0}, 1, 1};
  auto r = lt_soups(b.theta0, d, one, {.lambda = 0.0}, c);

  TrainJob job = make_subset_job(soups_job_id(4.0, 0), 4.0, 0, false, c);
  ModelWeights stage1 = run_job(b.theta0, job, d);
  CHECK(r.artifacts.merged.flat() == stage1.flat());
  TrainConfig s2 = c;
  s2.seed = derive_seed(c.seed, "stage2");
  CHECK(r.model.flat() == classifier_retrain(stage1, d, s2).flat());
  CHECK(backbone_distance(r.model, r.artifacts.merged) == 0.0);
}

TEST_CASE("LT-Soups sorts its schedule") {
  const Benchmark b = make_benchmark(tiny_bench(), 6);
  TrainConfig c = quick(2);
  SubsetSchedule fwd{{2.0, 4.0, 8.0}, 3, 1}, rev{{8.0, 4.0, 2.0}, 3, 1};
  auto a = lt_soups(b.theta0, b.data.train, fwd, {}, c);
  auto r = lt_soups(b.theta0, b.data.train, rev, {}, c);
  CHECK(a.model.flat() == r.model.flat());
  CHECK(a.artifacts.level_ratios == std::vector<double>{2.0, 4.0, 8.0});
}

TEST_CASE("parallel jobs match serial jobs") {
  const Benchmark b = make_benchmark(tiny_bench(), 7);
  TrainConfig c = quick(2);
  SubsetSchedule s = make_schedule(16.0, 3, 2);
  auto one = lt_soups(b.theta0, b.data.train, s, {}, c, {.workers = 1});
  auto four = lt_soups(b.theta0, b.data.train, s, {}, c, {.workers = 4});
  CHECK(one.model.flat() == four.model.flat());
  REQUIRE(one.artifacts.jobs.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(one.artifacts.jobs[i].weights->flat() == four.artifacts.jobs[i].weights->flat());
}

TEST_CASE("parallel_for covers every index once") {
  std::vector<int> hits(37, 0);
  parallel_for(hits.size(), 5, [&](std::size_t i) { ++hits[i]; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  CHECK_THROWS_AS(parallel_for(4, 2, [](std::size_t i) {
                    if (i == 3) fail(Errc::diverged, "boom");
                  }),
                  Error);
}

TEST_CASE("model soups") {
  const Benchmark b = make_benchmark(tiny_bench(), 8);
  TrainConfig c = quick(2);
  auto single = baseline_model_soups(b.theta0, b.data.train, model_soups_configs(c, 1));
  CHECK(single.flat() == baseline_full_ft(b.theta0, b.data.train, c).flat());
  auto cfgs = model_soups_configs(c, 4);
  CHECK(cfgs[1].lr_max == doctest::Approx(c.lr_max / 3));
  CHECK(cfgs[0].seed != cfgs[2].seed);
}

TEST_CASE("Soups-rho with a single model") {
  const Benchmark b = make_benchmark(tiny_bench(), 9);
  TrainConfig c = quick(2);
  auto r = baseline_soups_rho(b.theta0, b.data.train, 4.0, 1, c);
  TrainJob job = make_subset_job(soups_job_id(4.0, 0), 4.0, 0, false, c);
  CHECK(r.artifacts.merged.flat() == run_job(b.theta0, job, b.data.train).flat());
}

TEST_CASE("cRT keeps its stage-1 backbone") {
  const Benchmark b = make_benchmark(tiny_bench(), 10);
  TrainConfig c = quick(2);
  auto m = baseline_crt(b.theta0, b.data.train, c);
  TrainConfig s1 = c;
  s1.loss = LossKind::ce;
  auto rep = finetune(b.theta0, b.data.train, s1);
  CHECK(backbone_distance(m, rep) == 0.0);
}

TEST_CASE("subset jobs share their level's subset") {
  const Benchmark b = make_benchmark(tiny_bench(), 11);
  TrainConfig c = quick(1);
  auto j0 = make_subset_job(soups_job_id(4.0, 0), 4.0, 0, false, c);
  auto j1 = make_subset_job(soups_job_id(4.0, 1), 4.0, 1, false, c);
  CHECK(job_dataset(j0, b.data.train) == job_dataset(j1, b.data.train));
  CHECK(job_train_config(j0).seed != job_train_config(j1).seed);
  j1.resampled = true;
  CHECK(job_dataset(j1, b.data.train).histogram() == job_dataset(j0, b.data.train).histogram());
}

TEST_CASE("experiment methods") {
  CHECK(is_known_method("lt_soups"));
  CHECK(is_known_method("soups_rho_8"));
  CHECK(!is_known_method("soups_rho_0.5"));
  CHECK(!is_known_method("magic"));
  ExperimentConfig x;
  CHECK(levels_for(x, 100.0) == 5);
  CHECK(levels_for(x, 16.0) == 4);
  CHECK(levels_for(x, 2.0) == 1);

  x.benchmark = tiny_bench();
  x.train = quick(1);
  const Benchmark b = make_benchmark(x.benchmark, 12);
  auto m = run_method("full_ft", b, x);
  auto r = evaluate_on(m, b, x);
  CHECK(r.bal_acc > 1.0 / 6);
  CHECK(r.weight_change == doctest::Approx(weight_distance(m, b.theta0)));
  CHECK(r.temperature > 0.0);
  CHECK(r.brier_head.has_value());
  CHECK(r.brier_tail.has_value());
  CHECK_THROWS_AS(run_method("magic", b, x), Error);
}

}
