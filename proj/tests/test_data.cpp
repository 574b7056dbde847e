#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ltsoups/data.hpp"
#include "ltsoups/error.hpp"

using namespace ltsoups;

namespace {

// Independent oracle: n_j = n_max * rho^(-j/(K-1)), rounded half-up.
std::vector<std::int64_t> decay_oracle(int k, double n_max, double rho) {
  std::vector<std::int64_t> out;
  for (int j = 0; j < k; ++j)
    out.push_back(static_cast<std::int64_t>(std::floor(n_max * std::pow(rho, -double(j) / (k - 1)) + 0.5)));
  return out;
}

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::io_error;
}

Dataset toy(std::vector<std::int64_t> counts, std::uint64_t seed = 1) {
  SyntheticSpec s{.dim = 4, .class_sep = 1.0, .noise_sigma = 0.2, .shift = 0.0, .seed = seed};
  return synth_gaussians(s, ClassCounts(counts));
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("exp decay without imbalance is flat") {
  auto c = exp_decay_counts(100, 500, 1.0);
  for (auto n : c.values()) CHECK(n == 500);
}

TEST_CASE("exp decay matches the summation oracle") {
  auto c = exp_decay_counts(100, 500, 100.0);
  CHECK(c.values() == decay_oracle(100, 500, 100));
  CHECK(c.max() == 500);
  CHECK(c.min() == 5);
  CHECK(c.total() == 10899);
  CHECK(std::abs(c.total() - 10800.0) / 10800.0 < 0.01);
  CHECK(imbalance_ratio(c) == doctest::Approx(100.0));
}

TEST_CASE("exp decay for a small benchmark") {
  auto c = exp_decay_counts(20, 100, 100.0);
  CHECK(c.num_classes() == 20);
  CHECK(c.max() == 100);
  CHECK(c.min() == 1);
}

TEST_CASE("head tail ratio of the standard decay") {
  auto c = exp_decay_counts(100, 500, 100.0);
  std::int64_t head = std::count_if(c.values().begin(), c.values().end(), [](auto n) { return n > 100; });
  CHECK(head == 35);
  CHECK(head_tail_ratio(c, 100) == doctest::Approx(35.0 / 65.0));
  CHECK(std::abs(head_tail_ratio(c, 100) - 0.54) <= 0.02);
  std::vector<std::int64_t> two{101, 100};
  CHECK(head_tail_ratio(two, 100) == 1.0);
  std::vector<std::int64_t> all_head{500, 400};
  CHECK(code_of([&] { head_tail_ratio(all_head, 100); }) == Errc::degenerate_split);
}

TEST_CASE("imbalance ratio") {
  std::vector<std::int64_t> flat{500, 500, 500}, four{80, 40, 10, 5};
  CHECK(imbalance_ratio(flat) == 1.0);
  CHECK(imbalance_ratio(four) == 16.0);
}

TEST_CASE("dual axis counts") {
  LongTailSpec s{.num_classes = 100, .n_max = 500, .rho = 100.0, .eta = 19.0, .tau = 100};
  auto c = dual_axis_counts(s, 101, 100);
  std::int64_t head = std::count_if(c.values().begin(), c.values().end(), [](auto n) { return n > 100; });
  CHECK(head == 95);
  CHECK(c[0] == 500);
  CHECK(c[94] == 101);
  CHECK(c[95] == 100);
  CHECK(c[99] == 5);
  CHECK(head_tail_ratio(c, 100) == doctest::Approx(19.0));

  s.eta = 1.0;
  c = dual_axis_counts(s);
  CHECK(std::count_if(c.values().begin(), c.values().end(), [](auto n) { return n > 100; }) == 50);

  s.eta = 0.05;
  c = dual_axis_counts(s);
  CHECK(std::count_if(c.values().begin(), c.values().end(), [](auto n) { return n > 100; }) == 5);
  CHECK(imbalance_ratio(c) == doctest::Approx(100.0));
}

TEST_CASE("class counts invariants") {
  CHECK(code_of([] { ClassCounts({5, 6}); }) == Errc::invalid_spec);
  CHECK(code_of([] { ClassCounts({5, 0}); }) == Errc::invalid_spec);
  LongTailSpec bad{.num_classes = 10, .n_max = 50, .rho = 100.0, .eta = std::nullopt, .tau = 100};
  CHECK(code_of([&] { bad.validate(); }) == Errc::invalid_spec);
}

TEST_CASE("subsampling keeps every tail sample") {
  auto c = exp_decay_counts(100, 500, 100.0);
  auto kept = subsample_counts(c.values(), 32.0);
  double oracle = 0.0;
  for (auto n : c.values()) oracle += static_cast<double>(std::min<std::int64_t>(n, 160));
  auto total = std::accumulate(kept.begin(), kept.end(), std::int64_t{0});
  CHECK(static_cast<double>(total) == oracle);
  CHECK(std::abs(total / double(c.total()) - 0.67) <= 0.01);

  auto same = subsample_counts(c.values(), 100.0);
  CHECK(same == c.values());
  auto flat = subsample_counts(c.values(), 1.0);
  for (auto n : flat) CHECK(n == 5);
}

TEST_CASE("subsample_to_ratio draws a subset") {
  Dataset d = toy({40, 20, 10, 4});
  Dataset s = subsample_to_ratio(d, 2.0, 9);
  CHECK(s.histogram() == std::vector<std::int64_t>{8, 8, 8, 4});
  // Every retained row is a row of the original.
  for (std::size_t i = 0; i < s.size(); ++i) {
    bool found = false;
    for (std::size_t r : d.class_index()[static_cast<std::size_t>(s.labels()[i])])
      found = found || d.features().row(static_cast<Eigen::Index>(r)) == s.features().row(static_cast<Eigen::Index>(i));
    CHECK(found);
  }
  CHECK(subsample_to_ratio(d, 10.0, 9) == d);
  CHECK(subsample_to_ratio(d, 2.0, 9) == s);
}

TEST_CASE("subset schedule") {
  auto s = make_schedule(100.0, 5, 2);
  CHECK(s.ratios == std::vector<double>{2, 4, 8, 16, 32});
  CHECK(s.bootstraps == 2);
  CHECK(make_schedule(100.0, 7, 1).ratios == std::vector<double>{2, 4, 8, 16, 32, 64, 128});
  CHECK(make_schedule(2.0, 1, 1).ratios == std::vector<double>{2});
  CHECK(code_of([] { make_schedule(100.0, 8, 1); }) == Errc::schedule_exceeds_data);
  CHECK(code_of([] { make_schedule(100.0, 3, 0); }) == Errc::invalid_spec);
}

TEST_CASE("bootstrap resample preserves counts") {
  Dataset d = toy({30, 12, 1});
  Dataset b = bootstrap_resample(d, 4);
  CHECK(b.histogram() == d.histogram());
  // The single-sample class is reproduced as is.
  auto r = d.class_index()[2][0];
  auto rb = b.class_index()[2][0];
  CHECK(b.features().row(static_cast<Eigen::Index>(rb)) == d.features().row(static_cast<Eigen::Index>(r)));

  int differing = 0;
  for (std::uint64_t s = 0; s < 100; ++s)
    differing += !(bootstrap_resample(d, 2 * s) == bootstrap_resample(d, 2 * s + 1));
  CHECK(differing == 100);
}

TEST_CASE("class index partitions rows") {
  Dataset d = toy({9, 5, 2});
  std::vector<int> seen(d.size(), 0);
  for (std::size_t c = 0; c < 3; ++c)
    for (auto r : d.class_index()[c]) {
      CHECK(d.labels()[r] == static_cast<int>(c));
      ++seen[r];
    }
  for (int s : seen) CHECK(s == 1);
  CHECK(d.counts() == ClassCounts({9, 5, 2}));
}

TEST_CASE("synthetic gaussians") {
  SyntheticSpec s{.dim = 8, .class_sep = 1.0, .noise_sigma = 1e-12, .shift = 0.0, .seed = 3};
  ClassCounts c({5, 3});
  Dataset d = synth_gaussians(s, c);
  Matrix mu = class_means(s, 2);
  for (std::size_t i = 0; i < d.size(); ++i)
    CHECK((d.features().row(static_cast<Eigen::Index>(i)) - mu.row(d.labels()[i])).norm() < 1e-9);
  CHECK(mu.row(0).norm() == doctest::Approx(1.0));

  s.noise_sigma = 0.3;
  CHECK(synth_gaussians(s, c) == synth_gaussians(s, c));
  auto s2 = s;
  s2.seed = 4;
  CHECK(!(synth_gaussians(s, c) == synth_gaussians(s2, c)));

  s.shift = 2.0;
  CHECK(shift_vector(s).norm() == doctest::Approx(2.0));
}

TEST_CASE("balanced evaluation splits") {
  auto train = exp_decay_counts(20, 100, 100.0);
  auto plan = split_eval(train, 50, 20, 7);
  SyntheticSpec s{.dim = 8};
  auto data = synth_splits(s, plan);
  for (auto n : data.test.histogram()) CHECK(n == 50);
  for (auto n : data.val.histogram()) CHECK(n == 20);
  CHECK(data.train.counts() == train);
  auto again = synth_splits(s, split_eval(train, 50, 20, 7));
  CHECK(again.train == data.train);
  CHECK(again.test == data.test);
  CHECK(!(data.train.features().topRows(5) == data.test.features().topRows(5)));
}

TEST_CASE("dataset rejects bad input") {
  Matrix x = Matrix::Zero(2, 3);
  CHECK(code_of([&] { Dataset(x, {0}, 2); }) == Errc::shape_mismatch);
  CHECK(code_of([&] { Dataset(x, {0, 2}, 2); }) == Errc::invalid_spec);
  x(0, 0) = std::nan("");
  CHECK(code_of([&] { Dataset(x, {0, 1}, 2); }) == Errc::non_finite_input);
}

}
