#include "ltsoups/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ltsoups/error.hpp"
#include "ltsoups/rng.hpp"

namespace ltsoups {

std::int64_t round_count(double x) {
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(x + 0.5)));
}

ClassCounts::ClassCounts(std::vector<std::int64_t> counts) : counts_(std::move(counts)) {
  if (counts_.empty()) fail(Errc::invalid_spec, "class counts are empty");
  for (std::size_t j = 0; j < counts_.size(); ++j) {
    if (counts_[j] < 1) fail(Errc::invalid_spec, "class " + std::to_string(j) + " has no samples");
    if (j > 0 && counts_[j] > counts_[j - 1])
      fail(Errc::invalid_spec, "class counts must be non-increasing (class " + std::to_string(j) + ")");
  }
}

std::int64_t ClassCounts::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0});
}

void LongTailSpec::validate() const {
  if (num_classes < 2) fail(Errc::invalid_spec, "K must be at least 2");
  if (!(rho >= 1.0)) fail(Errc::invalid_spec, "rho must be >= 1");
  if (static_cast<double>(n_max) < rho) fail(Errc::invalid_spec, "n_max must be >= rho");
  if (eta && !(*eta > 0.0)) fail(Errc::invalid_spec, "eta must be > 0");
  if (tau < 1) fail(Errc::invalid_spec, "tau must be >= 1");
}

void SyntheticSpec::validate() const {
  if (dim < 2) fail(Errc::invalid_spec, "synthetic dim must be >= 2");
  if (!(noise_sigma > 0.0)) fail(Errc::invalid_spec, "noise_sigma must be > 0");
  if (!(class_sep > 0.0)) fail(Errc::invalid_spec, "class_sep must be > 0");
  if (!(shift >= 0.0)) fail(Errc::invalid_spec, "shift must be >= 0");
}

Dataset::Dataset(Matrix features, std::vector<int> labels, int num_classes)
    : features_(std::move(features)), labels_(std::move(labels)), num_classes_(num_classes) {
  if (static_cast<std::size_t>(features_.rows()) != labels_.size())
    fail(Errc::shape_mismatch, "feature rows and label count differ");
  if (num_classes_ < 1) fail(Errc::invalid_spec, "dataset needs at least one class");
  if (!features_.allFinite()) fail(Errc::non_finite_input, "dataset features contain NaN or Inf");
  class_index_.assign(static_cast<std::size_t>(num_classes_), {});
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const int y = labels_[i];
    if (y < 0 || y >= num_classes_)
      fail(Errc::invalid_spec, "label " + std::to_string(y) + " out of range");
    class_index_[static_cast<std::size_t>(y)].push_back(i);
  }
}

std::vector<std::int64_t> Dataset::histogram() const {
  std::vector<std::int64_t> h(class_index_.size());
  for (std::size_t c = 0; c < h.size(); ++c) h[c] = static_cast<std::int64_t>(class_index_[c].size());
  return h;
}

ClassCounts Dataset::counts() const { return ClassCounts(histogram()); }

Dataset Dataset::select(std::span<const std::size_t> rows) const {
  Matrix x(static_cast<Eigen::Index>(rows.size()), features_.cols());
  std::vector<int> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = features_.row(static_cast<Eigen::Index>(rows[i]));
    y[i] = labels_[rows[i]];
  }
  return Dataset(std::move(x), std::move(y), num_classes_);
}

bool operator==(const Dataset& a, const Dataset& b) {
  return a.num_classes_ == b.num_classes_ && a.labels_ == b.labels_ &&
         a.features_.rows() == b.features_.rows() && a.features_.cols() == b.features_.cols() &&
         a.features_ == b.features_;
}

namespace {

// n_start decaying geometrically to n_end over `len` classes.
void append_decay(std::vector<std::int64_t>& out, int len, double n_start, double n_end) {
  if (len == 1) {
    out.push_back(round_count(n_start));
    return;
  }
  for (int j = 0; j < len; ++j) {
    const double frac = static_cast<double>(j) / static_cast<double>(len - 1);
    out.push_back(round_count(n_start * std::pow(n_end / n_start, frac)));
  }
}

}  // namespace

ClassCounts exp_decay_counts(int num_classes, std::int64_t n_max, double rho) {
  LongTailSpec{.num_classes = num_classes, .n_max = n_max, .rho = rho, .eta = std::nullopt, .tau = 100}.validate();
  std::vector<std::int64_t> counts;
  counts.reserve(static_cast<std::size_t>(num_classes));
  for (int j = 0; j < num_classes; ++j) {
    const double exponent = -static_cast<double>(j) / static_cast<double>(num_classes - 1);
    counts.push_back(round_count(static_cast<double>(n_max) * std::pow(rho, exponent)));
  }
  return ClassCounts(std::move(counts));
}

ClassCounts dual_axis_counts(const LongTailSpec& spec, std::int64_t head_min, std::int64_t tail_max) {
  spec.validate();
  if (!spec.eta) fail(Errc::invalid_spec, "dual-axis generation needs eta");
  const double eta = *spec.eta;
  const std::int64_t n_min = round_count(static_cast<double>(spec.n_max) / spec.rho);
  if (!(head_min > tail_max)) fail(Errc::invalid_spec, "head_min must exceed tail_max");
  if (tail_max < n_min) fail(Errc::invalid_spec, "tail_max must be >= n_max / rho");
  if (head_min > spec.n_max) fail(Errc::invalid_spec, "head_min must be <= n_max");

  const int k = spec.num_classes;
  const int heads = static_cast<int>(std::floor(k * eta / (1.0 + eta) + 0.5));
  const int tails = k - heads;
  if (heads == 0 || tails == 0)
    fail(Errc::invalid_spec, "eta=" + std::to_string(eta) + " leaves an empty head or tail group");

  std::vector<std::int64_t> counts;
  counts.reserve(static_cast<std::size_t>(k));
  append_decay(counts, heads, static_cast<double>(spec.n_max), static_cast<double>(head_min));
  append_decay(counts, tails, static_cast<double>(tail_max), static_cast<double>(n_min));
  return ClassCounts(std::move(counts));
}

ClassCounts dual_axis_counts(const LongTailSpec& spec) {
  return dual_axis_counts(spec, spec.tau + 1, spec.tau);
}

double imbalance_ratio(std::span<const std::int64_t> counts) {
  if (counts.empty()) fail(Errc::empty_input, "imbalance ratio of empty counts");
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  if (*lo < 1) fail(Errc::invalid_spec, "imbalance ratio needs every class non-empty");
  return static_cast<double>(*hi) / static_cast<double>(*lo);
}

double head_tail_ratio(std::span<const std::int64_t> counts, std::int64_t tau) {
  const auto heads = std::count_if(counts.begin(), counts.end(), [tau](std::int64_t n) { return n > tau; });
  const auto tails = static_cast<std::ptrdiff_t>(counts.size()) - heads;
  if (heads == 0 || tails == 0)
    fail(Errc::degenerate_split, "tau=" + std::to_string(tau) + " leaves an empty head or tail group");
  return static_cast<double>(heads) / static_cast<double>(tails);
}

std::vector<std::int64_t> subsample_counts(std::span<const std::int64_t> counts, double rho_i) {
  if (!(rho_i >= 1.0)) fail(Errc::invalid_spec, "subset ratio must be >= 1");
  if (counts.empty()) fail(Errc::empty_input, "no classes to subsample");
  const std::int64_t n_min = *std::min_element(counts.begin(), counts.end());
  if (n_min < 1) fail(Errc::invalid_spec, "subsampling needs every class non-empty");
  const std::int64_t cap = round_count(static_cast<double>(n_min) * rho_i);
  std::vector<std::int64_t> out(counts.begin(), counts.end());
  for (auto& n : out) n = std::min(n, cap);
  return out;
}

Dataset subsample_to_ratio(const Dataset& data, double rho_i, std::uint64_t seed) {
  const auto hist = data.histogram();
  const auto kept = subsample_counts(hist, rho_i);
  std::vector<char> keep(data.size(), 0);
  for (std::size_t c = 0; c < hist.size(); ++c) {
    auto rows = data.class_index()[c];
    const auto take = static_cast<std::size_t>(kept[c]);
    if (take < rows.size()) {
      Rng rng(derive_seed(derive_seed(seed, "subsample"), c));
      // Partial Fisher-Yates: the first `take` slots form a uniform draw without replacement.
      for (std::size_t i = 0; i < take; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, rows.size() - 1);
        std::swap(rows[i], rows[pick(rng)]);
      }
      rows.resize(take);
    }
    for (auto r : rows) keep[r] = 1;
  }
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) selected.push_back(i);
  return data.select(selected);
}

SubsetSchedule make_schedule(double rho, int levels, int bootstraps) {
  if (!(rho >= 1.0)) fail(Errc::invalid_spec, "rho must be >= 1");
  if (levels < 1) fail(Errc::invalid_spec, "schedule needs at least one level");
  if (bootstraps < 1) fail(Errc::invalid_spec, "schedule needs at least one bootstrap per level");
  const int max_levels = static_cast<int>(std::ceil(std::log2(rho) - 1e-12));
  if (levels > max_levels)
    fail(Errc::schedule_exceeds_data, "2^" + std::to_string(levels) + " exceeds 2^ceil(log2 rho) = 2^" +
                                          std::to_string(max_levels));
  SubsetSchedule s;
  s.levels = levels;
  s.bootstraps = bootstraps;
  for (int i = 1; i <= levels; ++i) s.ratios.push_back(std::ldexp(1.0, i));
  return s;
}

Dataset bootstrap_resample(const Dataset& data, std::uint64_t seed) {
  std::vector<std::size_t> rows;
  rows.reserve(data.size());
  const auto& index = data.class_index();
  for (std::size_t c = 0; c < index.size(); ++c) {
    const auto& members = index[c];
    if (members.empty()) continue;
    Rng rng(derive_seed(derive_seed(seed, "bootstrap"), c));
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    for (std::size_t i = 0; i < members.size(); ++i) rows.push_back(members[pick(rng)]);
  }
  return data.select(rows);
}

namespace {

Vector random_unit(Rng& rng, int dim) {
  std::normal_distribution<double> normal;
  Vector v(dim);
  for (;;) {
    for (int i = 0; i < dim; ++i) v[i] = normal(rng);
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

}  // namespace

Matrix class_means(const SyntheticSpec& spec, int num_classes) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "class-means"));
  Matrix means(num_classes, spec.dim);
  for (int c = 0; c < num_classes; ++c) means.row(c) = spec.class_sep * random_unit(rng, spec.dim).transpose();
  return means;
}

Vector shift_vector(const SyntheticSpec& spec) {
  spec.validate();
  if (spec.shift == 0.0) return Vector::Zero(spec.dim);
  Rng rng(derive_seed(spec.seed, "shift"));
  return spec.shift * random_unit(rng, spec.dim);
}

Dataset sample_gaussians(const Matrix& means, double noise_sigma, const Vector& offset,
                         std::span<const std::int64_t> counts, std::uint64_t seed) {
  const auto k = static_cast<std::size_t>(means.rows());
  if (counts.size() != k) fail(Errc::shape_mismatch, "counts and class means disagree on K");
  if (offset.size() != means.cols()) fail(Errc::shape_mismatch, "offset dimension mismatch");
  const std::int64_t total = std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
  Matrix x(total, means.cols());
  std::vector<int> y;
  y.reserve(static_cast<std::size_t>(total));
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < k; ++c) {
    Rng rng(derive_seed(seed, c));
    std::normal_distribution<double> normal;
    for (std::int64_t i = 0; i < counts[c]; ++i, ++row) {
      for (Eigen::Index j = 0; j < means.cols(); ++j)
        x(row, j) = means(static_cast<Eigen::Index>(c), j) + offset[j] + noise_sigma * normal(rng);
      y.push_back(static_cast<int>(c));
    }
  }
  return Dataset(std::move(x), std::move(y), static_cast<int>(k));
}

Dataset synth_gaussians(const SyntheticSpec& spec, const ClassCounts& counts) {
  const Matrix means = class_means(spec, static_cast<int>(counts.num_classes()));
  return sample_gaussians(means, spec.noise_sigma, shift_vector(spec), counts.values(),
                          derive_seed(spec.seed, "train"));
}

SplitPlan split_eval(const ClassCounts& train, std::int64_t test_per_class, std::int64_t val_per_class,
                     std::uint64_t seed) {
  if (test_per_class < 1 || val_per_class < 1)
    fail(Errc::invalid_spec, "validation and test sets need at least one sample per class");
  const auto k = train.num_classes();
  SplitPlan plan;
  plan.train = train;
  plan.val = ClassCounts(std::vector<std::int64_t>(k, val_per_class));
  plan.test = ClassCounts(std::vector<std::int64_t>(k, test_per_class));
  plan.train_seed = derive_seed(seed, "train");
  plan.val_seed = derive_seed(seed, "val");
  plan.test_seed = derive_seed(seed, "test");
  return plan;
}

SplitData synth_splits(const SyntheticSpec& spec, const SplitPlan& plan) {
  const int k = static_cast<int>(plan.train.num_classes());
  SplitData out;
  out.means = class_means(spec, k);
  const Vector offset = shift_vector(spec);
  out.train = sample_gaussians(out.means, spec.noise_sigma, offset, plan.train.values(), plan.train_seed);
  out.val = sample_gaussians(out.means, spec.noise_sigma, offset, plan.val.values(), plan.val_seed);
  out.test = sample_gaussians(out.means, spec.noise_sigma, offset, plan.test.values(), plan.test_seed);
  return out;
}

}  // namespace ltsoups
