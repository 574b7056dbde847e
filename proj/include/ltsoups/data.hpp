#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ltsoups/types.hpp"

namespace ltsoups {

// Half-up rounding followed by a clamp to at least one sample.
std::int64_t round_count(double x);

/// Per-class training counts of a long-tailed label distribution.
///
/// Class 0 is the most frequent class. Every count is at least one and the
/// sequence is non-increasing; the constructor rejects anything else.
class ClassCounts {
 public:
  ClassCounts() = default;
  explicit ClassCounts(std::vector<std::int64_t> counts);

  const std::vector<std::int64_t>& values() const { return counts_; }
  std::size_t num_classes() const { return counts_.size(); }
  std::int64_t operator[](std::size_t j) const { return counts_[j]; }
  std::int64_t total() const;
  std::int64_t max() const { return counts_.front(); }
  std::int64_t min() const { return counts_.back(); }

  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;

 private:
  std::vector<std::int64_t> counts_;
};

struct LongTailSpec {
  int num_classes = 100;
  std::int64_t n_max = 500;
  double rho = 100.0;
  std::optional<double> eta;
  std::int64_t tau = 100;

  void validate() const;
};

/// Synthetic stand-in for a frozen foundation-model embedding space.
///
/// Class means sit on a sphere of radius `class_sep`; samples add isotropic
/// noise. `shift` displaces every sample by a common vector of that norm,
/// which a pretrained model built from the unshifted means does not know about.
struct SyntheticSpec {
  int dim = 64;
  double class_sep = 1.0;
  double noise_sigma = 0.3;
  double shift = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(Matrix features, std::vector<int> labels, int num_classes);

  const Matrix& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  int num_classes() const { return num_classes_; }
  int dim() const { return static_cast<int>(features_.cols()); }
  std::size_t size() const { return labels_.size(); }

  // Row indices of each class, ascending.
  const std::vector<std::vector<std::size_t>>& class_index() const { return class_index_; }

  std::vector<std::int64_t> histogram() const;
  // Throws invalid-spec when the histogram is not a valid ClassCounts.
  ClassCounts counts() const;

  // Rows in the given order.
  Dataset select(std::span<const std::size_t> rows) const;

  friend bool operator==(const Dataset& a, const Dataset& b);

 private:
  Matrix features_;
  std::vector<int> labels_;
  int num_classes_ = 0;
  std::vector<std::vector<std::size_t>> class_index_;
};

struct SubsetSchedule {
  std::vector<double> ratios;
  int levels = 0;
  int bootstraps = 1;
};

ClassCounts exp_decay_counts(int num_classes, std::int64_t n_max, double rho);

// Head classes decay from n_max to head_min, tail classes from tail_max to
// round(n_max / rho). The split is H = round(K * eta / (1 + eta)).
ClassCounts dual_axis_counts(const LongTailSpec& spec, std::int64_t head_min, std::int64_t tail_max);
ClassCounts dual_axis_counts(const LongTailSpec& spec);

double imbalance_ratio(std::span<const std::int64_t> counts);
inline double imbalance_ratio(const ClassCounts& counts) { return imbalance_ratio(counts.values()); }

double head_tail_ratio(std::span<const std::int64_t> counts, std::int64_t tau);
inline double head_tail_ratio(const ClassCounts& counts, std::int64_t tau) {
  return head_tail_ratio(counts.values(), tau);
}

Dataset subsample_to_ratio(const Dataset& data, double rho_i, std::uint64_t seed);
// Retained per-class counts for a cap of round(n_min * rho_i), without drawing data.
std::vector<std::int64_t> subsample_counts(std::span<const std::int64_t> counts, double rho_i);

SubsetSchedule make_schedule(double rho, int levels, int bootstraps);

Dataset bootstrap_resample(const Dataset& data, std::uint64_t seed);

Matrix class_means(const SyntheticSpec& spec, int num_classes);
Vector shift_vector(const SyntheticSpec& spec);
Dataset sample_gaussians(const Matrix& means, double noise_sigma, const Vector& offset,
                         std::span<const std::int64_t> counts, std::uint64_t seed);
Dataset synth_gaussians(const SyntheticSpec& spec, const ClassCounts& counts);

struct SplitPlan {
  ClassCounts train;
  ClassCounts val;
  ClassCounts test;
  std::uint64_t train_seed = 0;
  std::uint64_t val_seed = 0;
  std::uint64_t test_seed = 0;
};

struct SplitData {
  Dataset train;
  Dataset val;
  Dataset test;
  Matrix means;
};

SplitPlan split_eval(const ClassCounts& train, std::int64_t test_per_class,
                     std::int64_t val_per_class, std::uint64_t seed);
SplitData synth_splits(const SyntheticSpec& spec, const SplitPlan& plan);

}  // namespace ltsoups
