#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ltsoups/data.hpp"
#include "ltsoups/nn.hpp"

namespace ltsoups {

// many: n > many_min; few: n < few_max; medium: the rest. Head is n > tau.
struct GroupThresholds {
  std::int64_t many_min = 100;
  std::int64_t few_max = 20;
  std::int64_t tau = 100;

  void validate() const;
};

struct GroupAccuracies {
  std::optional<double> many;
  std::optional<double> medium;
  std::optional<double> few;
  std::optional<double> head;
  std::optional<double> tail;
};

struct MetricsReport {
  double bal_acc = 0.0;
  GroupAccuracies groups;
  double ece = 0.0;
  double brier = 0.0;
  double nll = 0.0;
  std::optional<double> brier_head, brier_tail, nll_head, nll_tail;
  double temperature = 1.0;
  double weight_change = 0.0;
  std::size_t nll_clamped = 0;
};

std::vector<int> predictions(const Matrix& logits);
std::vector<double> per_class_accuracy(std::span<const int> preds, std::span<const int> labels, int num_classes);

double balanced_accuracy(std::span<const int> preds, std::span<const int> labels, int num_classes);

GroupAccuracies group_accuracies(std::span<const int> preds, std::span<const int> labels,
                                 std::span<const std::int64_t> train_counts,
                                 const GroupThresholds& thresholds = {});

Matrix softmax(const Matrix& logits, double temperature = 1.0);

struct TemperatureFit {
  double temperature = 1.0;
  bool at_bound = false;
};

// Golden-section search for the NLL-minimizing T over log T in [log 0.05, log 20].
TemperatureFit fit_temperature(const Matrix& logits, std::span<const int> labels, double tol = 1e-4);

// Bins are (k/B, (k+1)/B] over max-probability confidence.
double ece(const Matrix& probs, std::span<const int> labels, int bins = 15);

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double confidence = 0.0;  // mean over the bin, 0 when empty
  double accuracy = 0.0;
};
std::vector<ReliabilityBin> reliability_bins(const Matrix& probs, std::span<const int> labels, int bins = 15);
double brier(const Matrix& probs, std::span<const int> labels);

struct NllResult {
  double value = 0.0;
  std::size_t clamped = 0;  // samples whose label probability fell below 1e-12
};
NllResult nll(const Matrix& probs, std::span<const int> labels);

// Rows of probs/labels restricted to the given classes.
struct Subset {
  Matrix probs;
  std::vector<int> labels;
};
Subset restrict_to_classes(const Matrix& probs, std::span<const int> labels, const std::vector<bool>& keep);

/// Full report for one model: accuracy on `test`, temperature fitted on
/// `val`, calibration on temperature-scaled test probabilities, and the
/// distance to `reference`.
MetricsReport evaluate(const ModelWeights& model, const Dataset& test, const Dataset& val,
                       std::span<const std::int64_t> train_counts, const ModelWeights* reference,
                       const GroupThresholds& thresholds = {});

}  // namespace ltsoups
