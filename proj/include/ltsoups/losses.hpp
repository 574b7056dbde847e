#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ltsoups/data.hpp"
#include "ltsoups/types.hpp"

namespace ltsoups {

class ClassPriors {
 public:
  ClassPriors() = default;
  explicit ClassPriors(std::vector<double> pi);

  const std::vector<double>& values() const { return pi_; }
  std::size_t num_classes() const { return pi_.size(); }
  double operator[](std::size_t j) const { return pi_[j]; }

 private:
  std::vector<double> pi_;
};

enum class LossKind : std::uint8_t { ce = 0, la = 1, cb = 2 };

const char* loss_name(LossKind kind);
LossKind parse_loss(std::string_view name);

/// CB trains with plain cross-entropy; the balancing lives in the sampler.
struct LossSpec {
  LossKind kind = LossKind::la;
  std::optional<ClassPriors> priors;

  void validate(std::size_t num_classes) const;
};

ClassPriors class_priors(std::span<const std::int64_t> counts);
inline ClassPriors class_priors(const ClassCounts& counts) { return class_priors(counts.values()); }

// Mean softmax cross-entropy of logits + offsets. When `grad` is non-null it
// receives d(loss)/d(logits), already divided by the batch size.
double softmax_xent(const Matrix& logits, std::span<const int> labels, std::span<const double> offsets,
                    Matrix* grad = nullptr);

double ce_loss(const Matrix& logits, std::span<const int> labels);
double la_loss(const Matrix& logits, std::span<const int> labels, const ClassPriors& priors);

// Per-sample draw probabilities proportional to 1 / n_{y_i}; sums to one.
std::vector<double> cb_sampling_weights(std::span<const int> labels, std::span<const std::int64_t> counts);

}  // namespace ltsoups
