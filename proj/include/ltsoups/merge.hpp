#pragma once

#include <span>
#include <vector>

#include "ltsoups/nn.hpp"

namespace ltsoups {

struct MergeConfig {
  double lambda = 0.7;
  bool include_pretrained_as_theta0 = true;

  void validate() const;
};

/// Tracks theta_ema <- (1 - mu) * theta_ema + mu * theta. With mu = 0.99 the
/// current iterate carries almost all the weight; pass 1 - mu for the
/// conventional slow-moving average.
struct EmaState {
  Vector theta;
  double mu = 0.99;
};

ModelWeights uniform_average(std::span<const ModelWeights> models);

// Models must already be sorted by ascending subset imbalance ratio.
// theta'_0 = theta0; theta'_n = (1 - lambda) theta_n + lambda theta'_{n-1}.
ModelWeights recursive_merge(std::span<const ModelWeights> sorted_models, const ModelWeights& theta0,
                             double lambda);
ModelWeights recursive_merge(std::span<const ModelWeights> sorted_models, const ModelWeights& theta0,
                             const MergeConfig& config);

// Weights of [theta0, theta1, ..., thetaN] in the recursive merge.
std::vector<double> effective_coefficients(int levels, double lambda);

void ema_update(EmaState& state, const Vector& theta);

ModelWeights bootstrap_average(std::span<const ModelWeights> models);

}  // namespace ltsoups
