#include "ltsoups/merge.hpp"

#include <cmath>

#include "ltsoups/error.hpp"

namespace ltsoups {

void MergeConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail(Errc::validation_error, "merge.lambda must lie in [0, 1]");
}

ModelWeights uniform_average(std::span<const ModelWeights> models) {
  if (models.empty()) fail(Errc::empty_input, "cannot average an empty model list");
  ModelWeights out = models.front();
  for (std::size_t i = 1; i < models.size(); ++i) {
    require_same_layout(out, models[i]);
    out.flat() += models[i].flat();
  }
  out.flat() /= static_cast<double>(models.size());
  return out;
}

ModelWeights recursive_merge(std::span<const ModelWeights> sorted_models, const ModelWeights& theta0,
                             double lambda) {
  return recursive_merge(sorted_models, theta0, MergeConfig{.lambda = lambda});
}

ModelWeights recursive_merge(std::span<const ModelWeights> sorted_models, const ModelWeights& theta0,
                             const MergeConfig& config) {
  config.validate();
  std::size_t first = 0;
  ModelWeights acc;
  if (config.include_pretrained_as_theta0) {
    acc = theta0;
  } else {
    if (sorted_models.empty()) fail(Errc::empty_input, "nothing to merge");
    acc = sorted_models.front();
    first = 1;
  }
  const double lambda = config.lambda;
  for (std::size_t n = first; n < sorted_models.size(); ++n) {
    require_same_layout(acc, sorted_models[n]);
    acc.flat() = (1.0 - lambda) * sorted_models[n].flat() + lambda * acc.flat();
  }
  return acc;
}

std::vector<double> effective_coefficients(int levels, double lambda) {
  if (levels < 1) fail(Errc::invalid_spec, "need at least one merged level");
  MergeConfig{.lambda = lambda}.validate();
  std::vector<double> c(static_cast<std::size_t>(levels) + 1);
  c[0] = std::pow(lambda, levels);
  for (int n = 1; n <= levels; ++n) c[static_cast<std::size_t>(n)] = (1.0 - lambda) * std::pow(lambda, levels - n);
  return c;
}

void ema_update(EmaState& state, const Vector& theta) {
  if (state.theta.size() != theta.size()) fail(Errc::layout_mismatch, "EMA state does not match parameters");
  if (!(state.mu >= 0.0 && state.mu <= 1.0)) fail(Errc::invalid_spec, "EMA mu must lie in [0, 1]");
  state.theta = (1.0 - state.mu) * state.theta + state.mu * theta;
}

ModelWeights bootstrap_average(std::span<const ModelWeights> models) { return uniform_average(models); }

}  // namespace ltsoups
