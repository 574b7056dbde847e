#include "ltsoups/losses.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "ltsoups/error.hpp"

namespace ltsoups {

ClassPriors::ClassPriors(std::vector<double> pi) : pi_(std::move(pi)) {
  if (pi_.empty()) fail(Errc::invalid_spec, "priors are empty");
  double sum = 0.0;
  for (double p : pi_) {
    if (!(p > 0.0)) fail(Errc::invalid_spec, "priors must be strictly positive");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) fail(Errc::invalid_spec, "priors must sum to one");
}

const char* loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::ce: return "ce";
    case LossKind::la: return "la";
    case LossKind::cb: return "cb";
  }
  return "?";
}

LossKind parse_loss(std::string_view name) {
  if (name == "ce" || name == "CE") return LossKind::ce;
  if (name == "la" || name == "LA") return LossKind::la;
  if (name == "cb" || name == "CB") return LossKind::cb;
  fail(Errc::validation_error, "unknown loss '" + std::string(name) + "'");
}

void LossSpec::validate(std::size_t num_classes) const {
  if (kind != LossKind::la) return;
  if (!priors) fail(Errc::invalid_spec, "LA loss needs class priors");
  if (priors->num_classes() != num_classes) fail(Errc::shape_mismatch, "priors do not match class count");
}

ClassPriors class_priors(std::span<const std::int64_t> counts) {
  if (counts.empty()) fail(Errc::empty_input, "class priors of empty counts");
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::int64_t{0}));
  std::vector<double> pi(counts.size());
  for (std::size_t j = 0; j < counts.size(); ++j) pi[j] = static_cast<double>(counts[j]) / total;
  // Renormalize so the sum check holds for arbitrary counts.
  const double s = std::accumulate(pi.begin(), pi.end(), 0.0);
  for (auto& p : pi) p /= s;
  return ClassPriors(std::move(pi));
}

double softmax_xent(const Matrix& logits, std::span<const int> labels, std::span<const double> offsets,
                    Matrix* grad) {
  const Eigen::Index batch = logits.rows();
  const Eigen::Index k = logits.cols();
  if (static_cast<std::size_t>(batch) != labels.size()) fail(Errc::shape_mismatch, "labels vs logits rows");
  if (!offsets.empty() && offsets.size() != static_cast<std::size_t>(k))
    fail(Errc::shape_mismatch, "offsets vs logits cols");
  if (batch == 0) fail(Errc::empty_input, "empty batch");
  if (grad) grad->resize(batch, k);

  double total = 0.0;
  Eigen::RowVectorXd z(k);
  for (Eigen::Index b = 0; b < batch; ++b) {
    z = logits.row(b);
    if (!offsets.empty())
      for (Eigen::Index j = 0; j < k; ++j) z[j] += offsets[static_cast<std::size_t>(j)];
    const double zmax = z.maxCoeff();
    const double lse = zmax + std::log((z.array() - zmax).exp().sum());
    const int y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= k) fail(Errc::invalid_spec, "label out of range");
    total += lse - z[y];
    if (grad) {
      grad->row(b) = (z.array() - lse).exp().matrix();
      (*grad)(b, y) -= 1.0;
    }
  }
  if (grad) *grad /= static_cast<double>(batch);
  return total / static_cast<double>(batch);
}

double ce_loss(const Matrix& logits, std::span<const int> labels) { return softmax_xent(logits, labels, {}); }

double la_loss(const Matrix& logits, std::span<const int> labels, const ClassPriors& priors) {
  std::vector<double> offsets(priors.num_classes());
  for (std::size_t j = 0; j < offsets.size(); ++j) offsets[j] = std::log(priors[j]);
  return softmax_xent(logits, labels, offsets);
}

std::vector<double> cb_sampling_weights(std::span<const int> labels, std::span<const std::int64_t> counts) {
  if (labels.empty()) fail(Errc::empty_input, "no samples to weight");
  std::vector<double> w(labels.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    if (c >= counts.size() || counts[c] < 1) fail(Errc::invalid_spec, "label without a class count");
    w[i] = 1.0 / static_cast<double>(counts[c]);
    sum += w[i];
  }
  for (auto& x : w) x /= sum;
  return w;
}

}  // namespace ltsoups
