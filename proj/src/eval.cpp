#include "ltsoups/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ltsoups/error.hpp"

namespace ltsoups {

void GroupThresholds::validate() const {
  if (many_min < few_max) fail(Errc::validation_error, "many_min must be >= few_max");
}

std::vector<int> predictions(const Matrix& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index b = 0; b < logits.rows(); ++b) {
    Eigen::Index arg = 0;
    logits.row(b).maxCoeff(&arg);
    out[static_cast<std::size_t>(b)] = static_cast<int>(arg);
  }
  return out;
}

std::vector<double> per_class_accuracy(std::span<const int> preds, std::span<const int> labels, int num_classes) {
  if (preds.size() != labels.size()) fail(Errc::shape_mismatch, "predictions vs labels");
  std::vector<double> correct(static_cast<std::size_t>(num_classes), 0.0);
  std::vector<double> seen(static_cast<std::size_t>(num_classes), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    if (labels[i] < 0 || y >= seen.size()) fail(Errc::invalid_spec, "label out of range");
    seen[y] += 1.0;
    if (preds[i] == labels[i]) correct[y] += 1.0;
  }
  std::vector<double> acc(seen.size(), std::nan(""));
  for (std::size_t c = 0; c < seen.size(); ++c)
    if (seen[c] > 0.0) acc[c] = correct[c] / seen[c];
  return acc;
}

double balanced_accuracy(std::span<const int> preds, std::span<const int> labels, int num_classes) {
  const auto acc = per_class_accuracy(preds, labels, num_classes);
  double sum = 0.0;
  for (std::size_t c = 0; c < acc.size(); ++c) {
    if (std::isnan(acc[c])) fail(Errc::missing_class, "class " + std::to_string(c) + " absent from labels");
    sum += acc[c];
  }
  return sum / static_cast<double>(acc.size());
}

GroupAccuracies group_accuracies(std::span<const int> preds, std::span<const int> labels,
                                 std::span<const std::int64_t> train_counts, const GroupThresholds& thresholds) {
  thresholds.validate();
  const auto acc = per_class_accuracy(preds, labels, static_cast<int>(train_counts.size()));
  struct Acc {
    double sum = 0.0;
    int n = 0;
    void add(double v) {
      if (!std::isnan(v)) sum += v, ++n;
    }
    std::optional<double> mean() const { return n ? std::optional<double>(sum / n) : std::nullopt; }
  } many, medium, few, head, tail;
  for (std::size_t c = 0; c < acc.size(); ++c) {
    const auto n = train_counts[c];
    if (n > thresholds.many_min) many.add(acc[c]);
    else if (n < thresholds.few_max) few.add(acc[c]);
    else medium.add(acc[c]);
    (n > thresholds.tau ? head : tail).add(acc[c]);
  }
  return {many.mean(), medium.mean(), few.mean(), head.mean(), tail.mean()};
}

Matrix softmax(const Matrix& logits, double temperature) {
  Matrix p = logits / temperature;
  for (Eigen::Index b = 0; b < p.rows(); ++b) {
    const double mx = p.row(b).maxCoeff();
    p.row(b) = (p.row(b).array() - mx).exp().matrix();
    p.row(b) /= p.row(b).sum();
  }
  return p;
}

namespace {

double scaled_nll(const Matrix& logits, std::span<const int> labels, double temperature) {
  double total = 0.0;
  for (Eigen::Index b = 0; b < logits.rows(); ++b) {
    const auto z = (logits.row(b) / temperature).eval();
    const double mx = z.maxCoeff();
    const double lse = mx + std::log((z.array() - mx).exp().sum());
    total += lse - z[labels[static_cast<std::size_t>(b)]];
  }
  return total / static_cast<double>(logits.rows());
}

}  // namespace

TemperatureFit fit_temperature(const Matrix& logits, std::span<const int> labels, double tol) {
  if (logits.rows() == 0) fail(Errc::empty_input, "no validation logits");
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) fail(Errc::shape_mismatch, "logits vs labels");
  const double lo0 = std::log(0.05);
  const double hi0 = std::log(20.0);
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = lo0, hi = hi0;
  double a = hi - invphi * (hi - lo);
  double b = lo + invphi * (hi - lo);
  double fa = scaled_nll(logits, labels, std::exp(a));
  double fb = scaled_nll(logits, labels, std::exp(b));
  while (hi - lo > tol) {
    if (fa < fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - invphi * (hi - lo);
      fa = scaled_nll(logits, labels, std::exp(a));
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + invphi * (hi - lo);
      fb = scaled_nll(logits, labels, std::exp(b));
    }
  }
  const double u = 0.5 * (lo + hi);
  return {std::exp(u), (u - lo0) < 2.0 * tol || (hi0 - u) < 2.0 * tol};
}

namespace {

// Per-bin confidence and correctness sums.
std::vector<ReliabilityBin> bin_sums(const Matrix& probs, std::span<const int> labels, int bins) {
  if (bins < 1) fail(Errc::invalid_spec, "ECE needs at least one bin");
  if (static_cast<std::size_t>(probs.rows()) != labels.size()) fail(Errc::shape_mismatch, "probs vs labels");
  if (probs.rows() == 0) fail(Errc::empty_input, "no samples");
  std::vector<ReliabilityBin> out(static_cast<std::size_t>(bins));
  for (int k = 0; k < bins; ++k) {
    out[static_cast<std::size_t>(k)].lo = static_cast<double>(k) / bins;
    out[static_cast<std::size_t>(k)].hi = static_cast<double>(k + 1) / bins;
  }
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index arg = 0;
    const double conf = probs.row(i).maxCoeff(&arg);
    // Bins are (k/B, (k+1)/B]; confidence 1.0 lands in the last bin.
    auto k = static_cast<int>(std::ceil(conf * bins)) - 1;
    auto& bin = out[static_cast<std::size_t>(std::clamp(k, 0, bins - 1))];
    bin.confidence += conf;
    bin.accuracy += (arg == labels[static_cast<std::size_t>(i)]) ? 1.0 : 0.0;
    ++bin.count;
  }
  return out;
}

}  // namespace

std::vector<ReliabilityBin> reliability_bins(const Matrix& probs, std::span<const int> labels, int bins) {
  auto out = bin_sums(probs, labels, bins);
  for (auto& b : out)
    if (b.count > 0) {
      b.confidence /= static_cast<double>(b.count);
      b.accuracy /= static_cast<double>(b.count);
    }
  return out;
}

double ece(const Matrix& probs, std::span<const int> labels, int bins) {
  double total = 0.0;
  for (const auto& b : bin_sums(probs, labels, bins)) total += std::abs(b.accuracy - b.confidence);
  return total / static_cast<double>(probs.rows());
}

double brier(const Matrix& probs, std::span<const int> labels) {
  if (static_cast<std::size_t>(probs.rows()) != labels.size()) fail(Errc::shape_mismatch, "probs vs labels");
  if (probs.rows() == 0) fail(Errc::empty_input, "no samples");
  double total = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    auto row = probs.row(i).eval();
    row[labels[static_cast<std::size_t>(i)]] -= 1.0;
    total += row.squaredNorm();
  }
  return total / static_cast<double>(probs.rows());
}

NllResult nll(const Matrix& probs, std::span<const int> labels) {
  if (static_cast<std::size_t>(probs.rows()) != labels.size()) fail(Errc::shape_mismatch, "probs vs labels");
  if (probs.rows() == 0) fail(Errc::empty_input, "no samples");
  NllResult r;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    double p = probs(i, labels[static_cast<std::size_t>(i)]);
    if (p < 1e-12) {
      p = 1e-12;
      ++r.clamped;
    }
    r.value -= std::log(p);
  }
  r.value /= static_cast<double>(probs.rows());
  return r;
}

Subset restrict_to_classes(const Matrix& probs, std::span<const int> labels, const std::vector<bool>& keep) {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (keep[static_cast<std::size_t>(labels[i])]) rows.push_back(static_cast<Eigen::Index>(i));
  Subset s;
  s.probs.resize(static_cast<Eigen::Index>(rows.size()), probs.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s.probs.row(static_cast<Eigen::Index>(i)) = probs.row(rows[i]);
    s.labels.push_back(labels[static_cast<std::size_t>(rows[i])]);
  }
  return s;
}

MetricsReport evaluate(const ModelWeights& model, const Dataset& test, const Dataset& val,
                       std::span<const std::int64_t> train_counts, const ModelWeights* reference,
                       const GroupThresholds& thresholds) {
  const int k = model.num_classes();
  if (static_cast<int>(train_counts.size()) != k) fail(Errc::shape_mismatch, "train counts vs model classes");
  MetricsReport r;
  const Matrix test_logits = forward(model, test.features());
  const auto preds = predictions(test_logits);
  r.bal_acc = balanced_accuracy(preds, test.labels(), k);
  r.groups = group_accuracies(preds, test.labels(), train_counts, thresholds);

  r.temperature = fit_temperature(forward(model, val.features()), val.labels()).temperature;
  const Matrix probs = softmax(test_logits, r.temperature);
  r.ece = ece(probs, test.labels());
  r.brier = brier(probs, test.labels());
  const auto all = nll(probs, test.labels());
  r.nll = all.value;
  r.nll_clamped = all.clamped;

  std::vector<bool> is_head(static_cast<std::size_t>(k));
  for (std::size_t c = 0; c < is_head.size(); ++c) is_head[c] = train_counts[c] > thresholds.tau;
  std::vector<bool> is_tail(is_head.size());
  for (std::size_t c = 0; c < is_head.size(); ++c) is_tail[c] = !is_head[c];
  if (auto h = restrict_to_classes(probs, test.labels(), is_head); !h.labels.empty()) {
    r.brier_head = brier(h.probs, h.labels);
    r.nll_head = nll(h.probs, h.labels).value;
  }
  if (auto t = restrict_to_classes(probs, test.labels(), is_tail); !t.labels.empty()) {
    r.brier_tail = brier(t.probs, t.labels);
    r.nll_tail = nll(t.probs, t.labels).value;
  }
  if (reference) r.weight_change = weight_distance(model, *reference);
  return r;
}

}  // namespace ltsoups
