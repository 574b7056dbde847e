#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ltsoups/losses.hpp"
#include "ltsoups/types.hpp"

namespace ltsoups {

/// Residual MLP shape: dim -> hidden[0] -> ... -> hidden.back() -> dim.
struct BackboneConfig {
  int dim = 64;
  std::vector<int> hidden{256};
  bool residual = true;

  void validate() const;
  int num_linear() const { return static_cast<int>(hidden.size()) + 1; }
  int in_dim(int layer) const { return layer == 0 ? dim : hidden[static_cast<std::size_t>(layer - 1)]; }
  int out_dim(int layer) const {
    return layer == num_linear() - 1 ? dim : hidden[static_cast<std::size_t>(layer)];
  }
  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

struct TensorShape {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

struct Range {
  std::size_t offset = 0;
  std::size_t size = 0;
  std::size_t end() const { return offset + size; }
};

/// Flat parameter layout: for each linear layer its weight (out x in) then its
/// bias (out x 1), followed by the prototypes (K x dim) and the scalar
/// log-temperature.
class Layout {
 public:
  Layout() = default;
  Layout(const BackboneConfig& backbone, int num_classes);
  // Rebuilds a layout from a tensor shape list; throws format-error if the
  // shapes do not describe a residual backbone plus prototype head.
  static Layout from_shapes(std::vector<TensorShape> shapes);

  const std::vector<TensorShape>& shapes() const { return shapes_; }
  std::size_t size() const { return total_; }
  std::size_t offset(std::size_t tensor) const { return offsets_[tensor]; }
  int num_linear() const { return static_cast<int>((shapes_.size() - 2) / 2); }

  Range weight(int layer) const;
  Range bias(int layer) const;
  Range backbone() const;
  Range prototypes() const;
  Range temperature() const;

  friend bool operator==(const Layout& a, const Layout& b) { return a.shapes_ == b.shapes_; }

 private:
  std::vector<TensorShape> shapes_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

/// Backbone plus prototypical head stored as one contiguous vector.
class ModelWeights {
 public:
  ModelWeights() = default;
  ModelWeights(BackboneConfig backbone, int num_classes);

  const BackboneConfig& backbone_config() const { return backbone_; }
  const Layout& layout() const { return layout_; }
  int num_classes() const { return num_classes_; }
  int dim() const { return backbone_.dim; }

  Vector& flat() { return flat_; }
  const Vector& flat() const { return flat_; }

  Eigen::Map<Matrix> weight(int layer);
  Eigen::Map<const Matrix> weight(int layer) const;
  Eigen::Map<Vector> bias(int layer);
  Eigen::Map<const Vector> bias(int layer) const;
  Eigen::Map<Matrix> prototypes();
  Eigen::Map<const Matrix> prototypes() const;
  double& log_temperature() { return flat_[static_cast<Eigen::Index>(layout_.temperature().offset)]; }
  double log_temperature() const { return flat_[static_cast<Eigen::Index>(layout_.temperature().offset)]; }
  double logit_scale() const;

  auto segment(Range r) { return flat_.segment(static_cast<Eigen::Index>(r.offset), static_cast<Eigen::Index>(r.size)); }
  auto segment(Range r) const {
    return flat_.segment(static_cast<Eigen::Index>(r.offset), static_cast<Eigen::Index>(r.size));
  }

  bool all_finite() const { return flat_.allFinite(); }

 private:
  BackboneConfig backbone_;
  int num_classes_ = 0;
  Layout layout_;
  Vector flat_;
};

void require_same_layout(const ModelWeights& a, const ModelWeights& b);

/// Pretrained stand-in: backbone is the identity (last layer zero), the
/// prototypes are L2-normalized noisy anchors and the logit scale is
/// `logit_scale`.
ModelWeights init_pretrained(const BackboneConfig& config, const Matrix& anchor_means, double anchor_noise,
                             std::uint64_t seed, double logit_scale = 16.0);

Matrix backbone_features(const ModelWeights& m, const Matrix& x);
Matrix forward(const ModelWeights& m, const Matrix& x);

struct LossAndGrad {
  double loss = 0.0;
  Vector grad;
};

// Mean loss over the batch and its gradient in the flat layout.
LossAndGrad loss_and_grads(const ModelWeights& m, const Matrix& x, std::span<const int> labels,
                           const LossSpec& loss);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

class AdamW {
 public:
  AdamW(std::size_t num_params, AdamWConfig config);

  // Decoupled decay first, then the bias-corrected adaptive step.
  void step(Eigen::Ref<Vector> params, const Vector& grads, double lr);
  std::int64_t steps() const { return t_; }

 private:
  AdamWConfig config_;
  Vector m_;
  Vector v_;
  std::int64_t t_ = 0;
};

struct LRSchedule {
  double max_lr = 3e-4;
  std::int64_t total_steps = 0;
  std::int64_t warmup_steps = 0;
  double floor = 3e-5;

  // Warmup of max(min_warmup, 0.01 * total) steps, clamped to total; floor = fraction * max_lr.
  static LRSchedule make(double max_lr, std::int64_t total_steps, double floor_fraction = 0.1,
                         std::int64_t min_warmup = 100);
};

double lr_at(const LRSchedule& s, std::int64_t step);

double weight_distance(const ModelWeights& a, const ModelWeights& b);

struct TrainConfig {
  double lr_max = 1.5e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int batch_size = 128;
  int epochs = 30;
  std::int64_t min_warmup_steps = 100;
  double lr_floor_fraction = 0.1;
  LossKind loss = LossKind::la;
  double ema_mu = 0.99;
  std::uint64_t seed = 0;

  void validate() const;
  AdamWConfig adamw() const { return {beta1, beta2, 1e-8, weight_decay}; }
};

}  // namespace ltsoups
