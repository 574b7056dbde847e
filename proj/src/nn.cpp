#include "ltsoups/nn.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "ltsoups/error.hpp"
#include "ltsoups/rng.hpp"

namespace ltsoups {

void BackboneConfig::validate() const {
  if (dim < 1) fail(Errc::invalid_spec, "backbone dim must be >= 1");
  for (int h : hidden)
    if (h < 1) fail(Errc::invalid_spec, "hidden widths must be >= 1");
}

Layout::Layout(const BackboneConfig& backbone, int num_classes) {
  backbone.validate();
  if (num_classes < 1) fail(Errc::invalid_spec, "model needs at least one class");
  for (int l = 0; l < backbone.num_linear(); ++l) {
    const auto out = static_cast<std::uint32_t>(backbone.out_dim(l));
    shapes_.push_back({out, static_cast<std::uint32_t>(backbone.in_dim(l))});
    shapes_.push_back({out, 1});
  }
  shapes_.push_back({static_cast<std::uint32_t>(num_classes), static_cast<std::uint32_t>(backbone.dim)});
  shapes_.push_back({1, 1});
  for (const auto& s : shapes_) {
    offsets_.push_back(total_);
    total_ += s.size();
  }
}

Layout Layout::from_shapes(std::vector<TensorShape> shapes) {
  if (shapes.size() < 4 || shapes.size() % 2 != 0) fail(Errc::format_error, "bad tensor count in layout");
  const std::size_t linear = (shapes.size() - 2) / 2;
  BackboneConfig cfg;
  cfg.dim = static_cast<int>(shapes[0].cols);
  cfg.hidden.clear();
  for (std::size_t l = 0; l + 1 < linear; ++l) cfg.hidden.push_back(static_cast<int>(shapes[2 * l].rows));
  const auto& protos = shapes[shapes.size() - 2];
  Layout rebuilt(cfg, static_cast<int>(protos.rows));
  if (rebuilt.shapes_ != shapes) fail(Errc::format_error, "tensor shapes do not form a residual backbone");
  return rebuilt;
}

Range Layout::weight(int layer) const {
  const auto t = static_cast<std::size_t>(2 * layer);
  return {offsets_[t], shapes_[t].size()};
}
Range Layout::bias(int layer) const {
  const auto t = static_cast<std::size_t>(2 * layer + 1);
  return {offsets_[t], shapes_[t].size()};
}
Range Layout::backbone() const { return {0, offsets_[shapes_.size() - 2]}; }
Range Layout::prototypes() const {
  const auto t = shapes_.size() - 2;
  return {offsets_[t], shapes_[t].size()};
}
Range Layout::temperature() const { return {offsets_.back(), 1}; }

ModelWeights::ModelWeights(BackboneConfig backbone, int num_classes)
    : backbone_(std::move(backbone)), num_classes_(num_classes), layout_(backbone_, num_classes) {
  flat_ = Vector::Zero(static_cast<Eigen::Index>(layout_.size()));
}

Eigen::Map<Matrix> ModelWeights::weight(int layer) {
  const auto& s = layout_.shapes()[static_cast<std::size_t>(2 * layer)];
  return {flat_.data() + layout_.weight(layer).offset, s.rows, s.cols};
}
Eigen::Map<const Matrix> ModelWeights::weight(int layer) const {
  const auto& s = layout_.shapes()[static_cast<std::size_t>(2 * layer)];
  return {flat_.data() + layout_.weight(layer).offset, s.rows, s.cols};
}
Eigen::Map<Vector> ModelWeights::bias(int layer) {
  const auto r = layout_.bias(layer);
  return {flat_.data() + r.offset, static_cast<Eigen::Index>(r.size)};
}
Eigen::Map<const Vector> ModelWeights::bias(int layer) const {
  const auto r = layout_.bias(layer);
  return {flat_.data() + r.offset, static_cast<Eigen::Index>(r.size)};
}
Eigen::Map<Matrix> ModelWeights::prototypes() {
  return {flat_.data() + layout_.prototypes().offset, num_classes_, backbone_.dim};
}
Eigen::Map<const Matrix> ModelWeights::prototypes() const {
  return {flat_.data() + layout_.prototypes().offset, num_classes_, backbone_.dim};
}
double ModelWeights::logit_scale() const { return std::exp(-log_temperature()); }

void require_same_layout(const ModelWeights& a, const ModelWeights& b) {
  if (!(a.layout() == b.layout()) || a.flat().size() != b.flat().size())
    fail(Errc::layout_mismatch, "models have different parameter layouts");
}

ModelWeights init_pretrained(const BackboneConfig& config, const Matrix& anchor_means, double anchor_noise,
                             std::uint64_t seed, double logit_scale) {
  if (anchor_means.cols() != config.dim)
    fail(Errc::shape_mismatch, "anchor dimension " + std::to_string(anchor_means.cols()) +
                                   " does not match backbone dim " + std::to_string(config.dim));
  if (anchor_means.rows() < 1) fail(Errc::shape_mismatch, "anchors need at least one class");
  if (!(logit_scale > 0.0)) fail(Errc::invalid_spec, "logit scale must be positive");
  ModelWeights m(config, static_cast<int>(anchor_means.rows()));
  Rng rng(derive_seed(seed, "init"));
  std::normal_distribution<double> normal;
  // Hidden layers random; the last linear layer stays zero so the residual
  // backbone starts as the identity.
  for (int l = 0; l + 1 < config.num_linear(); ++l) {
    auto w = m.weight(l);
    const double std = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = std * normal(rng);
  }
  auto protos = m.prototypes();
  for (Eigen::Index c = 0; c < protos.rows(); ++c) {
    for (Eigen::Index j = 0; j < protos.cols(); ++j) protos(c, j) = anchor_means(c, j) + anchor_noise * normal(rng);
    const double n = protos.row(c).norm();
    if (!(n > 0.0)) fail(Errc::invalid_spec, "zero prototype");
    protos.row(c) /= n;
  }
  m.log_temperature() = -std::log(logit_scale);
  return m;
}

namespace {

constexpr double kNormEps = 1e-12;

double gelu(double a) { return 0.5 * a * std::erfc(-a / std::numbers::sqrt2); }
double gelu_grad(double a) {
  const double cdf = 0.5 * std::erfc(-a / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * a * a) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + a * pdf;
}

struct Trace {
  std::vector<Matrix> inputs;       // input of each linear layer
  std::vector<Matrix> preacts;      // pre-activation of each linear layer
  Matrix z;                          // backbone output
  Eigen::VectorXd z_norm;
  Matrix z_unit;
  Eigen::VectorXd proto_norm;
  Matrix proto_unit;
  Matrix cosine;                     // B x K
};

void run_forward(const ModelWeights& m, const Matrix& x, Trace& t) {
  if (x.cols() != m.dim())
    fail(Errc::shape_mismatch, "input has " + std::to_string(x.cols()) + " columns, model expects " +
                                   std::to_string(m.dim()));
  if (!x.allFinite()) fail(Errc::non_finite_input, "input batch contains NaN or Inf");
  const int layers = m.backbone_config().num_linear();
  t.inputs.resize(static_cast<std::size_t>(layers));
  t.preacts.resize(static_cast<std::size_t>(layers));
  Matrix h = x;
  for (int l = 0; l < layers; ++l) {
    auto& a = t.preacts[static_cast<std::size_t>(l)];
    a = h * m.weight(l).transpose();
    a.rowwise() += m.bias(l).transpose();
    t.inputs[static_cast<std::size_t>(l)] = std::move(h);
    if (l + 1 < layers) h = a.unaryExpr([](double v) { return gelu(v); });
  }
  t.z = t.preacts.back();
  if (m.backbone_config().residual) t.z += x;

  t.z_norm = t.z.rowwise().norm().cwiseMax(kNormEps);
  t.z_unit = t.z.array().colwise() / t.z_norm.array();
  const auto protos = m.prototypes();
  t.proto_norm = protos.rowwise().norm().cwiseMax(kNormEps);
  t.proto_unit = protos.array().colwise() / t.proto_norm.array();
  t.cosine = t.z_unit * t.proto_unit.transpose();
}

}  // namespace

Matrix backbone_features(const ModelWeights& m, const Matrix& x) {
  Trace t;
  run_forward(m, x, t);
  return t.z;
}

Matrix forward(const ModelWeights& m, const Matrix& x) {
  Trace t;
  run_forward(m, x, t);
  return m.logit_scale() * t.cosine;
}

LossAndGrad loss_and_grads(const ModelWeights& m, const Matrix& x, std::span<const int> labels,
                           const LossSpec& loss) {
  loss.validate(static_cast<std::size_t>(m.num_classes()));
  Trace t;
  run_forward(m, x, t);
  const double scale = m.logit_scale();
  const Matrix logits = scale * t.cosine;

  std::vector<double> offsets;
  if (loss.kind == LossKind::la) {
    offsets.resize(loss.priors->num_classes());
    for (std::size_t j = 0; j < offsets.size(); ++j) offsets[j] = std::log((*loss.priors)[j]);
  }
  Matrix g_logits;
  LossAndGrad out;
  out.loss = softmax_xent(logits, labels, offsets, &g_logits);
  if (!std::isfinite(out.loss)) fail(Errc::diverged, "non-finite loss");

  const Layout& layout = m.layout();
  out.grad = Vector::Zero(static_cast<Eigen::Index>(layout.size()));
  auto seg = [&](Range r) {
    return out.grad.segment(static_cast<Eigen::Index>(r.offset), static_cast<Eigen::Index>(r.size));
  };

  // logits = exp(-lt) * cosine
  seg(layout.temperature())[0] = -(g_logits.array() * logits.array()).sum();

  const Matrix g_cos = scale * g_logits;
  const Matrix g_zunit = g_cos * t.proto_unit;             // B x d
  const Matrix g_punit = g_cos.transpose() * t.z_unit;     // K x d

  // Through u = v / |v|: dv = (du - u <u, du>) / |v|.
  Matrix g_protos = g_punit - (t.proto_unit.array().colwise() *
                               (t.proto_unit.cwiseProduct(g_punit)).rowwise().sum().array()).matrix();
  g_protos.array().colwise() /= t.proto_norm.array();
  Eigen::Map<Matrix>(seg(layout.prototypes()).data(), m.num_classes(), m.dim()) = g_protos;

  Matrix g_a = g_zunit - (t.z_unit.array().colwise() *
                          (t.z_unit.cwiseProduct(g_zunit)).rowwise().sum().array()).matrix();
  g_a.array().colwise() /= t.z_norm.array();

  for (int l = m.backbone_config().num_linear() - 1; l >= 0; --l) {
    const auto& in = t.inputs[static_cast<std::size_t>(l)];
    const Range wr = layout.weight(l);
    Eigen::Map<Matrix>(seg(wr).data(), g_a.cols(), in.cols()) = g_a.transpose() * in;
    seg(layout.bias(l)) = g_a.colwise().sum().transpose();
    if (l == 0) break;
    Matrix g_h = g_a * m.weight(l);
    const auto& prev = t.preacts[static_cast<std::size_t>(l - 1)];
    g_a = g_h.cwiseProduct(prev.unaryExpr([](double v) { return gelu_grad(v); }));
  }
  return out;
}

AdamW::AdamW(std::size_t num_params, AdamWConfig config)
    : config_(config),
      m_(Vector::Zero(static_cast<Eigen::Index>(num_params))),
      v_(Vector::Zero(static_cast<Eigen::Index>(num_params))) {}

void AdamW::step(Eigen::Ref<Vector> params, const Vector& grads, double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    fail(Errc::shape_mismatch, "optimizer state does not match parameter count");
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  m_ = b1 * m_ + (1.0 - b1) * grads;
  v_ = b2 * v_ + (1.0 - b2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  if (config_.weight_decay != 0.0) params *= (1.0 - lr * config_.weight_decay);
  params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.eps);
}

LRSchedule LRSchedule::make(double max_lr, std::int64_t total_steps, double floor_fraction,
                            std::int64_t min_warmup) {
  if (!(floor_fraction > 0.0 && floor_fraction <= 1.0))
    fail(Errc::invalid_spec, "lr floor fraction must be in (0, 1]");
  if (total_steps < 0) fail(Errc::invalid_spec, "total steps must be >= 0");
  LRSchedule s;
  s.max_lr = max_lr;
  s.total_steps = total_steps;
  const auto warm = std::max<std::int64_t>(min_warmup, static_cast<std::int64_t>(0.01 * static_cast<double>(total_steps)));
  s.warmup_steps = std::min(warm, total_steps);
  s.floor = floor_fraction * max_lr;
  return s;
}

double lr_at(const LRSchedule& s, std::int64_t step) {
  if (step < 0 || step > s.total_steps) fail(Errc::invalid_spec, "step outside schedule");
  if (step <= s.warmup_steps) {
    if (s.warmup_steps == 0) return s.max_lr;
    return s.max_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  }
  const double progress =
      static_cast<double>(step - s.warmup_steps) / static_cast<double>(s.total_steps - s.warmup_steps);
  return s.floor + (s.max_lr - s.floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void TrainConfig::validate() const {
  if (!(lr_max > 0.0)) fail(Errc::validation_error, "train.lr_max must be > 0");
  if (!(weight_decay >= 0.0)) fail(Errc::validation_error, "train.weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail(Errc::validation_error, "train.beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail(Errc::validation_error, "train.beta2 must lie in [0, 1)");
  if (batch_size < 1) fail(Errc::validation_error, "train.batch_size must be >= 1");
  if (epochs < 0) fail(Errc::validation_error, "train.epochs must be >= 0");
  if (min_warmup_steps < 0) fail(Errc::validation_error, "train.min_warmup_steps must be >= 0");
  if (!(lr_floor_fraction > 0.0 && lr_floor_fraction <= 1.0))
    fail(Errc::validation_error, "train.lr_floor_fraction must lie in (0, 1]");
  if (!(ema_mu > 0.0 && ema_mu <= 1.0)) fail(Errc::validation_error, "train.ema_mu must lie in (0, 1]");
}

double weight_distance(const ModelWeights& a, const ModelWeights& b) {
  require_same_layout(a, b);
  return (a.flat() - b.flat()).norm();
}

}  // namespace ltsoups
