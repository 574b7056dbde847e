#include "ltsoups/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "ltsoups/error.hpp"

namespace ltsoups {

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  fail(Errc::parse_error,
       std::string(key) + ": expected " + std::string(expected) + ", got '" + std::string(value) + "'");
}

template <typename T>
T parse_number(std::string_view key, std::string_view value, std::string_view expected) {
  value = trim(value);
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end || value.empty()) bad_value(key, value, expected);
  return out;
}

double to_double(std::string_view key, std::string_view v) { return parse_number<double>(key, v, "a number"); }
std::int64_t to_int(std::string_view key, std::string_view v) {
  return parse_number<std::int64_t>(key, v, "an integer");
}
std::uint64_t to_u64(std::string_view key, std::string_view v) {
  return parse_number<std::uint64_t>(key, v, "an unsigned integer");
}

bool to_bool(std::string_view key, std::string_view v) {
  v = trim(v);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "true or false");
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> items;
  v = trim(v);
  if (v.empty()) return items;
  std::size_t start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    items.push_back(trim(v.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return items;
}

std::string fmt(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

template <typename T>
std::string fmt_list(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_same_v<T, std::string>)
      out += xs[i];
    else if constexpr (std::is_floating_point_v<T>)
      out += fmt(xs[i]);
    else
      out += std::to_string(xs[i]);
  }
  return out;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Entry {
  const char* key;
  std::function<void(Config&, std::string_view)> set;
  std::function<std::string(const Config&)> get;
};

const std::vector<Entry>& entries() {
  using K = std::string_view;
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    auto num = [&t](const char* key, auto member) {
      t.push_back({key, [key, member](Config& c, K v) { member(c) = to_double(key, v); },
                   [member](const Config& c) { return fmt(member(const_cast<Config&>(c))); }});
    };
    auto integer = [&t](const char* key, auto member) {
      t.push_back({key,
                   [key, member](Config& c, K v) {
                     using T = std::remove_reference_t<decltype(member(c))>;
                     const auto x = to_int(key, v);
                     if (x < std::numeric_limits<T>::min() || x > std::numeric_limits<T>::max())
                       bad_value(key, v, "an integer in range");
                     member(c) = static_cast<T>(x);
                   },
                   [member](const Config& c) { return std::to_string(member(const_cast<Config&>(c))); }});
    };
    auto boolean = [&t](const char* key, auto member) {
      t.push_back({key, [key, member](Config& c, K v) { member(c) = to_bool(key, v); },
                   [member](const Config& c) { return fmt_bool(member(const_cast<Config&>(c))); }});
    };

    integer("data.num_classes", [](Config& c) -> int& { return c.experiment.benchmark.longtail.num_classes; });
    integer("data.n_max", [](Config& c) -> std::int64_t& { return c.experiment.benchmark.longtail.n_max; });
    num("data.rho", [](Config& c) -> double& { return c.experiment.benchmark.longtail.rho; });
    t.push_back({"data.eta",
                 [](Config& c, K v) {
                   auto& eta = c.experiment.benchmark.longtail.eta;
                   if (trim(v) == "none")
                     eta.reset();
                   else
                     eta = to_double("data.eta", v);
                 },
                 [](const Config& c) {
                   const auto& eta = c.experiment.benchmark.longtail.eta;
                   return eta ? fmt(*eta) : std::string("none");
                 }});
    integer("data.tau", [](Config& c) -> std::int64_t& { return c.experiment.benchmark.longtail.tau; });
    t.push_back({"data.dim",
                 [](Config& c, K v) {
                   const auto d = to_int("data.dim", v);
                   if (d < 1 || d > 1 << 20) bad_value("data.dim", v, "a positive integer");
                   c.experiment.benchmark.synth.dim = static_cast<int>(d);
                   c.experiment.benchmark.backbone.dim = static_cast<int>(d);
                 },
                 [](const Config& c) { return std::to_string(c.experiment.benchmark.synth.dim); }});
    num("data.class_sep", [](Config& c) -> double& { return c.experiment.benchmark.synth.class_sep; });
    num("data.noise_sigma", [](Config& c) -> double& { return c.experiment.benchmark.synth.noise_sigma; });
    num("data.shift", [](Config& c) -> double& { return c.experiment.benchmark.synth.shift; });
    integer("data.val_per_class", [](Config& c) -> std::int64_t& { return c.experiment.benchmark.val_per_class; });
    integer("data.test_per_class", [](Config& c) -> std::int64_t& { return c.experiment.benchmark.test_per_class; });
    num("data.anchor_noise", [](Config& c) -> double& { return c.experiment.benchmark.anchor_noise; });

    t.push_back({"model.hidden",
                 [](Config& c, K v) {
                   std::vector<int> widths;
                   for (auto item : split_list(v)) {
                     const auto w = to_int("model.hidden", item);
                     if (w < 1 || w > 1 << 20) bad_value("model.hidden", item, "a positive width");
                     widths.push_back(static_cast<int>(w));
                   }
                   if (widths.empty()) bad_value("model.hidden", v, "at least one width");
                   c.experiment.benchmark.backbone.hidden = std::move(widths);
                 },
                 [](const Config& c) { return fmt_list(c.experiment.benchmark.backbone.hidden); }});
    num("model.logit_scale", [](Config& c) -> double& { return c.experiment.benchmark.logit_scale; });

    num("train.lr_max", [](Config& c) -> double& { return c.experiment.train.lr_max; });
    num("train.weight_decay", [](Config& c) -> double& { return c.experiment.train.weight_decay; });
    num("train.beta1", [](Config& c) -> double& { return c.experiment.train.beta1; });
    num("train.beta2", [](Config& c) -> double& { return c.experiment.train.beta2; });
    integer("train.batch_size", [](Config& c) -> int& { return c.experiment.train.batch_size; });
    integer("train.epochs", [](Config& c) -> int& { return c.experiment.train.epochs; });
    integer("train.min_warmup_steps", [](Config& c) -> std::int64_t& { return c.experiment.train.min_warmup_steps; });
    num("train.lr_floor_fraction", [](Config& c) -> double& { return c.experiment.train.lr_floor_fraction; });
    t.push_back({"train.loss",
                 [](Config& c, K v) {
                   try {
                     c.experiment.train.loss = parse_loss(trim(v));
                   } catch (const Error&) {
                     bad_value("train.loss", v, "one of ce, la, cb");
                   }
                 },
                 [](const Config& c) { return std::string(loss_name(c.experiment.train.loss)); }});
    num("train.ema_mu", [](Config& c) -> double& { return c.experiment.train.ema_mu; });

    integer("schedule.levels", [](Config& c) -> int& { return c.experiment.levels; });
    integer("schedule.bootstraps", [](Config& c) -> int& { return c.experiment.bootstraps; });

    num("merge.lambda", [](Config& c) -> double& { return c.experiment.merge.lambda; });
    boolean("merge.include_pretrained",
            [](Config& c) -> bool& { return c.experiment.merge.include_pretrained_as_theta0; });

    integer("lora.rank", [](Config& c) -> int& { return c.experiment.lora.rank; });
    num("lora.alpha", [](Config& c) -> double& { return c.experiment.lora.alpha; });
    boolean("lora.train_prototypes", [](Config& c) -> bool& { return c.experiment.lora.train_prototypes; });

    integer("soups.count", [](Config& c) -> int& { return c.experiment.soups_count; });

    integer("eval.many_min", [](Config& c) -> std::int64_t& { return c.experiment.thresholds.many_min; });
    integer("eval.few_max", [](Config& c) -> std::int64_t& { return c.experiment.thresholds.few_max; });

    t.push_back({"grid.rho",
                 [](Config& c, K v) {
                   std::vector<double> xs;
                   for (auto item : split_list(v)) xs.push_back(to_double("grid.rho", item));
                   c.grid.rho_values = std::move(xs);
                 },
                 [](const Config& c) { return fmt_list(c.grid.rho_values); }});
    t.push_back({"grid.eta",
                 [](Config& c, K v) {
                   std::vector<double> xs;
                   for (auto item : split_list(v)) xs.push_back(to_double("grid.eta", item));
                   c.grid.eta_values = std::move(xs);
                 },
                 [](const Config& c) { return fmt_list(c.grid.eta_values); }});
    t.push_back({"grid.methods",
                 [](Config& c, K v) {
                   std::vector<std::string> xs;
                   for (auto item : split_list(v)) xs.emplace_back(item);
                   c.grid.methods = std::move(xs);
                 },
                 [](const Config& c) { return fmt_list(c.grid.methods); }});
    integer("grid.repeats", [](Config& c) -> int& { return c.grid.repeats; });

    t.push_back({"run.seed", [](Config& c, K v) { c.experiment.seed = to_u64("run.seed", v); },
                 [](const Config& c) { return std::to_string(c.experiment.seed); }});
    integer("run.workers", [](Config& c) -> int& { return c.experiment.workers; });
    boolean("run.skip_failed", [](Config& c) -> bool& { return c.experiment.skip_failed; });
    return t;
  }();
  return table;
}

const Entry* find_entry(std::string_view key) {
  for (const auto& e : entries())
    if (key == e.key) return &e;
  return nullptr;
}

}  // namespace

void GridSpec::validate() const {
  if (rho_values.empty()) fail(Errc::validation_error, "grid.rho must list at least one value");
  if (eta_values.empty()) fail(Errc::validation_error, "grid.eta must list at least one value");
  if (methods.empty()) fail(Errc::validation_error, "grid.methods must list at least one method");
  for (double r : rho_values)
    if (!(r >= 1.0)) fail(Errc::validation_error, "grid.rho values must be >= 1");
  for (double e : eta_values)
    if (!(e > 0.0)) fail(Errc::validation_error, "grid.eta values must be > 0");
  for (const auto& m : methods)
    if (!is_known_method(m)) fail(Errc::validation_error, "grid.methods: unknown method '" + m + "'");
  if (repeats < 1) fail(Errc::validation_error, "grid.repeats must be >= 1");
}

void set_config_value(Config& config, std::string_view key, std::string_view value) {
  const Entry* e = find_entry(trim(key));
  if (!e) fail(Errc::parse_error, "unknown key '" + std::string(trim(key)) + "'");
  e->set(config, value);
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& e : entries()) out.emplace_back(e.key);
    return out;
  }();
  return keys;
}

std::string config_value(const Config& config, std::string_view key) {
  const Entry* e = find_entry(key);
  if (!e) fail(Errc::parse_error, "unknown key '" + std::string(key) + "'");
  return e->get(config);
}

Config parse_config_text(std::string_view text, Config base) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(Errc::parse_error, where + "expected 'section.key = value'");
    const auto key = trim(line.substr(0, eq));
    if (key.find('.') == std::string_view::npos) fail(Errc::parse_error, where + "key '" + std::string(key) + "' has no section");
    try {
      set_config_value(base, key, line.substr(eq + 1));
    } catch (const Error& e) {
      fail(Errc::parse_error, where + e.detail());
    }
  }
  return base;
}

Config parse_config(const std::filesystem::path& path, Config base) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

void apply_seed_env(Config& config) {
  const char* env = std::getenv("LTSOUPS_SEED");
  if (!env) return;
  try {
    config.experiment.seed = to_u64("LTSOUPS_SEED", env);
  } catch (const Error& e) {
    fail(Errc::validation_error, e.detail());
  }
}

void validate_config(const Config& config) {
  const auto& x = config.experiment;
  const auto& b = x.benchmark;
  const auto& lt = b.longtail;
  auto check = [](bool ok, const char* msg) {
    if (!ok) fail(Errc::validation_error, msg);
  };
  check(lt.num_classes >= 2, "data.num_classes must be >= 2");
  check(lt.rho >= 1.0, "data.rho must be >= 1");
  check(static_cast<double>(lt.n_max) >= lt.rho, "data.n_max must be >= data.rho");
  check(!lt.eta || *lt.eta > 0.0, "data.eta must be > 0");
  check(lt.tau >= 1, "data.tau must be >= 1");
  check(b.synth.dim >= 2, "data.dim must be >= 2");
  check(b.synth.class_sep > 0.0, "data.class_sep must be > 0");
  check(b.synth.noise_sigma > 0.0, "data.noise_sigma must be > 0");
  check(b.synth.shift >= 0.0, "data.shift must be >= 0");
  check(b.val_per_class >= 1, "data.val_per_class must be >= 1");
  check(b.test_per_class >= 1, "data.test_per_class must be >= 1");
  check(b.anchor_noise >= 0.0, "data.anchor_noise must be >= 0");
  check(b.logit_scale > 0.0, "model.logit_scale must be > 0");
  x.train.validate();
  check(x.levels >= 1, "schedule.levels must be >= 1");
  check(x.bootstraps >= 1, "schedule.bootstraps must be >= 1");
  x.merge.validate();
  x.lora.validate(b.backbone);
  check(x.soups_count >= 1, "soups.count must be >= 1");
  check(x.thresholds.many_min >= x.thresholds.few_max, "eval.many_min must be >= eval.few_max");
  check(x.workers >= 1, "run.workers must be >= 1");
  config.grid.validate();
}

std::string format_config(const Config& config) {
  std::string out;
  for (const auto& e : entries()) out += std::string(e.key) + " = " + e.get(config) + "\n";
  return out;
}

}  // namespace ltsoups
