#include <doctest.h>

#include <cstdlib>
#include <string>

#include "ltsoups/config.hpp"
#include "ltsoups/error.hpp"

using namespace ltsoups;

namespace {

Error error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected an error");
  return Error(Errc::io_error, "");
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("empty text keeps defaults") {
  Config d;
  Config c = parse_config_text("");
  CHECK(format_config(c) == format_config(d));
  CHECK(format_config(parse_config_text("# only a comment\n\n   \n")) == format_config(d));
}

TEST_CASE("values are parsed") {
  Config c = parse_config_text(
      "data.rho = 50   # trailing comment\n"
      "data.eta = 0.5\n"
      "model.hidden = 32, 16\n"
      "train.loss = ce\n"
      "merge.lambda = 0.3\n"
      "grid.rho = 50, 100\n"
      "grid.methods = full_ft,lt_soups\n"
      "run.skip_failed = true\n"
      "run.seed = 9\n");
  CHECK(c.experiment.benchmark.longtail.rho == 50.0);
  CHECK(*c.experiment.benchmark.longtail.eta == 0.5);
  CHECK(c.experiment.benchmark.backbone.hidden == std::vector<int>{32, 16});
  CHECK(c.experiment.train.loss == LossKind::ce);
  CHECK(c.experiment.merge.lambda == 0.3);
  CHECK(c.grid.rho_values == std::vector<double>{50.0, 100.0});
  CHECK(c.grid.methods == std::vector<std::string>{"full_ft", "lt_soups"});
  CHECK(c.experiment.skip_failed);
  CHECK(c.experiment.seed == 9);
  CHECK(!parse_config_text("data.eta = none").experiment.benchmark.longtail.eta);
  CHECK(parse_config_text("data.dim = 16").experiment.benchmark.backbone.dim == 16);
}

TEST_CASE("format round trips") {
  Config c = parse_config_text("data.rho = 25\nmerge.lambda = 0.45\ngrid.eta = 2, 0.5\nlora.rank = 2\n");
  CHECK(format_config(parse_config_text(format_config(c))) == format_config(c));
  for (const auto& key : config_keys()) CHECK(!config_value(c, key).empty());
}

TEST_CASE("errors carry line numbers and keys") {
  auto e = error_of([] { parse_config_text("data.rho = 10\nbogus.key = 1\n"); });
  CHECK(e.code() == Errc::parse_error);
  CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  CHECK(std::string(e.what()).find("bogus.key") != std::string::npos);

  e = error_of([] { parse_config_text("\n\ndata.rho = ten\n"); });
  CHECK(e.code() == Errc::parse_error);
  CHECK(std::string(e.what()).find("line 3") != std::string::npos);

  e = error_of([] { parse_config_text("no equals sign\n"); });
  CHECK(e.code() == Errc::parse_error);
  CHECK(e.detail().rfind("line 1: ", 0) == 0);

  CHECK(error_of([] { parse_config(std::filesystem::path("/nonexistent/x.cfg")); }).code() == Errc::io_error);
}

TEST_CASE("validation names the field") {
  Config c = parse_config_text("merge.lambda = 1.5\n");
  auto e = error_of([&] { validate_config(c); });
  CHECK(e.code() == Errc::validation_error);
  CHECK(std::string(e.what()).find("merge.lambda") != std::string::npos);
  CHECK(exit_code_for(e.code()) == 2);

  c = Config{};
  c.grid.methods = {"nonsense"};
  CHECK(error_of([&] { validate_config(c); }).code() == Errc::validation_error);
  validate_config(Config{});
}

TEST_CASE("later values and explicit overrides win") {
  Config file = parse_config_text("merge.lambda = 0.2\nmerge.lambda = 0.4\n");
  CHECK(file.experiment.merge.lambda == 0.4);
  set_config_value(file, "merge.lambda", "0.9");
  CHECK(file.experiment.merge.lambda == 0.9);
  CHECK(error_of([&] { set_config_value(file, "merge.nope", "1"); }).code() == Errc::parse_error);
}

TEST_CASE("seed from the environment") {
  Config c = parse_config_text("run.seed = 3\n");
  ::setenv("LTSOUPS_SEED", "123", 1);
  apply_seed_env(c);
  CHECK(c.experiment.seed == 123);
  ::setenv("LTSOUPS_SEED", "abc", 1);
  CHECK(error_of([&] { apply_seed_env(c); }).code() == Errc::validation_error);
  ::unsetenv("LTSOUPS_SEED");
  apply_seed_env(c);
  CHECK(c.experiment.seed == 123);
}

}
