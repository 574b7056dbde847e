#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ltsoups/error.hpp"
#include "ltsoups/io.hpp"
#include "oracles.hpp"

using namespace ltsoups;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::io_error;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("LTDS round trip") {
  SyntheticSpec s{.dim = 5, .seed = 4};
  Dataset d = synth_gaussians(s, ClassCounts({7, 3, 1}));
  std::stringstream buf;
  write_ltds(buf, d);
  CHECK(buf.str().size() == 4 + 4 + 8 + 4 + 4 + d.size() * 5 * 8 + d.size() * 4);
  CHECK(buf.str().substr(0, 4) == "LTDS");
  Dataset back = read_ltds(buf);
  CHECK(back == d);
}

TEST_CASE("LTDS rejects damaged input") {
  SyntheticSpec s{.dim = 3, .seed = 1};
  Dataset d = synth_gaussians(s, ClassCounts({4, 2}));
  std::stringstream buf;
  write_ltds(buf, d);
  std::string bytes = buf.str();

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK(code_of([&] { read_ltds(truncated); }) == Errc::format_error);
  std::string wrong = bytes;
  wrong[0] = 'X';
  std::stringstream bad_magic(wrong);
  CHECK(code_of([&] { read_ltds(bad_magic); }) == Errc::format_error);
  CHECK(code_of([] { load_ltds("/nonexistent/dir/x.ltds"); }) == Errc::io_error);
}

TEST_CASE("LTWT round trip") {
  Checkpoint c{oracle::random_model({.dim = 6, .hidden = {9, 4}}, 3, 8), {.seed = 77, .subset_rho = 8.0, .loss = LossKind::cb}};
  std::stringstream buf;
  write_ltwt(buf, c);
  Checkpoint back = read_ltwt(buf);
  CHECK(back.weights.flat() == c.weights.flat());
  CHECK(back.weights.layout() == c.weights.layout());
  CHECK(back.weights.backbone_config() == c.weights.backbone_config());
  CHECK(back.meta.seed == 77);
  CHECK(back.meta.subset_rho == 8.0);
  CHECK(back.meta.loss == LossKind::cb);

  const auto dir = std::filesystem::temp_directory_path() / "ltsoups_io_test";
  std::filesystem::create_directories(dir);
  save_ltwt(dir / "m.ltwt", c);
  CHECK(load_ltwt(dir / "m.ltwt").weights.flat() == c.weights.flat());
  std::filesystem::remove_all(dir);
}

TEST_CASE("LTWT rejects damaged input") {
  Checkpoint c{oracle::random_model({.dim = 4, .hidden = {3}}, 2, 1), {}};
  std::stringstream buf;
  write_ltwt(buf, c);
  std::string bytes = buf.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
  CHECK(code_of([&] { read_ltwt(truncated); }) == Errc::format_error);
  std::string wrong = bytes;
  wrong[4] = 9;  // version
  std::stringstream bad_version(wrong);
  CHECK(code_of([&] { read_ltwt(bad_version); }) == Errc::format_error);
}

}
