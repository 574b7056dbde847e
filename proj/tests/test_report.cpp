#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ltsoups/error.hpp"
#include "ltsoups/grid.hpp"
#include "ltsoups/report.hpp"

using namespace ltsoups;

namespace {

ReportRow row(std::string method, double rho, double eta, std::uint64_t seed, double bal) {
  ReportRow r{std::move(method), rho, eta, seed, {}};
  r.metrics[0] = bal;
  r.metrics[4] = bal + 0.1;
  r.metrics[11] = 1.5;
  return r;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ltsoups_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<std::string> lines_of(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

Config tiny_grid() {
  Config c;
  auto& x = c.experiment;
  x.benchmark.longtail = {.num_classes = 5, .n_max = 60, .rho = 10.0, .eta = 1.0, .tau = 30};
  x.benchmark.synth.dim = 8;
  x.benchmark.backbone = {.dim = 8, .hidden = {8}};
  x.benchmark.val_per_class = 5;
  x.benchmark.test_per_class = 10;
  x.train.epochs = 1;
  x.train.batch_size = 32;
  x.train.min_warmup_steps = 2;
  x.lora.rank = 1;
  x.seed = 5;
  c.grid.rho_values = {10.0};
  c.grid.eta_values = {1.0};
  c.grid.methods = {"linear_probe"};
  return c;
}

}  // namespace

TEST_SUITE("report") {

TEST_CASE("header is fixed") {
  CHECK(kReportHeader ==
        "method,rho,eta,seed,bal_acc,acc_many,acc_medium,acc_few,acc_head,acc_tail,ece,brier,nll,temperature,"
        "weight_change,wall_seconds");
}

TEST_CASE("CSV row round trip") {
  ReportRow r = row("lt_soups", 100, 0.25, 7, 0.123456789012345);
  r.metrics[6] = 1.0 / 3.0;
  CHECK(parse_csv_row(format_csv_row(r)) == r);
  std::stringstream ss;
  write_csv(ss, {r, row("crt", 50, 4, 1, 0.5)});
  auto back = read_csv(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0] == r);
  // Absent groups stay absent.
  CHECK(!back[1].metrics[1].has_value());
}

TEST_CASE("bad rows report their line") {
  std::stringstream ss;
  ss << kReportHeader << "\n" << format_csv_row(row("a", 1, 1, 1, 0.5)) << "\nbroken,row\n";
  try {
    read_csv(ss);
    FAIL("expected format-error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::format_error);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  std::stringstream bad_header("method,rho\n");
  CHECK_THROWS_AS(read_csv(bad_header), Error);
}

TEST_CASE("cell means and eta marginals") {
  std::vector<ReportRow> rows{row("m", 100, 1, 0, 0.2), row("m", 100, 1, 1, 0.4), row("m", 100, 4, 0, 0.9),
                              row("m", 50, 1, 0, 0.7)};
  auto cells = cell_means(rows);
  REQUIRE(cells.size() == 3);
  for (const auto& c : cells) {
    if (c.rho == 100 && *c.eta == 1) {
      CHECK(c.rows == 2);
      CHECK(*c.means[0] == doctest::Approx(0.3));
    }
  }
  auto marg = eta_marginals(rows);
  REQUIRE(marg.size() == 2);
  for (const auto& m : marg) {
    CHECK(!m.eta.has_value());
    if (m.rho == 100) CHECK(*m.means[0] == doctest::Approx((0.3 + 0.9) / 2));
    if (m.rho == 50) CHECK(*m.means[0] == doctest::Approx(0.7));
    CHECK(!m.means[1].has_value());
  }
}

TEST_CASE("JSON mirrors the CSV schema") {
  std::vector<ReportRow> rows{row("m", 100, 1, 0, 0.2), row("m", 100, 0.5, 0, 0.6)};
  auto j = nlohmann::json::parse(report_json(rows));
  CHECK(j["columns"].size() == 16);
  CHECK(j["columns"][0] == "method");
  CHECK(j["rows"].size() == 2);
  CHECK(j["rows"][0]["bal_acc"] == 0.2);
  CHECK(j["rows"][0]["acc_many"].is_null());
  CHECK(j["marginals"].size() == 1);
  CHECK(j["marginals"][0]["bal_acc"].get<double>() == doctest::Approx(0.4));
}

TEST_CASE("emit_report") {
  auto dir = scratch_dir("emit");
  std::vector<ReportRow> rows{row("m", 100, 1, 0, 0.2)};
  emit_report(rows, ReportFormat::csv, dir / "r.csv");
  CHECK(load_csv(dir / "r.csv") == rows);
  CHECK_THROWS_AS(emit_report({}, ReportFormat::csv, dir / "e.csv"), Error);
  try {
    emit_report(rows, ReportFormat::json, dir / "missing" / "r.json");
    FAIL("expected io-error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::io_error);
  }
  CHECK(parse_report_format("json") == ReportFormat::json);
  std::filesystem::remove_all(dir);
}

TEST_CASE("grid cardinality") {
  Config c;
  CHECK(grid_cells(c).size() == 60);
  c.grid.repeats = 2;
  auto cells = grid_cells(c);
  CHECK(cells.size() == 120);
  CHECK(cells[0].seed == c.experiment.seed);
  CHECK(cells[4].seed == c.experiment.seed + 1);
}

TEST_CASE("1x1 grid writes one row and resumes") {
  auto dir = scratch_dir("grid");
  const auto out = dir / "grid.csv";
  Config c = tiny_grid();
  auto r = run_grid(c, out);
  CHECK(r.written == 1);
  CHECK(r.failures.empty());
  auto first = lines_of(out);
  REQUIRE(first.size() == 2);
  CHECK(first[0] == kReportHeader);

  r = run_grid(c, out);
  CHECK(r.written == 0);
  CHECK(r.skipped == 1);
  CHECK(lines_of(out) == first);

  // A second method after an interrupted write: the partial line is dropped
  // and nothing is duplicated.
  c.grid.methods = {"linear_probe", "full_ft"};
  {
    std::ofstream app(out, std::ios::app | std::ios::binary);
    app << "full_ft,10,1,5,0.3";
  }
  r = run_grid(c, out);
  CHECK(r.written == 1);
  CHECK(r.skipped == 1);
  auto rows = load_csv(out);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].method == "linear_probe");
  CHECK(rows[1].method == "full_ft");
  std::filesystem::remove_all(dir);
}

TEST_CASE("grid output does not depend on the worker count") {
  auto dir = scratch_dir("grid_workers");
  Config c = tiny_grid();
  c.grid.eta_values = {1.0, 0.5};
  c.grid.methods = {"linear_probe", "full_ft"};
  run_grid(c, dir / "a.csv");
  c.experiment.workers = 3;
  run_grid(c, dir / "b.csv");
  auto a = load_csv(dir / "a.csv"), b = load_csv(dir / "b.csv");
  REQUIRE(a.size() == 4);
  REQUIRE(b.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i].metrics[11].reset();
    b[i].metrics[11].reset();
    CHECK(a[i] == b[i]);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("failed cells are recorded and retried") {
  auto dir = scratch_dir("grid_fail");
  Config c = tiny_grid();
  // eta far too small for 5 classes leaves no head class.
  c.grid.eta_values = {1.0, 0.01};
  auto r = run_grid(c, dir / "g.csv");
  CHECK(r.written == 1);
  REQUIRE(r.failures.size() == 1);
  CHECK(r.failures[0].cell.eta == 0.01);
  CHECK(std::filesystem::exists(dir / "g.csv.failures"));
  c.grid.eta_values = {1.0};
  r = run_grid(c, dir / "g.csv");
  CHECK(r.failures.empty());
  CHECK(!std::filesystem::exists(dir / "g.csv.failures"));
  std::filesystem::remove_all(dir);
}

}
