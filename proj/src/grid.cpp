#include "ltsoups/grid.hpp"

#include <chrono>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "ltsoups/error.hpp"
#include "ltsoups/rng.hpp"

namespace ltsoups {

namespace {

// Drops a trailing partial line left by an interrupted writer.
void repair_tail(const std::filesystem::path& path, std::ostream* log) {
  std::string text;
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io_error, "cannot open report " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  if (text.empty() || text.back() == '\n') return;
  const auto nl = text.rfind('\n');
  text.resize(nl == std::string::npos ? 0 : nl + 1);
  if (log) *log << "dropping partial last line of " << path.string() << "\n";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io_error, "cannot rewrite report " + path.string());
  out << text;
}

}  // namespace

std::vector<GridCell> grid_cells(const Config& config) {
  std::vector<GridCell> cells;
  for (double rho : config.grid.rho_values)
    for (double eta : config.grid.eta_values)
      for (int r = 0; r < config.grid.repeats; ++r)
        for (const auto& m : config.grid.methods)
          cells.push_back({m, rho, eta, config.experiment.seed + static_cast<std::uint64_t>(r)});
  return cells;
}

ExperimentConfig cell_config(const Config& config, const GridCell& cell) {
  ExperimentConfig x = config.experiment;
  x.benchmark.longtail.rho = cell.rho;
  x.benchmark.longtail.eta = cell.eta;
  x.seed = cell.seed;
  x.train.seed = derive_seed(cell.seed, "train");
  return x;
}

ReportRow run_cell(const Config& config, const GridCell& cell) {
  const ExperimentConfig x = cell_config(config, cell);
  const Benchmark bench = make_benchmark(x.benchmark, cell.seed);
  const auto t0 = std::chrono::steady_clock::now();
  const ModelWeights model = run_method(cell.method, bench, x);
  const MetricsReport report = evaluate_on(model, bench, x);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return make_row(cell.method, cell.rho, cell.eta, cell.seed, report, wall);
}

GridResult run_grid(const Config& config, const std::filesystem::path& out, std::ostream* log) {
  validate_config(config);
  GridResult result;

  std::unordered_set<std::string> done;
  if (std::filesystem::exists(out) && std::filesystem::file_size(out) > 0) {
    repair_tail(out, log);
    for (const auto& row : load_csv(out)) done.insert(row_key(row));
  } else {
    std::ofstream init(out, std::ios::binary | std::ios::trunc);
    if (!init) fail(Errc::io_error, "cannot create report " + out.string());
    init << kReportHeader << '\n';
  }

  std::vector<GridCell> pending;
  for (auto& cell : grid_cells(config)) {
    if (done.count(row_key(cell.method, cell.rho, cell.eta, cell.seed)))
      ++result.skipped;
    else
      pending.push_back(std::move(cell));
  }

  std::ofstream report(out, std::ios::binary | std::ios::app);
  if (!report) fail(Errc::io_error, "cannot append to report " + out.string());

  // Grid-level parallelism replaces job-level parallelism inside each cell.
  Config inner = config;
  if (config.experiment.workers > 1) inner.experiment.workers = 1;

  struct Slot {
    std::optional<ReportRow> row;
    Errc code = Errc::validation_error;
    std::string error;
    bool ready = false;
  };
  std::vector<Slot> slots(pending.size());
  std::mutex mu;
  std::size_t next = 0;

  parallel_for(pending.size(), config.experiment.workers, [&](std::size_t i) {
    Slot s;
    try {
      s.row = run_cell(inner, pending[i]);
    } catch (const Error& e) {
      s.code = e.code();
      s.error = e.what();
    } catch (const std::exception& e) {
      s.error = e.what();
    }
    s.ready = true;
    std::lock_guard lock(mu);
    slots[i] = std::move(s);
    for (; next < slots.size() && slots[next].ready; ++next) {
      const GridCell& c = pending[next];
      if (slots[next].row) {
        report << format_csv_row(*slots[next].row) << '\n';
        report.flush();
        ++result.written;
        if (log) *log << "done " << row_key(c.method, c.rho, c.eta, c.seed) << "\n";
      } else {
        result.failures.push_back({c, slots[next].code, slots[next].error});
        if (log) *log << "FAILED " << row_key(c.method, c.rho, c.eta, c.seed) << ": " << slots[next].error << "\n";
      }
    }
  });
  if (!report) fail(Errc::io_error, "write failed for " + out.string());

  std::filesystem::path failures_path = out;
  failures_path += ".failures";
  if (result.failures.empty()) {
    std::error_code ec;
    std::filesystem::remove(failures_path, ec);
  } else {
    std::ofstream f(failures_path, std::ios::binary | std::ios::trunc);
    if (!f) fail(Errc::io_error, "cannot write " + failures_path.string());
    f << "method,rho,eta,seed,error\n";
    for (const auto& x : result.failures) {
      std::string msg = x.error;
      for (char& ch : msg)
        if (ch == '\n' || ch == ',') ch = ';';
      f << row_key(x.cell.method, x.cell.rho, x.cell.eta, x.cell.seed) << ',' << msg << '\n';
    }
  }
  return result;
}

}  // namespace ltsoups
