#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ltsoups/config.hpp"
#include "ltsoups/error.hpp"
#include "ltsoups/report.hpp"

namespace ltsoups {

struct GridCell {
  std::string method;
  double rho = 0.0;
  double eta = 0.0;
  std::uint64_t seed = 0;
};

struct GridFailure {
  GridCell cell;
  Errc code = Errc::validation_error;
  std::string error;
};

struct GridResult {
  std::size_t written = 0;
  std::size_t skipped = 0;
  std::vector<GridFailure> failures;
};

// Every (rho, eta, repeat, method) cell in report order. Repeat r uses seed
// root + r.
std::vector<GridCell> grid_cells(const Config& config);

// Benchmark/experiment config for one cell.
ExperimentConfig cell_config(const Config& config, const GridCell& cell);

ReportRow run_cell(const Config& config, const GridCell& cell);

/// Appends one row per cell to the CSV at `out`, skipping cells already in
/// it. Rows are committed in cell order whatever the worker count. Failed
/// cells are logged, listed in `<out>.failures`, and retried on the next run.
GridResult run_grid(const Config& config, const std::filesystem::path& out, std::ostream* log = nullptr);

}  // namespace ltsoups
