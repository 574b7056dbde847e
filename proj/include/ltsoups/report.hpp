#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ltsoups/eval.hpp"

namespace ltsoups {

inline constexpr std::string_view kReportHeader =
    "method,rho,eta,seed,bal_acc,acc_many,acc_medium,acc_few,acc_head,acc_tail,ece,brier,nll,temperature,"
    "weight_change,wall_seconds";

inline constexpr std::size_t kNumMetrics = 12;
inline constexpr std::array<std::string_view, kNumMetrics> kMetricNames{
    "bal_acc", "acc_many", "acc_medium", "acc_few",     "acc_head",      "acc_tail",
    "ece",     "brier",    "nll",        "temperature", "weight_change", "wall_seconds"};

using MetricValues = std::array<std::optional<double>, kNumMetrics>;

struct ReportRow {
  std::string method;
  double rho = 0.0;
  double eta = 0.0;
  std::uint64_t seed = 0;
  // Empty group accuracies are absent, never zero.
  MetricValues metrics{};

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

ReportRow make_row(std::string method, double rho, double eta, std::uint64_t seed, const MetricsReport& report,
                   double wall_seconds);

// Identifies a row for resumption: method, rho, eta and seed.
std::string row_key(const ReportRow& row);
std::string row_key(std::string_view method, double rho, double eta, std::uint64_t seed);

std::string format_csv_row(const ReportRow& row);
ReportRow parse_csv_row(std::string_view line);

void write_csv(std::ostream& out, const std::vector<ReportRow>& rows);
std::vector<ReportRow> read_csv(std::istream& in);
std::vector<ReportRow> load_csv(const std::filesystem::path& path);

struct Aggregate {
  std::string method;
  double rho = 0.0;
  std::optional<double> eta;  // absent for marginals over eta
  std::size_t rows = 0;
  MetricValues means{};
};

// Mean over seeds for every (method, rho, eta) cell.
std::vector<Aggregate> cell_means(const std::vector<ReportRow>& rows);
// Mean over eta of the cell means, per (method, rho).
std::vector<Aggregate> eta_marginals(const std::vector<ReportRow>& rows);

enum class ReportFormat { csv, json };
ReportFormat parse_report_format(std::string_view name);

std::string report_json(const std::vector<ReportRow>& rows);
void emit_report(const std::vector<ReportRow>& rows, ReportFormat format, const std::filesystem::path& path);

}  // namespace ltsoups
