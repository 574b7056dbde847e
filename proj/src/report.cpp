#include "ltsoups/report.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <tuple>

#include <json.hpp>

#include "ltsoups/error.hpp"

namespace ltsoups {

namespace {

std::string fmt(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T field(std::string_view text, const char* name) {
  T out{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  if (text.empty() || ec != std::errc{} || ptr != end)
    fail(Errc::format_error, std::string("bad ") + name + " field '" + std::string(text) + "'");
  return out;
}

std::optional<double> mean_of(const std::vector<std::optional<double>>& xs) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& x : xs)
    if (x) {
      sum += *x;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

nlohmann::json metrics_json(const MetricValues& m) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < kNumMetrics; ++i) {
    const std::string name(kMetricNames[i]);
    j[name] = m[i] ? nlohmann::json(*m[i]) : nlohmann::json(nullptr);
  }
  return j;
}

}  // namespace

ReportRow make_row(std::string method, double rho, double eta, std::uint64_t seed, const MetricsReport& r,
                   double wall_seconds) {
  ReportRow row{std::move(method), rho, eta, seed, {}};
  row.metrics = {r.bal_acc,  r.groups.many, r.groups.medium, r.groups.few,     r.groups.head,   r.groups.tail,
                 r.ece,      r.brier,       r.nll,           r.temperature,    r.weight_change, wall_seconds};
  return row;
}

std::string row_key(std::string_view method, double rho, double eta, std::uint64_t seed) {
  return std::string(method) + "," + fmt(rho) + "," + fmt(eta) + "," + std::to_string(seed);
}

std::string row_key(const ReportRow& row) { return row_key(row.method, row.rho, row.eta, row.seed); }

std::string format_csv_row(const ReportRow& row) {
  if (row.method.find_first_of(",\"\n") != std::string::npos)
    fail(Errc::validation_error, "method name '" + row.method + "' cannot be written to CSV");
  std::string out = row_key(row);
  for (const auto& m : row.metrics) {
    out += ',';
    if (m) out += fmt(*m);
  }
  return out;
}

ReportRow parse_csv_row(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto f = split_fields(line);
  if (f.size() != 4 + kNumMetrics)
    fail(Errc::format_error, "expected " + std::to_string(4 + kNumMetrics) + " fields, got " + std::to_string(f.size()));
  ReportRow row;
  row.method = std::string(f[0]);
  if (row.method.empty()) fail(Errc::format_error, "empty method field");
  row.rho = field<double>(f[1], "rho");
  row.eta = field<double>(f[2], "eta");
  row.seed = field<std::uint64_t>(f[3], "seed");
  for (std::size_t i = 0; i < kNumMetrics; ++i) {
    const auto text = f[4 + i];
    if (!text.empty()) row.metrics[i] = field<double>(text, std::string(kMetricNames[i]).c_str());
  }
  return row;
}

void write_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << kReportHeader << '\n';
  for (const auto& r : rows) out << format_csv_row(r) << '\n';
}

std::vector<ReportRow> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(Errc::format_error, "report is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kReportHeader) fail(Errc::format_error, "unexpected report header");
  std::vector<ReportRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      rows.push_back(parse_csv_row(line));
    } catch (const Error& e) {
      fail(Errc::format_error, "report line " + std::to_string(line_no) + ": " + e.detail());
    }
  }
  return rows;
}

std::vector<ReportRow> load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open report " + path.string());
  return read_csv(in);
}

std::vector<Aggregate> cell_means(const std::vector<ReportRow>& rows) {
  std::map<std::tuple<std::string, double, double>, std::vector<const ReportRow*>> groups;
  for (const auto& r : rows) groups[{r.method, r.rho, r.eta}].push_back(&r);
  std::vector<Aggregate> out;
  for (const auto& [key, members] : groups) {
    Aggregate a{std::get<0>(key), std::get<1>(key), std::get<2>(key), members.size(), {}};
    for (std::size_t i = 0; i < kNumMetrics; ++i) {
      std::vector<std::optional<double>> xs;
      for (const auto* r : members) xs.push_back(r->metrics[i]);
      a.means[i] = mean_of(xs);
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<Aggregate> eta_marginals(const std::vector<ReportRow>& rows) {
  std::map<std::pair<std::string, double>, std::vector<Aggregate>> groups;
  for (auto& cell : cell_means(rows)) groups[{cell.method, cell.rho}].push_back(std::move(cell));
  std::vector<Aggregate> out;
  for (const auto& [key, cells] : groups) {
    Aggregate a{key.first, key.second, std::nullopt, 0, {}};
    for (const auto& c : cells) a.rows += c.rows;
    for (std::size_t i = 0; i < kNumMetrics; ++i) {
      std::vector<std::optional<double>> xs;
      for (const auto& c : cells) xs.push_back(c.means[i]);
      a.means[i] = mean_of(xs);
    }
    out.push_back(std::move(a));
  }
  return out;
}

ReportFormat parse_report_format(std::string_view name) {
  if (name == "csv") return ReportFormat::csv;
  if (name == "json") return ReportFormat::json;
  fail(Errc::validation_error, "unknown report format '" + std::string(name) + "'");
}

std::string report_json(const std::vector<ReportRow>& rows) {
  using nlohmann::json;
  json columns = json::array();
  for (auto name : split_fields(kReportHeader)) columns.push_back(std::string(name));

  json jrows = json::array();
  for (const auto& r : rows) {
    json j = {{"method", r.method}, {"rho", r.rho}, {"eta", r.eta}, {"seed", r.seed}};
    j.update(metrics_json(r.metrics));
    jrows.push_back(std::move(j));
  }
  auto aggregates = [](const std::vector<Aggregate>& aggs) {
    json arr = json::array();
    for (const auto& a : aggs) {
      json j = {{"method", a.method}, {"rho", a.rho}, {"rows", a.rows}};
      if (a.eta) j["eta"] = *a.eta;
      j.update(metrics_json(a.means));
      arr.push_back(std::move(j));
    }
    return arr;
  };
  json doc = {{"columns", columns},
              {"rows", jrows},
              {"cells", aggregates(cell_means(rows))},
              {"marginals", aggregates(eta_marginals(rows))}};
  return doc.dump(2) + "\n";
}

void emit_report(const std::vector<ReportRow>& rows, ReportFormat format, const std::filesystem::path& path) {
  if (rows.empty()) fail(Errc::empty_input, "no report rows");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io_error, "cannot write report " + path.string());
  if (format == ReportFormat::csv)
    write_csv(out, rows);
  else
    out << report_json(rows);
  if (!out) fail(Errc::io_error, "write failed for " + path.string());
}

}  // namespace ltsoups
