#include "melstorm/report.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "melstorm/error.hpp"

namespace melstorm {

namespace {

std::string fixed6(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(6) << v;
  return s.str();
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string format_report_csv(const SweepReport& report) {
  std::ostringstream out;
  out << kReportHeader << '\n';
  for (const auto& r : report.rows) {
    out << report.attack << ',' << fixed6(r.eps) << ',' << r.n_samples << ',' << fixed6(r.accuracy) << ','
        << fixed6(r.success_rate) << ',' << fixed6(r.mean_linf) << ',' << fixed6(r.max_linf) << ','
        << fixed6(r.mean_l2) << ',' << report.seed << '\n';
  }
  return out.str();
}

void write_report(const SweepReport& report, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << format_report_csv(report);
    if (!out) throw Error("write failed for " + path.string());
  }
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json j{{"eps", r.eps},
                     {"n_samples", r.n_samples},
                     {"n_success", r.n_success},
                     {"accuracy", r.accuracy},
                     {"success_rate", r.success_rate},
                     {"mean_linf", r.mean_linf},
                     {"max_linf", r.max_linf},
                     {"mean_l2", r.mean_l2}};
    j["mean_l2_success"] = std::isnan(r.mean_l2_success) ? nlohmann::json(nullptr) : nlohmann::json(r.mean_l2_success);
    rows.push_back(j);
  }
  const nlohmann::json meta{{"attack", report.attack},
                            {"seed", report.seed},
                            {"model_fingerprint", report.model_fingerprint},
                            {"sample_indices", report.sample_indices},
                            {"rows", rows},
                            {"created_utc", utc_now()}};
  auto json_path = path;
  json_path.replace_extension(".json");
  std::ofstream out(json_path);
  if (!out) throw Error("cannot write " + json_path.string());
  out << meta.dump(2) << '\n';
}

std::vector<ReportLine> read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) {
    throw FormatError(path.string() + ": line 1: expected header '" + kReportHeader + "'");
  }
  std::vector<ReportLine> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    const std::string where = path.string() + ": line " + std::to_string(line_no);
    if (f.size() != 9) throw FormatError(where + ": expected 9 fields, got " + std::to_string(f.size()));
    try {
      ReportLine r;
      r.attack = f[0];
      r.eps = std::stod(f[1]);
      r.n_samples = std::stoull(f[2]);
      r.accuracy = std::stod(f[3]);
      r.success_rate = std::stod(f[4]);
      r.mean_linf = std::stod(f[5]);
      r.max_linf = std::stod(f[6]);
      r.mean_l2 = std::stod(f[7]);
      r.seed = std::stoull(f[8]);
      out.push_back(r);
    } catch (const std::logic_error&) {
      throw FormatError(where + ": malformed number");
    }
  }
  return out;
}

void print_report_table(const std::vector<ReportLine>& lines, std::ostream& out) {
  out << std::left << std::setw(8) << "attack" << std::right << std::setw(8) << "eps" << std::setw(6) << "n"
      << std::setw(10) << "accuracy" << std::setw(10) << "success" << std::setw(11) << "mean_linf" << std::setw(10)
      << "max_linf" << std::setw(10) << "mean_l2" << '\n';
  out << std::fixed;
  for (const auto& r : lines) {
    out << std::left << std::setw(8) << r.attack << std::right << std::setprecision(2) << std::setw(8) << r.eps
        << std::setw(6) << r.n_samples << std::setprecision(4) << std::setw(10) << r.accuracy << std::setw(10)
        << r.success_rate << std::setw(11) << r.mean_linf << std::setw(10) << r.max_linf << std::setw(10)
        << r.mean_l2 << '\n';
  }
  out.unsetf(std::ios::floatfield);
}

void write_long_format(const std::vector<ReportLine>& lines, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "attack,eps,metric,value\n";
  for (const auto& r : lines) {
    const std::pair<const char*, double> metrics[] = {{"accuracy", r.accuracy},   {"success_rate", r.success_rate},
                                                      {"mean_linf", r.mean_linf}, {"max_linf", r.max_linf},
                                                      {"mean_l2", r.mean_l2}};
    for (const auto& [name, value] : metrics) out << r.attack << ',' << fixed6(r.eps) << ',' << name << ',' << fixed6(value) << '\n';
  }
}

}  // namespace melstorm
