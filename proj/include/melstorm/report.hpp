#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "melstorm/sweep.hpp"

namespace melstorm {

inline constexpr const char* kReportHeader = "attack,eps,n_samples,accuracy,success_rate,mean_linf,max_linf,mean_l2,seed";

/// One parsed CSV line.
struct ReportLine {
  std::string attack;
  double eps = 0.0;
  std::size_t n_samples = 0;
  double accuracy = 0.0;
  double success_rate = 0.0;
  double mean_linf = 0.0;
  double max_linf = 0.0;
  double mean_l2 = 0.0;
  std::uint64_t seed = 0;
};

/// CSV rows with 6 decimals. Output is a pure function of the report.
std::string format_report_csv(const SweepReport& report);

/// Writes `path` (CSV) and `path` with extension .json holding the full
/// metadata: fingerprint, seed, sample indices, success counts, timestamp.
void write_report(const SweepReport& report, const std::filesystem::path& path);

/// Parses a report CSV, rejecting a wrong header or malformed fields with the
/// line number.
std::vector<ReportLine> read_report_csv(const std::filesystem::path& path);

/// Fixed-width table for terminals.
void print_report_table(const std::vector<ReportLine>& lines, std::ostream& out);

/// Long format for plotting: attack,eps,metric,value.
void write_long_format(const std::vector<ReportLine>& lines, const std::filesystem::path& path);

}  // namespace melstorm
