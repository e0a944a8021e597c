#pragma once

#include "bodyreg/evaluation.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace bodyreg {

enum class ReportFormat { Csv, Markdown };

// Everything the report tables show. Absent modalities render as "-".
struct ReportData {
  std::optional<std::vector<RegionRow>> ct_regions;
  std::optional<std::vector<RegionRow>> mr_regions;
  std::vector<FactorReport> ct_factors;
  std::vector<FactorReport> mr_factors;
};

// "92.1 (91.7 - 92.5)" in percent, or "NA".
std::string format_ci(const std::optional<CIResult>& ci);
// Three decimals down to 0.001, then "6.7e-7" style.
std::string format_p(double p);

// Columns: Factor, Category, n (%), Sensitivity, Specificity, p-value.
std::string render_factor_table(const std::vector<FactorReport>& factors, ReportFormat format);
// Columns: Body Region, then n / Sensitivity / Specificity for CT and MRI.
std::string render_region_table(const ReportData& data, ReportFormat format);

// Lossless JSON form of the report data, so tables can be re-rendered later.
std::string report_to_json(const ReportData& data);
ReportData report_from_json(std::string_view json_text);

// Writes regions.{csv,md}, factors_ct.{csv,md} and factors_mr.{csv,md} into
// `dir`. Returns the paths written.
std::vector<std::filesystem::path> emit_report(const ReportData& data, const std::filesystem::path& dir,
                                               const std::vector<ReportFormat>& formats = {ReportFormat::Csv,
                                                                                          ReportFormat::Markdown});

}  // namespace bodyreg
