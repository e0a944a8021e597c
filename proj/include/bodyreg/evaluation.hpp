#pragma once

#include "bodyreg/bootstrap.hpp"
#include "bodyreg/stats.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bodyreg {

enum class Factor { Institution, Age, Sex, Manufacturer, Contrast, SliceThickness, Kernel, Sequence };

inline constexpr Factor kAllFactors[] = {Factor::Institution,  Factor::Age,      Factor::Sex,
                                         Factor::Manufacturer, Factor::Contrast, Factor::SliceThickness,
                                         Factor::Kernel,       Factor::Sequence};

std::string_view factor_key(Factor f) noexcept;    // "slice_thickness"
std::string_view factor_label(Factor f) noexcept;  // "Slice thickness"
bool factor_is_series_level(Factor f) noexcept;
bool factor_applies(Factor f, Modality m) noexcept;

// Accepts keys and labels case-insensitively ("gender" is an alias of sex).
// Throws UnknownFactor.
Factor parse_factor(std::string_view name);

inline constexpr std::size_t kMinReportCount = 5;

struct FactorRow {
  std::string category;
  std::size_t n = 0;  // studies, or series for series-level factors
  double percent = 0.0;
  std::optional<CIResult> sensitivity;  // absent ("NA") when n < min_count
  std::optional<CIResult> specificity;
};

struct FactorReport {
  Factor factor = Factor::Institution;
  std::vector<FactorRow> rows;
  FactorTable table;  // correct/incorrect image counts of the reported categories
  std::optional<ChiSquareResult> chi;
  std::optional<CramersV> cramers;
};

// Categories a study or series falls into for this factor. Sequence may yield
// several; missing values map to "Unknown".
std::vector<std::string> factor_categories(Factor f, const EvalStudy& study, const EvalSeries& series);

FactorReport factor_report(const EvalCohort& cohort, Factor factor, const BootstrapOptions& options = {},
                           std::size_t min_count = kMinReportCount);

struct RegionRow {
  std::string label;  // "Overall" or the region display name
  std::optional<BodyRegion> region;
  std::size_t n = 0;  // images with this truth label
  std::optional<CIResult> sensitivity;
  std::optional<CIResult> specificity;
};

// Overall row first, then regions of the reporting set sorted by display name.
std::vector<RegionRow> region_report(const EvalCohort& cohort, const BootstrapOptions& options = {},
                                     std::size_t min_count = kMinReportCount);

// "Cervical spine", "Arm", ...
std::string region_display_name(BodyRegion r);

}  // namespace bodyreg
