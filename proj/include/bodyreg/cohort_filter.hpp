#pragma once

#include "bodyreg/records.hpp"
#include "bodyreg/region.hpp"
#include "bodyreg/rng.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace bodyreg {

enum class FilterReason {
  Included,
  NotAxial,
  MPRorDerived,
  KeywordExcluded,
  LowBitDepth,
  MultiChannel,
  NoPixelData,
  TooFewPixels,
  UnsupportedCodec,
  WrongModality,
};

std::string_view filter_reason_name(FilterReason r) noexcept;

struct FilterDecision {
  bool included = true;
  FilterReason reason = FilterReason::Included;
  std::string detail;

  static FilterDecision include(std::string detail = {}) { return {true, FilterReason::Included, std::move(detail)}; }
  static FilterDecision exclude(FilterReason r, std::string detail) { return {false, r, std::move(detail)}; }
};

struct FilterConfig {
  std::vector<std::string> mr_keywords;
  std::vector<std::string> ct_keywords;
  std::vector<std::string> derived_keywords;
  double max_axial_angle_deg = 45.0;
  int min_pixels = 1000;
  int max_excluded_bits = 8;
  bool strict_geometry = false;

  static FilterConfig defaults();
};

// Case-insensitive substring search.
bool contains_keyword(std::string_view text, std::string_view keyword);

FilterDecision filter_series(const SeriesRecord& series, const FilterConfig& config = FilterConfig::defaults());
FilterDecision filter_image(const ImageRecord& image, const FilterConfig& config = FilterConfig::defaults());

struct FilterReportRow {
  std::string uid;
  std::string level;  // "series" or "image"
  FilterDecision decision;
};

struct FilterOutcome {
  std::vector<StudyRecord> included;  // studies keep only included series/images
  std::vector<FilterReportRow> report;
};

// Series decisions first; images of excluded series are not evaluated.
FilterOutcome filter_cohort(const std::vector<StudyRecord>& studies, const FilterConfig& config = FilterConfig::defaults());

void write_filter_report(const std::vector<FilterReportRow>& rows, std::ostream& out);

// ---------------------------------------------------------------------------
// Partitioning

struct DedupeResult {
  std::vector<StudyRecord> studies;        // input order preserved
  std::vector<std::string> missing_patient_id;  // study UIDs kept ungrouped
};

// Keeps one uniformly chosen study per patient_id.
DedupeResult dedupe_patients(const std::vector<StudyRecord>& studies, Rng& rng);

enum class Split { Train, Validation };
std::string_view split_name(Split s) noexcept;

struct PartitionInput {
  std::string study_uid;
  std::string patient_id;
  BodyRegion region = BodyRegion::Abdomen;
  std::size_t image_count = 0;
};

struct PartitionAssignment {
  std::string study_uid;
  Split split = Split::Train;
  BodyRegion region = BodyRegion::Abdomen;
};

// Within each region, patients are ranked by image count (descending) and the
// k-th is assigned Train iff round(k * ratio) exceeds the Train count so far,
// so the final Train count is round(n * ratio) with ties to Train.
std::vector<PartitionAssignment> partition_patients(const std::vector<PartitionInput>& studies, double ratio = 0.75);

struct AuditInput {
  std::string study_uid;
  BodyRegion region = BodyRegion::Abdomen;
};

// ceil(fraction * N) studies spread as evenly as region sizes allow.
std::vector<std::string> audit_sample(const std::vector<AuditInput>& studies, double fraction, Rng& rng);

}  // namespace bodyreg
