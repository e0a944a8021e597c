#pragma once

#include "bodyreg/classify.hpp"
#include "bodyreg/region.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bodyreg {

enum class UncertaintyMetric { Margin, Entropy };
std::string_view metric_name(UncertaintyMetric m) noexcept;
std::optional<UncertaintyMetric> parse_metric(std::string_view s) noexcept;

struct PostprocessConfig {
  UncertaintyMetric metric = UncertaintyMetric::Margin;
  double threshold = 0.2;
  std::size_t min_run = 3;
  std::size_t window = 3;
};

enum class SeriesStatus { Accepted, RejectedUncertain };
std::string_view status_name(SeriesStatus s) noexcept;

// Abdomen or Chest, whichever occurs more often; ties and absence give Abdomen.
BodyRegion merge_target(std::span<const BodyRegion> labels);
std::vector<BodyRegion> merge_abdomen_chest(std::span<const BodyRegion> labels);

// MR only: at least half Breast turns the whole series Breast.
std::vector<BodyRegion> apply_breast_rule(std::span<const BodyRegion> labels, Modality modality);

double mean_margin(std::span<const Prediction> predictions);
double mean_entropy(std::span<const Prediction> predictions);

// MR only; CT series are always accepted.
SeriesStatus reject_uncertain(std::span<const Prediction> predictions, UncertaintyMetric metric, double threshold,
                              Modality modality);

// Repeatedly relabels the shortest strictly interior run shorter than
// min_run (leftmost first) to its longer neighbour run, preceding on ties.
std::vector<BodyRegion> remove_outlier_runs(std::span<const BodyRegion> labels, std::size_t min_run = 3);

// Centered moving average of probability vectors (window shrinks at the
// ends), then argmax among the labels present in the window; ties keep the
// current label.
std::vector<BodyRegion> smooth_labels(std::span<const ProbabilityVector> probabilities,
                                      std::span<const BodyRegion> current, std::size_t window = 3);
std::vector<BodyRegion> smooth_labels(std::span<const Prediction> predictions, std::size_t window = 3);

std::size_t count_transitions(std::span<const BodyRegion> labels);

struct StageTrace {
  std::vector<BodyRegion> raw;
  std::vector<BodyRegion> merged;
  std::vector<BodyRegion> breast;
  std::vector<BodyRegion> outliers_removed;
  std::vector<BodyRegion> smoothed;
};

struct SeriesResult {
  std::string series_uid;
  Modality modality = Modality::CT;
  std::vector<Prediction> per_image;
  std::vector<BodyRegion> final_labels;  // empty when rejected
  SeriesStatus status = SeriesStatus::Accepted;
  std::vector<BodyRegion> series_regions;  // distinct final labels, canonical order
  double mean_margin = 0.0;
  double mean_entropy = 0.0;
  StageTrace trace;
};

// merge -> breast -> uncertainty -> outlier removal -> smoothing.
SeriesResult run_pipeline(std::string series_uid, std::vector<Prediction> predictions, Modality modality,
                          const PostprocessConfig& config = {});

// One JSON object per series.
void write_series_result(const SeriesResult& result, std::ostream& out);

// Lightweight view of a result line, enough for evaluation and tag writing.
struct SeriesResultImage {
  std::string sop_uid;
  std::optional<BodyRegion> label;
  BodyRegion raw_label = BodyRegion::Abdomen;
  double margin = 0.0;
  double entropy = 0.0;
};

struct SeriesResultRecord {
  std::string series_uid;
  Modality modality = Modality::CT;
  SeriesStatus status = SeriesStatus::Accepted;
  std::vector<BodyRegion> series_regions;
  std::vector<SeriesResultImage> images;
};

std::vector<SeriesResultRecord> parse_series_results(std::istream& in);

}  // namespace bodyreg
