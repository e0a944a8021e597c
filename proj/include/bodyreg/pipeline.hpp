#pragma once

#include "bodyreg/bootstrap.hpp"
#include "bodyreg/classify.hpp"
#include "bodyreg/cohort_filter.hpp"
#include "bodyreg/config.hpp"
#include "bodyreg/geometry.hpp"
#include "bodyreg/postprocess.hpp"
#include "bodyreg/records.hpp"
#include "bodyreg/report.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace bodyreg {

// Ground truth per SOP instance UID.
struct TruthLabels {
  std::map<std::string, BodyRegion> by_sop;
  std::vector<std::string> warnings;
};

// Series without usable geometry are reported as warnings, not errors.
TruthLabels project_truth(std::span<const StudyRecord> studies, std::span<const BoundingBox3D> boxes);

// CSV `sop_uid,series_uid,region` in cohort order.
void write_truth_csv(std::span<const StudyRecord> studies, const TruthLabels& truth, std::ostream& out);
TruthLabels read_truth_csv(std::istream& in);
TruthLabels load_truth_csv(const std::filesystem::path& path);

// Most frequent truth label among a study's images (canonical order on ties).
std::optional<BodyRegion> study_region(const StudyRecord& study, const TruthLabels& truth);

// CT or MR by image majority over the study's series; Other when neither.
Modality study_modality(const StudyRecord& study);

struct SplitRow {
  std::string study_uid;
  Modality modality = Modality::CT;
  Split split = Split::Train;
  BodyRegion region = BodyRegion::Abdomen;
};

// Per-modality partition of studies that have truth labels. Studies are
// grouped by their predominant truth region.
std::vector<SplitRow> partition_cohort(std::span<const StudyRecord> studies, const TruthLabels& truth,
                                       double ratio);

void write_split_csv(std::span<const SplitRow> rows, std::ostream& out);
std::vector<SplitRow> read_split_csv(std::istream& in);
std::vector<SplitRow> load_split_csv(const std::filesystem::path& path);

// Decoded and normalized pixels, from the record or its source file.
NormalizedImage load_normalized(const ImageRecord& image);

// Nearest-centroid model per modality from the labelled images of the given
// studies (all studies when `only` is null). Modalities without a labelled
// image are absent.
std::map<Modality, CentroidBackend> train_centroids(std::span<const StudyRecord> studies, const TruthLabels& truth,
                                                    const std::set<std::string>* only = nullptr);

// Predictions in series order. With a score-file backend no pixels are read.
std::vector<Prediction> classify_series(const SeriesRecord& series, ClassifierBackend& backend);

// Every series of the given modality, in cohort order.
std::vector<Prediction> classify_cohort(std::span<const StudyRecord> studies, Modality modality,
                                        ClassifierBackend& backend);

// Post-processes every series of a modality present in the score table.
// A series with some but not all images scored throws BackendFailure.
std::vector<SeriesResult> postprocess_cohort(std::span<const StudyRecord> studies, Modality modality,
                                             const ScoreTable& scores, const PostprocessConfig& config);

// Accepted series of one modality, images with both a truth and a final
// label. Positions come from slice geometry.
EvalCohort build_eval_cohort(std::span<const StudyRecord> studies, std::span<const SeriesResultRecord> results,
                             const TruthLabels& truth, Modality modality);

struct ModalitySummary {
  Modality modality = Modality::CT;
  std::size_t train_studies = 0;
  std::size_t eval_studies = 0;
  std::size_t eval_images = 0;  // images with a truth label in scored series
  double raw_accuracy = 0.0;    // classifier argmax before post-processing
  double final_accuracy = 0.0;  // after post-processing, accepted series only
  std::size_t rejected_series = 0;
};

struct EvaluationOutput {
  ReportData report;
  std::vector<ModalitySummary> modalities;
  std::string json;  // evaluation.json body
};

// Region and factor tables, jackknife, and tag agreement per modality.
// With `split`, only Validation studies are evaluated.
EvaluationOutput evaluate_cohort(std::span<const StudyRecord> studies, std::span<const SeriesResultRecord> results,
                                 const TruthLabels& truth, const PipelineConfig& config,
                                 const std::vector<SplitRow>* split = nullptr);

// Report data stored under "report" in an evaluation.json body.
ReportData report_from_evaluation(std::string_view evaluation_json);

struct RunOptions {
  std::filesystem::path input;   // DICOM tree
  std::filesystem::path labels;  // box label file
  std::filesystem::path out;     // output directory
  PipelineConfig config;
};

struct RunSummary {
  std::size_t ingested_images = 0;
  std::size_t skipped_files = 0;
  std::size_t included_studies = 0;
  std::vector<ModalitySummary> modalities;
  std::vector<std::filesystem::path> outputs;
};

// ingest -> filter -> dedupe -> truth -> partition -> train (centroid) or
// score file -> classify -> post-process -> evaluate -> report. Every output
// lands in options.out; the same inputs and seed give identical bytes.
RunSummary run_end_to_end(const RunOptions& options);

}  // namespace bodyreg
