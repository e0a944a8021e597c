#pragma once

#include "bodyreg/records.hpp"
#include "bodyreg/region.hpp"
#include "bodyreg/stats.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace bodyreg {

struct EvalImage {
  BodyRegion truth = BodyRegion::Abdomen;
  BodyRegion predicted = BodyRegion::Abdomen;
  double position = 0.0;  // mm along the slice normal
};

struct EvalSeries {
  std::string series_uid;
  std::optional<double> slice_thickness;
  std::string series_description;
  std::optional<std::string> contrast_agent;
  std::optional<std::string> convolution_kernel;
  std::set<std::string> sequence_tags;
  std::vector<EvalImage> images;
};

struct EvalStudy {
  std::string study_uid;
  std::optional<int> patient_age;
  std::optional<PatientSex> patient_sex;
  std::optional<std::string> manufacturer;
  std::optional<std::string> institution;
  std::vector<EvalSeries> series;
};

// Image-level truth/prediction pairs grouped like the source cohort.
struct EvalCohort {
  Modality modality = Modality::CT;
  std::vector<BodyRegion> classes;  // confusion matrix axes
  std::vector<EvalStudy> studies;
};

// Every image of every series.
ConfusionMatrix full_confusion(const EvalCohort& cohort);

// Returns NaN when undefined for the matrix at hand.
using MetricFn = std::function<double(const ConfusionMatrix&)>;

MetricFn sensitivity_metric();
MetricFn specificity_metric();
MetricFn recall_metric(BodyRegion region);
MetricFn tnr_metric(BodyRegion region);

struct BootstrapOptions {
  std::size_t resamples = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
  double step_mm = 10.0;
};

struct CIResult {
  double point = 0.0;  // median of the resampled values
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.95;
  std::size_t resamples = 0;  // replicates with a defined value
  std::uint64_t seed = 0;
  double estimate = 0.0;  // metric on the full cohort without resampling
};

// Percentile bootstrap over studies. Each replicate draws studies with
// replacement, keeps one uniformly chosen series per drawn study and
// subsamples it every step_mm from a random start. Replicate b uses the
// stream Rng::derive(seed, b), so the result does not depend on scheduling.
// Throws EmptyCohort when no study has an evaluable image.
std::vector<CIResult> bootstrap_ci(const EvalCohort& cohort, const std::vector<MetricFn>& metrics,
                                   const BootstrapOptions& options = {});
CIResult bootstrap_ci(const EvalCohort& cohort, const MetricFn& metric, const BootstrapOptions& options = {});

struct JackknifeResult {
  double estimate = 0.0;
  double standard_error = 0.0;
  std::size_t studies = 0;
};

// Leave-one-study-out on the full image set.
JackknifeResult jackknife(const EvalCohort& cohort, const MetricFn& metric);

// Linear-interpolated quantile of sorted values (q in [0, 1]).
double sorted_quantile(const std::vector<double>& sorted, double q);

}  // namespace bodyreg
