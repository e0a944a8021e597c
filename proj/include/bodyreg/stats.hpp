#pragma once

#include "bodyreg/matrix.hpp"
#include "bodyreg/region.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bodyreg {

// Rows are truth, columns are prediction.
struct ConfusionMatrix {
  std::vector<BodyRegion> classes;
  Matrix<std::uint64_t> counts;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<BodyRegion> classes);

  std::size_t size() const noexcept { return classes.size(); }
  std::optional<std::size_t> index_of(BodyRegion r) const noexcept;
  // Ignores pairs whose classes are not in the matrix.
  void add(BodyRegion truth, BodyRegion predicted, std::uint64_t n = 1);
  std::uint64_t total() const noexcept;
  std::uint64_t trace() const noexcept;
  std::uint64_t support(std::size_t k) const noexcept;  // row sum
  std::uint64_t predicted(std::size_t k) const noexcept;  // column sum
};

// Support-weighted mean of per-class recall. Zero-support classes are
// skipped; the weights cancel, so the result is trace / total exactly.
double weighted_sensitivity(const ConfusionMatrix& cm);

struct SpecificityResult {
  std::optional<double> value;          // absent when no class has a defined TNR
  std::vector<BodyRegion> undefined;    // classes skipped for TN + FP == 0
};

// Support-weighted mean of one-vs-rest true-negative rates.
SpecificityResult weighted_specificity(const ConfusionMatrix& cm);

std::optional<double> recall(const ConfusionMatrix& cm, std::size_t k);
std::optional<double> true_negative_rate(const ConfusionMatrix& cm, std::size_t k);

// ---------------------------------------------------------------------------

using ContingencyTable = Matrix<std::uint64_t>;

// Correct/incorrect counts per category of one factor (a 2 x C table).
struct FactorTable {
  std::string factor;
  std::vector<std::string> categories;
  std::vector<std::uint64_t> correct;
  std::vector<std::uint64_t> incorrect;

  ContingencyTable contingency() const;
};

struct ChiSquareResult {
  double statistic = 0.0;
  std::size_t df = 0;
  double p = 1.0;
};

// Pearson test. Throws DegenerateTable for fewer than two rows or columns or
// any zero expected count.
ChiSquareResult chi_square(const ContingencyTable& table);
ChiSquareResult chi_square(const FactorTable& table);

enum class Association { Negligible, Weak, Moderate, Strong };
std::string_view association_name(Association a) noexcept;
Association association_bucket(double v) noexcept;

struct CramersV {
  double v = 0.0;
  Association bucket = Association::Negligible;
};

CramersV cramers_v(const ContingencyTable& table);
CramersV cramers_v(const FactorTable& table);

// Regularized upper incomplete gamma Q(a, x).
double gamma_q(double a, double x);
double chi_square_sf(double statistic, double df);

// Inverse standard normal CDF.
double normal_quantile(double p);

// Units needed to estimate accuracy p with the given two-sided confidence and
// relative error: ceil(deff * z^2 * (1 - p) / (relative_error^2 * p)).
std::uint64_t sample_size(double p, double confidence, double relative_error, double deff = 1.0);
double sample_size_raw(double p, double confidence, double relative_error, double deff = 1.0);

// Design effect that would turn the base formula into `target` units.
double implied_design_effect(double target, double p, double confidence, double relative_error);

// ---------------------------------------------------------------------------

// Normalized tag value -> regions it denotes.
struct SynonymMap {
  std::map<std::string, std::vector<BodyRegion>> entries;

  static SynonymMap defaults();
  static SynonymMap load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // Whole normalized value first, else the union over its word tokens.
  std::vector<BodyRegion> lookup(std::string_view value) const;
};

// Upper case, non-alphanumerics collapsed to single spaces, trimmed.
std::string normalize_tag_value(std::string_view value);

struct TagAgreementInput {
  std::optional<std::string> tag_value;
  std::vector<BodyRegion> predicted;
};

struct TagAgreement {
  std::size_t matched = 0;
  std::size_t total = 0;
  double fraction() const noexcept { return total ? static_cast<double>(matched) / static_cast<double>(total) : 0.0; }
};

// A study agrees when its mapped tag regions intersect the predicted set.
// Missing and unmapped values count as disagreement.
TagAgreement tag_agreement(std::span<const TagAgreementInput> studies, const SynonymMap& synonyms);

}  // namespace bodyreg
