#pragma once

#include "bodyreg/preprocess.hpp"
#include "bodyreg/region.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bodyreg {

using ProbabilityVector = std::array<double, kRegionCount>;

// Per-image class probabilities. Entries outside the scoring class set are 0.
struct Prediction {
  std::string sop_uid;
  ProbabilityVector probabilities{};
  std::size_t class_count = 0;
  BodyRegion label = BodyRegion::Abdomen;
  double margin = 0.0;   // top-1 minus top-2 probability
  double entropy = 0.0;  // Shannon entropy normalized by ln(class_count)
};

// Validates and completes a prediction from raw probabilities over `classes`
// (one value per class, class-set order). Sums within 1e-6 of 1 are
// renormalized; anything else throws NotNormalized.
Prediction make_prediction(std::string sop_uid, const ClassSet& classes, std::span<const double> probabilities);

// Re-derives label, margin and entropy from a full-length probability vector.
Prediction make_prediction(std::string sop_uid, const ProbabilityVector& probabilities, std::size_t class_count);

// Abstract scorer. Implementations return one raw probability row per input,
// ordered like classes().
class ClassifierBackend {
 public:
  virtual ~ClassifierBackend() = default;
  virtual const ClassSet& classes() const = 0;
  virtual bool thread_safe() const { return false; }
  virtual void prepare() {}
  virtual std::vector<std::vector<double>> score_batch(std::span<const NormalizedImage> images) = 0;
};

// Scores go through the interface boundary checks; backend exceptions and
// malformed rows surface as BackendFailure.
Prediction classify_image(const NormalizedImage& image, ClassifierBackend& backend);
std::vector<Prediction> classify_batch(std::span<const NormalizedImage> images, ClassifierBackend& backend);

// Score CSV: header `sop_uid,<class names in canonical order>`.
struct ScoreTable {
  ClassSet classes;
  std::map<std::string, std::vector<double>> rows;
};

ScoreTable load_scores(const std::filesystem::path& path);
ScoreTable parse_scores(std::istream& in);
void write_scores(const ClassSet& classes, std::span<const Prediction> predictions, std::ostream& out);

// Looks up stored vectors by SOP instance UID.
class ScoreFileBackend final : public ClassifierBackend {
 public:
  explicit ScoreFileBackend(ScoreTable table) : table_(std::move(table)) {}
  const ClassSet& classes() const override { return table_.classes; }
  bool thread_safe() const override { return true; }
  std::vector<std::vector<double>> score_batch(std::span<const NormalizedImage> images) override;

 private:
  ScoreTable table_;
};

inline constexpr std::size_t kCentroidGrid = 16;

// Block-averages an image to a kCentroidGrid x kCentroidGrid feature vector.
std::vector<double> centroid_features(const Matrix<double>& values);

// Nearest-centroid scorer: softmax over negative Euclidean distances to the
// per-class mean feature vector, temperature 1. Immutable once trained.
class CentroidBackend final : public ClassifierBackend {
 public:
  CentroidBackend(ClassSet classes, std::vector<std::vector<double>> centroids);
  const ClassSet& classes() const override { return classes_; }
  bool thread_safe() const override { return true; }
  std::vector<std::vector<double>> score_batch(std::span<const NormalizedImage> images) override;

  const std::vector<std::vector<double>>& centroids() const noexcept { return centroids_; }

  void save(const std::filesystem::path& path) const;
  static CentroidBackend load(const std::filesystem::path& path);

 private:
  ClassSet classes_;
  std::vector<std::vector<double>> centroids_;
};

// Classes default to the distinct labels seen, in canonical order. Throws
// EmptyClass if the set is empty or an advertised class has no example.
CentroidBackend train_centroid_baseline(std::span<const std::pair<NormalizedImage, BodyRegion>> labeled,
                                        const ClassSet* advertised = nullptr);
// Same, from precomputed centroid_features vectors.
CentroidBackend train_centroid_features(std::span<const std::pair<std::vector<double>, BodyRegion>> labeled,
                                       const ClassSet* advertised = nullptr);

}  // namespace bodyreg
