#include "bodyreg/postprocess.hpp"

#include "bodyreg/error.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace bodyreg {

std::string_view metric_name(UncertaintyMetric m) noexcept {
  return m == UncertaintyMetric::Margin ? "margin" : "entropy";
}

std::optional<UncertaintyMetric> parse_metric(std::string_view s) noexcept {
  if (s == "margin") return UncertaintyMetric::Margin;
  if (s == "entropy") return UncertaintyMetric::Entropy;
  return std::nullopt;
}

std::string_view status_name(SeriesStatus s) noexcept {
  return s == SeriesStatus::Accepted ? "Accepted" : "RejectedUncertain";
}

BodyRegion merge_target(std::span<const BodyRegion> labels) {
  const auto chest = std::count(labels.begin(), labels.end(), BodyRegion::Chest);
  const auto abdomen = std::count(labels.begin(), labels.end(), BodyRegion::Abdomen);
  return chest > abdomen ? BodyRegion::Chest : BodyRegion::Abdomen;
}

std::vector<BodyRegion> merge_abdomen_chest(std::span<const BodyRegion> labels) {
  const BodyRegion target = merge_target(labels);
  std::vector<BodyRegion> out(labels.begin(), labels.end());
  std::replace(out.begin(), out.end(), BodyRegion::AbdomenChest, target);
  return out;
}

std::vector<BodyRegion> apply_breast_rule(std::span<const BodyRegion> labels, Modality modality) {
  std::vector<BodyRegion> out(labels.begin(), labels.end());
  if (modality != Modality::MR || out.empty()) return out;
  const auto breast = static_cast<std::size_t>(std::count(out.begin(), out.end(), BodyRegion::Breast));
  if (2 * breast >= out.size()) std::fill(out.begin(), out.end(), BodyRegion::Breast);
  return out;
}

double mean_margin(std::span<const Prediction> predictions) {
  if (predictions.empty()) return 0.0;
  double s = 0.0;
  for (const auto& p : predictions) s += p.margin;
  return s / static_cast<double>(predictions.size());
}

double mean_entropy(std::span<const Prediction> predictions) {
  if (predictions.empty()) return 0.0;
  double s = 0.0;
  for (const auto& p : predictions) s += p.entropy;
  return s / static_cast<double>(predictions.size());
}

SeriesStatus reject_uncertain(std::span<const Prediction> predictions, UncertaintyMetric metric, double threshold,
                              Modality modality) {
  if (modality != Modality::MR || predictions.empty()) return SeriesStatus::Accepted;
  const bool uncertain = metric == UncertaintyMetric::Margin ? mean_margin(predictions) < threshold
                                                              : mean_entropy(predictions) > threshold;
  return uncertain ? SeriesStatus::RejectedUncertain : SeriesStatus::Accepted;
}

namespace {

struct Run {
  BodyRegion label;
  std::size_t begin;
  std::size_t length;
};

std::vector<Run> runs_of(std::span<const BodyRegion> labels) {
  std::vector<Run> runs;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (runs.empty() || runs.back().label != labels[i]) {
      runs.push_back({labels[i], i, 1});
    } else {
      ++runs.back().length;
    }
  }
  return runs;
}

}  // namespace

std::vector<BodyRegion> remove_outlier_runs(std::span<const BodyRegion> labels, std::size_t min_run) {
  std::vector<BodyRegion> out(labels.begin(), labels.end());
  for (;;) {
    const auto runs = runs_of(out);
    std::size_t pick = 0;
    for (std::size_t k = 1; k + 1 < runs.size(); ++k) {
      if (runs[k].length >= min_run) continue;
      if (pick == 0 || runs[k].length < runs[pick].length) pick = k;
    }
    if (pick == 0) return out;
    const Run& prev = runs[pick - 1];
    const Run& next = runs[pick + 1];
    const BodyRegion to = next.length > prev.length ? next.label : prev.label;
    std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(runs[pick].begin), runs[pick].length, to);
  }
}

std::vector<BodyRegion> smooth_labels(std::span<const ProbabilityVector> probabilities,
                                      std::span<const BodyRegion> current, std::size_t window) {
  if (probabilities.size() != current.size()) throw Error(ErrorCode::InvalidArgument, "length mismatch");
  if (window == 0) throw Error(ErrorCode::InvalidArgument, "window must be positive");
  const std::size_t n = current.size();
  const std::size_t half = window / 2;
  std::vector<BodyRegion> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    ProbabilityVector mean{};
    std::array<bool, kRegionCount> present{};
    for (std::size_t j = lo; j < hi; ++j) {
      present[region_index(current[j])] = true;
      for (std::size_t k = 0; k < kRegionCount; ++k) mean[k] += probabilities[j][k];
    }
    BodyRegion best = current[i];
    for (std::size_t k = 0; k < kRegionCount; ++k) {
      if (present[k] && mean[k] > mean[region_index(best)]) best = region_at(k);
    }
    out[i] = best;
  }
  return out;
}

std::vector<BodyRegion> smooth_labels(std::span<const Prediction> predictions, std::size_t window) {
  std::vector<ProbabilityVector> probs;
  std::vector<BodyRegion> labels;
  for (const auto& p : predictions) {
    probs.push_back(p.probabilities);
    labels.push_back(p.label);
  }
  return smooth_labels(probs, labels, window);
}

std::size_t count_transitions(std::span<const BodyRegion> labels) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < labels.size(); ++i) n += labels[i] != labels[i - 1];
  return n;
}

SeriesResult run_pipeline(std::string series_uid, std::vector<Prediction> predictions, Modality modality,
                          const PostprocessConfig& config) {
  if (predictions.empty()) throw Error(ErrorCode::EmptySeries, "series " + series_uid + " has no predictions");
  SeriesResult r;
  r.series_uid = std::move(series_uid);
  r.modality = modality;
  r.per_image = std::move(predictions);
  r.mean_margin = mean_margin(r.per_image);
  r.mean_entropy = mean_entropy(r.per_image);

  auto& t = r.trace;
  for (const auto& p : r.per_image) t.raw.push_back(p.label);
  t.merged = merge_abdomen_chest(t.raw);
  t.breast = apply_breast_rule(t.merged, modality);
  r.status = reject_uncertain(r.per_image, config.metric, config.threshold, modality);
  if (r.status == SeriesStatus::RejectedUncertain) return r;
  t.outliers_removed = remove_outlier_runs(t.breast, config.min_run);

  // Smoothing sees vectors consistent with the rule stages: AbdomenChest mass
  // goes to the merge target, and rule-relabelled positions become one-hot.
  const BodyRegion target = merge_target(t.raw);
  std::vector<ProbabilityVector> probs;
  probs.reserve(r.per_image.size());
  for (std::size_t i = 0; i < r.per_image.size(); ++i) {
    ProbabilityVector p = r.per_image[i].probabilities;
    p[region_index(target)] += p[region_index(BodyRegion::AbdomenChest)];
    p[region_index(BodyRegion::AbdomenChest)] = 0.0;
    if (t.outliers_removed[i] != t.merged[i]) {
      p.fill(0.0);
      p[region_index(t.outliers_removed[i])] = 1.0;
    }
    probs.push_back(p);
  }
  t.smoothed = smooth_labels(probs, t.outliers_removed, config.window);
  r.final_labels = t.smoothed;

  std::array<bool, kRegionCount> seen{};
  for (BodyRegion b : r.final_labels) seen[region_index(b)] = true;
  for (std::size_t k = 0; k < kRegionCount; ++k) {
    if (seen[k]) r.series_regions.push_back(region_at(k));
  }
  return r;
}

void write_series_result(const SeriesResult& r, std::ostream& out) {
  nlohmann::ordered_json j;
  j["series_uid"] = r.series_uid;
  j["modality"] = std::string(modality_name(r.modality));
  j["status"] = std::string(status_name(r.status));
  j["mean_margin"] = r.mean_margin;
  j["mean_entropy"] = r.mean_entropy;
  j["series_regions"] = nlohmann::ordered_json::array();
  for (BodyRegion b : r.series_regions) j["series_regions"].push_back(std::string(region_name(b)));
  j["images"] = nlohmann::ordered_json::array();
  const bool accepted = r.status == SeriesStatus::Accepted;
  for (std::size_t i = 0; i < r.per_image.size(); ++i) {
    const auto& p = r.per_image[i];
    nlohmann::ordered_json im;
    im["sop_uid"] = p.sop_uid;
    if (accepted) {
      im["label"] = std::string(region_name(r.final_labels[i]));
    } else {
      im["label"] = nullptr;
    }
    im["raw_label"] = std::string(region_name(p.label));
    im["margin"] = p.margin;
    im["entropy"] = p.entropy;
    j["images"].push_back(std::move(im));
  }
  out << j.dump() << '\n';
}

std::vector<SeriesResultRecord> parse_series_results(std::istream& in) {
  std::vector<SeriesResultRecord> out;
  std::string line;
  std::size_t lineno = 0;
  auto region = [&](const nlohmann::json& v) {
    auto r = parse_region(v.get<std::string>());
    if (!r) throw SchemaError(lineno, "unknown region " + v.get<std::string>());
    return *r;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SeriesResultRecord rec;
      rec.series_uid = j.at("series_uid").get<std::string>();
      rec.modality = parse_modality(j.value("modality", std::string("OT")));
      const auto status = j.at("status").get<std::string>();
      if (status == "Accepted") {
        rec.status = SeriesStatus::Accepted;
      } else if (status == "RejectedUncertain") {
        rec.status = SeriesStatus::RejectedUncertain;
      } else {
        throw SchemaError(lineno, "unknown status " + status);
      }
      for (const auto& b : j.value("series_regions", nlohmann::json::array())) rec.series_regions.push_back(region(b));
      for (const auto& im : j.at("images")) {
        SeriesResultImage x;
        x.sop_uid = im.at("sop_uid").get<std::string>();
        if (!im.at("label").is_null()) x.label = region(im.at("label"));
        x.raw_label = region(im.at("raw_label"));
        x.margin = im.value("margin", 0.0);
        x.entropy = im.value("entropy", 0.0);
        rec.images.push_back(std::move(x));
      }
      out.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(lineno, e.what());
    }
  }
  return out;
}

}  // namespace bodyreg
