#include "bodyreg/classify.hpp"

#include "bodyreg/error.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace bodyreg {

namespace {

constexpr double kNormTolerance = 1e-6;

void finish(Prediction& p) {
  std::size_t best = kRegionCount;
  double p1 = -1.0, p2 = 0.0;
  for (std::size_t i = 0; i < kRegionCount; ++i) {
    const double v = p.probabilities[i];
    if (v > p1) {
      p2 = std::max(p1, 0.0);
      p1 = v;
      best = i;
    } else if (v > p2) {
      p2 = v;
    }
  }
  p.label = region_at(best);
  p.margin = std::clamp(p1 - p2, 0.0, 1.0);
  double h = 0.0;
  for (double v : p.probabilities) {
    if (v > 0.0) h -= v * std::log(v);
  }
  p.entropy = p.class_count > 1 ? std::clamp(h / std::log(static_cast<double>(p.class_count)), 0.0, 1.0) : 0.0;
}

}  // namespace

Prediction make_prediction(std::string sop_uid, const ClassSet& classes, std::span<const double> probabilities) {
  if (classes.size() == 0) throw Error(ErrorCode::InvalidArgument, "empty class set");
  if (probabilities.size() != classes.size()) {
    throw Error(ErrorCode::InvalidArgument, "expected " + std::to_string(classes.size()) + " probabilities, got " +
                                                std::to_string(probabilities.size()));
  }
  double sum = 0.0;
  for (double v : probabilities) {
    if (!std::isfinite(v) || v < 0.0) throw Error(ErrorCode::NotNormalized, "probabilities must be finite and >= 0");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kNormTolerance) {
    throw Error(ErrorCode::NotNormalized, "probabilities sum to " + text::format_double(sum));
  }
  Prediction p;
  p.sop_uid = std::move(sop_uid);
  p.class_count = classes.size();
  for (std::size_t k = 0; k < classes.size(); ++k) {
    p.probabilities[region_index(classes.regions()[k])] = probabilities[k] / sum;
  }
  finish(p);
  return p;
}

Prediction make_prediction(std::string sop_uid, const ProbabilityVector& probabilities, std::size_t class_count) {
  Prediction p;
  p.sop_uid = std::move(sop_uid);
  p.probabilities = probabilities;
  p.class_count = class_count;
  finish(p);
  return p;
}

std::vector<Prediction> classify_batch(std::span<const NormalizedImage> images, ClassifierBackend& backend) {
  std::vector<std::vector<double>> rows;
  try {
    backend.prepare();
    rows = backend.score_batch(images);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::BackendFailure) throw;
    throw Error(ErrorCode::BackendFailure, e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::BackendFailure, e.what());
  }
  if (rows.size() != images.size()) {
    throw Error(ErrorCode::BackendFailure, "backend returned " + std::to_string(rows.size()) + " rows for " +
                                               std::to_string(images.size()) + " images");
  }
  std::vector<Prediction> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    try {
      out.push_back(make_prediction(images[i].source_sop_uid, backend.classes(), rows[i]));
    } catch (const Error& e) {
      throw Error(ErrorCode::BackendFailure, "invalid scores for " + images[i].source_sop_uid + ": " + e.what());
    }
  }
  return out;
}

Prediction classify_image(const NormalizedImage& image, ClassifierBackend& backend) {
  return classify_batch(std::span<const NormalizedImage>(&image, 1), backend).front();
}

// ---------------------------------------------------------------------------

ScoreTable parse_scores(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw SchemaError(1, "missing header");
  ++lineno;
  auto header = text::split_csv(line);
  if (!header || header->size() < 2 || (*header)[0] != "sop_uid") {
    throw SchemaError(lineno, "header must start with sop_uid followed by class names");
  }
  std::vector<BodyRegion> regions;
  for (std::size_t i = 1; i < header->size(); ++i) {
    auto r = parse_region((*header)[i]);
    if (!r) throw SchemaError(lineno, "unknown class '" + (*header)[i] + "'");
    if (!regions.empty() && region_index(*r) <= region_index(regions.back())) {
      throw SchemaError(lineno, "class columns must be distinct and in canonical order");
    }
    regions.push_back(*r);
  }

  ScoreTable table{ClassSet(regions), {}};
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = text::split_csv(line);
    if (!fields || fields->size() != header->size()) {
      throw SchemaError(lineno, "expected " + std::to_string(header->size()) + " fields");
    }
    const std::string& uid = (*fields)[0];
    if (uid.empty()) throw SchemaError(lineno, "empty sop_uid");
    if (table.rows.count(uid)) throw SchemaError(lineno, "duplicate sop_uid " + uid);
    std::vector<double> values;
    double sum = 0.0;
    for (std::size_t i = 1; i < fields->size(); ++i) {
      auto v = text::parse_double((*fields)[i]);
      if (!v || !std::isfinite(*v)) throw SchemaError(lineno, "non-numeric probability '" + (*fields)[i] + "'");
      if (*v < 0.0) throw Error(ErrorCode::NotNormalized, "line " + std::to_string(lineno) + ": negative probability");
      values.push_back(*v);
      sum += *v;
    }
    if (std::abs(sum - 1.0) > kNormTolerance) {
      throw Error(ErrorCode::NotNormalized,
                  "line " + std::to_string(lineno) + ": probabilities sum to " + text::format_double(sum));
    }
    for (double& v : values) v /= sum;
    table.rows.emplace(uid, std::move(values));
  }
  return table;
}

ScoreTable load_scores(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return parse_scores(in);
}

void write_scores(const ClassSet& classes, std::span<const Prediction> predictions, std::ostream& out) {
  out << "sop_uid";
  for (BodyRegion r : classes.regions()) out << ',' << region_name(r);
  out << '\n';
  for (const auto& p : predictions) {
    out << text::csv_field(p.sop_uid);
    for (BodyRegion r : classes.regions()) out << ',' << text::format_double(p.probabilities[region_index(r)]);
    out << '\n';
  }
}

std::vector<std::vector<double>> ScoreFileBackend::score_batch(std::span<const NormalizedImage> images) {
  std::vector<std::vector<double>> out;
  out.reserve(images.size());
  for (const auto& im : images) {
    auto it = table_.rows.find(im.source_sop_uid);
    if (it == table_.rows.end()) throw Error(ErrorCode::BackendFailure, "no stored scores for " + im.source_sop_uid);
    out.push_back(it->second);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> centroid_features(const Matrix<double>& values) {
  if (values.empty()) throw Error(ErrorCode::EmptyImage, "cannot featurize an empty image");
  constexpr std::size_t g = kCentroidGrid;
  std::vector<double> out(g * g, 0.0);
  // Block b covers [b*n/g, (b+1)*n/g), widened to one pixel for tiny images.
  auto bounds = [](std::size_t b, std::size_t n) {
    std::size_t lo = b * n / g;
    std::size_t hi = (b + 1) * n / g;
    if (lo >= n) lo = n - 1;
    if (hi <= lo) hi = lo + 1;
    return std::pair{lo, hi};
  };
  for (std::size_t by = 0; by < g; ++by) {
    const auto [r0, r1] = bounds(by, values.rows());
    for (std::size_t bx = 0; bx < g; ++bx) {
      const auto [c0, c1] = bounds(bx, values.cols());
      double sum = 0.0;
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) sum += values(r, c);
      }
      out[by * g + bx] = sum / static_cast<double>((r1 - r0) * (c1 - c0));
    }
  }
  return out;
}

CentroidBackend::CentroidBackend(ClassSet classes, std::vector<std::vector<double>> centroids)
    : classes_(std::move(classes)), centroids_(std::move(centroids)) {
  if (classes_.size() == 0) throw Error(ErrorCode::EmptyClass, "centroid backend needs at least one class");
  if (centroids_.size() != classes_.size()) throw Error(ErrorCode::InvalidArgument, "one centroid per class required");
  for (const auto& c : centroids_) {
    if (c.size() != kCentroidGrid * kCentroidGrid) throw Error(ErrorCode::InvalidArgument, "centroid has wrong length");
  }
}

std::vector<std::vector<double>> CentroidBackend::score_batch(std::span<const NormalizedImage> images) {
  std::vector<std::vector<double>> out;
  out.reserve(images.size());
  for (const auto& im : images) {
    const auto f = centroid_features(im.values);
    std::vector<double> logits(centroids_.size());
    for (std::size_t k = 0; k < centroids_.size(); ++k) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < f.size(); ++j) d2 += (f[j] - centroids_[k][j]) * (f[j] - centroids_[k][j]);
      logits[k] = -std::sqrt(d2);
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& l : logits) z += (l = std::exp(l - top));
    for (double& l : logits) l /= z;
    out.push_back(std::move(logits));
  }
  return out;
}

void CentroidBackend::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["grid"] = kCentroidGrid;
  j["classes"] = nlohmann::json::array();
  for (BodyRegion r : classes_.regions()) j["classes"].push_back(std::string(region_name(r)));
  j["centroids"] = centroids_;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << j.dump() << '\n';
}

CentroidBackend CentroidBackend::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("grid").get<std::size_t>() != kCentroidGrid) throw SchemaError(1, "unsupported grid size");
    std::vector<BodyRegion> regions;
    for (const auto& name : j.at("classes")) {
      auto r = parse_region(name.get<std::string>());
      if (!r) throw SchemaError(1, "unknown class " + name.get<std::string>());
      regions.push_back(*r);
    }
    return CentroidBackend(ClassSet(std::move(regions)), j.at("centroids").get<std::vector<std::vector<double>>>());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(1, e.what());
  }
}

CentroidBackend train_centroid_features(std::span<const std::pair<std::vector<double>, BodyRegion>> labeled,
                                       const ClassSet* advertised) {
  std::array<std::vector<std::vector<double>>, kRegionCount> per_class;
  for (const auto& [features, region] : labeled) {
    if (features.size() != kCentroidGrid * kCentroidGrid) {
      throw Error(ErrorCode::InvalidArgument, "feature vector has the wrong length");
    }
    per_class[region_index(region)].push_back(features);
  }

  std::vector<BodyRegion> regions;
  if (advertised) {
    regions = advertised->regions();
    for (BodyRegion r : regions) {
      if (per_class[region_index(r)].empty()) {
        throw Error(ErrorCode::EmptyClass, "no training example for " + std::string(region_name(r)));
      }
    }
  } else {
    for (std::size_t i = 0; i < kRegionCount; ++i) {
      if (!per_class[i].empty()) regions.push_back(region_at(i));
    }
  }
  if (regions.empty()) throw Error(ErrorCode::EmptyClass, "no training examples");

  std::vector<std::vector<double>> centroids;
  for (BodyRegion r : regions) {
    auto& feats = per_class[region_index(r)];
    // Summing in a canonical order makes the mean independent of input order.
    std::sort(feats.begin(), feats.end());
    std::vector<double> mean(kCentroidGrid * kCentroidGrid, 0.0);
    for (const auto& f : feats) {
      for (std::size_t j = 0; j < f.size(); ++j) mean[j] += f[j];
    }
    for (double& m : mean) m /= static_cast<double>(feats.size());
    centroids.push_back(std::move(mean));
  }
  return CentroidBackend(ClassSet(std::move(regions)), std::move(centroids));
}

CentroidBackend train_centroid_baseline(std::span<const std::pair<NormalizedImage, BodyRegion>> labeled,
                                        const ClassSet* advertised) {
  std::vector<std::pair<std::vector<double>, BodyRegion>> features;
  features.reserve(labeled.size());
  for (const auto& [image, region] : labeled) features.emplace_back(centroid_features(image.values), region);
  return train_centroid_features(features, advertised);
}

}  // namespace bodyreg
