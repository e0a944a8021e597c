#include "bodyreg/geometry.hpp"

#include "bodyreg/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include <json.hpp>

namespace bodyreg {

namespace {

constexpr double kCosineTolerance = 1e-3;
constexpr double kPositionTolerance = 1e-6;

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

std::vector<std::size_t> ascending_order(std::span<const double> positions) {
  std::vector<std::size_t> order(positions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return positions[a] < positions[b]; });
  return order;
}

}  // namespace

Vec3 slice_normal(const Orientation& o) {
  const Vec3 row{o[0], o[1], o[2]};
  const Vec3 col{o[3], o[4], o[5]};
  for (double v : o) {
    if (!std::isfinite(v)) throw Error(ErrorCode::DegenerateOrientation, "non-finite direction cosine");
  }
  if (std::abs(std::sqrt(dot(row, row)) - 1.0) > kCosineTolerance ||
      std::abs(std::sqrt(dot(col, col)) - 1.0) > kCosineTolerance) {
    throw Error(ErrorCode::DegenerateOrientation, "direction cosines are not unit vectors");
  }
  if (std::abs(dot(row, col)) > kCosineTolerance) {
    throw Error(ErrorCode::DegenerateOrientation, "row and column cosines are not orthogonal");
  }
  Vec3 n = cross(row, col);
  const double norm = std::sqrt(dot(n, n));
  for (double& v : n) v /= norm;
  return n;
}

double axial_angle(const Orientation& orientation) {
  const Vec3 n = slice_normal(orientation);
  const double c = std::min(1.0, std::abs(n[2]));
  return std::acos(c) * 180.0 / std::numbers::pi;
}

SliceGeometry slice_geometry(const SeriesRecord& series) {
  if (series.images.empty()) throw Error(ErrorCode::EmptySeries, "series " + series.series_uid + " has no images");
  SliceGeometry g;
  const bool all_positions = std::all_of(series.images.begin(), series.images.end(),
                                         [](const ImageRecord& im) { return im.image_position_patient.has_value(); });
  if (all_positions) {
    const auto it = std::find_if(series.images.begin(), series.images.end(),
                                 [](const ImageRecord& im) { return im.image_orientation_patient.has_value(); });
    if (it != series.images.end()) {
      g.normal = slice_normal(*it->image_orientation_patient);
    } else {
      g.assumed_axial = true;
    }
    for (const auto& im : series.images) g.position_along_normal.push_back(dot(g.normal, *im.image_position_patient));
  } else if (series.slice_thickness && *series.slice_thickness > 0.0) {
    g.from_slice_thickness = true;
    for (std::size_t i = 0; i < series.images.size(); ++i) {
      g.position_along_normal.push_back(static_cast<double>(i) * *series.slice_thickness);
    }
  } else {
    throw Error(ErrorCode::MissingGeometry, "series " + series.series_uid + " has neither positions nor slice thickness");
  }

  std::vector<double> sorted = g.position_along_normal;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> gaps;
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i] - sorted[i - 1] > kPositionTolerance) gaps.push_back(sorted[i] - sorted[i - 1]);
  }
  if (!gaps.empty()) {
    std::sort(gaps.begin(), gaps.end());
    const std::size_t m = gaps.size() / 2;
    g.spacing = gaps.size() % 2 ? gaps[m] : 0.5 * (gaps[m - 1] + gaps[m]);
  }
  return g;
}

std::vector<std::size_t> first_window(std::span<const double> positions, double step) {
  if (positions.empty()) return {};
  const double lowest = *std::min_element(positions.begin(), positions.end());
  std::vector<std::size_t> out;
  for (std::size_t i : ascending_order(positions)) {
    if (positions[i] - lowest < step - kPositionTolerance) out.push_back(i);
  }
  if (out.empty()) out.push_back(ascending_order(positions).front());
  return out;
}

std::vector<std::size_t> sample_from_start(std::span<const double> positions, double step, std::size_t start) {
  if (positions.empty()) throw Error(ErrorCode::EmptySeries, "cannot sample an empty series");
  if (!(step > 0.0)) throw Error(ErrorCode::InvalidArgument, "sampling step must be positive");
  if (start >= positions.size()) throw Error(ErrorCode::InvalidArgument, "start index out of range");
  const auto order = ascending_order(positions);
  std::vector<std::size_t> out;
  const auto from = std::find(order.begin(), order.end(), start);
  double last = 0.0;
  for (auto it = from; it != order.end(); ++it) {
    const double p = positions[*it];
    if (out.empty() || p - last >= step - kPositionTolerance) {
      out.push_back(*it);
      last = p;
    }
  }
  return out;
}

std::vector<std::size_t> sample_every_step(std::span<const double> positions, double step, Rng& rng) {
  if (positions.empty()) throw Error(ErrorCode::EmptySeries, "cannot sample an empty series");
  if (!(step > 0.0)) throw Error(ErrorCode::InvalidArgument, "sampling step must be positive");
  const auto window = first_window(positions, step);
  return sample_from_start(positions, step, window[rng.uniform_index(window.size())]);
}

std::vector<std::size_t> sample_every_10mm(const SeriesRecord& series, Rng& rng, double step_mm) {
  const SliceGeometry g = slice_geometry(series);
  return sample_every_step(g.position_along_normal, step_mm, rng);
}

LabelProjection project_box_labels(std::span<const BoundingBox3D> boxes, const SeriesRecord& series) {
  LabelProjection out;
  out.labels.assign(series.images.size(), std::nullopt);
  if (series.images.empty()) return out;
  const bool all_positions = std::all_of(series.images.begin(), series.images.end(),
                                         [](const ImageRecord& im) { return im.image_position_patient.has_value(); });
  if (!all_positions) {
    throw Error(ErrorCode::MissingGeometry, "series " + series.series_uid + " lacks ImagePositionPatient");
  }
  const auto it = std::find_if(series.images.begin(), series.images.end(),
                               [](const ImageRecord& im) { return im.image_orientation_patient.has_value(); });
  Vec3 normal{0.0, 0.0, 1.0};
  if (it != series.images.end()) {
    normal = slice_normal(*it->image_orientation_patient);
  } else {
    out.warnings.push_back("series " + series.series_uid + ": orientation absent, assuming axial");
  }

  struct Extent {
    const BoundingBox3D* box;
    double lo, hi, center;
  };
  std::vector<Extent> extents;
  for (const auto& box : boxes) {
    if (!series.frame_of_reference_uid || box.frame_of_reference_uid != *series.frame_of_reference_uid) {
      continue;
    }
    double lo = INFINITY, hi = -INFINITY;
    for (int corner = 0; corner < 8; ++corner) {
      const Vec3 c{(corner & 1) ? box.max_corner[0] : box.min_corner[0],
                   (corner & 2) ? box.max_corner[1] : box.min_corner[1],
                   (corner & 4) ? box.max_corner[2] : box.min_corner[2]};
      const double d = dot(normal, c);
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
    extents.push_back(Extent{&box, lo, hi, 0.5 * (lo + hi)});
  }
  if (extents.empty() && !boxes.empty()) {
    out.warnings.push_back("series " + series.series_uid + ": no box shares its frame of reference");
  }

  for (std::size_t i = 0; i < series.images.size(); ++i) {
    const double s = dot(normal, *series.images[i].image_position_patient);
    const Extent* best = nullptr;
    for (const auto& e : extents) {
      if (!(s >= e.lo - kPositionTolerance && s < e.hi - kPositionTolerance)) continue;
      if (best == nullptr) {
        best = &e;
        continue;
      }
      const double d_new = std::abs(e.center - s);
      const double d_best = std::abs(best->center - s);
      if (d_new < d_best ||
          (d_new == d_best && region_name(e.box->region) < region_name(best->box->region))) {
        best = &e;
      }
    }
    if (best != nullptr) out.labels[i] = best->box->region;
  }
  return out;
}

std::vector<BoundingBox3D> read_label_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw Error(ErrorCode::SchemaError, "label file must hold an array");
  std::vector<BoundingBox3D> boxes;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& rec = doc[i];
    auto fail = [&](const std::string& msg) {
      return Error(ErrorCode::SchemaError, "label record " + std::to_string(i) + ": " + msg);
    };
    try {
      BoundingBox3D box;
      box.frame_of_reference_uid = rec.at("frame_of_reference_uid").get<std::string>();
      const auto region = parse_region(rec.at("region").get<std::string>());
      if (!region) throw fail("unknown region");
      box.region = *region;
      box.min_corner = rec.at("min_corner").get<Vec3>();
      box.max_corner = rec.at("max_corner").get<Vec3>();
      for (int k = 0; k < 3; ++k) {
        if (box.min_corner[k] > box.max_corner[k]) throw fail("min_corner exceeds max_corner");
      }
      boxes.push_back(std::move(box));
    } catch (const nlohmann::json::exception& e) {
      throw fail(e.what());
    }
  }
  return boxes;
}

void write_label_file(std::span<const BoundingBox3D> boxes, const std::filesystem::path& path) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& b : boxes) {
    doc.push_back({{"frame_of_reference_uid", b.frame_of_reference_uid},
                   {"region", region_name(b.region)},
                   {"min_corner", b.min_corner},
                   {"max_corner", b.max_corner}});
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace bodyreg
