#pragma once

#include "bodyreg/records.hpp"
#include "bodyreg/region.hpp"
#include "bodyreg/rng.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bodyreg {

struct BoundingBox3D {
  std::string frame_of_reference_uid;
  BodyRegion region = BodyRegion::Abdomen;
  Vec3 min_corner{};
  Vec3 max_corner{};

  bool operator==(const BoundingBox3D&) const = default;
};

// Unit normal of the slice plane (row cosines x column cosines). Throws
// DegenerateOrientation unless both cosine triples are unit within 1e-3 and
// orthogonal within 1e-3.
Vec3 slice_normal(const Orientation& orientation);

// Angle in degrees between the slice normal and the patient z axis, in [0, 90].
double axial_angle(const Orientation& orientation);

struct SliceGeometry {
  Vec3 normal{0.0, 0.0, 1.0};
  std::vector<double> position_along_normal;  // one per image, series order
  double spacing = 0.0;                       // median gap between distinct positions
  bool assumed_axial = false;                 // orientation absent, axial identity used
  bool from_slice_thickness = false;          // positions synthesized as index * thickness
};

// Physical slice positions of a series. Falls back to index * slice_thickness
// when any image lacks ImagePositionPatient. Throws MissingGeometry when
// neither is available and EmptySeries for an empty series.
SliceGeometry slice_geometry(const SeriesRecord& series);

// Indices whose position lies within the first `step` of the lowest position.
std::vector<std::size_t> first_window(std::span<const double> positions, double step);

// Greedy subsampling from `start`: walking in ascending position order, keep
// an image when it lies at least `step` past the last kept one. Indices are
// returned in ascending position order.
std::vector<std::size_t> sample_from_start(std::span<const double> positions, double step, std::size_t start);

// Same, with the start drawn uniformly from the first window.
std::vector<std::size_t> sample_every_step(std::span<const double> positions, double step, Rng& rng);

std::vector<std::size_t> sample_every_10mm(const SeriesRecord& series, Rng& rng, double step_mm = 10.0);

struct LabelProjection {
  std::vector<std::optional<BodyRegion>> labels;  // series image order
  std::vector<std::string> warnings;
};

// Assigns each image the region of a box in the same frame of reference whose
// extent along the slice normal contains the slice position: inclusive at the
// low end, exclusive at the high end. Overlaps go to the box whose center is
// nearest the slice, then to the lexicographically smaller region name.
LabelProjection project_box_labels(std::span<const BoundingBox3D> boxes, const SeriesRecord& series);

std::vector<BoundingBox3D> read_label_file(const std::filesystem::path& path);
void write_label_file(std::span<const BoundingBox3D> boxes, const std::filesystem::path& path);

}  // namespace bodyreg
