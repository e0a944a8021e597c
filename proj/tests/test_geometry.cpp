#include "bodyreg/error.hpp"
#include "bodyreg/geometry.hpp"
#include "bodyreg/ingest.hpp"
#include "bodyreg/phantom.hpp"

#include "support/test_support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace bodyreg;
using Catch::Matchers::WithinAbs;

namespace {

SeriesRecord axial_series(const std::vector<double>& z, const std::string& frame = "F") {
  SeriesRecord s;
  s.series_uid = "S";
  s.modality = Modality::CT;
  s.frame_of_reference_uid = frame;
  for (std::size_t i = 0; i < z.size(); ++i) {
    ImageRecord im;
    im.sop_uid = "I" + std::to_string(i);
    im.image_position_patient = Vec3{-100.0, -100.0, z[i]};
    im.image_orientation_patient = Orientation{1, 0, 0, 0, 1, 0};
    s.images.push_back(im);
  }
  return s;
}

std::vector<double> grid(double start, double step, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(start + step * i);
  return v;
}

}  // namespace

TEST_CASE("axial angle on identity, sagittal, coronal and 45 degree fixtures") {
  CHECK(axial_angle({1, 0, 0, 0, 1, 0}) == 0.0);
  CHECK(axial_angle({0, 1, 0, 0, 0, -1}) == 90.0);
  CHECK(axial_angle({1, 0, 0, 0, 0, -1}) == 90.0);
  const double h = std::sqrt(0.5);
  CHECK_THAT(axial_angle({1, 0, 0, 0, h, -h}), WithinAbs(45.0, 1e-12));
  // The sign of the normal does not matter.
  CHECK(axial_angle({-1, 0, 0, 0, 1, 0}) == 0.0);
}

TEST_CASE("slice normal rejects degenerate orientations") {
  auto code = [](const Orientation& o) {
    try {
      slice_normal(o);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode{};
  };
  CHECK(code({1, 0, 0, 1, 0, 0}) == ErrorCode::DegenerateOrientation);
  CHECK(code({2, 0, 0, 0, 1, 0}) == ErrorCode::DegenerateOrientation);
  CHECK(code({0, 0, 0, 0, 1, 0}) == ErrorCode::DegenerateOrientation);
  CHECK(code({1, 0, 0, 0.0005, 1, 0}) == ErrorCode{});
}

TEST_CASE("greedy 10 mm sampling at 2 mm spacing") {
  const auto z = grid(0.0, 2.0, 21);  // 0..40 mm
  CHECK(first_window(z, 10.0) == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK(sample_from_start(z, 10.0, 0) == std::vector<std::size_t>{0, 5, 10, 15, 20});
  CHECK(sample_from_start(z, 10.0, 3) == std::vector<std::size_t>{3, 8, 13, 18});
}

TEST_CASE("greedy 10 mm sampling at 12 mm spacing keeps every slice") {
  const auto z = grid(-30.0, 12.0, 6);
  CHECK(first_window(z, 10.0) == std::vector<std::size_t>{0});
  CHECK(sample_from_start(z, 10.0, 0) == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("sampling follows position order, not storage order") {
  const std::vector<double> z{8.0, 0.0, 4.0, 12.0, 2.0};
  // ascending: 0 (1), 2 (4), 4 (2), 8 (0), 12 (3)
  CHECK(sample_from_start(z, 5.0, 1) == std::vector<std::size_t>{1, 0});
  CHECK(sample_from_start(z, 5.0, 4) == std::vector<std::size_t>{4, 0});
  CHECK(first_window(z, 5.0) == std::vector<std::size_t>{1, 4, 2});
}

TEST_CASE("random start lies in the first window") {
  const auto z = grid(0.0, 2.0, 50);
  Rng rng(7);
  std::set<std::size_t> starts;
  for (int i = 0; i < 200; ++i) {
    const auto idx = sample_every_step(z, 10.0, rng);
    REQUIRE_FALSE(idx.empty());
    starts.insert(idx.front());
    for (std::size_t k = 1; k < idx.size(); ++k) CHECK(z[idx[k]] - z[idx[k - 1]] == 10.0);
  }
  CHECK(starts == std::set<std::size_t>{0, 1, 2, 3, 4});
}

TEST_CASE("slice geometry falls back to slice thickness") {
  auto s = axial_series({0, 3, 6});
  for (auto& im : s.images) im.image_position_patient.reset();
  CHECK_THROWS_AS(slice_geometry(s), Error);
  s.slice_thickness = 2.5;
  const auto g = slice_geometry(s);
  CHECK(g.from_slice_thickness);
  CHECK(g.position_along_normal == std::vector<double>{0.0, 2.5, 5.0});
  CHECK(g.spacing == 2.5);
}

TEST_CASE("box projection: half-open extents, frame match, overlap rules") {
  const auto s = axial_series({0, 10, 20, 30, 40});
  std::vector<BoundingBox3D> boxes{
      {"F", BodyRegion::Pelvis, {-200, -200, 0}, {200, 200, 20}},
      {"F", BodyRegion::Abdomen, {-200, -200, 20}, {200, 200, 40}},
      {"OTHER", BodyRegion::Head, {-200, -200, 0}, {200, 200, 100}},
  };
  auto p = project_box_labels(boxes, s);
  CHECK(p.labels[0] == BodyRegion::Pelvis);
  CHECK(p.labels[1] == BodyRegion::Pelvis);
  CHECK(p.labels[2] == BodyRegion::Abdomen);  // low end inclusive
  CHECK(p.labels[3] == BodyRegion::Abdomen);
  CHECK_FALSE(p.labels[4]);                    // high end exclusive

  // Overlap: nearest center wins.
  boxes = {{"F", BodyRegion::Chest, {-1, -1, 0}, {1, 1, 40}}, {"F", BodyRegion::Neck, {-1, -1, 25}, {1, 1, 45}}};
  p = project_box_labels(boxes, s);
  CHECK(p.labels[3] == BodyRegion::Neck);   // 30: |30-35| < |30-20|
  CHECK(p.labels[2] == BodyRegion::Chest);

  // Equidistant centers: smaller name.
  boxes = {{"F", BodyRegion::Pelvis, {-1, -1, 0}, {1, 1, 40}}, {"F", BodyRegion::Abdomen, {-1, -1, 10}, {1, 1, 30}}};
  p = project_box_labels(boxes, s);
  CHECK(p.labels[2] == BodyRegion::Abdomen);
}

TEST_CASE("label file round trip") {
  testing::TempDir dir;
  const std::vector<BoundingBox3D> boxes{{"1.2.3", BodyRegion::CervicalSpine, {-1.5, 2, 3}, {4, 5, 6.25}},
                                         {"1.2.4", BodyRegion::Thigh, {0, 0, -100}, {10, 10, 0}}};
  write_label_file(boxes, dir / "labels.json");
  CHECK(read_label_file(dir / "labels.json") == boxes);
}

TEST_CASE("projection reproduces phantom construction exactly") {
  testing::TempDir dir;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    PhantomSpec spec;
    spec.seed = seed;
    spec.study_number = static_cast<std::uint32_t>(seed);
    spec.spacing_mm = seed == 2 ? 2.5 : 2.0;
    spec.z_origin = -37.0 * static_cast<double>(seed);
    spec.regions = {{BodyRegion::Abdomen, 40.0, {}}, {BodyRegion::Chest, 50.0, {}}, {BodyRegion::Neck, 30.0, {}}};
    const auto sub = dir / ("p" + std::to_string(seed));
    const PhantomResult r = generate_phantom(spec, sub);
    const Cohort c = ingest_tree(sub);
    REQUIRE(c.studies.size() == 1);
    REQUIRE(c.studies[0].series.size() == 1);
    const auto& series = c.studies[0].series[0];
    REQUIRE(series.images.size() == r.slice_labels.size());
    const auto proj = project_box_labels(r.boxes, series);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < proj.labels.size(); ++i) agree += proj.labels[i] == r.slice_labels[i];
    CHECK(agree == r.slice_labels.size());
  }
}
