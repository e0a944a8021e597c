#pragma once

#include "bodyreg/geometry.hpp"
#include "bodyreg/records.hpp"
#include "bodyreg/region.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bodyreg {

// Low-frequency cosine pattern: cycles across the image in x and y.
struct Texture {
  int fx = 1;
  int fy = 0;
  double phase = 0.0;
  double amplitude = 400.0;
};

// Distinct per region, derived from the canonical index.
Texture default_texture(BodyRegion r);

struct PhantomRegion {
  BodyRegion region = BodyRegion::Abdomen;
  double extent_mm = 60.0;
  std::optional<Texture> texture;  // default_texture when absent
};

struct PhantomSpec {
  std::vector<PhantomRegion> regions;  // bottom to top, canonical order
  double spacing_mm = 2.0;
  double noise = 0.1;  // Gaussian sigma as a fraction of the texture amplitude
  std::uint64_t seed = 0;
  std::size_t matrix = 64;
  double z_origin = 0.0;

  Modality modality = Modality::CT;
  std::string uid_root = "1.2.826.0.1.3680043.10.543";
  std::uint32_t study_number = 1;
  std::string patient_id = "PHANTOM1";
  std::optional<int> patient_age;
  std::optional<PatientSex> patient_sex;
  std::optional<std::string> manufacturer;
  std::optional<std::string> institution;
  std::optional<std::string> contrast_agent;
  std::optional<std::string> body_part_examined;
  std::string series_description = "AXIAL";
};

struct PhantomResult {
  std::string study_uid;
  std::string series_uid;
  std::string frame_of_reference_uid;
  std::vector<std::filesystem::path> files;  // one per slice, bottom to top
  std::vector<BodyRegion> slice_labels;      // construction truth per slice
  std::vector<BoundingBox3D> boxes;
};

// Throws InvalidSpec for an empty region list, non-positive extents or
// spacing, regions out of canonical order, or a matrix too small to pass the
// cohort filter; IoError when files cannot be written.
PhantomResult generate_phantom(const PhantomSpec& spec, const std::filesystem::path& dir);

// JSON object with the PhantomSpec field names; regions is an array of
// {"region", "extent_mm", optional "texture": {"fx", "fy", "phase", "amplitude"}}.
// Unknown keys or ill-typed values throw InvalidSpec.
PhantomSpec parse_phantom_spec(std::string_view json_text);

struct PhantomCohortSpec {
  std::size_t studies = 48;
  std::vector<BodyRegion> regions{BodyRegion::Abdomen, BodyRegion::Chest,  BodyRegion::Head,
                                  BodyRegion::Neck,    BodyRegion::Pelvis, BodyRegion::Thigh};
  double mr_fraction = 0.5;
  double noise = 0.1;
  std::uint64_t seed = 0;
  std::size_t matrix = 64;
};

struct PhantomCohort {
  std::vector<PhantomResult> studies;
  std::filesystem::path label_file;
};

// Studies under dir/<study>/, each covering 2-3 adjacent entries of
// spec.regions, plus one label file (dir/labels.json) holding every box.
// Every study has one primary region (80 mm; the others 40-60 mm). MR
// studies are interleaved at exactly floor(n * mr_fraction), and primaries
// cycle through spec.regions separately per modality.
PhantomCohort generate_phantom_cohort(const PhantomCohortSpec& spec, const std::filesystem::path& dir);

}  // namespace bodyreg
