#pragma once

#include "bodyreg/matrix.hpp"
#include "bodyreg/region.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace bodyreg {

using Vec3 = std::array<double, 3>;
using Orientation = std::array<double, 6>;

enum class PatientSex { Female, Male, Other };

// One image instance. Attributes absent from the source stay absent.
struct ImageRecord {
  std::string sop_uid;
  std::string sop_class_uid;
  std::optional<int> rows;
  std::optional<int> cols;
  std::optional<int> bits_allocated;
  std::optional<int> bits_stored;
  std::optional<int> samples_per_pixel;
  std::optional<int> pixel_representation;  // 1 = two's complement samples
  std::optional<int> instance_number;
  std::string transfer_syntax_uid;
  std::optional<Vec3> image_position_patient;
  std::optional<Orientation> image_orientation_patient;
  bool has_pixel_data = false;
  std::string source_path;
  std::optional<Matrix<std::int32_t>> pixels;

  bool metadata_equal(const ImageRecord& other) const;
};

struct SeriesRecord {
  std::string series_uid;
  Modality modality = Modality::Other;
  std::string series_description;
  std::optional<std::string> frame_of_reference_uid;
  std::optional<double> slice_thickness;
  std::optional<std::string> convolution_kernel;
  std::optional<std::string> contrast_agent;
  std::set<std::string> sequence_tags;
  std::vector<ImageRecord> images;

  bool metadata_equal(const SeriesRecord& other) const;
};

struct StudyRecord {
  std::string study_uid;
  std::string patient_id;
  std::optional<double> patient_age;
  std::optional<PatientSex> patient_sex;
  std::optional<std::string> manufacturer;
  std::optional<std::string> institution;
  std::optional<std::string> body_part_examined;
  std::optional<std::string> procedure_description;
  std::vector<SeriesRecord> series;

  bool metadata_equal(const StudyRecord& other) const;
  std::size_t image_count() const;
};

std::string_view sex_name(PatientSex s) noexcept;
std::optional<PatientSex> parse_sex(std::string_view s) noexcept;

}  // namespace bodyreg
