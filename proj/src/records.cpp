#include "bodyreg/records.hpp"

#include <algorithm>

namespace bodyreg {

bool ImageRecord::metadata_equal(const ImageRecord& o) const {
  return sop_uid == o.sop_uid && sop_class_uid == o.sop_class_uid && rows == o.rows && cols == o.cols &&
         bits_allocated == o.bits_allocated && bits_stored == o.bits_stored &&
         samples_per_pixel == o.samples_per_pixel && pixel_representation == o.pixel_representation &&
         instance_number == o.instance_number && transfer_syntax_uid == o.transfer_syntax_uid &&
         image_position_patient == o.image_position_patient &&
         image_orientation_patient == o.image_orientation_patient && has_pixel_data == o.has_pixel_data &&
         source_path == o.source_path;
}

bool SeriesRecord::metadata_equal(const SeriesRecord& o) const {
  if (series_uid != o.series_uid || modality != o.modality || series_description != o.series_description ||
      frame_of_reference_uid != o.frame_of_reference_uid || slice_thickness != o.slice_thickness ||
      convolution_kernel != o.convolution_kernel || contrast_agent != o.contrast_agent ||
      sequence_tags != o.sequence_tags || images.size() != o.images.size()) {
    return false;
  }
  return std::equal(images.begin(), images.end(), o.images.begin(),
                    [](const ImageRecord& a, const ImageRecord& b) { return a.metadata_equal(b); });
}

bool StudyRecord::metadata_equal(const StudyRecord& o) const {
  if (study_uid != o.study_uid || patient_id != o.patient_id || patient_age != o.patient_age ||
      patient_sex != o.patient_sex || manufacturer != o.manufacturer || institution != o.institution ||
      body_part_examined != o.body_part_examined || procedure_description != o.procedure_description ||
      series.size() != o.series.size()) {
    return false;
  }
  return std::equal(series.begin(), series.end(), o.series.begin(),
                    [](const SeriesRecord& a, const SeriesRecord& b) { return a.metadata_equal(b); });
}

std::size_t StudyRecord::image_count() const {
  std::size_t n = 0;
  for (const auto& s : series) n += s.images.size();
  return n;
}

std::string_view sex_name(PatientSex s) noexcept {
  switch (s) {
    case PatientSex::Female: return "F";
    case PatientSex::Male: return "M";
    case PatientSex::Other: return "O";
  }
  return "O";
}

std::optional<PatientSex> parse_sex(std::string_view s) noexcept {
  if (s == "F") return PatientSex::Female;
  if (s == "M") return PatientSex::Male;
  if (s == "O") return PatientSex::Other;
  return std::nullopt;
}

}  // namespace bodyreg
