#include "bodyreg/ingest.hpp"

#include "bodyreg/error.hpp"
#include "bodyreg/geometry.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace bodyreg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> tokenize_upper(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || ch == '/' || ch == '*') {
      current.push_back(static_cast<char>(std::toupper(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

bool contains_phrase(const std::vector<std::string>& tokens, std::string_view phrase) {
  const auto words = tokenize_upper(phrase);
  if (words.empty() || words.size() > tokens.size()) return false;
  for (std::size_t i = 0; i + words.size() <= tokens.size(); ++i) {
    if (std::equal(words.begin(), words.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) return true;
  }
  return false;
}

struct SequenceCategory {
  std::string_view name;
  std::vector<std::string_view> keywords;
};

const std::vector<SequenceCategory>& sequence_table() {
  static const std::vector<SequenceCategory> table{
      {"Image weighting", {"T1", "T2", "T1/T2*", "T2*", "PD", "SWI", "SWAN", "BRAVO", "MERGE"}},
      {"Spin echo", {"SE", "FSE", "FAST SE", "SINGLE SHOT FSE", "SSFSE", "HASTE", "VISTA", "PROPELLER"}},
      {"Gradient echo",
       {"GRE", "FFE", "FE", "SPGR", "FGRE", "LAVA", "VIBRANT", "VIBE", "BLISS", "FISP", "SSFP", "FIESTA",
        "TRU FISP", "TRUFISP"}},
      {"Inversion recovery", {"IR", "STIR", "FLAIR"}},
      {"MRA", {"TOF", "MRA", "CONTRAST ENHANCED", "DELAY ENHANCED"}},
      {"In and Out of Phase", {"IN/OUT", "IN PHASE", "OUT OF PHASE", "INPHASE", "OUTPHASE"}},
      {"Diffusion", {"DIFFUSION", "DWI"}},
  };
  return table;
}

template <typename T>
void put_opt(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <typename T>
std::optional<T> get_opt(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

json image_to_json(const StudyRecord& st, const SeriesRecord& se, const ImageRecord& im) {
  json j;
  j["study_uid"] = st.study_uid;
  j["patient_id"] = st.patient_id;
  put_opt(j, "patient_age", st.patient_age);
  if (st.patient_sex) j["patient_sex"] = sex_name(*st.patient_sex);
  put_opt(j, "manufacturer", st.manufacturer);
  put_opt(j, "institution", st.institution);
  put_opt(j, "body_part_examined", st.body_part_examined);
  put_opt(j, "procedure_description", st.procedure_description);

  j["series_uid"] = se.series_uid;
  j["modality"] = modality_name(se.modality);
  j["series_description"] = se.series_description;
  put_opt(j, "frame_of_reference_uid", se.frame_of_reference_uid);
  put_opt(j, "slice_thickness", se.slice_thickness);
  put_opt(j, "convolution_kernel", se.convolution_kernel);
  put_opt(j, "contrast_agent", se.contrast_agent);
  j["sequence_tags"] = se.sequence_tags;

  j["sop_uid"] = im.sop_uid;
  if (!im.sop_class_uid.empty()) j["sop_class_uid"] = im.sop_class_uid;
  put_opt(j, "rows", im.rows);
  put_opt(j, "cols", im.cols);
  put_opt(j, "bits_allocated", im.bits_allocated);
  put_opt(j, "bits_stored", im.bits_stored);
  put_opt(j, "samples_per_pixel", im.samples_per_pixel);
  put_opt(j, "pixel_representation", im.pixel_representation);
  put_opt(j, "instance_number", im.instance_number);
  j["transfer_syntax_uid"] = im.transfer_syntax_uid;
  put_opt(j, "image_position_patient", im.image_position_patient);
  put_opt(j, "image_orientation_patient", im.image_orientation_patient);
  j["has_pixel_data"] = im.has_pixel_data;
  if (!im.source_path.empty()) j["source_path"] = im.source_path;
  return j;
}

std::string required_string(const json& j, const char* key, std::size_t line) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_string() || it->get<std::string>().empty()) {
    throw SchemaError(line, std::string("missing or empty '") + key + "'");
  }
  return it->get<std::string>();
}

void sort_hierarchy(std::vector<StudyRecord>& studies) {
  std::stable_sort(studies.begin(), studies.end(),
                   [](const StudyRecord& a, const StudyRecord& b) { return a.study_uid < b.study_uid; });
  for (auto& st : studies) {
    std::stable_sort(st.series.begin(), st.series.end(),
                     [](const SeriesRecord& a, const SeriesRecord& b) { return a.series_uid < b.series_uid; });
    for (auto& se : st.series) order_series_images(se);
  }
}

}  // namespace

std::set<std::string> mr_sequence_categories(std::string_view description) {
  const auto tokens = tokenize_upper(description);
  std::set<std::string> out;
  for (const auto& cat : sequence_table()) {
    for (auto kw : cat.keywords) {
      if (contains_phrase(tokens, kw)) {
        out.emplace(cat.name);
        break;
      }
    }
  }
  return out;
}

void order_series_images(SeriesRecord& series) {
  auto& images = series.images;
  if (images.size() < 2) return;
  const bool all_positions = std::all_of(images.begin(), images.end(),
                                         [](const ImageRecord& im) { return im.image_position_patient.has_value(); });
  if (all_positions) {
    try {
      const SliceGeometry g = slice_geometry(series);
      std::vector<std::size_t> order(images.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return g.position_along_normal[a] < g.position_along_normal[b];
      });
      std::vector<ImageRecord> sorted;
      sorted.reserve(images.size());
      for (std::size_t i : order) sorted.push_back(std::move(images[i]));
      images = std::move(sorted);
      return;
    } catch (const Error&) {
      // Degenerate orientation: fall through to instance numbers.
    }
  }
  const bool all_numbers = std::all_of(images.begin(), images.end(),
                                       [](const ImageRecord& im) { return im.instance_number.has_value(); });
  if (all_numbers) {
    std::stable_sort(images.begin(), images.end(), [](const ImageRecord& a, const ImageRecord& b) {
      return *a.instance_number < *b.instance_number;
    });
  }
}

std::vector<StudyRecord> group_parsed(std::vector<dicom::ParsedDicom> parsed, std::vector<SkipEntry>& skipped) {
  std::vector<StudyRecord> studies;
  std::map<std::string, std::size_t> study_index;
  std::map<std::pair<std::string, std::string>, std::size_t> series_index;
  for (auto& p : parsed) {
    const std::string& path = p.image.source_path;
    if (p.study.study_uid.empty() || p.series.series_uid.empty() || p.image.sop_uid.empty()) {
      skipped.push_back({path, "missing StudyInstanceUID, SeriesInstanceUID or SOPInstanceUID"});
      continue;
    }
    auto [sit, new_study] = study_index.try_emplace(p.study.study_uid, studies.size());
    if (new_study) {
      studies.push_back(p.study);
      studies.back().series.clear();
    }
    StudyRecord& study = studies[sit->second];
    auto [seit, new_series] = series_index.try_emplace({p.study.study_uid, p.series.series_uid}, study.series.size());
    if (new_series) {
      SeriesRecord series = p.series;
      series.images.clear();
      if (series.modality == Modality::MR) series.sequence_tags = mr_sequence_categories(series.series_description);
      study.series.push_back(std::move(series));
    }
    study.series[seit->second].images.push_back(std::move(p.image));
  }
  sort_hierarchy(studies);
  return studies;
}

Cohort ingest_tree(const fs::path& dir) {
  Cohort cohort;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorCode::IoError, dir.string() + " is not a readable directory");

  std::vector<fs::path> files;
  for (auto it = fs::recursive_directory_iterator(dir, fs::directory_options::skip_permission_denied, ec);
       !ec && it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (it->is_regular_file(ec)) files.push_back(it->path());
  }
  if (ec) cohort.skipped.push_back({dir.string(), "directory walk stopped: " + ec.message()});
  std::sort(files.begin(), files.end());

  std::vector<dicom::ParsedDicom> parsed;
  for (const auto& f : files) {
    try {
      parsed.push_back(dicom::read_dicom_file(f));
    } catch (const Error& e) {
      cohort.skipped.push_back({f.string(), e.what()});
    }
  }
  cohort.studies = group_parsed(std::move(parsed), cohort.skipped);
  return cohort;
}

void write_metadata_ndjson(const std::vector<StudyRecord>& studies, std::ostream& out) {
  for (const auto& st : studies) {
    for (const auto& se : st.series) {
      for (const auto& im : se.images) out << image_to_json(st, se, im).dump() << '\n';
    }
  }
}

void write_metadata_ndjson(const std::vector<StudyRecord>& studies, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  write_metadata_ndjson(studies, out);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::vector<StudyRecord> parse_metadata_ndjson(std::istream& in) {
  std::vector<StudyRecord> studies;
  std::map<std::string, std::size_t> study_index;
  std::map<std::pair<std::string, std::string>, std::size_t> series_index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw SchemaError(line_no, e.what());
    }
    if (!j.is_object()) throw SchemaError(line_no, "record is not an object");
    try {
      ImageRecord im;
      im.sop_uid = required_string(j, "sop_uid", line_no);
      const std::string study_uid = required_string(j, "study_uid", line_no);
      const std::string series_uid = required_string(j, "series_uid", line_no);
      im.sop_class_uid = j.value("sop_class_uid", std::string{});
      im.rows = get_opt<int>(j, "rows");
      im.cols = get_opt<int>(j, "cols");
      im.bits_allocated = get_opt<int>(j, "bits_allocated");
      im.bits_stored = get_opt<int>(j, "bits_stored");
      im.samples_per_pixel = get_opt<int>(j, "samples_per_pixel");
      im.pixel_representation = get_opt<int>(j, "pixel_representation");
      im.instance_number = get_opt<int>(j, "instance_number");
      im.transfer_syntax_uid = j.value("transfer_syntax_uid", std::string{});
      im.image_position_patient = get_opt<Vec3>(j, "image_position_patient");
      im.image_orientation_patient = get_opt<Orientation>(j, "image_orientation_patient");
      im.has_pixel_data = j.value("has_pixel_data", false);
      im.source_path = j.value("source_path", std::string{});
      if ((im.rows && *im.rows <= 0) || (im.cols && *im.cols <= 0)) {
        throw SchemaError(line_no, "rows and cols must be positive");
      }
      if (im.bits_stored && im.bits_allocated && *im.bits_stored > *im.bits_allocated) {
        throw SchemaError(line_no, "bits_stored exceeds bits_allocated");
      }
      if (im.samples_per_pixel && *im.samples_per_pixel < 1) {
        throw SchemaError(line_no, "samples_per_pixel must be at least 1");
      }

      auto [sit, new_study] = study_index.try_emplace(study_uid, studies.size());
      if (new_study) {
        StudyRecord st;
        st.study_uid = study_uid;
        st.patient_id = j.value("patient_id", std::string{});
        st.patient_age = get_opt<double>(j, "patient_age");
        if (auto sex = get_opt<std::string>(j, "patient_sex")) st.patient_sex = parse_sex(*sex);
        st.manufacturer = get_opt<std::string>(j, "manufacturer");
        st.institution = get_opt<std::string>(j, "institution");
        st.body_part_examined = get_opt<std::string>(j, "body_part_examined");
        st.procedure_description = get_opt<std::string>(j, "procedure_description");
        studies.push_back(std::move(st));
      }
      StudyRecord& study = studies[sit->second];
      auto [seit, new_series] = series_index.try_emplace({study_uid, series_uid}, study.series.size());
      if (new_series) {
        SeriesRecord se;
        se.series_uid = series_uid;
        se.modality = parse_modality(j.value("modality", std::string{}));
        se.series_description = j.value("series_description", std::string{});
        se.frame_of_reference_uid = get_opt<std::string>(j, "frame_of_reference_uid");
        se.slice_thickness = get_opt<double>(j, "slice_thickness");
        se.convolution_kernel = get_opt<std::string>(j, "convolution_kernel");
        se.contrast_agent = get_opt<std::string>(j, "contrast_agent");
        if (auto t = get_opt<std::set<std::string>>(j, "sequence_tags")) se.sequence_tags = std::move(*t);
        study.series.push_back(std::move(se));
      }
      study.series[seit->second].images.push_back(std::move(im));
    } catch (const json::exception& e) {
      throw SchemaError(line_no, e.what());
    }
  }
  sort_hierarchy(studies);
  return studies;
}

std::vector<StudyRecord> read_metadata_ndjson(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return parse_metadata_ndjson(in);
}

std::vector<ImageLocation> flatten(const std::vector<StudyRecord>& studies) {
  std::vector<ImageLocation> out;
  for (const auto& st : studies) {
    for (const auto& se : st.series) {
      for (const auto& im : se.images) out.push_back({&st, &se, &im});
    }
  }
  return out;
}

}  // namespace bodyreg
