#pragma once

#include "bodyreg/dicom.hpp"
#include "bodyreg/records.hpp"

#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace bodyreg {

struct SkipEntry {
  std::string path;
  std::string error;
};

struct Cohort {
  std::vector<StudyRecord> studies;
  std::vector<SkipEntry> skipped;
};

// Walks `dir` recursively, parsing every regular file. Files that fail to
// parse land in the skip report; the walk never aborts on them.
Cohort ingest_tree(const std::filesystem::path& dir);

// Groups parsed files by StudyInstanceUID then SeriesInstanceUID. Input order
// breaks ties when images carry neither geometry nor instance numbers.
std::vector<StudyRecord> group_parsed(std::vector<dicom::ParsedDicom> parsed, std::vector<SkipEntry>& skipped);

// Sorts images by position along the slice normal when every image has a
// position, else by InstanceNumber when every image has one, else keeps order.
void order_series_images(SeriesRecord& series);

// MRI sequence-type categories whose keywords occur as tokens in `description`.
std::set<std::string> mr_sequence_categories(std::string_view description);

// One JSON object per image with study and series attributes repeated.
void write_metadata_ndjson(const std::vector<StudyRecord>& studies, std::ostream& out);
void write_metadata_ndjson(const std::vector<StudyRecord>& studies, const std::filesystem::path& path);

std::vector<StudyRecord> parse_metadata_ndjson(std::istream& in);
std::vector<StudyRecord> read_metadata_ndjson(const std::filesystem::path& path);

// Finds the image and owning series for a SOP instance UID.
struct ImageLocation {
  const StudyRecord* study = nullptr;
  const SeriesRecord* series = nullptr;
  const ImageRecord* image = nullptr;
};
std::vector<ImageLocation> flatten(const std::vector<StudyRecord>& studies);

}  // namespace bodyreg
