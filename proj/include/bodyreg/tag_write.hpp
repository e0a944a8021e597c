#pragma once

#include "bodyreg/postprocess.hpp"
#include "bodyreg/records.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bodyreg {

struct TagChange {
  std::string path;
  std::string series_uid;
  std::string sop_uid;
  std::optional<std::string> old_value;
  std::string new_value;
  std::string action;  // "written", "dry-run" or "skipped"
  std::string reason;
};

// Most frequent final label; ties go to the earlier canonical region.
std::optional<BodyRegion> predominant_label(const SeriesResultRecord& result);

// Rewrites (0018,0015) of every image of each accepted series to the defined
// term of its predominant label. Rejected series and series without a result
// are skipped with a reason. With dry_run no file is touched. When out_dir is
// set, rewritten files go there as <sop_uid>.dcm instead of in place.
std::vector<TagChange> write_body_part_tags(std::span<const StudyRecord> studies,
                                            std::span<const SeriesResultRecord> results, bool dry_run,
                                            const std::optional<std::filesystem::path>& out_dir = std::nullopt);

void write_change_log(std::span<const TagChange> changes, std::ostream& out);

}  // namespace bodyreg
