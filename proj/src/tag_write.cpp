#include "bodyreg/tag_write.hpp"

#include "bodyreg/dicom.hpp"
#include "bodyreg/error.hpp"
#include "text_util.hpp"

#include <array>
#include <fstream>
#include <map>
#include <ostream>

namespace bodyreg {

std::optional<BodyRegion> predominant_label(const SeriesResultRecord& result) {
  std::array<std::size_t, kRegionCount> counts{};
  bool any = false;
  for (const auto& im : result.images) {
    if (!im.label) continue;
    ++counts[region_index(*im.label)];
    any = true;
  }
  if (!any) return std::nullopt;
  std::size_t best = 0;
  for (std::size_t k = 1; k < kRegionCount; ++k) {
    if (counts[k] > counts[best]) best = k;
  }
  return region_at(best);
}

std::vector<TagChange> write_body_part_tags(std::span<const StudyRecord> studies,
                                            std::span<const SeriesResultRecord> results, bool dry_run,
                                            const std::optional<std::filesystem::path>& out_dir) {
  std::map<std::string, const SeriesResultRecord*> by_series;
  for (const auto& r : results) by_series[r.series_uid] = &r;
  if (out_dir && !dry_run) {
    std::error_code ec;
    std::filesystem::create_directories(*out_dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + out_dir->string() + ": " + ec.message());
  }

  std::vector<TagChange> log;
  for (const auto& st : studies) {
    for (const auto& se : st.series) {
      const auto it = by_series.find(se.series_uid);
      std::string skip;
      std::optional<BodyRegion> label;
      if (it == by_series.end()) {
        skip = "no classification result";
      } else if (it->second->status != SeriesStatus::Accepted) {
        skip = std::string(status_name(it->second->status));
      } else if (!(label = predominant_label(*it->second))) {
        skip = "no labelled images";
      }
      const std::string term = label ? std::string(body_part_term(*label)) : std::string();
      for (const auto& im : se.images) {
        TagChange c;
        c.path = im.source_path;
        c.series_uid = se.series_uid;
        c.sop_uid = im.sop_uid;
        c.old_value = st.body_part_examined;
        c.new_value = term;
        if (!skip.empty()) {
          c.action = "skipped";
          c.reason = skip;
        } else if (im.source_path.empty()) {
          c.action = "skipped";
          c.reason = "no source file";
        } else {
          const auto bytes = dicom::read_file_bytes(im.source_path);
          const auto parsed = dicom::parse_dicom(bytes);
          c.old_value = parsed.study.body_part_examined;
          if (dry_run) {
            c.action = "dry-run";
          } else {
            const auto updated = dicom::replace_body_part(bytes, parsed, term);
            const std::filesystem::path target =
                out_dir ? *out_dir / (im.sop_uid + ".dcm") : std::filesystem::path(im.source_path);
            std::ofstream out(target, std::ios::binary | std::ios::trunc);
            if (!out) throw Error(ErrorCode::IoError, "cannot write " + target.string());
            out.write(reinterpret_cast<const char*>(updated.data()), static_cast<std::streamsize>(updated.size()));
            if (!out) throw Error(ErrorCode::IoError, "write failed for " + target.string());
            c.path = target.string();
            c.action = "written";
          }
        }
        log.push_back(std::move(c));
      }
    }
  }
  return log;
}

void write_change_log(std::span<const TagChange> changes, std::ostream& out) {
  out << "path,series_uid,sop_uid,old_value,new_value,action,reason\n";
  for (const auto& c : changes) {
    out << text::csv_field(c.path) << ',' << text::csv_field(c.series_uid) << ',' << text::csv_field(c.sop_uid) << ','
        << text::csv_field(c.old_value.value_or("")) << ',' << text::csv_field(c.new_value) << ',' << c.action << ','
        << text::csv_field(c.reason) << '\n';
  }
}

}  // namespace bodyreg
