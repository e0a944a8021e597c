#include "bodyreg/cohort_filter.hpp"

#include "bodyreg/dicom.hpp"
#include "bodyreg/error.hpp"
#include "bodyreg/geometry.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

namespace bodyreg {

std::string_view filter_reason_name(FilterReason r) noexcept {
  switch (r) {
    case FilterReason::Included: return "Included";
    case FilterReason::NotAxial: return "NotAxial";
    case FilterReason::MPRorDerived: return "MPRorDerived";
    case FilterReason::KeywordExcluded: return "KeywordExcluded";
    case FilterReason::LowBitDepth: return "LowBitDepth";
    case FilterReason::MultiChannel: return "MultiChannel";
    case FilterReason::NoPixelData: return "NoPixelData";
    case FilterReason::TooFewPixels: return "TooFewPixels";
    case FilterReason::UnsupportedCodec: return "UnsupportedCodec";
    case FilterReason::WrongModality: return "WrongModality";
  }
  return "Included";
}

FilterConfig FilterConfig::defaults() {
  FilterConfig c;
  c.mr_keywords = {"FLOW", "VELOCITY", "ADC", "APPARENT DIFFUSION", "IDEAL", "EP2D_DIFF", "FASTPC", "PC",
                   "CBV", "CBF", "MTT", "TTP", "CAD", "DWI_SSH", "VIPR"};
  c.ct_keywords = {"VELOCITY"};
  c.derived_keywords = {"SCOUT", "LOCALIZER", "REFORMAT", "MPR", "SECONDARY", "DOSE", "CINE", "3D", "CALIBRATION"};
  return c;
}

bool contains_keyword(std::string_view text, std::string_view keyword) {
  if (keyword.empty()) return false;
  auto eq = [](char a, char b) {
    return std::toupper(static_cast<unsigned char>(a)) == std::toupper(static_cast<unsigned char>(b));
  };
  return std::search(text.begin(), text.end(), keyword.begin(), keyword.end(), eq) != text.end();
}

namespace {

const std::string* first_match(std::string_view text, const std::vector<std::string>& keywords) {
  for (const auto& kw : keywords) {
    if (contains_keyword(text, kw)) return &kw;
  }
  return nullptr;
}

}  // namespace

FilterDecision filter_series(const SeriesRecord& series, const FilterConfig& config) {
  if (series.modality == Modality::Other) {
    return FilterDecision::exclude(FilterReason::WrongModality, "modality is neither CT nor MR");
  }

  std::string note;
  const auto oriented = std::find_if(series.images.begin(), series.images.end(),
                                     [](const ImageRecord& im) { return im.image_orientation_patient.has_value(); });
  if (oriented == series.images.end()) {
    if (config.strict_geometry) return FilterDecision::exclude(FilterReason::NotAxial, "orientation absent");
    note = "orientation absent; assumed axial";
  } else {
    try {
      const double angle = axial_angle(*oriented->image_orientation_patient);
      if (angle > config.max_axial_angle_deg + 1e-9) {
        return FilterDecision::exclude(FilterReason::NotAxial, "axial angle " + std::to_string(angle) + " deg");
      }
    } catch (const Error& e) {
      return FilterDecision::exclude(FilterReason::NotAxial, e.what());
    }
  }

  const auto& modality_keywords = series.modality == Modality::MR ? config.mr_keywords : config.ct_keywords;
  if (const auto* kw = first_match(series.series_description, modality_keywords)) {
    return FilterDecision::exclude(FilterReason::KeywordExcluded, "keyword " + *kw);
  }
  if (const auto* kw = first_match(series.series_description, config.derived_keywords)) {
    return FilterDecision::exclude(FilterReason::MPRorDerived, "keyword " + *kw);
  }
  return FilterDecision::include(std::move(note));
}

FilterDecision filter_image(const ImageRecord& image, const FilterConfig& config) {
  if (!image.has_pixel_data) return FilterDecision::exclude(FilterReason::NoPixelData, "pixel data absent");
  if (image.samples_per_pixel && *image.samples_per_pixel > 1) {
    return FilterDecision::exclude(FilterReason::MultiChannel,
                                   std::to_string(*image.samples_per_pixel) + " samples per pixel");
  }
  const auto bits = image.bits_stored ? image.bits_stored : image.bits_allocated;
  if (!bits) return FilterDecision::exclude(FilterReason::LowBitDepth, "bit depth absent");
  if (*bits <= config.max_excluded_bits) {
    return FilterDecision::exclude(FilterReason::LowBitDepth, std::to_string(*bits) + " bits stored");
  }
  if (!image.rows || !image.cols) return FilterDecision::exclude(FilterReason::TooFewPixels, "dimensions absent");
  const long long pixels = static_cast<long long>(*image.rows) * *image.cols;
  if (pixels < config.min_pixels) {
    return FilterDecision::exclude(FilterReason::TooFewPixels, std::to_string(pixels) + " pixels");
  }
  const std::string& ts = image.transfer_syntax_uid;
  if (!dicom::is_native_syntax(ts) && ts != dicom::kRleLossless && !dicom::is_jpeg_lossless(ts)) {
    return FilterDecision::exclude(FilterReason::UnsupportedCodec, "transfer syntax " + ts);
  }
  return FilterDecision::include();
}

FilterOutcome filter_cohort(const std::vector<StudyRecord>& studies, const FilterConfig& config) {
  FilterOutcome out;
  for (const auto& st : studies) {
    StudyRecord kept = st;
    kept.series.clear();
    for (const auto& se : st.series) {
      FilterDecision sd = filter_series(se, config);
      const bool series_ok = sd.included;
      out.report.push_back({se.series_uid, "series", std::move(sd)});
      if (!series_ok) continue;
      SeriesRecord kept_series = se;
      kept_series.images.clear();
      for (const auto& im : se.images) {
        FilterDecision id = filter_image(im, config);
        if (id.included) kept_series.images.push_back(im);
        out.report.push_back({im.sop_uid, "image", std::move(id)});
      }
      if (!kept_series.images.empty()) kept.series.push_back(std::move(kept_series));
    }
    if (!kept.series.empty()) out.included.push_back(std::move(kept));
  }
  return out;
}

using text::csv_field;

void write_filter_report(const std::vector<FilterReportRow>& rows, std::ostream& out) {
  out << "uid,level,included,reason,detail\n";
  for (const auto& r : rows) {
    out << csv_field(r.uid) << ',' << r.level << ',' << (r.decision.included ? "true" : "false") << ','
        << filter_reason_name(r.decision.reason) << ',' << csv_field(r.decision.detail) << '\n';
  }
}

// ---------------------------------------------------------------------------

DedupeResult dedupe_patients(const std::vector<StudyRecord>& studies, Rng& rng) {
  std::map<std::string, std::vector<std::size_t>> by_patient;
  std::vector<bool> keep(studies.size(), false);
  DedupeResult out;
  for (std::size_t i = 0; i < studies.size(); ++i) {
    if (studies[i].patient_id.empty()) {
      keep[i] = true;
      out.missing_patient_id.push_back(studies[i].study_uid);
    } else {
      by_patient[studies[i].patient_id].push_back(i);
    }
  }
  for (const auto& [patient, indices] : by_patient) {
    keep[indices[indices.size() == 1 ? 0 : rng.uniform_index(indices.size())]] = true;
  }
  for (std::size_t i = 0; i < studies.size(); ++i) {
    if (keep[i]) out.studies.push_back(studies[i]);
  }
  return out;
}

std::string_view split_name(Split s) noexcept { return s == Split::Train ? "train" : "validation"; }

std::vector<PartitionAssignment> partition_patients(const std::vector<PartitionInput>& studies, double ratio) {
  if (studies.empty()) throw Error(ErrorCode::EmptyCohort, "no studies to partition");
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error(ErrorCode::InvalidArgument, "split ratio must lie in (0, 1)");

  // A patient is the assignment unit so no patient lands in both splits.
  struct Unit {
    std::vector<std::size_t> members;
    std::size_t images = 0;
    std::size_t largest = 0;
  };
  std::vector<Unit> units;
  std::map<std::string, std::size_t> unit_of_patient;
  for (std::size_t i = 0; i < studies.size(); ++i) {
    const std::string key = studies[i].patient_id.empty() ? "\x01" + studies[i].study_uid : studies[i].patient_id;
    auto [it, fresh] = unit_of_patient.try_emplace(key, units.size());
    if (fresh) units.push_back(Unit{{}, 0, i});
    Unit& u = units[it->second];
    u.members.push_back(i);
    u.images += studies[i].image_count;
    if (studies[i].image_count > studies[u.largest].image_count) u.largest = i;
  }

  std::map<BodyRegion, std::vector<std::size_t>> by_region;
  for (std::size_t u = 0; u < units.size(); ++u) by_region[studies[units[u].largest].region].push_back(u);

  std::vector<Split> split_of_study(studies.size(), Split::Train);
  for (auto& [region, members] : by_region) {
    std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      if (units[a].images != units[b].images) return units[a].images > units[b].images;
      return studies[units[a].largest].study_uid < studies[units[b].largest].study_uid;
    });
    std::size_t train = 0;
    for (std::size_t k = 0; k < members.size(); ++k) {
      const auto target = static_cast<std::size_t>(std::floor(static_cast<double>(k + 1) * ratio + 0.5));
      const Split s = train < target ? Split::Train : Split::Validation;
      if (s == Split::Train) ++train;
      for (std::size_t i : units[members[k]].members) split_of_study[i] = s;
    }
  }

  std::vector<PartitionAssignment> out;
  out.reserve(studies.size());
  for (std::size_t i = 0; i < studies.size(); ++i) {
    out.push_back({studies[i].study_uid, split_of_study[i], studies[i].region});
  }
  return out;
}

std::vector<std::string> audit_sample(const std::vector<AuditInput>& studies, double fraction, Rng& rng) {
  if (studies.empty()) throw Error(ErrorCode::EmptyCohort, "no studies to audit");
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error(ErrorCode::InvalidArgument, "audit fraction must lie in [0, 1]");
  const auto total = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(studies.size()) - 1e-9));

  std::map<BodyRegion, std::vector<std::size_t>> by_region;
  for (std::size_t i = 0; i < studies.size(); ++i) by_region[studies[i].region].push_back(i);
  std::vector<std::vector<std::size_t>*> groups;
  for (auto& [region, members] : by_region) groups.push_back(&members);

  // Water-filling: each extra study goes to a region with the smallest quota
  // that still has unassigned studies; ties are broken at random.
  std::vector<std::size_t> quota(groups.size(), 0);
  for (std::size_t n = 0; n < total; ++n) {
    std::size_t best = SIZE_MAX;
    std::vector<std::size_t> tied;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (quota[g] >= groups[g]->size()) continue;
      if (quota[g] < best) {
        best = quota[g];
        tied.clear();
      }
      if (quota[g] == best) tied.push_back(g);
    }
    ++quota[tied[rng.uniform_index(tied.size())]];
  }

  std::vector<std::string> out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto pool = *groups[g];
    for (std::size_t k = 0; k < quota[g]; ++k) {
      const std::size_t j = k + rng.uniform_index(pool.size() - k);
      std::swap(pool[k], pool[j]);
      out.push_back(studies[pool[k]].study_uid);
    }
  }
  return out;
}

}  // namespace bodyreg
