#include "bodyreg/evaluation.hpp"

#include "bodyreg/cohort_filter.hpp"
#include "bodyreg/error.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace bodyreg {

namespace {

struct FactorInfo {
  Factor factor;
  std::string_view key;
  std::string_view label;
  bool series_level;
};

constexpr FactorInfo kFactors[] = {
    {Factor::Institution, "institution", "Institution", false},
    {Factor::Age, "age", "Age", false},
    {Factor::Sex, "sex", "Gender", false},
    {Factor::Manufacturer, "manufacturer", "Manufacturer", false},
    {Factor::Contrast, "contrast", "Contrast", true},
    {Factor::SliceThickness, "slice_thickness", "Slice thickness", true},
    {Factor::Kernel, "kernel", "CT kernel", true},
    {Factor::Sequence, "sequence", "MRI Sequence", true},
};

const FactorInfo& info(Factor f) { return kFactors[static_cast<std::size_t>(f)]; }

const std::string kUnknown = "Unknown";

// Fixed display order for categories with a natural order.
const std::vector<std::string>& preset_order(Factor f) {
  static const std::vector<std::string> none;
  static const std::vector<std::string> age{"18-44 years", "45-64 years", ">=65 years"};
  static const std::vector<std::string> sex{"Female", "Male", "Other"};
  static const std::vector<std::string> contrast{"With contrast", "Without contrast"};
  static const std::vector<std::string> thickness{"<=2 mm", ">2 mm and <5 mm", ">=5 mm"};
  static const std::vector<std::string> kernel{"Bone", "Soft tissue"};
  static const std::vector<std::string> sequence{"Image weighting", "Spin echo", "Gradient echo", "Inversion recovery",
                                                 "MRA",             "In and Out of Phase", "Diffusion"};
  switch (f) {
    case Factor::Age: return age;
    case Factor::Sex: return sex;
    case Factor::Contrast: return contrast;
    case Factor::SliceThickness: return thickness;
    case Factor::Kernel: return kernel;
    case Factor::Sequence: return sequence;
    default: return none;
  }
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string_view factor_key(Factor f) noexcept { return info(f).key; }
std::string_view factor_label(Factor f) noexcept { return info(f).label; }
bool factor_is_series_level(Factor f) noexcept { return info(f).series_level; }

bool factor_applies(Factor f, Modality m) noexcept {
  if (f == Factor::Kernel) return m == Modality::CT;
  if (f == Factor::Sequence) return m == Modality::MR;
  return true;
}

Factor parse_factor(std::string_view name) {
  const std::string n = lower(name);
  if (n == "gender") return Factor::Sex;
  for (const auto& fi : kFactors) {
    if (n == fi.key || n == lower(fi.label)) return fi.factor;
  }
  throw Error(ErrorCode::UnknownFactor, "unknown factor '" + std::string(name) + "'");
}

std::vector<std::string> factor_categories(Factor f, const EvalStudy& st, const EvalSeries& se) {
  auto or_unknown = [](const std::optional<std::string>& v) { return v && !v->empty() ? *v : kUnknown; };
  switch (f) {
    case Factor::Institution: return {or_unknown(st.institution)};
    case Factor::Manufacturer: return {or_unknown(st.manufacturer)};
    case Factor::Age:
      if (!st.patient_age || *st.patient_age < 18) return {kUnknown};
      if (*st.patient_age < 45) return {"18-44 years"};
      if (*st.patient_age < 65) return {"45-64 years"};
      return {">=65 years"};
    case Factor::Sex:
      if (!st.patient_sex) return {kUnknown};
      switch (*st.patient_sex) {
        case PatientSex::Female: return {"Female"};
        case PatientSex::Male: return {"Male"};
        case PatientSex::Other: return {"Other"};
      }
      return {kUnknown};
    case Factor::Contrast: return {se.contrast_agent ? "With contrast" : "Without contrast"};
    case Factor::SliceThickness:
      if (!se.slice_thickness) return {kUnknown};
      if (*se.slice_thickness <= 2.0) return {"<=2 mm"};
      if (*se.slice_thickness < 5.0) return {">2 mm and <5 mm"};
      return {">=5 mm"};
    case Factor::Kernel: return {contains_keyword(se.series_description, "bone") ? "Bone" : "Soft tissue"};
    case Factor::Sequence:
      if (se.sequence_tags.empty()) return {kUnknown};
      return {se.sequence_tags.begin(), se.sequence_tags.end()};
  }
  return {kUnknown};
}

FactorReport factor_report(const EvalCohort& cohort, Factor factor, const BootstrapOptions& options,
                           std::size_t min_count) {
  const bool series_level = factor_is_series_level(factor);
  std::map<std::string, EvalCohort> sub;
  std::map<std::string, std::size_t> counts;
  for (const auto& st : cohort.studies) {
    std::map<std::string, EvalStudy> parts;
    for (const auto& se : st.series) {
      if (se.images.empty()) continue;
      for (const auto& cat : factor_categories(factor, st, se)) {
        auto [it, fresh] = parts.try_emplace(cat, st);
        if (fresh) it->second.series.clear();
        it->second.series.push_back(se);
        if (series_level) ++counts[cat];
      }
    }
    for (auto& [cat, part] : parts) {
      if (!series_level) ++counts[cat];
      auto [it, fresh] = sub.try_emplace(cat);
      if (fresh) {
        it->second.modality = cohort.modality;
        it->second.classes = cohort.classes;
      }
      it->second.studies.push_back(std::move(part));
    }
  }

  std::vector<std::string> order;
  for (const auto& cat : preset_order(factor)) {
    if (sub.count(cat)) order.push_back(cat);
  }
  for (const auto& [cat, c] : sub) {
    if (cat != kUnknown && std::find(order.begin(), order.end(), cat) == order.end()) order.push_back(cat);
  }
  if (sub.count(kUnknown)) order.push_back(kUnknown);

  std::size_t total = 0;
  for (const auto& [cat, n] : counts) total += n;

  FactorReport report;
  report.factor = factor;
  report.table.factor = std::string(factor_key(factor));
  for (const auto& cat : order) {
    FactorRow row;
    row.category = cat;
    row.n = counts[cat];
    row.percent = total ? 100.0 * static_cast<double>(row.n) / static_cast<double>(total) : 0.0;
    if (row.n >= min_count) {
      const auto ci = bootstrap_ci(sub[cat], {sensitivity_metric(), specificity_metric()}, options);
      row.sensitivity = ci[0];
      row.specificity = ci[1];
      const auto cm = full_confusion(sub[cat]);
      report.table.categories.push_back(cat);
      report.table.correct.push_back(cm.trace());
      report.table.incorrect.push_back(cm.total() - cm.trace());
    }
    report.rows.push_back(std::move(row));
  }
  if (report.table.categories.size() >= 2) {
    try {
      report.chi = chi_square(report.table);
      report.cramers = cramers_v(report.table);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateTable) throw;
    }
  }
  return report;
}

std::string region_display_name(BodyRegion r) {
  const std::string_view name = region_name(r);
  std::string out;
  for (std::size_t i = 0; i < name.size(); ++i) {
    const char c = name[i];
    if (i > 0 && std::isupper(static_cast<unsigned char>(c))) {
      out += ' ';
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else {
      out += c;
    }
  }
  return out;
}

std::vector<RegionRow> region_report(const EvalCohort& cohort, const BootstrapOptions& options,
                                     std::size_t min_count) {
  const auto full = full_confusion(cohort);
  std::vector<RegionRow> rows;
  RegionRow overall;
  overall.label = "Overall";
  overall.n = full.total();
  rows.push_back(overall);
  const ClassSet reporting = ClassSet::reporting(cohort.modality);
  for (BodyRegion r : reporting.regions()) {
    RegionRow row;
    row.label = region_display_name(r);
    row.region = r;
    if (const auto k = full.index_of(r)) row.n = full.support(*k);
    rows.push_back(row);
  }
  std::sort(rows.begin() + 1, rows.end(), [](const RegionRow& a, const RegionRow& b) { return a.label < b.label; });

  std::vector<MetricFn> metrics;
  std::vector<std::size_t> owners;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].n < min_count) continue;
    if (rows[i].region) {
      metrics.push_back(recall_metric(*rows[i].region));
      metrics.push_back(tnr_metric(*rows[i].region));
    } else {
      metrics.push_back(sensitivity_metric());
      metrics.push_back(specificity_metric());
    }
    owners.push_back(i);
  }
  if (metrics.empty()) return rows;
  const auto ci = bootstrap_ci(cohort, metrics, options);
  for (std::size_t j = 0; j < owners.size(); ++j) {
    rows[owners[j]].sensitivity = ci[2 * j];
    rows[owners[j]].specificity = ci[2 * j + 1];
  }
  return rows;
}

}  // namespace bodyreg
