#include "bodyreg/config.hpp"

#include "bodyreg/error.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace bodyreg {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw Error(ErrorCode::InvalidArgument, "config " + key + ": " + why);
}

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) bad(where.empty() ? "root" : where, "expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) bad(where + key, "unknown key");
  }
}

ClassSet parse_class_set(const json& j, const std::string& key, Modality m) {
  if (!j.is_array() || j.empty()) bad(key, "expected a non-empty array of region names");
  std::vector<BodyRegion> regions;
  for (const auto& v : j) {
    if (!v.is_string()) bad(key, "expected region names");
    const auto r = parse_region(v.get<std::string>());
    if (!r) bad(key, "unknown region " + v.get<std::string>());
    if (*r == BodyRegion::Breast && m == Modality::CT) bad(key, "Breast is not a CT class");
    if (!regions.empty() && region_index(*r) <= region_index(regions.back())) {
      bad(key, "regions must be distinct and in canonical order");
    }
    regions.push_back(*r);
  }
  return ClassSet(std::move(regions));
}

std::vector<std::string> string_list(const json& j, const std::string& key) {
  if (!j.is_array()) bad(key, "expected an array of strings");
  std::vector<std::string> out;
  for (const auto& v : j) {
    if (!v.is_string()) bad(key, "expected an array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

template <typename T>
T number(const json& j, const std::string& key) {
  if constexpr (std::is_same_v<T, double>) {
    if (!j.is_number()) bad(key, "expected a number");
    return j.get<double>();
  } else {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) {
      bad(key, "expected a non-negative integer");
    }
    return static_cast<T>(j.get<std::uint64_t>());
  }
}

}  // namespace

void PipelineConfig::validate() const {
  if (!(postprocess.threshold >= 0.0 && postprocess.threshold <= 1.0)) bad("threshold", "must lie in [0, 1]");
  if (postprocess.window == 0 || postprocess.window % 2 == 0) bad("window", "must be a positive odd number");
  if (postprocess.min_run == 0) bad("min_run", "must be positive");
  if (!(step_mm > 0.0) || !std::isfinite(step_mm)) bad("step_mm", "must be positive");
  if (bootstrap == 0 || bootstrap > 1000000) bad("bootstrap", "must lie in [1, 1000000]");
  if (!(level > 0.0 && level < 1.0)) bad("level", "must lie in (0, 1)");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) bad("split_ratio", "must lie in (0, 1)");
  if (ct_classes.size() == 0 || mr_classes.size() == 0) bad("class_sets", "must not be empty");
  if (!(filter.max_axial_angle_deg >= 0.0 && filter.max_axial_angle_deg <= 90.0)) {
    bad("filter.max_axial_angle_deg", "must lie in [0, 90]");
  }
  if (filter.min_pixels < 0) bad("filter.min_pixels", "must be non-negative");
  if (filter.max_excluded_bits < 0 || filter.max_excluded_bits > 32) bad("filter.max_excluded_bits", "must lie in [0, 32]");
}

PipelineConfig parse_config(std::string_view text, PipelineConfig c) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "", {"class_sets", "metric", "threshold", "window", "min_run", "step_mm", "bootstrap", "level", "seed",
                     "split_ratio", "filter", "synonyms", "backend", "scores"});
  if (j.contains("class_sets")) {
    const auto& cs = j["class_sets"];
    check_keys(cs, "class_sets.", {"CT", "MR"});
    if (cs.contains("CT")) c.ct_classes = parse_class_set(cs["CT"], "class_sets.CT", Modality::CT);
    if (cs.contains("MR")) c.mr_classes = parse_class_set(cs["MR"], "class_sets.MR", Modality::MR);
  }
  if (j.contains("metric")) {
    const auto m = j["metric"].is_string() ? parse_metric(j["metric"].get<std::string>()) : std::nullopt;
    if (!m) bad("metric", "expected \"margin\" or \"entropy\"");
    c.postprocess.metric = *m;
  }
  if (j.contains("threshold")) c.postprocess.threshold = number<double>(j["threshold"], "threshold");
  if (j.contains("window")) c.postprocess.window = number<std::size_t>(j["window"], "window");
  if (j.contains("min_run")) c.postprocess.min_run = number<std::size_t>(j["min_run"], "min_run");
  if (j.contains("step_mm")) c.step_mm = number<double>(j["step_mm"], "step_mm");
  if (j.contains("bootstrap")) c.bootstrap = number<std::size_t>(j["bootstrap"], "bootstrap");
  if (j.contains("level")) c.level = number<double>(j["level"], "level");
  if (j.contains("seed")) c.seed = number<std::uint64_t>(j["seed"], "seed");
  if (j.contains("split_ratio")) c.split_ratio = number<double>(j["split_ratio"], "split_ratio");
  if (j.contains("filter")) {
    const auto& f = j["filter"];
    check_keys(f, "filter.", {"mr_keywords", "ct_keywords", "derived_keywords", "max_axial_angle_deg", "min_pixels",
                              "max_excluded_bits", "strict_geometry"});
    if (f.contains("mr_keywords")) c.filter.mr_keywords = string_list(f["mr_keywords"], "filter.mr_keywords");
    if (f.contains("ct_keywords")) c.filter.ct_keywords = string_list(f["ct_keywords"], "filter.ct_keywords");
    if (f.contains("derived_keywords")) {
      c.filter.derived_keywords = string_list(f["derived_keywords"], "filter.derived_keywords");
    }
    if (f.contains("max_axial_angle_deg")) {
      c.filter.max_axial_angle_deg = number<double>(f["max_axial_angle_deg"], "filter.max_axial_angle_deg");
    }
    if (f.contains("min_pixels")) c.filter.min_pixels = number<int>(f["min_pixels"], "filter.min_pixels");
    if (f.contains("max_excluded_bits")) {
      c.filter.max_excluded_bits = number<int>(f["max_excluded_bits"], "filter.max_excluded_bits");
    }
    if (f.contains("strict_geometry")) {
      if (!f["strict_geometry"].is_boolean()) bad("filter.strict_geometry", "expected a boolean");
      c.filter.strict_geometry = f["strict_geometry"].get<bool>();
    }
  }
  if (j.contains("synonyms")) {
    if (!j["synonyms"].is_string()) bad("synonyms", "expected a path");
    c.synonyms = j["synonyms"].get<std::string>();
  }
  if (j.contains("backend")) {
    const auto b = j["backend"].is_string() ? j["backend"].get<std::string>() : std::string();
    if (b == "centroid") {
      c.backend = BackendKind::Centroid;
    } else if (b == "scores") {
      c.backend = BackendKind::Scores;
    } else {
      bad("backend", "expected \"centroid\" or \"scores\"");
    }
  }
  if (j.contains("scores")) {
    if (!j["scores"].is_string()) bad("scores", "expected a path");
    c.scores = j["scores"].get<std::string>();
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string dump_config(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  auto names = [](const ClassSet& cs) {
    std::vector<std::string> out;
    for (BodyRegion r : cs.regions()) out.emplace_back(region_name(r));
    return out;
  };
  j["class_sets"] = {{"CT", names(c.ct_classes)}, {"MR", names(c.mr_classes)}};
  j["metric"] = std::string(metric_name(c.postprocess.metric));
  j["threshold"] = c.postprocess.threshold;
  j["window"] = c.postprocess.window;
  j["min_run"] = c.postprocess.min_run;
  j["step_mm"] = c.step_mm;
  j["bootstrap"] = c.bootstrap;
  j["level"] = c.level;
  j["seed"] = c.seed;
  j["split_ratio"] = c.split_ratio;
  j["filter"] = {{"mr_keywords", c.filter.mr_keywords},
                 {"ct_keywords", c.filter.ct_keywords},
                 {"derived_keywords", c.filter.derived_keywords},
                 {"max_axial_angle_deg", c.filter.max_axial_angle_deg},
                 {"min_pixels", c.filter.min_pixels},
                 {"max_excluded_bits", c.filter.max_excluded_bits},
                 {"strict_geometry", c.filter.strict_geometry}};
  if (c.synonyms) j["synonyms"] = c.synonyms->string();
  j["backend"] = c.backend == BackendKind::Centroid ? "centroid" : "scores";
  if (c.scores) j["scores"] = c.scores->string();
  return j.dump(2) + "\n";
}

}  // namespace bodyreg
