#pragma once

#include "bodyreg/bootstrap.hpp"
#include "bodyreg/cohort_filter.hpp"
#include "bodyreg/postprocess.hpp"
#include "bodyreg/region.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace bodyreg {

enum class BackendKind { Centroid, Scores };

struct PipelineConfig {
  ClassSet ct_classes = ClassSet::for_modality(Modality::CT);
  ClassSet mr_classes = ClassSet::for_modality(Modality::MR);
  PostprocessConfig postprocess;
  double step_mm = 10.0;
  std::size_t bootstrap = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
  double split_ratio = 0.75;
  FilterConfig filter = FilterConfig::defaults();
  std::optional<std::filesystem::path> synonyms;
  BackendKind backend = BackendKind::Centroid;
  std::optional<std::filesystem::path> scores;

  const ClassSet& classes(Modality m) const { return m == Modality::MR ? mr_classes : ct_classes; }
  BootstrapOptions bootstrap_options() const { return {bootstrap, level, seed, step_mm}; }

  // Throws InvalidArgument naming the offending field.
  void validate() const;
};

// Overlays the keys present in a JSON object onto `base`. Unknown keys and
// out-of-range values throw InvalidArgument.
PipelineConfig parse_config(std::string_view json_text, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});

// Full JSON rendering of a config (every key).
std::string dump_config(const PipelineConfig& config);

}  // namespace bodyreg
