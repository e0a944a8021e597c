// Command-line front end. Talks to the library through the C API only.
#include "bodyreg/bodyreg.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;

struct Failure {
  int status;
};

bool is_usage(int status) {
  switch (status) {
    case BODYREG_E_INVALID_ARGUMENT:
    case BODYREG_E_PARAMS_OUT_OF_RANGE:
    case BODYREG_E_INVALID_PARAMS:
    case BODYREG_E_UNKNOWN_FACTOR:
    case BODYREG_E_INVALID_SPEC:
      return true;
    default:
      return false;
  }
}

void check(int status) {
  if (status == BODYREG_OK) return;
  std::cerr << "bodyreg: " << bodyreg_last_error() << '\n';
  throw Failure{status};
}

struct ConfigDeleter {
  void operator()(bodyreg_config* c) const { bodyreg_config_destroy(c); }
};
struct CohortDeleter {
  void operator()(bodyreg_cohort* c) const { bodyreg_cohort_destroy(c); }
};
using ConfigPtr = std::unique_ptr<bodyreg_config, ConfigDeleter>;
using CohortPtr = std::unique_ptr<bodyreg_cohort, CohortDeleter>;

std::string take(char* s) {
  std::string out = s ? s : "";
  bodyreg_string_free(s);
  return out;
}

// Flags shared by the pipeline stages. Unset flags leave the config alone.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backend;
  std::optional<std::string> scores;
  std::optional<std::string> metric;
  std::optional<double> threshold;
  std::optional<double> step_mm;
  std::optional<std::size_t> bootstrap;
  std::optional<double> level;
  bool strict_geometry = false;

  void add_config(CLI::App* app) { app->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile); }
  void add_seed(CLI::App* app) { app->add_option("--seed", seed, "random seed"); }
  void add_backend(CLI::App* app) {
    app->add_option("--backend", backend, "classifier backend")->check(CLI::IsMember({"scores", "centroid"}));
    app->add_option("--scores", scores, "score CSV for the scores backend")->check(CLI::ExistingFile);
  }
  void add_postprocess(CLI::App* app) {
    app->add_option("--metric", metric, "uncertainty metric")->check(CLI::IsMember({"margin", "entropy"}));
    app->add_option("--threshold", threshold, "uncertainty threshold");
  }
  void add_stats(CLI::App* app) {
    app->add_option("--step-mm", step_mm, "subsampling step in mm");
    app->add_option("--bootstrap", bootstrap, "bootstrap resamples");
    app->add_option("--level", level, "confidence level");
  }
  void add_filter(CLI::App* app) {
    app->add_flag("--strict-geometry", strict_geometry, "exclude series without orientation");
  }

  // defaults < config file < flags
  ConfigPtr build() const {
    bodyreg_config* raw = nullptr;
    check(bodyreg_config_create(&raw));
    ConfigPtr cfg(raw);
    if (!config.empty()) check(bodyreg_config_load(cfg.get(), config.c_str()));
    nlohmann::json j = nlohmann::json::object();
    if (seed) j["seed"] = *seed;
    if (backend) j["backend"] = *backend;
    if (scores) j["scores"] = *scores;
    if (metric) j["metric"] = *metric;
    if (threshold) j["threshold"] = *threshold;
    if (step_mm) j["step_mm"] = *step_mm;
    if (bootstrap) j["bootstrap"] = *bootstrap;
    if (level) j["level"] = *level;
    if (strict_geometry) j["filter"] = {{"strict_geometry", true}};
    check(bodyreg_config_apply_json(cfg.get(), j.dump().c_str()));
    return cfg;
  }
};

CohortPtr read_cohort(const std::string& path) {
  bodyreg_cohort* raw = nullptr;
  check(bodyreg_cohort_read(path.c_str(), &raw));
  return CohortPtr(raw);
}

std::string out_path(const std::string& dir, const char* name) { return (fs::path(dir) / name).string(); }

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    std::cerr << "bodyreg: cannot create " << dir << ": " << ec.message() << '\n';
    throw Failure{BODYREG_E_IO};
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Body region classification pipeline for CT and MR series"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(bodyreg_version()));

  Overrides ov;
  std::string input, out, labels, truth, split, results, model, evaluation, format = "both", spec_json, log;
  std::vector<std::string> score_files;
  bool dry_run = false;
  std::size_t studies = 48;
  double mr_fraction = 0.5, noise = 0.1;
  double p = 0.9, confidence = 0.95, relative_error = 0.1, deff = 1.0;
  std::optional<double> target;

  auto* ingest = app.add_subcommand("ingest", "parse a DICOM tree into cohort.ndjson and skipped.csv");
  ingest->add_option("input", input, "DICOM directory")->required()->check(CLI::ExistingDirectory);
  ingest->add_option("--out", out, "output directory")->required();

  auto* filter = app.add_subcommand("filter", "apply inclusion rules and keep one study per patient");
  filter->add_option("cohort", input, "cohort.ndjson")->required()->check(CLI::ExistingFile);
  filter->add_option("--out", out, "output directory")->required();
  ov.add_config(filter);
  ov.add_seed(filter);
  ov.add_filter(filter);

  auto* labels_cmd = app.add_subcommand("labels", "ground-truth label operations");
  labels_cmd->require_subcommand(1);
  auto* project = labels_cmd->add_subcommand("project", "project 3-D boxes onto images (truth.csv)");
  project->add_option("cohort", input, "cohort.ndjson")->required()->check(CLI::ExistingFile);
  project->add_option("--labels", labels, "box label file")->required()->check(CLI::ExistingFile);
  project->add_option("--out", out, "output directory")->required();

  auto* partition = app.add_subcommand("partition", "patient-level train/validation split (split.csv)");
  partition->add_option("cohort", input, "cohort.ndjson")->required()->check(CLI::ExistingFile);
  partition->add_option("--truth", truth, "truth.csv")->required()->check(CLI::ExistingFile);
  partition->add_option("--out", out, "output directory")->required();
  ov.add_config(partition);

  auto* train = app.add_subcommand("train", "fit the nearest-centroid baseline");
  train->add_option("cohort", input, "cohort.ndjson")->required()->check(CLI::ExistingFile);
  train->add_option("--truth", truth, "truth.csv")->required()->check(CLI::ExistingFile);
  train->add_option("--split", split, "split.csv; train rows only")->check(CLI::ExistingFile);
  train->add_option("--out", out, "output directory")->required();

  auto* classify = app.add_subcommand("classify", "score every image (scores_ct.csv, scores_mr.csv)");
  classify->add_option("cohort", input, "cohort.ndjson")->required()->check(CLI::ExistingFile);
  classify->add_option("--model", model, "directory with centroid_*.json")->check(CLI::ExistingDirectory);
  classify->add_option("--out", out, "output directory")->required();
  ov.add_config(classify);
  ov.add_backend(classify);

  auto* postprocess = app.add_subcommand("postprocess", "series rules over scores (series_results.ndjson)");
  postprocess->add_option("cohort", input, "cohort.ndjson")->required()->check(CLI::ExistingFile);
  postprocess->add_option("--scores", score_files, "score CSV (repeatable)")->required()->check(CLI::ExistingFile);
  postprocess->add_option("--out", out, "output directory")->required();
  ov.add_config(postprocess);
  ov.add_postprocess(postprocess);

  auto* evaluate = app.add_subcommand("evaluate", "bootstrap metrics and report tables");
  evaluate->add_option("cohort", input, "cohort.ndjson")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--results", results, "series_results.ndjson")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--truth", truth, "truth.csv")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--split", split, "split.csv; validation rows only")->check(CLI::ExistingFile);
  evaluate->add_option("--out", out, "output directory")->required();
  ov.add_config(evaluate);
  ov.add_seed(evaluate);
  ov.add_stats(evaluate);

  auto* sample = app.add_subcommand("sample-size", "images needed for a target relative error");
  sample->add_option("--p", p, "expected proportion");
  sample->add_option("--confidence", confidence, "confidence level");
  sample->add_option("--relative-error", relative_error, "relative margin of error");
  sample->add_option("--deff", deff, "design effect");
  sample->add_option("--target", target, "also report the design effect implied by this size");

  auto* phantom = app.add_subcommand("phantom", "synthetic DICOM phantom with box labels");
  phantom->add_option("--out", out, "output directory")->required();
  phantom->add_option("--spec", spec_json, "single-phantom JSON spec")->check(CLI::ExistingFile);
  phantom->add_option("--studies", studies, "cohort size");
  phantom->add_option("--mr-fraction", mr_fraction, "share of MR studies");
  phantom->add_option("--noise", noise, "noise relative to texture amplitude");
  ov.add_seed(phantom);

  auto* tag_write = app.add_subcommand("tag-write", "write predicted BodyPartExamined back to files");
  tag_write->add_option("cohort", input, "cohort.ndjson")->required()->check(CLI::ExistingFile);
  tag_write->add_option("--results", results, "series_results.ndjson")->required()->check(CLI::ExistingFile);
  tag_write->add_option("--out", out, "write copies here instead of editing in place");
  tag_write->add_option("--log", log, "change log CSV (default: <out>/tag_changes.csv or ./tag_changes.csv)");
  tag_write->add_flag("--dry-run", dry_run, "log the changes without touching files");

  auto* report = app.add_subcommand("report", "render tables from evaluation.json");
  report->add_option("evaluation", evaluation, "evaluation.json")->required()->check(CLI::ExistingFile);
  report->add_option("--out", out, "output directory")->required();
  report->add_option("--format", format, "csv, markdown or both")->check(CLI::IsMember({"csv", "markdown", "both"}));

  auto* run = app.add_subcommand("run", "every stage end to end");
  run->add_option("input", input, "DICOM directory")->required()->check(CLI::ExistingDirectory);
  run->add_option("--labels", labels, "box label file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "output directory")->required();
  ov.add_config(run);
  ov.add_seed(run);
  ov.add_backend(run);
  ov.add_postprocess(run);
  ov.add_stats(run);
  ov.add_filter(run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*ingest) {
      bodyreg_cohort* raw = nullptr;
      check(bodyreg_cohort_ingest(input.c_str(), &raw));
      CohortPtr cohort(raw);
      make_dir(out);
      check(bodyreg_cohort_write(cohort.get(), out_path(out, "cohort.ndjson").c_str()));
      check(bodyreg_cohort_write_skipped(cohort.get(), out_path(out, "skipped.csv").c_str()));
      std::cout << bodyreg_cohort_study_count(cohort.get()) << " studies, " << bodyreg_cohort_series_count(cohort.get())
                << " series, " << bodyreg_cohort_image_count(cohort.get()) << " images; "
                << bodyreg_cohort_skipped_count(cohort.get()) << " files skipped\n";
      if (bodyreg_cohort_study_count(cohort.get()) == 0) return kData;
    } else if (*filter) {
      auto cfg = ov.build();
      auto cohort = read_cohort(input);
      make_dir(out);
      bodyreg_cohort* kept = nullptr;
      check(bodyreg_cohort_filter(cohort.get(), cfg.get(), out_path(out, "filter_report.csv").c_str(), &kept));
      CohortPtr included(kept);
      char* dumped = nullptr;
      check(bodyreg_config_dump(cfg.get(), &dumped));
      const auto seed = nlohmann::json::parse(take(dumped)).at("seed").get<std::uint64_t>();
      bodyreg_cohort* deduped = nullptr;
      check(bodyreg_cohort_dedupe(included.get(), seed, &deduped));
      CohortPtr final_cohort(deduped);
      check(bodyreg_cohort_write(final_cohort.get(), out_path(out, "cohort.ndjson").c_str()));
      std::cout << bodyreg_cohort_study_count(final_cohort.get()) << " studies, "
                << bodyreg_cohort_image_count(final_cohort.get()) << " images included\n";
    } else if (*project) {
      auto cohort = read_cohort(input);
      make_dir(out);
      size_t labelled = 0;
      char* warnings = nullptr;
      check(bodyreg_labels_project(cohort.get(), labels.c_str(), out_path(out, "truth.csv").c_str(), &labelled,
                                   &warnings));
      std::cerr << take(warnings);
      std::cout << labelled << " of " << bodyreg_cohort_image_count(cohort.get()) << " images labelled\n";
    } else if (*partition) {
      auto cfg = ov.build();
      char* dumped = nullptr;
      check(bodyreg_config_dump(cfg.get(), &dumped));
      const double ratio = nlohmann::json::parse(take(dumped)).at("split_ratio").get<double>();
      auto cohort = read_cohort(input);
      make_dir(out);
      check(bodyreg_partition(cohort.get(), truth.c_str(), ratio, out_path(out, "split.csv").c_str()));
    } else if (*train) {
      auto cohort = read_cohort(input);
      check(bodyreg_train(cohort.get(), truth.c_str(), split.empty() ? nullptr : split.c_str(), out.c_str()));
    } else if (*classify) {
      auto cfg = ov.build();
      auto cohort = read_cohort(input);
      check(bodyreg_classify(cohort.get(), cfg.get(), model.empty() ? nullptr : model.c_str(), out.c_str()));
    } else if (*postprocess) {
      auto cfg = ov.build();
      auto cohort = read_cohort(input);
      make_dir(out);
      std::vector<const char*> paths;
      for (const auto& s : score_files) paths.push_back(s.c_str());
      check(bodyreg_postprocess(cohort.get(), cfg.get(), paths.data(), paths.size(),
                                out_path(out, "series_results.ndjson").c_str()));
    } else if (*evaluate) {
      auto cfg = ov.build();
      auto cohort = read_cohort(input);
      check(bodyreg_evaluate(cohort.get(), cfg.get(), results.c_str(), truth.c_str(),
                             split.empty() ? nullptr : split.c_str(), out.c_str()));
    } else if (*sample) {
      uint64_t n = 0;
      double raw = 0.0;
      check(bodyreg_sample_size(p, confidence, relative_error, deff, &n, &raw));
      std::cout << "n = " << n << " (unrounded " << raw << ")\n";
      if (target) {
        double implied = 0.0;
        check(bodyreg_implied_design_effect(*target, p, confidence, relative_error, &implied));
        std::cout << "design effect implied by n = " << *target << ": " << implied << '\n';
      }
    } else if (*phantom) {
      if (!spec_json.empty()) {
        std::ifstream in(spec_json, std::ios::binary);
        const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        check(bodyreg_phantom(text.c_str(), out.c_str()));
      } else {
        check(bodyreg_phantom_cohort(studies, ov.seed.value_or(0), mr_fraction, noise, out.c_str()));
      }
    } else if (*tag_write) {
      auto cohort = read_cohort(input);
      if (log.empty()) log = out.empty() ? "tag_changes.csv" : out_path(out, "tag_changes.csv");
      check(bodyreg_tag_write(cohort.get(), results.c_str(), dry_run ? 1 : 0, out.empty() ? nullptr : out.c_str(),
                              log.c_str()));
    } else if (*report) {
      const int formats = format == "csv"        ? BODYREG_REPORT_CSV
                          : format == "markdown" ? BODYREG_REPORT_MARKDOWN
                                                 : BODYREG_REPORT_CSV | BODYREG_REPORT_MARKDOWN;
      check(bodyreg_report(evaluation.c_str(), out.c_str(), formats));
    } else if (*run) {
      auto cfg = ov.build();
      char* summary = nullptr;
      check(bodyreg_run(cfg.get(), input.c_str(), labels.c_str(), out.c_str(), &summary));
      std::cout << take(summary) << '\n';
    }
  } catch (const Failure& f) {
    return is_usage(f.status) ? kUsage : kData;
  }
  return 0;
}
