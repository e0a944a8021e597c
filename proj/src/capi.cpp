#include "bodyreg/bodyreg.h"

#include "bodyreg/config.hpp"
#include "bodyreg/error.hpp"
#include "bodyreg/ingest.hpp"
#include "bodyreg/phantom.hpp"
#include "bodyreg/pipeline.hpp"
#include "bodyreg/report.hpp"
#include "bodyreg/stats.hpp"
#include "bodyreg/tag_write.hpp"
#include "text_util.hpp"

#include <json.hpp>

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <new>
#include <sstream>

struct bodyreg_config {
  bodyreg::PipelineConfig value;
};

struct bodyreg_cohort {
  std::vector<bodyreg::StudyRecord> studies;
  std::vector<bodyreg::SkipEntry> skipped;
};

namespace {

using namespace bodyreg;
namespace fs = std::filesystem;

thread_local std::string g_last_error;

template <class F>
int guarded(F&& f) {
  try {
    f();
    return BODYREG_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return static_cast<int>(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = std::string("internal error: ") + e.what();
  } catch (...) {
    g_last_error = "internal error";
  }
  return BODYREG_E_INTERNAL;
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::InvalidArgument, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void write_file(const fs::path& path, const std::string& body) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << body;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

std::string modality_tag(Modality m) { return m == Modality::MR ? "mr" : "ct"; }

std::vector<SeriesResultRecord> read_results(const char* path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, std::string("cannot read ") + path);
  return parse_series_results(in);
}

bodyreg_cohort* new_cohort(std::vector<StudyRecord> studies, std::vector<SkipEntry> skipped = {}) {
  auto* c = new bodyreg_cohort;
  c->studies = std::move(studies);
  c->skipped = std::move(skipped);
  return c;
}

}  // namespace

extern "C" {

const char* bodyreg_version(void) { return "1.0.0"; }

const char* bodyreg_status_name(int status) {
  if (status == BODYREG_OK) return "OK";
  if (status == BODYREG_E_INTERNAL) return "Internal";
  if (status < 1 || status > static_cast<int>(ErrorCode::MissingPatientId)) return "Unknown";
  return error_code_name(static_cast<ErrorCode>(status)).data();
}

const char* bodyreg_last_error(void) { return g_last_error.c_str(); }

void bodyreg_string_free(char* s) { std::free(s); }

// ---- configuration

int bodyreg_config_create(bodyreg_config** out) {
  return guarded([&] {
    require(out, "out is null");
    *out = new bodyreg_config;
  });
}

void bodyreg_config_destroy(bodyreg_config* config) { delete config; }

int bodyreg_config_load(bodyreg_config* config, const char* path) {
  return guarded([&] {
    require(config && path, "config and path are required");
    config->value = load_config(path, config->value);
  });
}

int bodyreg_config_apply_json(bodyreg_config* config, const char* json) {
  return guarded([&] {
    require(config && json, "config and json are required");
    config->value = parse_config(json, config->value);
  });
}

int bodyreg_config_dump(const bodyreg_config* config, char** json) {
  return guarded([&] {
    require(config && json, "config and json are required");
    *json = dup_string(dump_config(config->value));
  });
}

// ---- cohorts

int bodyreg_cohort_ingest(const char* dir, bodyreg_cohort** out) {
  return guarded([&] {
    require(dir && out, "dir and out are required");
    auto c = ingest_tree(dir);
    *out = new_cohort(std::move(c.studies), std::move(c.skipped));
  });
}

int bodyreg_cohort_read(const char* ndjson_path, bodyreg_cohort** out) {
  return guarded([&] {
    require(ndjson_path && out, "path and out are required");
    *out = new_cohort(read_metadata_ndjson(ndjson_path));
  });
}

void bodyreg_cohort_destroy(bodyreg_cohort* cohort) { delete cohort; }

size_t bodyreg_cohort_study_count(const bodyreg_cohort* cohort) { return cohort ? cohort->studies.size() : 0; }

size_t bodyreg_cohort_series_count(const bodyreg_cohort* cohort) {
  size_t n = 0;
  if (cohort) {
    for (const auto& st : cohort->studies) n += st.series.size();
  }
  return n;
}

size_t bodyreg_cohort_image_count(const bodyreg_cohort* cohort) {
  size_t n = 0;
  if (cohort) {
    for (const auto& st : cohort->studies) n += st.image_count();
  }
  return n;
}

size_t bodyreg_cohort_skipped_count(const bodyreg_cohort* cohort) { return cohort ? cohort->skipped.size() : 0; }

int bodyreg_cohort_write(const bodyreg_cohort* cohort, const char* ndjson_path) {
  return guarded([&] {
    require(cohort && ndjson_path, "cohort and path are required");
    std::ostringstream s;
    write_metadata_ndjson(cohort->studies, s);
    write_file(ndjson_path, s.str());
  });
}

int bodyreg_cohort_write_skipped(const bodyreg_cohort* cohort, const char* csv_path) {
  return guarded([&] {
    require(cohort && csv_path, "cohort and path are required");
    std::ostringstream s;
    s << "path,error\n";
    for (const auto& e : cohort->skipped) s << text::csv_field(e.path) << ',' << text::csv_field(e.error) << '\n';
    write_file(csv_path, s.str());
  });
}

int bodyreg_cohort_filter(const bodyreg_cohort* cohort, const bodyreg_config* config, const char* report_csv,
                          bodyreg_cohort** out) {
  return guarded([&] {
    require(cohort && config && out, "cohort, config and out are required");
    auto outcome = filter_cohort(cohort->studies, config->value.filter);
    if (report_csv) {
      std::ostringstream s;
      write_filter_report(outcome.report, s);
      write_file(report_csv, s.str());
    }
    *out = new_cohort(std::move(outcome.included));
  });
}

int bodyreg_cohort_dedupe(const bodyreg_cohort* cohort, uint64_t seed, bodyreg_cohort** out) {
  return guarded([&] {
    require(cohort && out, "cohort and out are required");
    Rng rng = Rng::derive(seed, 1);
    *out = new_cohort(dedupe_patients(cohort->studies, rng).studies);
  });
}

// ---- stages

int bodyreg_labels_project(const bodyreg_cohort* cohort, const char* label_file, const char* truth_csv,
                           size_t* labelled, char** warnings) {
  return guarded([&] {
    require(cohort && label_file && truth_csv, "cohort, label file and truth path are required");
    const auto truth = project_truth(cohort->studies, read_label_file(label_file));
    std::ostringstream s;
    write_truth_csv(cohort->studies, truth, s);
    write_file(truth_csv, s.str());
    if (labelled) *labelled = truth.by_sop.size();
    if (warnings) {
      std::string w;
      for (const auto& line : truth.warnings) w += line + '\n';
      *warnings = dup_string(w);
    }
  });
}

int bodyreg_partition(const bodyreg_cohort* cohort, const char* truth_csv, double ratio, const char* split_csv) {
  return guarded([&] {
    require(cohort && truth_csv && split_csv, "cohort, truth and split paths are required");
    const auto rows = partition_cohort(cohort->studies, load_truth_csv(truth_csv), ratio);
    std::ostringstream s;
    write_split_csv(rows, s);
    write_file(split_csv, s.str());
  });
}

int bodyreg_train(const bodyreg_cohort* cohort, const char* truth_csv, const char* split_csv, const char* out_dir) {
  return guarded([&] {
    require(cohort && truth_csv && out_dir, "cohort, truth path and output directory are required");
    std::set<std::string> train;
    if (split_csv) {
      for (const auto& r : load_split_csv(split_csv)) {
        if (r.split == Split::Train) train.insert(r.study_uid);
      }
    }
    auto models = train_centroids(cohort->studies, load_truth_csv(truth_csv), split_csv ? &train : nullptr);
    if (models.empty()) throw Error(ErrorCode::EmptyClass, "no labelled training images");
    make_dir(out_dir);
    for (const auto& [m, model] : models) model.save(fs::path(out_dir) / ("centroid_" + modality_tag(m) + ".json"));
  });
}

int bodyreg_classify(const bodyreg_cohort* cohort, const bodyreg_config* config, const char* model_dir,
                     const char* out_dir) {
  return guarded([&] {
    require(cohort && config && out_dir, "cohort, config and output directory are required");
    const auto& cfg = config->value;
    std::optional<ScoreTable> table;
    if (cfg.backend == BackendKind::Scores) {
      require(cfg.scores.has_value(), "the scores backend needs a score file");
      table = load_scores(*cfg.scores);
    } else {
      require(model_dir, "the centroid backend needs a model directory");
    }
    make_dir(out_dir);
    for (Modality m : {Modality::CT, Modality::MR}) {
      bool present = false;
      for (const auto& st : cohort->studies) {
        for (const auto& se : st.series) present = present || se.modality == m;
      }
      if (!present) continue;
      std::unique_ptr<ClassifierBackend> backend;
      if (table) {
        backend = std::make_unique<ScoreFileBackend>(*table);
      } else {
        const fs::path model = fs::path(model_dir) / ("centroid_" + modality_tag(m) + ".json");
        backend = std::make_unique<CentroidBackend>(CentroidBackend::load(model));
      }
      const auto preds = classify_cohort(cohort->studies, m, *backend);
      std::ostringstream s;
      write_scores(backend->classes(), preds, s);
      write_file(fs::path(out_dir) / ("scores_" + modality_tag(m) + ".csv"), s.str());
    }
  });
}

int bodyreg_postprocess(const bodyreg_cohort* cohort, const bodyreg_config* config, const char* const* score_paths,
                        size_t score_count, const char* results_ndjson) {
  return guarded([&] {
    require(cohort && config && results_ndjson, "cohort, config and output path are required");
    require(score_paths && score_count > 0, "at least one score file is required");
    std::set<std::string> seen;
    std::ostringstream s;
    for (size_t i = 0; i < score_count; ++i) {
      require(score_paths[i], "score path is null");
      const auto table = load_scores(score_paths[i]);
      for (Modality m : {Modality::CT, Modality::MR}) {
        for (const auto& r : postprocess_cohort(cohort->studies, m, table, config->value.postprocess)) {
          if (!seen.insert(r.series_uid).second) {
            throw Error(ErrorCode::InvalidArgument, "series " + r.series_uid + " is scored in more than one file");
          }
          write_series_result(r, s);
        }
      }
    }
    write_file(results_ndjson, s.str());
  });
}

int bodyreg_evaluate(const bodyreg_cohort* cohort, const bodyreg_config* config, const char* results_ndjson,
                     const char* truth_csv, const char* split_csv, const char* out_dir) {
  return guarded([&] {
    require(cohort && config && results_ndjson && truth_csv && out_dir,
            "cohort, config, results, truth and output directory are required");
    const auto records = read_results(results_ndjson);
    const auto truth = load_truth_csv(truth_csv);
    std::vector<SplitRow> split;
    if (split_csv) split = load_split_csv(split_csv);
    const auto ev = evaluate_cohort(cohort->studies, records, truth, config->value, split_csv ? &split : nullptr);
    make_dir(out_dir);
    write_file(fs::path(out_dir) / "evaluation.json", ev.json);
    emit_report(ev.report, fs::path(out_dir) / "report");
  });
}

int bodyreg_report(const char* evaluation_json, const char* out_dir, int formats) {
  return guarded([&] {
    require(evaluation_json && out_dir, "evaluation file and output directory are required");
    require(formats > 0 && formats <= (BODYREG_REPORT_CSV | BODYREG_REPORT_MARKDOWN), "unknown report format");
    std::vector<ReportFormat> f;
    if (formats & BODYREG_REPORT_CSV) f.push_back(ReportFormat::Csv);
    if (formats & BODYREG_REPORT_MARKDOWN) f.push_back(ReportFormat::Markdown);
    emit_report(report_from_evaluation(read_file(evaluation_json)), out_dir, f);
  });
}

int bodyreg_tag_write(const bodyreg_cohort* cohort, const char* results_ndjson, int dry_run, const char* out_dir,
                      const char* log_csv) {
  return guarded([&] {
    require(cohort && results_ndjson && log_csv, "cohort, results and log path are required");
    const auto records = read_results(results_ndjson);
    std::optional<fs::path> dir;
    if (out_dir) dir = out_dir;
    const auto changes = write_body_part_tags(cohort->studies, records, dry_run != 0, dir);
    std::ostringstream s;
    write_change_log(changes, s);
    write_file(log_csv, s.str());
  });
}

int bodyreg_run(const bodyreg_config* config, const char* input_dir, const char* label_file, const char* out_dir,
                char** summary_json) {
  return guarded([&] {
    require(config && input_dir && label_file && out_dir, "config, input, labels and output are required");
    RunOptions opt{input_dir, label_file, out_dir, config->value};
    const auto summary = run_end_to_end(opt);
    if (summary_json) {
      nlohmann::ordered_json j = {{"ingested_images", summary.ingested_images},
                                  {"skipped_files", summary.skipped_files},
                                  {"included_studies", summary.included_studies}};
      auto mods = nlohmann::ordered_json::array();
      for (const auto& m : summary.modalities) {
        mods.push_back({{"modality", modality_name(m.modality)},
                        {"train_studies", m.train_studies},
                        {"eval_studies", m.eval_studies},
                        {"eval_images", m.eval_images},
                        {"raw_accuracy", m.raw_accuracy},
                        {"final_accuracy", m.final_accuracy},
                        {"rejected_series", m.rejected_series}});
      }
      j["modalities"] = std::move(mods);
      *summary_json = dup_string(j.dump(2));
    }
  });
}

// ---- utilities

int bodyreg_sample_size(double p, double confidence, double relative_error, double deff, uint64_t* n, double* raw) {
  return guarded([&] {
    require(n, "n is null");
    const double r = sample_size_raw(p, confidence, relative_error, deff);
    *n = sample_size(p, confidence, relative_error, deff);
    if (raw) *raw = r;
  });
}

int bodyreg_implied_design_effect(double target, double p, double confidence, double relative_error,
                                  double* deff) {
  return guarded([&] {
    require(deff, "deff is null");
    *deff = implied_design_effect(target, p, confidence, relative_error);
  });
}

int bodyreg_phantom(const char* spec_json, const char* out_dir) {
  return guarded([&] {
    require(spec_json && out_dir, "spec and output directory are required");
    const auto result = generate_phantom(parse_phantom_spec(spec_json), out_dir);
    write_label_file(result.boxes, fs::path(out_dir) / "labels.json");
  });
}

int bodyreg_phantom_cohort(size_t studies, uint64_t seed, double mr_fraction, double noise, const char* out_dir) {
  return guarded([&] {
    require(out_dir, "output directory is required");
    PhantomCohortSpec spec;
    spec.studies = studies;
    spec.seed = seed;
    spec.mr_fraction = mr_fraction;
    spec.noise = noise;
    generate_phantom_cohort(spec, out_dir);
  });
}

}  // extern "C"
