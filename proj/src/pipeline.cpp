#include "bodyreg/pipeline.hpp"

#include "bodyreg/dicom.hpp"
#include "bodyreg/error.hpp"
#include "bodyreg/evaluation.hpp"
#include "bodyreg/ingest.hpp"
#include "bodyreg/pixels.hpp"
#include "bodyreg/preprocess.hpp"
#include "bodyreg/stats.hpp"
#include "text_util.hpp"

#include <json.hpp>

#include <array>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>

namespace bodyreg {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::size_t kBatch = 32;

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  return in;
}

void write_text(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << body;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Reads a CSV with a fixed header; yields each data record.
template <class F>
void read_csv(std::istream& in, std::string_view header, std::size_t fields, F&& row) {
  std::string line;
  std::size_t n = 0;
  if (!std::getline(in, line)) throw SchemaError(1, "missing header");
  ++n;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw SchemaError(1, "expected header '" + std::string(header) + "'");
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    auto cells = text::split_csv(line);
    if (!cells || cells->size() != fields) throw SchemaError(n, "expected " + std::to_string(fields) + " fields");
    row(*cells, n);
  }
}

BodyRegion region_field(const std::string& s, std::size_t line) {
  auto r = parse_region(s);
  if (!r) throw SchemaError(line, "unknown region '" + s + "'");
  return *r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Truth and partition

TruthLabels project_truth(std::span<const StudyRecord> studies, std::span<const BoundingBox3D> boxes) {
  TruthLabels out;
  for (const auto& st : studies) {
    for (const auto& se : st.series) {
      try {
        auto proj = project_box_labels(boxes, se);
        for (std::size_t i = 0; i < se.images.size(); ++i) {
          if (proj.labels[i]) out.by_sop[se.images[i].sop_uid] = *proj.labels[i];
        }
        for (auto& w : proj.warnings) out.warnings.push_back(se.series_uid + ": " + w);
      } catch (const Error& e) {
        out.warnings.push_back(se.series_uid + ": " + e.what());
      }
    }
  }
  return out;
}

void write_truth_csv(std::span<const StudyRecord> studies, const TruthLabels& truth, std::ostream& out) {
  out << "sop_uid,series_uid,region\n";
  for (const auto& st : studies) {
    for (const auto& se : st.series) {
      for (const auto& im : se.images) {
        const auto it = truth.by_sop.find(im.sop_uid);
        if (it == truth.by_sop.end()) continue;
        out << text::csv_field(im.sop_uid) << ',' << text::csv_field(se.series_uid) << ','
            << region_name(it->second) << '\n';
      }
    }
  }
}

TruthLabels read_truth_csv(std::istream& in) {
  TruthLabels t;
  read_csv(in, "sop_uid,series_uid,region", 3, [&](const std::vector<std::string>& c, std::size_t line) {
    if (c[0].empty()) throw SchemaError(line, "empty sop_uid");
    if (!t.by_sop.emplace(c[0], region_field(c[2], line)).second) {
      throw SchemaError(line, "duplicate sop_uid " + c[0]);
    }
  });
  return t;
}

TruthLabels load_truth_csv(const fs::path& path) {
  auto in = open_input(path);
  return read_truth_csv(in);
}

std::optional<BodyRegion> study_region(const StudyRecord& study, const TruthLabels& truth) {
  std::array<std::size_t, kRegionCount> counts{};
  bool any = false;
  for (const auto& se : study.series) {
    for (const auto& im : se.images) {
      const auto it = truth.by_sop.find(im.sop_uid);
      if (it == truth.by_sop.end()) continue;
      ++counts[region_index(it->second)];
      any = true;
    }
  }
  if (!any) return std::nullopt;
  std::size_t best = 0;
  for (std::size_t k = 1; k < kRegionCount; ++k) {
    if (counts[k] > counts[best]) best = k;
  }
  return region_at(best);
}

Modality study_modality(const StudyRecord& study) {
  std::size_t ct = 0, mr = 0;
  for (const auto& se : study.series) {
    if (se.modality == Modality::CT) ct += se.images.size();
    if (se.modality == Modality::MR) mr += se.images.size();
  }
  if (ct == 0 && mr == 0) return Modality::Other;
  return mr > ct ? Modality::MR : Modality::CT;
}

std::vector<SplitRow> partition_cohort(std::span<const StudyRecord> studies, const TruthLabels& truth,
                                       double ratio) {
  std::vector<SplitRow> out;
  for (Modality m : {Modality::CT, Modality::MR}) {
    std::vector<PartitionInput> inputs;
    for (const auto& st : studies) {
      if (study_modality(st) != m) continue;
      const auto region = study_region(st, truth);
      if (!region) continue;
      inputs.push_back({st.study_uid, st.patient_id, *region, st.image_count()});
    }
    if (inputs.empty()) continue;
    for (const auto& a : partition_patients(inputs, ratio)) out.push_back({a.study_uid, m, a.split, a.region});
  }
  return out;
}

void write_split_csv(std::span<const SplitRow> rows, std::ostream& out) {
  out << "study_uid,modality,split,region\n";
  for (const auto& r : rows) {
    out << text::csv_field(r.study_uid) << ',' << modality_name(r.modality) << ',' << split_name(r.split) << ','
        << region_name(r.region) << '\n';
  }
}

std::vector<SplitRow> read_split_csv(std::istream& in) {
  std::vector<SplitRow> rows;
  read_csv(in, "study_uid,modality,split,region", 4, [&](const std::vector<std::string>& c, std::size_t line) {
    SplitRow r;
    r.study_uid = c[0];
    r.modality = parse_modality(c[1]);
    if (r.modality == Modality::Other) throw SchemaError(line, "modality must be CT or MR");
    if (c[2] == split_name(Split::Train)) {
      r.split = Split::Train;
    } else if (c[2] == split_name(Split::Validation)) {
      r.split = Split::Validation;
    } else {
      throw SchemaError(line, "unknown split '" + c[2] + "'");
    }
    r.region = region_field(c[3], line);
    rows.push_back(std::move(r));
  });
  return rows;
}

std::vector<SplitRow> load_split_csv(const fs::path& path) {
  auto in = open_input(path);
  return read_split_csv(in);
}

// ---------------------------------------------------------------------------
// Classification

NormalizedImage load_normalized(const ImageRecord& image) {
  if (image.pixels) return preprocess_image(*image.pixels, image.sop_uid);
  if (image.source_path.empty()) throw Error(ErrorCode::IoError, image.sop_uid + " has neither pixels nor a source file");
  const auto bytes = dicom::read_file_bytes(image.source_path);
  const auto parsed = dicom::parse_dicom(bytes);
  if (!parsed.pixel_data) throw Error(ErrorCode::EmptyImage, image.source_path + " has no pixel data");
  const auto raw = dicom::pixel_payload(bytes, *parsed.pixel_data);
  return preprocess_image(decode_pixels(parsed.image, raw), image.sop_uid);
}

std::map<Modality, CentroidBackend> train_centroids(std::span<const StudyRecord> studies, const TruthLabels& truth,
                                                    const std::set<std::string>* only) {
  std::map<Modality, std::vector<std::pair<std::vector<double>, BodyRegion>>> features;
  for (const auto& st : studies) {
    if (only && !only->count(st.study_uid)) continue;
    for (const auto& se : st.series) {
      if (se.modality == Modality::Other) continue;
      for (const auto& im : se.images) {
        const auto t = truth.by_sop.find(im.sop_uid);
        if (t == truth.by_sop.end()) continue;
        features[se.modality].emplace_back(centroid_features(load_normalized(im).values), t->second);
      }
    }
  }
  std::map<Modality, CentroidBackend> out;
  for (const auto& [m, f] : features) out.emplace(m, train_centroid_features(f));
  return out;
}

std::vector<Prediction> classify_series(const SeriesRecord& series, ClassifierBackend& backend) {
  std::vector<Prediction> out;
  out.reserve(series.images.size());
  const bool pixels = dynamic_cast<const ScoreFileBackend*>(&backend) == nullptr;
  for (std::size_t i = 0; i < series.images.size(); i += kBatch) {
    const std::size_t end = std::min(series.images.size(), i + kBatch);
    std::vector<NormalizedImage> batch;
    for (std::size_t j = i; j < end; ++j) {
      if (pixels) {
        batch.push_back(load_normalized(series.images[j]));
      } else {
        NormalizedImage im;
        im.source_sop_uid = series.images[j].sop_uid;
        batch.push_back(std::move(im));
      }
    }
    for (auto& p : classify_batch(batch, backend)) out.push_back(std::move(p));
  }
  return out;
}

std::vector<Prediction> classify_cohort(std::span<const StudyRecord> studies, Modality modality,
                                        ClassifierBackend& backend) {
  std::vector<Prediction> out;
  for (const auto& st : studies) {
    for (const auto& se : st.series) {
      if (se.modality != modality) continue;
      for (auto& p : classify_series(se, backend)) out.push_back(std::move(p));
    }
  }
  return out;
}

std::vector<SeriesResult> postprocess_cohort(std::span<const StudyRecord> studies, Modality modality,
                                             const ScoreTable& scores, const PostprocessConfig& config) {
  std::vector<SeriesResult> out;
  for (const auto& st : studies) {
    for (const auto& se : st.series) {
      if (se.modality != modality || se.images.empty()) continue;
      std::vector<Prediction> preds;
      for (const auto& im : se.images) {
        const auto it = scores.rows.find(im.sop_uid);
        if (it == scores.rows.end()) continue;
        preds.push_back(make_prediction(im.sop_uid, scores.classes, it->second));
      }
      if (preds.empty()) continue;
      if (preds.size() != se.images.size()) {
        throw Error(ErrorCode::BackendFailure, "series " + se.series_uid + " is only partly scored (" +
                                                   std::to_string(preds.size()) + " of " +
                                                   std::to_string(se.images.size()) + " images)");
      }
      out.push_back(run_pipeline(se.series_uid, std::move(preds), modality, config));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalCohort build_eval_cohort(std::span<const StudyRecord> studies, std::span<const SeriesResultRecord> results,
                             const TruthLabels& truth, Modality modality) {
  std::map<std::string, const SeriesResultRecord*> by_series;
  for (const auto& r : results) by_series[r.series_uid] = &r;

  EvalCohort cohort;
  cohort.modality = modality;
  cohort.classes = ClassSet::reporting(modality).regions();
  for (const auto& st : studies) {
    EvalStudy es;
    es.study_uid = st.study_uid;
    if (st.patient_age) es.patient_age = static_cast<int>(*st.patient_age);
    es.patient_sex = st.patient_sex;
    es.manufacturer = st.manufacturer;
    es.institution = st.institution;
    for (const auto& se : st.series) {
      if (se.modality != modality) continue;
      const auto it = by_series.find(se.series_uid);
      if (it == by_series.end() || it->second->status != SeriesStatus::Accepted) continue;
      std::map<std::string, BodyRegion> final_label;
      for (const auto& im : it->second->images) {
        if (im.label) final_label[im.sop_uid] = *im.label;
      }
      std::vector<double> positions;
      try {
        positions = slice_geometry(se).position_along_normal;
      } catch (const Error&) {
        continue;
      }
      EvalSeries ev;
      ev.series_uid = se.series_uid;
      ev.slice_thickness = se.slice_thickness;
      ev.series_description = se.series_description;
      ev.contrast_agent = se.contrast_agent;
      ev.convolution_kernel = se.convolution_kernel;
      ev.sequence_tags = se.sequence_tags;
      for (std::size_t i = 0; i < se.images.size(); ++i) {
        const auto& uid = se.images[i].sop_uid;
        const auto t = truth.by_sop.find(uid);
        const auto p = final_label.find(uid);
        if (t == truth.by_sop.end() || p == final_label.end()) continue;
        ev.images.push_back({t->second, p->second, positions[i]});
      }
      if (!ev.images.empty()) es.series.push_back(std::move(ev));
    }
    if (!es.series.empty()) cohort.studies.push_back(std::move(es));
  }
  return cohort;
}

EvaluationOutput evaluate_cohort(std::span<const StudyRecord> studies, std::span<const SeriesResultRecord> results,
                                 const TruthLabels& truth, const PipelineConfig& config,
                                 const std::vector<SplitRow>* split) {
  config.validate();
  std::map<std::string, const SeriesResultRecord*> by_series;
  for (const auto& r : results) by_series[r.series_uid] = &r;
  std::map<std::string, Split> split_of;
  if (split) {
    for (const auto& r : *split) split_of[r.study_uid] = r.split;
  }
  const SynonymMap synonyms = config.synonyms ? SynonymMap::load(*config.synonyms) : SynonymMap::defaults();
  const auto bopts = config.bootstrap_options();

  EvaluationOutput out;
  ojson modalities = ojson::object();
  for (Modality m : {Modality::CT, Modality::MR}) {
    ModalitySummary ms;
    ms.modality = m;
    std::vector<StudyRecord> eval;
    std::vector<SeriesResultRecord> records;
    for (const auto& st : studies) {
      if (split) {
        const auto it = split_of.find(st.study_uid);
        if (it != split_of.end() && it->second == Split::Train && study_modality(st) == m) ++ms.train_studies;
        if (it == split_of.end() || it->second != Split::Validation) continue;
      }
      bool scored = false;
      for (const auto& se : st.series) {
        if (se.modality != m) continue;
        const auto r = by_series.find(se.series_uid);
        if (r == by_series.end()) continue;
        scored = true;
        records.push_back(*r->second);
      }
      if (scored) eval.push_back(st);
    }
    if (eval.empty()) continue;
    ms.eval_studies = eval.size();

    std::size_t raw_correct = 0, final_correct = 0, final_total = 0;
    for (const auto& r : records) {
      if (r.status != SeriesStatus::Accepted) ++ms.rejected_series;
      for (const auto& im : r.images) {
        const auto t = truth.by_sop.find(im.sop_uid);
        if (t == truth.by_sop.end()) continue;
        ++ms.eval_images;
        if (im.raw_label == t->second) ++raw_correct;
        if (im.label) {
          ++final_total;
          if (*im.label == t->second) ++final_correct;
        }
      }
    }
    if (ms.eval_images) ms.raw_accuracy = static_cast<double>(raw_correct) / static_cast<double>(ms.eval_images);
    if (final_total) ms.final_accuracy = static_cast<double>(final_correct) / static_cast<double>(final_total);

    ojson mj = {{"train_studies", ms.train_studies}, {"eval_studies", ms.eval_studies},
                {"eval_images", ms.eval_images},     {"raw_accuracy", ms.raw_accuracy},
                {"final_accuracy", ms.final_accuracy}, {"rejected_series", ms.rejected_series}};

    const EvalCohort cohort = build_eval_cohort(eval, records, truth, m);
    if (!cohort.studies.empty()) {
      auto regions = region_report(cohort, bopts);
      std::vector<FactorReport> factors;
      for (Factor f : kAllFactors) {
        if (factor_applies(f, m)) factors.push_back(factor_report(cohort, f, bopts));
      }
      const auto jk = jackknife(cohort, sensitivity_metric());
      mj["jackknife_sensitivity"] = {
          {"estimate", jk.estimate}, {"standard_error", jk.standard_error}, {"studies", jk.studies}};
      (m == Modality::CT ? out.report.ct_regions : out.report.mr_regions) = std::move(regions);
      (m == Modality::CT ? out.report.ct_factors : out.report.mr_factors) = std::move(factors);
    } else {
      mj["jackknife_sensitivity"] = nullptr;
    }

    // Stored tags against the predicted regions of accepted series.
    std::vector<TagAgreementInput> body_part, procedure;
    for (const auto& st : eval) {
      std::set<BodyRegion> predicted;
      for (const auto& se : st.series) {
        const auto it = by_series.find(se.series_uid);
        if (it == by_series.end() || it->second->status != SeriesStatus::Accepted) continue;
        predicted.insert(it->second->series_regions.begin(), it->second->series_regions.end());
      }
      if (predicted.empty()) continue;
      std::vector<BodyRegion> pv(predicted.begin(), predicted.end());
      body_part.push_back({st.body_part_examined, pv});
      procedure.push_back({st.procedure_description, pv});
    }
    const auto bp = tag_agreement(body_part, synonyms);
    const auto pd = tag_agreement(procedure, synonyms);
    mj["tag_agreement"] = {{"body_part", {{"matched", bp.matched}, {"total", bp.total}}},
                           {"procedure", {{"matched", pd.matched}, {"total", pd.total}}}};
    modalities[std::string(modality_name(m))] = std::move(mj);
    out.modalities.push_back(ms);
  }

  ojson j = {{"seed", config.seed},
             {"bootstrap", config.bootstrap},
             {"level", config.level},
             {"truth_warnings", truth.warnings},
             {"modalities", std::move(modalities)},
             {"report", ojson::parse(report_to_json(out.report))}};
  out.json = j.dump(2) + "\n";
  return out;
}

ReportData report_from_evaluation(std::string_view evaluation_json) {
  ojson j;
  try {
    j = ojson::parse(evaluation_json);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("evaluation file: ") + e.what());
  }
  if (!j.is_object() || !j.contains("report")) throw Error(ErrorCode::SchemaError, "evaluation file has no report");
  return report_from_json(j["report"].dump());
}

// ---------------------------------------------------------------------------

RunSummary run_end_to_end(const RunOptions& options) {
  const PipelineConfig& cfg = options.config;
  cfg.validate();
  if (cfg.backend == BackendKind::Scores && !cfg.scores) {
    throw Error(ErrorCode::InvalidArgument, "the scores backend needs a score file");
  }
  RunSummary summary;
  std::error_code ec;
  fs::create_directories(options.out, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + options.out.string() + ": " + ec.message());
  auto emit = [&](const std::string& name, const std::string& body) {
    write_text(options.out / name, body);
    summary.outputs.push_back(options.out / name);
  };
  emit("config.json", dump_config(cfg));

  auto cohort = ingest_tree(options.input);
  summary.skipped_files = cohort.skipped.size();
  for (const auto& st : cohort.studies) summary.ingested_images += st.image_count();
  {
    std::ostringstream s;
    write_metadata_ndjson(cohort.studies, s);
    emit("cohort.ndjson", s.str());
    std::ostringstream k;
    k << "path,error\n";
    for (const auto& e : cohort.skipped) k << text::csv_field(e.path) << ',' << text::csv_field(e.error) << '\n';
    emit("skipped.csv", k.str());
  }

  auto filtered = filter_cohort(cohort.studies, cfg.filter);
  {
    std::ostringstream s;
    write_filter_report(filtered.report, s);
    emit("filter_report.csv", s.str());
  }
  Rng dedupe_rng = Rng::derive(cfg.seed, 1);
  const std::vector<StudyRecord> studies = dedupe_patients(filtered.included, dedupe_rng).studies;
  summary.included_studies = studies.size();

  const TruthLabels truth = project_truth(studies, read_label_file(options.labels));
  {
    std::ostringstream s;
    write_truth_csv(studies, truth, s);
    emit("truth.csv", s.str());
  }

  const bool scores_backend = cfg.backend == BackendKind::Scores;
  std::vector<SplitRow> split;
  if (!scores_backend) {
    split = partition_cohort(studies, truth, cfg.split_ratio);
    std::ostringstream s;
    write_split_csv(split, s);
    emit("split.csv", s.str());
  }

  std::vector<SeriesResult> results;
  if (scores_backend) {
    const ScoreTable table = load_scores(*cfg.scores);
    for (Modality m : {Modality::CT, Modality::MR}) {
      for (auto& r : postprocess_cohort(studies, m, table, cfg.postprocess)) results.push_back(std::move(r));
    }
  } else {
    std::set<std::string> train_ids;
    std::map<Modality, std::vector<StudyRecord>> validation;
    std::map<std::string, const StudyRecord*> by_uid;
    for (const auto& st : studies) by_uid[st.study_uid] = &st;
    for (const auto& r : split) {
      if (r.split == Split::Train) {
        train_ids.insert(r.study_uid);
      } else {
        validation[r.modality].push_back(*by_uid.at(r.study_uid));
      }
    }
    auto models = train_centroids(studies, truth, &train_ids);
    for (auto& [m, model] : models) {
      const std::string tag = lower(modality_name(m));
      model.save(options.out / ("centroid_" + tag + ".json"));
      summary.outputs.push_back(options.out / ("centroid_" + tag + ".json"));
      auto& held_out = validation[m];
      std::sort(held_out.begin(), held_out.end(),
                [](const StudyRecord& a, const StudyRecord& b) { return a.study_uid < b.study_uid; });
      const auto preds = classify_cohort(held_out, m, model);
      std::ostringstream s;
      write_scores(model.classes(), preds, s);
      emit("scores_" + tag + ".csv", s.str());
      // Same path as the staged commands: post-process from the written scores.
      std::istringstream in(s.str());
      const ScoreTable table = parse_scores(in);
      for (auto& r : postprocess_cohort(held_out, m, table, cfg.postprocess)) results.push_back(std::move(r));
    }
  }

  std::ostringstream series_ndjson;
  for (const auto& r : results) write_series_result(r, series_ndjson);
  emit("series_results.ndjson", series_ndjson.str());
  std::istringstream records_in(series_ndjson.str());
  const auto records = parse_series_results(records_in);

  const auto evaluation = evaluate_cohort(studies, records, truth, cfg, scores_backend ? nullptr : &split);
  emit("evaluation.json", evaluation.json);
  summary.modalities = evaluation.modalities;
  for (auto& p : emit_report(evaluation.report, options.out / "report")) summary.outputs.push_back(std::move(p));

  std::vector<AuditInput> audit_inputs;
  for (const auto& st : studies) {
    if (auto region = study_region(st, truth)) audit_inputs.push_back({st.study_uid, *region});
  }
  Rng audit_rng = Rng::derive(cfg.seed, 2);
  std::ostringstream audit;
  audit << "study_uid\n";
  if (!audit_inputs.empty()) {
    for (const auto& uid : audit_sample(audit_inputs, 0.025, audit_rng)) audit << text::csv_field(uid) << '\n';
  }
  emit("audit.csv", audit.str());
  return summary;
}

}  // namespace bodyreg
