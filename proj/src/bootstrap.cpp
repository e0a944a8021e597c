#include "bodyreg/bootstrap.hpp"

#include "bodyreg/error.hpp"
#include "bodyreg/geometry.hpp"
#include "bodyreg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace bodyreg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void add_series(ConfusionMatrix& cm, const EvalSeries& s) {
  for (const auto& im : s.images) cm.add(im.truth, im.predicted);
}

// Sparse confusion contribution: (flat cell, count).
using Cells = std::vector<std::pair<std::uint32_t, std::uint32_t>>;

struct SeriesPlan {
  std::vector<Cells> by_start;  // one entry per candidate start in the first window
};

struct StudyPlan {
  std::vector<SeriesPlan> series;
};

std::vector<StudyPlan> plan(const EvalCohort& cohort, double step) {
  const ConfusionMatrix probe(cohort.classes);
  const std::size_t k = cohort.classes.size();
  std::vector<StudyPlan> out;
  for (const auto& st : cohort.studies) {
    StudyPlan sp;
    for (const auto& se : st.series) {
      if (se.images.empty()) continue;
      std::vector<double> positions;
      positions.reserve(se.images.size());
      for (const auto& im : se.images) positions.push_back(im.position);
      SeriesPlan plan_s;
      for (std::size_t start : first_window(positions, step)) {
        std::map<std::uint32_t, std::uint32_t> cells;
        for (std::size_t i : sample_from_start(positions, step, start)) {
          const auto t = probe.index_of(se.images[i].truth);
          const auto p = probe.index_of(se.images[i].predicted);
          if (t && p) ++cells[static_cast<std::uint32_t>(*t * k + *p)];
        }
        plan_s.by_start.emplace_back(cells.begin(), cells.end());
      }
      sp.series.push_back(std::move(plan_s));
    }
    if (!sp.series.empty()) out.push_back(std::move(sp));
  }
  return out;
}

CIResult summarize(std::vector<double> values, const BootstrapOptions& o, double estimate) {
  CIResult r;
  r.level = o.level;
  r.seed = o.seed;
  r.estimate = estimate;
  values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return !std::isfinite(v); }), values.end());
  r.resamples = values.size();
  if (values.empty()) {
    r.point = r.lo = r.hi = kNaN;
    return r;
  }
  std::sort(values.begin(), values.end());
  const double alpha = (1.0 - o.level) / 2.0;
  r.lo = sorted_quantile(values, alpha);
  r.hi = sorted_quantile(values, 1.0 - alpha);
  r.point = std::clamp(sorted_quantile(values, 0.5), r.lo, r.hi);
  return r;
}

}  // namespace

double sorted_quantile(const std::vector<double>& v, double q) {
  if (v.empty()) return kNaN;
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

ConfusionMatrix full_confusion(const EvalCohort& cohort) {
  ConfusionMatrix cm(cohort.classes);
  for (const auto& st : cohort.studies) {
    for (const auto& se : st.series) add_series(cm, se);
  }
  return cm;
}

MetricFn sensitivity_metric() {
  return [](const ConfusionMatrix& cm) { return cm.total() == 0 ? kNaN : weighted_sensitivity(cm); };
}

MetricFn specificity_metric() {
  return [](const ConfusionMatrix& cm) {
    if (cm.total() == 0) return kNaN;
    const auto s = weighted_specificity(cm);
    return s.value ? *s.value : kNaN;
  };
}

MetricFn recall_metric(BodyRegion region) {
  return [region](const ConfusionMatrix& cm) {
    const auto k = cm.index_of(region);
    if (!k) return kNaN;
    const auto r = recall(cm, *k);
    return r ? *r : kNaN;
  };
}

MetricFn tnr_metric(BodyRegion region) {
  return [region](const ConfusionMatrix& cm) {
    const auto k = cm.index_of(region);
    if (!k) return kNaN;
    const auto r = true_negative_rate(cm, *k);
    return r ? *r : kNaN;
  };
}

std::vector<CIResult> bootstrap_ci(const EvalCohort& cohort, const std::vector<MetricFn>& metrics,
                                   const BootstrapOptions& o) {
  if (!(o.level > 0.0 && o.level < 1.0)) throw Error(ErrorCode::InvalidArgument, "level must lie in (0, 1)");
  if (o.resamples == 0) throw Error(ErrorCode::InvalidArgument, "need at least one resample");
  if (!(o.step_mm > 0.0)) throw Error(ErrorCode::InvalidArgument, "sampling step must be positive");
  const auto plans = plan(cohort, o.step_mm);
  if (plans.empty()) throw Error(ErrorCode::EmptyCohort, "no study with evaluable images");

  const std::size_t n = plans.size();
  ConfusionMatrix cm(cohort.classes);
  std::vector<std::vector<double>> values(metrics.size());
  for (auto& v : values) v.reserve(o.resamples);

  for (std::size_t b = 0; b < o.resamples; ++b) {
    Rng rng = Rng::derive(o.seed, b);
    auto flat = cm.counts.values();
    std::fill(flat.begin(), flat.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const StudyPlan& st = plans[rng.uniform_index(n)];
      const SeriesPlan& se = st.series[rng.uniform_index(st.series.size())];
      const Cells& cells = se.by_start[rng.uniform_index(se.by_start.size())];
      for (const auto& [cell, count] : cells) flat[cell] += count;
    }
    for (std::size_t m = 0; m < metrics.size(); ++m) values[m].push_back(metrics[m](cm));
  }

  const ConfusionMatrix full = full_confusion(cohort);
  std::vector<CIResult> out;
  out.reserve(metrics.size());
  for (std::size_t m = 0; m < metrics.size(); ++m) out.push_back(summarize(std::move(values[m]), o, metrics[m](full)));
  return out;
}

CIResult bootstrap_ci(const EvalCohort& cohort, const MetricFn& metric, const BootstrapOptions& options) {
  return bootstrap_ci(cohort, std::vector<MetricFn>{metric}, options).front();
}

JackknifeResult jackknife(const EvalCohort& cohort, const MetricFn& metric) {
  std::vector<ConfusionMatrix> per_study;
  for (const auto& st : cohort.studies) {
    ConfusionMatrix cm(cohort.classes);
    for (const auto& se : st.series) add_series(cm, se);
    if (cm.total() > 0) per_study.push_back(std::move(cm));
  }
  if (per_study.empty()) throw Error(ErrorCode::EmptyCohort, "no study with evaluable images");
  const ConfusionMatrix full = full_confusion(cohort);
  JackknifeResult r;
  r.estimate = metric(full);
  r.studies = per_study.size();
  if (per_study.size() < 2) return r;

  std::vector<double> theta;
  for (const auto& cm : per_study) {
    ConfusionMatrix rest = full;
    auto out = rest.counts.values();
    auto sub = cm.counts.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= sub[i];
    const double v = metric(rest);
    if (std::isfinite(v)) theta.push_back(v);
  }
  if (theta.size() < 2) return r;
  double mean = 0.0;
  for (double v : theta) mean += v;
  mean /= static_cast<double>(theta.size());
  double ss = 0.0;
  for (double v : theta) ss += (v - mean) * (v - mean);
  const double m = static_cast<double>(theta.size());
  r.standard_error = std::sqrt((m - 1.0) / m * ss);
  return r;
}

}  // namespace bodyreg
