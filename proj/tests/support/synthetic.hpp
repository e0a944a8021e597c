#pragma once

#include "bodyreg/bootstrap.hpp"
#include "bodyreg/rng.hpp"

#include <algorithm>

namespace testing {

// Studies of one 80 mm series at 2 mm spacing. Correctness is constant over
// each 10 mm block, drawn with a per-study accuracy uniform on p +/- spread,
// so the expected fraction of correct blocks is exactly p. With two_class the
// truth alternates between Chest and Abdomen by study.
inline bodyreg::EvalCohort coverage_cohort(bodyreg::Rng& rng, std::size_t studies, double p, double spread = 0.08,
                                           bool two_class = false) {
  using bodyreg::BodyRegion;
  bodyreg::EvalCohort c;
  c.modality = bodyreg::Modality::CT;
  c.classes = {BodyRegion::Abdomen, BodyRegion::Chest};
  for (std::size_t s = 0; s < studies; ++s) {
    bodyreg::EvalStudy st;
    st.study_uid = "S" + std::to_string(s);
    bodyreg::EvalSeries se;
    se.series_uid = st.study_uid + ".1";
    const double q = std::clamp(rng.uniform(p - spread, p + spread), 0.0, 1.0);
    const BodyRegion truth = two_class && s % 2 ? BodyRegion::Abdomen : BodyRegion::Chest;
    const BodyRegion wrong = truth == BodyRegion::Chest ? BodyRegion::Abdomen : BodyRegion::Chest;
    for (int block = 0; block < 8; ++block) {
      const bool correct = rng.uniform01() < q;
      for (int k = 0; k < 5; ++k) {
        se.images.push_back({truth, correct ? truth : wrong, static_cast<double>(block * 10 + k * 2)});
      }
    }
    st.series.push_back(std::move(se));
    c.studies.push_back(std::move(st));
  }
  return c;
}

// Fraction of trials whose percentile interval for sensitivity covers p.
inline double coverage(std::size_t trials, std::size_t studies, std::size_t resamples, double p, std::uint64_t seed) {
  std::size_t hit = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    bodyreg::Rng rng = bodyreg::Rng::derive(seed, t);
    const auto cohort = coverage_cohort(rng, studies, p);
    bodyreg::BootstrapOptions o;
    o.resamples = resamples;
    o.seed = seed + 1000003 * (t + 1);
    const auto ci = bodyreg::bootstrap_ci(cohort, bodyreg::sensitivity_metric(), o);
    hit += ci.lo <= p && p <= ci.hi;
  }
  return static_cast<double>(hit) / static_cast<double>(trials);
}

}  // namespace testing
