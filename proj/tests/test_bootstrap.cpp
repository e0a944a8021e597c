#include "bodyreg/bootstrap.hpp"
#include "bodyreg/error.hpp"

#include "support/synthetic.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace bodyreg;
using Catch::Matchers::WithinAbs;

namespace {

EvalStudy study(const std::string& uid, std::vector<std::pair<BodyRegion, BodyRegion>> pairs, double spacing = 2.0) {
  EvalStudy st;
  st.study_uid = uid;
  EvalSeries se;
  se.series_uid = uid + ".1";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    se.images.push_back({pairs[i].first, pairs[i].second, spacing * static_cast<double>(i)});
  }
  st.series.push_back(se);
  return st;
}

}  // namespace

TEST_CASE("sorted quantile interpolates linearly") {
  const std::vector<double> v{1, 2, 3, 4, 5};
  CHECK(sorted_quantile(v, 0.0) == 1.0);
  CHECK(sorted_quantile(v, 1.0) == 5.0);
  CHECK(sorted_quantile(v, 0.5) == 3.0);
  CHECK(sorted_quantile(v, 0.025) == 1.1);
  CHECK(std::isnan(sorted_quantile({}, 0.5)));
}

TEST_CASE("fixed seed gives identical intervals; seed changes them") {
  Rng rng(4);
  const auto c = testing::coverage_cohort(rng, 60, 0.8, 0.08, true);
  BootstrapOptions o;
  o.resamples = 400;
  o.seed = 42;
  const auto a = bootstrap_ci(c, {sensitivity_metric(), specificity_metric()}, o);
  const auto b = bootstrap_ci(c, {sensitivity_metric(), specificity_metric()}, o);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(std::isfinite(a[i].lo));
    CHECK(a[i].lo == b[i].lo);
    CHECK(a[i].hi == b[i].hi);
    CHECK(a[i].point == b[i].point);
  }
  o.seed = 43;
  const auto d = bootstrap_ci(c, sensitivity_metric(), o);
  CHECK((d.lo != a[0].lo || d.hi != a[0].hi));
  CHECK(a[0].lo <= a[0].point);
  CHECK(a[0].point <= a[0].hi);
  CHECK(a[0].resamples == 400);
  CHECK(a[0].estimate == weighted_sensitivity(full_confusion(c)));
}

TEST_CASE("metrics evaluated together match metrics evaluated alone") {
  Rng rng(5);
  const auto c = testing::coverage_cohort(rng, 30, 0.7, 0.08, true);
  BootstrapOptions o;
  o.resamples = 200;
  o.seed = 9;
  const auto both = bootstrap_ci(c, {sensitivity_metric(), specificity_metric()}, o);
  const auto spec = bootstrap_ci(c, specificity_metric(), o);
  CHECK(both[1].lo == spec.lo);
  CHECK(both[1].hi == spec.hi);
}

TEST_CASE("all-correct cohort gives [1, 1]") {
  EvalCohort c;
  c.classes = {BodyRegion::Abdomen, BodyRegion::Chest, BodyRegion::Head};
  for (int s = 0; s < 12; ++s) {
    c.studies.push_back(study("S" + std::to_string(s), {{BodyRegion::Abdomen, BodyRegion::Abdomen},
                                                       {BodyRegion::Chest, BodyRegion::Chest},
                                                       {BodyRegion::Head, BodyRegion::Head}}));
  }
  const auto ci = bootstrap_ci(c, {sensitivity_metric(), specificity_metric()}, {300, 0.95, 1, 10.0});
  for (const auto& r : ci) {
    CHECK(r.lo == 1.0);
    CHECK(r.hi == 1.0);
    CHECK(r.point == 1.0);
  }
}

TEST_CASE("undefined replicates are dropped, empty cohorts refused") {
  EvalCohort c;
  c.classes = {BodyRegion::Abdomen, BodyRegion::Chest};
  c.studies.push_back(study("A", {{BodyRegion::Abdomen, BodyRegion::Abdomen}}));
  c.studies.push_back(study("B", {{BodyRegion::Chest, BodyRegion::Chest}}));
  const auto r = bootstrap_ci(c, recall_metric(BodyRegion::Chest), {500, 0.95, 3, 10.0});
  // Replicates that drew only study A have no Chest support.
  CHECK(r.resamples < 500);
  CHECK(r.resamples > 300);
  CHECK(r.lo == 1.0);

  EvalCohort empty;
  empty.classes = c.classes;
  try {
    bootstrap_ci(empty, sensitivity_metric());
    FAIL("accepted an empty cohort");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyCohort);
  }
  CHECK_THROWS_AS(bootstrap_ci(c, sensitivity_metric(), {0, 0.95, 0, 10.0}), Error);
  CHECK_THROWS_AS(bootstrap_ci(c, sensitivity_metric(), {10, 1.0, 0, 10.0}), Error);
}

TEST_CASE("replicates subsample every step from the first window") {
  // One study, 2 mm spacing, image i correct iff i % 5 == 0. With a 10 mm step
  // a replicate keeps exactly one residue class, so its accuracy is 0 or 1.
  std::vector<std::pair<BodyRegion, BodyRegion>> pairs;
  for (int i = 0; i < 25; ++i) {
    pairs.push_back({BodyRegion::Chest, i % 5 == 0 ? BodyRegion::Chest : BodyRegion::Abdomen});
  }
  EvalCohort c;
  c.classes = {BodyRegion::Abdomen, BodyRegion::Chest};
  c.studies.push_back(study("S", pairs));
  const auto r = bootstrap_ci(c, sensitivity_metric(), {2000, 0.95, 11, 10.0});
  CHECK(r.lo == 0.0);
  CHECK(r.hi == 1.0);
  CHECK(r.estimate == 0.2);
}

TEST_CASE("jackknife by hand") {
  EvalCohort c;
  c.classes = {BodyRegion::Abdomen, BodyRegion::Chest};
  const auto ok = std::pair{BodyRegion::Chest, BodyRegion::Chest};
  const auto bad = std::pair{BodyRegion::Chest, BodyRegion::Abdomen};
  c.studies.push_back(study("A", {ok, ok}));
  c.studies.push_back(study("B", {ok, bad}));
  c.studies.push_back(study("C", {bad, bad}));
  const auto j = jackknife(c, sensitivity_metric());
  CHECK(j.estimate == 0.5);
  CHECK(j.studies == 3);
  // Leave-one-out: 1/4, 2/4, 3/4; mean 0.5; SE = sqrt(2/3 * 0.125)
  CHECK_THAT(j.standard_error, WithinAbs(std::sqrt(2.0 / 3.0 * 0.125), 1e-15));
}

TEST_CASE("interval coverage on synthetic cohorts (reduced run)") {
  const double cov = testing::coverage(200, 200, 500, 0.85, 77);
  CHECK(cov >= 0.90);
  CHECK(cov <= 0.99);
}
