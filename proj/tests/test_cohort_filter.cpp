#include "bodyreg/cohort_filter.hpp"
#include "bodyreg/error.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

using namespace bodyreg;

namespace {

ImageRecord good_image(const std::string& uid) {
  ImageRecord im;
  im.sop_uid = uid;
  im.rows = 64;
  im.cols = 64;
  im.bits_allocated = 16;
  im.bits_stored = 12;
  im.samples_per_pixel = 1;
  im.has_pixel_data = true;
  im.transfer_syntax_uid = "1.2.840.10008.1.2.1";
  im.image_orientation_patient = Orientation{1, 0, 0, 0, 1, 0};
  return im;
}

SeriesRecord series(Modality m, std::string description, Orientation o = {1, 0, 0, 0, 1, 0}) {
  SeriesRecord s;
  s.series_uid = "S" + description;
  s.modality = m;
  s.series_description = std::move(description);
  auto im = good_image("I");
  im.image_orientation_patient = o;
  s.images.push_back(im);
  return s;
}

FilterReason reason(const FilterDecision& d) { return d.reason; }

}  // namespace

TEST_CASE("series rules") {
  const double h = std::sqrt(0.5);
  CHECK(filter_series(series(Modality::CT, "AXIAL")).included);
  CHECK(reason(filter_series(series(Modality::Other, "AXIAL"))) == FilterReason::WrongModality);
  CHECK(reason(filter_series(series(Modality::CT, "SAG", {0, 1, 0, 0, 0, -1}))) == FilterReason::NotAxial);
  // 45 degrees is still axial; a touch beyond is not.
  CHECK(filter_series(series(Modality::CT, "OBLIQUE", {1, 0, 0, 0, h, -h})).included);
  const double a = 45.01 * std::acos(-1.0) / 180.0;
  CHECK(reason(filter_series(series(Modality::CT, "OBLIQUE", {1, 0, 0, 0, std::cos(a), -std::sin(a)}))) ==
        FilterReason::NotAxial);
  CHECK(reason(filter_series(series(Modality::MR, "Ax ADC map"))) == FilterReason::KeywordExcluded);
  CHECK(reason(filter_series(series(Modality::CT, "velocity"))) == FilterReason::KeywordExcluded);
  CHECK(filter_series(series(Modality::CT, "ADC")).included);  // MR-only keyword
  CHECK(reason(filter_series(series(Modality::CT, "Scout"))) == FilterReason::MPRorDerived);
  CHECK(reason(filter_series(series(Modality::MR, "cor MPR"))) == FilterReason::MPRorDerived);
}

TEST_CASE("missing orientation is assumed axial unless strict") {
  auto s = series(Modality::CT, "AXIAL");
  s.images[0].image_orientation_patient.reset();
  const auto d = filter_series(s);
  CHECK(d.included);
  CHECK_FALSE(d.detail.empty());
  auto strict = FilterConfig::defaults();
  strict.strict_geometry = true;
  CHECK(reason(filter_series(s, strict)) == FilterReason::NotAxial);
}

TEST_CASE("image rules") {
  CHECK(filter_image(good_image("a")).included);
  auto im = good_image("a");
  im.has_pixel_data = false;
  CHECK(reason(filter_image(im)) == FilterReason::NoPixelData);
  im = good_image("a");
  im.samples_per_pixel = 3;
  CHECK(reason(filter_image(im)) == FilterReason::MultiChannel);
  im = good_image("a");
  im.bits_stored = 8;
  CHECK(reason(filter_image(im)) == FilterReason::LowBitDepth);
  im.bits_stored = 9;
  CHECK(filter_image(im).included);
  im = good_image("a");
  im.rows = 31;
  im.cols = 32;
  CHECK(reason(filter_image(im)) == FilterReason::TooFewPixels);
  im.rows = 32;  // 1024
  CHECK(filter_image(im).included);
  im = good_image("a");
  im.transfer_syntax_uid = "1.2.840.10008.1.2.4.50";
  CHECK(reason(filter_image(im)) == FilterReason::UnsupportedCodec);
  im.transfer_syntax_uid = "1.2.840.10008.1.2.4.70";
  CHECK(filter_image(im).included);
  im.transfer_syntax_uid = "1.2.840.10008.1.2.5";
  CHECK(filter_image(im).included);
}

TEST_CASE("cohort filter drops empty series and studies, reports every decision") {
  StudyRecord st;
  st.study_uid = "T";
  st.series.push_back(series(Modality::CT, "AXIAL"));
  st.series.push_back(series(Modality::CT, "LOCALIZER"));
  auto bad = series(Modality::CT, "AX2");
  bad.images[0].bits_stored = 8;
  bad.images[0].bits_allocated = 8;
  st.series.push_back(bad);
  const auto out = filter_cohort({st});
  REQUIRE(out.included.size() == 1);
  CHECK(out.included[0].series.size() == 1);
  CHECK(out.report.size() == 5);  // 3 series + 2 images of included series
  std::ostringstream csv;
  write_filter_report(out.report, csv);
  CHECK(csv.str().rfind("uid,level,included,reason,detail\n", 0) == 0);
}

TEST_CASE("dedupe keeps exactly one study per patient, deterministically") {
  std::vector<StudyRecord> studies;
  for (int i = 0; i < 30; ++i) {
    StudyRecord s;
    s.study_uid = "S" + std::to_string(i);
    s.patient_id = i % 7 == 0 ? "" : "P" + std::to_string(i % 5);
    studies.push_back(s);
  }
  Rng a(11), b(11);
  const auto ra = dedupe_patients(studies, a);
  const auto rb = dedupe_patients(studies, b);
  std::vector<std::string> ua, ub;
  for (const auto& s : ra.studies) ua.push_back(s.study_uid);
  for (const auto& s : rb.studies) ub.push_back(s.study_uid);
  CHECK(ua == ub);
  std::map<std::string, int> per_patient;
  for (const auto& s : ra.studies) {
    if (!s.patient_id.empty()) ++per_patient[s.patient_id];
  }
  CHECK(per_patient.size() == 5);
  for (const auto& [p, n] : per_patient) CHECK(n == 1);
  CHECK(ra.missing_patient_id.size() == 5);  // i = 0, 7, 14, 21, 28
}

TEST_CASE("partition property: per-region train share is round(n * ratio), patients never split") {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(60);
    const double ratio = 0.05 + 0.9 * rng.uniform01();
    std::vector<PartitionInput> in;
    for (std::size_t i = 0; i < n; ++i) {
      PartitionInput p;
      p.study_uid = "S" + std::to_string(i);
      p.patient_id = "P" + std::to_string(i);  // one study per patient
      p.region = region_at(rng.uniform_index(4));
      p.image_count = 1 + rng.uniform_index(200);
      in.push_back(p);
    }
    const auto out = partition_patients(in, ratio);
    REQUIRE(out.size() == n);
    std::map<BodyRegion, std::pair<std::size_t, std::size_t>> counts;  // (n, train)
    for (const auto& a : out) {
      auto& c = counts[a.region];
      ++c.first;
      c.second += a.split == Split::Train;
    }
    for (const auto& [r, c] : counts) {
      const auto want = static_cast<std::size_t>(std::floor(static_cast<double>(c.first) * ratio + 0.5));
      CHECK(c.second == want);
    }
  }

  // Shared patients stay together.
  std::vector<PartitionInput> in;
  for (int i = 0; i < 12; ++i) in.push_back({"S" + std::to_string(i), "P" + std::to_string(i / 3), BodyRegion::Chest, 10});
  const auto out = partition_patients(in, 0.75);
  for (int p = 0; p < 4; ++p) {
    CHECK(out[3 * p].split == out[3 * p + 1].split);
    CHECK(out[3 * p].split == out[3 * p + 2].split);
  }
}

TEST_CASE("partition argument checks") {
  CHECK_THROWS_AS(partition_patients({}, 0.75), Error);
  CHECK_THROWS_AS(partition_patients({{"S", "P", BodyRegion::Head, 1}}, 1.0), Error);
}

TEST_CASE("audit sample size and spread") {
  std::vector<AuditInput> in;
  for (int i = 0; i < 200; ++i) in.push_back({"S" + std::to_string(i), region_at(static_cast<std::size_t>(i % 4))});
  Rng rng(5);
  const auto pick = audit_sample(in, 0.025, rng);
  CHECK(pick.size() == 5);  // ceil(0.025 * 200)
  std::set<std::string> unique(pick.begin(), pick.end());
  CHECK(unique.size() == pick.size());
  std::map<BodyRegion, int> per;
  for (const auto& uid : pick) per[in[std::stoul(uid.substr(1))].region]++;
  CHECK(per.size() == 4);
  for (const auto& [r, k] : per) CHECK((k == 1 || k == 2));
}
