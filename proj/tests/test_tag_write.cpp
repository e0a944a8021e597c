#include "bodyreg/ingest.hpp"
#include "bodyreg/phantom.hpp"
#include "bodyreg/tag_write.hpp"

#include "support/test_support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <sstream>

using namespace bodyreg;

namespace {

SeriesResultRecord result_for(const SeriesRecord& se, std::vector<BodyRegion> labels, SeriesStatus status) {
  SeriesResultRecord r;
  r.series_uid = se.series_uid;
  r.modality = se.modality;
  r.status = status;
  for (std::size_t i = 0; i < se.images.size(); ++i) {
    SeriesResultImage im;
    im.sop_uid = se.images[i].sop_uid;
    if (status == SeriesStatus::Accepted) im.label = labels[i % labels.size()];
    r.images.push_back(im);
  }
  return r;
}

}  // namespace

TEST_CASE("predominant label") {
  SeriesResultRecord r;
  for (auto l : {BodyRegion::Chest, BodyRegion::Neck, BodyRegion::Chest, BodyRegion::Neck}) {
    r.images.push_back({"x", l, l, 0, 0});
  }
  CHECK(predominant_label(r) == BodyRegion::Chest);  // tie -> canonical first
  r.images.push_back({"y", BodyRegion::Neck, BodyRegion::Neck, 0, 0});
  CHECK(predominant_label(r) == BodyRegion::Neck);
  CHECK_FALSE(predominant_label(SeriesResultRecord{}));
}

TEST_CASE("body part tags: dry run, out_dir, in place, skips") {
  testing::TempDir dir;
  PhantomSpec s;
  s.regions = {{BodyRegion::Abdomen, 20.0, {}}, {BodyRegion::Chest, 40.0, {}}};
  s.body_part_examined = "ABDOMEN";
  generate_phantom(s, dir / "in");
  s.study_number = 2;
  s.regions = {{BodyRegion::Head, 20.0, {}}};
  generate_phantom(s, dir / "in2");
  auto cohort = ingest_tree(dir.path());
  REQUIRE(cohort.studies.size() == 2);
  const auto& first = cohort.studies[0].series[0].images.size() > 10 ? cohort.studies[0] : cohort.studies[1];
  const auto& second = &first == &cohort.studies[0] ? cohort.studies[1] : cohort.studies[0];
  const std::vector<SeriesResultRecord> results{
      result_for(first.series[0], {BodyRegion::Chest, BodyRegion::Chest, BodyRegion::Abdomen}, SeriesStatus::Accepted),
      result_for(second.series[0], {}, SeriesStatus::RejectedUncertain)};

  const auto before = testing::slurp(first.series[0].images[0].source_path);
  const auto dry = write_body_part_tags(cohort.studies, results, true);
  REQUIRE(dry.size() == first.image_count() + second.image_count());
  for (const auto& ch : dry) {
    if (ch.series_uid == first.series[0].series_uid) {
      CHECK(ch.action == "dry-run");
      CHECK(ch.new_value == "CHEST");
      CHECK(ch.old_value == "ABDOMEN");
    } else {
      CHECK(ch.action == "skipped");
      CHECK_FALSE(ch.reason.empty());
    }
  }
  CHECK(testing::slurp(first.series[0].images[0].source_path) == before);

  const auto out = dir / "out";
  write_body_part_tags(cohort.studies, results, false, out);
  CHECK(testing::slurp(first.series[0].images[0].source_path) == before);
  const auto rewritten = ingest_tree(out);
  REQUIRE(rewritten.studies.size() == 1);
  CHECK(rewritten.studies[0].body_part_examined == "CHEST");
  CHECK(rewritten.studies[0].image_count() == first.image_count());

  const auto in_place = write_body_part_tags(cohort.studies, results, false);
  CHECK(in_place.front().action == "written");
  const auto again = ingest_tree(dir / "in");
  CHECK(again.studies[0].body_part_examined == "CHEST");

  std::stringstream log;
  write_change_log(in_place, log);
  CHECK(log.str().find("written") != std::string::npos);
}
