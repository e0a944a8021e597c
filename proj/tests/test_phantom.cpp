#include "bodyreg/error.hpp"
#include "bodyreg/ingest.hpp"
#include "bodyreg/phantom.hpp"

#include "support/test_support.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace bodyreg;

namespace {

ErrorCode spec_error(const std::string& json) {
  try {
    parse_phantom_spec(json);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode{};
}

}  // namespace

TEST_CASE("phantom spec parsing") {
  const auto s = parse_phantom_spec(R"({"regions":[{"region":"Abdomen","extent_mm":40},
      {"region":"Chest","extent_mm":30,"texture":{"fx":2,"fy":1,"phase":0.5,"amplitude":300}}],
      "spacing_mm":2.5,"modality":"MR","seed":7,"patient_sex":"F"})");
  REQUIRE(s.regions.size() == 2);
  CHECK(s.regions[1].texture->fx == 2);
  CHECK_FALSE(s.regions[0].texture);
  CHECK(s.spacing_mm == 2.5);
  CHECK(s.modality == Modality::MR);
  CHECK(s.seed == 7);
  CHECK(s.patient_sex == PatientSex::Female);

  CHECK(spec_error("[]") == ErrorCode::InvalidSpec);
  CHECK(spec_error(R"({"regions":[],"colour":1})") == ErrorCode::InvalidSpec);
  CHECK(spec_error(R"({"regions":[{"region":"Wing","extent_mm":40}]})") == ErrorCode::InvalidSpec);
  CHECK(spec_error(R"({"regions":[{"region":"Chest","extent_mm":"big"}]})") == ErrorCode::InvalidSpec);
  CHECK(spec_error("{not json") == ErrorCode::InvalidSpec);
}

TEST_CASE("generation rejects bad specs") {
  testing::TempDir dir;
  auto code = [&](PhantomSpec s) {
    try {
      generate_phantom(s, dir / "x");
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode{};
  };
  PhantomSpec s;
  CHECK(code(s) == ErrorCode::InvalidSpec);
  s.regions = {{BodyRegion::Chest, 40.0, {}}, {BodyRegion::Abdomen, 40.0, {}}};
  CHECK(code(s) == ErrorCode::InvalidSpec);  // not canonical order
  s.regions = {{BodyRegion::Abdomen, -1.0, {}}};
  CHECK(code(s) == ErrorCode::InvalidSpec);
  s.regions = {{BodyRegion::Abdomen, 40.0, {}}};
  s.spacing_mm = 0.0;
  CHECK(code(s) == ErrorCode::InvalidSpec);
  s.spacing_mm = 2.0;
  s.matrix = 4;
  CHECK(code(s) == ErrorCode::InvalidSpec);
}

TEST_CASE("phantom slices, labels and determinism") {
  testing::TempDir dir;
  PhantomSpec s;
  s.regions = {{BodyRegion::Abdomen, 40.0, {}}, {BodyRegion::Chest, 20.0, {}}};
  s.seed = 3;
  const auto a = generate_phantom(s, dir / "a");
  const auto b = generate_phantom(s, dir / "b");
  CHECK(a.files.size() == 30);
  CHECK(a.slice_labels.front() == BodyRegion::Abdomen);
  CHECK(a.slice_labels.back() == BodyRegion::Chest);
  CHECK(a.boxes.size() == 2);
  for (std::size_t i = 0; i < a.files.size(); ++i) CHECK(testing::slurp(a.files[i]) == testing::slurp(b.files[i]));
  const auto ta = default_texture(BodyRegion::Abdomen), tc = default_texture(BodyRegion::Chest);
  CHECK((ta.fx != tc.fx || ta.fy != tc.fy));
}

TEST_CASE("phantom cohort composition") {
  testing::TempDir dir;
  PhantomCohortSpec spec;
  spec.studies = 8;
  spec.mr_fraction = 0.25;
  spec.matrix = 32;
  const auto c = generate_phantom_cohort(spec, dir.path());
  REQUIRE(c.studies.size() == 8);
  CHECK(std::filesystem::exists(c.label_file));
  const auto cohort = ingest_tree(dir.path());
  std::size_t mr = 0;
  for (const auto& st : cohort.studies) mr += st.series.at(0).modality == Modality::MR;
  CHECK(mr == 2);
  CHECK(cohort.studies.size() == 8);
}
