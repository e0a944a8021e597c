#include "bodyreg/classify.hpp"
#include "bodyreg/error.hpp"

#include "support/test_support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

using namespace bodyreg;
using Catch::Matchers::WithinAbs;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode{};
}

NormalizedImage constant_image(const std::string& uid, double v, std::size_t n = 32) {
  NormalizedImage im;
  im.values = Matrix<double>(n, n, v);
  im.source_sop_uid = uid;
  return im;
}

// Returns whatever rows it was told to.
class ScriptedBackend final : public ClassifierBackend {
 public:
  ScriptedBackend(ClassSet c, std::vector<std::vector<double>> rows, bool fail = false)
      : classes_(std::move(c)), rows_(std::move(rows)), fail_(fail) {}
  const ClassSet& classes() const override { return classes_; }
  std::vector<std::vector<double>> score_batch(std::span<const NormalizedImage>) override {
    if (fail_) throw std::runtime_error("device lost");
    return rows_;
  }

 private:
  ClassSet classes_;
  std::vector<std::vector<double>> rows_;
  bool fail_;
};

const ClassSet kThree({BodyRegion::Abdomen, BodyRegion::Chest, BodyRegion::Head});

}  // namespace

TEST_CASE("prediction label, margin and entropy") {
  auto p = make_prediction("a", kThree, std::vector<double>{0.2, 0.5, 0.3});
  CHECK(p.label == BodyRegion::Chest);
  CHECK_THAT(p.margin, WithinAbs(0.2, 1e-15));
  const double h = -(0.2 * std::log(0.2) + 0.5 * std::log(0.5) + 0.3 * std::log(0.3)) / std::log(3.0);
  CHECK_THAT(p.entropy, WithinAbs(h, 1e-15));
  CHECK(p.probabilities[region_index(BodyRegion::Neck)] == 0.0);

  p = make_prediction("u", kThree, std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3});
  CHECK(p.margin == 0.0);
  CHECK_THAT(p.entropy, WithinAbs(1.0, 1e-12));
  CHECK(p.label == BodyRegion::Abdomen);  // tie -> canonical first

  p = make_prediction("o", kThree, std::vector<double>{0, 0, 1});
  CHECK(p.margin == 1.0);
  CHECK(p.entropy == 0.0);
}

TEST_CASE("normalization tolerance") {
  CHECK_NOTHROW(make_prediction("a", kThree, std::vector<double>{0.5, 0.5, 5e-7}));
  CHECK(code_of([] { make_prediction("a", kThree, std::vector<double>{0.5, 0.5, 0.01}); }) == ErrorCode::NotNormalized);
  CHECK(code_of([] { make_prediction("a", kThree, std::vector<double>{1.5, -0.5, 0}); }) == ErrorCode::NotNormalized);
  CHECK(code_of([] { make_prediction("a", kThree, std::vector<double>{NAN, 0.5, 0.5}); }) == ErrorCode::NotNormalized);
  CHECK(code_of([] { make_prediction("a", kThree, std::vector<double>{0.5, 0.5}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("backend output is validated at the interface") {
  std::vector<NormalizedImage> ims{constant_image("a", 0), constant_image("b", 0)};
  ScriptedBackend short_rows(kThree, {{1, 0, 0}});
  CHECK(code_of([&] { classify_batch(ims, short_rows); }) == ErrorCode::BackendFailure);
  ScriptedBackend bad_sum(kThree, {{1, 0, 0}, {0.3, 0.3, 0.3}});
  CHECK(code_of([&] { classify_batch(ims, bad_sum); }) == ErrorCode::BackendFailure);
  ScriptedBackend wrong_len(kThree, {{1, 0, 0}, {0.5, 0.5}});
  CHECK(code_of([&] { classify_batch(ims, wrong_len); }) == ErrorCode::BackendFailure);
  ScriptedBackend throws(kThree, {}, true);
  CHECK(code_of([&] { classify_batch(ims, throws); }) == ErrorCode::BackendFailure);
  ScriptedBackend ok(kThree, {{1, 0, 0}, {0, 0.25, 0.75}});
  const auto out = classify_batch(ims, ok);
  CHECK(out[1].label == BodyRegion::Head);
  CHECK(out[1].sop_uid == "b");
}

TEST_CASE("score CSV round trip and schema errors") {
  std::vector<Prediction> preds{make_prediction("1.2.3", kThree, std::vector<double>{0.125, 0.375, 0.5}),
                                make_prediction("1.2.4", kThree, std::vector<double>{1, 0, 0})};
  std::stringstream ss;
  write_scores(kThree, preds, ss);
  const auto table = parse_scores(ss);
  CHECK(table.classes.regions() == kThree.regions());
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows.at("1.2.3") == std::vector<double>{0.125, 0.375, 0.5});

  ScoreFileBackend backend(table);
  std::vector<NormalizedImage> ims{constant_image("1.2.4", 0)};
  CHECK(classify_batch(ims, backend)[0].label == BodyRegion::Abdomen);
  std::vector<NormalizedImage> missing{constant_image("9.9", 0)};
  CHECK(code_of([&] { classify_batch(missing, backend); }) == ErrorCode::BackendFailure);

  auto parse = [](const std::string& s) {
    std::stringstream in(s);
    return parse_scores(in);
  };
  CHECK(code_of([&] { parse("uid,Chest\n"); }) == ErrorCode::SchemaError);
  CHECK(code_of([&] { parse("sop_uid,Chest,Abdomen\n"); }) == ErrorCode::SchemaError);
  CHECK(code_of([&] { parse("sop_uid,Abdomen,Chest\nx,1\n"); }) == ErrorCode::SchemaError);
  CHECK(code_of([&] { parse("sop_uid,Abdomen,Chest\nx,1,0\nx,0,1\n"); }) == ErrorCode::SchemaError);
  CHECK(code_of([&] { parse("sop_uid,Abdomen,Chest\nx,0.5,0.6\n"); }) == ErrorCode::NotNormalized);
  CHECK(code_of([&] { parse("sop_uid,Abdomen,Wing\n"); }) == ErrorCode::SchemaError);
}

TEST_CASE("centroid features block-average to a 16 x 16 grid") {
  Matrix<double> m(32, 32);
  for (std::size_t r = 0; r < 32; ++r)
    for (std::size_t c = 0; c < 32; ++c) m(r, c) = static_cast<double>(r / 2 * 16 + c / 2);
  const auto f = centroid_features(m);
  REQUIRE(f.size() == 256);
  for (std::size_t i = 0; i < 256; ++i) CHECK(f[i] == static_cast<double>(i));
  CHECK(centroid_features(Matrix<double>(3, 5, 1.5)) == std::vector<double>(256, 1.5));
}

TEST_CASE("nearest centroid softmax") {
  std::vector<std::pair<NormalizedImage, BodyRegion>> train{
      {constant_image("a1", -1.0), BodyRegion::Head},
      {constant_image("a2", -0.5), BodyRegion::Head},
      {constant_image("b", 1.0), BodyRegion::Chest},
  };
  const auto model = train_centroid_baseline(train);
  CHECK(model.classes().regions() == std::vector<BodyRegion>{BodyRegion::Chest, BodyRegion::Head});
  CHECK(model.centroids()[1][0] == -0.75);

  auto backend = model;
  std::vector<NormalizedImage> q{constant_image("q", 0.5)};
  const auto rows = backend.score_batch(q);
  // Distances over 256 features: |0.5 - 1| * 16 = 8 and |0.5 + 0.75| * 16 = 20.
  const double pc = 1.0 / (1.0 + std::exp(-12.0));
  CHECK_THAT(rows[0][0], WithinAbs(pc, 1e-15));
  CHECK_THAT(rows[0][1], WithinAbs(1.0 - pc, 1e-15));

  testing::TempDir dir;
  model.save(dir / "m.json");
  const auto loaded = CentroidBackend::load(dir / "m.json");
  CHECK(loaded.centroids() == model.centroids());
  CHECK(loaded.classes().regions() == model.classes().regions());

  const ClassSet wants({BodyRegion::Chest, BodyRegion::Head, BodyRegion::Neck});
  CHECK(code_of([&] { train_centroid_baseline(train, &wants); }) == ErrorCode::EmptyClass);
  CHECK(code_of([&] { train_centroid_baseline({}); }) == ErrorCode::EmptyClass);
}

TEST_CASE("class sets per modality") {
  const auto ct = ClassSet::for_modality(Modality::CT);
  const auto mr = ClassSet::for_modality(Modality::MR);
  CHECK_FALSE(ct.contains(BodyRegion::Breast));
  CHECK(mr.contains(BodyRegion::Breast));
  CHECK(ct.contains(BodyRegion::AbdomenChest));
  CHECK_FALSE(ClassSet::reporting(Modality::MR).contains(BodyRegion::AbdomenChest));
  CHECK(ClassSet::reporting(Modality::MR).size() + 1 == mr.size());
}
