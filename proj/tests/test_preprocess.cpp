#include "bodyreg/error.hpp"
#include "bodyreg/preprocess.hpp"

#include "support/test_support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace bodyreg;
using Catch::Matchers::WithinAbs;

namespace {

Matrix<std::int32_t> random_image(Rng& rng, std::size_t r, std::size_t c, int lo, int hi) {
  Matrix<std::int32_t> m(r, c);
  for (auto& v : m.values()) v = lo + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(hi - lo)));
  return m;
}

}  // namespace

TEST_CASE("clip_normalize matches the numpy reference") {
  const auto ref = testing::load_json(testing::data_dir() / "preprocess_expected.json");
  for (const auto& c : ref["normalize"]) {
    const std::size_t r = c["rows"], k = c["cols"];
    Matrix<std::int32_t> m(r, k, c["pixels"].get<std::vector<std::int32_t>>());
    const auto out = clip_normalize(m);
    const auto want = c["normalized"].get<std::vector<double>>();
    for (std::size_t i = 0; i < want.size(); ++i) CHECK_THAT(out.values()[i], WithinAbs(want[i], 1e-12));
  }
}

TEST_CASE("resize_pad matches the OpenCV bilinear reference") {
  const auto ref = testing::load_json(testing::data_dir() / "preprocess_expected.json");
  for (const auto& c : ref["resize"]) {
    const std::size_t r = c["rows"], k = c["cols"], target = c["target"];
    Matrix<double> m(r, k, c["values"].get<std::vector<double>>());
    const auto out = resize_pad(m, target);
    REQUIRE(out.rows() == target);
    REQUIRE(out.cols() == target);
    const auto want = c["resized"].get<std::vector<double>>();
    for (std::size_t i = 0; i < want.size(); ++i) CHECK_THAT(out.values()[i], WithinAbs(want[i], 1e-9));
  }
}

TEST_CASE("property: normalized values lie in [-2, 2] and ignore intensity affine maps") {
  Rng rng(99);
  for (int t = 0; t < 300; ++t) {
    const std::size_t r = 1 + rng.uniform_index(40), c = 1 + rng.uniform_index(40);
    const auto m = random_image(rng, r, c, -3000, 3000);
    const auto out = clip_normalize(m);
    for (double v : out.values()) REQUIRE((v >= -2.0 && v <= 2.0));
    const int a = 1 + static_cast<int>(rng.uniform_index(50));
    const int b = static_cast<int>(rng.uniform_index(20000)) - 10000;
    Matrix<std::int32_t> g = m;
    for (auto& v : g.values()) v = a * v + b;
    const auto out2 = clip_normalize(g);
    for (std::size_t i = 0; i < out.size(); ++i) REQUIRE(std::abs(out.values()[i] - out2.values()[i]) <= 1e-9);
  }
}

TEST_CASE("constant and empty images") {
  const auto z = clip_normalize(Matrix<std::int32_t>(7, 3, 1234));
  for (double v : z.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(clip_normalize(Matrix<std::int32_t>()), Error);
  CHECK_THROWS_AS(resize_pad(Matrix<double>()), Error);
}

TEST_CASE("letterbox geometry") {
  const auto out = resize_pad(Matrix<double>(100, 50, 1.0), 224);
  // 224 x 112 content centered horizontally.
  CHECK(out(0, 55) == 0.0);
  CHECK(out(0, 56) == 1.0);
  CHECK(out(223, 167) == 1.0);
  CHECK(out(223, 168) == 0.0);

  const auto full = preprocess_image(Matrix<std::int32_t>(30, 40, 5), "x");
  CHECK(full.values.rows() == kModelInputSize);
  CHECK(full.original_rows == 30);
  CHECK(full.source_sop_uid == "x");
}

TEST_CASE("three-channel replication") {
  Matrix<double> m(2, 2, std::vector<double>{1, 2, 3, 4});
  const auto t = to_three_channel(m);
  for (const auto& ch : t.channels) CHECK(ch == m);
}

TEST_CASE("affine warp identity and translation") {
  Matrix<double> m(10, 10);
  for (std::size_t i = 0; i < m.size(); ++i) m.values()[i] = static_cast<double>(i);
  CHECK(apply_affine(m, {}) == m);
  AffineParams p;
  p.translate_x = 0.1;  // one column right
  const auto shifted = apply_affine(m, p);
  for (std::size_t r = 0; r < 10; ++r) {
    CHECK(shifted(r, 0) == 0.0);
    for (std::size_t c = 1; c < 10; ++c) CHECK_THAT(shifted(r, c), WithinAbs(m(r, c - 1), 1e-9));
  }
}

TEST_CASE("augmentation ranges are enforced") {
  auto code = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode{};
  };
  AffineParams p;
  p.rotation = std::numbers::pi / 10.0 + 1e-6;
  CHECK(code([&] { validate(p); }) == ErrorCode::ParamsOutOfRange);
  p = {};
  p.scale_y = -0.21;
  CHECK(code([&] { validate(p); }) == ErrorCode::ParamsOutOfRange);
  AugmentBounds b;
  b.shear = 0.2;
  CHECK(code([&] { validate(b); }) == ErrorCode::ParamsOutOfRange);

  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto s = sample_augmentation(kMaxAugmentBounds, rng);
    REQUIRE_NOTHROW(validate(s));
  }
}
