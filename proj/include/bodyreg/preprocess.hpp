#pragma once

#include "bodyreg/matrix.hpp"
#include "bodyreg/rng.hpp"

#include <array>
#include <cstdint>
#include <numbers>
#include <string>

namespace bodyreg {

inline constexpr std::size_t kModelInputSize = 224;

struct NormalizedImage {
  Matrix<double> values;  // within [-2, 2]
  std::string source_sop_uid;
  std::size_t original_rows = 0;
  std::size_t original_cols = 0;
};

// Clips to mean +/- 4 std, then maps (v - mean) / (2 std). Mean and population
// std come from the raw matrix. A constant image maps to zeros.
Matrix<double> clip_normalize(const Matrix<std::int32_t>& pixels);

// Aspect-preserving bilinear resize so the longer side equals `target`, then
// centered zero padding of the shorter side.
Matrix<double> resize_pad(const Matrix<double>& values, std::size_t target = kModelInputSize);

struct ThreeChannelImage {
  std::array<Matrix<double>, 3> channels;
};

ThreeChannelImage to_three_channel(const Matrix<double>& values);

// Full chain: clip_normalize then resize_pad.
NormalizedImage preprocess_image(const Matrix<std::int32_t>& pixels, std::string sop_uid,
                                 std::size_t target = kModelInputSize);

// Concrete affine augmentation. Fractions are relative to image size; scale is
// the relative change (0.1 = 10% larger).
struct AffineParams {
  double rotation = 0.0;  // radians
  double translate_x = 0.0;
  double translate_y = 0.0;
  double shear = 0.0;
  double scale_x = 0.0;
  double scale_y = 0.0;
};

// Sampling bounds, each a maximum magnitude.
struct AugmentBounds {
  double rotation = std::numbers::pi / 10.0;
  double translate = 0.10;
  double shear = 0.10;
  double scale = 0.20;
};

inline constexpr AugmentBounds kMaxAugmentBounds{};

// Throws ParamsOutOfRange when any magnitude exceeds kMaxAugmentBounds.
void validate(const AffineParams& params);
void validate(const AugmentBounds& bounds);

AffineParams sample_augmentation(const AugmentBounds& bounds, Rng& rng);

// Single affine warp about the image center: x' = c + R * Shear * Scale * (x - c) + t.
// Bilinear sampling; samples outside the source read as zero.
Matrix<double> apply_affine(const Matrix<double>& values, const AffineParams& params);

Matrix<double> augment(const Matrix<double>& values, const AugmentBounds& bounds, Rng& rng);

}  // namespace bodyreg
