#include "bodyreg/preprocess.hpp"

#include "bodyreg/error.hpp"

#include <algorithm>
#include <cmath>

namespace bodyreg {

Matrix<double> clip_normalize(const Matrix<std::int32_t>& pixels) {
  if (pixels.empty()) throw Error(ErrorCode::EmptyImage, "cannot normalize an empty image");
  const auto v = pixels.values();
  const double n = static_cast<double>(v.size());
  double sum = 0.0;
  for (auto x : v) sum += x;
  const double mean = sum / n;
  double ss = 0.0;
  for (auto x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / n);

  Matrix<double> out(pixels.rows(), pixels.cols(), 0.0);
  if (sd == 0.0) return out;
  auto o = out.values();
  // Clipping to mean +/- 4 sd before dividing by 2 sd is the same as clamping
  // the standardized value to [-2, 2].
  for (std::size_t i = 0; i < v.size(); ++i) o[i] = std::clamp((v[i] - mean) / (2.0 * sd), -2.0, 2.0);
  return out;
}

namespace {

double sample_clamped(const Matrix<double>& m, double y, double x) {
  const double maxy = static_cast<double>(m.rows() - 1);
  const double maxx = static_cast<double>(m.cols() - 1);
  y = std::clamp(y, 0.0, maxy);
  x = std::clamp(x, 0.0, maxx);
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, m.rows() - 1);
  const std::size_t x1 = std::min(x0 + 1, m.cols() - 1);
  const double fy = y - static_cast<double>(y0);
  const double fx = x - static_cast<double>(x0);
  return (1 - fy) * ((1 - fx) * m(y0, x0) + fx * m(y0, x1)) + fy * ((1 - fx) * m(y1, x0) + fx * m(y1, x1));
}

// Pixels outside the source contribute zero.
double sample_zero(const Matrix<double>& m, double y, double x) {
  const double fy0 = std::floor(y);
  const double fx0 = std::floor(x);
  const double fy = y - fy0;
  const double fx = x - fx0;
  auto at = [&](double r, double c) -> double {
    if (r < 0 || c < 0 || r >= static_cast<double>(m.rows()) || c >= static_cast<double>(m.cols())) return 0.0;
    return m(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  };
  return (1 - fy) * ((1 - fx) * at(fy0, fx0) + fx * at(fy0, fx0 + 1)) +
         fy * ((1 - fx) * at(fy0 + 1, fx0) + fx * at(fy0 + 1, fx0 + 1));
}

}  // namespace

Matrix<double> resize_pad(const Matrix<double>& values, std::size_t target) {
  if (values.empty()) throw Error(ErrorCode::EmptyImage, "cannot resize an empty image");
  if (target == 0) throw Error(ErrorCode::InvalidArgument, "target size must be positive");
  const std::size_t longer = std::max(values.rows(), values.cols());
  const double scale = static_cast<double>(target) / static_cast<double>(longer);
  const auto scaled = [&](std::size_t n) {
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(static_cast<double>(n) * scale)), 1, target);
  };
  const std::size_t rows = values.rows() == longer ? target : scaled(values.rows());
  const std::size_t cols = values.cols() == longer ? target : scaled(values.cols());
  const std::size_t top = (target - rows) / 2;
  const std::size_t left = (target - cols) / 2;
  const double sy = static_cast<double>(values.rows()) / static_cast<double>(rows);
  const double sx = static_cast<double>(values.cols()) / static_cast<double>(cols);

  Matrix<double> out(target, target, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double y = (static_cast<double>(r) + 0.5) * sy - 0.5;
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = (static_cast<double>(c) + 0.5) * sx - 0.5;
      out(top + r, left + c) = sample_clamped(values, y, x);
    }
  }
  return out;
}

ThreeChannelImage to_three_channel(const Matrix<double>& values) { return {{values, values, values}}; }

NormalizedImage preprocess_image(const Matrix<std::int32_t>& pixels, std::string sop_uid, std::size_t target) {
  NormalizedImage out;
  out.values = resize_pad(clip_normalize(pixels), target);
  out.source_sop_uid = std::move(sop_uid);
  out.original_rows = pixels.rows();
  out.original_cols = pixels.cols();
  return out;
}

void validate(const AffineParams& p) {
  const auto& b = kMaxAugmentBounds;
  const double eps = 1e-12;
  if (std::abs(p.rotation) > b.rotation + eps || std::abs(p.translate_x) > b.translate + eps ||
      std::abs(p.translate_y) > b.translate + eps || std::abs(p.shear) > b.shear + eps ||
      std::abs(p.scale_x) > b.scale + eps || std::abs(p.scale_y) > b.scale + eps) {
    throw Error(ErrorCode::ParamsOutOfRange,
                "augmentation limited to rotation pi/10, translation and shear 10%, scaling 20%");
  }
}

void validate(const AugmentBounds& bounds) {
  validate(AffineParams{bounds.rotation, bounds.translate, bounds.translate, bounds.shear, bounds.scale, bounds.scale});
  if (bounds.rotation < 0 || bounds.translate < 0 || bounds.shear < 0 || bounds.scale < 0) {
    throw Error(ErrorCode::ParamsOutOfRange, "augmentation bounds must be non-negative");
  }
}

AffineParams sample_augmentation(const AugmentBounds& bounds, Rng& rng) {
  validate(bounds);
  AffineParams p;
  p.rotation = rng.uniform(-bounds.rotation, bounds.rotation);
  p.translate_x = rng.uniform(-bounds.translate, bounds.translate);
  p.translate_y = rng.uniform(-bounds.translate, bounds.translate);
  p.shear = rng.uniform(-bounds.shear, bounds.shear);
  p.scale_x = rng.uniform(-bounds.scale, bounds.scale);
  p.scale_y = rng.uniform(-bounds.scale, bounds.scale);
  return p;
}

Matrix<double> apply_affine(const Matrix<double>& values, const AffineParams& p) {
  validate(p);
  if (values.empty()) throw Error(ErrorCode::EmptyImage, "cannot warp an empty image");
  const double cy = (static_cast<double>(values.rows()) - 1.0) / 2.0;
  const double cx = (static_cast<double>(values.cols()) - 1.0) / 2.0;
  const double c = std::cos(p.rotation);
  const double s = std::sin(p.rotation);
  const double kx = 1.0 + p.scale_x;
  const double ky = 1.0 + p.scale_y;
  // Forward A = R * [[1, shear], [0, 1]] * diag(kx, ky) acting on (x, y).
  const double a00 = c * kx;
  const double a01 = (c * p.shear - s) * ky;
  const double a10 = s * kx;
  const double a11 = (s * p.shear + c) * ky;
  const double det = a00 * a11 - a01 * a10;
  const double i00 = a11 / det, i01 = -a01 / det, i10 = -a10 / det, i11 = a00 / det;
  const double tx = p.translate_x * static_cast<double>(values.cols());
  const double ty = p.translate_y * static_cast<double>(values.rows());

  Matrix<double> out(values.rows(), values.cols(), 0.0);
  for (std::size_t r = 0; r < values.rows(); ++r) {
    for (std::size_t col = 0; col < values.cols(); ++col) {
      const double dx = static_cast<double>(col) - cx - tx;
      const double dy = static_cast<double>(r) - cy - ty;
      const double sx = cx + i00 * dx + i01 * dy;
      const double sy = cy + i10 * dx + i11 * dy;
      out(r, col) = sample_zero(values, sy, sx);
    }
  }
  return out;
}

Matrix<double> augment(const Matrix<double>& values, const AugmentBounds& bounds, Rng& rng) {
  return apply_affine(values, sample_augmentation(bounds, rng));
}

}  // namespace bodyreg
