#include "bodyreg/pixels.hpp"

#include "bodyreg/dicom.hpp"
#include "bodyreg/error.hpp"

#include <string>

namespace bodyreg {

namespace {

std::uint32_t le32(std::span<const std::uint8_t> b, std::size_t pos) {
  return static_cast<std::uint32_t>(b[pos]) | (static_cast<std::uint32_t>(b[pos + 1]) << 8) |
         (static_cast<std::uint32_t>(b[pos + 2]) << 16) | (static_cast<std::uint32_t>(b[pos + 3]) << 24);
}

std::size_t require_positive(const std::optional<int>& v, const char* name) {
  if (!v || *v <= 0) throw Error(ErrorCode::LengthMismatch, std::string("image lacks ") + name);
  return static_cast<std::size_t>(*v);
}

}  // namespace

std::vector<std::uint8_t> decode_packbits(std::span<const std::uint8_t> segment, std::size_t expected) {
  // A two-byte replicate run yields at most 128 bytes.
  if (expected > segment.size() / 2 * 128 + segment.size()) {
    throw Error(ErrorCode::LengthMismatch, "RLE segment of " + std::to_string(segment.size()) +
                                               " bytes cannot expand to " + std::to_string(expected));
  }
  std::vector<std::uint8_t> out;
  out.reserve(expected);
  std::size_t pos = 0;
  while (pos < segment.size() && out.size() < expected) {
    const auto header = static_cast<std::int8_t>(segment[pos++]);
    if (header >= 0) {
      const std::size_t count = static_cast<std::size_t>(header) + 1;
      if (segment.size() - pos < count) {
        throw Error(ErrorCode::LengthMismatch, "literal run past end of RLE segment");
      }
      out.insert(out.end(), segment.begin() + static_cast<std::ptrdiff_t>(pos),
                 segment.begin() + static_cast<std::ptrdiff_t>(pos + count));
      pos += count;
    } else if (header != -128) {
      if (pos >= segment.size()) throw Error(ErrorCode::LengthMismatch, "replicate run past end of RLE segment");
      const std::size_t count = static_cast<std::size_t>(1 - header);
      out.insert(out.end(), count, segment[pos++]);
    }
  }
  if (out.size() != expected) {
    throw Error(ErrorCode::LengthMismatch, "RLE segment decoded to " + std::to_string(out.size()) +
                                               " bytes, expected " + std::to_string(expected));
  }
  return out;
}

std::vector<std::uint8_t> decode_rle_frame(std::span<const std::uint8_t> frame, std::size_t rows,
                                           std::size_t cols, std::size_t bytes_per_sample,
                                           std::size_t samples_per_pixel) {
  if (frame.size() < 64) throw Error(ErrorCode::LengthMismatch, "RLE frame shorter than its header");
  const std::size_t segments = le32(frame, 0);
  const std::size_t wanted = bytes_per_sample * samples_per_pixel;
  if (segments != wanted || segments > 15) {
    throw Error(ErrorCode::LengthMismatch, "RLE header declares " + std::to_string(segments) +
                                               " segments, expected " + std::to_string(wanted));
  }
  const std::size_t pixels = rows * cols;
  std::vector<std::uint8_t> out(pixels * wanted);
  for (std::size_t seg = 0; seg < segments; ++seg) {
    const std::size_t begin = le32(frame, 4 + 4 * seg);
    const std::size_t end = seg + 1 < segments ? le32(frame, 4 + 4 * (seg + 1)) : frame.size();
    if (begin < 64 || begin > end || end > frame.size()) {
      throw Error(ErrorCode::LengthMismatch, "RLE segment offset out of range");
    }
    const auto plane = decode_packbits(frame.subspan(begin, end - begin), pixels);
    // Segments run most significant byte first within each sample.
    const std::size_t sample = seg / bytes_per_sample;
    const std::size_t byte = bytes_per_sample - 1 - seg % bytes_per_sample;
    for (std::size_t i = 0; i < pixels; ++i) {
      out[(i * samples_per_pixel + sample) * bytes_per_sample + byte] = plane[i];
    }
  }
  return out;
}

Matrix<std::int32_t> decode_pixels(const ImageRecord& image, std::span<const std::uint8_t> raw) {
  const std::string& ts = image.transfer_syntax_uid;
  const bool native = dicom::is_native_syntax(ts);
  if (!native && ts != dicom::kRleLossless) {
    throw Error(ErrorCode::UnsupportedCodec, "no pixel decoder for transfer syntax " + ts);
  }
  const std::size_t rows = require_positive(image.rows, "Rows");
  const std::size_t cols = require_positive(image.cols, "Columns");
  const std::size_t bits_allocated = require_positive(image.bits_allocated, "BitsAllocated");
  const std::size_t spp = image.samples_per_pixel ? require_positive(image.samples_per_pixel, "SamplesPerPixel") : 1;
  if (bits_allocated != 8 && bits_allocated != 16 && bits_allocated != 32) {
    throw Error(ErrorCode::UnsupportedCodec, "BitsAllocated " + std::to_string(bits_allocated));
  }
  const std::size_t bits_stored = image.bits_stored ? static_cast<std::size_t>(*image.bits_stored) : bits_allocated;
  if (bits_stored == 0 || bits_stored > bits_allocated) {
    throw Error(ErrorCode::LengthMismatch, "BitsStored exceeds BitsAllocated");
  }
  const std::size_t bps = bits_allocated / 8;
  const std::size_t expected = rows * cols * spp * bps;

  std::vector<std::uint8_t> decoded;
  std::span<const std::uint8_t> samples;
  if (native) {
    // Odd-length values carry one pad byte.
    if (raw.size() != expected && raw.size() != expected + 1) {
      throw Error(ErrorCode::LengthMismatch, "pixel data holds " + std::to_string(raw.size()) +
                                                 " bytes, expected " + std::to_string(expected));
    }
    samples = raw.first(expected);
  } else {
    decoded = decode_rle_frame(raw, rows, cols, bps, spp);
    samples = decoded;
  }

  const std::uint64_t mask = bits_stored >= 32 ? 0xFFFFFFFFull : ((1ull << bits_stored) - 1);
  const bool is_signed = image.pixel_representation.value_or(0) == 1;
  Matrix<std::int32_t> out(rows, cols);
  auto values = out.values();
  for (std::size_t i = 0; i < rows * cols; ++i) {
    const std::size_t at = i * spp * bps;
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < bps; ++b) v |= static_cast<std::uint64_t>(samples[at + b]) << (8 * b);
    v &= mask;
    std::int64_t signed_value = static_cast<std::int64_t>(v);
    if (is_signed && (v >> (bits_stored - 1)) & 1u) signed_value -= static_cast<std::int64_t>(1ull << bits_stored);
    values[i] = static_cast<std::int32_t>(signed_value);
  }
  return out;
}

}  // namespace bodyreg
