#pragma once

#include "bodyreg/matrix.hpp"
#include "bodyreg/records.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace bodyreg {

// Decodes one PackBits segment (DICOM RLE). Output is exactly `expected` bytes;
// LengthMismatch if the segment runs short or overflows.
std::vector<std::uint8_t> decode_packbits(std::span<const std::uint8_t> segment, std::size_t expected);

// Decodes a DICOM RLE frame (64-byte segment header + segments) into
// little-endian interleaved sample bytes.
std::vector<std::uint8_t> decode_rle_frame(std::span<const std::uint8_t> frame, std::size_t rows,
                                           std::size_t cols, std::size_t bytes_per_sample,
                                           std::size_t samples_per_pixel);

// Decodes the first sample plane of `raw` into a rows x cols matrix, masked to
// bits_stored (sign-extended when pixel_representation is 1). `raw` is native
// pixel bytes or an RLE frame depending on the transfer syntax.
Matrix<std::int32_t> decode_pixels(const ImageRecord& image, std::span<const std::uint8_t> raw);

}  // namespace bodyreg
