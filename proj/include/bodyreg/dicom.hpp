#pragma once

#include "bodyreg/records.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace bodyreg::dicom {

inline constexpr std::string_view kImplicitVRLittleEndian = "1.2.840.10008.1.2";
inline constexpr std::string_view kExplicitVRLittleEndian = "1.2.840.10008.1.2.1";
inline constexpr std::string_view kDeflatedExplicitVRLittleEndian = "1.2.840.10008.1.2.1.99";
inline constexpr std::string_view kExplicitVRBigEndian = "1.2.840.10008.1.2.2";
inline constexpr std::string_view kRleLossless = "1.2.840.10008.1.2.5";
inline constexpr std::string_view kJpegLossless = "1.2.840.10008.1.2.4.57";
inline constexpr std::string_view kJpegLosslessSV1 = "1.2.840.10008.1.2.4.70";

inline constexpr std::string_view kCTImageStorage = "1.2.840.10008.5.1.4.1.1.2";
inline constexpr std::string_view kMRImageStorage = "1.2.840.10008.5.1.4.1.1.4";

struct Tag {
  std::uint16_t group = 0;
  std::uint16_t element = 0;

  constexpr std::uint32_t key() const noexcept {
    return (static_cast<std::uint32_t>(group) << 16) | element;
  }
  friend constexpr bool operator==(Tag a, Tag b) noexcept { return a.key() == b.key(); }
  friend constexpr auto operator<=>(Tag a, Tag b) noexcept { return a.key() <=> b.key(); }
};

namespace tags {
inline constexpr Tag TransferSyntaxUID{0x0002, 0x0010};
inline constexpr Tag SOPClassUID{0x0008, 0x0016};
inline constexpr Tag SOPInstanceUID{0x0008, 0x0018};
inline constexpr Tag Modality{0x0008, 0x0060};
inline constexpr Tag Manufacturer{0x0008, 0x0070};
inline constexpr Tag InstitutionName{0x0008, 0x0080};
inline constexpr Tag StudyDescription{0x0008, 0x1030};
inline constexpr Tag SeriesDescription{0x0008, 0x103E};
inline constexpr Tag PatientID{0x0010, 0x0020};
inline constexpr Tag PatientSex{0x0010, 0x0040};
inline constexpr Tag PatientAge{0x0010, 0x1010};
inline constexpr Tag ContrastBolusAgent{0x0018, 0x0010};
inline constexpr Tag BodyPartExamined{0x0018, 0x0015};
inline constexpr Tag SliceThickness{0x0018, 0x0050};
inline constexpr Tag ConvolutionKernel{0x0018, 0x1210};
inline constexpr Tag StudyInstanceUID{0x0020, 0x000D};
inline constexpr Tag SeriesInstanceUID{0x0020, 0x000E};
inline constexpr Tag InstanceNumber{0x0020, 0x0013};
inline constexpr Tag ImagePositionPatient{0x0020, 0x0032};
inline constexpr Tag ImageOrientationPatient{0x0020, 0x0037};
inline constexpr Tag FrameOfReferenceUID{0x0020, 0x0052};
inline constexpr Tag SamplesPerPixel{0x0028, 0x0002};
inline constexpr Tag Rows{0x0028, 0x0010};
inline constexpr Tag Columns{0x0028, 0x0011};
inline constexpr Tag BitsAllocated{0x0028, 0x0100};
inline constexpr Tag BitsStored{0x0028, 0x0101};
inline constexpr Tag PixelRepresentation{0x0028, 0x0103};
inline constexpr Tag PixelData{0x7FE0, 0x0010};
}  // namespace tags

// Byte range of one top-level dataset element, header included.
struct ElementSpan {
  Tag tag;
  std::size_t offset = 0;
  std::size_t end = 0;
};

struct PixelDataRef {
  std::size_t value_offset = 0;
  std::size_t value_length = 0;
  bool encapsulated = false;
  // (offset, length) of each encapsulated item, basic offset table first.
  std::vector<std::pair<std::size_t, std::size_t>> fragments;
};

struct ParsedDicom {
  StudyRecord study;    // series list left empty
  SeriesRecord series;  // image list left empty
  ImageRecord image;
  bool part10 = false;
  bool explicit_vr = true;
  std::size_t dataset_offset = 0;
  std::vector<ElementSpan> elements;
  std::optional<PixelDataRef> pixel_data;
};

// Parses a Part-10 file or a raw little-endian dataset. Pixel data is located,
// not decoded. Throws MalformedError naming the failing byte offset.
ParsedDicom parse_dicom(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
ParsedDicom read_dicom_file(const std::filesystem::path& path);

// Native pixel value bytes, or the concatenated fragments of the single frame
// for encapsulated syntaxes.
std::vector<std::uint8_t> pixel_payload(std::span<const std::uint8_t> bytes, const PixelDataRef& ref);

bool is_native_syntax(std::string_view transfer_syntax) noexcept;
bool is_jpeg_lossless(std::string_view transfer_syntax) noexcept;

// Minimal Part-10 writer producing explicit VR little endian files.
class Writer {
 public:
  Writer& add_string(Tag tag, std::string_view vr, std::string_view value);
  Writer& add_us(Tag tag, std::uint16_t value);
  Writer& add_decimals(Tag tag, std::span<const double> values);
  Writer& add_native_pixels(std::span<const std::uint16_t> samples);
  Writer& add_encapsulated_pixels(std::span<const std::vector<std::uint8_t>> fragments);

  // Serializes with the given transfer syntax in the file meta group. Only the
  // explicit/implicit little endian dataset encodings are produced; the
  // dataset is encoded implicitly iff `transfer_syntax` is implicit VR LE.
  std::vector<std::uint8_t> serialize(std::string_view transfer_syntax,
                                      std::string_view sop_class_uid,
                                      std::string_view sop_instance_uid) const;

 private:
  struct Element {
    Tag tag;
    std::string vr;
    std::vector<std::uint8_t> value;
    bool undefined_length = false;
  };
  std::vector<Element> elements_;
};

// Returns a copy of `bytes` with BodyPartExamined set to `value`. Every byte
// outside the re-encoded (or inserted) element is preserved.
std::vector<std::uint8_t> replace_body_part(std::span<const std::uint8_t> bytes,
                                            const ParsedDicom& parsed, std::string_view value);

}  // namespace bodyreg::dicom
