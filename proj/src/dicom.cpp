#include "bodyreg/dicom.hpp"

#include "bodyreg/error.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace bodyreg::dicom {

namespace {

constexpr std::uint32_t kUndefinedLength = 0xFFFFFFFFu;
constexpr Tag kItem{0xFFFE, 0xE000};
constexpr Tag kItemDelimitation{0xFFFE, 0xE00D};
constexpr Tag kSequenceDelimitation{0xFFFE, 0xE0DD};
constexpr int kMaxNesting = 16;

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t pos) {
  return static_cast<std::uint16_t>(b[pos] | (b[pos + 1] << 8));
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t pos) {
  return static_cast<std::uint32_t>(b[pos]) | (static_cast<std::uint32_t>(b[pos + 1]) << 8) |
         (static_cast<std::uint32_t>(b[pos + 2]) << 16) |
         (static_cast<std::uint32_t>(b[pos + 3]) << 24);
}

bool has_long_length(std::string_view vr) {
  static constexpr std::array<std::string_view, 13> kLong{
      "OB", "OD", "OF", "OL", "OV", "OW", "SQ", "SV", "UC", "UN", "UR", "UT", "UV"};
  return std::find(kLong.begin(), kLong.end(), vr) != kLong.end();
}

bool is_known_vr(std::string_view vr) {
  static constexpr std::array<std::string_view, 34> kVRs{
      "AE", "AS", "AT", "CS", "DA", "DS", "DT", "FD", "FL", "IS", "LO", "LT",
      "OB", "OD", "OF", "OL", "OV", "OW", "PN", "SH", "SL", "SQ", "SS", "ST",
      "SV", "TM", "UC", "UI", "UL", "UN", "UR", "US", "UT", "UV"};
  return std::find(kVRs.begin(), kVRs.end(), vr) != kVRs.end();
}

struct RawElement {
  Tag tag;
  std::string_view vr;  // empty for implicit VR
  std::size_t offset = 0;
  std::size_t value_offset = 0;
  std::uint32_t length = 0;
  std::size_t end = 0;
  bool undefined_length() const { return length == kUndefinedLength; }
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void require(std::size_t pos, std::size_t n, const char* what) const {
    if (pos > bytes_.size() || bytes_.size() - pos < n) {
      throw MalformedError(pos, std::string("truncated ") + what);
    }
  }

  Tag read_tag(std::size_t pos) const {
    require(pos, 4, "element tag");
    return Tag{read_u16(bytes_, pos), read_u16(bytes_, pos + 2)};
  }

  RawElement read_element(std::size_t pos, bool explicit_vr, int depth,
                          PixelDataRef* pixel_ref) const {
    RawElement el;
    el.offset = pos;
    el.tag = read_tag(pos);
    if (el.tag.group == 0xFFFE) {
      throw MalformedError(pos, "unexpected item tag in dataset");
    }
    if (explicit_vr) {
      require(pos, 8, "element header");
      el.vr = std::string_view(reinterpret_cast<const char*>(bytes_.data() + pos + 4), 2);
      if (!is_known_vr(el.vr)) throw MalformedError(pos + 4, "invalid VR");
      if (has_long_length(el.vr)) {
        require(pos, 12, "element header");
        el.length = read_u32(bytes_, pos + 8);
        el.value_offset = pos + 12;
      } else {
        el.length = read_u16(bytes_, pos + 6);
        el.value_offset = pos + 8;
      }
    } else {
      require(pos, 8, "element header");
      el.length = read_u32(bytes_, pos + 4);
      el.value_offset = pos + 8;
    }

    if (!el.undefined_length()) {
      if (el.value_offset > bytes_.size() || bytes_.size() - el.value_offset < el.length) {
        throw MalformedError(el.offset, "element length past end of file");
      }
      el.end = el.value_offset + el.length;
      return el;
    }

    if (el.tag == tags::PixelData) {
      el.end = skip_encapsulated(el.value_offset, pixel_ref);
    } else if (el.vr.empty() || el.vr == "SQ") {
      el.end = skip_sequence(el.value_offset, explicit_vr, depth + 1);
    } else if (el.vr == "UN") {
      // Undefined-length UN holds an implicit VR encoded sequence.
      el.end = skip_sequence(el.value_offset, false, depth + 1);
    } else {
      throw MalformedError(el.offset, "undefined length on non-sequence element");
    }
    return el;
  }

  // Walks sequence items up to and including the sequence delimiter.
  std::size_t skip_sequence(std::size_t pos, bool explicit_vr, int depth) const {
    if (depth > kMaxNesting) throw MalformedError(pos, "sequence nesting too deep");
    while (true) {
      const Tag tag = read_tag(pos);
      require(pos, 8, "item header");
      const std::uint32_t length = read_u32(bytes_, pos + 4);
      if (tag == kSequenceDelimitation) return pos + 8;
      if (tag != kItem) throw MalformedError(pos, "expected sequence item");
      pos += 8;
      if (length != kUndefinedLength) {
        require(pos, length, "sequence item");
        pos += length;
        continue;
      }
      while (true) {
        const Tag inner = read_tag(pos);
        if (inner == kItemDelimitation) {
          require(pos, 8, "item delimiter");
          pos += 8;
          break;
        }
        pos = read_element(pos, explicit_vr, depth, nullptr).end;
      }
    }
  }

  std::size_t skip_encapsulated(std::size_t pos, PixelDataRef* ref) const {
    while (true) {
      const Tag tag = read_tag(pos);
      require(pos, 8, "fragment header");
      const std::uint32_t length = read_u32(bytes_, pos + 4);
      if (tag == kSequenceDelimitation) return pos + 8;
      if (tag != kItem || length == kUndefinedLength) {
        throw MalformedError(pos, "invalid encapsulated pixel data item");
      }
      require(pos + 8, length, "pixel data fragment");
      if (ref != nullptr) ref->fragments.emplace_back(pos + 8, length);
      pos += 8 + length;
    }
  }

  std::string_view text(const RawElement& el) const {
    auto s = std::string_view(reinterpret_cast<const char*>(bytes_.data() + el.value_offset), el.length);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.remove_suffix(1);
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    return s;
  }

  std::span<const std::uint8_t> bytes() const { return bytes_; }

 private:
  std::span<const std::uint8_t> bytes_;
};

std::vector<double> parse_decimals(std::string_view s, const RawElement& el) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t stop = s.find('\\', start);
    if (stop == std::string_view::npos) stop = s.size();
    std::string_view item = s.substr(start, stop - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty() && item.front() == '+') item.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size() || !std::isfinite(v)) {
      throw MalformedError(el.value_offset, "invalid decimal string");
    }
    out.push_back(v);
    start = stop + 1;
  }
  return out;
}

int parse_us(const Reader& r, const RawElement& el) {
  if (el.length < 2) throw MalformedError(el.offset, "short US value");
  return read_u16(r.bytes(), el.value_offset);
}

std::optional<double> parse_age(std::string_view s) {
  if (s.size() != 4) return std::nullopt;
  int n = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + 3, n);
  if (ec != std::errc() || ptr != s.data() + 3) return std::nullopt;
  switch (s[3]) {
    case 'Y': return static_cast<double>(n);
    case 'M': return n / 12.0;
    case 'W': return n * 7.0 / 365.25;
    case 'D': return n / 365.25;
    default: return std::nullopt;
  }
}

void apply_element(const Reader& r, const RawElement& el, ParsedDicom& out) {
  if (el.undefined_length() || el.vr == "SQ") return;
  const Tag t = el.tag;
  // Zero-length or blank text values are absent attributes.
  if (t.group != 0x0028 && r.text(el).empty()) return;
  auto str = [&] { return std::string(r.text(el)); };

  if (t == tags::TransferSyntaxUID) out.image.transfer_syntax_uid = str();
  else if (t == tags::SOPClassUID) out.image.sop_class_uid = str();
  else if (t == tags::SOPInstanceUID) out.image.sop_uid = str();
  else if (t == tags::Modality) out.series.modality = parse_modality(r.text(el));
  else if (t == tags::Manufacturer) out.study.manufacturer = str();
  else if (t == tags::InstitutionName) out.study.institution = str();
  else if (t == tags::StudyDescription) out.study.procedure_description = str();
  else if (t == tags::SeriesDescription) out.series.series_description = str();
  else if (t == tags::PatientID) out.study.patient_id = str();
  else if (t == tags::PatientSex) out.study.patient_sex = parse_sex(r.text(el));
  else if (t == tags::PatientAge) out.study.patient_age = parse_age(r.text(el));
  else if (t == tags::ContrastBolusAgent) out.series.contrast_agent = str();
  else if (t == tags::BodyPartExamined) out.study.body_part_examined = str();
  else if (t == tags::SliceThickness) {
    auto v = parse_decimals(r.text(el), el);
    out.series.slice_thickness = v.front();
  } else if (t == tags::ConvolutionKernel) out.series.convolution_kernel = str();
  else if (t == tags::StudyInstanceUID) out.study.study_uid = str();
  else if (t == tags::SeriesInstanceUID) out.series.series_uid = str();
  else if (t == tags::InstanceNumber) {
    auto v = parse_decimals(r.text(el), el);
    if (v.front() != std::floor(v.front()) || std::abs(v.front()) > 2147483647.0) {
      throw MalformedError(el.value_offset, "invalid integer string");
    }
    out.image.instance_number = static_cast<int>(v.front());
  } else if (t == tags::ImagePositionPatient) {
    auto v = parse_decimals(r.text(el), el);
    if (v.size() != 3) throw MalformedError(el.value_offset, "ImagePositionPatient needs 3 values");
    out.image.image_position_patient = Vec3{v[0], v[1], v[2]};
  } else if (t == tags::ImageOrientationPatient) {
    auto v = parse_decimals(r.text(el), el);
    if (v.size() != 6) throw MalformedError(el.value_offset, "ImageOrientationPatient needs 6 values");
    Orientation o{};
    std::copy(v.begin(), v.end(), o.begin());
    out.image.image_orientation_patient = o;
  } else if (t == tags::FrameOfReferenceUID) out.series.frame_of_reference_uid = str();
  else if (t == tags::SamplesPerPixel) out.image.samples_per_pixel = parse_us(r, el);
  else if (t == tags::Rows) out.image.rows = parse_us(r, el);
  else if (t == tags::Columns) out.image.cols = parse_us(r, el);
  else if (t == tags::BitsAllocated) out.image.bits_allocated = parse_us(r, el);
  else if (t == tags::BitsStored) out.image.bits_stored = parse_us(r, el);
  else if (t == tags::PixelRepresentation) out.image.pixel_representation = parse_us(r, el);
}

// Parses dataset elements from `pos` to the end of the buffer.
void parse_dataset(const Reader& r, std::size_t pos, bool explicit_vr, bool require_ascending,
                   ParsedDicom& out) {
  const std::size_t size = r.bytes().size();
  std::optional<Tag> previous;
  while (pos < size) {
    PixelDataRef pixel_ref;
    RawElement el = r.read_element(pos, explicit_vr, 0, &pixel_ref);
    if (require_ascending && previous && !(*previous < el.tag)) {
      throw MalformedError(pos, "dataset tags not in ascending order");
    }
    previous = el.tag;
    if (el.tag == tags::PixelData) {
      pixel_ref.value_offset = el.value_offset;
      pixel_ref.value_length = el.undefined_length() ? 0 : el.length;
      pixel_ref.encapsulated = el.undefined_length();
      out.pixel_data = std::move(pixel_ref);
      out.image.has_pixel_data = true;
    } else {
      apply_element(r, el, out);
    }
    out.elements.push_back(ElementSpan{el.tag, el.offset, el.end});
    pos = el.end;
  }
}

bool looks_explicit(std::span<const std::uint8_t> bytes, std::size_t pos) {
  if (bytes.size() < pos + 8) return false;
  std::string_view vr(reinterpret_cast<const char*>(bytes.data() + pos + 4), 2);
  return is_known_vr(vr);
}

}  // namespace

ParsedDicom parse_dicom(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  ParsedDicom out;

  const bool part10 = bytes.size() >= 132 && std::memcmp(bytes.data() + 128, "DICM", 4) == 0;
  if (part10) {
    out.part10 = true;
    std::size_t pos = 132;
    while (pos < bytes.size()) {
      const Tag tag = r.read_tag(pos);
      if (tag.group != 0x0002) break;
      RawElement el = r.read_element(pos, true, 0, nullptr);
      apply_element(r, el, out);
      pos = el.end;
    }
    const std::string& ts = out.image.transfer_syntax_uid;
    if (ts.empty()) throw MalformedError(pos, "file meta lacks TransferSyntaxUID");
    if (ts == kExplicitVRBigEndian) throw MalformedError(pos, "big endian datasets are not supported");
    if (ts == kDeflatedExplicitVRLittleEndian) throw MalformedError(pos, "deflated datasets are not supported");
    out.explicit_vr = ts != kImplicitVRLittleEndian;
    out.dataset_offset = pos;
    parse_dataset(r, pos, out.explicit_vr, false, out);
  } else {
    // Raw dataset: tags must be ascending and start no later than group 0008.
    if (bytes.size() < 8) throw MalformedError(0, "missing DICM magic and too short for a dataset");
    const Tag first = r.read_tag(0);
    if (first.group == 0x0002 || first.group > 0x0008) {
      throw MalformedError(0, "missing DICM magic and not a raw dataset");
    }
    out.explicit_vr = looks_explicit(bytes, 0);
    out.image.transfer_syntax_uid =
        std::string(out.explicit_vr ? kExplicitVRLittleEndian : kImplicitVRLittleEndian);
    parse_dataset(r, 0, out.explicit_vr, true, out);
  }

  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::IoError, "read failed for " + path.string());
  return bytes;
}

ParsedDicom read_dicom_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ParsedDicom parsed = parse_dicom(bytes);
  parsed.image.source_path = path.string();
  return parsed;
}

std::vector<std::uint8_t> pixel_payload(std::span<const std::uint8_t> bytes, const PixelDataRef& ref) {
  if (!ref.encapsulated) {
    auto value = bytes.subspan(ref.value_offset, ref.value_length);
    return {value.begin(), value.end()};
  }
  // Single-frame objects: every fragment after the basic offset table.
  std::vector<std::uint8_t> out;
  for (std::size_t i = 1; i < ref.fragments.size(); ++i) {
    auto frag = bytes.subspan(ref.fragments[i].first, ref.fragments[i].second);
    out.insert(out.end(), frag.begin(), frag.end());
  }
  return out;
}

bool is_native_syntax(std::string_view ts) noexcept {
  return ts == kImplicitVRLittleEndian || ts == kExplicitVRLittleEndian;
}

bool is_jpeg_lossless(std::string_view ts) noexcept {
  return ts == kJpegLossless || ts == kJpegLosslessSV1;
}

// ---------------------------------------------------------------------------
// Writer

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::vector<std::uint8_t> padded_text(std::string_view vr, std::string_view value) {
  std::vector<std::uint8_t> bytes(value.begin(), value.end());
  if (bytes.size() % 2 != 0) bytes.push_back(vr == "UI" ? '\0' : ' ');
  return bytes;
}

void encode_element(std::vector<std::uint8_t>& out, Tag tag, std::string_view vr,
                    std::span<const std::uint8_t> value, bool explicit_vr, bool undefined_length) {
  put_u16(out, tag.group);
  put_u16(out, tag.element);
  const std::uint32_t length =
      undefined_length ? kUndefinedLength : static_cast<std::uint32_t>(value.size());
  if (explicit_vr) {
    out.push_back(static_cast<std::uint8_t>(vr[0]));
    out.push_back(static_cast<std::uint8_t>(vr[1]));
    if (has_long_length(vr)) {
      put_u16(out, 0);
      put_u32(out, length);
    } else {
      put_u16(out, static_cast<std::uint16_t>(length));
    }
  } else {
    put_u32(out, length);
  }
  out.insert(out.end(), value.begin(), value.end());
}

}  // namespace

Writer& Writer::add_string(Tag tag, std::string_view vr, std::string_view value) {
  elements_.push_back(Element{tag, std::string(vr), padded_text(vr, value)});
  return *this;
}

Writer& Writer::add_us(Tag tag, std::uint16_t value) {
  Element el{tag, "US", {}};
  put_u16(el.value, value);
  elements_.push_back(std::move(el));
  return *this;
}

Writer& Writer::add_decimals(Tag tag, std::span<const double> values) {
  std::string text;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) text += '\\';
    std::array<char, 32> buf{};
    // DS is limited to 16 characters per value.
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), values[i], std::chars_format::general, 10);
    std::string item(buf.data(), res.ptr);
    if (item.size() > 16) {
      res = std::to_chars(buf.data(), buf.data() + buf.size(), values[i], std::chars_format::general, 8);
      item.assign(buf.data(), res.ptr);
    }
    text += item;
  }
  return add_string(tag, "DS", text);
}

Writer& Writer::add_native_pixels(std::span<const std::uint16_t> samples) {
  Element el{tags::PixelData, "OW", {}};
  el.value.reserve(samples.size() * 2);
  for (std::uint16_t s : samples) put_u16(el.value, s);
  elements_.push_back(std::move(el));
  return *this;
}

Writer& Writer::add_encapsulated_pixels(std::span<const std::vector<std::uint8_t>> fragments) {
  Element el{tags::PixelData, "OB", {}, true};
  // Empty basic offset table, then one item per fragment, then the delimiter.
  put_u16(el.value, 0xFFFE);
  put_u16(el.value, 0xE000);
  put_u32(el.value, 0);
  for (const auto& frag : fragments) {
    put_u16(el.value, 0xFFFE);
    put_u16(el.value, 0xE000);
    put_u32(el.value, static_cast<std::uint32_t>(frag.size() + frag.size() % 2));
    el.value.insert(el.value.end(), frag.begin(), frag.end());
    if (frag.size() % 2) el.value.push_back(0);
  }
  put_u16(el.value, 0xFFFE);
  put_u16(el.value, 0xE0DD);
  put_u32(el.value, 0);
  elements_.push_back(std::move(el));
  return *this;
}

std::vector<std::uint8_t> Writer::serialize(std::string_view transfer_syntax,
                                            std::string_view sop_class_uid,
                                            std::string_view sop_instance_uid) const {
  std::vector<std::uint8_t> meta;
  const std::array<std::uint8_t, 2> version{0x00, 0x01};
  encode_element(meta, Tag{0x0002, 0x0001}, "OB", version, true, false);
  encode_element(meta, Tag{0x0002, 0x0002}, "UI", padded_text("UI", sop_class_uid), true, false);
  encode_element(meta, Tag{0x0002, 0x0003}, "UI", padded_text("UI", sop_instance_uid), true, false);
  encode_element(meta, tags::TransferSyntaxUID, "UI", padded_text("UI", transfer_syntax), true, false);
  encode_element(meta, Tag{0x0002, 0x0012}, "UI", padded_text("UI", "1.2.826.0.1.3680043.10.1"), true, false);

  std::vector<std::uint8_t> out(132, 0);
  std::memcpy(out.data() + 128, "DICM", 4);
  std::vector<std::uint8_t> group_length;
  put_u32(group_length, static_cast<std::uint32_t>(meta.size()));
  encode_element(out, Tag{0x0002, 0x0000}, "UL", group_length, true, false);
  out.insert(out.end(), meta.begin(), meta.end());

  const bool explicit_vr = transfer_syntax != kImplicitVRLittleEndian;
  std::vector<const Element*> sorted;
  sorted.reserve(elements_.size() + 2);
  for (const auto& el : elements_) sorted.push_back(&el);
  Element sop_class{tags::SOPClassUID, "UI", padded_text("UI", sop_class_uid)};
  Element sop_instance{tags::SOPInstanceUID, "UI", padded_text("UI", sop_instance_uid)};
  sorted.push_back(&sop_class);
  sorted.push_back(&sop_instance);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Element* a, const Element* b) { return a->tag < b->tag; });
  for (const Element* el : sorted) {
    encode_element(out, el->tag, el->vr, el->value, explicit_vr, el->undefined_length);
  }
  return out;
}

std::vector<std::uint8_t> replace_body_part(std::span<const std::uint8_t> bytes,
                                            const ParsedDicom& parsed, std::string_view value) {
  std::vector<std::uint8_t> element;
  encode_element(element, tags::BodyPartExamined, "CS", padded_text("CS", value), parsed.explicit_vr, false);

  std::size_t start = bytes.size();
  std::size_t stop = bytes.size();
  for (const ElementSpan& span : parsed.elements) {
    if (span.tag == tags::BodyPartExamined) {
      start = span.offset;
      stop = span.end;
      break;
    }
    if (tags::BodyPartExamined < span.tag) {
      start = stop = span.offset;
      break;
    }
  }
  std::vector<std::uint8_t> out;
  out.reserve(bytes.size() + element.size());
  out.insert(out.end(), bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(start));
  out.insert(out.end(), element.begin(), element.end());
  out.insert(out.end(), bytes.begin() + static_cast<std::ptrdiff_t>(stop), bytes.end());
  return out;
}

}  // namespace bodyreg::dicom
