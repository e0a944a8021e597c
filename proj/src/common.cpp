#include "bodyreg/error.hpp"
#include "bodyreg/region.hpp"
#include "bodyreg/rng.hpp"

#include <cmath>
#include <numbers>

namespace bodyreg {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Malformed: return "Malformed";
    case ErrorCode::UnsupportedCodec: return "UnsupportedCodec";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::DegenerateOrientation: return "DegenerateOrientation";
    case ErrorCode::MissingGeometry: return "MissingGeometry";
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::EmptyCohort: return "EmptyCohort";
    case ErrorCode::EmptyImage: return "EmptyImage";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::DegenerateTable: return "DegenerateTable";
    case ErrorCode::ParamsOutOfRange: return "ParamsOutOfRange";
    case ErrorCode::BackendFailure: return "BackendFailure";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::UnknownFactor: return "UnknownFactor";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::MissingPatientId: return "MissingPatientId";
  }
  return "Unknown";
}

// ---------------------------------------------------------------------------
// Regions

namespace {

struct RegionInfo {
  std::string_view name;
  std::string_view body_part;
};

constexpr std::array<RegionInfo, kRegionCount> kRegions{{
    {"Abdomen", "ABDOMEN"},
    {"Breast", "BREAST"},
    {"Calf", "LEG"},
    {"Chest", "CHEST"},
    {"Elbow", "ELBOW"},
    {"Foot", "FOOT"},
    {"Forearm", "FOREARM"},
    {"Hand", "HAND"},
    {"Head", "HEAD"},
    {"Arm", "ARM"},
    {"Knee", "KNEE"},
    {"Neck", "NECK"},
    {"Pelvis", "PELVIS"},
    {"Shoulder", "SHOULDER"},
    {"CervicalSpine", "CSPINE"},
    {"ThoracicSpine", "TSPINE"},
    {"LumbarSpine", "LSPINE"},
    {"Thigh", "THIGH"},
    {"AbdomenChest", "CHESTABDOMEN"},
}};

}  // namespace

std::string_view modality_name(Modality m) noexcept {
  switch (m) {
    case Modality::CT: return "CT";
    case Modality::MR: return "MR";
    case Modality::Other: return "OT";
  }
  return "OT";
}

Modality parse_modality(std::string_view s) noexcept {
  if (s == "CT") return Modality::CT;
  if (s == "MR") return Modality::MR;
  return Modality::Other;
}

std::string_view region_name(BodyRegion r) noexcept { return kRegions[region_index(r)].name; }

std::optional<BodyRegion> parse_region(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kRegionCount; ++i) {
    if (kRegions[i].name == name) return region_at(i);
  }
  return std::nullopt;
}

std::string_view body_part_term(BodyRegion r) noexcept { return kRegions[region_index(r)].body_part; }

ClassSet::ClassSet(std::vector<BodyRegion> regions) : regions_(std::move(regions)) {
  for (BodyRegion r : regions_) member_[region_index(r)] = true;
}

ClassSet ClassSet::for_modality(Modality m) {
  std::vector<BodyRegion> out;
  for (std::size_t i = 0; i < kRegionCount; ++i) {
    BodyRegion r = region_at(i);
    if (r == BodyRegion::Breast && m != Modality::MR) continue;
    out.push_back(r);
  }
  return ClassSet(std::move(out));
}

ClassSet ClassSet::reporting(Modality m) {
  const ClassSet all = for_modality(m);
  std::vector<BodyRegion> out;
  for (BodyRegion r : all.regions()) {
    if (r != BodyRegion::AbdomenChest) out.push_back(r);
  }
  return ClassSet(std::move(out));
}

// ---------------------------------------------------------------------------
// Rng

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng Rng::derive(std::uint64_t seed, std::uint64_t index) {
  return Rng(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632BE59BD9B4E019ULL)));
}

std::size_t Rng::uniform_index(std::size_t n) {
  // Rejection sampling removes modulo bias.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform01();
  } while (u1 <= 0.0);
  const double u2 = uniform01();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

}  // namespace bodyreg
