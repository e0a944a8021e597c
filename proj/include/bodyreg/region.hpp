#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace bodyreg {

enum class Modality { CT, MR, Other };

std::string_view modality_name(Modality m) noexcept;
Modality parse_modality(std::string_view s) noexcept;

// Anatomical body regions in canonical order (landmark table order), with the
// internal AbdomenChest training class last.
enum class BodyRegion : std::uint8_t {
  Abdomen,
  Breast,
  Calf,
  Chest,
  Elbow,
  Foot,
  Forearm,
  Hand,
  Head,
  Arm,
  Knee,
  Neck,
  Pelvis,
  Shoulder,
  CervicalSpine,
  ThoracicSpine,
  LumbarSpine,
  Thigh,
  AbdomenChest,
};

inline constexpr std::size_t kRegionCount = 19;

inline constexpr std::size_t region_index(BodyRegion r) noexcept {
  return static_cast<std::size_t>(r);
}

inline constexpr BodyRegion region_at(std::size_t i) noexcept {
  return static_cast<BodyRegion>(i);
}

std::string_view region_name(BodyRegion r) noexcept;
std::optional<BodyRegion> parse_region(std::string_view name) noexcept;

// DICOM BodyPartExamined defined term written back for a region.
std::string_view body_part_term(BodyRegion r) noexcept;

// Ordered set of classes a classifier scores over.
class ClassSet {
 public:
  ClassSet() = default;
  explicit ClassSet(std::vector<BodyRegion> regions);

  // Internal training classes per modality: CT has no Breast; both carry AbdomenChest.
  static ClassSet for_modality(Modality m);
  // The final reporting taxonomy (no AbdomenChest).
  static ClassSet reporting(Modality m);

  const std::vector<BodyRegion>& regions() const noexcept { return regions_; }
  std::size_t size() const noexcept { return regions_.size(); }
  bool contains(BodyRegion r) const noexcept { return member_[region_index(r)]; }

 private:
  std::vector<BodyRegion> regions_;
  std::array<bool, kRegionCount> member_{};
};

}  // namespace bodyreg
