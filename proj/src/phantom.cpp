#include "bodyreg/phantom.hpp"

#include "bodyreg/dicom.hpp"
#include "bodyreg/error.hpp"
#include "bodyreg/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numbers>

namespace bodyreg {

Texture default_texture(BodyRegion r) {
  struct P {
    int fx, fy;
    double phase;
  };
  constexpr double q = std::numbers::pi / 2.0;
  static constexpr std::array<P, kRegionCount> table{{
      {1, 0, 0}, {0, 1, 0}, {1, 1, 0},  {1, -1, 0}, {2, 0, 0}, {0, 2, 0},  {2, 1, 0},
      {1, 2, 0}, {2, -1, 0}, {1, -2, 0}, {2, 2, 0},  {2, -2, 0}, {3, 0, 0}, {0, 3, 0},
      {1, 0, q}, {0, 1, q},  {1, 1, q},  {1, -1, q}, {3, 1, 0},
  }};
  const P& p = table[region_index(r)];
  return Texture{p.fx, p.fy, p.phase, 400.0};
}

namespace {

std::string age_string(int years) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%03dY", std::clamp(years, 0, 999));
  return buf;
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace

PhantomResult generate_phantom(const PhantomSpec& spec, const std::filesystem::path& dir) {
  if (spec.regions.empty()) throw Error(ErrorCode::InvalidSpec, "phantom needs at least one region");
  if (!(spec.spacing_mm > 0.0) || !std::isfinite(spec.spacing_mm)) {
    throw Error(ErrorCode::InvalidSpec, "slice spacing must be positive");
  }
  if (spec.matrix < 32 || spec.matrix > 1024) throw Error(ErrorCode::InvalidSpec, "matrix must be 32..1024");
  if (!(spec.noise >= 0.0)) throw Error(ErrorCode::InvalidSpec, "noise must be non-negative");
  for (std::size_t i = 0; i < spec.regions.size(); ++i) {
    const auto& r = spec.regions[i];
    if (!(r.extent_mm > 0.0) || !std::isfinite(r.extent_mm)) {
      throw Error(ErrorCode::InvalidSpec, std::string(region_name(r.region)) + " extent must be positive");
    }
    if (r.region == BodyRegion::AbdomenChest) throw Error(ErrorCode::InvalidSpec, "AbdomenChest is not a body region");
    if (i > 0 && region_index(r.region) <= region_index(spec.regions[i - 1].region)) {
      throw Error(ErrorCode::InvalidSpec, "regions must be distinct and in canonical order");
    }
  }
  if (spec.modality == Modality::Other) throw Error(ErrorCode::InvalidSpec, "phantom modality must be CT or MR");

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());

  PhantomResult out;
  const std::string base = spec.uid_root + "." + std::to_string(spec.study_number);
  out.study_uid = base + ".1";
  out.series_uid = base + ".2";
  out.frame_of_reference_uid = base + ".3";

  double z = spec.z_origin;
  std::vector<double> lower;
  for (const auto& r : spec.regions) {
    lower.push_back(z);
    out.boxes.push_back({out.frame_of_reference_uid, r.region, {-250.0, -250.0, z}, {250.0, 250.0, z + r.extent_mm}});
    z += r.extent_mm;
  }
  const double total = z - spec.z_origin;
  const auto slices = static_cast<std::size_t>(std::floor(total / spec.spacing_mm + 1e-9));

  const std::size_t n = spec.matrix;
  const double half = static_cast<double>(n) / 2.0;
  const std::array<double, 6> orientation{1, 0, 0, 0, 1, 0};
  const std::string_view sop_class = spec.modality == Modality::CT ? dicom::kCTImageStorage : dicom::kMRImageStorage;
  Rng rng(spec.seed);
  std::vector<std::uint16_t> samples(n * n);

  for (std::size_t k = 0; k < slices; ++k) {
    const double zk = spec.z_origin + (static_cast<double>(k) + 0.5) * spec.spacing_mm;
    std::size_t ri = 0;
    while (ri + 1 < lower.size() && zk >= lower[ri + 1]) ++ri;
    const auto& region = spec.regions[ri];
    const Texture tex = region.texture.value_or(default_texture(region.region));
    const double amp = tex.amplitude * (1.0 + 0.1 * std::sin(zk / 37.0));
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const double arg = 2.0 * std::numbers::pi *
                               (tex.fx * static_cast<double>(x) + tex.fy * static_cast<double>(y)) /
                               static_cast<double>(n) +
                           tex.phase;
        const double v = 2000.0 + amp * std::cos(arg) + spec.noise * tex.amplitude * rng.normal();
        samples[y * n + x] = static_cast<std::uint16_t>(std::clamp(std::lround(v), 0L, 4095L));
      }
    }

    const std::string sop_uid = base + ".4." + std::to_string(k + 1);
    dicom::Writer w;
    w.add_string(dicom::tags::Modality, "CS", modality_name(spec.modality))
        .add_string(dicom::tags::SeriesDescription, "LO", spec.series_description)
        .add_string(dicom::tags::PatientID, "LO", spec.patient_id)
        .add_string(dicom::tags::StudyInstanceUID, "UI", out.study_uid)
        .add_string(dicom::tags::SeriesInstanceUID, "UI", out.series_uid)
        .add_string(dicom::tags::FrameOfReferenceUID, "UI", out.frame_of_reference_uid)
        .add_string(dicom::tags::InstanceNumber, "IS", std::to_string(k + 1));
    if (spec.patient_age) w.add_string(dicom::tags::PatientAge, "AS", age_string(*spec.patient_age));
    if (spec.patient_sex) w.add_string(dicom::tags::PatientSex, "CS", sex_name(*spec.patient_sex));
    if (spec.manufacturer) w.add_string(dicom::tags::Manufacturer, "LO", *spec.manufacturer);
    if (spec.institution) w.add_string(dicom::tags::InstitutionName, "LO", *spec.institution);
    if (spec.contrast_agent) w.add_string(dicom::tags::ContrastBolusAgent, "LO", *spec.contrast_agent);
    if (spec.body_part_examined) w.add_string(dicom::tags::BodyPartExamined, "CS", *spec.body_part_examined);
    const double thickness[] = {spec.spacing_mm};
    const double position[] = {-half, -half, zk};
    w.add_decimals(dicom::tags::SliceThickness, thickness)
        .add_decimals(dicom::tags::ImagePositionPatient, position)
        .add_decimals(dicom::tags::ImageOrientationPatient, orientation)
        .add_us(dicom::tags::SamplesPerPixel, 1)
        .add_string(dicom::Tag{0x0028, 0x0004}, "CS", "MONOCHROME2")
        .add_us(dicom::tags::Rows, static_cast<std::uint16_t>(n))
        .add_us(dicom::tags::Columns, static_cast<std::uint16_t>(n))
        .add_us(dicom::tags::BitsAllocated, 16)
        .add_us(dicom::tags::BitsStored, 12)
        .add_us(dicom::Tag{0x0028, 0x0102}, 11)
        .add_us(dicom::tags::PixelRepresentation, 0)
        .add_native_pixels(samples);

    char name[32];
    std::snprintf(name, sizeof name, "IMG%05zu.dcm", k + 1);
    const auto path = dir / name;
    write_bytes(path, w.serialize(dicom::kExplicitVRLittleEndian, sop_class, sop_uid));
    out.files.push_back(path);
    out.slice_labels.push_back(region.region);
  }
  return out;
}

PhantomSpec parse_phantom_spec(std::string_view json_text) {
  using nlohmann::json;
  PhantomSpec spec;
  try {
    const json j = json::parse(json_text);
    if (!j.is_object()) throw Error(ErrorCode::InvalidSpec, "phantom spec must be a JSON object");
    for (const auto& [key, v] : j.items()) {
      if (key == "regions") {
        for (const auto& r : v) {
          PhantomRegion pr;
          for (const auto& [rk, rv] : r.items()) {
            if (rk == "region") {
              const auto region = parse_region(rv.get<std::string>());
              if (!region) throw Error(ErrorCode::InvalidSpec, "unknown region " + rv.dump());
              pr.region = *region;
            } else if (rk == "extent_mm") {
              pr.extent_mm = rv.get<double>();
            } else if (rk == "texture") {
              Texture t;
              for (const auto& [tk, tv] : rv.items()) {
                if (tk == "fx") t.fx = tv.get<int>();
                else if (tk == "fy") t.fy = tv.get<int>();
                else if (tk == "phase") t.phase = tv.get<double>();
                else if (tk == "amplitude") t.amplitude = tv.get<double>();
                else throw Error(ErrorCode::InvalidSpec, "unknown texture key '" + tk + "'");
              }
              pr.texture = t;
            } else {
              throw Error(ErrorCode::InvalidSpec, "unknown region key '" + rk + "'");
            }
          }
          spec.regions.push_back(pr);
        }
      } else if (key == "spacing_mm") {
        spec.spacing_mm = v.get<double>();
      } else if (key == "noise") {
        spec.noise = v.get<double>();
      } else if (key == "seed") {
        spec.seed = v.get<std::uint64_t>();
      } else if (key == "matrix") {
        spec.matrix = v.get<std::size_t>();
      } else if (key == "z_origin") {
        spec.z_origin = v.get<double>();
      } else if (key == "modality") {
        spec.modality = parse_modality(v.get<std::string>());
      } else if (key == "uid_root") {
        spec.uid_root = v.get<std::string>();
      } else if (key == "study_number") {
        spec.study_number = v.get<std::uint32_t>();
      } else if (key == "patient_id") {
        spec.patient_id = v.get<std::string>();
      } else if (key == "patient_age") {
        spec.patient_age = v.get<int>();
      } else if (key == "patient_sex") {
        spec.patient_sex = parse_sex(v.get<std::string>());
        if (!spec.patient_sex) throw Error(ErrorCode::InvalidSpec, "patient_sex must be F, M or O");
      } else if (key == "manufacturer") {
        spec.manufacturer = v.get<std::string>();
      } else if (key == "institution") {
        spec.institution = v.get<std::string>();
      } else if (key == "contrast_agent") {
        spec.contrast_agent = v.get<std::string>();
      } else if (key == "body_part_examined") {
        spec.body_part_examined = v.get<std::string>();
      } else if (key == "series_description") {
        spec.series_description = v.get<std::string>();
      } else {
        throw Error(ErrorCode::InvalidSpec, "unknown phantom key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("phantom spec: ") + e.what());
  }
  return spec;
}

PhantomCohort generate_phantom_cohort(const PhantomCohortSpec& spec, const std::filesystem::path& dir) {
  if (spec.studies == 0) throw Error(ErrorCode::InvalidSpec, "cohort needs at least one study");
  if (spec.regions.size() < 2) throw Error(ErrorCode::InvalidSpec, "cohort needs at least two regions");
  if (!(spec.mr_fraction >= 0.0 && spec.mr_fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidSpec, "mr_fraction must lie in [0, 1]");
  }
  static const char* const kManufacturers[] = {"GE", "Philips", "Siemens", "Toshiba"};
  static const char* const kInstitutions[] = {"Community Hospital", "Imaging Center", "Primary Care Hospital"};
  static const char* const kMrDescriptions[] = {"AX T1", "AX T2 FSE", "AX STIR", "AX GRE"};
  static const double kExtents[] = {40.0, 50.0, 60.0};
  constexpr double kPrimaryExtent = 80.0;
  static const double kSpacings[] = {2.0, 2.5, 5.0};

  Rng rng(spec.seed);
  PhantomCohort cohort;
  std::vector<BoundingBox3D> boxes;
  std::size_t per_modality[2] = {0, 0};
  const std::size_t R = spec.regions.size();
  for (std::size_t s = 0; s < spec.studies; ++s) {
    PhantomSpec ps;
    // Exact MR share, interleaved; primary regions cycle within each modality
    // so every region leads some study of each modality.
    const auto mr_before = static_cast<std::size_t>(std::floor(static_cast<double>(s) * spec.mr_fraction));
    const auto mr_after = static_cast<std::size_t>(std::floor(static_cast<double>(s + 1) * spec.mr_fraction));
    ps.modality = mr_after > mr_before ? Modality::MR : Modality::CT;
    const std::size_t primary = per_modality[ps.modality == Modality::MR]++ % R;
    const std::size_t m = std::min<std::size_t>(2 + rng.uniform_index(2), R);
    const std::size_t lo = primary + 1 >= m ? primary + 1 - m : 0;
    const std::size_t hi = std::min(primary, R - m);
    const std::size_t start = lo + rng.uniform_index(hi - lo + 1);
    for (std::size_t i = 0; i < m; ++i) {
      const double extent = start + i == primary ? kPrimaryExtent : kExtents[rng.uniform_index(std::size(kExtents))];
      ps.regions.push_back({spec.regions[start + i], extent, std::nullopt});
    }
    ps.spacing_mm = kSpacings[rng.uniform_index(std::size(kSpacings))];
    ps.noise = spec.noise;
    ps.seed = rng.next_u64();
    ps.matrix = spec.matrix;
    ps.z_origin = -500.0 + 10.0 * static_cast<double>(rng.uniform_index(20));
    ps.study_number = static_cast<std::uint32_t>(s + 1);
    char pid[16];
    std::snprintf(pid, sizeof pid, "PAT%04zu", s + 1);
    ps.patient_id = pid;
    ps.patient_age = 18 + static_cast<int>(rng.uniform_index(73));
    ps.patient_sex = rng.uniform_index(2) == 0 ? PatientSex::Female : PatientSex::Male;
    ps.manufacturer = rng.uniform_index(20) == 0 ? "Hitachi" : kManufacturers[rng.uniform_index(4)];
    ps.institution = kInstitutions[rng.uniform_index(3)];
    if (rng.uniform01() < 0.3) ps.contrast_agent = "IODINATED";
    if (ps.modality == Modality::MR) {
      ps.series_description = kMrDescriptions[rng.uniform_index(std::size(kMrDescriptions))];
    } else {
      ps.series_description = rng.uniform_index(4) == 0 ? "AX BONE" : "AXIAL";
    }
    // Stored BodyPartExamined is deliberately unreliable, as in clinical data.
    switch (rng.uniform_index(4)) {
      case 0:
      case 1: ps.body_part_examined = std::string(body_part_term(ps.regions.front().region)); break;
      case 2: ps.body_part_examined = "EXTREMITY"; break;
      default: break;
    }
    char sub[32];
    std::snprintf(sub, sizeof sub, "study_%04zu", s + 1);
    auto result = generate_phantom(ps, dir / sub);
    boxes.insert(boxes.end(), result.boxes.begin(), result.boxes.end());
    cohort.studies.push_back(std::move(result));
  }
  cohort.label_file = dir / "labels.json";
  write_label_file(boxes, cohort.label_file);
  return cohort;
}

}  // namespace bodyreg
