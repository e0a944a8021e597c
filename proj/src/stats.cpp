#include "bodyreg/stats.hpp"

#include "bodyreg/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace bodyreg {

ConfusionMatrix::ConfusionMatrix(std::vector<BodyRegion> cls)
    : classes(std::move(cls)), counts(classes.size(), classes.size(), 0) {}

std::optional<std::size_t> ConfusionMatrix::index_of(BodyRegion r) const noexcept {
  for (std::size_t k = 0; k < classes.size(); ++k) {
    if (classes[k] == r) return k;
  }
  return std::nullopt;
}

void ConfusionMatrix::add(BodyRegion truth, BodyRegion predicted, std::uint64_t n) {
  const auto t = index_of(truth);
  const auto p = index_of(predicted);
  if (t && p) counts(*t, *p) += n;
}

std::uint64_t ConfusionMatrix::total() const noexcept {
  std::uint64_t s = 0;
  for (auto v : counts.values()) s += v;
  return s;
}

std::uint64_t ConfusionMatrix::trace() const noexcept {
  std::uint64_t s = 0;
  for (std::size_t k = 0; k < size(); ++k) s += counts(k, k);
  return s;
}

std::uint64_t ConfusionMatrix::support(std::size_t k) const noexcept {
  std::uint64_t s = 0;
  for (std::size_t j = 0; j < size(); ++j) s += counts(k, j);
  return s;
}

std::uint64_t ConfusionMatrix::predicted(std::size_t k) const noexcept {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < size(); ++i) s += counts(i, k);
  return s;
}

namespace {

void require_nonempty(const ConfusionMatrix& cm) {
  if (cm.size() == 0 || cm.total() == 0) throw Error(ErrorCode::EmptyMatrix, "confusion matrix has no counts");
}

}  // namespace

std::optional<double> recall(const ConfusionMatrix& cm, std::size_t k) {
  const auto s = cm.support(k);
  if (s == 0) return std::nullopt;
  return static_cast<double>(cm.counts(k, k)) / static_cast<double>(s);
}

std::optional<double> true_negative_rate(const ConfusionMatrix& cm, std::size_t k) {
  const std::uint64_t negatives = cm.total() - cm.support(k);
  if (negatives == 0) return std::nullopt;
  const std::uint64_t fp = cm.predicted(k) - cm.counts(k, k);
  return static_cast<double>(negatives - fp) / static_cast<double>(negatives);
}

double weighted_sensitivity(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  // support_k * (tp_k / support_k) is tp_k, so accumulate in integers.
  std::uint64_t num = 0, den = 0;
  for (std::size_t k = 0; k < cm.size(); ++k) {
    const auto s = cm.support(k);
    if (s == 0) continue;
    num += cm.counts(k, k);
    den += s;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

SpecificityResult weighted_specificity(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  SpecificityResult out;
  double num = 0.0;
  std::uint64_t den = 0;
  for (std::size_t k = 0; k < cm.size(); ++k) {
    const auto s = cm.support(k);
    if (s == 0) continue;
    const auto tnr = true_negative_rate(cm, k);
    if (!tnr) {
      out.undefined.push_back(cm.classes[k]);
      continue;
    }
    num += static_cast<double>(s) * *tnr;
    den += s;
  }
  if (den > 0) out.value = num / static_cast<double>(den);
  return out;
}

// ---------------------------------------------------------------------------

ContingencyTable FactorTable::contingency() const {
  if (correct.size() != categories.size() || incorrect.size() != categories.size()) {
    throw Error(ErrorCode::InvalidArgument, "factor table columns disagree in length");
  }
  ContingencyTable t(2, categories.size(), 0);
  for (std::size_t c = 0; c < categories.size(); ++c) {
    t(0, c) = correct[c];
    t(1, c) = incorrect[c];
  }
  return t;
}

double gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0 || std::isnan(x)) throw Error(ErrorCode::InvalidArgument, "gamma_q needs a > 0, x >= 0");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  const double log_prefactor = a * std::log(x) - x - std::lgamma(a);
  constexpr double eps = 1e-16;
  if (x < a + 1.0) {
    // P(a, x) by its power series, Q = 1 - P.
    double term = 1.0 / a, sum = term;
    for (int n = 1; n < 10000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * eps) break;
    }
    return std::clamp(1.0 - sum * std::exp(log_prefactor), 0.0, 1.0);
  }
  // Continued fraction for Q, modified Lentz.
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < eps) break;
  }
  return std::clamp(std::exp(log_prefactor) * h, 0.0, 1.0);
}

double chi_square_sf(double statistic, double df) {
  if (!(df > 0.0)) throw Error(ErrorCode::InvalidArgument, "degrees of freedom must be positive");
  if (statistic <= 0.0) return 1.0;
  return gamma_q(df / 2.0, statistic / 2.0);
}

ChiSquareResult chi_square(const ContingencyTable& t) {
  if (t.rows() < 2 || t.cols() < 2) throw Error(ErrorCode::DegenerateTable, "need at least a 2x2 table");
  std::vector<double> row(t.rows(), 0.0), col(t.cols(), 0.0);
  double n = 0.0;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      const auto v = static_cast<double>(t(r, c));
      row[r] += v;
      col[c] += v;
      n += v;
    }
  }
  for (std::size_t r = 0; r < t.rows(); ++r) {
    if (row[r] == 0.0) throw Error(ErrorCode::DegenerateTable, "row " + std::to_string(r) + " has zero expected count");
  }
  for (std::size_t c = 0; c < t.cols(); ++c) {
    if (col[c] == 0.0) throw Error(ErrorCode::DegenerateTable, "column " + std::to_string(c) + " has zero expected count");
  }
  ChiSquareResult out;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      const double e = row[r] * col[c] / n;
      const double d = static_cast<double>(t(r, c)) - e;
      out.statistic += d * d / e;
    }
  }
  out.df = (t.rows() - 1) * (t.cols() - 1);
  out.p = chi_square_sf(out.statistic, static_cast<double>(out.df));
  return out;
}

ChiSquareResult chi_square(const FactorTable& table) { return chi_square(table.contingency()); }

std::string_view association_name(Association a) noexcept {
  switch (a) {
    case Association::Negligible: return "negligible";
    case Association::Weak: return "weak";
    case Association::Moderate: return "moderate";
    case Association::Strong: return "strong";
  }
  return "negligible";
}

Association association_bucket(double v) noexcept {
  if (v < 0.05) return Association::Negligible;
  if (v < 0.10) return Association::Weak;
  if (v < 0.25) return Association::Moderate;
  return Association::Strong;
}

CramersV cramers_v(const ContingencyTable& t) {
  const auto chi = chi_square(t);
  double n = 0.0;
  for (auto v : t.values()) n += static_cast<double>(v);
  const double k = static_cast<double>(std::min(t.rows(), t.cols()) - 1);
  CramersV out;
  out.v = std::clamp(std::sqrt(chi.statistic / (n * k)), 0.0, 1.0);
  out.bucket = association_bucket(out.v);
  return out;
}

CramersV cramers_v(const FactorTable& table) { return cramers_v(table.contingency()); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidParams, "quantile probability must lie in (0, 1)");
  // Rational approximation (relative error ~1e-9) refined by one Halley step.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

double sample_size_raw(double p, double confidence, double relative_error, double deff) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidParams, "expected accuracy must lie in (0, 1)");
  if (!(confidence > 0.0 && confidence < 1.0)) throw Error(ErrorCode::InvalidParams, "confidence must lie in (0, 1)");
  if (!(relative_error > 0.0) || !std::isfinite(relative_error)) {
    throw Error(ErrorCode::InvalidParams, "relative error must be positive");
  }
  if (!(deff > 0.0) || !std::isfinite(deff)) throw Error(ErrorCode::InvalidParams, "design effect must be positive");
  const double z = normal_quantile(1.0 - (1.0 - confidence) / 2.0);
  return deff * z * z * (1.0 - p) / (relative_error * relative_error * p);
}

std::uint64_t sample_size(double p, double confidence, double relative_error, double deff) {
  const double n = sample_size_raw(p, confidence, relative_error, deff);
  if (n > 1e18) throw Error(ErrorCode::InvalidParams, "sample size overflows");
  // Absorb rounding noise so exact integers do not round up.
  return static_cast<std::uint64_t>(std::ceil(n * (1.0 - 1e-12)));
}

double implied_design_effect(double target, double p, double confidence, double relative_error) {
  if (!(target > 0.0)) throw Error(ErrorCode::InvalidParams, "target must be positive");
  return target / sample_size_raw(p, confidence, relative_error, 1.0);
}

// ---------------------------------------------------------------------------

std::string normalize_tag_value(std::string_view value) {
  std::string out;
  bool gap = false;
  for (char ch : value) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isalnum(u)) {
      if (gap && !out.empty()) out += ' ';
      gap = false;
      out += static_cast<char>(std::toupper(u));
    } else {
      gap = true;
    }
  }
  return out;
}

SynonymMap SynonymMap::defaults() {
  using R = BodyRegion;
  SynonymMap m;
  for (std::size_t i = 0; i < kRegionCount; ++i) {
    const auto r = region_at(i);
    if (r == R::AbdomenChest) continue;
    m.entries[std::string(body_part_term(r))] = {r};
    m.entries[normalize_tag_value(region_name(r))] = {r};
  }
  m.entries["CHESTABDOMEN"] = {R::Abdomen, R::Chest};
  m.entries["CHEST ABDOMEN"] = {R::Abdomen, R::Chest};
  m.entries["ABDOMENPELVIS"] = {R::Abdomen, R::Pelvis};
  m.entries["ABDOMEN PELVIS"] = {R::Abdomen, R::Pelvis};
  m.entries["CHEST ABDOMEN PELVIS"] = {R::Abdomen, R::Chest, R::Pelvis};
  m.entries["CAP"] = {R::Abdomen, R::Chest, R::Pelvis};
  m.entries["THORAX"] = {R::Chest};
  m.entries["LUNG"] = {R::Chest};
  m.entries["BRAIN"] = {R::Head};
  m.entries["SKULL"] = {R::Head};
  m.entries["HEADNECK"] = {R::Head, R::Neck};
  m.entries["HEAD NECK"] = {R::Head, R::Neck};
  m.entries["SPINE"] = {R::CervicalSpine, R::ThoracicSpine, R::LumbarSpine};
  m.entries["WHOLESPINE"] = {R::CervicalSpine, R::ThoracicSpine, R::LumbarSpine};
  m.entries["C SPINE"] = {R::CervicalSpine};
  m.entries["T SPINE"] = {R::ThoracicSpine};
  m.entries["L SPINE"] = {R::LumbarSpine};
  m.entries["LEXT"] = {R::Thigh, R::Knee, R::Calf, R::Foot};
  m.entries["LOWER EXTREMITY"] = {R::Thigh, R::Knee, R::Calf, R::Foot};
  m.entries["UEXT"] = {R::Shoulder, R::Arm, R::Elbow, R::Forearm, R::Hand};
  m.entries["UPPER EXTREMITY"] = {R::Shoulder, R::Arm, R::Elbow, R::Forearm, R::Hand};
  m.entries["EXTREMITY"] = {R::Shoulder, R::Arm, R::Elbow, R::Forearm, R::Hand,
                            R::Thigh,    R::Knee, R::Calf,  R::Foot};
  m.entries["ANKLE"] = {R::Calf, R::Foot};
  m.entries["WRIST"] = {R::Forearm, R::Hand};
  m.entries["HIP"] = {R::Pelvis, R::Thigh};
  m.entries["FEMUR"] = {R::Thigh};
  m.entries["HUMERUS"] = {R::Arm};
  m.entries["UPPER ARM"] = {R::Arm};
  m.entries["LOWER LEG"] = {R::Calf};
  m.entries["MAMMA"] = {R::Breast};
  for (auto& [key, regions] : m.entries) std::sort(regions.begin(), regions.end());
  return m;
}

SynonymMap SynonymMap::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  SynonymMap m;
  try {
    const auto j = nlohmann::json::parse(in);
    if (!j.is_object()) throw SchemaError(1, "synonym file must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      std::vector<BodyRegion> regions;
      for (const auto& name : value) {
        auto r = parse_region(name.get<std::string>());
        if (!r || *r == BodyRegion::AbdomenChest) throw SchemaError(1, "unknown region " + name.get<std::string>());
        regions.push_back(*r);
      }
      std::sort(regions.begin(), regions.end());
      m.entries[normalize_tag_value(key)] = std::move(regions);
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(1, e.what());
  }
  return m;
}

void SynonymMap::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [key, regions] : entries) {
    auto& arr = j[key] = nlohmann::ordered_json::array();
    for (BodyRegion r : regions) arr.push_back(std::string(region_name(r)));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<BodyRegion> SynonymMap::lookup(std::string_view value) const {
  const std::string norm = normalize_tag_value(value);
  if (auto it = entries.find(norm); it != entries.end()) return it->second;
  std::vector<BodyRegion> out;
  std::size_t pos = 0;
  while (pos < norm.size()) {
    const std::size_t end = std::min(norm.find(' ', pos), norm.size());
    if (auto it = entries.find(norm.substr(pos, end - pos)); it != entries.end()) {
      out.insert(out.end(), it->second.begin(), it->second.end());
    }
    pos = end + 1;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

TagAgreement tag_agreement(std::span<const TagAgreementInput> studies, const SynonymMap& synonyms) {
  TagAgreement out;
  for (const auto& s : studies) {
    ++out.total;
    if (!s.tag_value) continue;
    const auto mapped = synonyms.lookup(*s.tag_value);
    const bool hit = std::any_of(mapped.begin(), mapped.end(), [&](BodyRegion r) {
      return std::find(s.predicted.begin(), s.predicted.end(), r) != s.predicted.end();
    });
    out.matched += hit;
  }
  return out;
}

}  // namespace bodyreg
