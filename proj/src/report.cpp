#include "bodyreg/report.hpp"

#include "bodyreg/error.hpp"
#include "text_util.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

namespace bodyreg {

std::string format_ci(const std::optional<CIResult>& ci) {
  if (!ci || !std::isfinite(ci->point)) return "NA";
  auto pct = [](double v) { return text::format_fixed(100.0 * v, 1); };
  return pct(ci->point) + " (" + pct(ci->lo) + " - " + pct(ci->hi) + ")";
}

std::string format_p(double p) {
  if (!std::isfinite(p)) return "NA";
  if (p >= 0.001) return text::format_fixed(p, 3);
  if (p <= 0.0) return "0";
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), p, std::chars_format::scientific, 1);
  std::string s(buf.data(), res.ptr);
  // 6.7e-07 -> 6.7e-7
  const auto e = s.find('e');
  std::string mant = s.substr(0, e);
  std::string exp = s.substr(e + 2);
  exp.erase(0, std::min(exp.find_first_not_of('0'), exp.size() - 1));
  return mant + "e" + s[e + 1] + exp;
}

namespace {

using Table = std::vector<std::vector<std::string>>;

std::string render(const std::vector<std::string>& header, const Table& rows, ReportFormat format,
                   const std::string& caption) {
  std::string out;
  if (format == ReportFormat::Csv) {
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += text::csv_field(cells[i]);
      }
      out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }
  auto line = [&](const std::vector<std::string>& cells) {
    out += '|';
    for (const auto& c : cells) out += ' ' + c + " |";
    out += '\n';
  };
  line(header);
  out += '|';
  for (std::size_t i = 0; i < header.size(); ++i) out += " --- |";
  out += '\n';
  for (const auto& r : rows) line(r);
  if (!caption.empty()) out += '\n' + caption + '\n';
  return out;
}

std::string n_percent(const FactorRow& row) {
  return std::to_string(row.n) + " (" + text::format_fixed(row.percent, 1) + ")";
}

}  // namespace

std::string render_factor_table(const std::vector<FactorReport>& factors, ReportFormat format) {
  const std::vector<std::string> header{"Factor", "Category", "n (%)", "Sensitivity (95% CI)",
                                        "Specificity (95% CI)", "p-value"};
  Table rows;
  for (const auto& f : factors) {
    std::string label(factor_label(f.factor));
    if (factor_is_series_level(f.factor)) label += '*';
    for (std::size_t i = 0; i < f.rows.size(); ++i) {
      const auto& r = f.rows[i];
      std::string p;
      if (i == 0) p = f.chi ? format_p(f.chi->p) : "NA";
      rows.push_back({i == 0 ? label : "", r.category, n_percent(r), format_ci(r.sensitivity),
                      format_ci(r.specificity), p});
    }
  }
  return render(header, rows, format,
                "n = number of studies (*series). NA: fewer than " + std::to_string(kMinReportCount) +
                    " in the category.");
}

std::string render_region_table(const ReportData& data, ReportFormat format) {
  const std::vector<std::string> header{"Body Region",
                                        "CT n",
                                        "CT Sensitivity (95% CI)",
                                        "CT Specificity (95% CI)",
                                        "MRI n",
                                        "MRI Sensitivity (95% CI)",
                                        "MRI Specificity (95% CI)"};
  Table rows;
  if (data.ct_regions || data.mr_regions) {
    // Overall first, then the union of region labels in display order.
    std::vector<std::string> labels{"Overall"};
    std::map<std::string, bool> seen;
    for (const auto* set : {&data.ct_regions, &data.mr_regions}) {
      if (!*set) continue;
      for (const auto& r : **set) {
        if (r.region) seen[r.label] = true;
      }
    }
    for (const auto& [label, _] : seen) labels.push_back(label);

    auto cells = [](const std::optional<std::vector<RegionRow>>& set, const std::string& label,
                    std::vector<std::string>& row) {
      const RegionRow* hit = nullptr;
      if (set) {
        for (const auto& r : *set) {
          if (r.label == label) hit = &r;
        }
      }
      if (!hit) {
        row.insert(row.end(), {"-", "-", "-"});
        return;
      }
      row.push_back(std::to_string(hit->n));
      row.push_back(format_ci(hit->sensitivity));
      row.push_back(format_ci(hit->specificity));
    };
    for (const auto& label : labels) {
      std::vector<std::string> row{label};
      cells(data.ct_regions, label, row);
      cells(data.mr_regions, label, row);
      rows.push_back(std::move(row));
    }
  }
  return render(header, rows, format, "n = number of images.");
}

namespace {

using ojson = nlohmann::ordered_json;

ojson number(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

double number_from(const ojson& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

ojson ci_to_json(const std::optional<CIResult>& ci) {
  if (!ci) return nullptr;
  return ojson{{"point", number(ci->point)}, {"lo", number(ci->lo)},
               {"hi", number(ci->hi)},       {"level", ci->level},
               {"resamples", ci->resamples}, {"seed", ci->seed},
               {"estimate", number(ci->estimate)}};
}

std::optional<CIResult> ci_from_json(const ojson& j) {
  if (j.is_null()) return std::nullopt;
  CIResult c;
  c.point = number_from(j.at("point"));
  c.lo = number_from(j.at("lo"));
  c.hi = number_from(j.at("hi"));
  c.level = j.at("level").get<double>();
  c.resamples = j.at("resamples").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.estimate = number_from(j.at("estimate"));
  return c;
}

ojson regions_to_json(const std::optional<std::vector<RegionRow>>& rows) {
  if (!rows) return nullptr;
  ojson out = ojson::array();
  for (const auto& r : *rows) {
    out.push_back({{"label", r.label},
                   {"region", r.region ? ojson(region_name(*r.region)) : ojson(nullptr)},
                   {"n", r.n},
                   {"sensitivity", ci_to_json(r.sensitivity)},
                   {"specificity", ci_to_json(r.specificity)}});
  }
  return out;
}

std::optional<std::vector<RegionRow>> regions_from_json(const ojson& j) {
  if (j.is_null()) return std::nullopt;
  std::vector<RegionRow> rows;
  for (const auto& e : j) {
    RegionRow r;
    r.label = e.at("label").get<std::string>();
    if (!e.at("region").is_null()) {
      r.region = parse_region(e.at("region").get<std::string>());
      if (!r.region) throw Error(ErrorCode::InvalidArgument, "unknown region in report data");
    }
    r.n = e.at("n").get<std::size_t>();
    r.sensitivity = ci_from_json(e.at("sensitivity"));
    r.specificity = ci_from_json(e.at("specificity"));
    rows.push_back(std::move(r));
  }
  return rows;
}

ojson factors_to_json(const std::vector<FactorReport>& factors) {
  ojson out = ojson::array();
  for (const auto& f : factors) {
    ojson rows = ojson::array();
    for (const auto& r : f.rows) {
      rows.push_back({{"category", r.category},
                      {"n", r.n},
                      {"percent", r.percent},
                      {"sensitivity", ci_to_json(r.sensitivity)},
                      {"specificity", ci_to_json(r.specificity)}});
    }
    ojson table = {{"categories", f.table.categories}, {"correct", f.table.correct}, {"incorrect", f.table.incorrect}};
    ojson chi = nullptr;
    if (f.chi) chi = {{"statistic", number(f.chi->statistic)}, {"df", f.chi->df}, {"p", number(f.chi->p)}};
    ojson cv = nullptr;
    if (f.cramers) cv = {{"v", number(f.cramers->v)}, {"association", association_name(f.cramers->bucket)}};
    out.push_back({{"factor", factor_key(f.factor)},
                   {"rows", std::move(rows)},
                   {"table", std::move(table)},
                   {"chi_square", std::move(chi)},
                   {"cramers_v", std::move(cv)}});
  }
  return out;
}

std::vector<FactorReport> factors_from_json(const ojson& j) {
  std::vector<FactorReport> out;
  for (const auto& e : j) {
    FactorReport f;
    f.factor = parse_factor(e.at("factor").get<std::string>());
    for (const auto& r : e.at("rows")) {
      FactorRow row;
      row.category = r.at("category").get<std::string>();
      row.n = r.at("n").get<std::size_t>();
      row.percent = r.at("percent").get<double>();
      row.sensitivity = ci_from_json(r.at("sensitivity"));
      row.specificity = ci_from_json(r.at("specificity"));
      f.rows.push_back(std::move(row));
    }
    const auto& t = e.at("table");
    f.table.factor = std::string(factor_key(f.factor));
    f.table.categories = t.at("categories").get<std::vector<std::string>>();
    f.table.correct = t.at("correct").get<std::vector<std::uint64_t>>();
    f.table.incorrect = t.at("incorrect").get<std::vector<std::uint64_t>>();
    if (!e.at("chi_square").is_null()) {
      const auto& c = e.at("chi_square");
      f.chi = ChiSquareResult{number_from(c.at("statistic")), c.at("df").get<std::size_t>(), number_from(c.at("p"))};
    }
    if (!e.at("cramers_v").is_null()) {
      const double v = number_from(e.at("cramers_v").at("v"));
      f.cramers = CramersV{v, association_bucket(v)};
    }
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace

std::string report_to_json(const ReportData& data) {
  ojson j = {{"ct_regions", regions_to_json(data.ct_regions)},
             {"mr_regions", regions_to_json(data.mr_regions)},
             {"ct_factors", factors_to_json(data.ct_factors)},
             {"mr_factors", factors_to_json(data.mr_factors)}};
  return j.dump(2);
}

ReportData report_from_json(std::string_view json_text) {
  ReportData data;
  try {
    const auto j = ojson::parse(json_text);
    data.ct_regions = regions_from_json(j.at("ct_regions"));
    data.mr_regions = regions_from_json(j.at("mr_regions"));
    data.ct_factors = factors_from_json(j.at("ct_factors"));
    data.mr_factors = factors_from_json(j.at("mr_factors"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("report data: ") + e.what());
  }
  return data;
}

std::vector<std::filesystem::path> emit_report(const ReportData& data, const std::filesystem::path& dir,
                                               const std::vector<ReportFormat>& formats) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  auto write = [&](const std::string& stem, ReportFormat f, const std::string& body) {
    const auto path = dir / (stem + (f == ReportFormat::Csv ? ".csv" : ".md"));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << body;
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
    written.push_back(path);
  };
  for (ReportFormat f : formats) {
    write("regions", f, render_region_table(data, f));
    write("factors_ct", f, render_factor_table(data.ct_factors, f));
    write("factors_mr", f, render_factor_table(data.mr_factors, f));
  }
  return written;
}

}  // namespace bodyreg
