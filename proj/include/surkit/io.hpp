#pragma once

// File formats: annotations CSV, features JSON, fits / model-table /
// prediction CSVs, and the synthetic truth sidecar.
//
// Numbers are written in the shortest decimal form that parses back to the
// same double (std::to_chars without precision), so files are stable and
// round-trip exactly. Every parse failure is an error(errc::parse_error)
// whose message names the line (CSV) or the JSON element.

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unistd.h>
#include <utility>
#include <vector>

#include "surkit/empirical.hpp"
#include "surkit/error.hpp"
#include "surkit/features.hpp"
#include "surkit/fitting.hpp"
#include "surkit/pipeline.hpp"
#include "surkit/surmodels.hpp"

namespace surkit::io {

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// "75" for 0.75, "12.5" for 0.125: the p%SUR column stem.
inline std::string percent_label(double p) { return format_number(std::round(p * 100 * 1e9) / 1e9); }

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_field(fields[i]);
  }
  return out + "\n";
}

struct CsvLine {
  std::size_t number = 0;  // 1-based line in the file
  std::vector<std::string> fields;
};

// Splits CSV text into records (quoted fields may contain separators and
// doubled quotes). Blank lines are skipped; CRLF is accepted.
inline std::vector<CsvLine> read_csv(std::string_view text) {
  std::vector<CsvLine> rows;
  std::size_t line = 1;
  std::size_t i = 0;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;
  while (i < text.size()) {
    CsvLine row{line, {}};
    std::string field;
    bool quoted = false, any = false;
    while (i < text.size()) {
      const char ch = text[i];
      if (quoted) {
        if (ch == '"') {
          if (i + 1 < text.size() && text[i + 1] == '"') {
            field += '"';
            i += 2;
            continue;
          }
          quoted = false;
          ++i;
          continue;
        }
        if (ch == '\n') ++line;
        field += ch;
        ++i;
        continue;
      }
      if (ch == '"' && field.empty()) {
        quoted = true;
        any = true;
        ++i;
        continue;
      }
      if (ch == ',') {
        row.fields.push_back(std::move(field));
        field.clear();
        any = true;
        ++i;
        continue;
      }
      if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
        ++i;
        continue;
      }
      if (ch == '\n') {
        ++i;
        break;
      }
      field += ch;
      any = true;
      ++i;
    }
    if (quoted) throw error(errc::parse_error, "line " + std::to_string(row.number) + ": unterminated quote");
    if (any || !field.empty()) {
      row.fields.push_back(std::move(field));
      rows.push_back(std::move(row));
    }
    ++line;
  }
  return rows;
}

inline std::string line_prefix(const CsvLine& l) { return "line " + std::to_string(l.number) + ": "; }

inline void expect_header(const std::vector<CsvLine>& rows, const std::vector<std::string>& header,
                          std::string_view what) {
  if (rows.empty()) throw error(errc::parse_error, std::string(what) + ": missing header");
  if (rows.front().fields != header) {
    std::string expected;
    for (const auto& h : header) expected += (expected.empty() ? "" : ",") + h;
    throw error(errc::parse_error, "line " + std::to_string(rows.front().number) + ": expected header '" + expected + "'");
  }
}

inline double parse_double(const CsvLine& l, const std::string& s, std::string_view column) {
  double v = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && s.front() == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (s.empty() || res.ec != std::errc() || res.ptr != last) {
    throw error(errc::parse_error, line_prefix(l) + "column " + std::string(column) + ": '" + s + "' is not a number");
  }
  return v;
}

inline int parse_int(const CsvLine& l, const std::string& s, std::string_view column) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw error(errc::parse_error, line_prefix(l) + "column " + std::string(column) + ": '" + s + "' is not an integer");
  }
  return v;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error(errc::parse_error, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes to a temporary sibling, then renames over the target so readers
// never observe a partial file.
inline void atomic_write(const std::filesystem::path& path, std::string_view content) {
  const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  std::filesystem::create_directories(dir);
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

// ---------------------------------------------------------------------------
// Annotations
// ---------------------------------------------------------------------------

inline const std::vector<std::string> kAnnotationHeader{"video_id", "resolution", "subject_id", "jnd"};

// Subjects are numbered s001, s002, ... within each video.
inline std::string emit_annotations(const std::vector<JndSamples>& groups) {
  std::string out = csv_row(kAnnotationHeader);
  char id[32];
  for (const auto& g : groups) {
    for (std::size_t s = 0; s < g.samples.size(); ++s) {
      std::snprintf(id, sizeof id, "s%03zu", s + 1);
      out += csv_row({g.video_id, g.resolution, id, std::to_string(g.samples[s])});
    }
  }
  return out;
}

// Groups rows by (video_id, resolution) in order of first appearance.
inline std::vector<JndSamples> parse_annotations(std::string_view text, const DistortionGrid& grid = kQpGrid) {
  const auto rows = read_csv(text);
  expect_header(rows, kAnnotationHeader, "annotations");
  std::vector<JndSamples> groups;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  std::set<std::pair<std::string, std::string>> seen_subjects;  // (video key, subject)
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& l = rows[r];
    if (l.fields.size() != 4) {
      throw error(errc::parse_error, line_prefix(l) + "expected 4 fields, found " + std::to_string(l.fields.size()));
    }
    const auto& vid = l.fields[0];
    const auto& res = l.fields[1];
    if (vid.empty()) throw error(errc::parse_error, line_prefix(l) + "empty video_id");
    const int jnd = parse_int(l, l.fields[3], "jnd");
    if (!grid.contains(jnd)) {
      throw error(errc::parse_error, line_prefix(l) + "jnd " + std::to_string(jnd) + " outside grid [" +
                                         std::to_string(grid.min()) + ", " + std::to_string(grid.max()) + "]");
    }
    if (!seen_subjects.insert({vid + '\x1f' + res, l.fields[2]}).second) {
      throw error(errc::parse_error, line_prefix(l) + "duplicate subject '" + l.fields[2] + "' for video '" + vid +
                                         "' (" + res + ")");
    }
    const auto key = std::make_pair(vid, res);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, groups.size()).first;
      groups.push_back({vid, res, {}});
    }
    groups[it->second].samples.push_back(jnd);
  }
  return groups;
}

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

inline std::string emit_features(const FeatureSet& fs) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["grid"] = {{"min", fs.grid.min()}, {"max", fs.grid.max()}};
  j["masking_dim"] = fs.masking_dim;
  j["qd_dim"] = fs.qd_dim;
  j["videos"] = ordered_json::array();
  for (const auto& v : fs.videos) {
    ordered_json e;
    e["video_id"] = v.video_id;
    e["resolution"] = v.resolution;
    e["masking"] = v.masking;
    if (v.pvs) {
      ordered_json pvs = ordered_json::array();
      for (std::size_t i = 0; i < v.pvs->size(); ++i) pvs.push_back({{"qp", fs.grid.level(i)}, {"qd", (*v.pvs)[i]}});
      e["pvs"] = std::move(pvs);
    }
    j["videos"].push_back(std::move(e));
  }
  return j.dump(1) + "\n";
}

inline FeatureSet parse_features(std::string_view text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw error(errc::parse_error, std::string("features JSON: ") + e.what());
  }
  auto fail = [](const std::string& where, const std::string& what) {
    throw error(errc::parse_error, "features JSON " + where + ": " + what);
  };
  auto numbers = [&](const json& a, const std::string& where) {
    if (!a.is_array()) fail(where, "expected an array of numbers");
    std::vector<double> out;
    for (const auto& x : a) {
      if (!x.is_number()) fail(where, "expected an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  };
  auto integer = [&](const json& obj, const char* key, const std::string& where) -> long long {
    if (!obj.is_object() || !obj.contains(key) || !obj[key].is_number_integer()) fail(where, std::string("missing integer '") + key + "'");
    return obj[key].get<long long>();
  };
  auto text_field = [&](const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key) || !obj[key].is_string()) fail(where, std::string("missing string '") + key + "'");
    return obj[key].get<std::string>();
  };

  FeatureSet fs;
  if (!j.is_object()) fail("", "top level must be an object");
  if (!j.contains("grid")) fail("", "missing 'grid'");
  try {
    fs.grid = DistortionGrid(static_cast<int>(integer(j["grid"], "min", "grid")), static_cast<int>(integer(j["grid"], "max", "grid")));
  } catch (const error& e) {
    if (e.code() == errc::parse_error) throw;
    fail("grid", e.what());
  }
  const long long h = integer(j, "masking_dim", "");
  const long long d = integer(j, "qd_dim", "");
  if (h < 0 || d < 0) fail("", "dimensions must be non-negative");
  fs.masking_dim = static_cast<std::size_t>(h);
  fs.qd_dim = static_cast<std::size_t>(d);
  if (!j.contains("videos") || !j["videos"].is_array()) fail("", "missing 'videos' array");
  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t k = 0; k < j["videos"].size(); ++k) {
    const auto& e = j["videos"][k];
    const std::string where = "videos[" + std::to_string(k) + "]";
    if (!e.is_object()) fail(where, "expected an object");
    FeatureRecord rec;
    rec.video_id = text_field(e, "video_id", where);
    rec.resolution = text_field(e, "resolution", where);
    if (!seen.insert({rec.video_id, rec.resolution}).second) fail(where, "duplicate video '" + rec.video_id + "' (" + rec.resolution + ")");
    if (!e.contains("masking")) fail(where, "missing 'masking'");
    rec.masking = numbers(e["masking"], where + ".masking");
    if (rec.masking.size() != fs.masking_dim) {
      fail(where + ".masking", std::to_string(rec.masking.size()) + " entries, masking_dim is " + std::to_string(fs.masking_dim));
    }
    if (e.contains("pvs") && !e["pvs"].is_null()) {
      const auto& pvs = e["pvs"];
      if (!pvs.is_array()) fail(where + ".pvs", "expected an array");
      std::vector<std::vector<double>> blocks(fs.grid.size());
      std::vector<bool> filled(fs.grid.size(), false);
      for (std::size_t q = 0; q < pvs.size(); ++q) {
        const std::string w = where + ".pvs[" + std::to_string(q) + "]";
        const long long qp = integer(pvs[q], "qp", w);
        if (qp < fs.grid.min() || qp > fs.grid.max()) fail(w, "qp " + std::to_string(qp) + " is off the grid");
        const auto idx = fs.grid.index(static_cast<int>(qp));
        if (filled[idx]) fail(w, "qp " + std::to_string(qp) + " listed twice");
        if (!pvs[q].contains("qd")) fail(w, "missing 'qd'");
        blocks[idx] = numbers(pvs[q]["qd"], w + ".qd");
        if (blocks[idx].size() != fs.qd_dim) {
          fail(w + ".qd", std::to_string(blocks[idx].size()) + " entries, qd_dim is " + std::to_string(fs.qd_dim));
        }
        filled[idx] = true;
      }
      for (std::size_t idx = 0; idx < filled.size(); ++idx) {
        if (!filled[idx]) fail(where + ".pvs", "qp " + std::to_string(fs.grid.level(idx)) + " is missing");
      }
      rec.pvs = std::move(blocks);
    }
    fs.videos.push_back(std::move(rec));
  }
  return fs;
}

// ---------------------------------------------------------------------------
// Fits and model table
// ---------------------------------------------------------------------------

inline std::string sur_column(double p, std::string_view suffix) { return "d" + percent_label(p) + "sur_" + std::string(suffix); }

inline std::vector<std::string> fits_header(double p) {
  std::vector<std::string> h{"video_id", "resolution", "model", "converged"};
  for (std::size_t k = 0; k < kMaxParams; ++k) h.push_back("p" + std::to_string(k));
  h.insert(h.end(), {"mae", "rmse", sur_column(p, "ea")});
  return h;
}

inline std::string emit_fits(const std::vector<FitResult>& fits, double p = 0.75) {
  std::string out = csv_row(fits_header(p));
  for (const auto& f : fits) {
    std::vector<std::string> row{f.video_id, f.resolution, std::string(family_name(f.family())), f.converged ? "true" : "false"};
    for (std::size_t k = 0; k < kMaxParams; ++k) row.push_back(k < f.model.params.size() ? format_number(f.model.params[k]) : "");
    row.insert(row.end(), {format_number(f.mae), format_number(f.rmse), format_number(f.delta_p_sur_ea)});
    out += csv_row(row);
  }
  return out;
}

inline std::vector<FitResult> parse_fits(std::string_view text) {
  const auto rows = read_csv(text);
  if (rows.empty()) throw error(errc::parse_error, "fits: missing header");
  const auto& header = rows.front().fields;
  // The last column carries the threshold, e.g. d75sur_ea.
  double p = 0.75;
  if (header.size() == 4 + kMaxParams + 3) {
    const auto& last = header.back();
    if (last.size() > 8 && last.front() == 'd' && last.ends_with("sur_ea")) {
      const std::string pct = last.substr(1, last.size() - 7);
      p = parse_double(rows.front(), pct, "header") / 100.0;
    }
  }
  expect_header(rows, fits_header(p), "fits");
  std::vector<FitResult> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& l = rows[r];
    if (l.fields.size() != header.size()) {
      throw error(errc::parse_error, line_prefix(l) + "expected " + std::to_string(header.size()) + " fields, found " +
                                         std::to_string(l.fields.size()));
    }
    FitResult f;
    f.video_id = l.fields[0];
    f.resolution = l.fields[1];
    const auto family = parse_family(l.fields[2]);
    if (!family) throw error(errc::parse_error, line_prefix(l) + "unknown model '" + l.fields[2] + "'");
    f.model.family = *family;
    if (l.fields[3] == "true" || l.fields[3] == "1") f.converged = true;
    else if (l.fields[3] == "false" || l.fields[3] == "0") f.converged = false;
    else throw error(errc::parse_error, line_prefix(l) + "column converged: '" + l.fields[3] + "' is not a boolean");
    for (std::size_t k = 0; k < param_count(*family); ++k) {
      f.model.params.push_back(parse_double(l, l.fields[4 + k], "p" + std::to_string(k)));
    }
    f.mae = parse_double(l, l.fields[4 + kMaxParams], "mae");
    f.rmse = parse_double(l, l.fields[5 + kMaxParams], "rmse");
    f.delta_p_sur_ea = parse_double(l, l.fields[6 + kMaxParams], header.back());
    f.p = p;
    f.status = f.converged ? FitStatus::ok : FitStatus::did_not_converge;
    out.push_back(std::move(f));
  }
  return out;
}

inline std::string emit_model_table(const std::vector<ModelTableRow>& rows, double p = 0.75) {
  std::string out = csv_row({"model", "mae", "rmse", sur_column(p, "ea")});
  for (const auto& r : rows) {
    out += csv_row({std::string(family_name(r.family)), format_number(r.mae), format_number(r.rmse),
                    format_number(r.delta_p_sur_ea)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prediction reports
// ---------------------------------------------------------------------------

inline std::string emit_report(const PredictionReport& report, double p = 0.75) {
  std::string out = csv_row({"resolution", "model", "n_videos", "dsur_pa", "dsur_pe", sur_column(p, "pa"),
                             sur_column(p, "pe"), "monotonicity_violations"});
  for (const auto& r : report.rows) {
    out += csv_row({r.resolution, r.model, std::to_string(r.n_videos), format_number(r.means.d_sur_pa),
                    format_number(r.means.d_sur_pe), format_number(r.means.d_psur_pa), format_number(r.means.d_psur_pe),
                    std::to_string(r.violating_curves)});
  }
  return out;
}

inline std::string emit_report_videos(const PredictionReport& report, double p = 0.75) {
  const std::string pct = percent_label(p);
  std::string out = csv_row({"video_id", "resolution", "model", "fold", "dsur_pa", "dsur_pe", sur_column(p, "pa"),
                             sur_column(p, "pe"), "p" + pct + "sur_pred", "p" + pct + "sur_analytic",
                             "p" + pct + "sur_emp", "increases"});
  for (const auto& v : report.videos) {
    out += csv_row({v.video_id, v.resolution, v.model, std::to_string(v.fold), format_number(v.metrics.d_sur_pa),
                    format_number(v.metrics.d_sur_pe), format_number(v.metrics.d_psur_pa),
                    format_number(v.metrics.d_psur_pe), std::to_string(v.predicted_p_sur),
                    std::to_string(v.analytic_p_sur), std::to_string(v.empirical_p_sur), std::to_string(v.increases)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic ground truth sidecar
// ---------------------------------------------------------------------------

struct TruthRow {
  std::string video_id;
  std::string resolution;
  SurModel model;

  friend bool operator==(const TruthRow&, const TruthRow&) = default;
};

inline std::string emit_truth(const std::vector<TruthRow>& rows) {
  std::vector<std::string> header{"video_id", "resolution", "family"};
  for (std::size_t k = 0; k < kMaxParams; ++k) header.push_back("p" + std::to_string(k));
  std::string out = csv_row(header);
  for (const auto& t : rows) {
    std::vector<std::string> row{t.video_id, t.resolution, std::string(family_name(t.model.family))};
    for (std::size_t k = 0; k < kMaxParams; ++k) row.push_back(k < t.model.params.size() ? format_number(t.model.params[k]) : "");
    out += csv_row(row);
  }
  return out;
}

inline std::vector<TruthRow> parse_truth(std::string_view text) {
  const auto rows = read_csv(text);
  std::vector<std::string> header{"video_id", "resolution", "family"};
  for (std::size_t k = 0; k < kMaxParams; ++k) header.push_back("p" + std::to_string(k));
  expect_header(rows, header, "truth");
  std::vector<TruthRow> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& l = rows[r];
    if (l.fields.size() != header.size()) throw error(errc::parse_error, line_prefix(l) + "wrong number of fields");
    const auto family = parse_family(l.fields[2]);
    if (!family) throw error(errc::parse_error, line_prefix(l) + "unknown family '" + l.fields[2] + "'");
    TruthRow t{l.fields[0], l.fields[1], {*family, {}}};
    for (std::size_t k = 0; k < param_count(*family); ++k) t.model.params.push_back(parse_double(l, l.fields[3 + k], "p" + std::to_string(k)));
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace surkit::io
