/*
 * Copyright 2026 The fjlab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// File formats.
//
// Trajectory file (JSON, schema_version "1"):
//   {"schema_version": "1",
//    "samples": [{"sample_id": str, "n": int, "d": int,
//                 "rounds": [n x d matrix, ...],      // row-major, round 0 first
//                 "correct_label": int,               // optional
//                 "label_names": [str, ...],          // optional
//                 "metadata": {str: str}}]}           // optional
// Rows must sum to 1 within 1e-6; they are renormalized on load and the
// drift is reported.
//
// Fit file (JSON, schema_version "1"): {"objective", "mode", "fits": [...]}
// where each fit holds sample_id, gamma, alpha, w, mask and its errors.
//
// CSV output follows RFC 4180 (CRLF line ends, quoted fields where needed)
// and formats numbers with std::to_chars, so it never depends on the locale.

#ifndef FJLAB_IO_HPP_
#define FJLAB_IO_HPP_

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include <unistd.h>

#include "fjlab/domain.hpp"
#include "fjlab/estimation.hpp"
#include <nlohmann/json.hpp>

namespace fjlab {

using Json = nlohmann::ordered_json;

inline constexpr const char* kSchemaVersion = "1";
inline constexpr double kIngestTol = 1e-6;

// ---- atomic file output ----------------------------------------------------

// Writes to a sibling temporary file, then renames over the target.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  const fs::path tmp =
      path.string() + ".tmp." + std::to_string(static_cast<long>(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::kIoError, "write to " + tmp.string() + " failed");
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::kIoError, "cannot move output into " + path.string());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// ---- numbers and CSV -------------------------------------------------------

// Shortest decimal that round-trips; '.' decimal point regardless of locale.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (x == 0.0) return "0";  // folds -0
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
    append(header);
  }

  void row(const std::vector<std::string>& fields) {
    if (fields.size() != columns_) {
      throw Error(ErrorCode::kInvariantViolation,
                  "CSV row has " + std::to_string(fields.size()) + " fields, header has " +
                      std::to_string(columns_));
    }
    append(fields);
  }

  const std::string& str() const { return text_; }

 private:
  void append(const std::vector<std::string>& fields) {
    for (std::size_t k = 0; k < fields.size(); ++k) {
      if (k > 0) text_ += ',';
      text_ += csv_escape(fields[k]);
    }
    text_ += "\r\n";
  }

  std::size_t columns_;
  std::string text_;
};

// Minimal RFC 4180 reader, used to check emitted tables.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t k = 0; k < text.size(); ++k) {
    const char ch = text[k];
    if (quoted) {
      if (ch == '"' && k + 1 < text.size() && text[k + 1] == '"') {
        field += '"';
        ++k;
      } else if (ch == '"') {
        quoted = false;
      } else {
        field += ch;
      }
      continue;
    }
    any = true;
    if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (ch == '\r' || ch == '\n') {
      if (ch == '\r' && k + 1 < text.size() && text[k + 1] == '\n') ++k;
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field += ch;
    }
  }
  if (quoted) throw Error(ErrorCode::kParseError, "unterminated quoted CSV field");
  if (any || !field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---- trajectory file --------------------------------------------------------

struct RowDrift {
  std::string sample_id;
  int round = 0;
  int agent = 0;
  double drift = 0.0;  // |row sum - 1| before renormalization
};

struct IngestReport {
  std::size_t rows = 0;
  std::vector<RowDrift> renormalized;  // rows whose sum was not exactly 1
  double max_drift = 0.0;
};

namespace detail {

[[noreturn]] inline void parse_fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::kParseError, where + ": " + what);
}

template <typename T>
T get_field(const Json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) parse_fail(where, std::string("missing field '") + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    parse_fail(where, std::string("field '") + key + "' has the wrong type");
  }
}

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (int i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Vector vector_from_json(const Json& j, const std::string& where) {
  if (!j.is_array()) parse_fail(where, "expected an array of numbers");
  Vector v(static_cast<int>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) parse_fail(where, "expected an array of numbers");
    v[static_cast<int>(k)] = j[k].get<double>();
  }
  return v;
}

inline Matrix matrix_from_json(const Json& j, int rows, int cols, const std::string& where) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows) {
    throw Error(ErrorCode::kInvariantViolation,
                where + ": expected " + std::to_string(rows) + " rows");
  }
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<int>(row.size()) != cols) {
      throw Error(ErrorCode::kInvariantViolation,
                  where + ", row " + std::to_string(i) + ": expected " +
                      std::to_string(cols) + " entries");
    }
    for (int c = 0; c < cols; ++c) {
      const Json& x = row[static_cast<std::size_t>(c)];
      if (!x.is_number()) parse_fail(where, "non-numeric entry");
      m(i, c) = x.get<double>();
    }
  }
  return m;
}

inline Json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParseError, source + ": " + e.what());
  }
}

inline void require_schema(const Json& doc, const std::string& source) {
  if (!doc.is_object()) parse_fail(source, "top level must be an object");
  if (!doc.contains("schema_version") || !doc["schema_version"].is_string()) {
    throw Error(ErrorCode::kSchemaVersionUnsupported, source + ": missing schema_version");
  }
  const std::string v = doc["schema_version"].get<std::string>();
  if (v != kSchemaVersion) {
    throw Error(ErrorCode::kSchemaVersionUnsupported,
                source + ": schema_version '" + v + "' is not supported (expected '1')");
  }
}

}  // namespace detail

inline Json trajectories_to_json(const std::vector<DeliberationTrajectory>& trajs) {
  Json samples = Json::array();
  for (const auto& t : trajs) {
    Json s;
    s["sample_id"] = t.sample_id();
    s["n"] = t.n();
    s["d"] = t.d();
    Json rounds = Json::array();
    for (const auto& snap : t.snapshots()) rounds.push_back(detail::matrix_to_json(snap.matrix()));
    s["rounds"] = std::move(rounds);
    if (t.correct_label()) s["correct_label"] = *t.correct_label();
    if (!t.label_names().empty()) s["label_names"] = t.label_names();
    Json meta = Json::object();
    for (const auto& [k, v] : t.metadata()) meta[k] = v;
    s["metadata"] = std::move(meta);
    samples.push_back(std::move(s));
  }
  Json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["samples"] = std::move(samples);
  return doc;
}

inline std::vector<DeliberationTrajectory> trajectories_from_json(const Json& doc,
                                                                   const std::string& source,
                                                                   IngestReport* report = nullptr) {
  detail::require_schema(doc, source);
  if (!doc.contains("samples") || !doc["samples"].is_array()) {
    detail::parse_fail(source, "missing 'samples' array");
  }
  IngestReport local;
  std::vector<DeliberationTrajectory> out;
  std::size_t index = 0;
  for (const Json& s : doc["samples"]) {
    const std::string where = source + ", sample #" + std::to_string(index++);
    if (!s.is_object()) detail::parse_fail(where, "sample must be an object");
    const auto id = detail::get_field<std::string>(s, "sample_id", where);
    const std::string at = "sample '" + id + "'";
    const int n = detail::get_field<int>(s, "n", at);
    const int d = detail::get_field<int>(s, "d", at);
    if (n < 1 || d < 2) throw Error(ErrorCode::kInvariantViolation, at + ": needs n >= 1, d >= 2");
    if (!s.contains("rounds") || !s["rounds"].is_array() || s["rounds"].empty()) {
      throw Error(ErrorCode::kInvariantViolation, at + ": needs at least one round");
    }
    std::vector<BeliefSnapshot> snaps;
    int round = 0;
    for (const Json& r : s["rounds"]) {
      const std::string rw = at + ", round " + std::to_string(round);
      Matrix m = detail::matrix_from_json(r, n, d, rw);
      for (int i = 0; i < n; ++i) {
        const std::string cell = rw + ", agent " + std::to_string(i);
        for (int c = 0; c < d; ++c) {
          if (!std::isfinite(m(i, c))) {
            throw Error(ErrorCode::kInvariantViolation, cell + ", entry " + std::to_string(c) +
                                                            ": non-finite value");
          }
          if (m(i, c) < -kSimplexTol) {
            throw Error(ErrorCode::kInvariantViolation,
                        cell + ", entry " + std::to_string(c) + ": negative value " +
                            format_number(m(i, c)));
          }
          if (m(i, c) < 0.0) m(i, c) = 0.0;
        }
        const double sum = m.row(i).sum();
        const double drift = std::abs(sum - 1.0);
        if (drift > kIngestTol) {
          throw Error(ErrorCode::kInvariantViolation,
                      cell + ": row sums to " + format_number(sum) + " (tolerance 1e-6)");
        }
        ++local.rows;
        if (drift > 0.0) {
          Vector row = m.row(i).transpose();
          detail::renormalize_in_place(row);
          m.row(i) = row.transpose();
          local.renormalized.push_back(RowDrift{id, round, i, drift});
          local.max_drift = std::max(local.max_drift, drift);
        }
      }
      snaps.emplace_back(std::move(m));
      ++round;
    }
    std::optional<int> label;
    if (s.contains("correct_label") && !s["correct_label"].is_null()) {
      label = detail::get_field<int>(s, "correct_label", at);
    }
    std::vector<std::string> names;
    if (s.contains("label_names")) {
      names = detail::get_field<std::vector<std::string>>(s, "label_names", at);
    }
    std::map<std::string, std::string> meta;
    if (s.contains("metadata")) {
      meta = detail::get_field<std::map<std::string, std::string>>(s, "metadata", at);
    }
    out.emplace_back(std::move(snaps), id, label, std::move(meta), std::move(names));
  }
  if (report != nullptr) *report = std::move(local);
  return out;
}

inline std::vector<DeliberationTrajectory> load_trajectories(const std::filesystem::path& path,
                                                             IngestReport* report = nullptr) {
  const Json doc = detail::parse_json_text(read_file(path), path.string());
  return trajectories_from_json(doc, path.string(), report);
}

inline void save_trajectories(const std::filesystem::path& path,
                              const std::vector<DeliberationTrajectory>& trajs) {
  write_file_atomic(path, trajectories_to_json(trajs).dump(1) + "\n");
}

// ---- fit file ---------------------------------------------------------------

struct FitRecord {
  std::string sample_id;  // "*" for a global fit
  FitReport report;
};

struct FitFile {
  std::string objective = "KL";
  std::string mode = "per_sample";  // or "global"
  std::vector<FitRecord> fits;

  // Per-sample parameters, falling back to a global fit.
  const FitReport* find(const std::string& sample_id) const {
    const FitReport* global = nullptr;
    for (const auto& f : fits) {
      if (f.sample_id == sample_id) return &f.report;
      if (f.sample_id == "*") global = &f.report;
    }
    return global;
  }
};

inline Json params_to_json(const FJParameters& p) {
  Json j;
  j["gamma"] = std::vector<double>(p.gamma().data(), p.gamma().data() + p.n());
  j["alpha"] = std::vector<double>(p.alpha().data(), p.alpha().data() + p.n());
  j["w"] = detail::matrix_to_json(p.w());
  Json mask = Json::array();
  for (int i = 0; i < p.n(); ++i) {
    Json row = Json::array();
    for (int k = 0; k < p.n(); ++k) row.push_back(p.mask()(i, k) ? 1 : 0);
    mask.push_back(std::move(row));
  }
  j["mask"] = std::move(mask);
  return j;
}

inline FJParameters params_from_json(const Json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("gamma") || !j.contains("alpha") || !j.contains("w")) {
    throw Error(ErrorCode::kMissingParams, where + ": needs gamma, alpha and w");
  }
  const Vector gamma = detail::vector_from_json(j["gamma"], where + ", gamma");
  const Vector alpha = detail::vector_from_json(j["alpha"], where + ", alpha");
  const int n = static_cast<int>(gamma.size());
  const Matrix w = detail::matrix_from_json(j["w"], n, n, where + ", w");
  Mask mask = complete_mask(n);
  if (j.contains("mask")) {
    const Matrix m = detail::matrix_from_json(j["mask"], n, n, where + ", mask");
    mask = (m.array() != 0.0);
  }
  return FJParameters(gamma, alpha, w, mask);
}

inline Json fit_file_to_json(const FitFile& file) {
  Json fits = Json::array();
  for (const auto& rec : file.fits) {
    Json f;
    f["sample_id"] = rec.sample_id;
    f["params"] = params_to_json(rec.report.params);
    f["kl"] = rec.report.kl;
    f["mse"] = rec.report.mse;
    f["objective"] = rec.report.objective;
    f["restart_index"] = rec.report.restart_index;
    f["iterations"] = rec.report.iterations;
    f["flat"] = rec.report.flat;
    f["objective_curve_length"] = rec.report.objective_curve.size();
    fits.push_back(std::move(f));
  }
  Json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["objective"] = file.objective;
  doc["mode"] = file.mode;
  doc["fits"] = std::move(fits);
  return doc;
}

inline FitFile load_fit_file(const std::filesystem::path& path) {
  const std::string source = path.string();
  const Json doc = detail::parse_json_text(read_file(path), source);
  detail::require_schema(doc, source);
  FitFile file;
  file.objective = detail::get_field<std::string>(doc, "objective", source);
  file.mode = detail::get_field<std::string>(doc, "mode", source);
  if (!doc.contains("fits") || !doc["fits"].is_array()) {
    throw Error(ErrorCode::kMissingParams, source + ": no 'fits' array");
  }
  for (const Json& f : doc["fits"]) {
    const auto id = detail::get_field<std::string>(f, "sample_id", source);
    if (!f.contains("params")) {
      throw Error(ErrorCode::kMissingParams, source + ": fit '" + id + "' has no params");
    }
    FitRecord rec{id, FitReport(params_from_json(f["params"], "fit '" + id + "'"))};
    rec.report.kl = detail::get_field<double>(f, "kl", id);
    rec.report.mse = detail::get_field<double>(f, "mse", id);
    rec.report.objective = f.value("objective", 0.0);
    rec.report.restart_index = f.value("restart_index", 0);
    rec.report.iterations = f.value("iterations", 0);
    rec.report.flat = f.value("flat", false);
    file.fits.push_back(std::move(rec));
  }
  return file;
}

inline void save_fit_file(const std::filesystem::path& path, const FitFile& file) {
  write_file_atomic(path, fit_file_to_json(file).dump(1) + "\n");
}

}  // namespace fjlab

#endif  // FJLAB_IO_HPP_
