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

// Run configuration: an INI document with [general], [simulate], [fit],
// [analyze], [verify] and [compare] sections. Whole-line comments start with
// ';' or '#'. Lists are comma separated, matrices separate rows with ';'.
// Unknown sections and keys are rejected.

#ifndef FJLAB_CONFIG_HPP_
#define FJLAB_CONFIG_HPP_

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fjlab/domain.hpp"
#include "fjlab/estimation.hpp"
#include "fjlab/io.hpp"
#include "fjlab/metrics.hpp"

namespace fjlab {

struct SimulateConfig {
  std::string source = "random";  // random | exclusive | imperfect | explicit
  int samples = 20;
  int pools = 1;  // independent generators; samples are split evenly
  int n = 5;
  int d = 4;
  int rounds = 5;
  std::string gamma_mode = "random";  // random | confidence
  double gamma_min = 0.05;
  double gamma_max = 0.95;
  double alpha_min = 0.05;
  double alpha_max = 0.95;
  // Scenario sources.
  double epsilon = 0.1;
  std::optional<Vector> rho;
  double p = 0.9;
  double u = 0.05;
  double c = 0.7;
  // Explicit source.
  std::optional<Vector> gamma;
  std::optional<Vector> alpha;
  std::optional<Matrix> w;
  std::optional<Matrix> innate;
  std::optional<int> label;
};

struct AnalyzeConfig {
  std::optional<Vector> eta;  // uniform when absent
  InfluenceNormalization normalization = InfluenceNormalization::kMax;
  double consensus_threshold = 0.05;
};

struct VerifyConfig {
  int exclusive_n = 5;
  int exclusive_d = 10;
  double epsilon = 0.1;
  int imperfect_n = 5;
  int imperfect_d = 4;
  double p = 0.9;
  double u = 0.05;
  double c = 0.7;
  int mc_samples = 100000;
  int random_draws = 1000;
  int known_law_samples = 500;
  double beta = 1.0;
  double tolerance = 0.01;  // Monte Carlo vs closed form
};

struct CompareConfig {
  Objective objective = Objective::kKL;
  std::optional<Vector> eta;
};

struct RunConfig {
  std::uint64_t seed = 0;
  SimulateConfig simulate;
  FitConfig fit;
  bool fit_global = false;
  AnalyzeConfig analyze;
  VerifyConfig verify;
  CompareConfig compare;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

[[noreturn]] inline void config_fail(const std::string& key, const std::string& why) {
  throw Error(ErrorCode::kConfigError, key + ": " + why);
}

inline double parse_double(const std::string& raw, const std::string& key) {
  const std::string s = trim(raw);
  double x = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
    config_fail(key, "'" + raw + "' is not a number");
  }
  return x;
}

inline long long parse_integer(const std::string& raw, const std::string& key) {
  const std::string s = trim(raw);
  long long x = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
    config_fail(key, "'" + raw + "' is not an integer");
  }
  return x;
}

inline bool parse_bool(const std::string& raw, const std::string& key) {
  const std::string s = trim(raw);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  config_fail(key, "'" + raw + "' is not a boolean");
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline Vector parse_list(const std::string& raw, const std::string& key) {
  const auto parts = split(raw, ',');
  if (parts.empty()) config_fail(key, "empty list");
  Vector v(static_cast<int>(parts.size()));
  for (std::size_t k = 0; k < parts.size(); ++k) {
    v[static_cast<int>(k)] = parse_double(parts[k], key);
  }
  return v;
}

inline Matrix parse_matrix(const std::string& raw, const std::string& key) {
  const auto rows = split(raw, ';');
  if (rows.empty()) config_fail(key, "empty matrix");
  std::vector<Vector> parsed;
  for (const auto& r : rows) parsed.push_back(parse_list(r, key));
  Matrix m(static_cast<int>(parsed.size()), parsed.front().size());
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    if (parsed[i].size() != m.cols()) config_fail(key, "rows differ in length");
    m.row(static_cast<int>(i)) = parsed[i].transpose();
  }
  return m;
}

inline Objective parse_objective(const std::string& raw, const std::string& key) {
  const std::string s = trim(raw);
  if (s == "KL" || s == "kl") return Objective::kKL;
  if (s == "MSE" || s == "mse") return Objective::kMSE;
  config_fail(key, "objective must be KL or MSE");
}

inline std::optional<Vector> parse_eta(const std::string& raw, const std::string& key) {
  if (trim(raw) == "uniform") return std::nullopt;
  return parse_list(raw, key);
}

inline int to_int(long long x, const std::string& key) {
  if (x < -2147483647LL || x > 2147483647LL) config_fail(key, "out of range");
  return static_cast<int>(x);
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

inline const std::map<std::string, std::map<std::string, Setter>>& config_schema() {
  using R = RunConfig;
  using S = const std::string&;
  static const std::map<std::string, std::map<std::string, Setter>> schema = {
      {"general",
       {{"seed", [](R& c, S v, S k) { c.seed = static_cast<std::uint64_t>(parse_integer(v, k)); }}}},
      {"simulate",
       {{"source", [](R& c, S v, S) { c.simulate.source = trim(v); }},
        {"samples", [](R& c, S v, S k) { c.simulate.samples = to_int(parse_integer(v, k), k); }},
        {"pools", [](R& c, S v, S k) { c.simulate.pools = to_int(parse_integer(v, k), k); }},
        {"n", [](R& c, S v, S k) { c.simulate.n = to_int(parse_integer(v, k), k); }},
        {"d", [](R& c, S v, S k) { c.simulate.d = to_int(parse_integer(v, k), k); }},
        {"rounds", [](R& c, S v, S k) { c.simulate.rounds = to_int(parse_integer(v, k), k); }},
        {"gamma_mode", [](R& c, S v, S) { c.simulate.gamma_mode = trim(v); }},
        {"gamma_min", [](R& c, S v, S k) { c.simulate.gamma_min = parse_double(v, k); }},
        {"gamma_max", [](R& c, S v, S k) { c.simulate.gamma_max = parse_double(v, k); }},
        {"alpha_min", [](R& c, S v, S k) { c.simulate.alpha_min = parse_double(v, k); }},
        {"alpha_max", [](R& c, S v, S k) { c.simulate.alpha_max = parse_double(v, k); }},
        {"epsilon", [](R& c, S v, S k) { c.simulate.epsilon = parse_double(v, k); }},
        {"rho", [](R& c, S v, S k) { c.simulate.rho = parse_list(v, k); }},
        {"p", [](R& c, S v, S k) { c.simulate.p = parse_double(v, k); }},
        {"u", [](R& c, S v, S k) { c.simulate.u = parse_double(v, k); }},
        {"c", [](R& c, S v, S k) { c.simulate.c = parse_double(v, k); }},
        {"gamma", [](R& c, S v, S k) { c.simulate.gamma = parse_list(v, k); }},
        {"alpha", [](R& c, S v, S k) { c.simulate.alpha = parse_list(v, k); }},
        {"w", [](R& c, S v, S k) { c.simulate.w = parse_matrix(v, k); }},
        {"innate", [](R& c, S v, S k) { c.simulate.innate = parse_matrix(v, k); }},
        {"label", [](R& c, S v, S k) { c.simulate.label = to_int(parse_integer(v, k), k); }}}},
      {"fit",
       {{"objective", [](R& c, S v, S k) { c.fit.objective = parse_objective(v, k); }},
        {"max_iters", [](R& c, S v, S k) { c.fit.max_iters = to_int(parse_integer(v, k), k); }},
        {"step_size", [](R& c, S v, S k) { c.fit.step_size = parse_double(v, k); }},
        {"restarts", [](R& c, S v, S k) { c.fit.restarts = to_int(parse_integer(v, k), k); }},
        {"reg_lambda", [](R& c, S v, S k) { c.fit.reg_lambda = parse_double(v, k); }},
        {"seed", [](R& c, S v, S k) { c.fit.seed = static_cast<std::uint64_t>(parse_integer(v, k)); }},
        {"tol", [](R& c, S v, S k) { c.fit.tol = parse_double(v, k); }},
        {"global", [](R& c, S v, S k) { c.fit_global = parse_bool(v, k); }}}},
      {"analyze",
       {{"eta", [](R& c, S v, S k) { c.analyze.eta = parse_eta(v, k); }},
        {"normalization",
         [](R& c, S v, S k) {
           const std::string s = trim(v);
           if (s == "max") {
             c.analyze.normalization = InfluenceNormalization::kMax;
           } else if (s == "second_largest") {
             c.analyze.normalization = InfluenceNormalization::kSecondLargest;
           } else {
             config_fail(k, "normalization must be max or second_largest");
           }
         }},
        {"consensus_threshold",
         [](R& c, S v, S k) { c.analyze.consensus_threshold = parse_double(v, k); }}}},
      {"verify",
       {{"exclusive_n", [](R& c, S v, S k) { c.verify.exclusive_n = to_int(parse_integer(v, k), k); }},
        {"exclusive_d", [](R& c, S v, S k) { c.verify.exclusive_d = to_int(parse_integer(v, k), k); }},
        {"epsilon", [](R& c, S v, S k) { c.verify.epsilon = parse_double(v, k); }},
        {"imperfect_n", [](R& c, S v, S k) { c.verify.imperfect_n = to_int(parse_integer(v, k), k); }},
        {"imperfect_d", [](R& c, S v, S k) { c.verify.imperfect_d = to_int(parse_integer(v, k), k); }},
        {"p", [](R& c, S v, S k) { c.verify.p = parse_double(v, k); }},
        {"u", [](R& c, S v, S k) { c.verify.u = parse_double(v, k); }},
        {"c", [](R& c, S v, S k) { c.verify.c = parse_double(v, k); }},
        {"mc_samples", [](R& c, S v, S k) { c.verify.mc_samples = to_int(parse_integer(v, k), k); }},
        {"random_draws", [](R& c, S v, S k) { c.verify.random_draws = to_int(parse_integer(v, k), k); }},
        {"known_law_samples",
         [](R& c, S v, S k) { c.verify.known_law_samples = to_int(parse_integer(v, k), k); }},
        {"beta", [](R& c, S v, S k) { c.verify.beta = parse_double(v, k); }},
        {"tolerance", [](R& c, S v, S k) { c.verify.tolerance = parse_double(v, k); }}}},
      {"compare",
       {{"objective", [](R& c, S v, S k) { c.compare.objective = parse_objective(v, k); }},
        {"eta", [](R& c, S v, S k) { c.compare.eta = parse_eta(v, k); }}}},
  };
  return schema;
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text, const std::string& source = "config") {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorCode::kConfigError, source + ": " + e.message() + " at line " +
                                             std::to_string(e.line()));
  }
  RunConfig cfg;
  const auto& schema = detail::config_schema();
  for (const auto& [section, body] : tree) {
    const auto sec = schema.find(section);
    if (sec == schema.end() || !body.data().empty()) {
      throw Error(ErrorCode::kConfigError,
                  source + ": unknown section or top-level key '" + section + "'");
    }
    for (const auto& [key, value] : body) {
      const auto setter = sec->second.find(key);
      if (setter == sec->second.end()) {
        throw Error(ErrorCode::kConfigError, source + ": unknown key '" + section + "." + key + "'");
      }
      setter->second(cfg, value.get_value<std::string>(), section + "." + key);
    }
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.string());
}

}  // namespace fjlab

#endif  // FJLAB_CONFIG_HPP_
