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

// The command pipeline behind the fjlab tool: simulate, fit, analyze,
// verify, compare. Each command has a pure run_* function returning its
// results and a cmd_* wrapper that writes the output files.
//
// Output files (all written atomically into the output directory):
//   simulate  trajectories.json
//   fit       fit.json, fit_samples.csv, fit_aggregate.csv, variability.csv
//   analyze   agents.csv, systems.csv, correlations.csv
//   verify    verify_report.txt, verify_report.json
//   compare   compare.csv, compare_summary.csv

#ifndef FJLAB_COMMANDS_HPP_
#define FJLAB_COMMANDS_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fjlab/config.hpp"
#include "fjlab/domain.hpp"
#include "fjlab/dynamics.hpp"
#include "fjlab/estimation.hpp"
#include "fjlab/io.hpp"
#include "fjlab/metrics.hpp"
#include "fjlab/random.hpp"
#include "fjlab/routing.hpp"
#include "fjlab/scenarios.hpp"

namespace fjlab {

namespace fs = std::filesystem;

struct CommandContext {
  RunConfig config;
  fs::path output_dir = ".";
  bool quiet = false;
  std::ostream* log = &std::cout;  // progress and reports; errors go to stderr

  // Progress stream; a stream without a buffer swallows output when quiet.
  std::ostream& out() const {
    static std::ostream null_stream(nullptr);
    return quiet ? null_stream : *log;
  }
};

// Random FJ parameters on the complete graph: gamma and alpha uniform in the
// given ranges, each row of W a flat Dirichlet draw over the peers.
inline FJParameters draw_parameters(CounterRng& rng, int n, double gamma_min, double gamma_max,
                                    double alpha_min, double alpha_max) {
  Vector g(n), a(n);
  Matrix w = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    g[i] = rng.uniform(gamma_min, gamma_max);
    a[i] = rng.uniform(alpha_min, alpha_max);
    if (n < 2) continue;
    for (int j = 0; j < n; ++j) {
      if (j != i) w(i, j) = rng.exponential();
    }
    w.row(i) /= w.row(i).sum();
  }
  return FJParameters(g, a, w, complete_mask(n));
}

// ---- simulate ---------------------------------------------------------------

struct SimulatedSample {
  double spectral_radius = 0.0;
  bool consensus = false;     // argmax agreement and low final disagreement
  bool argmax_agree = false;  // final argmax labels coincide
};

struct SimulateResult {
  std::vector<DeliberationTrajectory> trajectories;
  std::vector<SimulatedSample> summary;
};

namespace detail {

inline std::string padded(int k, int total) {
  std::string s = std::to_string(k);
  const std::size_t width = std::to_string(std::max(total - 1, 0)).size();
  if (s.size() < width) s.insert(0, width - s.size(), '0');
  return s;
}

// Stubbornness scaled linearly with confidence: the least confident agent
// gets lo, the most confident hi. Equal confidences all get the midpoint.
inline Vector confidence_scaled_gamma(const BeliefSnapshot& s, double lo, double hi) {
  const Vector c = confidences(s);
  const double span = c.maxCoeff() - c.minCoeff();
  if (span <= 1e-12) return Vector::Constant(s.n(), 0.5 * (lo + hi));
  return (lo + (hi - lo) * (c.array() - c.minCoeff()) / span).matrix();
}

inline bool argmax_agree(const BeliefSnapshot& s) {
  const int first = argmax_index(s.matrix().row(0).transpose());
  for (int j = 1; j < s.n(); ++j) {
    if (argmax_index(s.matrix().row(j).transpose()) != first) return false;
  }
  return true;
}

constexpr std::uint64_t kPoolStream = 0x706f6f6c00000000ULL;
constexpr std::uint64_t kInnateStream = 0x696e6e6100000000ULL;

}  // namespace detail

inline SimulateResult run_simulate(const RunConfig& cfg) {
  const SimulateConfig& sc = cfg.simulate;
  const std::uint64_t seed = cfg.seed;
  if (sc.rounds < 1) throw Error(ErrorCode::kConfigError, "simulate.rounds must be >= 1");
  if (sc.samples < 1 || sc.pools < 1 || sc.pools > sc.samples) {
    throw Error(ErrorCode::kConfigError, "need samples >= 1 and 1 <= pools <= samples");
  }
  if (sc.gamma_mode != "random" && sc.gamma_mode != "confidence") {
    throw Error(ErrorCode::kConfigError, "simulate.gamma_mode must be random or confidence");
  }
  if (!(0.0 <= sc.gamma_min && sc.gamma_min <= sc.gamma_max && sc.gamma_max <= 1.0 &&
        0.0 <= sc.alpha_min && sc.alpha_min <= sc.alpha_max && sc.alpha_max <= 1.0)) {
    throw Error(ErrorCode::kConfigError, "gamma and alpha ranges must lie in [0, 1]");
  }

  struct Draft {
    std::optional<BeliefSnapshot> innate;
    std::optional<int> label;
    std::map<std::string, std::string> meta;
    int pool = 0;
  };
  std::vector<Draft> drafts;
  std::optional<FJParameters> explicit_params;

  if (sc.source == "explicit") {
    if (!sc.gamma || !sc.alpha || !sc.w || !sc.innate) {
      throw Error(ErrorCode::kConfigError,
                  "explicit source needs simulate.gamma, alpha, w and innate");
    }
    explicit_params.emplace(*sc.gamma, *sc.alpha, *sc.w);
    drafts.push_back(Draft{BeliefSnapshot(*sc.innate), sc.label, {}, 0});
  } else {
    std::optional<LabeledSnapshotSet> scenario;
    if (sc.source == "exclusive") {
      ExclusiveScenario ex = ExclusiveScenario::balanced(sc.n, sc.d, sc.epsilon);
      if (sc.rho) ex.rho = *sc.rho;
      scenario = gen_exclusive(ex, sc.samples, seed);
    } else if (sc.source == "imperfect") {
      scenario = gen_imperfect(ImperfectScenario{sc.n, sc.d, sc.p, sc.u, sc.c}, sc.samples, seed);
    } else if (sc.source != "random") {
      throw Error(ErrorCode::kConfigError, "unknown simulate.source '" + sc.source + "'");
    }
    if (sc.n < 1 || sc.d < 2) throw Error(ErrorCode::kConfigError, "need n >= 1, d >= 2");
    for (int k = 0; k < sc.samples; ++k) {
      const int pool = static_cast<int>(static_cast<long long>(k) * sc.pools / sc.samples);
      Draft draft{std::nullopt, std::nullopt, {}, pool};
      if (scenario) {
        const LabeledItem& item = (*scenario)[static_cast<std::size_t>(k)];
        draft.innate = item.snapshot;
        draft.label = item.label;
        if (item.region) draft.meta["region"] = std::to_string(*item.region);
      } else {
        CounterRng rng(seed, detail::kInnateStream + static_cast<std::uint64_t>(k));
        Matrix m(sc.n, sc.d);
        for (int i = 0; i < sc.n; ++i) {
          for (int c = 0; c < sc.d; ++c) m(i, c) = rng.exponential();
          m.row(i) /= m.row(i).sum();
        }
        draft.innate = BeliefSnapshot(std::move(m));
        draft.label = rng.below(sc.d);
      }
      drafts.push_back(std::move(draft));
    }
  }

  std::vector<FJParameters> pool_params;
  for (int q = 0; q < sc.pools && !explicit_params; ++q) {
    CounterRng rng(seed, detail::kPoolStream + static_cast<std::uint64_t>(q));
    pool_params.push_back(
        draw_parameters(rng, sc.n, sc.gamma_min, sc.gamma_max, sc.alpha_min, sc.alpha_max));
  }

  SimulateResult result;
  const std::string prefix = sc.source == "explicit" ? "explicit-" : sc.source + "-";
  for (std::size_t k = 0; k < drafts.size(); ++k) {
    Draft& dr = drafts[k];
    FJParameters params = explicit_params ? *explicit_params : pool_params[dr.pool];
    if (!explicit_params && sc.gamma_mode == "confidence") {
      params = FJParameters(detail::confidence_scaled_gamma(*dr.innate, sc.gamma_min, sc.gamma_max),
                            params.alpha(), params.w(), params.mask());
    }
    const std::string id = prefix + detail::padded(static_cast<int>(k), static_cast<int>(drafts.size()));
    DeliberationTrajectory traj = simulate(params, *dr.innate, sc.rounds, id);
    std::map<std::string, std::string> meta = traj.metadata();
    for (auto& [key, value] : dr.meta) meta[key] = value;
    meta["pool"] = std::to_string(dr.pool);
    SimulatedSample info;
    info.spectral_radius = spectral_radius(build_h(params));
    info.consensus = consensus_reached(traj.final_snapshot(), cfg.analyze.consensus_threshold);
    info.argmax_agree = detail::argmax_agree(traj.final_snapshot());
    result.trajectories.emplace_back(traj.snapshots(), id, dr.label, std::move(meta));
    result.summary.push_back(info);
  }
  return result;
}

// Loads trajectories and echoes renormalized rows. Drift at the level of
// floating-point rounding is not reported.
inline std::vector<DeliberationTrajectory> load_logged(const CommandContext& ctx,
                                                       const fs::path& path) {
  constexpr double kReportDrift = 1e-12;
  IngestReport report;
  auto trajs = load_trajectories(path, &report);
  for (const auto& r : report.renormalized) {
    if (r.drift <= kReportDrift) continue;
    ctx.out() << "renormalized sample '" << r.sample_id << "' round " << r.round << " agent "
              << r.agent << " (drift " << format_number(r.drift) << ")\n";
  }
  if (report.max_drift > kReportDrift) {
    ctx.out() << "renormalized " << report.renormalized.size() << " of " << report.rows
              << " rows, max drift " << format_number(report.max_drift) << "\n";
  }
  return trajs;
}

inline SimulateResult cmd_simulate(const CommandContext& ctx) {
  SimulateResult res = run_simulate(ctx.config);
  save_trajectories(ctx.output_dir / "trajectories.json", res.trajectories);
  for (std::size_t k = 0; k < res.trajectories.size(); ++k) {
    ctx.out() << res.trajectories[k].sample_id()
              << " spectral_radius=" << format_number(res.summary[k].spectral_radius)
              << " consensus=" << (res.summary[k].consensus ? "true" : "false")
              << " argmax_agree=" << (res.summary[k].argmax_agree ? "true" : "false") << "\n";
  }
  ctx.out() << "wrote " << res.trajectories.size() << " samples to "
            << (ctx.output_dir / "trajectories.json").string() << "\n";
  return res;
}

// ---- fit ----------------------------------------------------------------------

struct FitResult {
  FitFile file;
  std::optional<VariabilityReport> variability;
  MeanInterval kl;
  MeanInterval mse;
};

inline std::vector<DeliberationTrajectory> sorted_by_id(std::vector<DeliberationTrajectory> trajs) {
  std::stable_sort(trajs.begin(), trajs.end(), [](const auto& a, const auto& b) {
    return a.sample_id() < b.sample_id();
  });
  return trajs;
}

inline FitResult run_fit(const RunConfig& cfg, const std::vector<DeliberationTrajectory>& input) {
  if (input.empty()) throw Error(ErrorCode::kEmptyInput, "no trajectories to fit");
  const auto trajs = sorted_by_id(input);
  FitResult res;
  res.file.objective = cfg.fit.objective == Objective::kKL ? "KL" : "MSE";
  std::vector<double> kls, mses;
  if (cfg.fit_global) {
    res.file.mode = "global";
    FitReport rep = fit_global(trajs, cfg.fit);
    kls.push_back(rep.kl);
    mses.push_back(rep.mse);
    res.file.fits.push_back(FitRecord{"*", std::move(rep)});
  } else {
    res.file.mode = "per_sample";
    std::vector<FitReport> reports;
    for (const auto& t : trajs) {
      FitReport rep = fit_sample(t, cfg.fit);
      kls.push_back(rep.kl);
      mses.push_back(rep.mse);
      reports.push_back(rep);
      res.file.fits.push_back(FitRecord{t.sample_id(), std::move(rep)});
    }
    if (reports.size() >= 2) res.variability = parameter_variability(reports);
  }
  res.kl = mean_ci95(kls);
  res.mse = mean_ci95(mses);
  return res;
}

inline FitResult cmd_fit(const CommandContext& ctx, const fs::path& input) {
  const FitResult res = run_fit(ctx.config, load_logged(ctx, input));
  save_fit_file(ctx.output_dir / "fit.json", res.file);

  CsvWriter samples({"sample_id", "kl", "mse", "objective", "restart_index", "iterations", "flat"});
  for (const auto& rec : res.file.fits) {
    samples.row({rec.sample_id, format_number(rec.report.kl), format_number(rec.report.mse),
                 format_number(rec.report.objective), std::to_string(rec.report.restart_index),
                 std::to_string(rec.report.iterations), rec.report.flat ? "true" : "false"});
  }
  write_file_atomic(ctx.output_dir / "fit_samples.csv", samples.str());

  CsvWriter aggregate({"metric", "mean", "ci95_half_width", "count"});
  aggregate.row({"kl", format_number(res.kl.mean), format_number(res.kl.half_width),
                 std::to_string(res.kl.count)});
  aggregate.row({"mse", format_number(res.mse.mean), format_number(res.mse.half_width),
                 std::to_string(res.mse.count)});
  write_file_atomic(ctx.output_dir / "fit_aggregate.csv", aggregate.str());

  CsvWriter var({"parameter", "mean", "std", "iqr"});
  if (res.variability) {
    for (const auto& [name, st] : res.variability->per_parameter) {
      var.row({name, format_number(st.mean), format_number(st.std), format_number(st.iqr)});
    }
  }
  write_file_atomic(ctx.output_dir / "variability.csv", var.str());

  ctx.out() << "fit " << res.file.fits.size() << " parameter set(s), mode " << res.file.mode
            << ": KL " << format_number(res.kl.mean) << " +- " << format_number(res.kl.half_width)
            << ", MSE " << format_number(res.mse.mean) << " +- "
            << format_number(res.mse.half_width) << "\n";
  return res;
}

// ---- analyze ------------------------------------------------------------------

// sample_id followed by the ten per-agent metric columns.
inline const std::vector<std::string>& agent_csv_header() {
  static const std::vector<std::string> header = {
      "sample_id",      "agent_id",  "confidence",      "relative_confidence",
      "influence",      "peer_influence", "alignment",  "alignment_score",
      "alignment_count", "competence", "gamma"};
  return header;
}

inline const std::vector<std::string>& system_csv_header() {
  static const std::vector<std::string> header = {"sample_id", "disagreement", "mean_confidence",
                                                  "consensus_reached", "pi"};
  return header;
}

struct AnalyzeResult {
  std::vector<SampleMetrics> samples;
  std::optional<double> spearman_confidence_competence;
  std::optional<double> spearman_influence_competence;
  int labeled_points = 0;
  std::string agents_csv;
  std::string systems_csv;
  std::string correlations_csv;
};

inline AnalyzeResult run_analyze(const RunConfig& cfg, const std::vector<DeliberationTrajectory>& input,
                                 const FitFile& fits) {
  if (input.empty()) throw Error(ErrorCode::kEmptyInput, "no trajectories to analyze");
  const auto trajs = sorted_by_id(input);
  AnalyzeOptions opts;
  if (cfg.analyze.eta) opts.eta = *cfg.analyze.eta;
  opts.normalization = cfg.analyze.normalization;
  opts.consensus_threshold = cfg.analyze.consensus_threshold;

  AnalyzeResult res;
  CsvWriter agents(agent_csv_header());
  CsvWriter systems(system_csv_header());
  std::vector<double> conf, infl, comp;
  for (const auto& t : trajs) {
    const FitReport* rep = fits.find(t.sample_id());
    if (rep == nullptr) {
      throw Error(ErrorCode::kMissingParams, "no fitted parameters for sample '" + t.sample_id() + "'");
    }
    SampleMetrics m = analyze_sample(t, rep->params, opts);
    for (const auto& a : m.agents) {
      agents.row({t.sample_id(), std::to_string(a.agent_id), format_number(a.confidence),
                  format_number(a.relative_confidence), format_number(a.influence),
                  format_number(a.peer_influence), format_number(a.alignment),
                  std::to_string(a.alignment_score), std::to_string(a.alignment_count),
                  a.competence ? format_number(*a.competence) : "", format_number(a.gamma)});
      if (a.competence) {
        conf.push_back(a.confidence);
        infl.push_back(a.influence);
        comp.push_back(*a.competence);
      }
    }
    std::string pi;
    for (int j = 0; j < m.system.pi.pi.size(); ++j) {
      if (j > 0) pi += ';';
      pi += format_number(m.system.pi.pi[j]);
    }
    systems.row({t.sample_id(), format_number(m.system.disagreement),
                 format_number(m.system.mean_confidence),
                 m.system.consensus_reached ? "true" : "false", pi});
    res.samples.push_back(std::move(m));
  }
  res.labeled_points = static_cast<int>(comp.size());
  CsvWriter corr({"pair", "points", "spearman"});
  if (comp.size() >= 3) {
    res.spearman_confidence_competence = spearman(conf, comp);
    res.spearman_influence_competence = spearman(infl, comp);
    corr.row({"confidence_competence", std::to_string(comp.size()),
              format_number(*res.spearman_confidence_competence)});
    corr.row({"influence_competence", std::to_string(comp.size()),
              format_number(*res.spearman_influence_competence)});
  }
  res.agents_csv = agents.str();
  res.systems_csv = systems.str();
  res.correlations_csv = corr.str();
  return res;
}

inline AnalyzeResult cmd_analyze(const CommandContext& ctx, const fs::path& input,
                                 const fs::path& fit_path) {
  if (!fs::exists(fit_path)) {
    throw Error(ErrorCode::kMissingParams, "fit file " + fit_path.string() + " not found");
  }
  AnalyzeResult res = run_analyze(ctx.config, load_logged(ctx, input), load_fit_file(fit_path));
  write_file_atomic(ctx.output_dir / "agents.csv", res.agents_csv);
  write_file_atomic(ctx.output_dir / "systems.csv", res.systems_csv);
  write_file_atomic(ctx.output_dir / "correlations.csv", res.correlations_csv);
  ctx.out() << "analyzed " << res.samples.size() << " samples";
  if (res.spearman_confidence_competence) {
    ctx.out() << "; spearman(confidence, competence) = "
              << format_number(*res.spearman_confidence_competence)
              << ", spearman(influence, competence) = "
              << format_number(*res.spearman_influence_competence);
  }
  ctx.out() << "\n";
  return res;
}

// Checks the documented agents.csv layout: header, column count, types.
inline void check_agent_csv_schema(const std::string& text) {
  const auto rows = parse_csv(text);
  if (rows.empty() || rows.front() != agent_csv_header()) {
    throw Error(ErrorCode::kParseError, "agents.csv header does not match the documented layout");
  }
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string where = "agents.csv line " + std::to_string(r + 1);
    if (row.size() != agent_csv_header().size()) {
      throw Error(ErrorCode::kParseError, where + ": wrong column count");
    }
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (c == 9 && row[c].empty()) continue;  // competence without a label
      try {
        detail::parse_double(row[c], where);
      } catch (const Error&) {
        throw Error(ErrorCode::kParseError, where + ": column '" + agent_csv_header()[c] +
                                                "' is not numeric");
      }
    }
  }
}

// ---- verify -------------------------------------------------------------------

struct VerifyCheck {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct VerifyResult {
  std::vector<VerifyCheck> checks;
  ConfusionCounts confusion;
  int confusion_samples = 0;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }
};

inline VerifyResult run_verify(const RunConfig& cfg) {
  const VerifyConfig& v = cfg.verify;
  const std::uint64_t seed = cfg.seed;
  // Scenario validation happens before any check runs.
  const ExclusiveScenario ex = ExclusiveScenario::balanced(v.exclusive_n, v.exclusive_d, v.epsilon);
  ex.validate();
  const ImperfectScenario im{v.imperfect_n, v.imperfect_d, v.p, v.u, v.c};
  im.validate();
  if (v.mc_samples < 1 || v.random_draws < 1 || v.known_law_samples < 1) {
    throw Error(ErrorCode::kConfigError, "verify sample counts must be >= 1");
  }

  VerifyResult res;
  auto add = [&](std::string name, double measured, double expected, double tol, bool passed,
                 std::string detail = "") {
    res.checks.push_back(VerifyCheck{std::move(name), passed, measured, expected, tol, std::move(detail)});
  };

  // Ambiguity identity and the two diversity forms.
  {
    double gap = 0.0, forms = 0.0;
    for (int k = 0; k < v.random_draws; ++k) {
      CounterRng rng(seed, 0x6c656d6d61000000ULL + static_cast<std::uint64_t>(k));
      const int n = 1 + rng.below(6), d = 2 + rng.below(7);
      Matrix m(n, d);
      for (int i = 0; i < n; ++i) {
        for (int c = 0; c < d; ++c) m(i, c) = rng.exponential();
        m.row(i) /= m.row(i).sum();
      }
      const BeliefSnapshot s(std::move(m));
      Vector a(n);
      for (int i = 0; i < n; ++i) a[i] = rng.exponential();
      a /= a.sum();
      gap = std::max(gap, std::abs(ambiguity_check(s, a, rng.below(d)).gap));
      forms = std::max(forms, std::abs(diversity(s, a) - diversity_pairwise(s, a)));
    }
    add("ambiguity_identity", gap, 0.0, 1e-10, gap < 1e-10, "max |gap| over random draws");
    add("diversity_forms", forms, 0.0, 1e-10, forms < 1e-10, "moment vs pairwise form");
  }

  // Influence matrix: row-stochastic, nonnegative, and the limit of iteration.
  {
    double worst_neg = 0.0, worst_row = 0.0, worst_iter = 0.0;
    for (int k = 0; k < 200; ++k) {
      CounterRng rng(seed, 0x696e666c00000000ULL + static_cast<std::uint64_t>(k));
      const int n = 1 + rng.below(6), d = 2 + rng.below(7);
      const FJParameters p = draw_parameters(rng, n, 0.05, 0.95, 0.0, 0.95);
      Matrix m(n, d);
      for (int i = 0; i < n; ++i) {
        for (int c = 0; c < d; ++c) m(i, c) = rng.exponential();
        m.row(i) /= m.row(i).sum();
      }
      const BeliefSnapshot s(std::move(m));
      const InfluenceMatrix im_ = influence_weights(p);
      worst_neg = std::min(worst_neg, im_.m.minCoeff());
      worst_row = std::max(worst_row, (im_.m.rowwise().sum().array() - 1.0).abs().maxCoeff());
      const auto traj = simulate(p, s, 500);
      worst_iter = std::max(worst_iter, (traj.final_snapshot().matrix() - equilibrium(p, s).matrix())
                                            .cwiseAbs()
                                            .maxCoeff());
    }
    add("influence_nonnegative", worst_neg, 0.0, 1e-12, worst_neg >= -1e-12);
    add("influence_row_sums", worst_row, 0.0, 1e-8, worst_row <= 1e-8);
    add("equilibrium_vs_iteration", worst_iter, 0.0, 1e-6, worst_iter < 1e-6);
  }

  // Exclusive-competence scenario.
  {
    const auto closed = exclusive_losses(ex, Vector::Constant(ex.n, 1.0 / ex.n));
    const auto set = gen_exclusive(ex, v.mc_samples, seed);
    const Vector a_opt = optimal_fixed_ensemble(ex);
    const double mc = mc_ensemble_log_loss(set, a_opt) - mc_hard_confidence_log_loss(set);
    add("exclusive_gap_monte_carlo", mc, closed.gap_balanced, v.tolerance,
        std::abs(mc - closed.gap_balanced) <= v.tolerance);
    const double dev = (a_opt.array() - 1.0 / ex.n).abs().maxCoeff();
    add("exclusive_optimal_is_uniform", dev, 0.0, 1e-6, dev <= 1e-6);
    int failures = 0, total = 0;
    for (int n = 2; n <= 8; ++n) {
      for (int d : {2, 4, 10}) {
        for (double eps : {0.05, 0.1, 0.3}) {
          if (!(eps < 1.0 - 1.0 / d)) continue;
          ++total;
          if (!moe_advantage_check(ExclusiveScenario::balanced(n, d, eps)).holds) ++failures;
        }
      }
    }
    add("moe_advantage_grid", failures, 0.0, 0.0, failures == 0,
        std::to_string(total) + " grid points");
    const double delta_star = routing_error_threshold(ex);
    const auto cross = mc_routing_crossover(ex, v.mc_samples, seed + 1);
    add("routing_error_threshold", cross.delta, delta_star, v.tolerance,
        std::abs(cross.delta - delta_star) <= v.tolerance, "Monte Carlo bisection crossover");
  }

  // Imperfect-agents scenario.
  {
    const double gap = imperfect_gap(im);
    const auto set = gen_imperfect(im, v.mc_samples, seed + 2);
    const Vector uni = Vector::Constant(im.n, 1.0 / im.n);
    const double mc = mc_ensemble_log_loss(set, uni) - mc_hard_confidence_log_loss(set);
    add("imperfect_gap_monte_carlo", mc, gap, v.tolerance, std::abs(mc - gap) <= v.tolerance);
    std::size_t routed_right = 0, ensemble_wrong = 0;
    for (const auto& item : set.items()) {
      const int jc = argmax_index(confidences(item.snapshot));
      if (argmax_index(item.snapshot.matrix().row(jc).transpose()) == item.label) ++routed_right;
      if (argmax_index(mixture(item.snapshot, uni)) == (item.label + 1) % im.d) ++ensemble_wrong;
    }
    const double right = static_cast<double>(routed_right) / set.size();
    add("imperfect_routing_correct", right, 1.0, 0.0, routed_right == set.size());
    if (im.wrong_majority()) {
      const double wrong = static_cast<double>(ensemble_wrong) / set.size();
      add("imperfect_ensemble_wrong_majority", wrong, 1.0, 0.0, ensemble_wrong == set.size());
    }
  }

  // Routing conditions against realized losses, with exact risks.
  {
    const auto data = gen_known_law(std::max(2, v.exclusive_n), 4, v.known_law_samples, seed + 3);
    const Vector a = Vector::Constant(data.n(), 1.0 / data.n());
    const Router router = routers::softmax_confidence(v.beta);
    const auto t2 = thm2_condition(data, a, router);
    const double mismatch = std::abs((t2.lhs - t2.rhs) - t2.realized_gap);
    add("router_vs_ensemble_decomposition", mismatch, 0.0, 1e-10, mismatch < 1e-10,
        "lhs-rhs vs realized gap");
    const auto rep = thm1_condition(data, router, a);
    res.confusion = rep.confusion;
    res.confusion_samples = static_cast<int>(data.size());
    const int off = rep.confusion.false_positive + rep.confusion.false_negative;
    const int cells = rep.confusion.true_positive + rep.confusion.true_negative + off;
    add("moe_vs_best_single_confusion", off, 0.0, 0.0, off == 0 && cells == res.confusion_samples,
        "per-sample condition vs mixture beating the best single agent");
  }
  return res;
}

inline Json verify_to_json(const VerifyResult& res) {
  Json checks = Json::array();
  for (const auto& c : res.checks) {
    Json j;
    j["name"] = c.name;
    j["passed"] = c.passed;
    j["measured"] = c.measured;
    j["expected"] = c.expected;
    j["tolerance"] = c.tolerance;
    j["detail"] = c.detail;
    checks.push_back(std::move(j));
  }
  Json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["all_passed"] = res.all_passed();
  doc["checks"] = std::move(checks);
  doc["confusion"] = {{"condition_true_moe_wins", res.confusion.true_positive},
                      {"condition_true_moe_loses", res.confusion.false_positive},
                      {"condition_false_moe_wins", res.confusion.false_negative},
                      {"condition_false_moe_loses", res.confusion.true_negative},
                      {"samples", res.confusion_samples}};
  return doc;
}

inline std::string verify_to_text(const VerifyResult& res) {
  std::ostringstream out;
  for (const auto& c : res.checks) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name << " measured=" << format_number(c.measured)
        << " expected=" << format_number(c.expected) << " tol=" << format_number(c.tolerance);
    if (!c.detail.empty()) out << " (" << c.detail << ")";
    out << "\n";
  }
  const auto& m = res.confusion;
  out << "confusion (condition x outcome) over " << res.confusion_samples << " samples:\n"
      << "  holds & mixture wins   " << m.true_positive << "\n"
      << "  holds & mixture loses  " << m.false_positive << "\n"
      << "  fails & mixture wins   " << m.false_negative << "\n"
      << "  fails & mixture loses  " << m.true_negative << "\n"
      << (res.all_passed() ? "all checks passed\n" : "some checks FAILED\n");
  return out.str();
}

inline VerifyResult cmd_verify(const CommandContext& ctx) {
  VerifyResult res = run_verify(ctx.config);
  const std::string text = verify_to_text(res);
  write_file_atomic(ctx.output_dir / "verify_report.txt", text);
  write_file_atomic(ctx.output_dir / "verify_report.json", verify_to_json(res).dump(1) + "\n");
  ctx.out() << text;
  return res;
}

// ---- compare ------------------------------------------------------------------

struct PoolAccuracy {
  std::string pool;
  int samples = 0;
  double baseline = 0.0;     // argmax of the mean innate belief
  double fj_ensemble = 0.0;  // argmax of eta^T B* under the pool's global fit
  double mas = 0.0;          // argmax of the mean final belief
};

struct CompareResult {
  std::vector<PoolAccuracy> pools;
  MeanInterval baseline, fj_ensemble, mas;
};

inline CompareResult run_compare(const RunConfig& cfg, const std::vector<DeliberationTrajectory>& input) {
  if (input.empty()) throw Error(ErrorCode::kEmptyInput, "no trajectories to compare");
  std::map<std::string, std::vector<DeliberationTrajectory>> pools;
  for (const auto& t : sorted_by_id(input)) {
    if (!t.correct_label()) {
      throw Error(ErrorCode::kMissingLabels, "sample '" + t.sample_id() + "' has no correct_label");
    }
    if (t.rounds() < 1) {
      throw Error(ErrorCode::kInvariantViolation,
                  "sample '" + t.sample_id() + "' needs at least two rounds");
    }
    const auto it = t.metadata().find("pool");
    pools[it == t.metadata().end() ? "all" : it->second].push_back(t);
  }
  FitConfig fit = cfg.fit;
  fit.objective = cfg.compare.objective;

  CompareResult res;
  std::vector<double> base_acc, fj_acc, mas_acc;
  for (const auto& [name, trajs] : pools) {
    const FitReport global = fit_global(trajs, fit);
    const Vector eta = cfg.compare.eta ? *cfg.compare.eta : uniform_eta(trajs.front().n());
    PoolAccuracy acc;
    acc.pool = name;
    acc.samples = static_cast<int>(trajs.size());
    for (const auto& t : trajs) {
      const int y = *t.correct_label();
      acc.baseline += argmax_index(t.innate().mean()) == y;
      const Vector readout = equilibrium_or_iterate(global.params, t.innate()).beliefs.matrix().transpose() * eta;
      acc.fj_ensemble += argmax_index(readout) == y;
      acc.mas += argmax_index(t.final_snapshot().mean()) == y;
    }
    acc.baseline /= acc.samples;
    acc.fj_ensemble /= acc.samples;
    acc.mas /= acc.samples;
    base_acc.push_back(acc.baseline);
    fj_acc.push_back(acc.fj_ensemble);
    mas_acc.push_back(acc.mas);
    res.pools.push_back(acc);
  }
  res.baseline = mean_ci95(base_acc);
  res.fj_ensemble = mean_ci95(fj_acc);
  res.mas = mean_ci95(mas_acc);
  return res;
}

inline CompareResult cmd_compare(const CommandContext& ctx, const fs::path& input) {
  CompareResult res = run_compare(ctx.config, load_logged(ctx, input));
  CsvWriter table({"pool", "samples", "baseline", "fj_ensemble", "mas"});
  for (const auto& p : res.pools) {
    table.row({p.pool, std::to_string(p.samples), format_number(p.baseline),
               format_number(p.fj_ensemble), format_number(p.mas)});
  }
  write_file_atomic(ctx.output_dir / "compare.csv", table.str());
  CsvWriter summary({"method", "mean", "ci95_half_width", "pools"});
  for (const auto& [name, mi] : {std::pair{"baseline", res.baseline},
                                 std::pair{"fj_ensemble", res.fj_ensemble}, std::pair{"mas", res.mas}}) {
    summary.row({name, format_number(mi.mean), format_number(mi.half_width), std::to_string(mi.count)});
    ctx.out() << name << " accuracy " << format_number(mi.mean) << " +- "
              << format_number(mi.half_width) << "\n";
  }
  write_file_atomic(ctx.output_dir / "compare_summary.csv", summary.str());
  return res;
}

}  // namespace fjlab

#endif  // FJLAB_COMMANDS_HPP_
