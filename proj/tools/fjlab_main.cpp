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

// fjlab command-line tool.
//
// Exit codes: 0 success, 1 validation or input error, 2 numerical failure,
// 3 a verify check failed.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "fjlab/commands.hpp"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitVerifyFailed = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Friedkin-Johnsen deliberation analysis and mixture-of-experts routing checks"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string output_dir = ".";
  bool quiet = false;
  app.add_option("--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Seed overriding [general] seed");
  app.add_option("--output-dir", output_dir, "Directory for all outputs");
  app.add_flag("--quiet", quiet, "Suppress progress output");

  std::string input, fit_path;
  bool global = false;
  auto* simulate = app.add_subcommand("simulate", "Simulate FJ deliberations");
  auto* fit = app.add_subcommand("fit", "Fit FJ parameters to trajectories");
  fit->add_option("--input", input, "Trajectory file (default <output-dir>/trajectories.json)");
  fit->add_flag("--global", global, "Fit one parameter set shared by all samples");
  auto* analyze = app.add_subcommand("analyze", "Per-agent and per-sample metrics");
  analyze->add_option("--input", input, "Trajectory file (default <output-dir>/trajectories.json)");
  analyze->add_option("--fit", fit_path, "Fit file (default <output-dir>/fit.json)");
  auto* verify = app.add_subcommand("verify", "Check the theory against closed forms and simulation");
  auto* compare = app.add_subcommand("compare", "Baseline vs FJ ensemble vs final-round accuracy");
  compare->add_option("--input", input, "Trajectory file (default <output-dir>/trajectories.json)");
  // Global flags are accepted after the subcommand name as well.
  for (auto* sub : {simulate, fit, analyze, verify, compare}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    fjlab::CommandContext ctx;
    if (!config_path.empty()) ctx.config = fjlab::load_config(config_path);
    if (seed) ctx.config.seed = *seed;
    if (global) ctx.config.fit_global = true;
    ctx.output_dir = output_dir;
    ctx.quiet = quiet;
    std::filesystem::create_directories(ctx.output_dir);
    const auto in = input.empty() ? ctx.output_dir / "trajectories.json" : std::filesystem::path(input);

    if (simulate->parsed()) {
      fjlab::cmd_simulate(ctx);
    } else if (fit->parsed()) {
      fjlab::cmd_fit(ctx, in);
    } else if (analyze->parsed()) {
      fjlab::cmd_analyze(ctx, in, fit_path.empty() ? ctx.output_dir / "fit.json" : std::filesystem::path(fit_path));
    } else if (verify->parsed()) {
      const auto res = fjlab::cmd_verify(ctx);
      if (!res.all_passed()) {
        for (const auto& c : res.checks) {
          if (!c.passed) std::cerr << "fjlab: check failed: " << c.name << "\n";
        }
        return kExitVerifyFailed;
      }
    } else if (compare->parsed()) {
      fjlab::cmd_compare(ctx, in);
    }
  } catch (const fjlab::Error& e) {
    std::cerr << "fjlab: " << e.what() << "\n";
    return fjlab::is_numerical(e.code()) ? kExitNumerical : kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "fjlab: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
