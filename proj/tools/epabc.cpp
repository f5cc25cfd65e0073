// Copyright 2026 The epabc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end.
//
//   epabc run <config.json>       fit a model; writes trace.csv, final.json,
//                                 acceptance.csv under the configured dir
//   epabc heatmap <config.json>   correlation-distance grid CSV
//   epabc compare <config.json>   per-pass means across schedules/seeds
//
// Exit codes: 0 success, 1 runtime error, 2 config error, 3 the run itself
// failed (e.g. every site starved) but the output files were still written.
// Errors are emitted as one JSON object on stderr.

#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "epabc/epabc.hpp"

namespace {

int fail(const std::string& message, const std::string& field, int code) {
  nlohmann::json j;
  j["error"] = message;
  if (!field.empty()) j["field"] = field;
  std::cerr << j.dump() << "\n";
  return code;
}

int do_run(const std::string& config) {
  const epabc::RunResult res = epabc::run_from_config(config);
  nlohmann::json out;
  out["trace"] = res.trace_path;
  out["final"] = res.final_path;
  out["acceptance"] = res.acceptance_path;
  out["converged"] = res.trace.converged;
  out["passes"] = res.trace.passes_run;
  out["total_simulated"] = res.trace.total_simulated;
  std::cout << out.dump(2) << "\n";
  if (res.engine_error) return fail(res.error_message, "", 3);
  return 0;
}

int do_heatmap(const std::string& config) {
  std::cout << epabc::emit_heatmap(config) << "\n";
  return 0;
}

int do_compare(const std::string& config) {
  std::cout << epabc::compare_schedules(config) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Likelihood-free Gaussian EP with ABC moment estimates"};
  app.require_subcommand(1);

  std::string run_cfg, heatmap_cfg, compare_cfg;
  CLI::App* run_cmd = app.add_subcommand("run", "fit a configured model");
  run_cmd->add_option("config", run_cfg, "JSON config file")
      ->required()
      ->check(CLI::ExistingFile);
  CLI::App* heatmap_cmd =
      app.add_subcommand("heatmap", "correlation-distance grid");
  heatmap_cmd->add_option("config", heatmap_cfg, "JSON config file")
      ->required()
      ->check(CLI::ExistingFile);
  CLI::App* compare_cmd =
      app.add_subcommand("compare", "schedule comparison trajectories");
  compare_cmd->add_option("config", compare_cfg, "JSON config file")
      ->required()
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return do_run(run_cfg);
    if (heatmap_cmd->parsed()) return do_heatmap(heatmap_cfg);
    if (compare_cmd->parsed()) return do_compare(compare_cfg);
  } catch (const epabc::ConfigError& e) {
    return fail(e.what(), e.field, 2);
  } catch (const epabc::Error& e) {
    return fail(e.what(), "", 1);
  } catch (const std::exception& e) {
    return fail(e.what(), "", 1);
  }
  return 0;
}
