// tools/zrs.cpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Command line front end for the zrs pipeline.
//
//   zrs <command> [--config FILE] [--seed N] [--work-dir DIR] ...
//
// Exit codes: 0 success, 2 configuration error, 1 any other failure.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "zrs/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"zrs: zero-resource subword modeling pipeline"};
  app.require_subcommand(1);

  struct Args {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> work_dir;
    std::optional<double> p;
    std::optional<std::string> p_grid;
    std::optional<std::string> condition;
  };
  Args args;

  const char* verbs[] = {"synth",  "cluster", "filter", "align",
                         "train",  "extract", "abx",    "run-all"};
  const char* descriptions[] = {
      "generate a synthetic evaluation corpus",
      "fit a DPGMM per language and label every frame",
      "drop rare clusters below the cumulative threshold P",
      "train pseudo-phone HMMs and realign frame labels",
      "train the multi-task bottleneck network",
      "extract bottleneck features for the whole corpus",
      "score features with the ABX minimal-pair task",
      "run the full pipeline and compare raw against BNF"};

  for (std::size_t i = 0; i < std::size(verbs); ++i) {
    CLI::App* sub = app.add_subcommand(verbs[i], descriptions[i]);
    sub->add_option("--config", args.config, "JSON configuration file");
    sub->add_option("--seed", args.seed, "override the global seed");
    sub->add_option("--work-dir", args.work_dir,
                    "override the work directory");
    std::string verb = verbs[i];
    if (verb == "filter" || verb == "align" || verb == "train" ||
        verb == "extract" || verb == "abx" || verb == "run-all") {
      auto* p = sub->add_option("--P", args.p,
                                "single cumulative occupancy threshold");
      auto* grid = sub->add_option("--P-grid", args.p_grid,
                                   "threshold grid as a:b:step");
      p->excludes(grid);
    }
    if (verb == "abx" || verb == "run-all")
      sub->add_option("--condition", args.condition,
                      "within | across | both");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : zrs::kExitConfigError;
  }

  zrs::CliOverrides overrides;
  overrides.seed = args.seed;
  overrides.work_dir = args.work_dir;
  overrides.p = args.p;
  overrides.p_grid = args.p_grid;
  overrides.condition = args.condition;
  return zrs::run_command(app.get_subcommands()[0]->get_name(), args.config,
                          overrides, std::cerr);
}
