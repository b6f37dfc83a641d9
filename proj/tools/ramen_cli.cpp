// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <iostream>

#include "ramen/checkpoint.hpp"
#include "ramen/commands.hpp"

namespace {

using namespace ramen;
using namespace ramen::cli;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string ablation;
  std::string split_regime;
  bool inject_fault = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--seed", f.seed, "Seed for data, initialization and shuffling");
  cmd->add_option("--out", f.out, "Output directory (the dataset directory for gen-data)");
  cmd->add_option("--ablation", f.ablation,
                  "Model variant: full, no_early_fusion, no_late_fusion, mean_pool");
  cmd->add_option("--split-regime", f.split_regime, "iid, compositional or changing_priors");
}

RunConfig effective_config(const Flags& f, bool out_is_dataset) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (f.seed) c.seed = *f.seed;
  if (!f.out.empty()) (out_is_dataset ? c.paths.dataset : c.paths.output) = f.out;
  try {
    if (!f.ablation.empty()) c.model.ablation = parse_ablation(f.ablation);
    if (!f.split_regime.empty()) c.split_regime = data::parse_split_regime(f.split_regime);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RAMEN visual question answering on a synthetic benchmark"};
  app.require_subcommand(1);
  Flags flags;
  auto* gen = app.add_subcommand("gen-data", "Generate a labelled synthetic corpus");
  auto* train = app.add_subcommand("train", "Train a model and report val/test metrics");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  auto* ablate = app.add_subcommand("ablate", "Train every ablation variant over several seeds");
  auto* grad = app.add_subcommand("grad-check", "Finite-difference gradient checks");
  for (auto* cmd : {gen, train, eval, ablate, grad}) add_common(cmd, flags);
  grad->add_flag("--inject-fault", flags.inject_fault,
                 "Include an op with a deliberately wrong gradient (expected to fail)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(effective_config(flags, true), std::cout);
    if (train->parsed()) return cmd_train(effective_config(flags, false), std::cout);
    if (eval->parsed()) return cmd_eval(effective_config(flags, false), std::cout);
    if (ablate->parsed()) {
      const auto config = effective_config(flags, false);
      return cmd_ablate(config, thread_budget(), std::cout);
    }
    if (grad->parsed()) return cmd_grad_check(effective_config(flags, false), flags.inject_fault, std::cout);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const data::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitDataError;
  } catch (const train::CheckpointError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitDataError;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumericError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
