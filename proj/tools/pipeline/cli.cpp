#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "hwm/util/binio.hpp"

namespace hwm::cli {

int run_cli(int argc, char** argv) {
  CLI::App app{"Hybrid neural world model workbench"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir = "runs", profile;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  app.add_option("-c,--config", config_path, "JSON run config")->envname("HWM_CONFIG");
  auto* seed_opt = app.add_option("--seed", seed, "Seed for every stage (overrides the config)")->envname("HWM_SEED");
  app.add_option("--out", out_dir, "Run directory")->envname("HWM_OUT");
  auto* threads_opt =
      app.add_option("--threads", threads, "Worker cap, recorded in benchmarks")->envname("HWM_THREADS")->check(CLI::PositiveNumber);
  auto* profile_opt = app.add_option("--profile", profile, "desk or paper defaults")
                          ->envname("HWM_PROFILE")
                          ->check(CLI::IsMember({"desk", "paper"}));

  using Cmd = void (*)(const RunConfig&, const Layout&);
  const std::vector<std::tuple<const char*, const char*, Cmd>> commands{
      {"gen", "Generate every data split", cmd_gen},
      {"train", "Train the surrogate (and ensemble members)", cmd_train},
      {"trust", "Score trust signals on val, test and OOD splits", cmd_trust},
      {"deploy", "Calibrate the gate and run Modes 1 and 2 with the q sweep", cmd_deploy},
      {"eval", "AUROC cells, closed-loop rollout and beyond-Tmax cells", cmd_eval},
      {"bench", "Wall-clock surrogate vs solver", cmd_bench},
      {"render", "Graymaps of the error map and the true error", cmd_render},
      {"ablate", "DAgger weight sweep", cmd_ablate},
  };
  std::vector<std::pair<CLI::App*, Cmd>> subs;
  for (const auto& [name, help, fn] : commands) subs.emplace_back(app.add_subcommand(name, help), fn);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    Overrides ov;
    if (*seed_opt) ov.seed = seed;
    if (*threads_opt) ov.threads = threads;
    if (*profile_opt) ov.profile = profile_from_string(profile);
    const auto cfg = load_config(config_path, ov);
    const Layout layout{out_dir};
    DirLock lock(layout.root);
    for (const auto& [sub, fn] : subs)
      if (sub->parsed()) fn(cfg, layout);
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "hwm: config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const MissingPrerequisite& e) {
    std::cerr << "hwm: missing prerequisite: " << e.what() << "\n";
    return kMissingPrereq;
  } catch (const ValidationFailure& e) {
    std::cerr << "hwm: validation failure: " << e.what() << "\n";
    return kValidationFailure;
  } catch (const FormatError& e) {
    std::cerr << "hwm: validation failure: " << e.what() << "\n";
    return kValidationFailure;
  } catch (const std::exception& e) {
    std::cerr << "hwm: error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
}

}  // namespace hwm::cli
