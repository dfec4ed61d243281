// Batch front door: reads a JSON config, dispatches one experiment through
// the shared-library C API, and reports machine-readable errors.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "hrg.h"

namespace {

int run(const std::string& subcommand, const std::string& config_path,
        const std::string& out_dir, int threads, bool has_seed,
        std::uint64_t seed) {
  std::ifstream in(config_path);
  if (!in) {
    std::fprintf(stderr,
                 "{\"error\":\"cannot open config file\",\"path\":\"%s\"}\n",
                 config_path.c_str());
    return 2;
  }
  std::ostringstream body;
  body << in.rdbuf();
  std::string config = body.str();

  // the subcommand must agree with the config's experiment field; a missing
  // field is also rejected by the library
  if (config.find("\"experiment\"") == std::string::npos) {
    // allow configs without the field by injecting the subcommand
    std::string inject = "{\"experiment\":\"" + subcommand + "\",";
    auto brace = config.find('{');
    if (brace != std::string::npos)
      config = inject + config.substr(brace + 1);
  } else if (config.find("\"" + subcommand + "\"") == std::string::npos) {
    std::fprintf(stderr,
                 "{\"error\":\"config experiment does not match subcommand "
                 "%s\"}\n",
                 subcommand.c_str());
    return 2;
  }

  hrg_status st = hrg_run_experiment(config.c_str(), out_dir.c_str(), threads,
                                     has_seed ? 1 : 0, seed);
  if (st != HRG_OK) {
    std::fprintf(stderr, "{\"error\":\"%s\",\"exit\":%d}\n", hrg_last_error(),
                 static_cast<int>(st));
    return static_cast<int>(st);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical O(r) renormalization-group laboratory"};
  app.set_version_flag("--version", hrg_version());

  std::string config_path, out_dir = "out";
  int threads = 0;
  std::uint64_t seed = 0;
  bool has_seed = false;

  const char* env_threads = std::getenv("HRG_THREADS");
  if (env_threads) threads = std::atoi(env_threads);

  std::string chosen;
  for (const char* name : {"check-conditions", "flow", "fixed-point",
                           "critical", "oracle", "compare"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--threads", threads, "worker threads");
    sub->add_option("--seed", seed, "seed override (oracle/compare)")
        ->each([&](const std::string&) { has_seed = true; });
    sub->callback([&, name] { chosen = name; });
  }
  app.require_subcommand(1);

  CLI11_PARSE(app, argc, argv);
  return run(chosen, config_path, out_dir, threads, has_seed, seed);
}
