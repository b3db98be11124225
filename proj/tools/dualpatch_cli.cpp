// dualpatch command line: fixtures, shape search, texture optimization,
// evaluation and reporting over one JSON config.
//
// Exit codes: 0 success, 2 usage or config error, 3 runtime failure.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dualpatch/dualpatch.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

int exit_code(dp_status status) {
  if (status == DP_OK) return kExitOk;
  return status == DP_ERR_CONFIG ? kExitConfig : kExitRuntime;
}

int fail(dp_status status) {
  std::cerr << "error: " << dp_status_string(status) << ": " << dp_last_error() << '\n';
  return exit_code(status);
}

void log_to_stderr(dp_log_level level, const char* message, void*) {
  static const char* names[] = {"debug", "info", "warn", "error"};
  std::fprintf(stderr, "[%s] %s\n", names[level], message);
}

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int workers = 0;
  bool keep_going = false;
  int frames = 50;
  bool quiet = false;
};

int run_stage(const std::string& stage, const Options& o) {
  dp_config* cfg = nullptr;
  if (dp_status s = dp_config_load(o.config.c_str(), &cfg); s != DP_OK) return fail(s);
  if (o.seed) dp_config_override_seed(cfg, *o.seed);
  dp_run* run = nullptr;
  dp_status s = dp_run_open(cfg, o.out.empty() ? nullptr : o.out.c_str(), o.workers,
                            o.keep_going ? 1 : 0, &run);
  dp_config_free(cfg);
  if (s != DP_OK) return fail(s);
  if (stage == "shape-search") {
    s = dp_run_shape_search(run);
  } else if (stage == "texture-opt") {
    s = dp_run_texture_opt(run);
  } else if (stage == "eval") {
    s = dp_run_eval(run);
  } else if (stage == "report") {
    s = dp_run_report(run);
  } else {
    s = dp_run_pipeline(run);
  }
  dp_run_close(run);
  return s == DP_OK ? kExitOk : fail(s);
}

int gen_fixtures(const Options& o) {
  char manifest[4096];
  const dp_status s = dp_generate_fixtures(o.out.c_str(), o.frames, o.seed.value_or(7), manifest,
                                           sizeof(manifest));
  if (s != DP_OK) return fail(s);
  std::cout << manifest << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-modal adversarial patch toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(dp_version()));
  Options o;
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");

  auto* gen = app.add_subcommand("gen-fixtures", "Write the synthetic dual-modal dataset");
  gen->add_option("--out", o.out, "Output directory")->required();
  gen->add_option("--frames", o.frames, "Frame count")->check(CLI::PositiveNumber);
  gen->add_option("--seed", o.seed, "Generator seed");

  const char* stages[][2] = {
      {"shape-search", "Evolve patch shapes against the infrared detector"},
      {"texture-opt", "Optimize a texture for each archived shape"},
      {"eval", "Evaluate patch artifacts on clean and patched frames"},
      {"report", "Emit report.json, report.csv and asr_bars.png"},
      {"pipeline", "Run every stage, skipping those already complete"}};
  for (const auto& [name, help] : stages) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "Output directory (default: output.dir)");
    sub->add_option("--seed", o.seed, "Override the global seed");
    sub->add_option("--workers", o.workers, "Worker threads (default: all processors)")
        ->check(CLI::NonNegativeNumber);
    sub->add_flag("--keep-going", o.keep_going, "Record failed frames instead of aborting");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    if (app.get_subcommands().empty()) std::cerr << app.help();
    return kExitConfig;
  }

  if (verbose) dp_set_log_callback(log_to_stderr, nullptr);
  auto* sub = app.get_subcommands().front();
  if (sub == gen) return gen_fixtures(o);
  return run_stage(sub->get_name(), o);
}
