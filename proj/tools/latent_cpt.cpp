// latent-cpt: runs one pipeline stage per invocation.
//
//   latent-cpt <stage> --config <path> [--out <dir>] [--seed <n>]
//
// Exit status: 0 success, 1 stage failure, 2 config or usage error. Failures
// print a one-line JSON object on stderr.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "latentcpt/error.hpp"
#include "latentcpt/pipeline.hpp"

namespace {

int fail(const std::string& stage, std::string_view kind, const std::string& message, int code) {
  std::cerr << latentcpt::error_json(stage, std::string(kind), message).dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent CPT lateral-spreading pipeline", "latent-cpt"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;

  for (const auto& name : latentcpt::stage_names()) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " stage");
    sub->add_option("--config", config_path, "pipeline config JSON")->required();
    sub->add_option("--out", out_dir, "override the output directory");
    sub->add_option("--seed", seed, "override the seed this stage consumes");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return fail("", "ConfigError", e.what(), 2);
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  latentcpt::PipelineConfig cfg;
  try {
    latentcpt::StageOverrides overrides;
    if (out_dir) overrides.output_dir = *out_dir;
    overrides.seed = seed;
    cfg = latentcpt::apply_overrides(latentcpt::load_config(config_path), stage, overrides);
  } catch (const latentcpt::Error& e) {
    return fail(stage, latentcpt::to_string(e.kind()), e.what(), 2);
  } catch (const std::exception& e) {
    return fail(stage, "ConfigError", e.what(), 2);
  }

  try {
    latentcpt::run_stage(stage, cfg);
  } catch (const latentcpt::Error& e) {
    const int code = e.kind() == latentcpt::ErrorKind::ConfigError ? 2 : 1;
    return fail(stage, latentcpt::to_string(e.kind()), e.what(), code);
  } catch (const std::exception& e) {
    return fail(stage, "IoError", e.what(), 1);
  }
  return 0;
}
