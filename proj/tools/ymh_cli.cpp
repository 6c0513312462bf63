#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <optional>
#include <string>

#include "ymh/cli_io.hpp"

int main(int argc, char** argv) {
  using namespace ymh;
  CLI::App app{"Vortex, Jacobi and 4D Yang-Mills-Higgs numerics"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--out", out, "output directory");
  app.add_option("--seed", seed, "seed for sampled points and eigensolver starts");

  app.fallthrough();
  for (const auto& name : io::experiment_names()) app.add_subcommand(name, "run the " + name + " pipeline");

  CLI11_PARSE(app, argc, argv);

  try {
    io::ExperimentConfig cfg = config_path.empty() ? io::ExperimentConfig{} : io::load_config(config_path);
    cfg.experiment = app.get_subcommands().front()->get_name();
    if (out) cfg.out = *out;
    if (seed) cfg.seed = *seed;
    io::validate(cfg);
    const io::RunManifest m = io::run_experiment(cfg);
    for (const auto& c : m.checks)
      fmt::print("{} {} value={:.6g} ({})\n", c.pass ? "PASS" : "FAIL", c.name, c.value, c.threshold);
    fmt::print("{} artifacts written to {}\n", m.artifacts.size(), cfg.out);
    return m.all_pass() ? 0 : 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == ErrorCode::ConfigInvalid ? 64 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
