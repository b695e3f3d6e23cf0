// Command-line driver: each subcommand runs one pipeline stage against a
// JSON run configuration, writing fingerprinted artifacts under --out.
#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "memcell/pipeline.hpp"

using nlohmann::json;

int main(int argc, char** argv) {
  CLI::App app{"memory-kernel homogenization of a periodic cell with a soft inclusion"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir = "out";
  int modes_override = 0;
  std::vector<double> eps_override;
  int threads = 0;
  bool wave = false;
  std::uint64_t seed = 0;

  app.add_option("-c,--config", config_path, "JSON run configuration")->required();
  app.add_option("-o,--out", out_dir, "artifact directory")->capture_default_str();
  app.add_option("--modes", modes_override, "override discretization.modes");
  app.add_option("--eps", eps_override, "override scenario.eps (repeatable)");
  app.add_option("--threads", threads, "worker threads (0 = hardware count)");
  app.add_option("--seed", seed, "accepted for sweep scripts; the numerics are deterministic");

  CLI::App* s_cell = app.add_subcommand("cell", "voxelize the unit cell");
  CLI::App* s_modes = app.add_subcommand("modes", "inclusion eigenpairs");
  CLI::App* s_corr = app.add_subcommand("correctors", "correctors and effective coefficients");
  CLI::App* s_kern = app.add_subcommand("kernel", "memory kernels and resolvent");
  s_kern->add_flag("--wave", wave, "cross-check the kernel trace against a wave solve");
  CLI::App* s_macro = app.add_subcommand("macro", "effective macroscopic evolution");
  CLI::App* s_fine = app.add_subcommand("fine", "direct fine-scale simulation per eps");
  CLI::App* s_conv = app.add_subcommand("converge", "fine-vs-effective phase-average errors");
  CLI::App* s_check = app.add_subcommand("check", "consistency report over the artifacts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    memcell::RunConfig cfg = memcell::load_config(config_path);
    if (modes_override > 0) cfg.modes = modes_override;
    if (!eps_override.empty()) {
      for (double e : eps_override) {
        if (e <= 0) throw memcell::PipelineError(2, "--eps entries must be positive");
        double inv = 1.0 / e;
        if (std::fabs(inv - std::lround(inv)) > 1e-9 * inv)
          throw memcell::PipelineError(2, "--eps entries need 1/eps integer");
      }
      cfg.eps = eps_override;
    }
    if (threads > 0) memcell::set_thread_count(threads);
    (void)seed;

    memcell::ArtifactStore store{out_dir};
    json sum;
    if (*s_cell)
      sum = memcell::run_cell(cfg, store);
    else if (*s_modes)
      sum = memcell::run_modes(cfg, store);
    else if (*s_corr)
      sum = memcell::run_correctors(cfg, store);
    else if (*s_kern)
      sum = memcell::run_kernel(cfg, store, wave);
    else if (*s_macro)
      sum = memcell::run_macro(cfg, store);
    else if (*s_fine) {
      if (cfg.eps.empty())
        throw memcell::PipelineError(2, "config: scenario.eps (or --eps) is required here");
      json runs = json::array();
      for (double e : cfg.eps) runs.push_back(memcell::run_fine(cfg, store, e));
      if (runs.size() == 1)
        sum = runs[0];
      else {
        sum["stage"] = "fine";
        sum["runs"] = runs;
      }
    } else if (*s_conv)
      sum = memcell::run_converge(cfg, store);
    else if (*s_check)
      sum = memcell::run_check(cfg, store);
    std::cout << sum.dump() << "\n";
    return 0;
  } catch (const memcell::PipelineError& e) {
    std::cerr << json{{"error", e.what()}, {"code", e.code}}.dump() << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}, {"code", 1}}.dump() << "\n";
    return 1;
  }
}
