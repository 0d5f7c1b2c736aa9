// wgfvi <kind> --config path.json [--seed n] [--out dir] [--parallel k]
//
// Exit codes: 0 success, 1 unexpected failure, 2 config error (nothing
// written), 3 numerical degeneracy.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "wgfvi/errors.hpp"
#include "wgfvi/harness.hpp"
#include "wgfvi/io.hpp"

int main(int argc, char** argv) {
  using namespace wgfvi;
  namespace fs = std::filesystem;

  CLI::App app{"Gaussian and mixture variational inference by Bures-Wasserstein gradient flows"};
  std::string kind;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  unsigned parallel = 1;
  app.add_option("kind", kind, "gaussian-vi | mixture-vi | wfr-vi | bw-sgd | laplace | kl-grid")->required();
  app.add_option("--config", config_path, "experiment config (JSON)")->required();
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", out_dir, "output directory (default: out/<kind>)");
  app.add_option("--parallel", parallel, "worker threads for independent seeds")->check(CLI::Range(1u, 1024u));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  ExperimentConfig cfg;
  try {
    const ExperimentKind k = parse_kind(kind);
    const std::string text = read_text_file(config_path);
    cfg = parse_config(text, k, seed, fs::path(config_path).parent_path());
  } catch (const ConfigError& e) {
    std::cerr << "wgfvi: " << e.what() << '\n';
    return kExitConfig;
  }
  if (out_dir.empty()) out_dir = "out/" + kind;

  try {
    const RunOutcome r = run_experiment(cfg, out_dir, parallel);
    if (r.exit_code != kExitOk) std::cerr << "wgfvi: " << r.message << '\n';
    else std::cout << "wrote " << out_dir << '\n';
    return r.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "wgfvi: " << e.what() << '\n';
    return kExitFailure;
  }
}
