// Command-line entry point: tmf <experiment> [--config file] [--out dir] [--seed n]

#include <chrono>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tmf/config.hpp"
#include "tmf/errors.hpp"
#include "tmf/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Transformer mean-field experiments"};
  app.require_subcommand(1, 1);
  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;
  for (const auto& id : tmf::experiment_ids()) {
    auto* sub = app.add_subcommand(id, "run the " + id + " experiment");
    sub->add_option("--config", config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& s) { seed = s, seed_given = true; }, "root seed");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : tmf::kExitConfig;
  }
  const std::string id = app.get_subcommands().front()->get_name();

  tmf::ExperimentConfig cfg;
  try {
    nlohmann::json user = nlohmann::json::object();
    if (!config_path.empty()) {
      std::ifstream is(config_path);
      user = nlohmann::json::parse(is);
    }
    cfg = tmf::resolve_config(id, user);
    if (seed_given) cfg.seed = seed;
    if (!out_dir.empty()) cfg.output = out_dir;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return tmf::kExitConfig;
  }

  const auto t0 = std::chrono::steady_clock::now();
  tmf::RunOutcome res;
  try {
    res = tmf::run_experiment(id, cfg, cfg.output);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return tmf::kExitConfig;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << res.summary.dump(2) << '\n';
  std::cerr << id << ": " << (res.exit_code == 0 ? "PASS" : "FAIL") << " (exit " << res.exit_code
            << ", " << secs << " s, output in " << cfg.output << ")\n";
  return res.exit_code;
}
