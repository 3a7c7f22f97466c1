// Command-line front end: run, sweep, verify, inspect-block, export-metrics.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "bfel/errors.h"
#include "bfel/experiment.h"

namespace fs = std::filesystem;

namespace {

bfel::ExperimentConfig load_with_overrides(const std::string& path,
                                           const std::vector<std::string>& sets) {
  auto cfg = bfel::load_config(path);
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw bfel::ConfigError("--set expects key=value, got " + s);
    cfg = bfel::with_override(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  return cfg;
}

int export_metrics(const fs::path& run_dir, const std::string& format, const std::string& output) {
  std::ifstream in(run_dir / "metrics.csv");
  if (!in) throw bfel::InputError("no metrics.csv in " + run_dir.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const auto rows = bfel::metrics_from_csv(ss.str());
  std::string text;
  if (format == "csv") {
    text = bfel::metrics_to_csv(rows);
  } else {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
      arr.push_back({{"task", r.task},
                     {"round", r.round},
                     {"global_test_accuracy", r.global_test_accuracy},
                     {"bytes_this_round", r.bytes_this_round},
                     {"cumulative_bytes", r.cumulative_bytes},
                     {"compression_ratio", std::isfinite(r.compression_ratio)
                                               ? nlohmann::json(r.compression_ratio)
                                               : nlohmann::json(nullptr)},
                     {"exposure_ratio", r.exposure_ratio},
                     {"qualified_count", r.qualified_count},
                     {"slashed_count", r.slashed_count},
                     {"simulated_time_ms", r.simulated_time_ms}});
    }
    text = arr.dump(2) + "\n";
  }
  if (output.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(output, std::ios::binary);
    if (!out) throw bfel::InputError("cannot write " + output);
    out << text;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blockchain-empowered federated edge learning simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir, run_dir, chain_file, param, format = "csv", output;
  std::vector<std::string> sets, values;
  std::uint64_t height = 0;
  bool fast = false;

  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--out", out_dir, "Output directory (default runs/<config-name>)");
  run->add_option("--set", sets, "Override a config value, e.g. compression.rho=1");

  auto* sw = app.add_subcommand("sweep", "Run one experiment per parameter value");
  sw->add_option("config", config_path, "Base config (JSON)")->required();
  sw->add_option("--param", param, "Config path to vary, e.g. rho or training.learning_rate")
      ->required();
  sw->add_option("--values", values, "Values to try")->required()->delimiter(',');
  sw->add_option("--out", out_dir, "Output directory (default runs/sweep-<param>)");
  sw->add_option("--set", sets, "Override a config value before sweeping");

  auto* verify = app.add_subcommand("verify", "Re-check a run directory");
  verify->add_option("run_dir", run_dir, "Run output directory")->required();
  verify->add_flag("--fast", fast, "Skip model replay");

  auto* inspect = app.add_subcommand("inspect-block", "Print one block as JSON");
  inspect->add_option("chain_file", chain_file, "Chain file")->required();
  inspect->add_option("height", height, "Block height")->required();

  auto* exp = app.add_subcommand("export-metrics", "Export a run's metrics");
  exp->add_option("run_dir", run_dir, "Run output directory")->required();
  exp->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  exp->add_option("--output", output, "Write to a file instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto cfg = load_with_overrides(config_path, sets);
      if (out_dir.empty()) out_dir = (fs::path("runs") / fs::path(config_path).stem()).string();
      const auto result = bfel::run_experiment(cfg);
      bfel::write_artifacts(result, out_dir);
      std::cout << result.summary_line() << " out=" << out_dir << "\n";
      return 0;
    }
    if (*sw) {
      const auto cfg = load_with_overrides(config_path, sets);
      if (out_dir.empty()) out_dir = (fs::path("runs") / ("sweep-" + param)).string();
      const auto rows = bfel::sweep(cfg, param, values, out_dir);
      std::cout << bfel::sweep_to_csv(param, rows);
      return 0;
    }
    if (*verify) {
      const auto report = bfel::verify_artifacts(run_dir, {fast});
      std::cout << report.to_text();
      return report.ok() ? 0 : 1;
    }
    if (*inspect) {
      const auto chain = bfel::read_chain_file(chain_file);
      if (height >= chain.length()) {
        std::cerr << "error: height " << height << " beyond head " << chain.length() - 1 << "\n";
        return 2;
      }
      std::cout << bfel::block_to_json(chain.blocks()[height]) << "\n";
      return 0;
    }
    if (*exp) return export_metrics(run_dir, format, output);
  } catch (const bfel::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const bfel::FederationHalt& e) {
    std::cerr << "federation halted: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
