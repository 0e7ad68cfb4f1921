// proxydebias command-line front end.
//
// Exit codes: 0 success, 2 config/validation error, 3 runtime/numeric error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "proxydebias/experiment.hpp"

namespace fs = std::filesystem;
namespace pd = proxydebias;

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

fs::path output_dir(const fs::path& config_path, const std::string& out_flag) {
  if (!out_flag.empty()) return out_flag;
  return pd::load_experiment_config(config_path).output_dir;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proxy debiasing: train, evaluate and sweep fair classifiers on synthetic biased data"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool quiet = false;
  bool no_timing = false;

  app.add_option("--config", config_path, "Experiment config (JSON)");
  app.add_option("--out", out, "Output directory or file");
  app.add_option("--seed", seed, "Override data and training seed");
  app.add_option("--jobs", jobs, "Parallel trials for sweep-style commands")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", quiet, "Suppress progress messages");
  app.add_flag("--no-timing", no_timing, "Write 0 for wall_time_seconds (byte-stable result files)");

  auto* gen = app.add_subcommand("gen", "Generate train.csv and the balanced test.csv");
  auto* train = app.add_subcommand("train", "Train on <out>/train.csv; write model.json and history.json");

  auto* eval = app.add_subcommand("eval", "Evaluate a model on a test CSV and write one JSON record");
  std::string model_path;
  std::string test_csv;
  eval->add_option("model", model_path, "Model JSON")->required();
  eval->add_option("test", test_csv, "Test CSV")->required();

  auto* sweep = app.add_subcommand("sweep", "Pr(T|B) sweep of vanilla vs active_pd");
  std::vector<double> rhos;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  sweep->add_option("--rho", rhos, "Comma-separated rho values")->delimiter(',')->required();
  sweep->add_option("--seeds", seeds, "Comma-separated seeds")->delimiter(',');

  auto* multibias = app.add_subcommand("multibias", "Two-attribute debiasing vs single-attribute runs");
  multibias->add_option("--seeds", seeds, "Comma-separated seeds")->delimiter(',');

  auto* proxydim = app.add_subcommand("proxydim", "Proxy dimension sensitivity of active_pd");
  std::vector<pd::Index> dims;
  proxydim->add_option("--dims", dims, "Comma-separated proxy dims")->delimiter(',')->required();
  proxydim->add_option("--seeds", seeds, "Comma-separated seeds")->delimiter(',');

  auto* embed = app.add_subcommand("export-embeddings", "Write penultimate features with labels");
  embed->add_option("model", model_path, "Model JSON")->required();
  embed->add_option("test", test_csv, "Test CSV")->required();

  CLI11_PARSE(app, argc, argv);

  pd::RunOptions opts;
  opts.seed = seed;
  opts.jobs = jobs;
  opts.quiet = quiet;
  opts.timing = !no_timing;

  auto need_config = [&] {
    if (config_path.empty()) throw pd::ConfigError("--config is required for this command");
  };

  try {
    if (*gen) {
      need_config();
      pd::cmd_gen(config_path, output_dir(config_path, out), opts);
    } else if (*train) {
      need_config();
      pd::cmd_train(config_path, output_dir(config_path, out), opts);
    } else if (*eval) {
      const auto record = pd::cmd_eval(model_path, test_csv, out, !no_timing);
      if (out.empty()) std::cout << pd::result_to_json(record, "").dump(1) << '\n';
    } else if (*sweep) {
      need_config();
      if (!pd::cmd_sweep(config_path, rhos, seeds, out.empty() ? "sweep.csv" : out, opts)) return kRuntimeError;
    } else if (*multibias) {
      need_config();
      if (!pd::cmd_multibias(config_path, seeds, out.empty() ? "multibias.csv" : out, opts)) return kRuntimeError;
    } else if (*proxydim) {
      need_config();
      if (!pd::cmd_proxydim(config_path, dims, seeds, out.empty() ? "proxydim.csv" : out, opts)) return kRuntimeError;
    } else if (*embed) {
      if (out.empty()) throw pd::ConfigError("--out is required for export-embeddings");
      pd::cmd_export_embeddings(model_path, test_csv, out);
    }
  } catch (const pd::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const pd::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const pd::ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const pd::IndexError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}
