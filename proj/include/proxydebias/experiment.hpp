#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "proxydebias/data.hpp"
#include "proxydebias/metrics.hpp"
#include "proxydebias/train.hpp"

namespace proxydebias {

struct EvalOptions {
  bool counter_p = true;
};

// One JSON document with "data", "model", "train", "eval" and "output_dir".
struct ExperimentConfig {
  GeneratorConfig data;
  Index n_test = 800;
  std::vector<Index> hidden_dims{64, 32};
  // One entry per bias attribute, or a single entry shared by all of them.
  std::vector<Index> proxy_dims{100};
  ProxyPrior prior = ProxyPrior::uniform;
  TrainConfig train;
  EvalOptions eval;
  std::filesystem::path output_dir = ".";
  std::string config_hash;

  GeneratorConfig test_data() const;
  ModelConfig model_config(const Dataset& train_ds) const;
  void set_seed(std::uint64_t seed);
  void validate() const;
};

// 64-bit FNV-1a of the config bytes, as 16 hex digits.
std::string config_hash(std::string_view bytes);

ExperimentConfig parse_experiment_config(std::string_view json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Optional data provenance carried in model files.
struct ModelProvenance {
  std::string config_hash;
  std::vector<double> rho;
  std::optional<std::uint64_t> data_seed;
};

nlohmann::json model_to_json(const TrainedModel& model, const ModelProvenance& provenance);
TrainedModel model_from_json(const nlohmann::json& doc, ModelProvenance* provenance = nullptr);
void save_model(const TrainedModel& model, const ModelProvenance& provenance,
                const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path, ModelProvenance* provenance = nullptr);
nlohmann::json history_to_json(const History& history, std::string_view config_hash);

struct ResultRecord {
  std::string mode;
  std::uint64_t seed = 0;
  std::vector<double> rho;
  Index proxy_dim = 0;
  MetricsReport metrics;
  double wall_time_seconds = 0;
  std::string error;
};

nlohmann::json result_to_json(const ResultRecord& record, std::string_view config_hash);

// Fixed header: mode,seed,rho0[,rho1],proxy_dim,accuracy,equalodds0[,equalodds1],
// equal_opportunity0,statistical_parity0,counter_p0,wall_time_seconds[,error].
// The error column is present only when some record failed.
std::string results_csv(std::span<const ResultRecord> records, std::size_t num_attributes);

// One gen -> train -> eval unit of a sweep.
struct Trial {
  ExperimentConfig config;
  TrainMode mode = TrainMode::vanilla;
  std::uint64_t seed = 0;
  std::string label;
  // Train on a subset of bias attributes; evaluation still covers all.
  std::optional<std::vector<Index>> train_attributes;
};

ResultRecord run_trial(const Trial& trial, bool timing = true);
// Runs trials on up to `jobs` threads; output order equals input order.
std::vector<ResultRecord> run_trials(std::span<const Trial> trials, int jobs, bool timing = true);

// Sorted by (rho, seed, mode).
std::vector<Trial> sweep_trials(const ExperimentConfig& config, std::span<const double> rhos,
                                std::span<const std::uint64_t> seeds);
// Vanilla and active_pd with both proxy blocks, plus single-block active_pd
// runs ("active_pd_single0", "active_pd_single1"). Sorted by (seed, mode).
std::vector<Trial> multibias_trials(const ExperimentConfig& config, std::span<const std::uint64_t> seeds);
// active_pd per proxy dim, sorted by (dim, seed).
std::vector<Trial> proxydim_trials(const ExperimentConfig& config, std::span<const Index> dims,
                                   std::span<const std::uint64_t> seeds);

// Command surface used by the CLI. Each throws ConfigError / ParseError for
// validation failures and other exceptions for runtime failures.
struct RunOptions {
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool timing = true;
  bool quiet = false;
};

void cmd_gen(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
             const RunOptions& options = {});
void cmd_train(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
               const RunOptions& options = {});
ResultRecord cmd_eval(const std::filesystem::path& model_path, const std::filesystem::path& test_csv,
                      const std::filesystem::path& out_json, bool timing = true);
// The sweep-style commands return false when any trial failed.
bool cmd_sweep(const std::filesystem::path& config_path, std::span<const double> rhos,
               std::span<const std::uint64_t> seeds, const std::filesystem::path& out_csv,
               const RunOptions& options = {});
bool cmd_multibias(const std::filesystem::path& config_path, std::span<const std::uint64_t> seeds,
                   const std::filesystem::path& out_csv, const RunOptions& options = {});
bool cmd_proxydim(const std::filesystem::path& config_path, std::span<const Index> dims,
                  std::span<const std::uint64_t> seeds, const std::filesystem::path& out_csv,
                  const RunOptions& options = {});
void cmd_export_embeddings(const std::filesystem::path& model_path,
                           const std::filesystem::path& test_csv, const std::filesystem::path& out_csv);

}  // namespace proxydebias
