#include "proxydebias/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

namespace proxydebias {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

std::string config_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

GeneratorConfig ExperimentConfig::test_data() const {
  GeneratorConfig g = data;
  g.n_samples = n_test;
  return g;
}

ModelConfig ExperimentConfig::model_config(const Dataset& train_ds) const {
  return model_config_for(train_ds, train.mode, hidden_dims, proxy_dims, prior);
}

void ExperimentConfig::set_seed(std::uint64_t seed) {
  data.seed = seed;
  train.seed = seed;
}

void ExperimentConfig::validate() const {
  data.validate();
  train.validate();
  const std::size_t k = data.num_attributes();
  if (proxy_dims.empty() || (proxy_dims.size() != 1 && proxy_dims.size() != k)) {
    throw ConfigError("model.proxy_dims needs 1 or " + std::to_string(k) + " entries");
  }
  for (Index m : proxy_dims) {
    if (m <= 0) throw ConfigError("model.proxy_dims entries must be positive");
  }
  for (Index h : hidden_dims) {
    if (h <= 0) throw ConfigError("model.hidden_dims entries must be positive");
  }
  const Index cells = Index{2} << k;
  if (n_test <= 0 || n_test % cells != 0) {
    throw ConfigError("data.n_test must be a positive multiple of " + std::to_string(cells));
  }
}

namespace {

void check_keys(const json& obj, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(section + " must be a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items()) {
    if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + section);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& section) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(section + "." + key + ": " + e.what());
  }
}

}  // namespace

ExperimentConfig parse_experiment_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(doc, "config", {"data", "model", "train", "eval", "output_dir"});

  ExperimentConfig cfg;
  cfg.config_hash = config_hash(json_text);
  if (doc.contains("data")) {
    const auto& d = doc["data"];
    check_keys(d, "data", {"n_samples", "n_test", "dim_target", "dim_bias", "dim_noise", "sep_target",
                           "sep_bias", "noise_sigma", "rho", "seed"});
    read(d, "n_samples", cfg.data.n_samples, "data");
    read(d, "n_test", cfg.n_test, "data");
    read(d, "dim_target", cfg.data.dim_target, "data");
    read(d, "dim_bias", cfg.data.dim_bias, "data");
    read(d, "dim_noise", cfg.data.dim_noise, "data");
    read(d, "sep_target", cfg.data.sep_target, "data");
    read(d, "sep_bias", cfg.data.sep_bias, "data");
    read(d, "noise_sigma", cfg.data.noise_sigma, "data");
    read(d, "rho", cfg.data.rho, "data");
    read(d, "seed", cfg.data.seed, "data");
  }
  if (doc.contains("model")) {
    const auto& m = doc["model"];
    check_keys(m, "model", {"hidden_dims", "proxy_dims", "prior"});
    read(m, "hidden_dims", cfg.hidden_dims, "model");
    read(m, "proxy_dims", cfg.proxy_dims, "model");
    std::string prior = "uniform";
    read(m, "prior", prior, "model");
    if (prior == "uniform") cfg.prior = ProxyPrior::uniform;
    else if (prior == "empirical") cfg.prior = ProxyPrior::empirical;
    else throw ConfigError("model.prior must be 'uniform' or 'empirical'");
  }
  if (doc.contains("train")) {
    const auto& t = doc["train"];
    check_keys(t, "train", {"mode", "epochs", "batch_size", "learning_rate", "weight_decay",
                            "enhancement_learning_rate", "enhancement_every", "seed", "shuffle"});
    std::string mode(to_string(cfg.train.mode));
    read(t, "mode", mode, "train");
    cfg.train.mode = parse_train_mode(mode);
    read(t, "epochs", cfg.train.epochs, "train");
    read(t, "batch_size", cfg.train.batch_size, "train");
    read(t, "learning_rate", cfg.train.learning_rate, "train");
    read(t, "weight_decay", cfg.train.weight_decay, "train");
    read(t, "enhancement_learning_rate", cfg.train.enhancement_learning_rate, "train");
    read(t, "enhancement_every", cfg.train.enhancement_every, "train");
    read(t, "seed", cfg.train.seed, "train");
    read(t, "shuffle", cfg.train.shuffle, "train");
  }
  if (doc.contains("eval")) {
    const auto& e = doc["eval"];
    check_keys(e, "eval", {"counter_p", "metrics"});
    read(e, "counter_p", cfg.eval.counter_p, "eval");
  }
  if (doc.contains("output_dir")) {
    std::string dir;
    read(doc, "output_dir", dir, "config");
    cfg.output_dir = dir;
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

// ---------------------------------------------------------------------------
// Model files

namespace {

json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()},
              {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const json& j) {
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols) {
    throw ConfigError("model file: tensor data length does not match its shape");
  }
  return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

std::vector<double> to_vector(const Eigen::Ref<const RowVector>& v) {
  return {v.data(), v.data() + v.size()};
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"mode", to_string(c.mode)},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"weight_decay", c.weight_decay},
              {"enhancement_learning_rate", c.enhancement_learning_rate},
              {"enhancement_every", c.enhancement_every},
              {"seed", c.seed},
              {"shuffle", c.shuffle}};
}

}  // namespace

json model_to_json(const TrainedModel& model, const ModelProvenance& provenance) {
  const auto& mc = model.model_config;
  json doc;
  doc["format"] = "proxydebias.model";
  doc["version"] = 1;
  doc["config_hash"] = provenance.config_hash;
  doc["mode"] = to_string(model.mode);
  doc["model_config"] = {{"input_dim", mc.input_dim},
                         {"hidden_dims", mc.hidden_dims},
                         {"num_target_classes", mc.num_target_classes},
                         {"proxy_dims", mc.proxy_dims},
                         {"prior", mc.prior == ProxyPrior::uniform ? "uniform" : "empirical"}};
  doc["train_config"] = train_config_to_json(model.config);
  json data = {{"rho", provenance.rho}};
  if (provenance.data_seed) data["seed"] = *provenance.data_seed;
  doc["data"] = data;
  json backbone = json::array();
  for (const auto& layer : model.params.backbone) {
    backbone.push_back({{"weight", matrix_to_json(layer.weight.value())},
                        {"bias", matrix_to_json(layer.bias.value())}});
  }
  doc["backbone"] = backbone;
  doc["head"] = {{"weight", matrix_to_json(model.params.head.weight.value())},
                 {"bias", matrix_to_json(model.params.head.bias.value())}};
  json proxies = json::array();
  for (const auto& t : model.bank.tables) {
    proxies.push_back({{"table", matrix_to_json(t.proxies.value())},
                       {"anchor", to_vector(t.anchor)},
                       {"prior", std::vector<double>(t.prior.data(), t.prior.data() + t.prior.size())}});
  }
  doc["proxies"] = proxies;
  json intervention = json::array();
  for (const auto& b : model.intervention.blocks) intervention.push_back(to_vector(b));
  doc["intervention"] = intervention;
  return doc;
}

TrainedModel model_from_json(const json& doc, ModelProvenance* provenance) {
  try {
    if (doc.at("format") != "proxydebias.model" || doc.at("version") != 1) {
      throw ConfigError("not a proxydebias model file (format/version)");
    }
    TrainedModel model;
    const auto& mc = doc.at("model_config");
    model.model_config.input_dim = mc.at("input_dim").get<Index>();
    model.model_config.hidden_dims = mc.at("hidden_dims").get<std::vector<Index>>();
    model.model_config.num_target_classes = mc.at("num_target_classes").get<Index>();
    model.model_config.proxy_dims = mc.at("proxy_dims").get<std::vector<Index>>();
    model.model_config.prior = mc.at("prior") == "empirical" ? ProxyPrior::empirical : ProxyPrior::uniform;
    model.model_config.validate();
    model.mode = parse_train_mode(doc.at("mode").get<std::string>());

    const auto& tc = doc.at("train_config");
    model.config.mode = model.mode;
    model.config.epochs = tc.at("epochs").get<int>();
    model.config.batch_size = tc.at("batch_size").get<Index>();
    model.config.learning_rate = tc.at("learning_rate").get<double>();
    model.config.weight_decay = tc.at("weight_decay").get<double>();
    model.config.enhancement_learning_rate = tc.at("enhancement_learning_rate").get<double>();
    model.config.enhancement_every = tc.at("enhancement_every").get<int>();
    model.config.seed = tc.at("seed").get<std::uint64_t>();
    model.config.shuffle = tc.at("shuffle").get<bool>();

    for (const auto& layer : doc.at("backbone")) {
      model.params.backbone.push_back({Tensor::parameter(matrix_from_json(layer.at("weight"))),
                                       Tensor::parameter(matrix_from_json(layer.at("bias")))});
    }
    model.params.head = {Tensor::parameter(matrix_from_json(doc.at("head").at("weight"))),
                         Tensor::parameter(matrix_from_json(doc.at("head").at("bias")))};
    for (const auto& p : doc.at("proxies")) {
      const auto anchor = p.at("anchor").get<std::vector<double>>();
      const auto prior = p.at("prior").get<std::vector<double>>();
      Tensor table = Tensor::parameter(matrix_from_json(p.at("table")));
      table.set_requires_grad(false);
      model.bank.tables.push_back({std::move(table),
                                   Eigen::Map<const RowVector>(anchor.data(), static_cast<Index>(anchor.size())),
                                   Eigen::Map<const Vector>(prior.data(), static_cast<Index>(prior.size()))});
    }
    model.bank.validate();
    for (const auto& b : doc.at("intervention")) {
      const auto v = b.get<std::vector<double>>();
      model.intervention.blocks.emplace_back(Eigen::Map<const RowVector>(v.data(), static_cast<Index>(v.size())));
    }

    // Structural consistency with the declared config.
    const ModelConfig& cfg = model.model_config;
    if (model.params.backbone.size() != cfg.hidden_dims.size() ||
        model.params.head.weight.rows() != cfg.head_input_dim() ||
        model.params.head.weight.cols() != cfg.num_target_classes ||
        model.bank.num_attributes() != cfg.proxy_dims.size() ||
        model.intervention.blocks.size() != cfg.proxy_dims.size()) {
      throw ConfigError("model file: tensors do not match model_config");
    }
    Index fan_in = cfg.input_dim;
    for (std::size_t i = 0; i < cfg.hidden_dims.size(); ++i) {
      const auto& layer = model.params.backbone[i];
      if (layer.weight.rows() != fan_in || layer.weight.cols() != cfg.hidden_dims[i] ||
          layer.bias.cols() != cfg.hidden_dims[i]) {
        throw ConfigError("model file: backbone layer " + std::to_string(i) + " has the wrong shape");
      }
      fan_in = cfg.hidden_dims[i];
    }

    if (provenance) {
      provenance->config_hash = doc.value("config_hash", "");
      if (doc.contains("data")) {
        provenance->rho = doc["data"].value("rho", std::vector<double>{});
        if (doc["data"].contains("seed")) provenance->data_seed = doc["data"]["seed"].get<std::uint64_t>();
      }
    }
    return model;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model file: ") + e.what());
  }
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

Dataset read_dataset(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("dataset file " + path.string() + " does not exist");
  return load_csv(path);
}

}  // namespace

void save_model(const TrainedModel& model, const ModelProvenance& provenance, const fs::path& path) {
  write_text(path, model_to_json(model, provenance).dump() + "\n");
}

TrainedModel load_model(const fs::path& path, ModelProvenance* provenance) {
  return model_from_json(read_json(path), provenance);
}

json history_to_json(const History& history, std::string_view hash) {
  json epochs = json::array();
  for (std::size_t i = 0; i < history.epochs.size(); ++i) {
    const auto& e = history.epochs[i];
    json rec = {{"epoch", i + 1}, {"target_loss", e.target_loss}, {"train_accuracy", e.train_accuracy}};
    rec["enhancement_loss"] = e.enhancement_loss ? json(*e.enhancement_loss) : json(nullptr);
    epochs.push_back(rec);
  }
  return json{{"config_hash", hash}, {"epochs", epochs}};
}

// ---------------------------------------------------------------------------
// Results

json result_to_json(const ResultRecord& r, std::string_view hash) {
  const auto& m = r.metrics;
  json doc = {{"config_hash", hash},
              {"mode", r.mode},
              {"seed", r.seed},
              {"rho", r.rho},
              {"proxy_dim", r.proxy_dim},
              {"accuracy", m.accuracy},
              {"equalodds", m.equalodds},
              {"equal_opportunity", m.equal_opportunity},
              {"statistical_parity", m.statistical_parity},
              {"counter_p", m.counter_p},
              {"n_evaluated", m.n_evaluated},
              {"wall_time_seconds", r.wall_time_seconds},
              {"predictions", m.predictions}};
  if (!r.error.empty()) doc["error"] = r.error;
  return doc;
}

namespace {

std::string num(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return ec == std::errc{} ? std::string(buf, end) : std::string("nan");
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ' ';
  }
  return s;
}

}  // namespace

std::string results_csv(std::span<const ResultRecord> records, std::size_t k) {
  const bool any_error = std::any_of(records.begin(), records.end(),
                                     [](const ResultRecord& r) { return !r.error.empty(); });
  std::ostringstream out;
  out << "mode,seed";
  for (std::size_t i = 0; i < k; ++i) out << ",rho" << i;
  out << ",proxy_dim,accuracy";
  for (std::size_t i = 0; i < k; ++i) out << ",equalodds" << i;
  out << ",equal_opportunity0,statistical_parity0,counter_p0,wall_time_seconds";
  if (any_error) out << ",error";
  out << '\n';

  for (const auto& r : records) {
    out << r.mode << ',' << r.seed;
    for (std::size_t i = 0; i < k; ++i) out << ',' << (i < r.rho.size() ? num(r.rho[i]) : "");
    out << ',' << r.proxy_dim;
    const auto& m = r.metrics;
    const bool ok = r.error.empty();
    auto field = [&](const std::vector<double>& v, std::size_t i) {
      return ok && i < v.size() ? num(v[i]) : std::string();
    };
    out << ',' << (ok ? num(m.accuracy) : "");
    for (std::size_t i = 0; i < k; ++i) out << ',' << field(m.equalodds, i);
    out << ',' << field(m.equal_opportunity, 0) << ',' << field(m.statistical_parity, 0) << ','
        << field(m.counter_p, 0) << ',' << num(r.wall_time_seconds);
    if (any_error) out << ',' << sanitize(r.error);
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Trials

ResultRecord run_trial(const Trial& trial, bool timing) {
  const auto start = std::chrono::steady_clock::now();
  ResultRecord record;
  record.mode = trial.label.empty() ? std::string(to_string(trial.mode)) : trial.label;
  record.seed = trial.seed;
  record.rho = trial.config.data.rho;
  try {
    ExperimentConfig cfg = trial.config;
    cfg.set_seed(trial.seed);
    cfg.train.mode = trial.mode;
    cfg.validate();
    const Dataset train_ds = generate(cfg.data);
    const Dataset test_ds = balanced_test(cfg.test_data());
    Dataset fit_ds = trial.train_attributes ? train_ds.with_attributes(*trial.train_attributes) : train_ds;
    std::vector<Index> proxy_dims = cfg.proxy_dims;
    if (trial.train_attributes && proxy_dims.size() > 1) {
      std::vector<Index> picked;
      for (Index a : *trial.train_attributes) picked.push_back(proxy_dims[static_cast<std::size_t>(a)]);
      proxy_dims = picked;
    }
    const ModelConfig mc = model_config_for(fit_ds, cfg.train.mode, cfg.hidden_dims, proxy_dims, cfg.prior);
    const TrainResult result = train(fit_ds, cfg.train, mc);
    record.proxy_dim = mc.proxy_dims.empty() ? 0 : mc.proxy_dims.front();
    record.metrics = evaluate(result.model, test_ds, cfg.eval.counter_p);
  } catch (const std::exception& e) {
    record.error = e.what();
  }
  if (timing) {
    record.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return record;
}

std::vector<ResultRecord> run_trials(std::span<const Trial> trials, int jobs, bool timing) {
  std::vector<ResultRecord> out(trials.size());
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1,
                                                      std::max<std::size_t>(trials.size(), 1));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next.fetch_add(1); i < trials.size(); i = next.fetch_add(1)) {
      out[i] = run_trial(trials[i], timing);
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  return out;
}

std::vector<Trial> sweep_trials(const ExperimentConfig& config, std::span<const double> rhos,
                                std::span<const std::uint64_t> seeds) {
  if (rhos.empty()) throw ConfigError("sweep: rho list is empty");
  if (seeds.empty()) throw ConfigError("sweep: seed list is empty");
  std::vector<Trial> trials;
  for (double rho : rhos) {
    for (std::uint64_t seed : seeds) {
      for (TrainMode mode : {TrainMode::vanilla, TrainMode::active_pd}) {
        Trial t{config, mode, seed, std::string(to_string(mode)), std::nullopt};
        t.config.data.rho.assign(config.data.num_attributes(), rho);
        t.config.validate();
        trials.push_back(std::move(t));
      }
    }
  }
  std::stable_sort(trials.begin(), trials.end(), [](const Trial& a, const Trial& b) {
    return std::tie(a.config.data.rho, a.seed, a.label) < std::tie(b.config.data.rho, b.seed, b.label);
  });
  return trials;
}

std::vector<Trial> multibias_trials(const ExperimentConfig& config, std::span<const std::uint64_t> seeds) {
  if (config.data.num_attributes() != 2) {
    throw ConfigError("multibias: config must declare exactly 2 bias attributes, found " +
                      std::to_string(config.data.num_attributes()));
  }
  if (seeds.empty()) throw ConfigError("multibias: seed list is empty");
  std::vector<Trial> trials;
  for (std::uint64_t seed : seeds) {
    trials.push_back({config, TrainMode::vanilla, seed, "vanilla", std::nullopt});
    trials.push_back({config, TrainMode::active_pd, seed, "active_pd", std::nullopt});
    for (Index k = 0; k < 2; ++k) {
      trials.push_back({config, TrainMode::active_pd, seed, "active_pd_single" + std::to_string(k),
                        std::vector<Index>{k}});
    }
  }
  std::stable_sort(trials.begin(), trials.end(), [](const Trial& a, const Trial& b) {
    return std::tie(a.seed, a.label) < std::tie(b.seed, b.label);
  });
  return trials;
}

std::vector<Trial> proxydim_trials(const ExperimentConfig& config, std::span<const Index> dims,
                                   std::span<const std::uint64_t> seeds) {
  if (dims.empty()) throw ConfigError("proxydim: dims list is empty");
  if (seeds.empty()) throw ConfigError("proxydim: seed list is empty");
  std::vector<Trial> trials;
  for (Index dim : dims) {
    if (dim <= 0) throw ConfigError("proxydim: dims must be positive");
    for (std::uint64_t seed : seeds) {
      Trial t{config, TrainMode::active_pd, seed, "active_pd", std::nullopt};
      t.config.proxy_dims = {dim};
      trials.push_back(std::move(t));
    }
  }
  return trials;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

ExperimentConfig load_with_overrides(const fs::path& path, const RunOptions& options) {
  ExperimentConfig cfg = load_experiment_config(path);
  if (options.seed) cfg.set_seed(*options.seed);
  return cfg;
}

bool write_results(std::span<const ResultRecord> records, std::size_t k, const fs::path& out_csv,
                   const RunOptions& options) {
  write_text(out_csv, results_csv(records, k));
  const bool ok = std::all_of(records.begin(), records.end(),
                              [](const ResultRecord& r) { return r.error.empty(); });
  if (!options.quiet) {
    std::cerr << "wrote " << records.size() << " rows to " << out_csv.string()
              << (ok ? "" : " (some trials failed)") << '\n';
  }
  return ok;
}

}  // namespace

void cmd_gen(const fs::path& config_path, const fs::path& out_dir, const RunOptions& options) {
  const ExperimentConfig cfg = load_with_overrides(config_path, options);
  fs::create_directories(out_dir);
  save_csv(generate(cfg.data), out_dir / "train.csv");
  save_csv(balanced_test(cfg.test_data()), out_dir / "test.csv");
}

void cmd_train(const fs::path& config_path, const fs::path& out_dir, const RunOptions& options) {
  const ExperimentConfig cfg = load_with_overrides(config_path, options);
  const Dataset train_ds = read_dataset(out_dir / "train.csv");
  if (train_ds.feature_dim() != cfg.data.feature_dim() ||
      train_ds.num_attributes() != cfg.data.num_attributes()) {
    throw ConfigError("train.csv has " + std::to_string(train_ds.feature_dim()) + " features and " +
                      std::to_string(train_ds.num_attributes()) + " bias columns; config expects " +
                      std::to_string(cfg.data.feature_dim()) + " and " +
                      std::to_string(cfg.data.num_attributes()));
  }
  const TrainResult result = train(train_ds, cfg.train, cfg.model_config(train_ds));
  const ModelProvenance provenance{cfg.config_hash, cfg.data.rho, cfg.data.seed};
  save_model(result.model, provenance, out_dir / "model.json");
  write_text(out_dir / "history.json", history_to_json(result.history, cfg.config_hash).dump(1) + "\n");
}

ResultRecord cmd_eval(const fs::path& model_path, const fs::path& test_csv, const fs::path& out_json,
                      bool timing) {
  ModelProvenance provenance;
  const TrainedModel model = load_model(model_path, &provenance);
  const Dataset test = read_dataset(test_csv);
  if (test.feature_dim() != model.model_config.input_dim) {
    throw ConfigError("test set has " + std::to_string(test.feature_dim()) +
                      " features but the model expects " + std::to_string(model.model_config.input_dim));
  }
  const auto start = std::chrono::steady_clock::now();
  ResultRecord record;
  record.mode = std::string(to_string(model.mode));
  record.seed = model.config.seed;
  record.rho = provenance.rho;
  record.proxy_dim = model.model_config.proxy_dims.empty() ? 0 : model.model_config.proxy_dims.front();
  record.metrics = evaluate(model, test, true);
  if (timing) record.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!out_json.empty()) write_text(out_json, result_to_json(record, provenance.config_hash).dump(1) + "\n");
  return record;
}

bool cmd_sweep(const fs::path& config_path, std::span<const double> rhos,
               std::span<const std::uint64_t> seeds, const fs::path& out_csv, const RunOptions& options) {
  const ExperimentConfig cfg = load_with_overrides(config_path, options);
  const auto trials = sweep_trials(cfg, rhos, seeds);
  const auto records = run_trials(trials, options.jobs, options.timing);
  return write_results(records, cfg.data.num_attributes(), out_csv, options);
}

bool cmd_multibias(const fs::path& config_path, std::span<const std::uint64_t> seeds,
                   const fs::path& out_csv, const RunOptions& options) {
  ExperimentConfig cfg = load_with_overrides(config_path, options);
  const auto trials = multibias_trials(cfg, seeds);
  const auto records = run_trials(trials, options.jobs, options.timing);
  return write_results(records, 2, out_csv, options);
}

bool cmd_proxydim(const fs::path& config_path, std::span<const Index> dims,
                  std::span<const std::uint64_t> seeds, const fs::path& out_csv, const RunOptions& options) {
  const ExperimentConfig cfg = load_with_overrides(config_path, options);
  const auto trials = proxydim_trials(cfg, dims, seeds);
  const auto records = run_trials(trials, options.jobs, options.timing);
  return write_results(records, cfg.data.num_attributes(), out_csv, options);
}

void cmd_export_embeddings(const fs::path& model_path, const fs::path& test_csv, const fs::path& out_csv) {
  const TrainedModel model = load_model(model_path);
  const Dataset test = read_dataset(test_csv);
  if (test.feature_dim() != model.model_config.input_dim) {
    throw ConfigError("test set has " + std::to_string(test.feature_dim()) +
                      " features but the model expects " + std::to_string(model.model_config.input_dim));
  }
  const Matrix features = penultimate_features(model.params, Tensor::constant(test.features)).value();
  std::ostringstream out;
  for (Index j = 0; j < features.cols(); ++j) out << 'h' << j << ',';
  out << 't';
  for (std::size_t k = 0; k < test.num_attributes(); ++k) out << ",b" << k;
  out << '\n';
  for (Index i = 0; i < features.rows(); ++i) {
    for (Index j = 0; j < features.cols(); ++j) out << num(features(i, j)) << ',';
    out << test.targets[static_cast<std::size_t>(i)];
    for (Index k = 0; k < test.bias_labels.cols(); ++k) out << ',' << test.bias_labels(i, k);
    out << '\n';
  }
  write_text(out_csv, out.str());
}

}  // namespace proxydebias
