#include "proxydebias/train.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "proxydebias/random.hpp"

namespace proxydebias {

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::vanilla: return "vanilla";
    case TrainMode::naive_pd: return "naive_pd";
    case TrainMode::active_pd: return "active_pd";
  }
  return "unknown";
}

TrainMode parse_train_mode(std::string_view name) {
  if (name == "vanilla") return TrainMode::vanilla;
  if (name == "naive_pd") return TrainMode::naive_pd;
  if (name == "active_pd") return TrainMode::active_pd;
  throw ConfigError("unknown training mode '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (epochs <= 0) throw ConfigError("train: epochs must be positive");
  if (batch_size <= 0) throw ConfigError("train: batch_size must be positive");
  if (!(learning_rate >= 0.0) || !(enhancement_learning_rate >= 0.0) || !(weight_decay >= 0.0)) {
    throw ConfigError("train: rates must be non-negative");
  }
  if (enhancement_every <= 0) throw ConfigError("train: enhancement_every must be positive");
}

Batch Batch::from(const Dataset& ds, std::span<const Index> rows) {
  Batch b;
  Matrix x(static_cast<Index>(rows.size()), ds.feature_dim());
  b.bias_labels.resize(static_cast<Index>(rows.size()), ds.bias_labels.cols());
  b.targets.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Index>(i)) = ds.features.row(rows[i]);
    b.bias_labels.row(static_cast<Index>(i)) = ds.bias_labels.row(rows[i]);
    b.targets.push_back(ds.targets[static_cast<std::size_t>(rows[i])]);
  }
  b.x = Tensor::constant(std::move(x));
  return b;
}

Batch Batch::from(const Dataset& ds) {
  return Batch{Tensor::constant(ds.features), ds.targets, ds.bias_labels};
}

AdamState<double> make_target_optimizer(const ModelParams& params, const TrainConfig& config) {
  AdamOptions<double> opts;
  opts.learning_rate = config.learning_rate;
  opts.weight_decay = config.weight_decay;
  const auto tensors = params.all_tensors();
  return AdamState<double>(tensors, opts);
}

namespace {

std::vector<Tensor> enhancement_tensors(const ModelParams& params, const ProxyBank& bank) {
  auto out = bank.proxy_tensors();
  out.push_back(params.head.weight);
  out.push_back(params.head.bias);
  return out;
}

}  // namespace

AdamState<double> make_enhancement_optimizer(const ModelParams& params, const ProxyBank& bank,
                                             const TrainConfig& config) {
  AdamOptions<double> opts;
  opts.learning_rate = config.enhancement_learning_rate;
  const auto tensors = enhancement_tensors(params, bank);
  return AdamState<double>(tensors, opts);
}

StepResult target_step(ModelParams& params, const ProxyBank& bank, const Batch& batch,
                       AdamState<double>& state) {
  if (batch.x.rows() == 0) throw ContractError("target_step: empty batch");
  const Tensor proxies = select_proxies(bank, batch.bias_labels).detached();
  const Tensor logits = forward(params, batch.x, proxies);
  const Tensor loss = softmax_cross_entropy(logits, std::span<const int>(batch.targets));

  StepResult result;
  result.loss = loss.item();
  for (Index i = 0; i < logits.rows(); ++i) {
    Index predicted = 0;
    logits.value().row(i).maxCoeff(&predicted);
    result.correct += predicted == batch.targets[static_cast<std::size_t>(i)];
  }

  auto tensors = params.all_tensors();
  zero_grads(std::span<Tensor>(tensors));
  loss.backward();
  adam_step(std::span<Tensor>(tensors), state);
  return result;
}

namespace {

Tensor anchor_block(const ProxyBank& bank, Index rows) {
  RowVector anchors(bank.total_dim());
  Index offset = 0;
  for (const auto& t : bank.tables) {
    anchors.segment(offset, t.dim()) = t.anchor;
    offset += t.dim();
  }
  return Tensor::constant(anchors.replicate(rows, 1));
}

}  // namespace

Tensor proxy_importance(const ModelParams& params, const ProxyBank& bank, const Tensor& x,
                        const LabelMatrix& bias_labels) {
  const Tensor features = penultimate_features(params, x.detached()).detached();
  const Tensor factual = head_logits(params, features, select_proxies(bank, bias_labels));
  const Tensor counterfactual = head_logits(params, features, anchor_block(bank, x.rows()));
  return factual - counterfactual;
}

double enhancement_step(TrainMode mode, ModelParams& params, ProxyBank& bank, const Batch& batch,
                        AdamState<double>& state) {
  if (mode != TrainMode::active_pd) {
    throw ContractError("enhancement_step is only defined for active_pd, not " +
                        std::string(to_string(mode)));
  }
  if (bank.empty()) throw ContractError("enhancement_step: model has no proxy features");
  if (batch.x.rows() == 0) throw ContractError("enhancement_step: empty batch");

  auto tensors = enhancement_tensors(params, bank);
  zero_grads(std::span<Tensor>(tensors));
  const Tensor alpha = proxy_importance(params, bank, batch.x, batch.bias_labels);
  const Tensor loss = softmax_cross_entropy(alpha, std::span<const int>(batch.targets));
  loss.backward();
  adam_step(std::span<Tensor>(tensors), state);
  return loss.item();
}

std::vector<Index> bias_class_counts(const Dataset& ds) {
  std::vector<Index> counts;
  for (Index k = 0; k < ds.bias_labels.cols(); ++k) {
    const int max_label = ds.size() == 0 ? 0 : ds.bias_labels.col(k).maxCoeff();
    counts.push_back(std::max<Index>(2, max_label + 1));
  }
  return counts;
}

ModelConfig model_config_for(const Dataset& ds, TrainMode mode, std::vector<Index> hidden_dims,
                             std::vector<Index> proxy_dims, ProxyPrior prior) {
  ModelConfig mc;
  mc.input_dim = ds.feature_dim();
  mc.hidden_dims = std::move(hidden_dims);
  const int max_target = ds.targets.empty() ? 1 : *std::max_element(ds.targets.begin(), ds.targets.end());
  mc.num_target_classes = std::max(2, max_target + 1);
  if (mode != TrainMode::vanilla) {
    if (proxy_dims.size() == 1 && ds.num_attributes() > 1) {
      proxy_dims.assign(ds.num_attributes(), proxy_dims.front());
    }
    mc.proxy_dims = std::move(proxy_dims);
  }
  mc.prior = prior;
  return mc;
}

TrainResult train(const Dataset& train_ds, const TrainConfig& config, const ModelConfig& model_config) {
  config.validate();
  model_config.validate();
  train_ds.validate();
  if (train_ds.size() == 0) throw ConfigError("train: empty training set");
  if (model_config.input_dim != train_ds.feature_dim()) {
    throw ConfigError("train: model input_dim " + std::to_string(model_config.input_dim) +
                      " but dataset has " + std::to_string(train_ds.feature_dim()) + " features");
  }
  for (int t : train_ds.targets) {
    if (t >= model_config.num_target_classes) {
      throw ConfigError("train: target label " + std::to_string(t) + " exceeds class count");
    }
  }
  const bool uses_proxies = config.mode != TrainMode::vanilla;
  if (!uses_proxies && !model_config.proxy_dims.empty()) {
    throw ConfigError("train: vanilla mode takes no proxy dims");
  }
  if (uses_proxies && model_config.proxy_dims.size() != train_ds.num_attributes()) {
    throw ConfigError("train: " + std::to_string(model_config.proxy_dims.size()) +
                      " proxy blocks for " + std::to_string(train_ds.num_attributes()) +
                      " bias attributes");
  }

  TrainResult result;
  TrainedModel& model = result.model;
  model.model_config = model_config;
  model.mode = config.mode;
  model.config = config;
  model.params = init_params(model_config, config.seed);

  if (uses_proxies) {
    const auto counts = bias_class_counts(train_ds);
    model.bank = naive_presets(counts, model_config.proxy_dims, config.seed);
    if (model_config.prior == ProxyPrior::empirical) {
      for (std::size_t k = 0; k < counts.size(); ++k) {
        Vector freq = Vector::Zero(counts[k]);
        for (Index i = 0; i < train_ds.size(); ++i) freq(train_ds.bias_labels(i, static_cast<Index>(k))) += 1.0;
        model.bank.tables[k].prior = freq / static_cast<double>(train_ds.size());
      }
    }
    model.bank.set_trainable(config.mode == TrainMode::active_pd);
  }

  AdamState<double> target_opt = make_target_optimizer(model.params, config);
  AdamState<double> enhance_opt;
  if (config.mode == TrainMode::active_pd) {
    enhance_opt = make_enhancement_optimizer(model.params, model.bank, config);
  }

  std::vector<Index> order(static_cast<std::size_t>(train_ds.size()));
  std::iota(order.begin(), order.end(), Index{0});
  Engine shuffle_rng = make_engine(config.seed, Stream::shuffle);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) std::shuffle(order.begin(), order.end(), shuffle_rng);
    double target_loss = 0;
    double enhance_loss = 0;
    int batches = 0;
    int enhance_batches = 0;
    Index correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t len = std::min(order.size() - start, static_cast<std::size_t>(config.batch_size));
      const Batch batch = Batch::from(train_ds, std::span<const Index>(order).subspan(start, len));

      const StepResult step = target_step(model.params, model.bank, batch, target_opt);
      target_loss += step.loss;
      correct += step.correct;
      if (config.mode == TrainMode::active_pd && batches % config.enhancement_every == 0) {
        enhance_loss += enhancement_step(config.mode, model.params, model.bank, batch, enhance_opt);
        ++enhance_batches;
      }
      ++batches;
    }
    EpochRecord record;
    record.target_loss = target_loss / batches;
    if (enhance_batches > 0) record.enhancement_loss = enhance_loss / enhance_batches;
    record.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_ds.size());
    result.history.epochs.push_back(record);
  }

  model.intervention = intervention_feature(model.bank);
  return result;
}

}  // namespace proxydebias
