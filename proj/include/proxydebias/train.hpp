#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "proxydebias/data.hpp"
#include "proxydebias/model.hpp"
#include "proxydebias/optim.hpp"

namespace proxydebias {

enum class TrainMode { vanilla, naive_pd, active_pd };

std::string_view to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view name);

struct TrainConfig {
  TrainMode mode = TrainMode::active_pd;
  int epochs = 20;
  Index batch_size = 128;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double enhancement_learning_rate = 1e-3;
  // Run the enhancement step on every n-th minibatch.
  int enhancement_every = 1;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const;
};

struct EpochRecord {
  double target_loss = 0;
  std::optional<double> enhancement_loss;
  double train_accuracy = 0;
};

struct History {
  std::vector<EpochRecord> epochs;
};

struct TrainedModel {
  ModelConfig model_config;
  ModelParams params;
  ProxyBank bank;
  InterventionFeature intervention;
  TrainMode mode = TrainMode::vanilla;
  TrainConfig config;

  Matrix predict(const Matrix& x) const {
    return predict_interventional(params, intervention, x);
  }
};

struct TrainResult {
  TrainedModel model;
  History history;
};

struct Batch {
  Tensor x;
  std::vector<int> targets;
  LabelMatrix bias_labels;

  static Batch from(const Dataset& ds, std::span<const Index> rows);
  static Batch from(const Dataset& ds);
};

// theta = backbone + head.
AdamState<double> make_target_optimizer(const ModelParams& params, const TrainConfig& config);
// (P, h); no weight decay.
AdamState<double> make_enhancement_optimizer(const ModelParams& params, const ProxyBank& bank,
                                             const TrainConfig& config);

struct StepResult {
  double loss = 0;
  Index correct = 0;
};

// One Adam update of backbone + head on cross-entropy with the selected
// proxies held constant.
StepResult target_step(ModelParams& params, const ProxyBank& bank, const Batch& batch,
                       AdamState<double>& state);

// alpha^c = Y_c(x, p_b) - Y_c(x, anchor), on pre-softmax logits. Backbone
// features enter as constants, so only the head and proxies are differentiable.
Tensor proxy_importance(const ModelParams& params, const ProxyBank& bank, const Tensor& x,
                        const LabelMatrix& bias_labels);

// One Adam update of proxies and head minimizing mean -log softmax(alpha)_t.
// Backbone and anchors are untouched.
double enhancement_step(TrainMode mode, ModelParams& params, ProxyBank& bank, const Batch& batch,
                        AdamState<double>& state);

// Class counts per attribute, max label + 1 but at least 2.
std::vector<Index> bias_class_counts(const Dataset& ds);

// Model config for a dataset under the given mode. Vanilla drops the proxy block.
ModelConfig model_config_for(const Dataset& ds, TrainMode mode, std::vector<Index> hidden_dims,
                             std::vector<Index> proxy_dims, ProxyPrior prior = ProxyPrior::uniform);

TrainResult train(const Dataset& train_ds, const TrainConfig& config, const ModelConfig& model_config);

}  // namespace proxydebias
