#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "proxydebias/tensor.hpp"

namespace proxydebias {

using Tensor = BasicTensor<double>;
using Matrix = MatrixX<double>;
using RowVector = RowVectorX<double>;
using Vector = VectorX<double>;
// m×K bias labels, one column per bias attribute.
using LabelMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ProxyPrior { uniform, empirical };

struct ModelConfig {
  Index input_dim = 0;
  std::vector<Index> hidden_dims{64, 32};
  Index num_target_classes = 2;
  // One entry per bias attribute; empty for a model without proxies.
  std::vector<Index> proxy_dims;
  ProxyPrior prior = ProxyPrior::uniform;

  Index feature_dim() const { return hidden_dims.empty() ? input_dim : hidden_dims.back(); }
  Index total_proxy_dim() const;
  Index head_input_dim() const { return feature_dim() + total_proxy_dim(); }
  void validate() const;
};

struct DenseLayer {
  Tensor weight;  // in × out
  Tensor bias;    // 1 × out
};

// Backbone layers (affine + ReLU) and the linear head over
// [backbone features | proxy columns].
struct ModelParams {
  std::vector<DenseLayer> backbone;
  DenseLayer head;

  std::vector<Tensor> backbone_tensors() const;
  std::vector<Tensor> head_tensors() const { return {head.weight, head.bias}; }
  std::vector<Tensor> all_tensors() const;
  ModelParams clone() const;
};

ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

struct ProxyTable {
  Tensor proxies;  // N × M, one row per bias class
  RowVector anchor;
  Vector prior;

  Index num_classes() const { return proxies.rows(); }
  Index dim() const { return proxies.cols(); }
};

struct ProxyBank {
  std::vector<ProxyTable> tables;

  std::size_t num_attributes() const { return tables.size(); }
  bool empty() const { return tables.empty(); }
  Index total_dim() const;
  std::vector<Tensor> proxy_tensors() const;
  void set_trainable(bool on);
  ProxyBank clone() const;
  void validate() const;
};

// Per-attribute prior-weighted mean proxy.
struct InterventionFeature {
  std::vector<RowVector> blocks;

  bool empty() const { return blocks.empty(); }
  RowVector concatenated() const;
};

// Class j of attribute k gets the constant vector j/(N_k-1); uniform prior;
// anchors drawn uniform [0,1) from `seed`.
ProxyBank naive_presets(std::span<const Index> class_counts, std::span<const Index> proxy_dims,
                        std::uint64_t seed);

// Row i is the concatenation over attributes (in index order) of P_k[b_ik].
Tensor select_proxies(const ProxyBank& bank, const LabelMatrix& bias_labels);

Tensor penultimate_features(const ModelParams& params, const Tensor& x);
Tensor head_logits(const ModelParams& params, const Tensor& features, const Tensor& proxies);
Tensor forward(const ModelParams& params, const Tensor& x, const Tensor& proxies);

InterventionFeature intervention_feature(const ProxyBank& bank);

// softmax(forward(x, intervention)). Bias labels are not an input.
Matrix predict_interventional(const ModelParams& params, const InterventionFeature& feature,
                              const Matrix& x);
Matrix predict_interventional(const ModelParams& params, const ProxyBank& bank, const Matrix& x);

// Pre-softmax counterpart of predict_interventional.
Matrix interventional_logits(const ModelParams& params, const InterventionFeature& feature,
                             const Matrix& x);

inline constexpr std::size_t kDefaultBackdoorCap = 4096;

// Exact backdoor sum over the cross product of bias classes:
// sum_b prior(b) * softmax(forward(x, p_b)).
Matrix backdoor_exact(const ModelParams& params, const ProxyBank& bank, const Matrix& x,
                      std::size_t max_combinations = kDefaultBackdoorCap);

// Pre-softmax counterpart: sum_b prior(b) * forward(x, p_b).
Matrix backdoor_logits(const ModelParams& params, const ProxyBank& bank, const Matrix& x,
                       std::size_t max_combinations = kDefaultBackdoorCap);

}  // namespace proxydebias
