#include "proxydebias/model.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "proxydebias/random.hpp"

namespace proxydebias {

Index ModelConfig::total_proxy_dim() const {
  return std::accumulate(proxy_dims.begin(), proxy_dims.end(), Index{0});
}

void ModelConfig::validate() const {
  if (input_dim <= 0) throw ConfigError("model: input_dim must be positive");
  for (Index h : hidden_dims) {
    if (h <= 0) throw ConfigError("model: hidden_dims entries must be positive");
  }
  if (num_target_classes < 2) throw ConfigError("model: need at least 2 target classes");
  for (Index m : proxy_dims) {
    if (m <= 0) throw ConfigError("model: proxy_dims entries must be positive");
  }
}

std::vector<Tensor> ModelParams::backbone_tensors() const {
  std::vector<Tensor> out;
  for (const auto& layer : backbone) {
    out.push_back(layer.weight);
    out.push_back(layer.bias);
  }
  return out;
}

std::vector<Tensor> ModelParams::all_tensors() const {
  auto out = backbone_tensors();
  out.push_back(head.weight);
  out.push_back(head.bias);
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  for (const auto& layer : backbone) {
    out.backbone.push_back({Tensor::parameter(layer.weight.value()), Tensor::parameter(layer.bias.value())});
  }
  out.head = {Tensor::parameter(head.weight.value()), Tensor::parameter(head.bias.value())};
  return out;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Engine rng = make_engine(seed, Stream::weights);
  auto uniform_matrix = [&rng](Index rows, Index cols, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
    return m;
  };

  ModelParams params;
  Index fan_in = config.input_dim;
  for (Index width : config.hidden_dims) {
    // He-uniform for ReLU layers.
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    params.backbone.push_back({Tensor::parameter(uniform_matrix(fan_in, width, bound)),
                               Tensor::parameter(Matrix::Zero(1, width))});
    fan_in = width;
  }
  const Index head_in = config.head_input_dim();
  const double bound = 1.0 / std::sqrt(static_cast<double>(head_in));
  params.head = {Tensor::parameter(uniform_matrix(head_in, config.num_target_classes, bound)),
                 Tensor::parameter(Matrix::Zero(1, config.num_target_classes))};
  return params;
}

Index ProxyBank::total_dim() const {
  Index total = 0;
  for (const auto& t : tables) total += t.dim();
  return total;
}

std::vector<Tensor> ProxyBank::proxy_tensors() const {
  std::vector<Tensor> out;
  for (const auto& t : tables) out.push_back(t.proxies);
  return out;
}

void ProxyBank::set_trainable(bool on) {
  for (auto& t : tables) t.proxies.set_requires_grad(on);
}

ProxyBank ProxyBank::clone() const {
  ProxyBank out;
  for (const auto& t : tables) {
    Tensor proxies = Tensor::parameter(t.proxies.value());
    proxies.set_requires_grad(t.proxies.requires_grad());
    out.tables.push_back({std::move(proxies), t.anchor, t.prior});
  }
  return out;
}

void ProxyBank::validate() const {
  for (std::size_t k = 0; k < tables.size(); ++k) {
    const auto& t = tables[k];
    const std::string name = "proxy attribute " + std::to_string(k);
    if (t.num_classes() < 1 || t.dim() < 1) throw ConfigError(name + ": empty proxy table");
    if (t.anchor.size() != t.dim()) throw ConfigError(name + ": anchor length differs from proxy dim");
    if (t.prior.size() != t.num_classes()) throw ConfigError(name + ": prior length differs from class count");
    if ((t.prior.array() < 0.0).any()) throw ConfigError(name + ": negative prior weight");
    if (std::abs(t.prior.sum() - 1.0) > 1e-12) throw ConfigError(name + ": prior does not sum to 1");
  }
}

RowVector InterventionFeature::concatenated() const {
  Index total = 0;
  for (const auto& b : blocks) total += b.size();
  RowVector out(total);
  Index offset = 0;
  for (const auto& b : blocks) {
    out.segment(offset, b.size()) = b;
    offset += b.size();
  }
  return out;
}

ProxyBank naive_presets(std::span<const Index> class_counts, std::span<const Index> proxy_dims,
                        std::uint64_t seed) {
  if (class_counts.size() != proxy_dims.size()) {
    throw ConfigError("naive_presets: " + std::to_string(class_counts.size()) +
                      " class counts but " + std::to_string(proxy_dims.size()) + " proxy dims");
  }
  Engine rng = make_engine(seed, Stream::anchors);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ProxyBank bank;
  for (std::size_t k = 0; k < class_counts.size(); ++k) {
    const Index n = class_counts[k];
    const Index m = proxy_dims[k];
    if (n < 2) {
      throw ConfigError("naive_presets: bias attribute " + std::to_string(k) +
                        " needs at least 2 groups, got " + std::to_string(n));
    }
    if (m < 1) throw ConfigError("naive_presets: proxy dim must be positive");
    Matrix table(n, m);
    for (Index j = 0; j < n; ++j) {
      table.row(j).setConstant(static_cast<double>(j) / static_cast<double>(n - 1));
    }
    RowVector anchor(m);
    for (Index i = 0; i < m; ++i) anchor(i) = unit(rng);
    Tensor proxies = Tensor::parameter(std::move(table));
    proxies.set_requires_grad(false);
    bank.tables.push_back({std::move(proxies), std::move(anchor),
                           Vector::Constant(n, 1.0 / static_cast<double>(n))});
  }
  return bank;
}

Tensor select_proxies(const ProxyBank& bank, const LabelMatrix& bias_labels) {
  const Index m = bias_labels.rows();
  if (bank.empty()) return Tensor::constant(Matrix(m, 0));
  if (bias_labels.cols() != static_cast<Index>(bank.num_attributes())) {
    throw ShapeError("select_proxies: " + std::to_string(bias_labels.cols()) +
                     " bias label columns for " + std::to_string(bank.num_attributes()) +
                     " proxy attributes");
  }
  Tensor out;
  for (std::size_t k = 0; k < bank.num_attributes(); ++k) {
    const auto& table = bank.tables[k];
    std::vector<Index> rows(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i) {
      const int b = bias_labels(i, static_cast<Index>(k));
      if (b < 0 || b >= table.num_classes()) {
        throw IndexError("select_proxies: bias label " + std::to_string(b) + " of attribute " +
                         std::to_string(k) + " at row " + std::to_string(i) + " outside [0, " +
                         std::to_string(table.num_classes()) + ")");
      }
      rows[static_cast<std::size_t>(i)] = b;
    }
    Tensor block = gather_rows(table.proxies, std::span<const Index>(rows));
    out = out.defined() ? concat_features(out, block) : block;
  }
  return out;
}

Tensor penultimate_features(const ModelParams& params, const Tensor& x) {
  Tensor h = x;
  for (const auto& layer : params.backbone) {
    if (h.cols() != layer.weight.rows()) {
      throw ShapeError("backbone: input " + h.shape_string() + " for layer weight " +
                       layer.weight.shape_string());
    }
    h = relu(add_row_bias(matmul(h, layer.weight), layer.bias));
  }
  return h;
}

Tensor head_logits(const ModelParams& params, const Tensor& features, const Tensor& proxies) {
  Tensor joined = concat_features(features, proxies);
  if (joined.cols() != params.head.weight.rows()) {
    throw ShapeError("head: input " + joined.shape_string() + " for head weight " +
                     params.head.weight.shape_string());
  }
  return add_row_bias(matmul(joined, params.head.weight), params.head.bias);
}

Tensor forward(const ModelParams& params, const Tensor& x, const Tensor& proxies) {
  return head_logits(params, penultimate_features(params, x), proxies);
}

InterventionFeature intervention_feature(const ProxyBank& bank) {
  InterventionFeature out;
  for (const auto& t : bank.tables) {
    const Matrix& p = t.proxies.value();
    RowVector mean = RowVector::Zero(p.cols());
    for (Index b = 0; b < p.rows(); ++b) mean += t.prior(b) * p.row(b);
    out.blocks.push_back(std::move(mean));
  }
  return out;
}

Matrix interventional_logits(const ModelParams& params, const InterventionFeature& feature,
                             const Matrix& x) {
  const Tensor input = Tensor::constant(x);
  const Matrix proxies = feature.concatenated().replicate(x.rows(), 1);
  return forward(params, input, Tensor::constant(proxies)).value();
}

Matrix predict_interventional(const ModelParams& params, const InterventionFeature& feature,
                              const Matrix& x) {
  return softmax_rows(interventional_logits(params, feature, x));
}

Matrix predict_interventional(const ModelParams& params, const ProxyBank& bank, const Matrix& x) {
  return predict_interventional(params, intervention_feature(bank), x);
}

namespace {

// Calls fn(weight, proxy_row) for every element of the cross product of
// bias classes, in lexicographic attribute order.
template <typename Fn>
void for_each_bias_combination(const ProxyBank& bank, std::size_t cap, Fn&& fn) {
  std::size_t combos = 1;
  for (const auto& t : bank.tables) {
    combos *= static_cast<std::size_t>(t.num_classes());
    if (combos > cap) {
      throw ResourceError("backdoor_exact: bias class cross product exceeds cap of " +
                          std::to_string(cap));
    }
  }
  std::vector<Index> digits(bank.num_attributes(), 0);
  const RowVector base = intervention_feature(bank).concatenated();
  for (std::size_t c = 0; c < combos; ++c) {
    RowVector row = base;
    double weight = 1.0;
    Index offset = 0;
    for (std::size_t k = 0; k < bank.num_attributes(); ++k) {
      const auto& t = bank.tables[k];
      row.segment(offset, t.dim()) = t.proxies.value().row(digits[k]);
      weight *= t.prior(digits[k]);
      offset += t.dim();
    }
    fn(weight, row);
    for (std::size_t k = bank.num_attributes(); k-- > 0;) {
      if (++digits[k] < bank.tables[k].num_classes()) break;
      digits[k] = 0;
    }
  }
}

}  // namespace

Matrix backdoor_exact(const ModelParams& params, const ProxyBank& bank, const Matrix& x,
                      std::size_t max_combinations) {
  const Tensor input = Tensor::constant(x);
  const Tensor features = penultimate_features(params, input);
  Matrix out = Matrix::Zero(x.rows(), params.head.weight.cols());
  for_each_bias_combination(bank, max_combinations, [&](double weight, const RowVector& row) {
    const Tensor proxies = Tensor::constant(row.replicate(x.rows(), 1));
    out += weight * softmax_rows(head_logits(params, features, proxies).value());
  });
  return out;
}

Matrix backdoor_logits(const ModelParams& params, const ProxyBank& bank, const Matrix& x,
                       std::size_t max_combinations) {
  const Tensor input = Tensor::constant(x);
  const Tensor features = penultimate_features(params, input);
  Matrix out = Matrix::Zero(x.rows(), params.head.weight.cols());
  for_each_bias_combination(bank, max_combinations, [&](double weight, const RowVector& row) {
    const Tensor proxies = Tensor::constant(row.replicate(x.rows(), 1));
    out += weight * head_logits(params, features, proxies).value();
  });
  return out;
}

}  // namespace proxydebias
