#include "proxydebias/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>

namespace proxydebias {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw ContractError(std::string(op) + ": length mismatch " + std::to_string(a) + " vs " +
                        std::to_string(b));
  }
  if (a == 0) throw ContractError(std::string(op) + ": empty input");
}

std::vector<int> distinct(std::span<const int> values) {
  std::set<int> s(values.begin(), values.end());
  return {s.begin(), s.end()};
}

std::vector<int> groups_of(std::span<const int> groups, const char* op) {
  auto out = distinct(groups);
  if (out.size() < 2) {
    throw ContractError(std::string(op) + ": need at least 2 groups, found " + std::to_string(out.size()));
  }
  return out;
}

// Pr(pred == t | target == t, group == g)
double recall(std::span<const int> predictions, std::span<const int> targets,
              std::span<const int> groups, int g, int t, const char* op) {
  std::size_t hits = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (groups[i] != g || targets[i] != t) continue;
    ++total;
    hits += predictions[i] == t;
  }
  if (total == 0) {
    throw UndefinedRateError(std::string(op) + ": no samples with group " + std::to_string(g) +
                             " and target " + std::to_string(t));
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

template <typename GapFn>
double mean_over_pairs(const std::vector<int>& groups, GapFn&& gap) {
  double total = 0;
  int pairs = 0;
  for (std::size_t a = 0; a < groups.size(); ++a) {
    for (std::size_t b = a + 1; b < groups.size(); ++b) {
      total += gap(groups[a], groups[b]);
      ++pairs;
    }
  }
  return total / pairs;
}

}  // namespace

double accuracy(std::span<const int> predictions, std::span<const int> targets) {
  check_lengths(predictions.size(), targets.size(), "accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == targets[i];
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double equalodds(std::span<const int> predictions, std::span<const int> targets,
                 std::span<const int> groups) {
  check_lengths(predictions.size(), targets.size(), "equalodds");
  check_lengths(predictions.size(), groups.size(), "equalodds");
  const auto gs = groups_of(groups, "equalodds");
  const auto classes = distinct(targets);
  return mean_over_pairs(gs, [&](int g0, int g1) {
    double sum = 0;
    for (int t : classes) {
      sum += std::abs(recall(predictions, targets, groups, g0, t, "equalodds") -
                      recall(predictions, targets, groups, g1, t, "equalodds"));
    }
    return sum / static_cast<double>(classes.size());
  });
}

double equal_opportunity(std::span<const int> predictions, std::span<const int> targets,
                         std::span<const int> groups, int positive_class) {
  check_lengths(predictions.size(), targets.size(), "equal_opportunity");
  check_lengths(predictions.size(), groups.size(), "equal_opportunity");
  const auto gs = groups_of(groups, "equal_opportunity");
  return mean_over_pairs(gs, [&](int g0, int g1) {
    return std::abs(recall(predictions, targets, groups, g0, positive_class, "equal_opportunity") -
                    recall(predictions, targets, groups, g1, positive_class, "equal_opportunity"));
  });
}

double statistical_parity(std::span<const int> predictions, std::span<const int> groups,
                          int positive_class) {
  check_lengths(predictions.size(), groups.size(), "statistical_parity");
  const auto gs = groups_of(groups, "statistical_parity");
  std::map<int, std::pair<std::size_t, std::size_t>> counts;  // group -> (positive, total)
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    auto& c = counts[groups[i]];
    c.first += predictions[i] == positive_class;
    c.second += 1;
  }
  auto rate = [&](int g) {
    const auto& c = counts.at(g);
    return static_cast<double>(c.first) / static_cast<double>(c.second);
  };
  return mean_over_pairs(gs, [&](int g0, int g1) { return std::abs(rate(g0) - rate(g1)); });
}

double counter_p(const ModelParams& params, const ProxyBank& bank, const Matrix& x, std::size_t k) {
  if (k >= bank.num_attributes()) {
    throw ContractError("counter_p: model has no proxy attribute " + std::to_string(k));
  }
  const auto& table = bank.tables[k];
  if (table.num_classes() < 2) throw ContractError("counter_p: attribute needs at least 2 classes");

  const Tensor features = penultimate_features(params, Tensor::constant(x));
  const RowVector base = intervention_feature(bank).concatenated();
  Index offset = 0;
  for (std::size_t j = 0; j < k; ++j) offset += bank.tables[j].dim();

  std::vector<Matrix> probs;
  for (Index b = 0; b < table.num_classes(); ++b) {
    RowVector row = base;
    row.segment(offset, table.dim()) = table.proxies.value().row(b);
    const Tensor proxies = Tensor::constant(row.replicate(x.rows(), 1));
    probs.push_back(softmax_rows(head_logits(params, features, proxies).value()));
  }

  const double classes = static_cast<double>(params.head.weight.cols());
  double total = 0;
  int pairs = 0;
  for (std::size_t a = 0; a < probs.size(); ++a) {
    for (std::size_t b = a + 1; b < probs.size(); ++b) {
      total += (probs[a] - probs[b]).cwiseAbs().rowwise().sum().mean() / classes;
      ++pairs;
    }
  }
  return total / pairs;
}

std::vector<int> argmax_rows(const Matrix& probabilities) {
  std::vector<int> out(static_cast<std::size_t>(probabilities.rows()));
  for (Index i = 0; i < probabilities.rows(); ++i) {
    Index best = 0;
    probabilities.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

MetricsReport evaluate(const TrainedModel& model, const Dataset& test, bool with_counter_p) {
  if (test.feature_dim() != model.model_config.input_dim) {
    throw ConfigError("evaluate: test set has " + std::to_string(test.feature_dim()) +
                      " features but the model expects " + std::to_string(model.model_config.input_dim));
  }
  MetricsReport report;
  report.predictions = argmax_rows(model.predict(test.features));
  report.n_evaluated = test.size();
  report.accuracy = accuracy(report.predictions, test.targets);
  for (std::size_t k = 0; k < test.num_attributes(); ++k) {
    const auto groups = test.attribute_column(k);
    report.equalodds.push_back(equalodds(report.predictions, test.targets, groups));
    report.equal_opportunity.push_back(equal_opportunity(report.predictions, test.targets, groups));
    report.statistical_parity.push_back(statistical_parity(report.predictions, groups));
    const bool has_block = k < model.bank.num_attributes();
    report.counter_p.push_back(with_counter_p && has_block
                                   ? counter_p(model.params, model.bank, test.features, k)
                                   : 0.0);
  }
  return report;
}

}  // namespace proxydebias
