#pragma once

#include <span>
#include <vector>

#include "proxydebias/data.hpp"
#include "proxydebias/model.hpp"
#include "proxydebias/train.hpp"

namespace proxydebias {

// Group metrics below average over all unordered pairs of groups present
// in `groups`; with two groups that is the plain absolute gap. Empty
// (group, target) cells raise UndefinedRateError.

double accuracy(std::span<const int> predictions, std::span<const int> targets);

// (1/|T|) sum_t |recall_g0(t) - recall_g1(t)|
double equalodds(std::span<const int> predictions, std::span<const int> targets,
                 std::span<const int> groups);

// |TPR_g0 - TPR_g1| for `positive_class`.
double equal_opportunity(std::span<const int> predictions, std::span<const int> targets,
                         std::span<const int> groups, int positive_class = 1);

// |Pr_g0(pred == pos) - Pr_g1(pred == pos)|
double statistical_parity(std::span<const int> predictions, std::span<const int> groups,
                          int positive_class = 1);

// Mean over samples and unordered class pairs (b, b') of attribute k of
// (1/C) sum_c |P_c(x, p_b) - P_c(x, p_b')|, other attributes held at their
// intervention blocks.
double counter_p(const ModelParams& params, const ProxyBank& bank, const Matrix& x, std::size_t k);

std::vector<int> argmax_rows(const Matrix& probabilities);

struct MetricsReport {
  double accuracy = 0;
  std::vector<double> equalodds;
  std::vector<double> equal_opportunity;
  std::vector<double> statistical_parity;
  std::vector<double> counter_p;
  Index n_evaluated = 0;
  std::vector<int> predictions;
};

// Predictions come from the intervention feature only; bias labels of
// `test` are read by the group metrics, never by the model. counter_p is
// reported per bias attribute of the test set; attributes without a proxy
// block report 0.
MetricsReport evaluate(const TrainedModel& model, const Dataset& test, bool with_counter_p = true);

}  // namespace proxydebias
