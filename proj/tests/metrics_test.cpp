#include "proxydebias/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "proxydebias/train.hpp"
#include "test_util.hpp"

namespace proxydebias {
namespace {

using testing::random_bank;
using testing::random_matrix;
using testing::random_params;

// Group 0 recalls (1, 1); group 1 recalls (0.75, 0.5).
struct GroupFixture {
  std::vector<int> targets{0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0, 1, 1, 1, 1};
  std::vector<int> preds{0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 1, 1, 1, 0, 0};
  std::vector<int> groups{0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1};
};

TEST(GroupMetrics, EqualOddsFixture) {
  const GroupFixture f;
  EXPECT_DOUBLE_EQ(equalodds(f.preds, f.targets, f.groups), 0.375);
}

TEST(GroupMetrics, EqualOpportunityFixture) {
  const std::vector<int> targets{1, 1, 1, 1, 1, 1, 1, 1};
  const std::vector<int> preds{1, 1, 1, 1, 1, 1, 1, 0};
  const std::vector<int> groups{0, 0, 0, 0, 1, 1, 1, 1};
  EXPECT_DOUBLE_EQ(equal_opportunity(preds, targets, groups), 0.25);
}

TEST(GroupMetrics, StatisticalParityFixture) {
  const std::vector<int> preds{1, 1, 1, 0, 0, 1, 0, 0, 0, 0};
  const std::vector<int> groups{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  EXPECT_NEAR(statistical_parity(preds, groups), 0.4, 1e-15);
}

TEST(GroupMetrics, Accuracy) {
  const std::vector<int> preds{0, 1, 1, 0};
  const std::vector<int> targets{0, 1, 0, 0};
  EXPECT_DOUBLE_EQ(accuracy(preds, targets), 0.75);
  const std::vector<int> short_targets{0, 1};
  EXPECT_THROW(accuracy(preds, short_targets), ContractError);
  EXPECT_THROW(accuracy(std::vector<int>{}, std::vector<int>{}), ContractError);
}

TEST(GroupMetrics, EmptyCellIsUndefined) {
  const std::vector<int> targets{0, 1, 0};
  const std::vector<int> preds{0, 1, 0};
  const std::vector<int> groups{0, 0, 1};
  EXPECT_THROW(equalodds(preds, targets, groups), UndefinedRateError);
}

TEST(GroupMetrics, IdenticalGroupsGiveZero) {
  const std::vector<int> targets{0, 1, 0, 1};
  const std::vector<int> preds{1, 1, 1, 1};
  const std::vector<int> groups{0, 0, 1, 1};
  EXPECT_EQ(equalodds(preds, targets, groups), 0.0);
  EXPECT_EQ(statistical_parity(preds, groups), 0.0);
}

// Relabeling groups and permuting samples leaves every metric unchanged;
// values stay within [0, 1].
TEST(GroupMetrics, RelabelAndPermutationInvariantProperty) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 40 + rng() % 60;
    std::vector<int> t(n), p(n), g(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(i % 2);
      g[i] = static_cast<int>((i / 2) % 2);
      p[i] = static_cast<int>(rng() % 2);
    }
    const double eo = equalodds(p, t, g);
    const double sp = statistical_parity(p, g);
    const double eop = equal_opportunity(p, t, g);
    for (double v : {eo, sp, eop}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    std::vector<int> flipped(g);
    for (auto& v : flipped) v = 1 - v;
    EXPECT_DOUBLE_EQ(equalodds(p, t, flipped), eo);
    EXPECT_DOUBLE_EQ(statistical_parity(p, flipped), sp);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> t2(n), p2(n), g2(n);
    for (std::size_t i = 0; i < n; ++i) {
      t2[i] = t[order[i]];
      p2[i] = p[order[i]];
      g2[i] = g[order[i]];
    }
    EXPECT_NEAR(equalodds(p2, t2, g2), eo, 1e-15);
  }
}

TEST(GroupMetrics, ThreeGroupsAverageOverPairs) {
  // Positive rates 1, 0.5, 0: pair gaps 0.5, 1, 0.5.
  const std::vector<int> preds{1, 1, 1, 0, 0, 0};
  const std::vector<int> groups{0, 0, 1, 1, 2, 2};
  EXPECT_NEAR(statistical_parity(preds, groups), 2.0 / 3.0, 1e-15);
}

// No hidden layers, x = [0], head maps the proxy coordinate to logits
// (+p, -p). p0 = 0 gives (0.5, 0.5), p1 = 1 gives sigmoid(2): the gap per
// class is tanh(1)/2.
TEST(CounterP, HandValue) {
  ModelConfig mc;
  mc.input_dim = 1;
  mc.hidden_dims = {};
  mc.proxy_dims = {1};
  ModelParams params = init_params(mc, 0);
  params.head.weight.mutable_value() << 0.0, 0.0, 1.0, -1.0;
  params.head.bias.mutable_value().setZero();
  const std::vector<Index> n{2};
  const std::vector<Index> m{1};
  ProxyBank bank = naive_presets(n, m, 0);
  EXPECT_NEAR(counter_p(params, bank, Matrix::Zero(1, 1), 0), 0.3807970779778824, 1e-15);
  EXPECT_THROW(counter_p(params, bank, Matrix::Zero(1, 1), 1), ContractError);
}

TEST(CounterP, ZeroWhenProxyWeightsVanishOrProxiesCoincide) {
  std::mt19937_64 rng(8);
  ModelConfig mc;
  mc.input_dim = 3;
  mc.hidden_dims = {4};
  mc.proxy_dims = {5, 2};
  ModelParams params = random_params(rng, mc);
  ProxyBank bank = random_bank(rng, {3, 2}, {5, 2});
  const Matrix x = random_matrix(rng, 7, 3);
  EXPECT_GT(counter_p(params, bank, x, 0), 0.0);
  bank.tables[0].proxies.mutable_value().row(1) = bank.tables[0].proxies.value().row(0);
  bank.tables[0].proxies.mutable_value().row(2) = bank.tables[0].proxies.value().row(0);
  EXPECT_EQ(counter_p(params, bank, x, 0), 0.0);
  params.head.weight.mutable_value().bottomRows(7).setZero();
  EXPECT_EQ(counter_p(params, bank, x, 1), 0.0);
}

TEST(CounterP, BoundedProperty) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig mc;
    mc.input_dim = 2 + static_cast<Index>(rng() % 3);
    mc.hidden_dims = {3};
    mc.num_target_classes = 2 + static_cast<int>(rng() % 3);
    mc.proxy_dims = {3};
    ModelParams params = random_params(rng, mc);
    for (auto& v : params.head.weight.mutable_value().reshaped()) v *= 20.0;
    ProxyBank bank = random_bank(rng, {2 + static_cast<Index>(rng() % 3)}, {3});
    const double cp = counter_p(params, bank, random_matrix(rng, 5, mc.input_dim), 0);
    EXPECT_GE(cp, 0.0);
    EXPECT_LE(cp, 1.0);
  }
}

TEST(Evaluate, VanillaReportsZeroCounterP) {
  GeneratorConfig gc;
  gc.n_samples = 400;
  const Dataset ds = generate(gc);
  const ModelConfig mc = model_config_for(ds, TrainMode::vanilla, {8}, {});
  TrainConfig tc;
  tc.mode = TrainMode::vanilla;
  tc.epochs = 2;
  const TrainResult r = train(ds, tc, mc);
  const Dataset test = balanced_test(gc);
  const MetricsReport rep = evaluate(r.model, test);
  ASSERT_EQ(rep.counter_p.size(), 1u);
  EXPECT_EQ(rep.counter_p[0], 0.0);
  EXPECT_EQ(rep.n_evaluated, test.size());
  EXPECT_DOUBLE_EQ(rep.accuracy, accuracy(rep.predictions, test.targets));
  ASSERT_EQ(rep.equalodds.size(), 1u);
  const std::vector<int> g = test.attribute_column(0);
  EXPECT_DOUBLE_EQ(rep.equalodds[0], equalodds(rep.predictions, test.targets, g));
}

// Predictions never read the test bias labels.
TEST(Evaluate, PredictionsIgnoreBiasLabels) {
  GeneratorConfig gc;
  gc.n_samples = 400;
  const Dataset ds = generate(gc);
  const ModelConfig mc = model_config_for(ds, TrainMode::active_pd, {8}, {6});
  TrainConfig tc;
  tc.epochs = 2;
  const TrainResult r = train(ds, tc, mc);
  Dataset test = balanced_test(gc);
  const MetricsReport a = evaluate(r.model, test, false);
  for (Index i = 0; i < test.size(); ++i) test.bias_labels(i, 0) = 1 - test.bias_labels(i, 0);
  const MetricsReport b = evaluate(r.model, test, false);
  EXPECT_EQ(a.predictions, b.predictions);
  EXPECT_TRUE(b.counter_p.empty() || b.counter_p[0] == 0.0);
}

}  // namespace
}  // namespace proxydebias
