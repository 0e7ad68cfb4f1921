#include "proxydebias/model.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace proxydebias {
namespace {

using testing::random_bank;
using testing::random_matrix;
using testing::random_params;
using testing::reference_logits;

LabelMatrix labels(Index rows, Index cols, std::initializer_list<int> v) {
  LabelMatrix m(rows, cols);
  auto it = v.begin();
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = *it++;
  return m;
}

TEST(ModelConfig, HeadWidthIsFeaturesPlusProxies) {
  ModelConfig cfg;
  cfg.input_dim = 20;
  cfg.proxy_dims = {100, 4};
  EXPECT_EQ(cfg.head_input_dim(), 32 + 104);
  const ModelParams p = init_params(cfg, 1);
  EXPECT_EQ(p.head.weight.rows(), cfg.head_input_dim());
  EXPECT_EQ(p.head.weight.cols(), 2);
}

TEST(NaivePresets, BinaryZerosAndOnes) {
  const std::vector<Index> n{2};
  const std::vector<Index> m{4};
  const ProxyBank bank = naive_presets(n, m, 0);
  ASSERT_EQ(bank.num_attributes(), 1u);
  EXPECT_EQ(bank.tables[0].proxies.value().row(0), RowVector::Zero(4));
  EXPECT_EQ(bank.tables[0].proxies.value().row(1), RowVector::Ones(4));
  EXPECT_EQ(bank.tables[0].prior, Vector::Constant(2, 0.5));
  EXPECT_TRUE((bank.tables[0].anchor.array() >= 0.0).all());
  EXPECT_TRUE((bank.tables[0].anchor.array() < 1.0).all());
}

TEST(NaivePresets, ThreeClassesInterpolate) {
  const std::vector<Index> n{3};
  const std::vector<Index> m{2};
  const ProxyBank bank = naive_presets(n, m, 0);
  EXPECT_EQ(bank.tables[0].proxies.value().row(1), RowVector::Constant(2, 0.5));
}

TEST(NaivePresets, TwoAttributesAreIndependentTables) {
  const std::vector<Index> n{2, 2};
  const std::vector<Index> m{3, 5};
  const ProxyBank bank = naive_presets(n, m, 9);
  ASSERT_EQ(bank.num_attributes(), 2u);
  EXPECT_EQ(bank.tables[0].dim(), 3);
  EXPECT_EQ(bank.tables[1].dim(), 5);
  EXPECT_EQ(bank.total_dim(), 8);
}

TEST(NaivePresets, SingleGroupRejected) {
  const std::vector<Index> n{1};
  const std::vector<Index> m{4};
  EXPECT_THROW(naive_presets(n, m, 0), ConfigError);
}

TEST(SelectProxies, RowsFollowLabels) {
  const std::vector<Index> n{2};
  const std::vector<Index> m{3};
  const ProxyBank bank = naive_presets(n, m, 0);
  const Tensor p = select_proxies(bank, labels(3, 1, {0, 1, 0}));
  EXPECT_EQ(p.value().row(0), RowVector::Zero(3));
  EXPECT_EQ(p.value().row(1), RowVector::Ones(3));
  EXPECT_EQ(p.value().row(2), RowVector::Zero(3));
}

TEST(SelectProxies, AttributeBlocksConcatenateInIndexOrder) {
  const std::vector<Index> n{2, 2};
  const std::vector<Index> m{2, 3};
  const ProxyBank bank = naive_presets(n, m, 0);
  const Tensor p = select_proxies(bank, labels(1, 2, {1, 0}));
  RowVector expected(5);
  expected << 1, 1, 0, 0, 0;
  EXPECT_EQ(p.value().row(0), expected);
}

TEST(SelectProxies, OutOfRangeNamesAttributeAndRow) {
  const std::vector<Index> n{2};
  const std::vector<Index> m{3};
  const ProxyBank bank = naive_presets(n, m, 0);
  try {
    select_proxies(bank, labels(2, 1, {0, 2}));
    FAIL() << "expected IndexError";
  } catch (const IndexError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("attribute 0"), std::string::npos);
    EXPECT_NE(what.find("row 1"), std::string::npos);
  }
}

TEST(SelectProxies, GradientReachesTrainableTable) {
  const std::vector<Index> n{2};
  const std::vector<Index> m{2};
  ProxyBank bank = naive_presets(n, m, 0);
  bank.set_trainable(true);
  sum(select_proxies(bank, labels(3, 1, {1, 1, 0}))).backward();
  EXPECT_EQ(bank.tables[0].proxies.grad().row(0), RowVector::Constant(2, 1.0));
  EXPECT_EQ(bank.tables[0].proxies.grad().row(1), RowVector::Constant(2, 2.0));
}

// d=2, hidden [2], C=2, one proxy column.
// pre-activation [3.5, -4.5] -> features [3.5, 0]; logits [4.1, -3.55].
ModelParams hand_params() {
  ModelParams p;
  Matrix w1(2, 2);
  w1 << 1, 0.5, -1, 2;
  Matrix b1(1, 2);
  b1 << 0.5, -1;
  Matrix wh(3, 2);
  wh << 1, -1, 2, 0.5, 0.5, -0.25;
  Matrix bh(1, 2);
  bh << 0.1, 0.2;
  p.backbone.push_back({Tensor::parameter(w1), Tensor::parameter(b1)});
  p.head = {Tensor::parameter(wh), Tensor::parameter(bh)};
  return p;
}

TEST(Forward, HandSizedNet) {
  const ModelParams p = hand_params();
  Matrix x(1, 2);
  x << 1, -2;
  const Tensor proxies = Tensor::constant(Matrix::Ones(1, 1));
  const Matrix logits = forward(p, Tensor::constant(x), proxies).value();
  EXPECT_NEAR(logits(0, 0), 4.1, 1e-15);
  EXPECT_NEAR(logits(0, 1), -3.55, 1e-15);
  const Matrix feats = penultimate_features(p, Tensor::constant(x)).value();
  EXPECT_EQ(feats.rows(), 1);
  EXPECT_EQ(feats.cols(), 2);
  EXPECT_DOUBLE_EQ(feats(0, 0), 3.5);
  EXPECT_DOUBLE_EQ(feats(0, 1), 0.0);
}

TEST(Forward, ZeroHeadGivesZeroLogits) {
  std::mt19937_64 rng(1);
  ModelConfig cfg;
  cfg.input_dim = 4;
  cfg.hidden_dims = {5, 3};
  cfg.proxy_dims = {2};
  ModelParams p = random_params(rng, cfg);
  p.head.weight.mutable_value().setZero();
  p.head.bias.mutable_value().setZero();
  const Matrix out = forward(p, Tensor::constant(random_matrix(rng, 6, 4)),
                             Tensor::constant(random_matrix(rng, 6, 2))).value();
  EXPECT_TRUE(out.isZero(0.0));
}

TEST(Forward, PermutationEquivariantProperty) {
  std::mt19937_64 rng(2);
  ModelConfig cfg;
  cfg.input_dim = 5;
  cfg.hidden_dims = {6, 4};
  cfg.proxy_dims = {3};
  for (int trial = 0; trial < 20; ++trial) {
    const ModelParams p = random_params(rng, cfg);
    const Matrix x = random_matrix(rng, 7, 5);
    const Matrix prox = random_matrix(rng, 7, 3);
    std::vector<Index> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix xp(7, 5), pp(7, 3);
    for (Index i = 0; i < 7; ++i) {
      xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
      pp.row(i) = prox.row(perm[static_cast<std::size_t>(i)]);
    }
    const Matrix a = forward(p, Tensor::constant(x), Tensor::constant(prox)).value();
    const Matrix b = forward(p, Tensor::constant(xp), Tensor::constant(pp)).value();
    for (Index i = 0; i < 7; ++i) ASSERT_EQ(b.row(i), a.row(perm[static_cast<std::size_t>(i)]));
  }
}

TEST(Forward, MatchesPlainEigenReference) {
  std::mt19937_64 rng(3);
  ModelConfig cfg;
  cfg.input_dim = 5;
  cfg.hidden_dims = {8, 4};
  cfg.proxy_dims = {3, 2};
  const ModelParams p = random_params(rng, cfg);
  const Matrix x = random_matrix(rng, 10, 5);
  const Matrix prox = random_matrix(rng, 10, 5);
  const Matrix ours = forward(p, Tensor::constant(x), Tensor::constant(prox)).value();
  EXPECT_TRUE(ours.isApprox(reference_logits(p, x, prox), 1e-14));
  EXPECT_THROW(forward(p, Tensor::constant(x), Tensor::constant(random_matrix(rng, 10, 4))), ShapeError);
}

TEST(InterventionFeature, PresetsGiveAllHalf) {
  const std::vector<Index> n{2};
  const std::vector<Index> m{100};
  const InterventionFeature f = intervention_feature(naive_presets(n, m, 0));
  ASSERT_EQ(f.blocks.size(), 1u);
  EXPECT_EQ(f.blocks[0], RowVector::Constant(100, 0.5));
}

TEST(InterventionFeature, WeightedByPrior) {
  const std::vector<Index> n{2};
  const std::vector<Index> m{3};
  ProxyBank bank = naive_presets(n, m, 0);
  bank.tables[0].prior << 0.9, 0.1;
  EXPECT_EQ(intervention_feature(bank).blocks[0], RowVector::Constant(3, 0.1));
}

TEST(InterventionFeature, SingleClassIsThatProxy) {
  ProxyBank bank;
  Tensor table = Tensor::constant((Matrix(1, 2) << 0.3, -0.7).finished());
  bank.tables.push_back({table, RowVector::Zero(2), Vector::Ones(1)});
  EXPECT_EQ(intervention_feature(bank).blocks[0], table.value().row(0));
}

TEST(PredictInterventional, RowsSumToOneAndAreDeterministic) {
  std::mt19937_64 rng(4);
  ModelConfig cfg;
  cfg.input_dim = 3;
  cfg.hidden_dims = {4};
  cfg.num_target_classes = 3;
  cfg.proxy_dims = {2};
  const ModelParams p = random_params(rng, cfg);
  const ProxyBank bank = random_bank(rng, {3}, {2});
  Matrix x = random_matrix(rng, 5, 3);
  x.row(4) = x.row(1);
  const Matrix probs = predict_interventional(p, bank, x);
  for (Index i = 0; i < 5; ++i) EXPECT_NEAR(probs.row(i).sum(), 1.0, 1e-12);
  EXPECT_EQ(probs.row(4), probs.row(1));
}

TEST(PredictInterventional, DegenerateBankEqualsEitherProxy) {
  std::mt19937_64 rng(5);
  ModelConfig cfg;
  cfg.input_dim = 3;
  cfg.hidden_dims = {4};
  cfg.proxy_dims = {2};
  const ModelParams p = random_params(rng, cfg);
  ProxyBank bank;
  Matrix table(2, 2);
  table << 0.25, 0.75, 0.25, 0.75;
  bank.tables.push_back({Tensor::constant(table), RowVector::Zero(2), Vector::Constant(2, 0.5)});
  const Matrix x = random_matrix(rng, 4, 3);
  const Matrix with_proxy = softmax_rows(forward(p, Tensor::constant(x),
                                                 Tensor::constant(table.row(0).replicate(4, 1))).value());
  EXPECT_TRUE(predict_interventional(p, bank, x).isApprox(with_proxy, 1e-15));
  EXPECT_TRUE(backdoor_exact(p, bank, x).isApprox(with_proxy, 1e-14));
}

TEST(BackdoorExact, SingleClassEqualsInterventional) {
  std::mt19937_64 rng(6);
  ModelConfig cfg;
  cfg.input_dim = 3;
  cfg.hidden_dims = {4};
  cfg.proxy_dims = {2};
  const ModelParams p = random_params(rng, cfg);
  ProxyBank bank;
  bank.tables.push_back({Tensor::constant(random_matrix(rng, 1, 2)), RowVector::Zero(2), Vector::Ones(1)});
  const Matrix x = random_matrix(rng, 4, 3);
  EXPECT_TRUE(backdoor_exact(p, bank, x).isApprox(predict_interventional(p, bank, x), 1e-15));
}

// Logits at E[p] equal the prior-weighted sum of per-class logits, checked
// against a brute-force enumeration built on the plain-Eigen reference.
TEST(BackdoorExact, AffineLogitIdentityAgainstBruteForce) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 25; ++trial) {
    ModelConfig cfg;
    cfg.input_dim = 4;
    cfg.hidden_dims = {5, 3};
    cfg.proxy_dims = {3, 2};
    const ModelParams p = random_params(rng, cfg);
    const ProxyBank bank = random_bank(rng, {2, 3}, {3, 2});
    const Matrix x = random_matrix(rng, 6, 4);

    Matrix brute = Matrix::Zero(6, 2);
    for (Index a = 0; a < 2; ++a) {
      for (Index b = 0; b < 3; ++b) {
        RowVector row(5);
        row << bank.tables[0].proxies.value().row(a), bank.tables[1].proxies.value().row(b);
        const double w = bank.tables[0].prior(a) * bank.tables[1].prior(b);
        brute += w * reference_logits(p, x, row.replicate(6, 1));
      }
    }
    const Matrix at_mean = interventional_logits(p, intervention_feature(bank), x);
    ASSERT_LT((at_mean - brute).cwiseAbs().maxCoeff(), 1e-10);
    ASSERT_LT((backdoor_logits(p, bank, x) - brute).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(BackdoorExact, CapIsEnforced) {
  std::mt19937_64 rng(8);
  ModelConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden_dims = {2};
  cfg.proxy_dims = {1, 1, 1};
  const ModelParams p = random_params(rng, cfg);
  const ProxyBank bank = random_bank(rng, {20, 20, 20}, {1, 1, 1});
  EXPECT_THROW(backdoor_exact(p, bank, random_matrix(rng, 2, 2)), ResourceError);
  EXPECT_NO_THROW(backdoor_exact(p, bank, random_matrix(rng, 2, 2), 8000));
}

TEST(ProxyBank, ValidateChecksPrior) {
  std::mt19937_64 rng(9);
  ProxyBank bank = random_bank(rng, {2}, {3});
  EXPECT_NO_THROW(bank.validate());
  bank.tables[0].prior << 0.5, 0.6;
  EXPECT_THROW(bank.validate(), ConfigError);
}

}  // namespace
}  // namespace proxydebias
