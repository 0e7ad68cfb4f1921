#include "proxydebias/optim.hpp"

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

namespace proxydebias {
namespace {

using T = BasicTensor<double>;
using M = MatrixX<double>;

TEST(Adam, ZeroGradientFreshStateIsNoOp) {
  std::vector<T> params{T::parameter(M::Constant(2, 3, 0.7)), T::parameter(M::Constant(1, 3, -2.0))};
  AdamState<double> state(params, AdamOptions<double>{});
  const M before0 = params[0].value();
  const M before1 = params[1].value();
  adam_step(std::span<T>(params), state);
  EXPECT_EQ(params[0].value(), before0);
  EXPECT_EQ(params[1].value(), before1);
  EXPECT_EQ(state.step_count, 1u);
}

TEST(Adam, FirstStepMovesByLearningRateTimesSign) {
  std::vector<T> params{T::parameter(M::Constant(1, 2, 1.0))};
  AdamOptions<double> opts;
  opts.learning_rate = 1e-3;
  AdamState<double> state(params, opts);
  M g(1, 2);
  g << 0.5, -4.0;
  params[0].accumulate_grad(g);
  adam_step(std::span<T>(params), state);
  EXPECT_NEAR(params[0].value()(0, 0), 1.0 - 1e-3 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(params[0].value()(0, 1), 1.0 + 1e-3 * 4.0 / (4.0 + 1e-8), 1e-15);
  // Gradients are cleared after the update.
  EXPECT_TRUE(params[0].grad().isZero(0.0));
}

// Two steps of g = 0.5 from p = 1 unrolled by hand:
// m1 = 0.05, v1 = 2.5e-4, p1 = 0.99900000002;
// m2 = 0.095, v2 = 4.9975e-4, p2 = 0.99800000004.
TEST(Adam, TwoIdenticalStepsMatchHandUnroll) {
  std::vector<T> params{T::parameter(M::Constant(1, 1, 1.0))};
  AdamState<double> state(params, AdamOptions<double>{});
  params[0].accumulate_grad(M::Constant(1, 1, 0.5));
  adam_step(std::span<T>(params), state);
  EXPECT_NEAR(state.first_moment[0](0, 0), 0.05, 1e-16);
  EXPECT_NEAR(state.second_moment[0](0, 0), 2.5e-4, 1e-18);
  EXPECT_NEAR(params[0].value()(0, 0), 0.99900000002, 1e-15);
  params[0].accumulate_grad(M::Constant(1, 1, 0.5));
  adam_step(std::span<T>(params), state);
  EXPECT_NEAR(state.first_moment[0](0, 0), 0.095, 1e-16);
  EXPECT_NEAR(state.second_moment[0](0, 0), 4.9975e-4, 1e-18);
  EXPECT_NEAR(params[0].value()(0, 0), 0.99800000004, 1e-15);
  EXPECT_EQ(state.step_count, 2u);
}

TEST(Adam, DecoupledWeightDecayAppliesAfterUpdate) {
  std::vector<T> params{T::parameter(M::Constant(1, 1, 2.0))};
  AdamOptions<double> opts;
  opts.learning_rate = 0.1;
  opts.weight_decay = 0.5;
  AdamState<double> state(params, opts);
  adam_step(std::span<T>(params), state);  // zero gradient: only decay acts
  EXPECT_DOUBLE_EQ(params[0].value()(0, 0), 2.0 * (1.0 - 0.1 * 0.5));
}

TEST(Adam, ShapeMismatchIsContractError) {
  std::vector<T> params{T::parameter(M::Zero(2, 2))};
  AdamState<double> state(params, AdamOptions<double>{});
  std::vector<T> other{T::parameter(M::Zero(3, 2))};
  EXPECT_THROW(adam_step(std::span<T>(other), state), ContractError);
  std::vector<T> two{params[0], params[0]};
  EXPECT_THROW(adam_step(std::span<T>(two), state), ContractError);
}

TEST(Adam, ZeroGradsZeroDecayIsNoOpProperty) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<T> params;
    for (int i = 0; i < 3; ++i) {
      M v(1 + rng() % 4, 1 + rng() % 4);
      for (Index j = 0; j < v.size(); ++j) v.data()[j] = n(rng);
      params.push_back(T::parameter(v));
    }
    AdamState<double> state(params, AdamOptions<double>{});
    std::vector<M> before;
    for (const auto& p : params) before.push_back(p.value());
    for (int s = 0; s < 3; ++s) adam_step(std::span<T>(params), state);
    for (std::size_t i = 0; i < params.size(); ++i) ASSERT_EQ(params[i].value(), before[i]);
  }
}

TEST(GradCheck, Square) {
  std::vector<T> params{T::parameter(M::Constant(1, 1, 3.0))};
  auto f = [&] { return sum(mul(params[0], params[0])); };
  EXPECT_LT(grad_check<double>(f, std::span<T>(params), 1e-5), 1e-8);
}

TEST(GradCheck, LinearIsExactToRounding) {
  std::vector<T> params{T::parameter((M(1, 3) << 1.0, -2.0, 0.5).finished())};
  const T c = T::constant((M(1, 3) << 3.0, 0.25, -7.0).finished());
  auto f = [&] { return sum(mul(params[0], c)); };
  EXPECT_LT(grad_check<double>(f, std::span<T>(params), 1e-5), 1e-9);
}

TEST(GradCheck, RandomTwoLayerMlpWithCrossEntropy) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> n(0.0, 1.0);
  auto rand = [&](Index r, Index c) {
    M m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
  };
  std::vector<T> params{T::parameter(rand(5, 8)), T::parameter(rand(1, 8) * 0.1),
                        T::parameter(rand(8, 3)), T::parameter(rand(1, 3) * 0.1)};
  const T x = T::constant(rand(16, 5));
  std::vector<int> y(16);
  for (auto& v : y) v = static_cast<int>(rng() % 3);
  auto f = [&] {
    const T h = relu(add_row_bias(matmul(x, params[0]), params[1]));
    return softmax_cross_entropy(add_row_bias(matmul(h, params[2]), params[3]), std::span<const int>(y));
  };
  EXPECT_LT(grad_check<double>(f, std::span<T>(params), 1e-5), 1e-4);
}

TEST(GradCheck, NonFiniteLossIsNumericError) {
  std::vector<T> params{T::parameter(M::Constant(1, 1, 1.0))};
  auto f = [&] { return scale(sum(params[0]), std::numeric_limits<double>::infinity()); };
  EXPECT_THROW(grad_check<double>(f, std::span<T>(params), 1e-5), NumericError);
  auto g = [&] { return sum(params[0]); };
  EXPECT_THROW(grad_check<double>(g, std::span<T>(params), 0.0), ContractError);
}

}  // namespace
}  // namespace proxydebias
