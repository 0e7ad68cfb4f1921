#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "proxydebias/tensor.hpp"

namespace proxydebias {

template <typename Scalar>
struct AdamOptions {
  Scalar learning_rate = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);
  Scalar weight_decay = Scalar(0);
};

template <typename Scalar>
struct AdamState {
  using Matrix = MatrixX<Scalar>;

  AdamState() = default;
  AdamState(std::span<const BasicTensor<Scalar>> params, AdamOptions<Scalar> opts)
      : options(opts) {
    first_moment.reserve(params.size());
    second_moment.reserve(params.size());
    for (const auto& p : params) {
      first_moment.push_back(Matrix::Zero(p.rows(), p.cols()));
      second_moment.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }

  AdamOptions<Scalar> options;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::uint64_t step_count = 0;
};

// One bias-corrected Adam update followed by decoupled weight decay
// p <- p - lr*wd*p. Gradients are zeroed afterwards.
template <typename Scalar>
void adam_step(std::span<BasicTensor<Scalar>> params, AdamState<Scalar>& state) {
  if (params.size() != state.first_moment.size()) {
    throw ContractError("adam_step: " + std::to_string(params.size()) + " parameters but state for " +
                        std::to_string(state.first_moment.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].rows() != state.first_moment[i].rows() ||
        params[i].cols() != state.first_moment[i].cols()) {
      throw ContractError("adam_step: parameter " + std::to_string(i) + " has shape " +
                          params[i].shape_string() + " but its moments are " +
                          detail::shape_string(state.first_moment[i].rows(),
                                               state.first_moment[i].cols()));
    }
  }

  const auto& o = state.options;
  state.step_count += 1;
  const auto t = static_cast<Scalar>(state.step_count);
  const Scalar correction1 = Scalar(1) - std::pow(o.beta1, t);
  const Scalar correction2 = Scalar(1) - std::pow(o.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto& g = p.grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = o.beta1 * m + (Scalar(1) - o.beta1) * g;
    v = o.beta2 * v + (Scalar(1) - o.beta2) * g.cwiseProduct(g);
    auto& value = p.mutable_value();
    value.array() -= o.learning_rate * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + o.epsilon);
    if (o.weight_decay != Scalar(0)) value *= Scalar(1) - o.learning_rate * o.weight_decay;
    p.zero_grad();
  }
}

template <typename Scalar>
void zero_grads(std::span<BasicTensor<Scalar>> params) {
  for (auto& p : params) p.zero_grad();
}

// Central finite differences against autodiff over every coordinate of
// `params`. `loss_fn` rebuilds the graph from the current parameter values.
// Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
template <typename Scalar>
Scalar grad_check(const std::function<BasicTensor<Scalar>()>& loss_fn,
                  std::span<BasicTensor<Scalar>> params, Scalar eps) {
  if (!(eps > Scalar(0))) throw ContractError("grad_check: eps must be positive");
  auto eval = [&]() {
    const Scalar v = loss_fn().item();
    if (!std::isfinite(v)) throw NumericError("grad_check: loss is not finite");
    return v;
  };

  zero_grads(params);
  const auto loss = loss_fn();
  if (!std::isfinite(loss.item())) throw NumericError("grad_check: loss is not finite");
  loss.backward();

  Scalar worst = 0;
  for (auto& p : params) {
    const MatrixX<Scalar> analytic = p.grad();
    auto& value = p.mutable_value();
    for (Index r = 0; r < value.rows(); ++r) {
      for (Index c = 0; c < value.cols(); ++c) {
        const Scalar saved = value(r, c);
        value(r, c) = saved + eps;
        const Scalar up = eval();
        value(r, c) = saved - eps;
        const Scalar down = eval();
        value(r, c) = saved;
        const Scalar numeric = (up - down) / (Scalar(2) * eps);
        const Scalar a = analytic(r, c);
        const Scalar denom = std::max({std::abs(a), std::abs(numeric), Scalar(1e-8)});
        worst = std::max(worst, std::abs(a - numeric) / denom);
      }
    }
  }
  zero_grads(params);
  return worst;
}

}  // namespace proxydebias
