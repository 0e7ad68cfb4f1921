#pragma once

// Dense 2-D tensors with a reverse-mode autodiff tape.
//
// A tensor is a cheap handle onto a graph node. Leaves created with
// `parameter()` own persistent gradient buffers that accumulate across
// backward passes; intermediate nodes exist for one forward pass and are
// released with the last handle referring to them.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "proxydebias/errors.hpp"

namespace proxydebias {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

namespace detail {

inline std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed) + 1;
}

inline std::string shape_string(Index rows, Index cols) {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

}  // namespace detail

template <typename Scalar>
class BasicTensor {
 public:
  using Matrix = MatrixX<Scalar>;
  using BackwardFn = std::function<void(const Matrix& grad_out)>;

  BasicTensor() = default;

  static BasicTensor constant(Matrix value) { return BasicTensor(std::move(value), false); }
  static BasicTensor parameter(Matrix value) { return BasicTensor(std::move(value), true); }
  static BasicTensor scalar(Scalar v, bool requires_grad = false) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return BasicTensor(std::move(m), requires_grad);
  }

  // Result of an op. The backward closure runs only when some parent is
  // differentiable; otherwise the node is a constant and keeps no history.
  static BasicTensor from_op(Matrix value, std::vector<BasicTensor> parents, BackwardFn fn) {
    BasicTensor out(std::move(value), false);
    out.node_->leaf = false;
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const BasicTensor& p) { return p.requires_grad(); });
    if (any) {
      out.node_->requires_grad = true;
      out.node_->parents.reserve(parents.size());
      for (auto& p : parents) out.node_->parents.push_back(p.node_);
      out.node_->backward = std::move(fn);
    }
    return out;
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  Index rows() const { return node().value.rows(); }
  Index cols() const { return node().value.cols(); }
  std::array<Index, 2> shape() const { return {rows(), cols()}; }
  std::string shape_string() const { return detail::shape_string(rows(), cols()); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  bool is_leaf() const { return node().leaf; }
  std::uint64_t node_id() const { return node().id; }

  const Matrix& value() const { return node().value; }
  // Direct write access is for optimizers and finite differences on leaves.
  Matrix& mutable_value() { return node().value; }

  const Matrix& grad() const {
    Node& n = node();
    if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols()) {
      n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    }
    return n.grad;
  }
  void zero_grad() {
    Node& n = node();
    if (n.grad.size() != 0) n.grad.setZero();
  }
  void accumulate_grad(const Matrix& g) const {
    if (!requires_grad()) return;
    Node& n = node();
    if (g.rows() != n.value.rows() || g.cols() != n.value.cols()) {
      throw ShapeError("gradient " + detail::shape_string(g.rows(), g.cols()) +
                       " does not match tensor " + shape_string());
    }
    if (n.grad.rows() != g.rows() || n.grad.cols() != g.cols()) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  Scalar item() const {
    if (rows() != 1 || cols() != 1) {
      throw ContractError("item() on non-scalar tensor " + shape_string());
    }
    return value()(0, 0);
  }

  // Same values, cut from the graph.
  BasicTensor detached() const { return constant(value()); }

  void set_requires_grad(bool on) {
    if (!is_leaf()) throw ContractError("set_requires_grad on a non-leaf tensor");
    node().requires_grad = on;
  }

  // Accumulates d(loss)/d(leaf) into every reachable differentiable leaf.
  void backward() const;

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool leaf = true;
    std::uint64_t id = 0;
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn backward;
  };

  BasicTensor(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
    node_->id = detail::next_node_id();
  }

  Node& node() const {
    if (!node_) throw ContractError("use of an undefined tensor");
    return *node_;
  }

  std::shared_ptr<Node> node_;
};

template <typename Scalar>
void BasicTensor<Scalar>::backward() const {
  if (rows() != 1 || cols() != 1) {
    throw ContractError("backward() needs a scalar loss, got " + shape_string());
  }
  if (!requires_grad()) return;

  // Post-order DFS gives a topological order with parents before children.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->leaf) n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
  }
  Node& root = *node_;
  if (root.grad.size() == 0) root.grad = Matrix::Zero(1, 1);
  root.grad(0, 0) += Scalar(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->leaf && n->backward) n->backward(n->grad);
  }
}

template <typename Scalar>
void backward(const BasicTensor<Scalar>& loss) {
  loss.backward();
}

// ---------------------------------------------------------------------------
// Ops

template <typename Scalar>
BasicTensor<Scalar> matmul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + a.shape_string() + " x " +
                     b.shape_string());
  }
  using Matrix = typename BasicTensor<Scalar>::Matrix;
  Matrix out = a.value() * b.value();
  return BasicTensor<Scalar>::from_op(std::move(out), {a, b}, [a, b](const Matrix& g) {
    if (a.requires_grad()) a.accumulate_grad(g * b.value().transpose());
    if (b.requires_grad()) b.accumulate_grad(a.value().transpose() * g);
  });
}

template <typename Scalar>
BasicTensor<Scalar> add(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: " + a.shape_string() + " vs " + b.shape_string());
  }
  using Matrix = typename BasicTensor<Scalar>::Matrix;
  return BasicTensor<Scalar>::from_op(a.value() + b.value(), {a, b}, [a, b](const Matrix& g) {
    a.accumulate_grad(g);
    b.accumulate_grad(g);
  });
}

template <typename Scalar>
BasicTensor<Scalar> sub(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("sub: " + a.shape_string() + " vs " + b.shape_string());
  }
  using Matrix = typename BasicTensor<Scalar>::Matrix;
  return BasicTensor<Scalar>::from_op(a.value() - b.value(), {a, b}, [a, b](const Matrix& g) {
    a.accumulate_grad(g);
    if (b.requires_grad()) b.accumulate_grad(-g);
  });
}

template <typename Scalar>
BasicTensor<Scalar> mul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: " + a.shape_string() + " vs " + b.shape_string());
  }
  using Matrix = typename BasicTensor<Scalar>::Matrix;
  Matrix out = a.value().cwiseProduct(b.value());
  return BasicTensor<Scalar>::from_op(std::move(out), {a, b}, [a, b](const Matrix& g) {
    if (a.requires_grad()) a.accumulate_grad(g.cwiseProduct(b.value()));
    if (b.requires_grad()) b.accumulate_grad(g.cwiseProduct(a.value()));
  });
}

template <typename Scalar>
BasicTensor<Scalar> operator+(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  return add(a, b);
}
template <typename Scalar>
BasicTensor<Scalar> operator-(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  return sub(a, b);
}

// a[m×n] + bias[1×n] broadcast over rows.
template <typename Scalar>
BasicTensor<Scalar> add_row_bias(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw ShapeError("add_row_bias: bias " + bias.shape_string() + " for input " +
                     a.shape_string());
  }
  using Matrix = typename BasicTensor<Scalar>::Matrix;
  Matrix out = a.value().rowwise() + bias.value().row(0);
  return BasicTensor<Scalar>::from_op(std::move(out), {a, bias}, [a, bias](const Matrix& g) {
    a.accumulate_grad(g);
    if (bias.requires_grad()) bias.accumulate_grad(g.colwise().sum());
  });
}

// ReLU'(0) is taken as 0.
template <typename Scalar>
BasicTensor<Scalar> relu(const BasicTensor<Scalar>& a) {
  using Matrix = typename BasicTensor<Scalar>::Matrix;
  Matrix out = a.value().cwiseMax(Scalar(0));
  return BasicTensor<Scalar>::from_op(std::move(out), {a}, [a](const Matrix& g) {
    Matrix mask = (a.value().array() > Scalar(0)).template cast<Scalar>();
    a.accumulate_grad(g.cwiseProduct(mask));
  });
}

// Rows of the result are [a_row | b_row].
template <typename Scalar>
BasicTensor<Scalar> concat_features(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("concat_features: row counts differ, " + a.shape_string() + " vs " +
                     b.shape_string());
  }
  using Matrix = typename BasicTensor<Scalar>::Matrix;
  const Index left = a.cols();
  const Index right = b.cols();
  Matrix out(a.rows(), left + right);
  out.leftCols(left) = a.value();
  out.rightCols(right) = b.value();
  return BasicTensor<Scalar>::from_op(std::move(out), {a, b}, [a, b, left, right](const Matrix& g) {
    if (a.requires_grad()) a.accumulate_grad(g.leftCols(left));
    if (b.requires_grad()) b.accumulate_grad(g.rightCols(right));
  });
}

// out[i] = table[rows[i]]; backward scatter-adds into the selected rows.
template <typename Scalar>
BasicTensor<Scalar> gather_rows(const BasicTensor<Scalar>& table, std::span<const Index> rows) {
  using Matrix = typename BasicTensor<Scalar>::Matrix;
  const Index m = static_cast<Index>(rows.size());
  Matrix out(m, table.cols());
  for (Index i = 0; i < m; ++i) {
    const Index r = rows[static_cast<std::size_t>(i)];
    if (r < 0 || r >= table.rows()) {
      throw IndexError("gather_rows: row " + std::to_string(r) + " outside table " +
                       table.shape_string());
    }
    out.row(i) = table.value().row(r);
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  return BasicTensor<Scalar>::from_op(std::move(out), {table},
                                      [table, idx = std::move(idx)](const Matrix& g) {
                                        Matrix acc = Matrix::Zero(table.rows(), table.cols());
                                        for (std::size_t i = 0; i < idx.size(); ++i) {
                                          acc.row(idx[i]) += g.row(static_cast<Index>(i));
                                        }
                                        table.accumulate_grad(acc);
                                      });
}

// Repeats a 1×n row m times.
template <typename Scalar>
BasicTensor<Scalar> repeat_row(const BasicTensor<Scalar>& row, Index m) {
  if (row.rows() != 1) throw ShapeError("repeat_row: expected one row, got " + row.shape_string());
  using Matrix = typename BasicTensor<Scalar>::Matrix;
  Matrix out = row.value().replicate(m, 1);
  return BasicTensor<Scalar>::from_op(std::move(out), {row}, [row](const Matrix& g) {
    row.accumulate_grad(g.colwise().sum());
  });
}

template <typename Scalar>
BasicTensor<Scalar> sum(const BasicTensor<Scalar>& a) {
  using Matrix = typename BasicTensor<Scalar>::Matrix;
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return BasicTensor<Scalar>::from_op(std::move(out), {a}, [a](const Matrix& g) {
    a.accumulate_grad(Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

template <typename Scalar>
BasicTensor<Scalar> scale(const BasicTensor<Scalar>& a, Scalar factor) {
  using Matrix = typename BasicTensor<Scalar>::Matrix;
  return BasicTensor<Scalar>::from_op(a.value() * factor, {a}, [a, factor](const Matrix& g) {
    a.accumulate_grad(g * factor);
  });
}

// Row-wise softmax on plain values, max-shifted.
template <typename Derived>
MatrixX<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out = logits;
  for (Index i = 0; i < out.rows(); ++i) {
    const Scalar shift = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - shift).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

// Mean over rows of -log softmax(logits)[label].
template <typename Scalar>
BasicTensor<Scalar> softmax_cross_entropy(const BasicTensor<Scalar>& logits,
                                          std::span<const int> labels) {
  using Matrix = typename BasicTensor<Scalar>::Matrix;
  const Index m = logits.rows();
  const Index classes = logits.cols();
  if (static_cast<Index>(labels.size()) != m) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + logits.shape_string());
  }
  if (m == 0) throw ShapeError("softmax_cross_entropy: empty batch");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw IndexError("softmax_cross_entropy: label " + std::to_string(labels[i]) + " at row " +
                       std::to_string(i) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
  const Matrix& z = logits.value();
  Matrix probs(m, classes);
  Scalar total = 0;
  for (Index i = 0; i < m; ++i) {
    const Scalar shift = z.row(i).maxCoeff();
    const auto shifted = (z.row(i).array() - shift).eval();
    const Scalar denom = shifted.exp().sum();
    probs.row(i) = shifted.exp() / denom;
    total += std::log(denom) - shifted(labels[static_cast<std::size_t>(i)]);
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<Scalar>(m);
  std::vector<int> y(labels.begin(), labels.end());
  return BasicTensor<Scalar>::from_op(
      std::move(out), {logits}, [logits, probs = std::move(probs), y = std::move(y)](const Matrix& g) {
        Matrix d = probs;
        for (std::size_t i = 0; i < y.size(); ++i) d(static_cast<Index>(i), y[i]) -= Scalar(1);
        d *= g(0, 0) / static_cast<Scalar>(y.size());
        logits.accumulate_grad(d);
      });
}

}  // namespace proxydebias
