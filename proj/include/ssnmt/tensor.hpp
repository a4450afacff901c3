// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every operation executed on its tensors. Tensors are cheap
// handles (tape pointer + node id); the tape owns values and gradients. A
// scalar is a 1x1 matrix. Only two broadcasting forms exist: scalar against
// tensor, and equal shapes. Row-wise bias addition and row scaling are
// explicit operations rather than implicit broadcasts.
#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <deque>
#include <vector>

namespace ssnmt {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
using TokenId = int;

class Tape;

class Tensor {
 public:
  Tensor() = default;

  const Matrix& value() const;
  /// Accumulated gradient; zero matrix of the value's shape when never reached.
  const Matrix& grad() const;
  bool requires_grad() const;

  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  std::vector<std::size_t> shape() const;
  /// Row-major copy of the values.
  std::vector<Scalar> values() const;
  /// Value of a 1x1 tensor.
  Scalar item() const;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Ordered record of operations. One tape per training step; discard it after
/// the optimizer update.
class Tape {
 public:
  /// Propagates the upstream gradient of a node into its inputs' slots.
  using GradSlots = std::vector<Matrix>;
  using Backward =
      std::function<void(const Matrix& upstream, const Matrix& output, GradSlots& slots)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf holding its own copy of `value`.
  Tensor variable(Matrix value, bool requires_grad = true);
  /// Leaf that never receives gradients.
  Tensor constant(Matrix value) { return variable(std::move(value), false); }
  Tensor scalar(Scalar v, bool requires_grad = false);
  /// Leaf viewing an external matrix without copying. The matrix must outlive
  /// the tape and stay unchanged while the tape is in use.
  Tensor bind(const Matrix& external, bool requires_grad);

  /// Records an operation result. `inputs` are used only to decide whether
  /// the result requires a gradient; the closure is dropped otherwise.
  Tensor record(Matrix value, std::initializer_list<Tensor> inputs, Backward backward);
  Tensor record(Matrix value, std::span<const Tensor> inputs, Backward backward);

  /// Accumulates d(loss)/d(tensor) into every reachable tensor that requires
  /// a gradient. Repeated calls accumulate.
  void backward(const Tensor& loss);
  void zero_grad();

  std::size_t size() const { return nodes_.size(); }
  /// Number of operations whose backward rule ran during the last backward().
  std::size_t last_backward_visits() const { return last_visits_; }

  const Matrix& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }
  const Matrix& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Adds `g` into the slot of `t` when `t` requires a gradient.
  static void accumulate(GradSlots& slots, const Tensor& t, const Matrix& g);
  template <typename Expr>
  static void accumulate_expr(GradSlots& slots, const Tensor& t, const Expr& g) {
    if (!t.requires_grad()) return;
    Matrix& slot = slots[t.id()];
    if (slot.size() == 0) {
      slot = g;
    } else {
      slot += g;
    }
  }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    mutable Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };

  // deque: references returned by value() survive later pushes.
  std::deque<Node> nodes_;
  std::size_t last_visits_ = 0;
};

std::string shape_string(const Matrix& m);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a [B x n] + bias [1 x n] added to every row.
Tensor add_bias(const Tensor& a, const Tensor& bias);
/// Row i of a [B x n] multiplied by w(i, 0), w [B x 1].
Tensor scale_rows(const Tensor& a, const Tensor& w);

// Elementwise. Operands must have equal shapes or one must be 1x1.
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator*(Scalar s, const Tensor& a);
Tensor operator-(Scalar s, const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);

enum class ElementwiseOp { Add, Mul, Sigmoid, Tanh };
/// Dispatching form of the elementwise operations.
Tensor elementwise(ElementwiseOp op, std::span<const Tensor> args);

// Reductions.
Tensor sum(const Tensor& a);

// Structure.
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
/// Stacks equally shaped [B x d] blocks into [(k*B) x d], block-major.
Tensor stack_rows(std::span<const Tensor> blocks);
/// Repeats a [B x d] block k times: [(k*B) x d].
Tensor tile_rows(const Tensor& a, Eigen::Index k);
/// Reshapes a block-major [(n*B) x 1] column into [B x n].
Tensor fold_blocks(const Tensor& column, Eigen::Index n);
/// Embedding lookup: row ids[i] of table for every i.
Tensor gather_rows(const Tensor& table, std::span<const TokenId> ids);
/// out[b] = sum_i weights(b, i) * stacked[i*B + b], stacked [(n*B) x d].
Tensor weighted_block_sum(const Tensor& stacked, const Tensor& weights);

// Probability.
/// Row-wise softmax with max subtraction. Entries whose mask is zero receive
/// probability zero; a null mask keeps every entry.
Tensor softmax_rows(const Tensor& a, const Matrix* mask = nullptr);
/// sum_b weight[b] * -log softmax(logits.row(b))[targets[b]].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const TokenId> targets,
                             std::span<const Scalar> weights);
/// -log softmax(logits)[target] for a single-row logits tensor.
Tensor softmax_cross_entropy(const Tensor& logits, TokenId target);

/// Numerically stable row-wise log-softmax of a plain matrix.
Matrix log_softmax_rows(const Matrix& logits);

}  // namespace ssnmt
