// SPDX-License-Identifier: Apache-2.0
#include "ssnmt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ssnmt/errors.hpp"

namespace ssnmt {

// ---------------------------------------------------------------------------
// Tensor

const Matrix& Tensor::value() const { return tape_->value(id_); }
const Matrix& Tensor::grad() const { return tape_->grad(id_); }
bool Tensor::requires_grad() const { return tape_->requires_grad(id_); }

std::vector<std::size_t> Tensor::shape() const {
  return {static_cast<std::size_t>(rows()), static_cast<std::size_t>(cols())};
}

std::vector<Scalar> Tensor::values() const {
  const Matrix& v = value();
  return std::vector<Scalar>(v.data(), v.data() + v.size());
}

Scalar Tensor::item() const {
  const Matrix& v = value();
  if (v.size() != 1) {
    throw ContractError("item() on non-scalar tensor of shape " + shape_string(v));
  }
  return v(0, 0);
}

std::string shape_string(const Matrix& m) {
  std::ostringstream os;
  os << "[" << m.rows() << "x" << m.cols() << "]";
  return os.str();
}

// ---------------------------------------------------------------------------
// Tape

Tensor Tape::variable(Matrix value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::scalar(Scalar v, bool requires_grad) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return variable(std::move(m), requires_grad);
}

Tensor Tape::bind(const Matrix& external, bool requires_grad) {
  Node n;
  n.external = &external;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::record(Matrix value, std::initializer_list<Tensor> inputs, Backward backward) {
  return record(std::move(value), std::span<const Tensor>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Tensor Tape::record(Matrix value, std::span<const Tensor> inputs, Backward backward) {
  bool needs = false;
  for (const Tensor& t : inputs) {
    if (&t.tape() != this) throw ContractError("operation mixes tensors from different tapes");
    needs = needs || t.requires_grad();
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Tensor(this, nodes_.size() - 1);
}

const Matrix& Tape::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.grad.size() == 0) {
    const Matrix& v = value(id);
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

void Tape::accumulate(GradSlots& slots, const Tensor& t, const Matrix& g) {
  accumulate_expr(slots, t, g);
}

void Tape::backward(const Tensor& loss) {
  if (!loss.valid() || &loss.tape() != this) {
    throw ContractError("backward() called with a tensor from another tape");
  }
  const Matrix& lv = value(loss.id());
  if (lv.size() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " + shape_string(lv));
  }
  last_visits_ = 0;
  if (!nodes_[loss.id()].requires_grad) return;

  GradSlots slots(loss.id() + 1);
  slots[loss.id()] = Matrix::Ones(1, 1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    if (slots[i].size() == 0) continue;
    const Node& n = nodes_[i];
    if (n.backward) {
      n.backward(slots[i], value(i), slots);
      ++last_visits_;
    }
  }
  for (std::size_t i = 0; i <= loss.id(); ++i) {
    if (slots[i].size() == 0 || !nodes_[i].requires_grad) continue;
    Node& n = nodes_[i];
    if (n.grad.size() == 0) {
      n.grad = std::move(slots[i]);
    } else {
      n.grad += slots[i];
    }
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) n.grad.resize(0, 0);
}

// ---------------------------------------------------------------------------
// Operations

namespace {

void require_same_tape(const Tensor& a, const Tensor& b) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw ContractError("operands belong to different tapes");
  }
}

[[noreturn]] void dimension_error(const char* op, const Matrix& a, const Matrix& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                       shape_string(b));
}

bool is_scalar(const Matrix& m) { return m.rows() == 1 && m.cols() == 1; }

enum class BinaryKind { Add, Sub, Mul };

Tensor binary(BinaryKind kind, const Tensor& a, const Tensor& b) {
  require_same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const char* name = kind == BinaryKind::Add ? "add" : kind == BinaryKind::Sub ? "sub" : "mul";
  const bool same = av.rows() == bv.rows() && av.cols() == bv.cols();
  const bool a_scalar = !same && is_scalar(av);
  const bool b_scalar = !same && is_scalar(bv);
  if (!same && !a_scalar && !b_scalar) dimension_error(name, av, bv);

  Matrix out;
  if (same) {
    switch (kind) {
      case BinaryKind::Add: out = av + bv; break;
      case BinaryKind::Sub: out = av - bv; break;
      case BinaryKind::Mul: out = av.cwiseProduct(bv); break;
    }
  } else if (a_scalar) {
    const Scalar s = av(0, 0);
    switch (kind) {
      case BinaryKind::Add: out = bv.array() + s; break;
      case BinaryKind::Sub: out = (-bv.array()) + s; break;
      case BinaryKind::Mul: out = bv * s; break;
    }
  } else {
    const Scalar s = bv(0, 0);
    switch (kind) {
      case BinaryKind::Add: out = av.array() + s; break;
      case BinaryKind::Sub: out = av.array() - s; break;
      case BinaryKind::Mul: out = av * s; break;
    }
  }

  return a.tape().record(
      std::move(out), {a, b},
      [a, b, kind, a_scalar, b_scalar](const Matrix& g, const Matrix&, Tape::GradSlots& slots) {
        const Matrix& av = a.value();
        const Matrix& bv = b.value();
        // Gradient w.r.t. each operand before reducing a broadcast scalar.
        auto reduce = [](bool scalar_operand, const Matrix& full) -> Matrix {
          if (!scalar_operand) return full;
          Matrix s(1, 1);
          s(0, 0) = full.sum();
          return s;
        };
        switch (kind) {
          case BinaryKind::Add:
            Tape::accumulate(slots, a, reduce(a_scalar, g));
            Tape::accumulate(slots, b, reduce(b_scalar, g));
            break;
          case BinaryKind::Sub:
            Tape::accumulate(slots, a, reduce(a_scalar, g));
            Tape::accumulate(slots, b, reduce(b_scalar, -g));
            break;
          case BinaryKind::Mul: {
            if (a.requires_grad()) {
              Matrix ga = b_scalar ? Matrix(g * bv(0, 0)) : Matrix(g.cwiseProduct(bv));
              Tape::accumulate(slots, a, reduce(a_scalar, ga));
            }
            if (b.requires_grad()) {
              Matrix gb = a_scalar ? Matrix(g * av(0, 0)) : Matrix(g.cwiseProduct(av));
              Tape::accumulate(slots, b, reduce(b_scalar, gb));
            }
            break;
          }
        }
      });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) dimension_error("matmul", av, bv);
  Matrix out = av * bv;
  return a.tape().record(std::move(out), {a, b},
                         [a, b](const Matrix& g, const Matrix&, Tape::GradSlots& slots) {
                           if (a.requires_grad()) {
                             Tape::accumulate_expr(slots, a, g * b.value().transpose());
                           }
                           if (b.requires_grad()) {
                             Tape::accumulate_expr(slots, b, a.value().transpose() * g);
                           }
                         });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require_same_tape(a, bias);
  const Matrix& av = a.value();
  const Matrix& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) dimension_error("add_bias", av, bv);
  Matrix out = av.rowwise() + bv.row(0);
  return a.tape().record(std::move(out), {a, bias},
                         [a, bias](const Matrix& g, const Matrix&, Tape::GradSlots& slots) {
                           Tape::accumulate(slots, a, g);
                           if (bias.requires_grad()) {
                             Tape::accumulate_expr(slots, bias, g.colwise().sum());
                           }
                         });
}

Tensor scale_rows(const Tensor& a, const Tensor& w) {
  require_same_tape(a, w);
  const Matrix& av = a.value();
  const Matrix& wv = w.value();
  if (wv.cols() != 1 || wv.rows() != av.rows()) dimension_error("scale_rows", av, wv);
  Matrix out = av.array().colwise() * wv.col(0).array();
  return a.tape().record(
      std::move(out), {a, w}, [a, w](const Matrix& g, const Matrix&, Tape::GradSlots& slots) {
        if (a.requires_grad()) {
          Tape::accumulate_expr(slots, a,
                                Matrix(g.array().colwise() * w.value().col(0).array()));
        }
        if (w.requires_grad()) {
          Tape::accumulate_expr(slots, w,
                                Matrix(g.cwiseProduct(a.value()).rowwise().sum()));
        }
      });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return binary(BinaryKind::Add, a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return binary(BinaryKind::Sub, a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return binary(BinaryKind::Mul, a, b); }

Tensor operator*(Scalar s, const Tensor& a) {
  Matrix out = a.value() * s;
  return a.tape().record(std::move(out), {a},
                         [a, s](const Matrix& g, const Matrix&, Tape::GradSlots& slots) {
                           Tape::accumulate_expr(slots, a, g * s);
                         });
}

Tensor operator-(Scalar s, const Tensor& a) {
  Matrix out = (-a.value().array()) + s;
  return a.tape().record(std::move(out), {a},
                         [a](const Matrix& g, const Matrix&, Tape::GradSlots& slots) {
                           Tape::accumulate_expr(slots, a, -g);
                         });
}

Tensor sigmoid(const Tensor& a) {
  Matrix out = (1.0 + (-a.value().array()).exp()).inverse().matrix();
  return a.tape().record(std::move(out), {a},
                         [a](const Matrix& g, const Matrix& y, Tape::GradSlots& slots) {
                           Tape::accumulate_expr(
                               slots, a,
                               Matrix(g.array() * y.array() * (1.0 - y.array())));
                         });
}

Tensor tanh(const Tensor& a) {
  Matrix out = a.value().array().tanh().matrix();
  return a.tape().record(std::move(out), {a},
                         [a](const Matrix& g, const Matrix& y, Tape::GradSlots& slots) {
                           Tape::accumulate_expr(slots, a,
                                                 Matrix(g.array() * (1.0 - y.array().square())));
                         });
}

Tensor elementwise(ElementwiseOp op, std::span<const Tensor> args) {
  const std::size_t want = (op == ElementwiseOp::Add || op == ElementwiseOp::Mul) ? 2 : 1;
  if (args.size() != want) {
    throw ContractError("elementwise: expected " + std::to_string(want) + " arguments, got " +
                        std::to_string(args.size()));
  }
  switch (op) {
    case ElementwiseOp::Add: return args[0] + args[1];
    case ElementwiseOp::Mul: return args[0] * args[1];
    case ElementwiseOp::Sigmoid: return sigmoid(args[0]);
    case ElementwiseOp::Tanh: return tanh(args[0]);
  }
  throw ContractError("elementwise: unknown op");
}

Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().record(std::move(out), {a},
                         [a](const Matrix& g, const Matrix&, Tape::GradSlots& slots) {
                           const Matrix& av = a.value();
                           Tape::accumulate_expr(
                               slots, a, Matrix::Constant(av.rows(), av.cols(), g(0, 0)));
                         });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Tensor& p : parts) {
    require_same_tape(parts[0], p);
    if (p.rows() != rows) dimension_error("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index offset = 0;
  for (const Tensor& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return parts[0].tape().record(
      std::move(out), parts,
      [inputs](const Matrix& g, const Matrix&, Tape::GradSlots& slots) {
        Eigen::Index offset = 0;
        for (const Tensor& p : inputs) {
          if (p.requires_grad()) {
            Tape::accumulate_expr(slots, p, g.middleCols(offset, p.cols()));
          }
          offset += p.cols();
        }
      });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  const Matrix& av = a.value();
  if (start < 0 || count < 0 || start + count > av.cols()) {
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of range for " +
                         shape_string(av));
  }
  Matrix out = av.middleCols(start, count);
  return a.tape().record(
      std::move(out), {a},
      [a, start, count](const Matrix& g, const Matrix&, Tape::GradSlots& slots) {
        Matrix& slot = slots[a.id()];
        if (slot.size() == 0) slot = Matrix::Zero(a.rows(), a.cols());
        slot.middleCols(start, count) += g;
      });
}

Tensor stack_rows(std::span<const Tensor> blocks) {
  if (blocks.empty()) throw ContractError("stack_rows: no inputs");
  const Eigen::Index rows = blocks[0].rows();
  const Eigen::Index cols = blocks[0].cols();
  for (const Tensor& b : blocks) {
    require_same_tape(blocks[0], b);
    if (b.rows() != rows || b.cols() != cols) {
      dimension_error("stack_rows", blocks[0].value(), b.value());
    }
  }
  Matrix out(rows * static_cast<Eigen::Index>(blocks.size()), cols);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    out.middleRows(static_cast<Eigen::Index>(k) * rows, rows) = blocks[k].value();
  }
  std::vector<Tensor> inputs(blocks.begin(), blocks.end());
  return blocks[0].tape().record(
      std::move(out), blocks,
      [inputs, rows](const Matrix& g, const Matrix&, Tape::GradSlots& slots) {
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          if (inputs[k].requires_grad()) {
            Tape::accumulate_expr(slots, inputs[k],
                                  g.middleRows(static_cast<Eigen::Index>(k) * rows, rows));
          }
        }
      });
}

Tensor tile_rows(const Tensor& a, Eigen::Index k) {
  if (k < 1) throw ContractError("tile_rows: repeat count must be positive");
  const Matrix& av = a.value();
  const Eigen::Index rows = av.rows();
  Matrix out(rows * k, av.cols());
  for (Eigen::Index i = 0; i < k; ++i) out.middleRows(i * rows, rows) = av;
  return a.tape().record(std::move(out), {a},
                         [a, k, rows](const Matrix& g, const Matrix&, Tape::GradSlots& slots) {
                           Matrix acc = g.topRows(rows);
                           for (Eigen::Index i = 1; i < k; ++i) acc += g.middleRows(i * rows, rows);
                           Tape::accumulate(slots, a, acc);
                         });
}

Tensor fold_blocks(const Tensor& column, Eigen::Index n) {
  const Matrix& cv = column.value();
  if (cv.cols() != 1 || n < 1 || cv.rows() % n != 0) {
    throw DimensionError("fold_blocks: cannot fold " + shape_string(cv) + " into " +
                         std::to_string(n) + " blocks");
  }
  const Eigen::Index batch = cv.rows() / n;
  Matrix out(batch, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index b = 0; b < batch; ++b) out(b, i) = cv(i * batch + b, 0);
  }
  return column.tape().record(
      std::move(out), {column},
      [column, n, batch](const Matrix& g, const Matrix&, Tape::GradSlots& slots) {
        Matrix gc(n * batch, 1);
        for (Eigen::Index i = 0; i < n; ++i) {
          for (Eigen::Index b = 0; b < batch; ++b) gc(i * batch + b, 0) = g(b, i);
        }
        Tape::accumulate(slots, column, gc);
      });
}

Tensor gather_rows(const Tensor& table, std::span<const TokenId> ids) {
  const Matrix& tv = table.value();
  Matrix out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows()) {
      throw IndexError("token id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(tv.rows()) + " rows");
    }
    out.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
  }
  std::vector<TokenId> copy(ids.begin(), ids.end());
  return table.tape().record(
      std::move(out), {table},
      [table, copy = std::move(copy)](const Matrix& g, const Matrix&, Tape::GradSlots& slots) {
        Matrix& slot = slots[table.id()];
        if (slot.size() == 0) slot = Matrix::Zero(table.rows(), table.cols());
        for (std::size_t i = 0; i < copy.size(); ++i) {
          slot.row(copy[i]) += g.row(static_cast<Eigen::Index>(i));
        }
      });
}

Tensor weighted_block_sum(const Tensor& stacked, const Tensor& weights) {
  require_same_tape(stacked, weights);
  const Matrix& sv = stacked.value();
  const Matrix& wv = weights.value();
  const Eigen::Index batch = wv.rows();
  const Eigen::Index n = wv.cols();
  if (sv.rows() != n * batch) dimension_error("weighted_block_sum", sv, wv);
  Matrix out = Matrix::Zero(batch, sv.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    out += (sv.middleRows(i * batch, batch).array().colwise() * wv.col(i).array()).matrix();
  }
  return stacked.tape().record(
      std::move(out), {stacked, weights},
      [stacked, weights, batch, n](const Matrix& g, const Matrix&, Tape::GradSlots& slots) {
        const Matrix& sv = stacked.value();
        const Matrix& wv = weights.value();
        if (stacked.requires_grad()) {
          Matrix gs(sv.rows(), sv.cols());
          for (Eigen::Index i = 0; i < n; ++i) {
            gs.middleRows(i * batch, batch) = g.array().colwise() * wv.col(i).array();
          }
          Tape::accumulate(slots, stacked, gs);
        }
        if (weights.requires_grad()) {
          Matrix gw(batch, n);
          for (Eigen::Index i = 0; i < n; ++i) {
            gw.col(i) = g.cwiseProduct(sv.middleRows(i * batch, batch)).rowwise().sum();
          }
          Tape::accumulate(slots, weights, gw);
        }
      });
}

Tensor softmax_rows(const Tensor& a, const Matrix* mask) {
  const Matrix& av = a.value();
  if (mask && (mask->rows() != av.rows() || mask->cols() != av.cols())) {
    dimension_error("softmax_rows mask", av, *mask);
  }
  Matrix out(av.rows(), av.cols());
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index c = 0; c < av.cols(); ++c) {
      if (!mask || (*mask)(r, c) != 0.0) mx = std::max(mx, av(r, c));
    }
    Scalar z = 0.0;
    for (Eigen::Index c = 0; c < av.cols(); ++c) {
      const bool keep = !mask || (*mask)(r, c) != 0.0;
      out(r, c) = keep ? std::exp(av(r, c) - mx) : 0.0;
      z += out(r, c);
    }
    if (z > 0.0) out.row(r) /= z;
  }
  return a.tape().record(std::move(out), {a},
                         [a](const Matrix& g, const Matrix& y, Tape::GradSlots& slots) {
                           Matrix inner = g.cwiseProduct(y).rowwise().sum();
                           Matrix ga = y.array() * (g.array().colwise() - inner.col(0).array());
                           Tape::accumulate(slots, a, ga);
                         });
}

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index arg = 0;
    const Scalar mx = logits.row(r).maxCoeff(&arg);
    // log(sum exp(x - mx)) as log1p of the non-maximal terms keeps precision
    // when one logit dominates.
    Scalar rest = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      if (c != arg) rest += std::exp(logits(r, c) - mx);
    }
    const Scalar log_z = std::log1p(rest);
    out.row(r) = (logits.row(r).array() - mx) - log_z;
  }
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const TokenId> targets,
                             std::span<const Scalar> weights) {
  const Matrix& lv = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != lv.rows() ||
      weights.size() != targets.size()) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                         " targets and " + std::to_string(weights.size()) +
                         " weights for logits " + shape_string(lv));
  }
  for (TokenId t : targets) {
    if (t < 0 || t >= lv.cols()) {
      throw IndexError("softmax_cross_entropy: target " + std::to_string(t) +
                       " outside vocabulary of " + std::to_string(lv.cols()));
    }
  }
  const Matrix logp = log_softmax_rows(lv);
  Scalar loss = 0.0;
  for (std::size_t b = 0; b < targets.size(); ++b) {
    if (weights[b] != 0.0) loss -= weights[b] * logp(static_cast<Eigen::Index>(b), targets[b]);
  }
  Matrix out(1, 1);
  out(0, 0) = loss;
  std::vector<TokenId> t(targets.begin(), targets.end());
  std::vector<Scalar> w(weights.begin(), weights.end());
  return logits.tape().record(
      std::move(out), {logits},
      [logits, logp, t = std::move(t), w = std::move(w)](const Matrix& g, const Matrix&,
                                                          Tape::GradSlots& slots) {
        Matrix gl = logp.array().exp();
        for (std::size_t b = 0; b < t.size(); ++b) {
          const auto r = static_cast<Eigen::Index>(b);
          gl(r, t[b]) -= 1.0;
          gl.row(r) *= w[b] * g(0, 0);
        }
        Tape::accumulate(slots, logits, gl);
      });
}

Tensor softmax_cross_entropy(const Tensor& logits, TokenId target) {
  if (logits.rows() != 1) {
    throw DimensionError("softmax_cross_entropy: single-target form needs one row, got " +
                         shape_string(logits.value()));
  }
  const TokenId targets[1] = {target};
  const Scalar weights[1] = {1.0};
  return softmax_cross_entropy(logits, targets, weights);
}

}  // namespace ssnmt
