// SPDX-License-Identifier: Apache-2.0
/**
 * @file   tensor.hpp
 * @brief  Dense tensors and a reverse-mode differentiation tape.
 *
 * Every value is a row-major double matrix; vectors are n x 1 columns.
 * A Tape records each op together with a closure that pushes the upstream
 * gradient to the op's inputs. Tapes are per forward pass and never shared
 * across threads.
 */
#ifndef VTQA_TENSOR_HPP
#define VTQA_TENSOR_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vtqa {

template <typename Scalar>
using MatrixX =
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;
using Tensor = MatrixX<double>;
using Vector = VectorX<double>;

/// Raised when operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for otherwise invalid arguments (empty lists, bad indices).
class ArgumentError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_string(const Tensor &t);

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
public:
  Var() = default;
  Var(Tape *tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor &value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  std::size_t id() const { return id_; }
  Tape &tape() const { return *tape_; }
  bool valid() const { return tape_ != nullptr; }

private:
  Tape *tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
public:
  /// Pushes the node's gradient to its inputs.
  using Backward = std::function<void(Tape &, const Tensor &grad)>;

  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  /// Differentiable leaf (a parameter or an input under test).
  Var variable(Tensor value);
  /// Leaf that never receives a gradient.
  Var constant(Tensor value);

  /// Records an op result. `backward` may be empty when no input needs
  /// a gradient.
  Var record(Tensor value, bool requires_grad, Backward backward);

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(const Var &v) const { return requires_grad(v.id()); }
  const Tensor &value(std::size_t id) const { return nodes_[id].value; }

  /// Adds `g` to the gradient of node `id` (no-op for constants).
  void accumulate(std::size_t id, const Tensor &g);

  /// Runs the reverse sweep from `output`, seeded with ones (or `seed`).
  /// Each recorded op is visited once, in reverse order.
  void backward(const Var &output);
  void backward(const Var &output, const Tensor &seed);

  /// Gradient of a node after backward(); zeros if none reached it.
  Tensor grad(const Var &v) const;

  std::size_t size() const { return nodes_.size(); }

private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

inline const Tensor &Var::value() const { return tape_->value(id_); }

// Ops. All shape checks throw DimensionError naming both shapes.

Var matmul(const Var &a, const Var &b);
Var add(const Var &a, const Var &b);
Var sub(const Var &a, const Var &b);
Var mul(const Var &a, const Var &b);
Var scale(const Var &a, double k);
Var transpose(const Var &a);
Var concat_cols(const Var &a, const Var &b);
/// Stacks operands vertically; all must share a column count.
Var concat_rows(std::span<const Var> parts);
/// Rows [start, start + count).
Var slice_rows(const Var &a, Index start, Index count);
/// Row lookup, e.g. an embedding table indexed by token ids.
Var gather_rows(const Var &table, std::span<const int> rows);

Var relu(const Var &a);
Var sigmoid(const Var &a);
Var tanh(const Var &a);
/// Row-wise softmax with max subtraction.
Var softmax_rows(const Var &a);

Var sum(const Var &a);
Var mean(const Var &a);
/// Elementwise max across same-shape tensors; ties go to the first.
Var max_over_list(std::span<const Var> xs);
Var mean_over_list(std::span<const Var> xs);
Var sum_over_list(std::span<const Var> xs);

/// -log softmax(logits)[target] for an n x 1 logit column.
Var cross_entropy(const Var &logits, Index target);

/// Scalar-valued function of one tensor, built on a caller-provided tape.
using ScalarFn = std::function<Var(Tape &, const Var &)>;

/// Max relative error between the tape gradient of `f` at `x` and central
/// differences with step `h`; denominator max(|analytic|, |numeric|, floor).
double grad_check(const ScalarFn &f, const Tensor &x, double h = 1e-5,
                  double floor = 1e-8);

} // namespace vtqa

#endif // VTQA_TENSOR_HPP
