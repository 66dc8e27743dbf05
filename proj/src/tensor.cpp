// SPDX-License-Identifier: Apache-2.0
/**
 * @file   tensor.cpp
 * @brief  Tape bookkeeping and the differentiable op set.
 */
#include <vtqa/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace vtqa {

std::string shape_string(const Tensor &t) {
  std::ostringstream os;
  os << "[" << t.rows() << "x" << t.cols() << "]";
  return os.str();
}

namespace {

[[noreturn]] void shape_mismatch(const char *op, const Tensor &a,
                                 const Tensor &b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       shape_string(a) + " and " + shape_string(b));
}

void require_same_shape(const char *op, const Var &a, const Var &b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    shape_mismatch(op, a.value(), b.value());
}

void require_same_tape(const Var &a, const Var &b) {
  if (&a.tape() != &b.tape())
    throw ArgumentError("operands recorded on different tapes");
}

Tape &tape_of(std::span<const Var> xs) {
  if (xs.empty())
    throw ArgumentError("operation needs a non-empty list of tensors");
  for (const auto &x : xs)
    require_same_tape(xs.front(), x);
  return xs.front().tape();
}

bool any_requires_grad(std::span<const Var> xs) {
  return std::any_of(xs.begin(), xs.end(), [](const Var &x) {
    return x.tape().requires_grad(x);
  });
}

} // namespace

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, bool requires_grad, Backward backward) {
  if (!requires_grad)
    backward = nullptr;
  nodes_.push_back(
    Node{std::move(value), {}, requires_grad, false, std::move(backward)});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Tensor &g) {
  Node &n = nodes_[id];
  if (!n.requires_grad)
    return;
  if (n.has_grad) {
    n.grad += g;
  } else {
    n.grad = g;
    n.has_grad = true;
  }
}

void Tape::backward(const Var &output) {
  backward(output, Tensor::Ones(output.rows(), output.cols()));
}

void Tape::backward(const Var &output, const Tensor &seed) {
  if (seed.rows() != output.rows() || seed.cols() != output.cols())
    shape_mismatch("backward", output.value(), seed);
  for (auto &n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  accumulate(output.id(), seed);
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node &n = nodes_[i];
    if (n.has_grad && n.backward)
      n.backward(*this, n.grad);
  }
}

Tensor Tape::grad(const Var &v) const {
  const Node &n = nodes_[v.id()];
  if (!n.has_grad)
    return Tensor::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var matmul(const Var &a, const Var &b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows())
    shape_mismatch("matmul", a.value(), b.value());
  Tape &t = a.tape();
  const auto ia = a.id(), ib = b.id();
  Tensor out = a.value() * b.value();
  return t.record(std::move(out), t.requires_grad(ia) || t.requires_grad(ib),
                  [ia, ib](Tape &t, const Tensor &g) {
                    if (t.requires_grad(ia))
                      t.accumulate(ia, g * t.value(ib).transpose());
                    if (t.requires_grad(ib))
                      t.accumulate(ib, t.value(ia).transpose() * g);
                  });
}

Var add(const Var &a, const Var &b) {
  require_same_tape(a, b);
  require_same_shape("add", a, b);
  Tape &t = a.tape();
  const auto ia = a.id(), ib = b.id();
  return t.record(a.value() + b.value(),
                  t.requires_grad(ia) || t.requires_grad(ib),
                  [ia, ib](Tape &t, const Tensor &g) {
                    t.accumulate(ia, g);
                    t.accumulate(ib, g);
                  });
}

Var sub(const Var &a, const Var &b) {
  require_same_tape(a, b);
  require_same_shape("sub", a, b);
  Tape &t = a.tape();
  const auto ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(),
                  t.requires_grad(ia) || t.requires_grad(ib),
                  [ia, ib](Tape &t, const Tensor &g) {
                    t.accumulate(ia, g);
                    if (t.requires_grad(ib))
                      t.accumulate(ib, -g);
                  });
}

Var mul(const Var &a, const Var &b) {
  require_same_tape(a, b);
  require_same_shape("mul", a, b);
  Tape &t = a.tape();
  const auto ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseProduct(b.value()),
                  t.requires_grad(ia) || t.requires_grad(ib),
                  [ia, ib](Tape &t, const Tensor &g) {
                    if (t.requires_grad(ia))
                      t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                    if (t.requires_grad(ib))
                      t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                  });
}

Var scale(const Var &a, double k) {
  Tape &t = a.tape();
  const auto ia = a.id();
  return t.record(a.value() * k, t.requires_grad(ia),
                  [ia, k](Tape &t, const Tensor &g) {
                    t.accumulate(ia, g * k);
                  });
}

Var transpose(const Var &a) {
  Tape &t = a.tape();
  const auto ia = a.id();
  return t.record(a.value().transpose(), t.requires_grad(ia),
                  [ia](Tape &t, const Tensor &g) {
                    t.accumulate(ia, g.transpose());
                  });
}

Var concat_cols(const Var &a, const Var &b) {
  require_same_tape(a, b);
  if (a.rows() != b.rows())
    shape_mismatch("concat_cols", a.value(), b.value());
  Tape &t = a.tape();
  const auto ia = a.id(), ib = b.id();
  const Index left = a.cols(), right = b.cols();
  Tensor out(a.rows(), left + right);
  out << a.value(), b.value();
  return t.record(std::move(out), t.requires_grad(ia) || t.requires_grad(ib),
                  [ia, ib, left, right](Tape &t, const Tensor &g) {
                    if (t.requires_grad(ia))
                      t.accumulate(ia, g.leftCols(left));
                    if (t.requires_grad(ib))
                      t.accumulate(ib, g.rightCols(right));
                  });
}

Var concat_rows(std::span<const Var> parts) {
  Tape &t = tape_of(parts);
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const auto &p : parts) {
    if (p.cols() != cols)
      shape_mismatch("concat_rows", parts.front().value(), p.value());
    rows += p.rows();
  }
  Tensor out(rows, cols);
  std::vector<std::pair<std::size_t, Index>> spans;
  spans.reserve(parts.size());
  Index at = 0;
  for (const auto &p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    spans.emplace_back(p.id(), p.rows());
    at += p.rows();
  }
  return t.record(std::move(out), any_requires_grad(parts),
                  [spans = std::move(spans)](Tape &t, const Tensor &g) {
                    Index at = 0;
                    for (const auto &[id, n] : spans) {
                      if (t.requires_grad(id))
                        t.accumulate(id, g.middleRows(at, n));
                      at += n;
                    }
                  });
}

Var slice_rows(const Var &a, Index start, Index count) {
  if (start < 0 || count <= 0 || start + count > a.rows())
    throw DimensionError("slice_rows: rows [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " +
                         shape_string(a.value()));
  Tape &t = a.tape();
  const auto ia = a.id();
  const Index rows = a.rows(), cols = a.cols();
  return t.record(a.value().middleRows(start, count), t.requires_grad(ia),
                  [ia, start, count, rows, cols](Tape &t, const Tensor &g) {
                    Tensor full = Tensor::Zero(rows, cols);
                    full.middleRows(start, count) = g;
                    t.accumulate(ia, full);
                  });
}

Var gather_rows(const Var &table, std::span<const int> rows) {
  if (rows.empty())
    throw ArgumentError("gather_rows: empty index list");
  const Tensor &src = table.value();
  Tensor out(static_cast<Index>(rows.size()), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= src.rows())
      throw ArgumentError("gather_rows: index " + std::to_string(rows[i]) +
                          " outside " + shape_string(src));
    out.row(static_cast<Index>(i)) = src.row(rows[i]);
  }
  Tape &t = table.tape();
  const auto it = table.id();
  std::vector<int> idx(rows.begin(), rows.end());
  return t.record(std::move(out), t.requires_grad(it),
                  [it, idx = std::move(idx)](Tape &t, const Tensor &g) {
                    const Tensor &src = t.value(it);
                    Tensor full = Tensor::Zero(src.rows(), src.cols());
                    for (std::size_t i = 0; i < idx.size(); ++i)
                      full.row(idx[i]) += g.row(static_cast<Index>(i));
                    t.accumulate(it, full);
                  });
}

Var relu(const Var &a) {
  Tape &t = a.tape();
  const auto ia = a.id();
  return t.record(a.value().cwiseMax(0.0), t.requires_grad(ia),
                  [ia](Tape &t, const Tensor &g) {
                    const Tensor &x = t.value(ia);
                    t.accumulate(ia, (x.array() > 0.0).select(g, 0.0));
                  });
}

Var sigmoid(const Var &a) {
  Tape &t = a.tape();
  const auto ia = a.id();
  Tensor y = (1.0 + (-a.value().array()).exp()).inverse().matrix();
  const Tensor y_copy = y;
  return t.record(std::move(y), t.requires_grad(ia),
                  [ia, y_copy](Tape &t, const Tensor &g) {
                    t.accumulate(ia, (g.array() * y_copy.array() *
                                      (1.0 - y_copy.array()))
                                       .matrix());
                  });
}

Var tanh(const Var &a) {
  Tape &t = a.tape();
  const auto ia = a.id();
  Tensor y = a.value().array().tanh().matrix();
  const Tensor y_copy = y;
  return t.record(std::move(y), t.requires_grad(ia),
                  [ia, y_copy](Tape &t, const Tensor &g) {
                    t.accumulate(
                      ia, (g.array() * (1.0 - y_copy.array().square())).matrix());
                  });
}

Var softmax_rows(const Var &a) {
  const Tensor &x = a.value();
  Tensor y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  Tape &t = a.tape();
  const auto ia = a.id();
  const Tensor y_copy = y;
  return t.record(std::move(y), t.requires_grad(ia),
                  [ia, y_copy](Tape &t, const Tensor &g) {
                    Tensor dx(y_copy.rows(), y_copy.cols());
                    for (Index r = 0; r < y_copy.rows(); ++r) {
                      const double dot = g.row(r).dot(y_copy.row(r));
                      dx.row(r) = (y_copy.row(r).array() *
                                   (g.row(r).array() - dot))
                                    .matrix();
                    }
                    t.accumulate(ia, dx);
                  });
}

Var sum(const Var &a) {
  Tape &t = a.tape();
  const auto ia = a.id();
  const Index r = a.rows(), c = a.cols();
  Tensor out(1, 1);
  out(0, 0) = a.value().sum();
  return t.record(std::move(out), t.requires_grad(ia),
                  [ia, r, c](Tape &t, const Tensor &g) {
                    t.accumulate(ia, Tensor::Constant(r, c, g(0, 0)));
                  });
}

Var mean(const Var &a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var max_over_list(std::span<const Var> xs) {
  Tape &t = tape_of(xs);
  for (const auto &x : xs)
    require_same_shape("max_over_list", xs.front(), x);
  Tensor out = xs.front().value();
  // Index of the list element that holds each winning entry.
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> winner =
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(
      out.rows(), out.cols());
  for (std::size_t k = 1; k < xs.size(); ++k) {
    const Tensor &v = xs[k].value();
    for (Index i = 0; i < out.size(); ++i) {
      if (v.data()[i] > out.data()[i]) {
        out.data()[i] = v.data()[i];
        winner.data()[i] = static_cast<int>(k);
      }
    }
  }
  std::vector<std::size_t> ids;
  for (const auto &x : xs)
    ids.push_back(x.id());
  return t.record(std::move(out), any_requires_grad(xs),
                  [ids = std::move(ids), winner](Tape &t, const Tensor &g) {
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      if (!t.requires_grad(ids[k]))
                        continue;
                      t.accumulate(ids[k],
                                   (winner.array() == static_cast<int>(k))
                                     .select(g, 0.0));
                    }
                  });
}

Var sum_over_list(std::span<const Var> xs) {
  Tape &t = tape_of(xs);
  Tensor out = xs.front().value();
  for (std::size_t k = 1; k < xs.size(); ++k) {
    require_same_shape("sum_over_list", xs.front(), xs[k]);
    out += xs[k].value();
  }
  std::vector<std::size_t> ids;
  for (const auto &x : xs)
    ids.push_back(x.id());
  return t.record(std::move(out), any_requires_grad(xs),
                  [ids = std::move(ids)](Tape &t, const Tensor &g) {
                    for (auto id : ids)
                      t.accumulate(id, g);
                  });
}

Var mean_over_list(std::span<const Var> xs) {
  if (xs.size() == 1)
    return xs.front();
  return scale(sum_over_list(xs), 1.0 / static_cast<double>(xs.size()));
}

Var cross_entropy(const Var &logits, Index target) {
  const Tensor &z = logits.value();
  if (z.cols() != 1)
    throw DimensionError("cross_entropy: logits must be a column, got " +
                         shape_string(z));
  if (target < 0 || target >= z.rows())
    throw ArgumentError("cross_entropy: target " + std::to_string(target) +
                        " outside " + std::to_string(z.rows()) + " classes");
  const double m = z.maxCoeff();
  const Vector e = (z.col(0).array() - m).exp();
  const double total = e.sum();
  Tensor out(1, 1);
  out(0, 0) = std::log(total) + m - z(target, 0);
  Vector probs = e / total;
  Tape &t = logits.tape();
  const auto iz = logits.id();
  return t.record(std::move(out), t.requires_grad(iz),
                  [iz, target, probs = std::move(probs)](Tape &t,
                                                         const Tensor &g) {
                    Tensor dz = probs;
                    dz(target, 0) -= 1.0;
                    t.accumulate(iz, dz * g(0, 0));
                  });
}

double grad_check(const ScalarFn &f, const Tensor &x, double h, double floor) {
  if (!(h > 0.0))
    throw ArgumentError("grad_check: step must be positive");
  if (!(floor > 0.0))
    throw ArgumentError("grad_check: floor must be positive");
  Tensor analytic;
  {
    Tape tape;
    Var xv = tape.variable(x);
    Var y = f(tape, xv);
    if (y.rows() != 1 || y.cols() != 1)
      throw DimensionError("grad_check: function must be scalar, got " +
                           shape_string(y.value()));
    tape.backward(y);
    analytic = tape.grad(xv);
  }
  auto eval = [&f](const Tensor &at) {
    Tape tape;
    return f(tape, tape.constant(at)).value()(0, 0);
  };
  double worst = 0.0;
  Tensor probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double up = eval(probe);
    probe.data()[i] = orig - h;
    const double down = eval(probe);
    probe.data()[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic.data()[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

} // namespace vtqa
