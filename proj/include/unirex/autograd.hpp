#pragma once
//------------------------------------------------------------------------------
//
//   Copyright 2026 The Unirex Authors
//
//   Licensed under the Apache License, Version 2.0 (the "License");
//   you may not use this file except in compliance with the License.
//   You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
//   Unless required by applicable law or agreed to in writing, software
//   distributed under the License is distributed on an "AS IS" BASIS,
//   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
//   See the License for the specific language governing permissions and
//   limitations under the License.
//
//------------------------------------------------------------------------------

// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Tape records every operation of one forward computation. Nodes are stored
// in creation order, which is already a topological order, so backward() is a
// single reverse sweep. Parameters live outside the tape; a tape references
// their values and collects their gradients until accumulate_parameter_grads()
// folds them into Parameter::grad.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "unirex/errors.hpp"

namespace unirex::ag {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// A trainable tensor with its accumulated gradient.
struct Parameter
{
  std::string name;
  Matrix      value;
  Matrix      grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
    : name(std::move(n))
    , value(std::move(v))
    , grad(Matrix::Zero(value.rows(), value.cols()))
  {}

  void zero_grad()
  {
    grad.setZero(value.rows(), value.cols());
  }
};

using ParameterList = std::vector<Parameter *>;

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var
{
  Tape *tape  = nullptr;
  int   index = -1;

  bool valid() const noexcept
  {
    return tape != nullptr && index >= 0;
  }
  Matrix const &value() const;
  Matrix const &grad() const;
  double        scalar() const;
  Eigen::Index  rows() const
  {
    return value().rows();
  }
  Eigen::Index cols() const
  {
    return value().cols();
  }
};

enum class GradMode
{
  enabled,
  disabled
};

class Tape
{
public:
  using Backward = std::function<void(Tape &, int)>;

  explicit Tape(GradMode mode = GradMode::enabled)
    : mode_(mode)
  {
    nodes_.reserve(256);
  }

  Tape(Tape const &)            = delete;
  Tape &operator=(Tape const &) = delete;

  bool grad_enabled() const noexcept
  {
    return mode_ == GradMode::enabled;
  }

  Var constant(Matrix value)
  {
    return push(std::move(value), false, nullptr);
  }

  Var constant_scalar(double v)
  {
    Matrix m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  /// Leaf whose gradient is wanted (e.g. input embeddings for attribution).
  Var input(Matrix value)
  {
    return push(std::move(value), grad_enabled(), nullptr);
  }

  /// Leaf referencing a parameter. Each parameter appears at most once per tape.
  Var param(Parameter &p)
  {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end())
    {
      return Var{this, it->second};
    }
    Node node;
    node.ref           = &p.value;
    node.requires_grad = grad_enabled() && track_parameters_;
    node.parameter     = &p;
    nodes_.push_back(std::move(node));
    int const idx = static_cast<int>(nodes_.size()) - 1;
    param_nodes_.emplace(&p, idx);
    return Var{this, idx};
  }

  /// When false, parameters enter the tape as constants (attribution passes).
  void set_track_parameters(bool on) noexcept
  {
    track_parameters_ = on;
  }

  /// Appends a node. `backward` receives the tape and the new node's index.
  Var push(Matrix value, bool requires_grad, Backward backward)
  {
    Node node;
    node.value         = std::move(value);
    node.requires_grad = requires_grad && grad_enabled();
    if (node.requires_grad)
    {
      node.backward = std::move(backward);
    }
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  Matrix const &value(int i) const
  {
    Node const &n = nodes_[static_cast<std::size_t>(i)];
    return n.ref != nullptr ? *n.ref : n.value;
  }

  Matrix const &grad(int i) const
  {
    return nodes_[static_cast<std::size_t>(i)].grad;
  }

  bool requires_grad(int i) const
  {
    return nodes_[static_cast<std::size_t>(i)].requires_grad;
  }

  bool requires_grad(Var v) const
  {
    return requires_grad(v.index);
  }

  /// Adds `g` into the gradient of node `i` (lazily zero-initialised).
  template <typename Expr>
  void accumulate(int i, Expr const &g)
  {
    Node &n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad)
    {
      return;
    }
    if (n.grad.size() == 0)
    {
      Matrix const &v = value(i);
      n.grad          = Matrix::Zero(v.rows(), v.cols());
    }
    n.grad += g;
  }

  void zero_grads()
  {
    for (auto &n : nodes_)
    {
      n.grad.resize(0, 0);
    }
  }

  /// Reverse sweep from a 1x1 root.
  void backward(Var root)
  {
    if (!grad_enabled())
    {
      throw Error("backward() on a tape with gradients disabled");
    }
    if (root.tape != this || value(root.index).size() != 1)
    {
      throw Error("backward() requires a scalar root on this tape");
    }
    if (!requires_grad(root.index))
    {
      return;
    }
    accumulate(root.index, Matrix::Ones(1, 1));
    for (int i = root.index; i >= 0; --i)
    {
      Node &n = nodes_[static_cast<std::size_t>(i)];
      if (n.backward && n.grad.size() != 0)
      {
        n.backward(*this, i);
      }
    }
  }

  /// Adds `scale` times every collected parameter gradient into Parameter::grad.
  void accumulate_parameter_grads(double scale = 1.0) const
  {
    for (auto const &[param, idx] : param_nodes_)
    {
      Matrix const &g = nodes_[static_cast<std::size_t>(idx)].grad;
      if (g.size() != 0)
      {
        param->grad += scale * g;
      }
    }
  }

  std::size_t size() const noexcept
  {
    return nodes_.size();
  }

private:
  struct Node
  {
    Matrix        value;
    Matrix const *ref = nullptr;
    Matrix        grad;
    Backward      backward;
    bool          requires_grad = false;
    Parameter    *parameter     = nullptr;
  };

  GradMode                                  mode_;
  bool                                      track_parameters_ = true;
  std::vector<Node>                         nodes_;
  std::unordered_map<Parameter *, int>       param_nodes_;
};

inline Matrix const &Var::value() const
{
  return tape->value(index);
}

inline Matrix const &Var::grad() const
{
  return tape->grad(index);
}

inline double Var::scalar() const
{
  return value()(0, 0);
}

namespace detail {

inline bool any_requires(std::initializer_list<Var> vars)
{
  for (Var const &v : vars)
  {
    if (v.tape->requires_grad(v.index))
    {
      return true;
    }
  }
  return false;
}

inline Tape &same_tape(Var a, Var b)
{
  if (a.tape != b.tape)
  {
    throw Error("operands recorded on different tapes");
  }
  return *a.tape;
}

inline double gelu(double x)
{
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

inline double gelu_derivative(double x)
{
  constexpr double c = 0.7978845608028654;
  double const     u = c * (x + 0.044715 * x * x * x);
  double const     t = std::tanh(u);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * 0.044715 * x * x);
}

inline double softplus(double x)
{
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double sigmoid(double x)
{
  if (x >= 0)
  {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double const e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and linear algebra
// ---------------------------------------------------------------------------

inline Var matmul(Var a, Var b)
{
  Tape &t = detail::same_tape(a, b);
  if (a.cols() != b.rows())
  {
    throw Error("matmul: inner dimensions differ");
  }
  return t.push(a.value() * b.value(), detail::any_requires({a, b}), [a, b](Tape &tp, int self) {
    Matrix const &g = tp.grad(self);
    if (tp.requires_grad(a))
    {
      tp.accumulate(a.index, g * tp.value(b.index).transpose());
    }
    if (tp.requires_grad(b))
    {
      tp.accumulate(b.index, tp.value(a.index).transpose() * g);
    }
  });
}

inline Var add(Var a, Var b)
{
  Tape &t = detail::same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols())
  {
    throw Error("add: shape mismatch");
  }
  return t.push(a.value() + b.value(), detail::any_requires({a, b}), [a, b](Tape &tp, int self) {
    tp.accumulate(a.index, tp.grad(self));
    tp.accumulate(b.index, tp.grad(self));
  });
}

inline Var sub(Var a, Var b)
{
  Tape &t = detail::same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols())
  {
    throw Error("sub: shape mismatch");
  }
  return t.push(a.value() - b.value(), detail::any_requires({a, b}), [a, b](Tape &tp, int self) {
    tp.accumulate(a.index, tp.grad(self));
    tp.accumulate(b.index, -tp.grad(self));
  });
}

/// a (r x c) + row (1 x c) broadcast over rows.
inline Var add_row(Var a, Var row)
{
  Tape &t = detail::same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols())
  {
    throw Error("add_row: shape mismatch");
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.push(std::move(out), detail::any_requires({a, row}), [a, row](Tape &tp, int self) {
    tp.accumulate(a.index, tp.grad(self));
    if (tp.requires_grad(row))
    {
      tp.accumulate(row.index, tp.grad(self).colwise().sum());
    }
  });
}

inline Var scale(Var a, double s)
{
  return a.tape->push(a.value() * s, a.tape->requires_grad(a), [a, s](Tape &tp, int self) {
    tp.accumulate(a.index, tp.grad(self) * s);
  });
}

inline Var add_scalar(Var a, double s)
{
  Matrix out = a.value().array() + s;
  return a.tape->push(std::move(out), a.tape->requires_grad(a), [a](Tape &tp, int self) {
    tp.accumulate(a.index, tp.grad(self));
  });
}

inline Var hadamard(Var a, Var b)
{
  Tape &t = detail::same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols())
  {
    throw Error("mul: shape mismatch");
  }
  return t.push(a.value().cwiseProduct(b.value()), detail::any_requires({a, b}),
                [a, b](Tape &tp, int self) {
                  Matrix const &g = tp.grad(self);
                  if (tp.requires_grad(a))
                  {
                    tp.accumulate(a.index, g.cwiseProduct(tp.value(b.index)));
                  }
                  if (tp.requires_grad(b))
                  {
                    tp.accumulate(b.index, g.cwiseProduct(tp.value(a.index)));
                  }
                });
}

inline Var transpose(Var a)
{
  return a.tape->push(a.value().transpose(), a.tape->requires_grad(a), [a](Tape &tp, int self) {
    tp.accumulate(a.index, tp.grad(self).transpose());
  });
}

inline Var gelu(Var a)
{
  Matrix out = a.value().unaryExpr([](double x) { return detail::gelu(x); });
  return a.tape->push(std::move(out), a.tape->requires_grad(a), [a](Tape &tp, int self) {
    Matrix d = tp.value(a.index).unaryExpr([](double x) { return detail::gelu_derivative(x); });
    tp.accumulate(a.index, tp.grad(self).cwiseProduct(d));
  });
}

inline Var relu(Var a)
{
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape->push(std::move(out), a.tape->requires_grad(a), [a](Tape &tp, int self) {
    Matrix mask = (tp.value(a.index).array() > 0.0).cast<double>().matrix();
    tp.accumulate(a.index, tp.grad(self).cwiseProduct(mask));
  });
}

inline Var sum(Var a)
{
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape->push(std::move(out), a.tape->requires_grad(a), [a](Tape &tp, int self) {
    double const g = tp.grad(self)(0, 0);
    Matrix const &v = tp.value(a.index);
    tp.accumulate(a.index, Matrix::Constant(v.rows(), v.cols(), g));
  });
}

/// Selects rows by index (duplicates allowed).
inline Var select_rows(Var a, std::vector<int> rows)
{
  Matrix const &v = a.value();
  Matrix        out(static_cast<Eigen::Index>(rows.size()), v.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
  {
    out.row(static_cast<Eigen::Index>(i)) = v.row(rows[i]);
  }
  return a.tape->push(std::move(out), a.tape->requires_grad(a),
                      [a, rows = std::move(rows)](Tape &tp, int self) {
                        Matrix const &g = tp.grad(self);
                        Matrix const &v = tp.value(a.index);
                        Matrix        acc = Matrix::Zero(v.rows(), v.cols());
                        for (std::size_t i = 0; i < rows.size(); ++i)
                        {
                          acc.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
                        }
                        tp.accumulate(a.index, acc);
                      });
}

inline Var row(Var a, int r)
{
  return select_rows(a, {r});
}

/// Single element (r, c) as a 1x1 node.
inline Var pick(Var a, Eigen::Index r, Eigen::Index c)
{
  Matrix out(1, 1);
  out(0, 0) = a.value()(r, c);
  return a.tape->push(std::move(out), a.tape->requires_grad(a), [a, r, c](Tape &tp, int self) {
    Matrix const &v = tp.value(a.index);
    Matrix        d = Matrix::Zero(v.rows(), v.cols());
    d(r, c)         = tp.grad(self)(0, 0);
    tp.accumulate(a.index, d);
  });
}

/// Column-wise mean, giving a 1 x c row.
inline Var mean_rows(Var a)
{
  Matrix out = a.value().colwise().mean();
  return a.tape->push(std::move(out), a.tape->requires_grad(a), [a](Tape &tp, int self) {
    auto const n = tp.value(a.index).rows();
    tp.accumulate(a.index, tp.grad(self).replicate(n, 1) / static_cast<double>(n));
  });
}

/// Embedding lookup: rows of `table` selected by token id.
inline Var gather_rows(Var table, std::span<TokenId const> ids)
{
  std::vector<int> rows(ids.begin(), ids.end());
  for (int r : rows)
  {
    if (r < 0 || r >= table.rows())
    {
      throw ValidationError("token id " + std::to_string(r) + " out of range [0, " +
                            std::to_string(table.rows()) + ")");
    }
  }
  return select_rows(table, std::move(rows));
}

// ---------------------------------------------------------------------------
// Normalisation and attention
// ---------------------------------------------------------------------------

/// Row-wise softmax.
inline Var softmax_rows(Var a)
{
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r)
  {
    double const m = out.row(r).maxCoeff();
    out.row(r)     = (out.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return a.tape->push(std::move(out), a.tape->requires_grad(a), [a](Tape &tp, int self) {
    Matrix const &p = tp.value(self);
    Matrix const &g = tp.grad(self);
    Matrix        d = p.cwiseProduct(g);
    Vector        s = d.rowwise().sum();
    d -= p.cwiseProduct(s.replicate(1, p.cols()));
    tp.accumulate(a.index, d);
  });
}

/// Row-wise layer normalisation with learned gain and bias (both 1 x c).
inline Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5)
{
  Tape &t = detail::same_tape(x, gain);
  detail::same_tape(x, bias);
  Matrix const &v    = x.value();
  auto const    cols = static_cast<double>(v.cols());
  Matrix        xhat(v.rows(), v.cols());
  Vector        inv_std(v.rows());
  for (Eigen::Index r = 0; r < v.rows(); ++r)
  {
    double const mu  = v.row(r).mean();
    double const var = (v.row(r).array() - mu).square().sum() / cols;
    inv_std(r)       = 1.0 / std::sqrt(var + eps);
    xhat.row(r)      = (v.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  return t.push(std::move(out), detail::any_requires({x, gain, bias}),
                [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape &tp,
                                                                                      int self) {
                  Matrix const &g = tp.grad(self);
                  if (tp.requires_grad(gain))
                  {
                    tp.accumulate(gain.index, g.cwiseProduct(xhat).colwise().sum());
                  }
                  if (tp.requires_grad(bias))
                  {
                    tp.accumulate(bias.index, g.colwise().sum());
                  }
                  if (tp.requires_grad(x))
                  {
                    Matrix dxhat = (g.array().rowwise() * tp.value(gain.index).row(0).array()).matrix();
                    auto const n  = static_cast<double>(dxhat.cols());
                    Matrix     dx(dxhat.rows(), dxhat.cols());
                    for (Eigen::Index r = 0; r < dxhat.rows(); ++r)
                    {
                      double const m1 = dxhat.row(r).sum() / n;
                      double const m2 = dxhat.row(r).dot(xhat.row(r)) / n;
                      dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
                    }
                    tp.accumulate(x.index, dx);
                  }
                });
}

/// Multi-head scaled dot-product self-attention over a packed [Q | K | V]
/// projection of shape n x 3d. Returns the concatenated head outputs (n x d).
inline Var multi_head_attention(Var qkv, int heads)
{
  Matrix const &v = qkv.value();
  Eigen::Index const n = v.rows();
  Eigen::Index const d = v.cols() / 3;
  if (v.cols() % 3 != 0 || heads <= 0 || d % heads != 0)
  {
    throw Error("multi_head_attention: bad shape");
  }
  Eigen::Index const dh    = d / heads;
  double const       scale = 1.0 / std::sqrt(static_cast<double>(dh));

  auto   probs = std::make_shared<std::vector<Matrix>>(static_cast<std::size_t>(heads));
  Matrix out(n, d);
  for (int h = 0; h < heads; ++h)
  {
    auto   q = v.middleCols(h * dh, dh);
    auto   k = v.middleCols(d + h * dh, dh);
    auto   w = v.middleCols(2 * d + h * dh, dh);
    Matrix s = (q * k.transpose()) * scale;
    for (Eigen::Index r = 0; r < n; ++r)
    {
      double const m = s.row(r).maxCoeff();
      s.row(r)       = (s.row(r).array() - m).exp();
      s.row(r) /= s.row(r).sum();
    }
    out.middleCols(h * dh, dh) = s * w;
    (*probs)[static_cast<std::size_t>(h)] = std::move(s);
  }
  return qkv.tape->push(std::move(out), qkv.tape->requires_grad(qkv),
                        [qkv, heads, d, dh, scale, probs](Tape &tp, int self) {
                          Matrix const &g = tp.grad(self);
                          Matrix const &v = tp.value(qkv.index);
                          Matrix        dqkv(v.rows(), v.cols());
                          for (int h = 0; h < heads; ++h)
                          {
                            Matrix const &p  = (*probs)[static_cast<std::size_t>(h)];
                            auto          q  = v.middleCols(h * dh, dh);
                            auto          k  = v.middleCols(d + h * dh, dh);
                            auto          w  = v.middleCols(2 * d + h * dh, dh);
                            auto          go = g.middleCols(h * dh, dh);
                            Matrix        dp = go * w.transpose();
                            Vector        rs = p.cwiseProduct(dp).rowwise().sum();
                            Matrix ds = p.cwiseProduct(dp - rs.replicate(1, p.cols())) * scale;
                            dqkv.middleCols(h * dh, dh)         = ds * k;
                            dqkv.middleCols(d + h * dh, dh)     = ds.transpose() * q;
                            dqkv.middleCols(2 * d + h * dh, dh) = p.transpose() * go;
                          }
                          tp.accumulate(qkv.index, dqkv);
                        });
}

// ---------------------------------------------------------------------------
// Scalar algebra on 1x1 nodes, used to express loss criteria generically
// ---------------------------------------------------------------------------

inline Var operator+(Var a, Var b)
{
  return add(a, b);
}
inline Var operator-(Var a, Var b)
{
  return sub(a, b);
}
inline Var operator-(Var a)
{
  return scale(a, -1.0);
}
inline Var operator*(double s, Var a)
{
  return scale(a, s);
}
inline Var operator*(Var a, double s)
{
  return scale(a, s);
}
inline Var operator+(Var a, double s)
{
  return add_scalar(a, s);
}
inline Var operator+(double s, Var a)
{
  return add_scalar(a, s);
}

/// Elementwise max(a, floor). Gradient passes where a > floor.
inline Var clamp_min(Var a, double floor)
{
  Matrix out = a.value().cwiseMax(floor);
  return a.tape->push(std::move(out), a.tape->requires_grad(a), [a, floor](Tape &tp, int self) {
    Matrix mask = (tp.value(a.index).array() > floor).cast<double>().matrix();
    tp.accumulate(a.index, tp.grad(self).cwiseProduct(mask));
  });
}

inline Var abs(Var a)
{
  Matrix out = a.value().cwiseAbs();
  return a.tape->push(std::move(out), a.tape->requires_grad(a), [a](Tape &tp, int self) {
    Matrix sign = tp.value(a.index).unaryExpr([](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
    tp.accumulate(a.index, tp.grad(self).cwiseProduct(sign));
  });
}

/// Mean of a non-empty list of same-shaped nodes.
inline Var mean(std::vector<Var> const &xs)
{
  if (xs.empty())
  {
    throw Error("mean of empty list");
  }
  Var acc = xs.front();
  for (std::size_t i = 1; i < xs.size(); ++i)
  {
    acc = add(acc, xs[i]);
  }
  return scale(acc, 1.0 / static_cast<double>(xs.size()));
}

// ---------------------------------------------------------------------------
// Fused losses
// ---------------------------------------------------------------------------

/// -log softmax(logits)[target] for a 1 x M logit row.
inline Var cross_entropy(Var logits, int target)
{
  RowVector const z = logits.value().row(0);
  if (target < 0 || target >= z.size())
  {
    throw ValidationError("cross_entropy: target class out of range");
  }
  double const m   = z.maxCoeff();
  double const lse = m + std::log((z.array() - m).exp().sum());
  Matrix       out(1, 1);
  out(0, 0) = lse - z(target);
  return logits.tape->push(std::move(out), logits.tape->requires_grad(logits),
                           [logits, target, lse](Tape &tp, int self) {
                             RowVector p = (tp.value(logits.index).row(0).array() - lse).exp();
                             p(target) -= 1.0;
                             tp.accumulate(logits.index, tp.grad(self)(0, 0) * p);
                           });
}

/// KL(p || q) = sum p (log(p + eps) - log(q + eps)) for 1 x M probability rows.
inline Var kl_divergence(Var p, Var q, double eps)
{
  Tape &t = detail::same_tape(p, q);
  auto  pv = p.value().array();
  auto  qv = q.value().array();
  Matrix out(1, 1);
  out(0, 0) = (pv * ((pv + eps).log() - (qv + eps).log())).sum();
  return t.push(std::move(out), detail::any_requires({p, q}), [p, q, eps](Tape &tp, int self) {
    double const g  = tp.grad(self)(0, 0);
    auto         pv = tp.value(p.index).array();
    auto         qv = tp.value(q.index).array();
    if (tp.requires_grad(p))
    {
      Matrix dp = (g * ((pv + eps).log() - (qv + eps).log() + pv / (pv + eps))).matrix();
      tp.accumulate(p.index, dp);
    }
    if (tp.requires_grad(q))
    {
      Matrix dq = (-g * pv / (qv + eps)).matrix();
      tp.accumulate(q.index, dq);
    }
  });
}

/// Mean over `mask`ed entries of the two-sided binary cross-entropy between
/// sigmoid(logits) and `target`. `logits`, `target` and `mask` share a shape.
inline Var masked_bce_with_logits(Var logits, Matrix target, Matrix mask)
{
  Matrix const &s     = logits.value();
  double const   count = mask.sum();
  if (count <= 0)
  {
    throw ValidationError("masked_bce_with_logits: empty mask");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
  {
    if (mask(i) != 0.0)
    {
      total += detail::softplus(s(i)) - target(i) * s(i);
    }
  }
  Matrix out(1, 1);
  out(0, 0) = total / count;
  return logits.tape->push(
    std::move(out), logits.tape->requires_grad(logits),
    [logits, target = std::move(target), mask = std::move(mask), count](Tape &tp, int self) {
      Matrix const &s = tp.value(logits.index);
      Matrix        d(s.rows(), s.cols());
      double const  g = tp.grad(self)(0, 0) / count;
      for (Eigen::Index i = 0; i < s.size(); ++i)
      {
        d(i) = mask(i) != 0.0 ? g * (detail::sigmoid(s(i)) - target(i)) : 0.0;
      }
      tp.accumulate(logits.index, d);
    });
}

/// sum(weights .* x .* mask) / sum(mask).
inline Var masked_weighted_mean(Var x, Matrix weights, Matrix const &mask)
{
  double const count = mask.sum();
  if (count <= 0)
  {
    throw ValidationError("masked_weighted_mean: empty mask");
  }
  Matrix w = weights.cwiseProduct(mask) / count;
  Matrix out(1, 1);
  out(0, 0) = x.value().cwiseProduct(w).sum();
  return x.tape->push(std::move(out), x.tape->requires_grad(x), [x, w = std::move(w)](Tape &tp, int self) {
    tp.accumulate(x.index, tp.grad(self)(0, 0) * w);
  });
}

}  // namespace unirex::ag
