// Copyright 2026 The kgdiff Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef KGDIFF_AUTODIFF_HPP_
#define KGDIFF_AUTODIFF_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kgdiff::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

// Handle to a tape node.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense row-major matrices. Every op appends a node
// holding its value and, when recording, a closure that pushes the node's
// gradient to its inputs. A tape built with record=false is a plain
// forward evaluator.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) { nodes_.reserve(512); }

  bool recording() const { return record_; }
  size_t size() const { return nodes_.size(); }

  // Drops every node created after the first `n`.
  void truncate(size_t n) {
    if (n < nodes_.size()) nodes_.resize(n);
  }

  Var constant(Matrix value) { return push(std::move(value), false); }
  Var parameter(Matrix value) { return push(std::move(value), record_); }

  const Matrix& value(Var v) const { return nodes_[static_cast<size_t>(v.id)].value; }

  // Zero-sized when no gradient reached the node.
  const Matrix& grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].grad; }

  void backward(Var root) {
    if (!record_) throw std::logic_error("backward on a non-recording tape");
    auto& r = node(root);
    if (r.value.size() != 1) throw std::logic_error("backward root must be a scalar");
    r.grad = Matrix::Ones(1, 1);
    for (int i = root.id; i >= 0; --i) {
      auto& n = nodes_[static_cast<size_t>(i)];
      if (n.back && n.grad.size() != 0) n.back();
    }
  }

  // ---- linear algebra -------------------------------------------------

  Var matmul(Var a, Var b) {
    if (value(a).cols() != value(b).rows()) throw std::invalid_argument("matmul: shape mismatch");
    Var out = push(value(a) * value(b), needs(a, b));
    if (wants(out)) {
      node(out).back = [this, a, b, out] {
        const Matrix& g = grad(out);
        if (needs(a)) accumulate(a, g * value(b).transpose());
        if (needs(b)) accumulate(b, value(a).transpose() * g);
      };
    }
    return out;
  }

  // a * b^T
  Var matmul_nt(Var a, Var b) {
    if (value(a).cols() != value(b).cols()) throw std::invalid_argument("matmul_nt: shape mismatch");
    Var out = push(value(a) * value(b).transpose(), needs(a, b));
    if (wants(out)) {
      node(out).back = [this, a, b, out] {
        const Matrix& g = grad(out);
        if (needs(a)) accumulate(a, g * value(b));
        if (needs(b)) accumulate(b, g.transpose() * value(a));
      };
    }
    return out;
  }

  Var add(Var a, Var b) {
    check_same(a, b, "add");
    Var out = push(value(a) + value(b), needs(a, b));
    if (wants(out)) {
      node(out).back = [this, a, b, out] {
        if (needs(a)) accumulate(a, grad(out));
        if (needs(b)) accumulate(b, grad(out));
      };
    }
    return out;
  }

  Var sub(Var a, Var b) {
    check_same(a, b, "sub");
    Var out = push(value(a) - value(b), needs(a, b));
    if (wants(out)) {
      node(out).back = [this, a, b, out] {
        if (needs(a)) accumulate(a, grad(out));
        if (needs(b)) accumulate(b, -grad(out));
      };
    }
    return out;
  }

  // a + broadcast of the 1 x n row `row` over every row of a.
  Var add_row(Var a, Var row) {
    if (value(row).rows() != 1 || value(row).cols() != value(a).cols()) throw std::invalid_argument("add_row: shape");
    Matrix v = value(a);
    v.rowwise() += value(row).row(0);
    Var out = push(std::move(v), needs(a, row));
    if (wants(out)) {
      node(out).back = [this, a, row, out] {
        if (needs(a)) accumulate(a, grad(out));
        if (needs(row)) accumulate(row, grad(out).colwise().sum());
      };
    }
    return out;
  }

  Var scale(Var a, double s) {
    Var out = push(value(a) * s, needs(a));
    if (wants(out)) {
      node(out).back = [this, a, s, out] { accumulate(a, grad(out) * s); };
    }
    return out;
  }

  // Row i multiplied by s[i].
  Var scale_rows(Var a, std::vector<double> s) {
    if (static_cast<Eigen::Index>(s.size()) != value(a).rows()) throw std::invalid_argument("scale_rows: shape");
    Matrix v = value(a);
    for (Eigen::Index i = 0; i < v.rows(); ++i) v.row(i) *= s[static_cast<size_t>(i)];
    Var out = push(std::move(v), needs(a));
    if (wants(out)) {
      node(out).back = [this, a, s = std::move(s), out] {
        Matrix g = grad(out);
        for (Eigen::Index i = 0; i < g.rows(); ++i) g.row(i) *= s[static_cast<size_t>(i)];
        accumulate(a, g);
      };
    }
    return out;
  }

  // ---- nonlinearities -------------------------------------------------

  // Exact GeLU: x * Phi(x).
  Var gelu(Var a) {
    const Matrix& x = value(a);
    Matrix v = x.unaryExpr([](double z) { return 0.5 * z * (1.0 + std::erf(z * std::numbers::sqrt2 / 2.0)); });
    Var out = push(std::move(v), needs(a));
    if (wants(out)) {
      node(out).back = [this, a, out] {
        Matrix d = value(a).unaryExpr([](double z) {
          const double cdf = 0.5 * (1.0 + std::erf(z * std::numbers::sqrt2 / 2.0));
          const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
          return cdf + z * pdf;
        });
        accumulate(a, grad(out).cwiseProduct(d));
      };
    }
    return out;
  }

  // Row-wise layer normalization with learned gain and bias rows.
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
    const Matrix& xv = value(x);
    const Eigen::Index n = xv.cols();
    Matrix xhat(xv.rows(), n);
    std::vector<double> inv_std(static_cast<size_t>(xv.rows()));
    for (Eigen::Index i = 0; i < xv.rows(); ++i) {
      const double mu = xv.row(i).mean();
      const double var = (xv.row(i).array() - mu).square().mean();
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<size_t>(i)] = is;
      xhat.row(i) = (xv.row(i).array() - mu) * is;
    }
    Matrix y = xhat;
    y.array().rowwise() *= value(gain).row(0).array();
    y.rowwise() += value(bias).row(0);
    Var out = push(std::move(y), needs(x) || needs(gain) || needs(bias));
    if (wants(out)) {
      node(out).back = [this, x, gain, bias, out, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
        const Matrix& g = grad(out);
        if (needs(gain)) accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
        if (needs(bias)) accumulate(bias, g.colwise().sum());
        if (needs(x)) {
          Matrix dxhat = g;
          dxhat.array().rowwise() *= value(gain).row(0).array();
          Matrix dx(g.rows(), g.cols());
          for (Eigen::Index i = 0; i < g.rows(); ++i) {
            const double m1 = dxhat.row(i).mean();
            const double m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
            dx.row(i) = (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2) * inv_std[static_cast<size_t>(i)];
          }
          accumulate(x, dx);
        }
      };
    }
    return out;
  }

  Var softmax_rows(Var s) {
    Matrix p = value(s);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const double mx = p.row(i).maxCoeff();
      p.row(i) = (p.row(i).array() - mx).exp();
      p.row(i) /= p.row(i).sum();
    }
    Var out = push(std::move(p), needs(s));
    if (wants(out)) {
      node(out).back = [this, s, out] {
        const Matrix& p = value(out);
        const Matrix& g = grad(out);
        Matrix ds = p.cwiseProduct(g);
        for (Eigen::Index i = 0; i < ds.rows(); ++i) {
          const double dot = ds.row(i).sum();
          ds.row(i) -= p.row(i) * dot;
        }
        accumulate(s, ds);
      };
    }
    return out;
  }

  // ---- reshaping ------------------------------------------------------

  Var cols(Var a, Eigen::Index start, Eigen::Index n) {
    Var out = push(value(a).middleCols(start, n), needs(a));
    if (wants(out)) {
      node(out).back = [this, a, start, n, out] {
        Matrix g = Matrix::Zero(value(a).rows(), value(a).cols());
        g.middleCols(start, n) = grad(out);
        accumulate(a, g);
      };
    }
    return out;
  }

  Var hcat(const std::vector<Var>& parts) {
    Eigen::Index rows = value(parts.front()).rows(), total = 0;
    bool req = false;
    for (Var p : parts) {
      if (value(p).rows() != rows) throw std::invalid_argument("hcat: row mismatch");
      total += value(p).cols();
      req = req || needs(p);
    }
    Matrix v(rows, total);
    Eigen::Index at = 0;
    for (Var p : parts) {
      v.middleCols(at, value(p).cols()) = value(p);
      at += value(p).cols();
    }
    Var out = push(std::move(v), req);
    if (wants(out)) {
      node(out).back = [this, parts, out] {
        Eigen::Index at = 0;
        for (Var p : parts) {
          const Eigen::Index c = value(p).cols();
          if (needs(p)) accumulate(p, grad(out).middleCols(at, c));
          at += c;
        }
      };
    }
    return out;
  }

  // Stack a on top of b.
  Var vcat(Var a, Var b) {
    if (value(a).cols() != value(b).cols()) throw std::invalid_argument("vcat: column mismatch");
    Matrix v(value(a).rows() + value(b).rows(), value(a).cols());
    v.topRows(value(a).rows()) = value(a);
    v.bottomRows(value(b).rows()) = value(b);
    Var out = push(std::move(v), needs(a, b));
    if (wants(out)) {
      node(out).back = [this, a, b, out] {
        const Eigen::Index ra = value(a).rows();
        if (needs(a)) accumulate(a, grad(out).topRows(ra));
        if (needs(b)) accumulate(b, grad(out).bottomRows(value(b).rows()));
      };
    }
    return out;
  }

  Var top_rows(Var a, Eigen::Index n) {
    Var out = push(value(a).topRows(n), needs(a));
    if (wants(out)) {
      node(out).back = [this, a, n, out] {
        Matrix g = Matrix::Zero(value(a).rows(), value(a).cols());
        g.topRows(n) = grad(out);
        accumulate(a, g);
      };
    }
    return out;
  }

  // Rows of `table` selected by ids (embedding lookup).
  Var gather_rows(Var table, std::vector<int> ids) {
    const Matrix& tv = value(table);
    Matrix v(static_cast<Eigen::Index>(ids.size()), tv.cols());
    for (size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= tv.rows()) throw std::out_of_range("gather_rows: id out of range");
      v.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
    }
    Var out = push(std::move(v), needs(table));
    if (wants(out)) {
      node(out).back = [this, table, ids = std::move(ids), out] {
        auto& t = node(table);
        if (t.grad.size() == 0) t.grad = Matrix::Zero(t.value.rows(), t.value.cols());
        const Matrix& g = grad(out);
        for (size_t i = 0; i < ids.size(); ++i) t.grad.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
      };
    }
    return out;
  }

  Var mean_rows(Var a) {
    const Eigen::Index n = value(a).rows();
    Var out = push(value(a).colwise().mean(), needs(a));
    if (wants(out)) {
      node(out).back = [this, a, n, out] {
        Matrix g = grad(out).replicate(n, 1) / static_cast<double>(n);
        accumulate(a, g);
      };
    }
    return out;
  }

  // ---- losses (scalar outputs) ----------------------------------------

  // sum_i w_i * ||a_i - b_i||^2
  Var weighted_sq_error(Var a, Var b, std::vector<double> w) {
    check_same(a, b, "weighted_sq_error");
    Matrix diff = value(a) - value(b);
    double total = 0.0;
    for (Eigen::Index i = 0; i < diff.rows(); ++i) total += w[static_cast<size_t>(i)] * diff.row(i).squaredNorm();
    Var out = push(Matrix::Constant(1, 1, total), needs(a, b));
    if (wants(out)) {
      node(out).back = [this, a, b, out, w = std::move(w), diff = std::move(diff)] {
        Matrix d = diff * (2.0 * grad(out)(0, 0));
        for (Eigen::Index i = 0; i < d.rows(); ++i) d.row(i) *= w[static_cast<size_t>(i)];
        if (needs(a)) accumulate(a, d);
        if (needs(b)) accumulate(b, -d);
      };
    }
    return out;
  }

  // sum_i w_i * (-log softmax(logits_i)[target_i])
  Var weighted_cross_entropy(Var logits, std::vector<int> targets, std::vector<double> w) {
    const Matrix& l = value(logits);
    Matrix p(l.rows(), l.cols());
    double total = 0.0;
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
      const double mx = l.row(i).maxCoeff();
      p.row(i) = (l.row(i).array() - mx).exp();
      const double z = p.row(i).sum();
      p.row(i) /= z;
      const double lse = mx + std::log(z);
      total += w[static_cast<size_t>(i)] * (lse - l(i, targets[static_cast<size_t>(i)]));
    }
    Var out = push(Matrix::Constant(1, 1, total), needs(logits));
    if (wants(out)) {
      node(out).back = [this, logits, out, p = std::move(p), targets = std::move(targets), w = std::move(w)] {
        Matrix d = p;
        for (Eigen::Index i = 0; i < d.rows(); ++i) {
          d(i, targets[static_cast<size_t>(i)]) -= 1.0;
          d.row(i) *= w[static_cast<size_t>(i)] * grad(out)(0, 0);
        }
        accumulate(logits, d);
      };
    }
    return out;
  }

  // sum_k c_k * s_k over scalar nodes.
  Var weighted_sum(const std::vector<Var>& scalars, std::vector<double> coeffs) {
    double total = 0.0;
    bool req = false;
    for (size_t k = 0; k < scalars.size(); ++k) {
      total += coeffs[k] * value(scalars[k])(0, 0);
      req = req || needs(scalars[k]);
    }
    Var out = push(Matrix::Constant(1, 1, total), req);
    if (wants(out)) {
      node(out).back = [this, scalars, coeffs = std::move(coeffs), out] {
        for (size_t k = 0; k < scalars.size(); ++k) {
          if (needs(scalars[k])) accumulate(scalars[k], Matrix::Constant(1, 1, coeffs[k] * grad(out)(0, 0)));
        }
      };
    }
    return out;
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void()> back;
    bool requires_grad = false;
  };

  Var push(Matrix value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), Matrix(), nullptr, requires_grad && record_});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Node& node(Var v) { return nodes_[static_cast<size_t>(v.id)]; }
  bool needs(Var v) const { return nodes_[static_cast<size_t>(v.id)].requires_grad; }
  bool needs(Var a, Var b) const { return needs(a) || needs(b); }
  bool wants(Var out) const { return record_ && needs(out); }

  template <typename Expr>
  void accumulate(Var v, const Expr& g) {
    auto& n = node(v);
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  void check_same(Var a, Var b, const char* what) const {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
      throw std::invalid_argument(std::string(what) + ": shape mismatch");
    }
  }

  std::vector<Node> nodes_;
  bool record_;
};

}  // namespace kgdiff::ad

#endif  // KGDIFF_AUTODIFF_HPP_
