/* Copyright 2026 The sfda Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "sfda/autodiff.hpp"

#include <cmath>
#include <string>

#include "sfda/error.hpp"

namespace sfda::ad {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void require(bool ok, const char* what) {
  if (!ok) throw ContractError(std::string("autodiff: ") + what);
}

Tape& tape_of(const Var& a) {
  require(a.valid(), "use of an unbound variable");
  return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  require(a.valid() && b.valid() && a.tape() == b.tape(),
          "operands recorded on different tapes");
  return *a.tape();
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) { return push(std::move(value), false, {}); }

Var Tape::leaf(Matrix value) { return push(std::move(value), true, {}); }

Var Tape::push(Matrix value, bool needs_grad, Backward backward) {
  nodes_.push_back(Node{std::move(value), Matrix(), needs_grad,
                        needs_grad ? std::move(backward) : Backward()});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Tape::grad_ref(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0 && n.value.size() != 0) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

Matrix Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(const Var& scalar) {
  require(scalar.tape() == this, "backward target belongs to another tape");
  require(value(scalar).size() == 1, "backward target must be 1 x 1");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[scalar.id()].needs_grad) return;
  grad_ref(scalar.id())(0, 0) = 1.0;
  for (int id = scalar.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || !n.backward || n.grad.size() == 0) continue;
    n.backward(*this, id);
  }
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require(a.cols() == b.rows(), "matmul shape mismatch");
  const int ia = a.id(), ib = b.id();
  return t.push(a.value() * b.value(), t.needs_grad(ia) || t.needs_grad(ib),
                [ia, ib](Tape& t, int self) {
                  const Matrix& g = t.upstream(self);
                  if (t.needs_grad(ia))
                    t.grad_ref(ia).noalias() += g * t.value(ib).transpose();
                  if (t.needs_grad(ib))
                    t.grad_ref(ib).noalias() += t.value(ia).transpose() * g;
                });
}

Var matmul_nt(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require(a.cols() == b.cols(), "matmul_nt shape mismatch");
  const int ia = a.id(), ib = b.id();
  return t.push(a.value() * b.value().transpose(),
                t.needs_grad(ia) || t.needs_grad(ib),
                [ia, ib](Tape& t, int self) {
                  const Matrix& g = t.upstream(self);
                  if (t.needs_grad(ia))
                    t.grad_ref(ia).noalias() += g * t.value(ib);
                  if (t.needs_grad(ib))
                    t.grad_ref(ib).noalias() += g.transpose() * t.value(ia);
                });
}

Var add(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add shape mismatch");
  const int ia = a.id(), ib = b.id();
  return t.push(a.value() + b.value(), t.needs_grad(ia) || t.needs_grad(ib),
                [ia, ib](Tape& t, int self) {
                  const Matrix& g = t.upstream(self);
                  if (t.needs_grad(ia)) t.grad_ref(ia) += g;
                  if (t.needs_grad(ib)) t.grad_ref(ib) += g;
                });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub shape mismatch");
  const int ia = a.id(), ib = b.id();
  return t.push(a.value() - b.value(), t.needs_grad(ia) || t.needs_grad(ib),
                [ia, ib](Tape& t, int self) {
                  const Matrix& g = t.upstream(self);
                  if (t.needs_grad(ia)) t.grad_ref(ia) += g;
                  if (t.needs_grad(ib)) t.grad_ref(ib) -= g;
                });
}

Var add_row(const Var& x, const Var& row) {
  Tape& t = tape_of(x, row);
  require(row.rows() == 1 && row.cols() == x.cols(), "add_row shape mismatch");
  const int ix = x.id(), ir = row.id();
  Matrix out = x.value().rowwise() + row.value().row(0);
  return t.push(std::move(out), t.needs_grad(ix) || t.needs_grad(ir),
                [ix, ir](Tape& t, int self) {
                  const Matrix& g = t.upstream(self);
                  if (t.needs_grad(ix)) t.grad_ref(ix) += g;
                  if (t.needs_grad(ir)) t.grad_ref(ir) += g.colwise().sum();
                });
}

Var scale(const Var& x, double c) {
  Tape& t = tape_of(x);
  const int ix = x.id();
  return t.push(c * x.value(), t.needs_grad(ix), [ix, c](Tape& t, int self) {
    t.grad_ref(ix) += c * t.upstream(self);
  });
}

Var scalar_mul(const Var& s, const Var& x) {
  Tape& t = tape_of(s, x);
  require(s.rows() == 1 && s.cols() == 1, "scalar_mul expects a 1 x 1 scalar");
  const int is = s.id(), ix = x.id();
  return t.push(s.value()(0, 0) * x.value(),
                t.needs_grad(is) || t.needs_grad(ix),
                [is, ix](Tape& t, int self) {
                  const Matrix& g = t.upstream(self);
                  if (t.needs_grad(is))
                    t.grad_ref(is)(0, 0) += (g.array() * t.value(ix).array()).sum();
                  if (t.needs_grad(ix)) t.grad_ref(ix) += t.value(is)(0, 0) * g;
                });
}

Var hadamard(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          "hadamard shape mismatch");
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value().cwiseProduct(b.value());
  return t.push(std::move(out), t.needs_grad(ia) || t.needs_grad(ib),
                [ia, ib](Tape& t, int self) {
                  const Matrix& g = t.upstream(self);
                  if (t.needs_grad(ia))
                    t.grad_ref(ia) += g.cwiseProduct(t.value(ib));
                  if (t.needs_grad(ib))
                    t.grad_ref(ib) += g.cwiseProduct(t.value(ia));
                });
}

Var gelu(const Var& x) {
  Tape& t = tape_of(x);
  const int ix = x.id();
  Matrix out = x.value().unaryExpr(
      [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
  return t.push(std::move(out), t.needs_grad(ix), [ix](Tape& t, int self) {
    const Matrix d = t.value(ix).unaryExpr([](double v) {
      return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) +
             v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
    });
    t.grad_ref(ix) += t.upstream(self).cwiseProduct(d);
  });
}

Var sigmoid(const Var& x) {
  Tape& t = tape_of(x);
  const int ix = x.id();
  Matrix out = x.value().unaryExpr(&stable_sigmoid);
  return t.push(std::move(out), t.needs_grad(ix), [ix](Tape& t, int self) {
    const Matrix& y = t.value(self);
    t.grad_ref(ix) += t.upstream(self).cwiseProduct(
        y.cwiseProduct((1.0 - y.array()).matrix()));
  });
}

Var tile_rows(const Var& x, int times) {
  Tape& t = tape_of(x);
  require(times >= 1, "tile_rows needs at least one copy");
  const int ix = x.id();
  const Eigen::Index r = x.rows();
  Matrix out = x.value().replicate(times, 1);
  return t.push(std::move(out), t.needs_grad(ix),
                [ix, r, times](Tape& t, int self) {
                  const Matrix& g = t.upstream(self);
                  Matrix& gx = t.grad_ref(ix);
                  for (int k = 0; k < times; ++k) gx += g.middleRows(k * r, r);
                });
}

Var concat_cols(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require(a.rows() == b.rows(), "concat_cols row mismatch");
  const int ia = a.id(), ib = b.id();
  const Eigen::Index ca = a.cols(), cb = b.cols();
  Matrix out(a.rows(), ca + cb);
  out << a.value(), b.value();
  return t.push(std::move(out), t.needs_grad(ia) || t.needs_grad(ib),
                [ia, ib, ca, cb](Tape& t, int self) {
                  const Matrix& g = t.upstream(self);
                  if (t.needs_grad(ia)) t.grad_ref(ia) += g.leftCols(ca);
                  if (t.needs_grad(ib)) t.grad_ref(ib) += g.rightCols(cb);
                });
}

Var row_slice(const Var& x, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(x);
  require(start >= 0 && count >= 0 && start + count <= x.rows(),
          "row_slice out of range");
  const int ix = x.id();
  return t.push(x.value().middleRows(start, count), t.needs_grad(ix),
                [ix, start, count](Tape& t, int self) {
                  t.grad_ref(ix).middleRows(start, count) += t.upstream(self);
                });
}

Var stack_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "stack_rows of nothing");
  Tape& t = tape_of(parts.front());
  Eigen::Index rows = 0;
  bool needs = false;
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  for (const Var& p : parts) {
    require(p.tape() == &t, "operands recorded on different tapes");
    require(p.cols() == parts.front().cols(), "stack_rows column mismatch");
    offsets.push_back(rows);
    ids.push_back(p.id());
    rows += p.rows();
    needs = needs || t.needs_grad(p);
  }
  Matrix out(rows, parts.front().cols());
  for (std::size_t k = 0; k < parts.size(); ++k)
    out.middleRows(offsets[k], parts[k].rows()) = parts[k].value();
  return t.push(std::move(out), needs,
                [ids, offsets](Tape& t, int self) {
                  const Matrix& g = t.upstream(self);
                  for (std::size_t k = 0; k < ids.size(); ++k) {
                    if (!t.needs_grad(ids[k])) continue;
                    Matrix& gp = t.grad_ref(ids[k]);
                    gp += g.middleRows(offsets[k], gp.rows());
                  }
                });
}

Var block_matmul(const Var& blocks, const Var& h) {
  Tape& t = tape_of(blocks, h);
  const Eigen::Index n = blocks.cols();
  require(n > 0 && blocks.rows() % n == 0 && blocks.rows() == h.rows(),
          "block_matmul shape mismatch");
  const Eigen::Index count = blocks.rows() / n;
  Matrix out(h.rows(), h.cols());
  for (Eigen::Index k = 0; k < count; ++k)
    out.middleRows(k * n, n).noalias() =
        blocks.value().middleRows(k * n, n) * h.value().middleRows(k * n, n);
  const int ia = blocks.id(), ih = h.id();
  return t.push(std::move(out), t.needs_grad(ia) || t.needs_grad(ih),
                [ia, ih, n, count](Tape& t, int self) {
                  const Matrix& g = t.upstream(self);
                  for (Eigen::Index k = 0; k < count; ++k) {
                    if (t.needs_grad(ih))
                      t.grad_ref(ih).middleRows(k * n, n).noalias() +=
                          t.value(ia).middleRows(k * n, n).transpose() *
                          g.middleRows(k * n, n);
                    if (t.needs_grad(ia))
                      t.grad_ref(ia).middleRows(k * n, n).noalias() +=
                          g.middleRows(k * n, n) *
                          t.value(ih).middleRows(k * n, n).transpose();
                  }
                });
}

Var block_row_mean(const Var& x, Eigen::Index block) {
  Tape& t = tape_of(x);
  require(block > 0 && x.rows() % block == 0, "block_row_mean shape mismatch");
  const Eigen::Index count = x.rows() / block;
  Matrix out(count, x.cols());
  for (Eigen::Index k = 0; k < count; ++k)
    out.row(k) = x.value().middleRows(k * block, block).colwise().mean();
  const int ix = x.id();
  return t.push(std::move(out), t.needs_grad(ix),
                [ix, block, count](Tape& t, int self) {
                  const Matrix& g = t.upstream(self);
                  Matrix& gx = t.grad_ref(ix);
                  for (Eigen::Index k = 0; k < count; ++k)
                    gx.middleRows(k * block, block).rowwise() +=
                        g.row(k) / static_cast<double>(block);
                });
}

Var weighted_block_mean(const Var& h, const Var& weights) {
  Tape& t = tape_of(h, weights);
  const Eigen::Index n = weights.cols();
  const Eigen::Index count = weights.rows();
  require(h.rows() == n * count, "weighted_block_mean shape mismatch");
  Matrix out(count, h.cols());
  for (Eigen::Index k = 0; k < count; ++k)
    out.row(k) = weights.value().row(k) * h.value().middleRows(k * n, n) /
                 static_cast<double>(n);
  const int ih = h.id(), iw = weights.id();
  return t.push(
      std::move(out), t.needs_grad(ih) || t.needs_grad(iw),
      [ih, iw, n, count](Tape& t, int self) {
        const Matrix& g = t.upstream(self);
        const double inv = 1.0 / static_cast<double>(n);
        for (Eigen::Index k = 0; k < count; ++k) {
          if (t.needs_grad(ih))
            t.grad_ref(ih).middleRows(k * n, n).noalias() +=
                inv * t.value(iw).row(k).transpose() * g.row(k);
          if (t.needs_grad(iw))
            t.grad_ref(iw).row(k).noalias() +=
                inv * (t.value(ih).middleRows(k * n, n) * g.row(k).transpose())
                          .transpose();
        }
      });
}

Var softmax_rows(const Var& x) {
  Tape& t = tape_of(x);
  Matrix out = x.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double mx = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  const int ix = x.id();
  return t.push(std::move(out), t.needs_grad(ix), [ix](Tape& t, int self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.upstream(self);
    const Vector dot = g.cwiseProduct(y).rowwise().sum();
    t.grad_ref(ix) += y.cwiseProduct((g.colwise() - dot));
  });
}

Var mean_rows(const Var& x) {
  Tape& t = tape_of(x);
  require(x.rows() > 0, "mean_rows of an empty matrix");
  const int ix = x.id();
  const double n = static_cast<double>(x.rows());
  return t.push(x.value().colwise().mean(), t.needs_grad(ix),
                [ix, n](Tape& t, int self) {
                  t.grad_ref(ix).rowwise() += t.upstream(self).row(0) / n;
                });
}

Var sum(const Var& x) {
  Tape& t = tape_of(x);
  const int ix = x.id();
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return t.push(std::move(out), t.needs_grad(ix), [ix](Tape& t, int self) {
    t.grad_ref(ix).array() += t.upstream(self)(0, 0);
  });
}

Var sum_squares(const Var& x) {
  Tape& t = tape_of(x);
  const int ix = x.id();
  Matrix out(1, 1);
  out(0, 0) = x.value().squaredNorm();
  return t.push(std::move(out), t.needs_grad(ix), [ix](Tape& t, int self) {
    t.grad_ref(ix) += 2.0 * t.upstream(self)(0, 0) * t.value(ix);
  });
}

Var batch_norm_train(const Var& x, const Var& gamma, const Var& beta,
                     double eps, Matrix* batch_mean, Matrix* batch_var) {
  Tape& t = tape_of(x, gamma);
  require(gamma.tape() == beta.tape(), "operands recorded on different tapes");
  const Eigen::Index n = x.rows(), d = x.cols();
  require(n >= 1, "batch_norm on an empty batch");
  require(gamma.rows() == 1 && gamma.cols() == d && beta.rows() == 1 &&
              beta.cols() == d,
          "batch_norm parameter shape mismatch");
  const Matrix mean = x.value().colwise().mean();
  const Matrix centered = x.value().rowwise() - mean.row(0);
  const Matrix var = centered.colwise().squaredNorm() / static_cast<double>(n);
  const Matrix inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix xhat = centered.array().rowwise() * inv_std.row(0).array();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array())
                   .rowwise() +
               beta.value().row(0).array();
  if (batch_mean) *batch_mean = mean;
  if (batch_var) {
    *batch_var = n > 1 ? Matrix(var * (static_cast<double>(n) / (n - 1)))
                       : var;
  }
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  const bool needs =
      t.needs_grad(ix) || t.needs_grad(ig) || t.needs_grad(ib);
  return t.push(
      std::move(out), needs,
      [ix, ig, ib, xhat = std::move(xhat), inv_std](Tape& t, int self) {
        const Matrix& g = t.upstream(self);
        if (t.needs_grad(ig))
          t.grad_ref(ig) += g.cwiseProduct(xhat).colwise().sum();
        if (t.needs_grad(ib)) t.grad_ref(ib) += g.colwise().sum();
        if (t.needs_grad(ix)) {
          const double n = static_cast<double>(g.rows());
          const Matrix dxhat =
              g.array().rowwise() * t.value(ig).row(0).array();
          const Matrix s1 = dxhat.colwise().sum();
          const Matrix s2 = dxhat.cwiseProduct(xhat).colwise().sum();
          Matrix dx = (n * dxhat.array()).matrix();
          dx.rowwise() -= s1.row(0);
          dx -= (xhat.array().rowwise() * s2.row(0).array()).matrix();
          dx = (dx.array().rowwise() * (inv_std.row(0).array() / n)).matrix();
          t.grad_ref(ix) += dx;
        }
      });
}

Var batch_norm_eval(const Var& x, const Var& gamma, const Var& beta,
                    const Matrix& running_mean, const Matrix& running_var,
                    double eps) {
  Tape& t = tape_of(x, gamma);
  const Eigen::Index d = x.cols();
  require(running_mean.size() == d && running_var.size() == d &&
              gamma.cols() == d && beta.cols() == d,
          "batch_norm parameter shape mismatch");
  const Eigen::RowVectorXd inv_std =
      (running_var.reshaped().array() + eps).rsqrt().transpose().matrix();
  Matrix xhat = (x.value().rowwise() - running_mean.reshaped().transpose())
                    .array()
                    .rowwise() *
                inv_std.array();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array())
                   .rowwise() +
               beta.value().row(0).array();
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  const bool needs =
      t.needs_grad(ix) || t.needs_grad(ig) || t.needs_grad(ib);
  return t.push(std::move(out), needs,
                [ix, ig, ib, xhat = std::move(xhat), inv_std](Tape& t,
                                                              int self) {
                  const Matrix& g = t.upstream(self);
                  if (t.needs_grad(ig))
                    t.grad_ref(ig) += g.cwiseProduct(xhat).colwise().sum();
                  if (t.needs_grad(ib)) t.grad_ref(ib) += g.colwise().sum();
                  if (t.needs_grad(ix))
                    t.grad_ref(ix) +=
                        (g.array().rowwise() *
                         (t.value(ig).row(0).array() * inv_std.array()))
                            .matrix();
                });
}

Var bce_with_logits(const Var& logits, const Vector& labels) {
  Tape& t = tape_of(logits);
  require(logits.cols() == 1 && logits.rows() == labels.size(),
          "bce length mismatch");
  require(labels.size() >= 1, "bce of an empty batch");
  const Matrix& o = logits.value();
  double total = 0.0;
  for (Eigen::Index i = 0; i < o.rows(); ++i) {
    const double z = o(i, 0);
    total += std::max(z, 0.0) - z * labels(i) + std::log1p(std::exp(-std::abs(z)));
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(o.rows());
  const int il = logits.id();
  return t.push(std::move(out), t.needs_grad(il),
                [il, labels](Tape& t, int self) {
                  const Matrix& o = t.value(il);
                  const double g = t.upstream(self)(0, 0) /
                                   static_cast<double>(o.rows());
                  Matrix& go = t.grad_ref(il);
                  for (Eigen::Index i = 0; i < o.rows(); ++i)
                    go(i, 0) += g * (stable_sigmoid(o(i, 0)) - labels(i));
                });
}

}  // namespace sfda::ad
