// Copyright 2026 The CaDRe Toolkit Authors
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

#include "cadre/autodiff/tape.h"

#include <utility>

#include "cadre/core/error.h"
#include "cadre/simd/kernels.h"

namespace cadre::ad {

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::Constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, false, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::Variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), true, false, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::Record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (const Var& v : inputs) needs = needs || requires_grad(v.id());
  nodes_.push_back(Node{std::move(value), Matrix(), needs, false, needs ? std::move(backward) : nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::Record(Matrix value, const std::vector<Var>& inputs, BackwardFn backward) {
  bool needs = false;
  for (const Var& v : inputs) needs = needs || requires_grad(v.id());
  nodes_.push_back(Node{std::move(value), Matrix(), needs, false, needs ? std::move(backward) : nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Tape::GradBuffer(int id) {
  Node& node = nodes_[static_cast<std::size_t>(id)];
  if (!node.has_grad) {
    node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
    node.has_grad = true;
  }
  return node.grad;
}

void Tape::Accumulate(int id, const Matrix& g) {
  Node& node = nodes_[static_cast<std::size_t>(id)];
  if (!node.requires_grad) return;
  if (!node.has_grad) {
    node.grad = g;
    node.has_grad = true;
  } else {
    node.grad += g;
  }
}

void Tape::Backward(Var output) {
  Require(output.tape() == this, ErrorKind::kInvalidInput, "Backward on a foreign tape");
  Require(output.rows() == 1 && output.cols() == 1, ErrorKind::kShapeMismatch,
          "Backward needs a 1x1 output");
  for (Node& node : nodes_) {
    node.has_grad = false;
    node.grad.resize(0, 0);
  }
  Node& out = nodes_[static_cast<std::size_t>(output.id())];
  if (!out.requires_grad) return;
  out.grad = Matrix::Ones(1, 1);
  out.has_grad = true;
  for (int id = output.id(); id >= 0; --id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.has_grad && node.backward) node.backward(*this, node.grad);
  }
}

Matrix Tape::Grad(Var v) const {
  const Node& node = nodes_[static_cast<std::size_t>(v.id())];
  if (!node.has_grad) return Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

void GemmInto(bool trans_a, bool trans_b, const Matrix& a, const Matrix& b, double beta, Matrix& c) {
  const Index m = trans_a ? a.cols() : a.rows();
  const Index k = trans_a ? a.rows() : a.cols();
  const Index kb = trans_b ? b.cols() : b.rows();
  const Index n = trans_b ? b.rows() : b.cols();
  Require(k == kb, ErrorKind::kShapeMismatch, "matrix product inner dimensions differ");
  if (beta == 0.0) {
    c.resize(m, n);
  } else {
    Require(c.rows() == m && c.cols() == n, ErrorKind::kShapeMismatch, "accumulator shape");
  }
  simd::Gemm(trans_a, trans_b, static_cast<std::size_t>(m), static_cast<std::size_t>(n),
             static_cast<std::size_t>(k), a.data(), static_cast<std::size_t>(a.cols()), b.data(),
             static_cast<std::size_t>(b.cols()), beta, c.data(), static_cast<std::size_t>(c.cols()));
}

namespace {

void RequireSameShape(Var a, Var b, const char* op) {
  Require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::kShapeMismatch,
          std::string(op) + ": operand shapes differ");
}

}  // namespace

Var MatMul(Var a, Var b) {
  Matrix c;
  GemmInto(false, false, a.value(), b.value(), 0.0, c);
  const int ia = a.id(), ib = b.id();
  return a.tape()->Record(std::move(c), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) GemmInto(false, true, g, t.value(ib), 1.0, t.GradBuffer(ia));
    if (t.requires_grad(ib)) GemmInto(true, false, t.value(ia), g, 1.0, t.GradBuffer(ib));
  });
}

Var MatMulNT(Var a, Var b) {
  Matrix c;
  GemmInto(false, true, a.value(), b.value(), 0.0, c);
  const int ia = a.id(), ib = b.id();
  return a.tape()->Record(std::move(c), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) GemmInto(false, false, g, t.value(ib), 1.0, t.GradBuffer(ia));
    if (t.requires_grad(ib)) GemmInto(true, false, g, t.value(ia), 1.0, t.GradBuffer(ib));
  });
}

Var Transpose(Var a) {
  const int ia = a.id();
  return a.tape()->Record(a.value().transpose(), {a}, [ia](Tape& t, const Matrix& g) {
    t.Accumulate(ia, g.transpose());
  });
}

Var Inverse(Var a) {
  Require(a.rows() == a.cols(), ErrorKind::kNonSquare, "Inverse of a non-square matrix");
  Matrix inv = a.value().inverse();
  const int ia = a.id();
  Matrix inv_copy = inv;
  return a.tape()->Record(std::move(inv), {a}, [ia, inv_copy](Tape& t, const Matrix& g) {
    // d(A^-1) = -A^-1 dA A^-1
    t.Accumulate(ia, -(inv_copy.transpose() * g * inv_copy.transpose()));
  });
}

Var MatrixPower(Var a, int power) {
  Require(a.rows() == a.cols(), ErrorKind::kNonSquare, "MatrixPower of a non-square matrix");
  Require(power >= 0, ErrorKind::kInvalidInput, "MatrixPower needs power >= 0");
  if (power == 0) return a.tape()->Constant(Matrix::Identity(a.rows(), a.cols()));
  // Binary exponentiation: squarings of `base`, multiplied into `result` per set bit.
  Var result;
  Var base = a;
  int p = power;
  while (p > 0) {
    if (p & 1) result = result.valid() ? MatMul(result, base) : base;
    p >>= 1;
    if (p > 0) base = MatMul(base, base);
  }
  return result;
}

Var Trace(Var a) {
  Require(a.rows() == a.cols(), ErrorKind::kNonSquare, "Trace of a non-square matrix");
  Matrix v(1, 1);
  v(0, 0) = a.value().trace();
  const int ia = a.id();
  const Index n = a.rows();
  return a.tape()->Record(std::move(v), {a}, [ia, n](Tape& t, const Matrix& g) {
    Matrix& buf = t.GradBuffer(ia);
    for (Index i = 0; i < n; ++i) buf(i, i) += g(0, 0);
  });
}

Var Add(Var a, Var b) {
  RequireSameShape(a, b, "Add");
  const int ia = a.id(), ib = b.id();
  return a.tape()->Record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.Accumulate(ia, g);
    t.Accumulate(ib, g);
  });
}

Var Sub(Var a, Var b) {
  RequireSameShape(a, b, "Sub");
  const int ia = a.id(), ib = b.id();
  return a.tape()->Record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.Accumulate(ia, g);
    t.Accumulate(ib, -g);
  });
}

Var Mul(Var a, Var b) {
  RequireSameShape(a, b, "Mul");
  const int ia = a.id(), ib = b.id();
  return a.tape()->Record(a.value().cwiseProduct(b.value()), {a, b},
                          [ia, ib](Tape& t, const Matrix& g) {
                            if (t.requires_grad(ia)) t.GradBuffer(ia) += g.cwiseProduct(t.value(ib));
                            if (t.requires_grad(ib)) t.GradBuffer(ib) += g.cwiseProduct(t.value(ia));
                          });
}

Var Scale(Var a, double c) {
  const int ia = a.id();
  return a.tape()->Record(a.value() * c, {a}, [ia, c](Tape& t, const Matrix& g) {
    t.GradBuffer(ia) += g * c;
  });
}

Var AddScalar(Var a, double c) {
  const int ia = a.id();
  return a.tape()->Record((a.value().array() + c).matrix(), {a},
                          [ia](Tape& t, const Matrix& g) { t.Accumulate(ia, g); });
}

Var LeakyRelu(Var a, double slope) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  simd::Kernels().leaky_relu(x.data(), y.data(), static_cast<std::size_t>(x.size()), slope);
  const int ia = a.id();
  return a.tape()->Record(std::move(y), {a}, [ia, slope](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(ia);
    Matrix mask(x.rows(), x.cols());
    simd::Kernels().leaky_relu_slope(x.data(), mask.data(), static_cast<std::size_t>(x.size()), slope);
    t.GradBuffer(ia) += g.cwiseProduct(mask);
  });
}

Var LeakyReluSlope(Var a, double slope) {
  const Matrix& x = a.value();
  Matrix mask(x.rows(), x.cols());
  simd::Kernels().leaky_relu_slope(x.data(), mask.data(), static_cast<std::size_t>(x.size()), slope);
  return a.tape()->Constant(std::move(mask));
}

Var Tanh(Var a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  simd::Kernels().tanh(x.data(), y.data(), static_cast<std::size_t>(x.size()));
  const int ia = a.id();
  Matrix deriv = (1.0 - y.array().square()).matrix();
  return a.tape()->Record(std::move(y), {a}, [ia, deriv](Tape& t, const Matrix& g) {
    t.GradBuffer(ia) += g.cwiseProduct(deriv);
  });
}

Var Exp(Var a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  simd::Kernels().exp(x.data(), y.data(), static_cast<std::size_t>(x.size()));
  const int ia = a.id();
  Matrix y_copy = y;
  return a.tape()->Record(std::move(y), {a}, [ia, y_copy](Tape& t, const Matrix& g) {
    t.GradBuffer(ia) += g.cwiseProduct(y_copy);
  });
}

Var Log(Var a) {
  const int ia = a.id();
  return a.tape()->Record(a.value().array().log().matrix(), {a}, [ia](Tape& t, const Matrix& g) {
    t.GradBuffer(ia) += (g.array() / t.value(ia).array()).matrix();
  });
}

Var Abs(Var a) {
  const int ia = a.id();
  return a.tape()->Record(a.value().cwiseAbs(), {a}, [ia](Tape& t, const Matrix& g) {
    t.GradBuffer(ia) += g.cwiseProduct(t.value(ia).array().sign().matrix());
  });
}

Var Square(Var a) {
  const int ia = a.id();
  return a.tape()->Record(a.value().array().square().matrix(), {a}, [ia](Tape& t, const Matrix& g) {
    t.GradBuffer(ia) += 2.0 * g.cwiseProduct(t.value(ia));
  });
}

Var Clamp(Var a, double lo, double hi) {
  const int ia = a.id();
  return a.tape()->Record(a.value().cwiseMax(lo).cwiseMin(hi), {a},
                          [ia, lo, hi](Tape& t, const Matrix& g) {
                            const auto& x = t.value(ia).array();
                            t.GradBuffer(ia) += (g.array() * ((x > lo) && (x < hi)).cast<double>()).matrix();
                          });
}

Var AddRow(Var a, Var row) {
  Require(row.rows() == 1 && row.cols() == a.cols(), ErrorKind::kShapeMismatch,
          "AddRow: row must be 1 x cols");
  Matrix v = a.value();
  v.rowwise() += row.value().row(0);
  const int ia = a.id(), ir = row.id();
  return a.tape()->Record(std::move(v), {a, row}, [ia, ir](Tape& t, const Matrix& g) {
    t.Accumulate(ia, g);
    if (t.requires_grad(ir)) t.GradBuffer(ir) += g.colwise().sum();
  });
}

Var MulRow(Var a, Var row) {
  Require(row.rows() == 1 && row.cols() == a.cols(), ErrorKind::kShapeMismatch,
          "MulRow: row must be 1 x cols");
  Matrix v = a.value();
  v.array().rowwise() *= row.value().row(0).array();
  const int ia = a.id(), ir = row.id();
  return a.tape()->Record(std::move(v), {a, row}, [ia, ir](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) {
      Matrix ga = g;
      ga.array().rowwise() *= t.value(ir).row(0).array();
      t.GradBuffer(ia) += ga;
    }
    if (t.requires_grad(ir)) t.GradBuffer(ir) += g.cwiseProduct(t.value(ia)).colwise().sum();
  });
}

Var Sum(Var a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  const int ia = a.id();
  return a.tape()->Record(std::move(v), {a}, [ia](Tape& t, const Matrix& g) {
    t.GradBuffer(ia).array() += g(0, 0);
  });
}

Var Mean(Var a) {
  const auto n = static_cast<double>(a.value().size());
  return Scale(Sum(a), 1.0 / n);
}

Var RowSums(Var a) {
  Matrix v = a.value().rowwise().sum();
  const int ia = a.id();
  return a.tape()->Record(std::move(v), {a}, [ia](Tape& t, const Matrix& g) {
    Matrix& buf = t.GradBuffer(ia);
    buf.colwise() += g.col(0);
  });
}

Var ColSums(Var a) {
  Matrix v = a.value().colwise().sum();
  const int ia = a.id();
  return a.tape()->Record(std::move(v), {a}, [ia](Tape& t, const Matrix& g) {
    Matrix& buf = t.GradBuffer(ia);
    buf.rowwise() += g.row(0);
  });
}

Var RowMeans(Var a) { return Scale(RowSums(a), 1.0 / static_cast<double>(a.cols())); }

Var SliceCols(Var a, Index start, Index count) {
  Require(start >= 0 && count >= 0 && start + count <= a.cols(), ErrorKind::kShapeMismatch,
          "SliceCols out of range");
  const int ia = a.id();
  return a.tape()->Record(a.value().middleCols(start, count), {a},
                          [ia, start, count](Tape& t, const Matrix& g) {
                            t.GradBuffer(ia).middleCols(start, count) += g;
                          });
}

Var SliceRows(Var a, Index start, Index count) {
  Require(start >= 0 && count >= 0 && start + count <= a.rows(), ErrorKind::kShapeMismatch,
          "SliceRows out of range");
  const int ia = a.id();
  return a.tape()->Record(a.value().middleRows(start, count), {a},
                          [ia, start, count](Tape& t, const Matrix& g) {
                            t.GradBuffer(ia).middleRows(start, count) += g;
                          });
}

Var GatherRows(Var a, const std::vector<Index>& rows) {
  Matrix v(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    Require(rows[r] >= 0 && rows[r] < a.rows(), ErrorKind::kShapeMismatch, "GatherRows index");
    v.row(static_cast<Index>(r)) = a.value().row(rows[r]);
  }
  const int ia = a.id();
  return a.tape()->Record(std::move(v), {a}, [ia, rows](Tape& t, const Matrix& g) {
    Matrix& buf = t.GradBuffer(ia);
    for (std::size_t r = 0; r < rows.size(); ++r) buf.row(rows[r]) += g.row(static_cast<Index>(r));
  });
}

Var ConcatCols(const std::vector<Var>& parts) {
  Require(!parts.empty(), ErrorKind::kInvalidInput, "ConcatCols of nothing");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const Var& p : parts) {
    Require(p.rows() == rows, ErrorKind::kShapeMismatch, "ConcatCols row counts differ");
    cols += p.cols();
  }
  Matrix v(rows, cols);
  std::vector<std::pair<int, Index>> layout;
  Index offset = 0;
  for (const Var& p : parts) {
    v.middleCols(offset, p.cols()) = p.value();
    layout.emplace_back(p.id(), offset);
    offset += p.cols();
  }
  return parts[0].tape()->Record(std::move(v), parts, [layout](Tape& t, const Matrix& g) {
    for (const auto& [id, off] : layout) {
      if (t.requires_grad(id)) t.GradBuffer(id) += g.middleCols(off, t.value(id).cols());
    }
  });
}

Var ConcatRows(const std::vector<Var>& parts) {
  Require(!parts.empty(), ErrorKind::kInvalidInput, "ConcatRows of nothing");
  const Index cols = parts[0].cols();
  Index rows = 0;
  for (const Var& p : parts) {
    Require(p.cols() == cols, ErrorKind::kShapeMismatch, "ConcatRows column counts differ");
    rows += p.rows();
  }
  Matrix v(rows, cols);
  std::vector<std::pair<int, Index>> layout;
  Index offset = 0;
  for (const Var& p : parts) {
    v.middleRows(offset, p.rows()) = p.value();
    layout.emplace_back(p.id(), offset);
    offset += p.rows();
  }
  return parts[0].tape()->Record(std::move(v), parts, [layout](Tape& t, const Matrix& g) {
    for (const auto& [id, off] : layout) {
      if (t.requires_grad(id)) t.GradBuffer(id) += g.middleRows(off, t.value(id).rows());
    }
  });
}

Var TileRows(Var a, Index copies) {
  const Index r = a.rows();
  Matrix v(r * copies, a.cols());
  for (Index c = 0; c < copies; ++c) v.middleRows(c * r, r) = a.value();
  const int ia = a.id();
  return a.tape()->Record(std::move(v), {a}, [ia, r, copies](Tape& t, const Matrix& g) {
    Matrix& buf = t.GradBuffer(ia);
    for (Index c = 0; c < copies; ++c) buf += g.middleRows(c * r, r);
  });
}

Var Reshape(Var a, Index rows, Index cols) {
  Require(rows * cols == a.value().size(), ErrorKind::kShapeMismatch, "Reshape size mismatch");
  Matrix v = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  const int ia = a.id();
  const Index r0 = a.rows(), c0 = a.cols();
  return a.tape()->Record(std::move(v), {a}, [ia, r0, c0](Tape& t, const Matrix& g) {
    t.GradBuffer(ia) += Eigen::Map<const Matrix>(g.data(), r0, c0);
  });
}

}  // namespace cadre::ad
