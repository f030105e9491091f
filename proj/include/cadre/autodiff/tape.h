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

#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <vector>

#include "cadre/core/types.h"

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// Every op records its value and a closure that pushes the output gradient
// back to its inputs. Higher-order quantities (Jacobian penalties, flow
// log-determinants) are built by expressing forward-mode tangents with these
// same ops, so one reverse sweep differentiates through them.
namespace cadre::ad {

using Matrix = RowMatrix;

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var Constant(Matrix value);
  Var Variable(Matrix value);
  /// Records an op. The closure is dropped when no input requires a gradient.
  Var Record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var Record(Matrix value, const std::vector<Var>& inputs, BackwardFn backward);

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  /// Zero-initialized gradient buffer of `id`, allocated on first use.
  Matrix& GradBuffer(int id);
  void Accumulate(int id, const Matrix& g);

  /// Reverse sweep from a 1x1 output.
  void Backward(Var output);

  /// Gradient reached during the last sweep, or zeros of the value's shape.
  Matrix Grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;
};

// Matrix products. MatMulNT(a, b) = a * b^T, the natural layout for dense
// layers whose weights are stored out x in.
Var MatMul(Var a, Var b);
Var MatMulNT(Var a, Var b);
Var Transpose(Var a);
Var Inverse(Var a);
Var MatrixPower(Var a, int power);
Var Trace(Var a);

// Elementwise.
Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);
Var Scale(Var a, double c);
Var AddScalar(Var a, double c);
Var LeakyRelu(Var a, double slope);
Var Tanh(Var a);
Var Exp(Var a);
Var Log(Var a);
Var Abs(Var a);
Var Square(Var a);
Var Clamp(Var a, double lo, double hi);

/// Constant 1-or-slope mask of leaky ReLU at `a`; carries no gradient.
Var LeakyReluSlope(Var a, double slope);

// Broadcasting against a 1 x n row.
Var AddRow(Var a, Var row);
Var MulRow(Var a, Var row);

// Reductions.
Var Sum(Var a);
Var Mean(Var a);
Var RowSums(Var a);  // m x 1
Var ColSums(Var a);  // 1 x n
Var RowMeans(Var a);

// Shape.
Var SliceCols(Var a, Index start, Index count);
Var SliceRows(Var a, Index start, Index count);
Var GatherRows(Var a, const std::vector<Index>& rows);
Var ConcatCols(const std::vector<Var>& parts);
Var ConcatRows(const std::vector<Var>& parts);
Var TileRows(Var a, Index copies);
Var Reshape(Var a, Index rows, Index cols);

inline Var operator+(Var a, Var b) { return Add(a, b); }
inline Var operator-(Var a, Var b) { return Sub(a, b); }

/// C = op(A) op(B) + beta C through the dispatched SIMD kernel.
void GemmInto(bool trans_a, bool trans_b, const Matrix& a, const Matrix& b, double beta, Matrix& c);

}  // namespace cadre::ad
