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
#include "cadre/core/error.h"
#include "doctest.h"
#include "test_util.h"

using namespace cadre;
using ad::Tape;
using ad::Var;

namespace {

using UnaryOp = std::function<Var(Tape&, Var)>;

// Checks d/dx sum(op(x) o R) against central differences.
double GradCheck(const UnaryOp& op, const RowMatrix& x0, std::uint64_t seed) {
  RowMatrix weights;
  auto loss = [&](const RowMatrix& x, RowMatrix* grad) {
    Tape tape;
    Var x_var = tape.Variable(x);
    Var y = op(tape, x_var);
    if (weights.size() == 0) weights = testing::RandomMatrix(y.rows(), y.cols(), seed);
    Var l = ad::Sum(ad::Mul(y, tape.Constant(weights)));
    if (grad != nullptr) {
      tape.Backward(l);
      *grad = tape.Grad(x_var);
    }
    return l.scalar();
  };
  RowMatrix analytic;
  loss(x0, &analytic);
  RowMatrix numeric(x0.rows(), x0.cols());
  const double h = 1e-6;
  for (Index i = 0; i < x0.size(); ++i) {
    RowMatrix xp = x0, xm = x0;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    numeric.data()[i] = (loss(xp, nullptr) - loss(xm, nullptr)) / (2 * h);
  }
  return testing::RelErr(analytic, numeric);
}

}  // namespace

TEST_CASE("elementwise and reduction ops differentiate correctly") {
  const RowMatrix x = testing::RandomMatrix(3, 4, 1);
  const RowMatrix pos = x.cwiseAbs().array() + 0.5;
  const RowMatrix other = testing::RandomMatrix(3, 4, 2);
  const RowMatrix row = testing::RandomMatrix(1, 4, 3);
  struct Case {
    const char* name;
    UnaryOp op;
    RowMatrix at;
  };
  const std::vector<Case> cases = {
      {"add", [&](Tape& t, Var a) { return ad::Add(a, t.Constant(other)); }, x},
      {"sub", [&](Tape& t, Var a) { return ad::Sub(t.Constant(other), a); }, x},
      {"mul", [&](Tape& t, Var a) { return ad::Mul(a, ad::Tanh(a)); }, x},
      {"scale", [](Tape&, Var a) { return ad::AddScalar(ad::Scale(a, -2.5), 1.0); }, x},
      {"lrelu", [](Tape&, Var a) { return ad::LeakyRelu(a, 0.2); }, x},
      {"tanh", [](Tape&, Var a) { return ad::Tanh(a); }, x},
      {"exp", [](Tape&, Var a) { return ad::Exp(a); }, x},
      {"log", [](Tape&, Var a) { return ad::Log(a); }, pos},
      {"abs", [](Tape&, Var a) { return ad::Abs(a); }, x},
      {"square", [](Tape&, Var a) { return ad::Square(a); }, x},
      {"clamp", [](Tape&, Var a) { return ad::Clamp(a, -0.5, 0.5); }, x},
      {"addrow", [&](Tape& t, Var a) { return ad::AddRow(t.Constant(other), ad::SliceRows(a, 0, 1)); }, x},
      {"mulrow", [&](Tape& t, Var a) { return ad::MulRow(a, t.Constant(row)); }, x},
      {"mulrow_row", [&](Tape& t, Var a) { return ad::MulRow(t.Constant(other), ad::SliceRows(a, 1, 1)); }, x},
      {"sum", [](Tape&, Var a) { return ad::Sum(ad::Square(a)); }, x},
      {"mean", [](Tape&, Var a) { return ad::Mean(ad::Square(a)); }, x},
      {"rowsums", [](Tape&, Var a) { return ad::RowSums(ad::Square(a)); }, x},
      {"colsums", [](Tape&, Var a) { return ad::ColSums(ad::Square(a)); }, x},
      {"rowmeans", [](Tape&, Var a) { return ad::RowMeans(ad::Square(a)); }, x},
      {"slicecols", [](Tape&, Var a) { return ad::SliceCols(a, 1, 2); }, x},
      {"gather", [](Tape&, Var a) { return ad::GatherRows(a, {2, 0, 2, 1}); }, x},
      {"concat_cols", [](Tape&, Var a) { return ad::ConcatCols({a, ad::Square(a)}); }, x},
      {"concat_rows", [](Tape&, Var a) { return ad::ConcatRows({ad::Tanh(a), a}); }, x},
      {"tile", [](Tape&, Var a) { return ad::TileRows(a, 3); }, x},
      {"reshape", [](Tape&, Var a) { return ad::Reshape(ad::Square(a), 6, 2); }, x},
      {"transpose", [](Tape&, Var a) { return ad::Transpose(ad::Tanh(a)); }, x},
  };
  std::uint64_t seed = 10;
  for (const Case& c : cases) CHECK_MESSAGE(GradCheck(c.op, c.at, ++seed) < 1e-6, c.name);
}

TEST_CASE("matrix ops differentiate correctly") {
  const RowMatrix sq = testing::RandomMatrix(4, 4, 4) + 3.0 * RowMatrix::Identity(4, 4);
  const RowMatrix b = testing::RandomMatrix(4, 3, 5);
  const RowMatrix c = testing::RandomMatrix(2, 4, 6);
  CHECK(GradCheck([&](Tape& t, Var a) { return ad::MatMul(a, t.Constant(b)); }, sq, 1) < 1e-6);
  CHECK(GradCheck([&](Tape& t, Var a) { return ad::MatMul(t.Constant(c), a); }, sq, 2) < 1e-6);
  CHECK(GradCheck([&](Tape& t, Var a) { return ad::MatMulNT(t.Constant(c), a); }, sq, 3) < 1e-6);
  CHECK(GradCheck([&](Tape& t, Var a) { return ad::MatMulNT(a, t.Constant(c)); }, sq, 4) < 1e-6);
  CHECK(GradCheck([](Tape&, Var a) { return ad::Inverse(a); }, sq, 5) < 1e-6);
  CHECK(GradCheck([](Tape&, Var a) { return ad::Trace(ad::MatMul(a, a)); }, sq, 6) < 1e-6);
  for (int p : {0, 1, 2, 3, 4, 5, 7, 8}) {
    CHECK_MESSAGE(GradCheck([p](Tape&, Var a) { return ad::MatrixPower(ad::Scale(a, 0.3), p); }, sq, 7 + p) < 1e-6,
                  "power ", p);
  }
}

TEST_CASE("forward values are exact") {
  Tape t;
  RowMatrix m(2, 2);
  m << 1, 2, 3, 4;
  Var a = t.Constant(m);
  CHECK(ad::Trace(a).scalar() == 5.0);
  CHECK(ad::Sum(a).scalar() == 10.0);
  CHECK(ad::MatrixPower(a, 3).value() == m * m * m);
  CHECK(ad::MatrixPower(a, 0).value() == RowMatrix::Identity(2, 2));
  CHECK(testing::MaxAbsDiff(ad::Inverse(a).value(), m.inverse()) < 1e-15);
  CHECK(ad::LeakyReluSlope(ad::Scale(a, -1.0), 0.2).value() == RowMatrix::Constant(2, 2, 0.2));
  CHECK(ad::Clamp(ad::Scale(a, 10.0), -8, 8).value()(1, 1) == 8.0);
}

TEST_CASE("gradients accumulate through shared subexpressions") {
  Tape t;
  Var x = t.Variable(RowMatrix::Constant(1, 1, 3.0));
  Var y = ad::Mul(x, x);       // x^2
  Var z = ad::Add(y, ad::Mul(y, x));  // x^2 + x^3
  t.Backward(ad::Sum(z));
  CHECK(t.Grad(x)(0, 0) == doctest::Approx(2 * 3.0 + 3 * 9.0));
  Var c = t.Constant(RowMatrix::Constant(1, 1, 1.0));
  CHECK(t.Grad(c)(0, 0) == 0.0);
}

TEST_CASE("backward can run repeatedly on one tape") {
  Tape t;
  Var x = t.Variable(RowMatrix::Constant(1, 1, 2.0));
  Var y = ad::Sum(ad::Square(x));
  t.Backward(y);
  t.Backward(y);
  CHECK(t.Grad(x)(0, 0) == doctest::Approx(4.0));
}

TEST_CASE("gemm helper matches Eigen") {
  const RowMatrix a = testing::RandomMatrix(5, 3, 1), b = testing::RandomMatrix(5, 4, 2);
  RowMatrix c;
  ad::GemmInto(true, false, a, b, 0.0, c);
  CHECK(testing::MaxAbsDiff(c, a.transpose() * b) < 1e-13);
  RowMatrix acc = RowMatrix::Ones(3, 4);
  ad::GemmInto(true, false, a, b, 1.0, acc);
  CHECK(testing::MaxAbsDiff(acc, a.transpose() * b + RowMatrix::Ones(3, 4)) < 1e-13);
}
