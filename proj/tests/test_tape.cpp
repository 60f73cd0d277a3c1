#include <catch2/catch_amalgamated.hpp>

#include "ctpp/tape.hpp"
#include "support/testutil.hpp"

using ctpp::ad::Mat;
using ctpp::ad::Tape;
using ctpp::ad::Var;
namespace ad = ctpp::ad;
namespace tt = ctpp::test;

namespace {

// Checks d(sum of elements of op(x, fixed))/dx against finite differences.
void check_unary(const std::function<Var(Tape&, Var)>& op, const Mat& x,
                 double tol = 1e-7) {
  Tape tape;
  Var in = tape.leaf(x);
  Var out = ad::sum_all(op(tape, in));
  tape.backward(out);
  Mat analytic = tape.grad(in);

  Mat numeric = tt::finite_diff(
      [&](const Mat& xx) {
        Tape t2;
        Var v = t2.leaf(xx);
        return t2.scalar(ad::sum_all(op(t2, v)));
      },
      x);
  REQUIRE(tt::max_rel_error(analytic, numeric) < tol);
}

void check_binary(const std::function<Var(Tape&, Var, Var)>& op, const Mat& x,
                  const Mat& y, double tol = 1e-7) {
  Tape tape;
  Var a = tape.leaf(x);
  Var b = tape.leaf(y);
  Var out = ad::sum_all(op(tape, a, b));
  tape.backward(out);
  Mat ga = tape.grad(a);
  Mat gb = tape.grad(b);

  Mat na = tt::finite_diff(
      [&](const Mat& xx) {
        Tape t2;
        Var va = t2.leaf(xx);
        Var vb = t2.leaf(y);
        return t2.scalar(ad::sum_all(op(t2, va, vb)));
      },
      x);
  Mat nb = tt::finite_diff(
      [&](const Mat& yy) {
        Tape t2;
        Var va = t2.leaf(x);
        Var vb = t2.leaf(yy);
        return t2.scalar(ad::sum_all(op(t2, va, vb)));
      },
      y);
  REQUIRE(tt::max_rel_error(ga, na) < tol);
  REQUIRE(tt::max_rel_error(gb, nb) < tol);
}

}  // namespace

TEST_CASE("elementwise op gradients match finite differences") {
  std::mt19937_64 rng(7);
  Mat x = tt::random_mat(rng, 3, 4);
  Mat y = tt::random_mat(rng, 3, 4);

  check_binary([](Tape&, Var a, Var b) { return ad::add(a, b); }, x, y);
  check_binary([](Tape&, Var a, Var b) { return ad::sub(a, b); }, x, y);
  check_binary([](Tape&, Var a, Var b) { return ad::mul(a, b); }, x, y);
  Mat ypos = y.array().abs() + 0.5;
  check_binary([](Tape&, Var a, Var b) { return ad::div(a, b); }, x, ypos);
  check_unary([](Tape&, Var a) { return ad::scale(a, -2.5); }, x);
  check_unary([](Tape&, Var a) { return ad::vtanh(a); }, x);
  check_unary([](Tape&, Var a) { return ad::vexp(a); }, x);
  check_unary([](Tape&, Var a) { return ad::softplus(a); }, x);
  Mat xpos = x.array().abs() + 0.3;
  check_unary([](Tape&, Var a) { return ad::vlog(a); }, xpos);
  check_unary([](Tape&, Var a) { return ad::vsqrt(a); }, xpos);
}

TEST_CASE("matmul/transpose/dot gradients") {
  std::mt19937_64 rng(11);
  Mat a = tt::random_mat(rng, 2, 5);
  Mat b = tt::random_mat(rng, 5, 3);
  check_binary([](Tape&, Var x, Var y) { return ad::matmul(x, y); }, a, b);
  check_unary([](Tape&, Var x) { return ad::transpose(x); }, a);
  Mat c = tt::random_mat(rng, 2, 5);
  check_binary([](Tape&, Var x, Var y) { return ad::dot(x, y); }, a, c);
}

TEST_CASE("structural op gradients") {
  std::mt19937_64 rng(13);
  Mat a = tt::random_mat(rng, 3, 4);
  Mat b = tt::random_mat(rng, 2, 4);
  check_binary(
      [](Tape&, Var x, Var y) {
        return ad::concat_rows({x, y});
      },
      a, b);
  Mat c = tt::random_mat(rng, 3, 2);
  check_binary(
      [](Tape&, Var x, Var y) {
        return ad::concat_cols({x, y});
      },
      a, c);
  // Weight slices so sum-reduction does not hide placement errors.
  check_unary(
      [](Tape& t, Var x) {
        Var s = ad::slice_rows(x, 1, 2);
        Mat w(2, 4);
        w << 1, 2, 3, 4, 5, 6, 7, 8;
        return ad::mul(s, t.constant(w));
      },
      a);
  check_unary(
      [](Tape& t, Var x) {
        Var s = ad::slice_cols(x, 1, 2);
        Mat w(3, 2);
        w << 1, 2, 3, 4, 5, 6;
        return ad::mul(s, t.constant(w));
      },
      a);
}

TEST_CASE("broadcast op gradients") {
  std::mt19937_64 rng(17);
  Mat a = tt::random_mat(rng, 4, 3);
  Mat row = tt::random_mat(rng, 1, 3);
  check_binary([](Tape&, Var x, Var r) { return ad::add_row_broadcast(x, r); },
               a, row);
  check_binary([](Tape&, Var x, Var r) { return ad::mul_row_broadcast(x, r); },
               a, row);
}

TEST_CASE("softmax rows: probabilities and gradient") {
  std::mt19937_64 rng(19);
  Mat a = tt::random_mat(rng, 5, 6, 2.0);
  Tape tape;
  Var out = ad::softmax_rows(tape.leaf(a));
  const Mat& y = tape.value(out);
  for (int r = 0; r < y.rows(); ++r) {
    REQUIRE(y.row(r).minCoeff() >= 0.0);
    REQUIRE(std::abs(y.row(r).sum() - 1.0) < 1e-6);
  }
  // Weighted sum downstream so the Jacobian is exercised off-diagonal.
  Mat w = tt::random_mat(rng, 5, 6);
  check_unary(
      [&w](Tape& t, Var x) {
        return ad::mul(ad::softmax_rows(x), t.constant(w));
      },
      a);
}

TEST_CASE("layer norm rows: statistics and gradient") {
  std::mt19937_64 rng(23);
  Mat a = tt::random_mat(rng, 4, 8, 3.0);
  Tape tape;
  Var out = ad::layer_norm_rows(tape.leaf(a));
  const Mat& y = tape.value(out);
  for (int r = 0; r < y.rows(); ++r) {
    REQUIRE(std::abs(y.row(r).mean()) < 1e-12);
    double var = y.row(r).squaredNorm() / y.cols();
    REQUIRE(std::abs(var - 1.0) < 1e-4);
  }
  Mat w = tt::random_mat(rng, 4, 8);
  check_unary(
      [&w](Tape& t, Var x) {
        return ad::mul(ad::layer_norm_rows(x), t.constant(w));
      },
      a, 1e-6);
}

TEST_CASE("fan-out accumulates gradients from all uses") {
  Mat x(1, 2);
  x << 0.5, -1.25;
  Tape tape;
  Var v = tape.leaf(x);
  Var out = ad::sum_all(ad::add(ad::mul(v, v), ad::scale(v, 3.0)));
  tape.backward(out);
  Mat expected = 2.0 * x + Mat::Constant(1, 2, 3.0);
  REQUIRE((tape.grad(v) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("constants carry no gradient and skip backward work") {
  Tape tape;
  Var c = tape.constant(Mat::Ones(2, 2));
  Var l = tape.leaf(Mat::Ones(2, 2));
  Var out = ad::sum_all(ad::mul(c, l));
  REQUIRE(!tape.requires_grad(c));
  tape.backward(out);
  REQUIRE(tape.grad(c).isZero());
  REQUIRE((tape.grad(l) - Mat::Ones(2, 2)).isZero(1e-15));
}

TEST_CASE("shape mismatches are rejected") {
  Tape tape;
  Var a = tape.leaf(Mat::Ones(2, 3));
  Var b = tape.leaf(Mat::Ones(3, 2));
  REQUIRE_THROWS_AS(ad::add(a, b), ctpp::NumericError);
  REQUIRE_THROWS_AS(ad::matmul(a, a), ctpp::NumericError);
  REQUIRE_THROWS_AS(ad::slice_rows(a, 1, 5), ctpp::NumericError);
}
