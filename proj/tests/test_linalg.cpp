#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "macvqa/attention.hpp"
#include "support.hpp"

using namespace macvqa;
using support::to_matrix;
using support::to_vector;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  std::mt19937_64 rng(1);
  const Matrix m = to_matrix(oracle::random_mat(3, 4, rng));
  EXPECT_EQ(matmul(Matrix::identity(3), m), m);
}

TEST(Matmul, ZerosAnnihilate) {
  std::mt19937_64 rng(2);
  const Matrix m = to_matrix(oracle::random_mat(3, 4, rng));
  EXPECT_EQ(matmul(Matrix::zeros(2, 3), m), Matrix::zeros(2, 4));
}

TEST(Matmul, HandWorkedProduct) {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{5}, {6}};
  EXPECT_EQ(matmul(a, b), (Matrix{{17}, {39}}));
}

TEST(Matmul, DimensionMismatch) {
  EXPECT_THROW_KIND(matmul(Matrix(2, 3), Matrix(2, 3)), DimensionMismatch);
}

TEST(Matmul, MatchesLoopOracle) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const auto a = oracle::random_mat(1 + rng() % 5, 1 + rng() % 5, rng);
    const auto b = oracle::random_mat(a[0].size(), 1 + rng() % 5, rng);
    support::expect_near(matmul(to_matrix(a), to_matrix(b)), oracle::matmul(a, b), 1e-12);
    support::expect_near(matmul_transposed(to_matrix(a), to_matrix(oracle::transpose(b))), oracle::matmul(a, b), 1e-12);
  }
}

TEST(Matmul, AssociativeOnRandomTriples) {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix a = to_matrix(oracle::random_mat(3, 4, rng));
    const Matrix b = to_matrix(oracle::random_mat(4, 5, rng));
    const Matrix c = to_matrix(oracle::random_mat(5, 2, rng));
    const Matrix l = matmul(matmul(a, b), c);
    const Matrix r = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < l.size(); ++i)
      EXPECT_LE(std::abs(l[i] - r[i]), 1e-9 * std::max(1.0, std::abs(l[i])));
  }
}

TEST(Softmax, ConstantInputIsUniform) {
  for (double c : {-50.0, 0.0, 3.5, 700.0}) {
    const auto p = softmax(Vector{c, c, c});
    for (double x : p) EXPECT_NEAR(x, 1.0 / 3.0, 1e-15);
  }
}

TEST(Softmax, ClosedForm) {
  const auto p = softmax(Vector{0.0, std::log(2.0)});
  EXPECT_NEAR(p[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 2.0 / 3.0, 1e-15);
}

TEST(Softmax, MatchesNaiveOracleLength7) {
  std::mt19937_64 rng(5);
  const auto x = oracle::random_vec(7, rng);
  support::expect_near(softmax(to_vector(x)), oracle::softmax(x), 1e-12);
}

TEST(Softmax, SimplexAndShiftInvariance) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> shift(-100.0, 100.0);
  for (int rep = 0; rep < 200; ++rep) {
    const auto x = oracle::random_vec(1 + rng() % 10, rng, 3.0);
    const auto p = softmax(to_vector(x));
    double s = 0.0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    auto y = x;
    const double c = shift(rng);
    for (auto& v : y) v += c;
    support::expect_near(softmax(to_vector(y)), p.values(), 1e-12);
  }
}

TEST(Softmax, RejectsNonFinite) {
  EXPECT_THROW_KIND(softmax(Vector{1.0, std::numeric_limits<double>::quiet_NaN()}), NonFinite);
  EXPECT_THROW_KIND(softmax(Vector{std::numeric_limits<double>::infinity()}), NonFinite);
}

TEST(Sigmoid, Values) {
  const auto s = sigmoid(Vector{0.0, 0.0});
  EXPECT_EQ(s[0], 0.5);
  EXPECT_EQ(s[1], 0.5);
  EXPECT_NEAR(sigmoid(Vector{20.0})[0], 1.0, 1e-8);
  EXPECT_NEAR(sigmoid(-1.5), 1.0 / (1.0 + std::exp(1.5)), 1e-15);
  EXPECT_THROW_KIND(sigmoid(Vector{std::numeric_limits<double>::quiet_NaN()}), NonFinite);
}

TEST(Cosine, ScaleInvarianceAndOrthogonality) {
  const Vector v{0.3, -1.2, 2.0};
  const Vector w{0.9, -3.6, 6.0};
  EXPECT_NEAR(cosine_sim(v, w), 1.0, 1e-15);
  EXPECT_EQ(cosine_sim(Vector{1, 0}, Vector{0, 1}), 0.0);
}

TEST(Cosine, MatchesOracleInR16) {
  std::mt19937_64 rng(7);
  const auto a = oracle::random_vec(16, rng);
  const auto b = oracle::random_vec(16, rng);
  EXPECT_NEAR(cosine_sim(to_vector(a), to_vector(b)), oracle::cosine(a, b), 1e-12);
}

TEST(Cosine, ZeroVector) {
  EXPECT_THROW_KIND(cosine_sim(Vector{0, 0}, Vector{1, 0}), ZeroVector);
  EXPECT_THROW_KIND(cosine_sim(Vector{1e-13, 0}, Vector{1, 0}), ZeroVector);
}

TEST(Tape, QuadraticGradient) {
  Parameter x("x", Matrix{{1.0, 2.0}});
  Tape t;
  t.backward(ad::sum_sq(t.param(x)));
  EXPECT_EQ(x.grad, (Matrix{{2.0, 4.0}}));
}

TEST(Tape, ConstantLossGivesZeroGradient) {
  Parameter x("x", Matrix{{1.0, 2.0}});
  Tape t;
  t.param(x);
  t.backward(t.constant(Matrix{{3.0}}));
  EXPECT_EQ(x.grad, Matrix::zeros(1, 2));
}

TEST(Tape, DetachedLoss) {
  Tape a, b;
  Var foreign = b.constant(Matrix{{1.0}});
  EXPECT_THROW_KIND(a.backward(foreign), DetachedNode);
  Var wide = a.constant(Matrix{{1.0, 2.0}});
  EXPECT_THROW_KIND(a.backward(wide), DetachedNode);
}

// Central differences against the tape for each primitive composed in a
// random scalar expression.
TEST(Tape, PrimitivesMatchFiniteDifferences) {
  std::mt19937_64 rng(8);
  for (int seed = 0; seed < 20; ++seed) {
    Parameter a("a", to_matrix(oracle::random_mat(3, 4, rng)));
    Parameter b("b", to_matrix(oracle::random_mat(2, 4, rng)));
    Parameter c("c", to_matrix(oracle::random_mat(1, 4, rng)));
    for (auto& x : c.value.values()) x = 0.5 + std::abs(x);
    auto build = [&](Tape& t) {
      Var va = t.param(a), vb = t.param(b), vc = t.param(c);
      Var lin = ad::linear(va, vb);                       // 3×2
      Var att = ad::attention(va, va, ad::relu(va));       // 3×4
      Var mix = ad::add_row(ad::hadamard(att, ad::sigmoid(va)), vc);
      Var lsm = ad::log_softmax_rows(ad::concat_cols(lin, ad::slice_cols(mix, 1, 2)));
      Var ent = ad::sum(ad::xlogx(ad::softmax_rows(ad::transpose(lin))));
      Var cos = ad::cosine(ad::mean_rows(mix), vc);
      Var pk = ad::pick(lsm, 2, 1);
      Var s = ad::scale_by(ad::sum(ad::concat_rows(ad::slice_rows(mix, 0, 1), vc)), cos);
      return ad::shift(ad::sub(ad::add(ad::scale(ent, 0.7), pk), s), 1.0);
    };
    for (Parameter* p : {&a, &b, &c}) p->zero_grad();
    {
      Tape t;
      t.backward(build(t));
    }
    for (Parameter* p : {&a, &b, &c}) {
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double orig = p->value[i];
        p->value[i] = orig + 1e-6;
        Tape tp;
        const double up = build(tp).scalar();
        p->value[i] = orig - 1e-6;
        Tape tm;
        const double down = build(tm).scalar();
        p->value[i] = orig;
        const double num = (up - down) / 2e-6;
        EXPECT_NEAR(p->grad[i], num, std::max(1e-6, 1e-5 * std::abs(num))) << p->name << "[" << i << "]";
      }
    }
  }
}
