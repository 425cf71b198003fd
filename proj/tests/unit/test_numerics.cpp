#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "visita/error.hpp"
#include "visita/numerics.hpp"
#include "visita/rng.hpp"

using namespace visita;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.uniform(-1.0, 1.0);
  return m;
}

// Textbook triple loop, kept apart from the library kernels.
Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
  return c;
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Rng rng(1);
  const Matrix m = random_matrix(3, 5, rng);
  EXPECT_EQ(matmul(Matrix::identity(3), m), m);
}

TEST(Matmul, ZeroMatrixGivesZero) {
  Rng rng(2);
  const Matrix m = random_matrix(4, 3, rng);
  EXPECT_EQ(matmul(m, Matrix(3, 2)), Matrix(4, 2));
}

TEST(Matmul, HandExample) {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{5}, {6}};
  EXPECT_EQ(matmul(a, b), (Matrix{{17}, {39}}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Matrix(2, 3), Matrix(2, 3));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("2x3"), std::string::npos) << e.what();
  }
}

TEST(Matmul, KernelsAgreeWithNaiveLoopOnOddShapes) {
  Rng rng(3);
  for (std::size_t n : {1u, 3u, 4u, 5u, 9u})
    for (std::size_t k : {1u, 2u, 7u})
      for (std::size_t m : {1u, 6u, 8u, 13u, 17u}) {
        const Matrix a = random_matrix(n, k, rng), b = random_matrix(k, m, rng);
        const Matrix ref = naive_matmul(a, b);
        EXPECT_LT(max_abs(matmul(a, b) - ref), 1e-12);
        EXPECT_LT(max_abs(matmul_nt(a, transpose(b)) - ref), 1e-12);
        EXPECT_LT(max_abs(matmul_tn(transpose(a), b) - ref), 1e-12);
        Matrix acc = ref;
        accumulate_tn(acc, transpose(a), b);
        EXPECT_LT(max_abs(acc - 2.0 * ref), 1e-12);
      }
}

TEST(Matmul, AssociativeOnRandomTriples) {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const std::size_t p = 1 + rng.below(6), q = 1 + rng.below(6), r = 1 + rng.below(6), s = 1 + rng.below(6);
    const Matrix a = random_matrix(p, q, rng), b = random_matrix(q, r, rng), c = random_matrix(r, s, rng);
    const Matrix lhs = matmul(matmul(a, b), c), rhs = matmul(a, matmul(b, c));
    EXPECT_LE(relative_error(lhs, rhs), 1e-9);
  }
}

TEST(Softmax, ZeroRowIsUniform) {
  const Matrix s = softmax_rows(Matrix{{0, 0}});
  EXPECT_DOUBLE_EQ(s(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(s(0, 1), 0.5);
}

TEST(Softmax, SingleElementIsOne) {
  for (double x : {-1e4, -3.0, 0.0, 7.5, 1e4}) EXPECT_EQ(softmax_rows(Matrix{{x}})(0, 0), 1.0);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  const Matrix s = softmax_rows(Matrix{{1000, 0}});
  EXPECT_NEAR(s(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(s(0, 1), 0.0, 1e-15);
  EXPECT_TRUE(all_finite(s));
}

TEST(Softmax, RowsSumToOneOverWideRange) {
  Rng rng(5);
  for (int t = 0; t < 1000; ++t) {
    Matrix row(1, 1 + rng.below(12));
    for (double& v : row.values()) v = rng.uniform(-1e4, 1e4);
    const Matrix s = softmax_rows(row);
    EXPECT_NEAR(sum(s), 1.0, 1e-12);
  }
}

TEST(Softmax, ShiftInvariant) {
  Rng rng(6);
  for (int t = 0; t < 200; ++t) {
    Matrix row = random_matrix(1, 1 + rng.below(10), rng);
    row *= 20.0;
    Matrix shifted = row;
    const double c = rng.uniform(-500.0, 500.0);
    for (double& v : shifted.values()) v += c;
    EXPECT_LE(max_abs(softmax_rows(row) - softmax_rows(shifted)), 1e-12);
  }
}

TEST(Softmax, RejectsNanAndEmpty) {
  EXPECT_THROW(softmax_rows(Matrix{{0.0, std::numeric_limits<double>::quiet_NaN()}}), InvalidInputError);
  EXPECT_THROW(softmax_rows(Matrix()), InvalidInputError);
}

TEST(FiniteDiff, LinearFunctionGivesOnes) {
  Rng rng(7);
  const Matrix x = random_matrix(3, 4, rng);
  const Matrix g = finite_diff_grad([](const Matrix& m) { return sum(m); }, x, 1e-5);
  EXPECT_LT(max_abs(g - Matrix(3, 4, 1.0)), 1e-9);
}

TEST(FiniteDiff, QuadraticGivesInput) {
  Rng rng(8);
  const Matrix x = random_matrix(2, 5, rng);
  const Matrix g = finite_diff_grad(
      [](const Matrix& m) {
        const double n = frobenius_norm(m);
        return 0.5 * n * n;
      },
      x, 1e-5);
  EXPECT_LT(max_abs(g - x), 1e-8);
}

TEST(FiniteDiff, NonFiniteValueNamesEntry) {
  const Matrix x{{1.0, 0.0}};
  try {
    finite_diff_grad([](const Matrix& m) { return std::sqrt(m(0, 1)); }, x, 1e-5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
    EXPECT_NE(std::string(e.what()).find("(0, 1)"), std::string::npos) << e.what();
  }
}

TEST(FiniteDiff, RejectsNonPositiveStep) {
  EXPECT_THROW(finite_diff_grad([](const Matrix& m) { return sum(m); }, Matrix(1, 1), 0.0), InvalidInputError);
}

TEST(Matrix, RejectsNonFiniteConstruction) {
  EXPECT_THROW(Matrix(1, 2, std::vector<double>{1.0, std::numeric_limits<double>::infinity()}), InvalidInputError);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1.0}), ShapeError);
}

TEST(Rng, EqualSeedsGiveIdenticalStreams) {
  Rng a(123), b(123), c(124);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs |= x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, DerivedStreamsAreReproducibleAndDistinct) {
  const Rng root(9);
  Rng a = root.derive(1), b = root.derive(1), c = root.derive(2);
  EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(a.next_u64(), c.next_u64());
}

TEST(Rng, UniformAndBelowStayInRange) {
  Rng rng(10);
  double mean = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    mean += u;
    ASSERT_LT(rng.below(7), 7u);
  }
  EXPECT_NEAR(mean / 20000.0, 0.5, 0.01);
}

TEST(Rng, NormalHasUnitMoments) {
  Rng rng(11);
  double s = 0.0, s2 = 0.0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.03);
  EXPECT_NEAR(s2 / n, 1.0, 0.03);
}
