#include "support/oracles.hpp"
#include "ttsysid/dictionary.hpp"
#include "ttsysid/models.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace ttsysid;

namespace {

// 64-node Gauss-Legendre rule by Newton iteration on P_64.
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.resize(static_cast<std::size_t>(n));
  weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[static_cast<std::size_t>(i)] = x;
    weights[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

}  // namespace

TEST(Basis, LegendreValues) {
  const Basis b = make_basis(BasisKind::legendre, 4);
  EXPECT_DOUBLE_EQ(b.evaluate(1, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(b.evaluate(2, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(b.evaluate(3, 0.5), -0.4375);
  for (double x : {-0.9, -0.2, 0.3, 0.77})
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(b.evaluate(i, x), oracle::legendre(i, x), 1e-15);
}

TEST(Basis, MonomialValues) {
  const Basis b = make_basis(BasisKind::monomial, 4);
  const Vector v = b.evaluate(2.0);
  EXPECT_EQ(v, (Vector(4) << 1, 2, 4, 8).finished());
}

TEST(Basis, ConstantFirstAndSizeLimit) {
  for (auto kind : {BasisKind::legendre, BasisKind::monomial}) {
    const Basis b = make_basis(kind, 3);
    EXPECT_DOUBLE_EQ(b.evaluate(0, 0.123), 1.0);
  }
  EXPECT_THROW(make_basis(BasisKind::legendre, 5), std::invalid_argument);
  const Basis ext = make_basis(BasisKind::legendre, 5, true);
  EXPECT_NEAR(ext.evaluate(4, 0.4), oracle::legendre(4, 0.4), 1e-14);
  EXPECT_THROW(parse_basis_kind("chebyshev"), std::invalid_argument);
}

TEST(Basis, LegendreOrthogonality) {
  std::vector<double> nodes, weights;
  gauss_legendre(64, nodes, weights);
  const Basis b = make_basis(BasisKind::legendre, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double g = 0.0;
      for (std::size_t q = 0; q < nodes.size(); ++q) g += weights[q] * b.evaluate(i, nodes[q]) * b.evaluate(j, nodes[q]);
      if (i == j)
        EXPECT_NEAR(g, 2.0 / (2 * i + 1), 1e-12);
      else
        EXPECT_LE(std::abs(g), 1e-10);
    }
}

TEST(BuildDictionary, ZeroStates) {
  const DictionaryStack psi = build_dictionary(Matrix::Zero(5, 3), make_basis(BasisKind::legendre, 4));
  for (Index k = 0; k < 3; ++k)
    for (Index j = 0; j < 5; ++j) {
      EXPECT_DOUBLE_EQ(psi[k](j, 0), 1.0);
      EXPECT_DOUBLE_EQ(psi[k](j, 1), 0.0);
      EXPECT_DOUBLE_EQ(psi[k](j, 2), -0.5);
      EXPECT_DOUBLE_EQ(psi[k](j, 3), 0.0);
    }
}

TEST(BuildDictionary, SmallMonomial) {
  Matrix x(1, 2);
  x << 1, -1;
  const DictionaryStack psi = build_dictionary(x, make_basis(BasisKind::monomial, 2));
  EXPECT_EQ(psi[0](0, 0), 1.0);
  EXPECT_EQ(psi[0](0, 1), 1.0);
  EXPECT_EQ(psi[1](0, 0), 1.0);
  EXPECT_EQ(psi[1](0, 1), -1.0);
}

TEST(BuildDictionary, RejectsNonFinite) {
  Matrix x = Matrix::Zero(2, 2);
  x(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(build_dictionary(x, make_basis(BasisKind::monomial, 2)), std::invalid_argument);
}

TEST(BuildDictionary, HadamardFactorizationMatchesExplicitDictionary) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int d = 1; d <= 3; ++d)
    for (int p = 1; p <= 3; ++p) {
      Matrix x(20, d);
      for (Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
      const DenseTensor theta = oracle::random_dense(std::vector<Index>(static_cast<std::size_t>(d), p), rng);
      const Basis b = make_basis(BasisKind::legendre, p);
      const Matrix got = evaluate_tt(tt_from_dense(theta, 0.0), build_dictionary(x, b));
      const Vector want = oracle::explicit_dictionary(x, p, oracle::legendre) * theta.as_vector();
      EXPECT_LE((got.col(0) - want).norm(), 1e-12 * std::max(1.0, want.norm())) << d << " " << p;
    }
}

TEST(BasisChange, IdentityAndSimpleCases) {
  const Basis leg = make_basis(BasisKind::legendre, 4), mono = make_basis(BasisKind::monomial, 4);
  EXPECT_LE((basis_change_matrix(leg, leg) - Matrix::Identity(4, 4)).norm(), 1e-15);
  const Matrix m2 = basis_change_matrix(make_basis(BasisKind::monomial, 2), make_basis(BasisKind::legendre, 2));
  EXPECT_LE((m2 - Matrix::Identity(2, 2)).norm(), 1e-15);
  const Matrix a = basis_change_matrix(mono, leg), b = basis_change_matrix(leg, mono);
  EXPECT_LE((a * b - Matrix::Identity(4, 4)).norm(), 1e-12);
  EXPECT_THROW(basis_change_matrix(mono, make_basis(BasisKind::legendre, 3)), std::invalid_argument);
}

TEST(BasisChange, PointwiseEvaluationAgrees) {
  const Basis leg = make_basis(BasisKind::legendre, 4), mono = make_basis(BasisKind::monomial, 4);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector c(4);
  for (Index i = 0; i < 4; ++i) c(i) = u(rng);
  const Vector cl = basis_change_matrix(mono, leg) * c;
  for (int t = 0; t < 50; ++t) {
    const double x = u(rng);
    double direct = 0.0, via = 0.0;
    for (int i = 0; i < 4; ++i) {
      direct += c(i) * oracle::monomial(i, x);
      via += cl(i) * oracle::legendre(i, x);
    }
    EXPECT_NEAR(direct, via, 1e-12);
  }
}
