#include "support/oracles.hpp"
#include "ttsysid/models.hpp"
#include "ttsysid/tensor_train.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace ttsysid;

namespace {

TensorTrain rank_one(const std::vector<Vector>& factors) {
  std::vector<Core> cores;
  for (const auto& f : factors) {
    Core c(1, f.size(), 1);
    for (Index i = 0; i < f.size(); ++i) c(0, i, 0) = f(i);
    cores.push_back(std::move(c));
  }
  return TensorTrain(std::move(cores));
}

TensorTrain random_tt(const std::vector<Index>& modes, const std::vector<Index>& ranks, Index boundary,
                      std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Core> cores;
  for (std::size_t k = 0; k < modes.size(); ++k) {
    const Index left = k == 0 ? 1 : ranks[k - 1];
    const Index right = k + 1 == modes.size() ? boundary : ranks[k];
    Core c(left, modes[k], right);
    for (Index i = 0; i < c.size(); ++i) c.as_vector()(i) = n(rng);
    cores.push_back(std::move(c));
  }
  return TensorTrain(std::move(cores));
}

double inner_dense(const DenseTensor& a, const DenseTensor& b) { return a.as_vector().dot(b.as_vector()); }

DenseTensor fput_monomial_dense(int d, int l, double beta) {
  return oracle::fput_polynomial(d, l, beta, std::vector<double>(static_cast<std::size_t>(d), 0.0)).to_dense(4);
}

}  // namespace

TEST(DenseTensor, RejectsShapeDataMismatch) {
  EXPECT_THROW(DenseTensor({2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(DenseTensor(std::vector<Index>{2, 0}), ShapeError);
  DenseTensor t({2, 3});
  t.at({1, 2}) = 7.0;
  EXPECT_EQ(t[5], 7.0);
}

TEST(TtFromDense, SeparableInputHasUnitRanks) {
  Vector u(3), v(4), w(2);
  u << 1, 2, 3;
  v << -1, 0.5, 2, 1;
  w << 0.3, -0.7;
  const DenseTensor t = tt_to_dense(rank_one({u, v, w}));
  const TensorTrain a = tt_from_dense(t, 0.0);
  EXPECT_EQ(a.ranks(), (std::vector<Index>{1, 1}));
}

TEST(TtFromDense, FputComponentRanks) {
  const DenseTensor t = fput_monomial_dense(6, 2, 0.7);
  const TensorTrain a = tt_from_dense(t, 1e-10);
  EXPECT_EQ(a.ranks(), (std::vector<Index>{1, 4, 4, 1, 1}));
}

TEST(TtFromDense, GaussianTensorIsFullRank) {
  std::mt19937_64 rng(3);
  const DenseTensor t = oracle::random_dense({3, 3, 3}, rng);
  const TensorTrain a = tt_from_dense(t, 0.0);
  EXPECT_EQ(a.ranks(), (std::vector<Index>{3, 3}));
  EXPECT_EQ(oracle::matrix_rank(oracle::unfolding(t, 0), 1e-10), 3);
  EXPECT_EQ(oracle::matrix_rank(oracle::unfolding(t, 1), 1e-10), 3);
}

TEST(TtFromDense, RoundtripIsLossless) {
  std::mt19937_64 rng(11);
  const std::vector<std::vector<Index>> shapes = {{10000}, {100, 100}, {4, 5, 6}, {3, 3, 3, 3, 3, 3, 3, 3}, {2, 7, 3, 5}};
  for (const auto& shape : shapes) {
    const DenseTensor t = oracle::random_dense(shape, rng);
    EXPECT_LE(relative_difference(tt_to_dense(tt_from_dense(t, 0.0)), t), 1e-12);
  }
}

TEST(TtFromDense, RanksMatchDenseRankOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const TensorTrain low = random_tt({3, 4, 3, 4}, {2, 3, 2}, 1, rng);
    const DenseTensor t = tt_to_dense(low);
    const TensorTrain a = tt_from_dense(t, 0.0);
    for (Index k = 0; k < 3; ++k)
      EXPECT_EQ(a.ranks()[static_cast<std::size_t>(k)], oracle::matrix_rank(oracle::unfolding(t, k), 1e-10));
  }
}

TEST(TtFromDense, TruncationErrorBound) {
  std::mt19937_64 rng(8);
  const DenseTensor t = oracle::random_dense({4, 4, 4, 4}, rng);
  for (double tol : {0.05, 0.2, 0.5}) {
    const TensorTrain a = tt_from_dense(t, tol);
    EXPECT_LE(relative_difference(tt_to_dense(a), t) * t.frobenius_norm(),
              tol * t.frobenius_norm() * std::sqrt(3.0) + 1e-12);
    for (Index k = 0; k < 3; ++k) {
      Index bound = 1;
      for (Index i = 0; i <= k; ++i) bound *= 4;
      EXPECT_LE(a.ranks()[static_cast<std::size_t>(k)], std::min<Index>(bound, 256 / bound));
    }
  }
}

TEST(TtFromDense, BoundaryLeg) {
  std::mt19937_64 rng(2);
  const DenseTensor t = oracle::random_dense({3, 2, 3, 5}, rng);
  const TensorTrain a = tt_from_dense(t, 0.0, 5);
  EXPECT_EQ(a.order(), 3);
  EXPECT_EQ(a.right_boundary(), 5);
  EXPECT_LE(relative_difference(tt_to_dense(a), t), 1e-12);
}

TEST(TtToDense, SeparableChainIsOuterProduct) {
  Vector v(3);
  v << 0.5, -1.0, 2.0;
  const DenseTensor t = tt_to_dense(rank_one({v, v, v}));
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j)
      for (Index k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(t.at({i, j, k}), v(i) * v(j) * v(k));
}

TEST(TtToDense, SizeGuardRefuses) {
  std::vector<Core> cores;
  for (int k = 0; k < 14; ++k) {
    Core c(1, 4, 1);
    c(0, 0, 0) = 1.0;
    cores.push_back(c);
  }
  EXPECT_THROW(tt_to_dense(TensorTrain(cores)), SizeGuardError);
}

TEST(TtToDense, FputMatchesPolynomialExpansion) {
  const Basis mono = make_basis(BasisKind::monomial, 4);
  Vector beta = Vector::Constant(4, 0.7), mf = Vector::Zero(4);
  const SelectionModel model = fput_ground_truth(4, beta, mf, mono);
  for (int l = 0; l < 4; ++l) {
    const DenseTensor got = tt_to_dense(equation_tt(model, l));
    const DenseTensor want = fput_monomial_dense(4, l, 0.7);
    EXPECT_LE((got.as_vector() - want.as_vector()).lpNorm<Eigen::Infinity>(), 1e-12) << "equation " << l;
  }
}

TEST(TtInner, BasicValues) {
  Vector e1 = Vector::Unit(3, 0);
  EXPECT_DOUBLE_EQ(tt_inner(rank_one({e1, e1}), rank_one({e1, e1})), 1.0);
  Vector u(2), v(3), w(2), z(3);
  u << 1, 2;
  v << 3, -1, 0.5;
  w << -2, 1;
  z << 1, 1, 4;
  EXPECT_NEAR(tt_inner(rank_one({u, v}), rank_one({w, z})), u.dot(w) * v.dot(z), 1e-14);
}

TEST(TtInner, MatchesDenseContraction) {
  const Basis mono = make_basis(BasisKind::monomial, 4);
  const SelectionModel model = fput_ground_truth(4, Vector::Constant(4, 0.7), Vector::Zero(4), mono);
  for (int l = 0; l < 4; ++l) {
    const TensorTrain a = equation_tt(model, l);
    const DenseTensor t = tt_to_dense(a);
    EXPECT_NEAR(tt_inner(a, a), inner_dense(t, t), 1e-10 * inner_dense(t, t));
  }
}

TEST(TtInner, Bilinearity) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const TensorTrain a = random_tt({3, 2, 4}, {2, 3}, 2, rng);
    const TensorTrain b = random_tt({3, 2, 4}, {3, 2}, 2, rng);
    const TensorTrain c = random_tt({3, 2, 4}, {1, 4}, 2, rng);
    const double alpha = -1.7;
    const double lhs = tt_inner(tt_add(tt_scale(a, alpha), b), c);
    const double rhs = alpha * tt_inner(a, c) + tt_inner(b, c);
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(rhs)));
  }
}

TEST(TtAdd, DenseSumAndRanks) {
  std::mt19937_64 rng(4);
  const TensorTrain a = random_tt({2, 3, 2, 3}, {2, 3, 2}, 1, rng);
  const TensorTrain b = random_tt({2, 3, 2, 3}, {1, 2, 3}, 1, rng);
  const TensorTrain s = tt_add(a, b);
  EXPECT_EQ(s.ranks(), (std::vector<Index>{3, 5, 5}));
  DenseTensor want = tt_to_dense(a);
  want.as_vector() += tt_to_dense(b).as_vector();
  EXPECT_LE(relative_difference(tt_to_dense(s), want), 1e-13);
}

TEST(TtAdd, CancellationAfterRounding) {
  std::mt19937_64 rng(6);
  const TensorTrain a = random_tt({3, 3, 3, 3}, {3, 4, 3}, 1, rng);
  const TensorTrain z = tt_round(tt_add(a, tt_scale(a, -1.0)), 1e-12);
  EXPECT_LE(tt_inner(z, z), 1e-20 * tt_inner(a, a));
}

TEST(TtAdd, FputEquationSumGivesSingleTrainRanks) {
  const int d = 5;
  DenseTensor stacked(std::vector<Index>{4, 4, 4, 4, 4, d});
  for (int l = 0; l < d; ++l) {
    const DenseTensor t = fput_monomial_dense(d, l, 0.7);
    for (Index flat = 0; flat < t.size(); ++flat) stacked[flat * d + l] = t[flat];
  }
  const TensorTrain a = tt_from_dense(stacked, 1e-12, d);
  EXPECT_EQ(a.ranks(), (std::vector<Index>{4, 6, 7, 8}));
  EXPECT_EQ(a.right_boundary(), d);
}

TEST(TtOrthogonalize, IsometryAndNorm) {
  std::mt19937_64 rng(9);
  const TensorTrain a = random_tt({3, 4, 2, 3}, {3, 4, 3}, 2, rng);
  for (Index site = 0; site < 4; ++site) {
    const TensorTrain o = tt_orthogonalize(a, site);
    EXPECT_LE(canonical_defect(o), 1e-12);
    EXPECT_NEAR(tt_inner(a, a), o.core(site).squared_norm(), 1e-12 * tt_inner(a, a));
    EXPECT_LE(tt_relative_distance(o, a), 1e-12);
    const TensorTrain oo = tt_orthogonalize(o, site);
    EXPECT_LE(relative_difference(tt_to_dense(oo), tt_to_dense(o)), 1e-12);
  }
}

TEST(TtOrthogonalize, SingularValuesMatchDenseSvd) {
  std::mt19937_64 rng(10);
  const TensorTrain a = random_tt({2, 2, 2}, {2, 2}, 1, rng);
  const DenseTensor t = tt_to_dense(a);
  const auto sv = tt_singular_values(a);
  for (Index k = 0; k < 2; ++k) {
    const Vector want = oracle::singular_values(oracle::unfolding(t, k));
    const Vector& got = sv[static_cast<std::size_t>(k)];
    for (Index i = 0; i < got.size(); ++i) EXPECT_NEAR(got(i), want(i), 1e-12 * want(0));
  }
}

TEST(TtRound, PreservesExactRankAndContent) {
  std::mt19937_64 rng(12);
  const TensorTrain a = random_tt({3, 3, 3, 3}, {2, 3, 2}, 1, rng);
  const TensorTrain doubled = tt_add(a, a);
  const TensorTrain r = tt_round(doubled, 1e-12);
  EXPECT_EQ(r.ranks(), a.ranks());
  EXPECT_LE(tt_relative_distance(r, tt_scale(a, 2.0)), 1e-12);
}

TEST(Diagnostics, ParameterCountAndManifoldDimension) {
  std::mt19937_64 rng(13);
  const TensorTrain a = random_tt({4, 4, 4, 4}, {3, 5, 2}, 1, rng);
  EXPECT_EQ(a.parameter_count(), 1 * 4 * 3 + 3 * 4 * 5 + 5 * 4 * 2 + 2 * 4 * 1);
  EXPECT_EQ(a.manifold_dimension(), a.parameter_count() - (9 + 25 + 4));
  EXPECT_LE(a.manifold_dimension(), a.parameter_count());
}

TEST(ChangePhysicalBasis, IdentityAndRoundTrip) {
  std::mt19937_64 rng(14);
  const TensorTrain a = random_tt({4, 4, 4}, {3, 3}, 1, rng);
  const TensorTrain same = change_physical_basis(a, Matrix::Identity(4, 4));
  for (Index k = 0; k < 3; ++k) EXPECT_EQ(same.core(k).left_unfolding(), a.core(k).left_unfolding());

  const Basis mono = make_basis(BasisKind::monomial, 4), leg = make_basis(BasisKind::legendre, 4);
  const TensorTrain there = change_physical_basis(a, basis_change_matrix(mono, leg));
  const TensorTrain back = change_physical_basis(there, basis_change_matrix(leg, mono));
  EXPECT_LE(relative_difference(tt_to_dense(back), tt_to_dense(a)), 1e-12);
  EXPECT_EQ(there.ranks(), a.ranks());
}

TEST(ChangePhysicalBasis, RefusesSingularMatrix) {
  std::mt19937_64 rng(15);
  const TensorTrain a = random_tt({2, 2}, {2}, 1, rng);
  Matrix s(2, 2);
  s << 1, 2, 2, 4;
  EXPECT_THROW(change_physical_basis(a, s), std::invalid_argument);
}

TEST(ChangePhysicalBasis, FputCoresEvaluateToRightHandSide) {
  const Basis mono = make_basis(BasisKind::monomial, 4), leg = make_basis(BasisKind::legendre, 4);
  const int d = 5;
  const SelectionModel model = fput_ground_truth(d, Vector::Constant(d, 0.7), Vector::Zero(d), mono);
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix x(100, d);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  const Matrix to_leg = basis_change_matrix(mono, leg);
  const DictionaryStack psi = build_dictionary(x, leg);
  for (int l = 0; l < d; ++l) {
    const TensorTrain eq = change_physical_basis(equation_tt(model, l), to_leg);
    const Matrix vals = evaluate_tt(eq, psi);
    for (Index j = 0; j < x.rows(); ++j) {
      const Vector f = fput_rhs(x.row(j).transpose(), Vector::Constant(d, 0.7), Vector::Zero(d));
      EXPECT_NEAR(vals(j, 0), f(l), 1e-10 * std::max(1.0, std::abs(f(l))));
    }
  }
}
