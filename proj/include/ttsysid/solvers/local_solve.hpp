#pragma once

#include "ttsysid/core.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>
#include <optional>

namespace ttsysid {

// Gram system of one local least-squares problem ||G x - y||^2:
// H = G^T G, b = G^T y, yy = y^T y. Only the lower triangle of H is
// guaranteed to be filled.
struct NormalEquations {
  Matrix H;
  Vector b;
  double yy = 0.0;
  Index rows = 0;
  // Optional triangular factor of the same problem: G = Q R and c = Q^T y.
  // When present, solves work on R and never square the condition number.
  Matrix R;
  Vector c;

  bool has_factor() const { return R.size() > 0; }

  double objective(const Vector& x) const {
    return x.dot(H.selfadjointView<Eigen::Lower>() * x) - 2.0 * b.dot(x) + yy;
  }
};

// Solves (H + diag(shift)) x = b. A well-conditioned system goes through
// Cholesky. Without any shift a numerically singular H is reported; with a
// positive shift the fallback is an eigen-decomposition pseudo-inverse that
// drops directions at round-off level, which would otherwise amplify noise
// in b by 1 / shift. Systems that carry a triangular factor are solved from
// it instead.
inline constexpr double kConditionCut = 1e-10;

inline constexpr double kFactorCut = 1e-11;

namespace detail {

// Builds [R c; 0 rho] for a tall least-squares problem fed in column blocks
// of G^T, folding each block in with a Householder QR.
class QrAccumulator {
 public:
  explicit QrAccumulator(Index dim) : dim_(dim), w_(Matrix::Zero(dim + 1, dim + 1)) {}

  void add(const Eigen::Ref<const Matrix>& gt, const Eigen::Ref<const Vector>& y) {
    const Index n = gt.cols();
    work_.resize(dim_ + 1 + n, dim_ + 1);
    work_.topRows(dim_ + 1) = w_;
    work_.bottomLeftCorner(n, dim_) = gt.transpose();
    work_.bottomRightCorner(n, 1) = y;
    Eigen::HouseholderQR<Eigen::Ref<Matrix>> qr(work_);
    w_ = qr.matrixQR().topRows(dim_ + 1).triangularView<Eigen::Upper>();
    rows_ += n;
  }

  void finish(NormalEquations& ne) const {
    ne.R = w_.topLeftCorner(dim_, dim_);
    ne.c = w_.col(dim_).head(dim_);
    ne.H = ne.R.transpose() * ne.R;
    ne.b = ne.R.transpose() * ne.c;
    ne.yy = w_.col(dim_).squaredNorm();
    ne.rows = rows_;
  }

 private:
  Index dim_;
  Index rows_ = 0;
  Matrix w_, work_;
};

// min ||R x - c||^2 + sum_i shift_i x_i^2 as the least-squares problem
// [R; sqrt(shift)] x ~ [c; 0]. With a positive shift that stack has full
// column rank and a plain Householder QR suffices; without one, a pivoted QR
// detects rank loss.
inline Vector solve_factored(const NormalEquations& ne, const Vector& shift, bool regularised) {
  const Index n = ne.R.cols();
  if (!regularised) {
    Eigen::ColPivHouseholderQR<Matrix> qr(ne.R);
    qr.setThreshold(kFactorCut);
    if (qr.rank() < n) throw SingularSystemError("local system is singular; use a positive regularisation");
    return qr.solve(ne.c);
  }
  Matrix m = Matrix::Zero(2 * n, n);
  m.topRows(n) = ne.R;
  m.bottomRows(n).diagonal() = shift.cwiseSqrt();
  Vector rhs = Vector::Zero(2 * n);
  rhs.head(n) = ne.c;
  Eigen::HouseholderQR<Eigen::Ref<Matrix>> qr(m);
  rhs.applyOnTheLeft(qr.householderQ().transpose());
  return qr.matrixQR().topRows(n).triangularView<Eigen::Upper>().solve(rhs.head(n));
}

// Cholesky solve of (H + diag(shift)) x = b, refused when the squared ratio
// of the extreme diagonal entries of L (a cheap conditioning estimate) is at
// most cut.
inline std::optional<Vector> try_cholesky(const NormalEquations& ne, const Vector& shift, double cut) {
  Matrix a = ne.H;
  a.diagonal() += shift;
  Eigen::LLT<Matrix, Eigen::Lower> llt(a);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const auto d = llt.matrixLLT().diagonal();
  const double ratio = d.minCoeff() / d.maxCoeff();
  if (!(ratio * ratio > cut)) return std::nullopt;
  return Vector(llt.solve(ne.b));
}

}  // namespace detail

inline Vector solve_shifted(const NormalEquations& ne, const Vector& shift) {
  const bool regularised = shift.size() > 0 && shift.minCoeff() > 0.0;
  if (ne.has_factor()) return detail::solve_factored(ne, shift, regularised);
  if (auto x = detail::try_cholesky(ne, shift, kConditionCut)) return *x;
  if (!regularised) throw SingularSystemError("local system is singular; use a positive regularisation");
  Matrix a = ne.H;
  a.diagonal() += shift;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a.selfadjointView<Eigen::Lower>());
  const Vector& ev = eig.eigenvalues();
  const double cut = ev.cwiseAbs().maxCoeff() * kConditionCut;
  Vector inv(ev.size());
  for (Index i = 0; i < ev.size(); ++i) inv(i) = ev(i) > cut ? 1.0 / ev(i) : 0.0;
  return eig.eigenvectors() * (inv.asDiagonal() * (eig.eigenvectors().transpose() * ne.b));
}

inline Vector solve_ridge(const NormalEquations& ne, double lambda) {
  require(lambda >= 0.0, "regularisation must be nonnegative");
  return solve_shifted(ne, Vector::Constant(ne.b.size(), lambda));
}

}  // namespace ttsysid
