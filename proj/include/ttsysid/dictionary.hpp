#pragma once

#include "ttsysid/core.hpp"

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

namespace ttsysid {

enum class BasisKind { legendre, monomial };

inline std::string to_string(BasisKind k) { return k == BasisKind::legendre ? "legendre" : "monomial"; }

inline BasisKind parse_basis_kind(std::string_view s) {
  if (s == "legendre") return BasisKind::legendre;
  if (s == "monomial") return BasisKind::monomial;
  throw std::invalid_argument("unsupported basis kind: " + std::string(s));
}

// Univariate polynomial basis psi_0..psi_{p-1}. Row i of the coefficient
// table holds psi_i in the monomials 1, x, x^2, ...; it is lower triangular
// with psi_0 = 1.
class Basis {
 public:
  Basis(BasisKind kind, Matrix coefficients) : kind_(kind), coeff_(std::move(coefficients)) {}

  BasisKind kind() const { return kind_; }
  Index size() const { return coeff_.rows(); }
  const Matrix& coefficients() const { return coeff_; }

  double evaluate(Index i, double x) const {
    const Index p = size();
    double v = 0.0;
    for (Index c = p - 1; c >= 0; --c) v = v * x + coeff_(i, c);
    return v;
  }

  void evaluate(double x, double* out) const {
    for (Index i = 0; i < size(); ++i) out[i] = evaluate(i, x);
  }

  Vector evaluate(double x) const {
    Vector v(size());
    evaluate(x, v.data());
    return v;
  }

 private:
  BasisKind kind_;
  Matrix coeff_;
};

// Legendre polynomials are limited to p <= 4 unless allow_extended is set,
// in which case higher degrees come from the three-term recurrence.
inline Basis make_basis(BasisKind kind, Index p, bool allow_extended = false) {
  require(p >= 1, "make_basis: basis size must be positive");
  Matrix t = Matrix::Zero(p, p);
  if (kind == BasisKind::monomial) {
    t.setIdentity();
    return Basis(kind, t);
  }
  require(p <= 4 || allow_extended, "make_basis: legendre basis beyond size 4 needs the extension flag");
  t(0, 0) = 1.0;
  if (p > 1) t(1, 1) = 1.0;
  for (Index n = 1; n + 1 < p; ++n) {
    // (n+1) P_{n+1} = (2n+1) x P_n - n P_{n-1}
    for (Index c = 0; c < p; ++c) {
      double v = -static_cast<double>(n) * t(n - 1, c);
      if (c > 0) v += static_cast<double>(2 * n + 1) * t(n, c - 1);
      t(n + 1, c) = v / static_cast<double>(n + 1);
    }
  }
  return Basis(kind, t);
}

// to-coefficients = M * from-coefficients for every polynomial of degree < p.
inline Matrix basis_change_matrix(const Basis& from, const Basis& to) {
  if (from.size() != to.size()) throw std::invalid_argument("basis_change_matrix: span mismatch");
  const Index p = from.size();
  for (Index i = 0; i < p; ++i)
    if (from.coefficients()(i, i) == 0.0 || to.coefficients()(i, i) == 0.0)
      throw std::invalid_argument("basis_change_matrix: span mismatch");
  // f = c_from^T T_from m(x) = c_to^T T_to m(x)  =>  c_to = T_to^{-T} T_from^T c_from
  Matrix tt = to.coefficients().transpose();
  return tt.triangularView<Eigen::Upper>().solve(Matrix(from.coefficients().transpose()));
}

// Psi^k[j, i] = psi_i(X[j, k]) for every site k.
class DictionaryStack {
 public:
  DictionaryStack() = default;
  explicit DictionaryStack(std::vector<RowMatrix> mats) : mats_(std::move(mats)) {
    require_shape(!mats_.empty(), "DictionaryStack: no sites");
    for (const auto& m : mats_)
      require_shape(m.rows() == mats_[0].rows() && m.cols() == mats_[0].cols(),
                    "DictionaryStack: inconsistent matrix sizes");
  }

  Index order() const { return static_cast<Index>(mats_.size()); }
  Index samples() const { return mats_.empty() ? 0 : mats_[0].rows(); }
  Index basis_size() const { return mats_.empty() ? 0 : mats_[0].cols(); }
  const RowMatrix& operator[](Index k) const { return mats_[static_cast<std::size_t>(k)]; }

 private:
  std::vector<RowMatrix> mats_;
};

inline DictionaryStack build_dictionary(const Matrix& x, const Basis& basis) {
  require(x.allFinite(), "build_dictionary: non-finite state entries");
  std::vector<RowMatrix> mats;
  for (Index k = 0; k < x.cols(); ++k) {
    RowMatrix m(x.rows(), basis.size());
    for (Index j = 0; j < x.rows(); ++j) basis.evaluate(x(j, k), m.row(j).data());
    mats.push_back(std::move(m));
  }
  return DictionaryStack(std::move(mats));
}

}  // namespace ttsysid
