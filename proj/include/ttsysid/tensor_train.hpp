#pragma once

#include "ttsysid/core.hpp"
#include "ttsysid/dense_tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ttsysid {

// Order-3 core of shape (left, phys, right). Storage is the row-major left
// unfolding, i.e. element (a, i, b) sits at ((a * phys) + i) * right + b. The
// same buffer read as a row-major left x (phys * right) matrix is the right
// unfolding.
class Core {
 public:
  Core() = default;
  Core(Index left, Index phys, Index right)
      : left_(left), phys_(phys), right_(right), data_(RowMatrix::Zero(left * phys, right)) {
    require_shape(left >= 1 && phys >= 1 && right >= 1, "Core: dimensions must be positive");
  }
  Core(Index left, Index phys, Index right, RowMatrix left_unfolding)
      : left_(left), phys_(phys), right_(right), data_(std::move(left_unfolding)) {
    require_shape(left >= 1 && phys >= 1 && right >= 1, "Core: dimensions must be positive");
    require_shape(data_.rows() == left * phys && data_.cols() == right, "Core: unfolding shape");
  }

  static Core from_right_unfolding(Index phys, const RowMatrix& m) {
    require_shape(m.cols() % phys == 0, "Core: right unfolding width");
    Core c(m.rows(), phys, m.cols() / phys);
    Eigen::Map<RowMatrix>(c.data_.data(), m.rows(), m.cols()) = m;
    return c;
  }

  Index left_rank() const { return left_; }
  Index phys() const { return phys_; }
  Index right_rank() const { return right_; }
  Index size() const { return left_ * phys_ * right_; }

  double& operator()(Index a, Index i, Index b) { return data_(a * phys_ + i, b); }
  double operator()(Index a, Index i, Index b) const { return data_(a * phys_ + i, b); }

  const RowMatrix& left_unfolding() const { return data_; }
  RowMatrix& left_unfolding() { return data_; }

  Eigen::Map<const RowMatrix> right_unfolding() const { return {data_.data(), left_, phys_ * right_}; }
  Eigen::Map<RowMatrix> right_unfolding() { return {data_.data(), left_, phys_ * right_}; }

  Eigen::Map<const Vector> as_vector() const { return {data_.data(), size()}; }
  Eigen::Map<Vector> as_vector() { return {data_.data(), size()}; }

  // Slice (left x right) at physical index i.
  Matrix slice(Index i) const {
    Matrix s(left_, right_);
    for (Index a = 0; a < left_; ++a) s.row(a) = data_.row(a * phys_ + i);
    return s;
  }

  double squared_norm() const { return data_.squaredNorm(); }

 private:
  Index left_ = 0, phys_ = 0, right_ = 0;
  RowMatrix data_;
};

class TensorTrain {
 public:
  TensorTrain() = default;
  explicit TensorTrain(std::vector<Core> cores) : cores_(std::move(cores)) { validate(); }

  Index order() const { return static_cast<Index>(cores_.size()); }
  const Core& core(Index k) const { return cores_.at(static_cast<std::size_t>(k)); }
  const std::vector<Core>& cores() const { return cores_; }

  // Mutable access drops the canonical-form marker.
  Core& mutable_core(Index k) {
    center_.reset();
    return cores_.at(static_cast<std::size_t>(k));
  }
  std::vector<Core>& mutable_cores() {
    center_.reset();
    return cores_;
  }

  // Interior bond dimensions r_1 .. r_{d-1}.
  std::vector<Index> ranks() const {
    std::vector<Index> r;
    for (Index k = 0; k + 1 < order(); ++k) r.push_back(core(k).right_rank());
    return r;
  }
  Index right_boundary() const { return cores_.back().right_rank(); }
  std::vector<Index> mode_sizes() const {
    std::vector<Index> p;
    for (const auto& c : cores_) p.push_back(c.phys());
    return p;
  }

  // Orthogonality centre: cores before it are left-isometric, cores after it
  // right-isometric. Empty when unknown.
  std::optional<Index> center() const { return center_; }
  void set_center(std::optional<Index> site) { center_ = site; }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& c : cores_) n += c.size();
    return n;
  }

  // Dimension of the fixed-rank manifold: parameters minus the gauge freedom
  // r_k^2 of every interior bond.
  Index manifold_dimension() const {
    Index n = parameter_count();
    for (Index r : ranks()) n -= r * r;
    return n;
  }

  void validate() const {
    require_shape(!cores_.empty(), "TensorTrain: no cores");
    require_shape(cores_.front().left_rank() == 1, "TensorTrain: left boundary must be 1");
    for (std::size_t k = 0; k + 1 < cores_.size(); ++k)
      require_shape(cores_[k].right_rank() == cores_[k + 1].left_rank(),
                    "TensorTrain: bond mismatch at " + std::to_string(k));
  }

 private:
  std::vector<Core> cores_;
  std::optional<Index> center_;
};

namespace detail {

struct ThinSvd {
  Matrix U;
  Vector S;
  Matrix V;
};

inline ThinSvd thin_svd(const Matrix& a) {
  ThinSvd out;
  if (std::min(a.rows(), a.cols()) <= 24) {
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.U = svd.matrixU();
    out.S = svd.singularValues();
    out.V = svd.matrixV();
  } else {
    Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.U = svd.matrixU();
    out.S = svd.singularValues();
    out.V = svd.matrixV();
  }
  return out;
}

// Singular values at or below this fraction of the largest are round-off,
// even when the caller asked for no truncation.
inline constexpr double kRoundoffFloor = 64.0 * std::numeric_limits<double>::epsilon();

inline Index count_above(const Vector& s, double threshold) {
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > threshold) ++r;
  return std::max<Index>(r, 1);
}

// Thin QR returning Q with min(rows, cols) columns and R.
inline std::pair<Matrix, Matrix> thin_qr(const Matrix& a) {
  const Index k = std::min(a.rows(), a.cols());
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), k);
  Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  return {std::move(q), std::move(r)};
}

struct SweepResult {
  std::vector<Core> cores;
  double max_sigma = 0.0;
};

inline SweepResult tt_svd_sweep(const DenseTensor& t, const std::vector<Index>& modes, Index boundary,
                                double abs_threshold, double rel_floor) {
  const Index d = static_cast<Index>(modes.size());
  SweepResult out;
  RowMatrix rest = Eigen::Map<const RowMatrix>(t.data(), modes[0], t.size() / modes[0]);
  Index r_left = 1;
  for (Index k = 0; k + 1 < d; ++k) {
    ThinSvd svd = thin_svd(rest);
    const double smax = svd.S.size() ? svd.S(0) : 0.0;
    out.max_sigma = std::max(out.max_sigma, smax);
    const Index r = count_above(svd.S, std::max(abs_threshold, rel_floor * smax));
    RowMatrix u = svd.U.leftCols(r);
    out.cores.emplace_back(r_left, modes[k], r, std::move(u));
    RowMatrix carry = svd.S.head(r).asDiagonal() * svd.V.leftCols(r).transpose();
    const Index next_cols = carry.cols() / modes[k + 1];
    rest = Eigen::Map<const RowMatrix>(carry.data(), r * modes[k + 1], next_cols);
    r_left = r;
  }
  out.cores.emplace_back(r_left, modes[d - 1], boundary, std::move(rest));
  return out;
}

}  // namespace detail

// TT-SVD. When right_boundary > 1, the last mode of t is the boundary leg.
// Singular values are discarded when at or below rel_tol times the largest
// singular value over all splits, and the weights are carried rightwards.
inline TensorTrain tt_from_dense(const DenseTensor& t, double rel_tol, Index right_boundary = 1) {
  require(rel_tol >= 0.0, "tt_from_dense: rel_tol must be nonnegative");
  require_shape(!t.empty(), "tt_from_dense: empty tensor");
  std::vector<Index> modes = t.shape();
  if (right_boundary > 1) {
    require_shape(modes.size() >= 2 && modes.back() == right_boundary,
                  "tt_from_dense: last mode must equal the boundary dimension");
    modes.pop_back();
  }
  const double floor = detail::kRoundoffFloor;
  if (rel_tol <= floor) return TensorTrain(detail::tt_svd_sweep(t, modes, right_boundary, 0.0, floor).cores);
  const double smax = detail::tt_svd_sweep(t, modes, right_boundary, 0.0, floor).max_sigma;
  return TensorTrain(detail::tt_svd_sweep(t, modes, right_boundary, rel_tol * smax, floor).cores);
}

inline DenseTensor tt_to_dense(const TensorTrain& a) {
  std::vector<Index> shape = a.mode_sizes();
  const Index rd = a.right_boundary();
  if (rd > 1) shape.push_back(rd);
  Index total = 1;
  for (Index s : shape) {
    if (total > kDenseEntryLimit / s) throw SizeGuardError("tt_to_dense: result exceeds dense-size guard");
    total *= s;
  }
  RowMatrix acc = a.core(0).left_unfolding();
  for (Index k = 1; k < a.order(); ++k) {
    const Index rows = acc.rows();
    RowMatrix next = acc * a.core(k).right_unfolding();
    const Index p = a.core(k).phys();
    acc = Eigen::Map<const RowMatrix>(next.data(), rows * p, a.core(k).right_rank());
  }
  return DenseTensor(std::move(shape), std::vector<double>(acc.data(), acc.data() + acc.size()));
}

namespace detail {

// Zipper contraction over all cores; returns the r_d x r_d boundary matrix.
inline Matrix zipper(const TensorTrain& a, const TensorTrain& b) {
  require_shape(a.order() == b.order(), "tt_inner: order mismatch");
  require_shape(a.mode_sizes() == b.mode_sizes(), "tt_inner: mode mismatch");
  require_shape(a.right_boundary() == b.right_boundary(), "tt_inner: boundary mismatch");
  Matrix e = Matrix::Ones(1, 1);
  for (Index k = 0; k < a.order(); ++k) {
    const Core& ca = a.core(k);
    const Core& cb = b.core(k);
    RowMatrix tmp = e * cb.right_unfolding();
    Eigen::Map<const RowMatrix> tmp2(tmp.data(), ca.left_rank() * ca.phys(), cb.right_rank());
    e = ca.left_unfolding().transpose() * tmp2;
  }
  return e;
}

}  // namespace detail

inline double tt_inner(const TensorTrain& a, const TensorTrain& b) { return detail::zipper(a, b).trace(); }

inline double tt_norm(const TensorTrain& a) { return std::sqrt(std::max(0.0, tt_inner(a, a))); }

inline TensorTrain tt_scale(TensorTrain a, double alpha) {
  a.mutable_core(0).left_unfolding() *= alpha;
  return a;
}

inline TensorTrain tt_add(const TensorTrain& a, const TensorTrain& b) {
  require_shape(a.order() == b.order(), "tt_add: order mismatch");
  require_shape(a.mode_sizes() == b.mode_sizes(), "tt_add: mode mismatch");
  require_shape(a.right_boundary() == b.right_boundary(), "tt_add: boundary mismatch");
  const Index d = a.order();
  if (d == 1) {
    Core c = a.core(0);
    c.left_unfolding() += b.core(0).left_unfolding();
    return TensorTrain({std::move(c)});
  }
  std::vector<Core> cores;
  for (Index k = 0; k < d; ++k) {
    const Core& x = a.core(k);
    const Core& y = b.core(k);
    const Index p = x.phys();
    const Index left = k == 0 ? 1 : x.left_rank() + y.left_rank();
    const Index right = k == d - 1 ? x.right_rank() : x.right_rank() + y.right_rank();
    const Index ya = k == 0 ? 0 : x.left_rank();
    const Index yb = k == d - 1 ? 0 : x.right_rank();
    Core c(left, p, right);
    for (Index i = 0; i < p; ++i) {
      for (Index al = 0; al < x.left_rank(); ++al)
        for (Index be = 0; be < x.right_rank(); ++be) c(al, i, be) = x(al, i, be);
      for (Index al = 0; al < y.left_rank(); ++al)
        for (Index be = 0; be < y.right_rank(); ++be) c(ya + al, i, yb + be) += y(al, i, be);
    }
    cores.push_back(std::move(c));
  }
  return TensorTrain(std::move(cores));
}

inline TensorTrain tt_sub(const TensorTrain& a, const TensorTrain& b) { return tt_add(a, tt_scale(b, -1.0)); }

// Moves the orthogonality centre of a to site: QR sweeps from the left, LQ
// sweeps from the right. Bond dimensions may shrink if a core is short.
inline TensorTrain tt_orthogonalize(TensorTrain a, Index site) {
  const Index d = a.order();
  require(site >= 0 && site < d, "tt_orthogonalize: site out of range");
  auto& cores = a.mutable_cores();
  for (Index k = 0; k < site; ++k) {
    auto [q, r] = detail::thin_qr(cores[k].left_unfolding());
    const Index left = cores[k].left_rank(), p = cores[k].phys();
    cores[k] = Core(left, p, q.cols(), RowMatrix(q));
    RowMatrix next = r * cores[k + 1].right_unfolding();
    cores[k + 1] = Core::from_right_unfolding(cores[k + 1].phys(), next);
  }
  for (Index k = d - 1; k > site; --k) {
    auto [q, r] = detail::thin_qr(cores[k].right_unfolding().transpose());
    RowMatrix qt = q.transpose();
    cores[k] = Core::from_right_unfolding(cores[k].phys(), qt);
    RowMatrix prev = cores[k - 1].left_unfolding() * r.transpose();
    {
      const Index r_new = prev.cols();
      cores[k - 1] = Core(cores[k - 1].left_rank(), cores[k - 1].phys(), r_new, std::move(prev));
    }
  }
  a.set_center(site);
  return a;
}

// Exact singular values of every interior unfolding, bond k between sites k
// and k+1.
inline std::vector<Vector> tt_singular_values(const TensorTrain& a) {
  TensorTrain t = tt_orthogonalize(a, a.order() - 1);
  auto& cores = t.mutable_cores();
  std::vector<Vector> out(static_cast<std::size_t>(std::max<Index>(a.order() - 1, 0)));
  for (Index k = a.order() - 1; k > 0; --k) {
    detail::ThinSvd svd = detail::thin_svd(cores[k].right_unfolding());
    out[static_cast<std::size_t>(k - 1)] = svd.S;
    RowMatrix vt = svd.V.transpose();
    cores[k] = Core::from_right_unfolding(cores[k].phys(), vt);
    RowMatrix prev = cores[k - 1].left_unfolding() * svd.U * svd.S.asDiagonal();
    {
      const Index r_new = prev.cols();
      cores[k - 1] = Core(cores[k - 1].left_rank(), cores[k - 1].phys(), r_new, std::move(prev));
    }
  }
  return out;
}

inline std::vector<Index> numerical_ranks(const TensorTrain& a, double rel_tol = 1e-10) {
  const auto sv = tt_singular_values(a);
  double smax = 0.0;
  for (const auto& s : sv)
    if (s.size()) smax = std::max(smax, s.maxCoeff());
  std::vector<Index> r;
  for (const auto& s : sv) {
    Index n = 0;
    for (Index i = 0; i < s.size(); ++i)
      if (s(i) > rel_tol * smax) ++n;
    r.push_back(n);
  }
  return r;
}

namespace detail {

// Right-to-left truncation of a left-canonical train. keep(k, sigma) returns
// the number of singular values retained at bond k.
template <class Keep>
TensorTrain truncate_sweep(TensorTrain t, Keep keep) {
  auto& cores = t.mutable_cores();
  for (Index k = t.order() - 1; k > 0; --k) {
    ThinSvd svd = thin_svd(cores[k].right_unfolding());
    const Index r = std::clamp<Index>(keep(k - 1, svd.S), 1, svd.S.size());
    RowMatrix vt = svd.V.leftCols(r).transpose();
    cores[k] = Core::from_right_unfolding(cores[k].phys(), vt);
    RowMatrix prev = cores[k - 1].left_unfolding() * svd.U.leftCols(r) * svd.S.head(r).asDiagonal();
    cores[k - 1] = Core(cores[k - 1].left_rank(), cores[k - 1].phys(), r, std::move(prev));
  }
  t.set_center(0);
  return t;
}

}  // namespace detail

// TT rounding with the same global criterion as tt_from_dense.
inline TensorTrain tt_round(const TensorTrain& a, double rel_tol) {
  require(rel_tol >= 0.0, "tt_round: rel_tol must be nonnegative");
  double smax = 0.0;
  for (const auto& s : tt_singular_values(a))
    if (s.size()) smax = std::max(smax, s.maxCoeff());
  const double threshold = std::max(rel_tol, detail::kRoundoffFloor) * smax;
  return detail::truncate_sweep(tt_orthogonalize(a, a.order() - 1), [&](Index, const Vector& s) {
    return detail::count_above(s, threshold);
  });
}

// Keeps the leading ranks[k] singular values at every bond.
inline TensorTrain tt_truncate_to_ranks(const TensorTrain& a, const std::vector<Index>& ranks) {
  require_shape(static_cast<Index>(ranks.size()) == a.order() - 1, "tt_truncate_to_ranks: rank count");
  return detail::truncate_sweep(tt_orthogonalize(a, a.order() - 1), [&](Index k, const Vector&) {
    return ranks[static_cast<std::size_t>(k)];
  });
}

// core[a, :, b] <- M_k * core[a, :, b] for every site.
inline TensorTrain change_physical_basis(TensorTrain a, std::span<const Matrix> m) {
  require_shape(static_cast<Index>(m.size()) == a.order(), "change_physical_basis: one matrix per site");
  auto& cores = a.mutable_cores();
  for (Index k = 0; k < a.order(); ++k) {
    const Matrix& mk = m[static_cast<std::size_t>(k)];
    const Index p = cores[k].phys();
    require_shape(mk.rows() == p && mk.cols() == p, "change_physical_basis: matrix size");
    Eigen::JacobiSVD<Matrix> svd(mk);
    const Vector s = svd.singularValues();
    if (!(s(s.size() - 1) > 0.0) || s(0) / s(s.size() - 1) > 1e12)
      throw std::invalid_argument("change_physical_basis: matrix is numerically singular");
    RowMatrix& u = cores[k].left_unfolding();
    for (Index al = 0; al < cores[k].left_rank(); ++al) u.middleRows(al * p, p) = mk * u.middleRows(al * p, p);
  }
  return a;
}

inline TensorTrain change_physical_basis(TensorTrain a, const Matrix& m) {
  std::vector<Matrix> ms(static_cast<std::size_t>(a.order()), m);
  return change_physical_basis(std::move(a), std::span<const Matrix>(ms));
}

// Largest deviation from isometry over the cores that the centre marker
// claims are canonical.
inline double canonical_defect(const TensorTrain& a) {
  if (!a.center()) return 0.0;
  double worst = 0.0;
  for (Index k = 0; k < a.order(); ++k) {
    if (k == *a.center()) continue;
    Matrix g;
    if (k < *a.center()) {
      const auto& u = a.core(k).left_unfolding();
      g = u.transpose() * u;
    } else {
      const auto u = a.core(k).right_unfolding();
      g = u * u.transpose();
    }
    g -= Matrix::Identity(g.rows(), g.cols());
    worst = std::max(worst, g.operatorNorm());
  }
  return worst;
}

// Frobenius norm of a - b without densifying. Expanding <a,a> - 2<a,b> + <b,b>
// loses half the digits to cancellation, so the difference train is
// orthogonalised and the norm read off its last core.
inline double tt_distance(const TensorTrain& a, const TensorTrain& b) {
  const TensorTrain diff = tt_orthogonalize(tt_sub(a, b), a.order() - 1);
  return std::sqrt(diff.core(a.order() - 1).squared_norm());
}

inline double tt_relative_distance(const TensorTrain& a, const TensorTrain& b) {
  const double nb = tt_norm(b);
  const double diff = tt_distance(a, b);
  return nb > 0.0 ? diff / nb : diff;
}

}  // namespace ttsysid
