#pragma once

#include "ttsysid/core.hpp"
#include "ttsysid/dense_tensor.hpp"
#include "ttsysid/dictionary.hpp"
#include "ttsysid/rng.hpp"
#include "ttsysid/tensor_train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace ttsysid {

// Activation type of every variable in every equation: activation[k][l] is
// the type (0-based) of site k inside equation l.
struct SelectionMaps {
  Index types = 0;
  std::vector<std::vector<int>> activation;

  Index order() const { return static_cast<Index>(activation.size()); }
  int type(Index k, Index l) const {
    return activation[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)];
  }

  // S^k as an n x d 0/1 matrix.
  Matrix matrix(Index k) const {
    Matrix s = Matrix::Zero(types, order());
    for (Index l = 0; l < order(); ++l) s(type(k, l), l) = 1.0;
    return s;
  }

  void validate() const {
    require_shape(types >= 1, "SelectionMaps: need at least one type");
    for (const auto& row : activation) {
      require_shape(static_cast<Index>(row.size()) == order(), "SelectionMaps: one entry per equation");
      for (int q : row) require_shape(q >= 0 && q < types, "SelectionMaps: type out of range");
    }
  }
};

// Window sites l-s1 .. l+s2 of equation l get types 1 .. s1+s2+1 in order,
// every other site type 0. Sites falling off the chain are clipped.
inline SelectionMaps build_selection_tensor(Index d, Index s1, Index s2) {
  require(d >= 1 && s1 >= 0 && s2 >= 0, "build_selection_tensor: invalid ranges");
  SelectionMaps maps;
  maps.types = s1 + s2 + 2;
  maps.activation.assign(static_cast<std::size_t>(d), std::vector<int>(static_cast<std::size_t>(d), 0));
  for (Index l = 0; l < d; ++l)
    for (Index k = std::max<Index>(0, l - s1); k <= std::min(d - 1, l + s2); ++k)
      maps.activation[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)] = static_cast<int>(1 + k - l + s1);
  return maps;
}

// One TT per equation, each site with its own core: type of site k in
// equation l is l.
inline SelectionMaps per_equation_maps(Index d) {
  SelectionMaps maps;
  maps.types = d;
  maps.activation.assign(static_cast<std::size_t>(d), std::vector<int>(static_cast<std::size_t>(d)));
  for (auto& row : maps.activation) std::iota(row.begin(), row.end(), 0);
  return maps;
}

class SelectionModel {
 public:
  SelectionModel() = default;
  SelectionModel(std::vector<std::vector<Core>> cores, SelectionMaps maps)
      : cores_(std::move(cores)), maps_(std::move(maps)) {
    validate();
  }

  Index order() const { return static_cast<Index>(cores_.size()); }
  Index types() const { return maps_.types; }
  Index phys() const { return cores_.at(0).at(0).phys(); }
  const SelectionMaps& maps() const { return maps_; }

  const Core& core(Index k, Index q) const {
    return cores_[static_cast<std::size_t>(k)][static_cast<std::size_t>(q)];
  }
  Core& mutable_core(Index k, Index q) { return cores_[static_cast<std::size_t>(k)][static_cast<std::size_t>(q)]; }
  const std::vector<Core>& site(Index k) const { return cores_[static_cast<std::size_t>(k)]; }
  std::vector<Core>& mutable_site(Index k) { return cores_[static_cast<std::size_t>(k)]; }

  std::vector<Index> ranks() const {
    std::vector<Index> r;
    for (Index k = 0; k + 1 < order(); ++k) r.push_back(core(k, 0).right_rank());
    return r;
  }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& s : cores_)
      for (const auto& c : s) n += c.size();
    return n;
  }

  void validate() const {
    maps_.validate();
    require_shape(!cores_.empty() && maps_.order() == order(), "SelectionModel: one map per site");
    for (Index k = 0; k < order(); ++k) {
      require_shape(static_cast<Index>(site(k).size()) == types(), "SelectionModel: one core per type");
      for (const auto& c : site(k)) {
        require_shape(c.left_rank() == site(k)[0].left_rank() && c.right_rank() == site(k)[0].right_rank() &&
                          c.phys() == site(0)[0].phys(),
                      "SelectionModel: cores of one site must share a shape");
      }
    }
    require_shape(core(0, 0).left_rank() == 1 && core(order() - 1, 0).right_rank() == 1,
                  "SelectionModel: boundary ranks must be 1");
    for (Index k = 0; k + 1 < order(); ++k)
      require_shape(core(k, 0).right_rank() == core(k + 1, 0).left_rank(), "SelectionModel: bond mismatch");
  }

 private:
  std::vector<std::vector<Core>> cores_;
  SelectionMaps maps_;
};

// A tensor train whose last core carries the equation index.
class SystemTT {
 public:
  SystemTT() = default;
  explicit SystemTT(TensorTrain tt) : tt_(std::move(tt)) {
    require_shape(tt_.right_boundary() == tt_.order(), "SystemTT: right boundary must equal the order");
  }
  Index order() const { return tt_.order(); }
  Index equations() const { return tt_.right_boundary(); }
  Index phys() const { return tt_.core(0).phys(); }
  const TensorTrain& tt() const { return tt_; }
  TensorTrain& mutable_tt() { return tt_; }
  std::vector<Index> ranks() const { return tt_.ranks(); }

 private:
  TensorTrain tt_;
};

// Per-equation coefficient tensors over the window sites l-s1 .. l+s2.
// Sites outside the chain read x = 0.
struct LocalSystem {
  Index d = 0;
  Index s1 = 1, s2 = 1;
  Basis basis = make_basis(BasisKind::legendre, 4);
  std::vector<DenseTensor> window;
  Index separation_bound = 0;

  Index window_size() const { return s1 + s2 + 1; }
  Index first_site(Index l) const { return std::max<Index>(0, l - s1); }
  Index last_site(Index l) const { return std::min(d - 1, l + s2); }
};

struct Dataset {
  Matrix X;
  Matrix Y;
  std::uint64_t seed = 0;
  double noise = 0.0;

  Index samples() const { return X.rows(); }
  Index order() const { return X.cols(); }
};

// ---------------------------------------------------------------- FPUT --

inline Vector fput_rhs(const Vector& x, const Vector& beta, const Vector& mfield) {
  const Index d = x.size();
  require_shape(beta.size() == d && mfield.size() == d, "fput_rhs: parameter length");
  const double mean = mfield.dot(x);
  Vector f(d);
  for (Index l = 0; l < d; ++l) {
    const double left = l > 0 ? x(l - 1) : 0.0;
    const double right = l + 1 < d ? x(l + 1) : 0.0;
    const double dr = right - x(l), dl = x(l) - left;
    f(l) = (right - 2.0 * x(l) + left) + beta(l) * dr * dr * dr - beta(l) * dl * dl * dl + mean;
  }
  return f;
}

namespace detail {

using Poly4 = std::array<double, 4>;

inline Poly4 mono(Index power, double c) {
  Poly4 v{0, 0, 0, 0};
  v[static_cast<std::size_t>(power)] = c;
  return v;
}

inline Poly4 add(Poly4 a, const Poly4& b) {
  for (std::size_t i = 0; i < 4; ++i) a[i] += b[i];
  return a;
}

// 4x4 transfer block of one FPUT core in the monomial basis. Rows are the
// incoming bond state, columns the outgoing one.
//   type 0: the variable is not a neighbour of the equation; only the mean
//           field term passes through (state 0 = nothing taken yet,
//           state 1 = term taken).
//   type 1: site l-1. Emits x_{l-1}^c on channel c, and on channel 3 either
//           beta x^3 or the accumulated left mean-field term.
//   type 2: site l itself; combines the channels into the right-hand side.
//   type 3: site l+1; mirror image of type 1.
// g rescales channel 3 so that beta = 0 needs no division.
inline std::array<std::array<Poly4, 4>, 4> fput_block(int type, double beta, double m_here, double m_left,
                                                     double m_right) {
  std::array<std::array<Poly4, 4>, 4> b{};
  const double g = beta != 0.0 ? beta : 1.0;
  switch (type) {
    case 0:
      b[0][0] = mono(0, 1.0);
      b[0][1] = mono(1, m_here);
      b[1][1] = mono(0, 1.0);
      break;
    case 1:
      b[0][0] = mono(0, 1.0);
      b[0][1] = mono(1, 1.0);
      b[0][2] = mono(2, 1.0);
      b[0][3] = mono(3, beta / g);
      b[1][3] = mono(0, 1.0 / g);
      break;
    case 2:
      b[0][0] = add(mono(1, -2.0 + m_here), mono(3, -2.0 * beta));
      b[0][1] = add(mono(0, 1.0 + m_right), mono(2, 3.0 * beta));
      b[0][2] = mono(1, -3.0 * beta);
      b[0][3] = mono(0, g);
      b[1][0] = add(mono(0, 1.0 + m_left), mono(2, 3.0 * beta));
      b[2][0] = mono(1, -3.0 * beta);
      b[3][0] = mono(0, g);
      break;
    case 3:
      b[0][1] = mono(0, 1.0);
      b[1][1] = mono(1, 1.0);
      b[2][1] = mono(2, 1.0);
      b[3][1] = mono(3, beta / g);
      b[3][0] = mono(0, 1.0 / g);
      break;
    default:
      break;
  }
  return b;
}

}  // namespace detail

// Ground truth of the FPUT chain as a selection model with four activation
// types and bond dimension 4. Cores are built in monomials, then converted.
inline SelectionModel fput_ground_truth(Index d, const Vector& beta, const Vector& mfield, const Basis& basis) {
  require(basis.size() == 4, "fput_ground_truth: basis size must be 4");
  require(d >= 2, "fput_ground_truth: need at least two sites");
  require_shape(beta.size() == d && mfield.size() == d, "fput_ground_truth: parameter length");
  const Matrix to_basis = basis_change_matrix(make_basis(BasisKind::monomial, 4), basis);
  constexpr Index r = 4;
  std::vector<std::vector<Core>> cores(static_cast<std::size_t>(d));
  for (Index k = 0; k < d; ++k) {
    const Index left = k == 0 ? 1 : r, right = k == d - 1 ? 1 : r;
    for (int t = 0; t < 4; ++t) {
      Core c(left, 4, right);
      const Index l = k + 2 - t;  // equation served by this type at site k
      const bool valid = t == 0 || (l >= 0 && l < d);
      if (valid) {
        const double b = t == 0 ? 0.0 : beta(l);
        const double m_here = mfield(k);
        const double m_left = k > 0 ? mfield(k - 1) : 0.0;
        const double m_right = k + 1 < d ? mfield(k + 1) : 0.0;
        const auto blk = detail::fput_block(t, b, m_here, m_left, m_right);
        const Index final_col = t == 2 ? 0 : 1;
        for (Index a = 0; a < left; ++a)
          for (Index bb = 0; bb < right; ++bb) {
            const auto& poly = blk[static_cast<std::size_t>(a)]
                                  [static_cast<std::size_t>(k == d - 1 ? final_col : bb)];
            Eigen::Map<const Eigen::Vector4d> coeff(poly.data());
            const Vector conv = to_basis * coeff;
            for (Index i = 0; i < 4; ++i) c(a, i, bb) = conv(i);
          }
      }
      cores[static_cast<std::size_t>(k)].push_back(std::move(c));
    }
  }
  return SelectionModel(std::move(cores), build_selection_tensor(d, 1, 1));
}

// ------------------------------------------------------- extraction --

inline TensorTrain equation_tt(const SelectionModel& model, Index l) {
  require(l >= 0 && l < model.order(), "equation_tt: equation index out of range");
  std::vector<Core> cores;
  for (Index k = 0; k < model.order(); ++k) cores.push_back(model.core(k, model.maps().type(k, l)));
  return TensorTrain(std::move(cores));
}

inline TensorTrain equation_tt(const SystemTT& model, Index l) {
  require(l >= 0 && l < model.equations(), "equation_tt: equation index out of range");
  std::vector<Core> cores = model.tt().cores();
  const Core& last = model.tt().core(model.order() - 1);
  Core c(last.left_rank(), last.phys(), 1);
  for (Index a = 0; a < last.left_rank(); ++a)
    for (Index i = 0; i < last.phys(); ++i) c(a, i, 0) = last(a, i, l);
  cores.back() = std::move(c);
  return TensorTrain(std::move(cores));
}

inline Index equation_count(const SelectionModel& m) { return m.order(); }
inline Index equation_count(const SystemTT& m) { return m.equations(); }

// Places a scalar train into slot l of a d-dimensional boundary leg.
inline TensorTrain embed_equation(const TensorTrain& eq, Index l, Index equations) {
  std::vector<Core> cores = eq.cores();
  const Core& last = eq.core(eq.order() - 1);
  Core c(last.left_rank(), last.phys(), equations);
  for (Index a = 0; a < last.left_rank(); ++a)
    for (Index i = 0; i < last.phys(); ++i) c(a, i, l) = last(a, i, 0);
  cores.back() = std::move(c);
  return TensorTrain(std::move(cores));
}

inline SystemTT to_single_tt(const SelectionModel& model, double rel_tol = 1e-12) {
  const Index d = model.order();
  TensorTrain sum = embed_equation(equation_tt(model, 0), 0, d);
  for (Index l = 1; l < d; ++l) sum = tt_round(tt_add(sum, embed_equation(equation_tt(model, l), l, d)), rel_tol);
  return SystemTT(d == 1 ? sum : tt_round(sum, rel_tol));
}

template <class A, class B>
double model_relative_error(const A& estimate, const B& truth) {
  const Index d = equation_count(truth);
  require_shape(equation_count(estimate) == d, "model_relative_error: equation count mismatch");
  double num = 0.0, den = 0.0;
  for (Index l = 0; l < d; ++l) {
    const TensorTrain a = equation_tt(estimate, l), b = equation_tt(truth, l);
    const double diff = tt_distance(a, b);
    num += diff * diff;
    den += tt_inner(b, b);
  }
  if (!(den > 0.0)) throw std::invalid_argument("model_relative_error: truth has zero norm");
  return std::sqrt(num / den);
}

// ------------------------------------------------------- evaluation --

namespace detail {

// Row j holds the row-major r_left x r_right matrix sum_i psi(j, i) A[:, i, :].
inline RowMatrix transfer_matrices(const Core& c, const RowMatrix& psi) {
  const Index p = c.phys(), rl = c.left_rank(), rr = c.right_rank();
  RowMatrix rearranged(p, rl * rr);
  for (Index a = 0; a < rl; ++a)
    for (Index i = 0; i < p; ++i) rearranged.row(i).segment(a * rr, rr) = c.left_unfolding().row(a * p + i);
  return psi * rearranged;
}

// Left stack step for selection models: rows (j, l) of v are multiplied by
// the transfer matrix of the type that site k has in equation l.
inline RowMatrix advance_left(const RowMatrix& v, const RowMatrix& psi, const std::vector<Core>& site,
                              const std::vector<int>& act) {
  const Index m = psi.rows(), d = static_cast<Index>(act.size());
  const Index rl = site[0].left_rank(), rr = site[0].right_rank();
  std::vector<RowMatrix> t(site.size());
  std::vector<bool> used(site.size(), false);
  for (int q : act) used[static_cast<std::size_t>(q)] = true;
  for (std::size_t q = 0; q < site.size(); ++q)
    if (used[q]) t[q] = transfer_matrices(site[q], psi);
  RowMatrix out(m * d, rr);
  for (Index j = 0; j < m; ++j)
    for (Index l = 0; l < d; ++l) {
      const auto& tq = t[static_cast<std::size_t>(act[static_cast<std::size_t>(l)])];
      Eigen::Map<const RowMatrix> mj(tq.row(j).data(), rl, rr);
      out.row(j * d + l).noalias() = v.row(j * d + l) * mj;
    }
  return out;
}

inline RowMatrix advance_right(const RowMatrix& v, const RowMatrix& psi, const std::vector<Core>& site,
                               const std::vector<int>& act) {
  const Index m = psi.rows(), d = static_cast<Index>(act.size());
  const Index rl = site[0].left_rank(), rr = site[0].right_rank();
  std::vector<RowMatrix> t(site.size());
  std::vector<bool> used(site.size(), false);
  for (int q : act) used[static_cast<std::size_t>(q)] = true;
  for (std::size_t q = 0; q < site.size(); ++q)
    if (used[q]) t[q] = transfer_matrices(site[q], psi);
  RowMatrix out(m * d, rl);
  for (Index j = 0; j < m; ++j)
    for (Index l = 0; l < d; ++l) {
      const auto& tq = t[static_cast<std::size_t>(act[static_cast<std::size_t>(l)])];
      Eigen::Map<const RowMatrix> mj(tq.row(j).data(), rl, rr);
      out.row(j * d + l).noalias() = v.row(j * d + l) * mj.transpose();
    }
  return out;
}

// Train stacks: the left side does not depend on the equation.
inline RowMatrix advance_left_train(const RowMatrix& v, const RowMatrix& psi, const Core& c) {
  const Index m = psi.rows(), rl = c.left_rank(), rr = c.right_rank();
  const RowMatrix t = transfer_matrices(c, psi);
  RowMatrix out(m, rr);
  for (Index j = 0; j < m; ++j) {
    Eigen::Map<const RowMatrix> mj(t.row(j).data(), rl, rr);
    out.row(j).noalias() = v.row(j) * mj;
  }
  return out;
}

// Right stack of a train with rows (j, l); rows_per_sample = d.
inline RowMatrix advance_right_train(const RowMatrix& v, const RowMatrix& psi, const Core& c,
                                     Index rows_per_sample) {
  const Index m = psi.rows(), rl = c.left_rank(), rr = c.right_rank();
  const RowMatrix t = transfer_matrices(c, psi);
  RowMatrix out(m * rows_per_sample, rl);
  for (Index j = 0; j < m; ++j) {
    Eigen::Map<const RowMatrix> mj(t.row(j).data(), rl, rr);
    out.middleRows(j * rows_per_sample, rows_per_sample).noalias() =
        v.middleRows(j * rows_per_sample, rows_per_sample) * mj.transpose();
  }
  return out;
}

inline void check_dictionary(Index order, Index phys, const DictionaryStack& psi) {
  require_shape(psi.order() == order, "evaluate: dictionary order mismatch");
  require_shape(psi.basis_size() == phys, "evaluate: dictionary basis size mismatch");
}

}  // namespace detail

// Y[j, l] = f_l(x^j) via left-to-right stack contraction.
inline Matrix evaluate_model(const SelectionModel& model, const DictionaryStack& psi) {
  detail::check_dictionary(model.order(), model.phys(), psi);
  const Index m = psi.samples(), d = model.order();
  RowMatrix v = RowMatrix::Ones(m * d, 1);
  for (Index k = 0; k < d; ++k)
    v = detail::advance_left(v, psi[k], model.site(k), model.maps().activation[static_cast<std::size_t>(k)]);
  Matrix y(m, d);
  for (Index j = 0; j < m; ++j)
    for (Index l = 0; l < d; ++l) y(j, l) = v(j * d + l, 0);
  return y;
}

inline Matrix evaluate_tt(const TensorTrain& tt, const DictionaryStack& psi) {
  detail::check_dictionary(tt.order(), tt.core(0).phys(), psi);
  RowMatrix v = RowMatrix::Ones(psi.samples(), 1);
  for (Index k = 0; k < tt.order(); ++k) v = detail::advance_left_train(v, psi[k], tt.core(k));
  return Matrix(v);
}

inline Matrix evaluate_model(const SystemTT& model, const DictionaryStack& psi) {
  return evaluate_tt(model.tt(), psi);
}

// ------------------------------------------------ random local systems --

// Window tensor of equation l with the rows of sites off the chain folded
// in at x = 0. Returns the tensor over the in-range window sites.
inline DenseTensor folded_window(const LocalSystem& sys, Index l) {
  const Index p = sys.basis.size(), w = sys.window_size();
  const Index a = sys.first_site(l), b = sys.last_site(l);
  const Index offset = a - (l - sys.s1);
  const Index len = b - a + 1;
  const Vector at_zero = sys.basis.evaluate(0.0);
  DenseTensor out(std::vector<Index>(static_cast<std::size_t>(len), p));
  const DenseTensor& c = sys.window[static_cast<std::size_t>(l)];
  std::vector<Index> idx(static_cast<std::size_t>(w), 0);
  for (Index flat = 0; flat < c.size(); ++flat) {
    Index rem = flat;
    for (Index pos = w - 1; pos >= 0; --pos) {
      idx[static_cast<std::size_t>(pos)] = rem % p;
      rem /= p;
    }
    if (c[flat] == 0.0) continue;
    double weight = c[flat];
    Index target = 0;
    for (Index pos = 0; pos < w; ++pos) {
      const Index i = idx[static_cast<std::size_t>(pos)];
      if (pos < offset || pos >= offset + len)
        weight *= at_zero(i);
      else
        target = target * p + i;
    }
    out[target] += weight;
  }
  return out;
}

// Dense p^d coefficient tensor of equation l; the constant function sits in
// slot 0 of every site outside the window.
inline DenseTensor dense_equation_tensor(const LocalSystem& sys, Index l) {
  const Index p = sys.basis.size(), d = sys.d;
  const DenseTensor win = folded_window(sys, l);
  const Index a = sys.first_site(l), len = win.order();
  DenseTensor out(std::vector<Index>(static_cast<std::size_t>(d), p));
  std::vector<Index> idx(static_cast<std::size_t>(d), 0);
  for (Index flat = 0; flat < win.size(); ++flat) {
    Index rem = flat;
    for (Index pos = len - 1; pos >= 0; --pos) {
      idx[static_cast<std::size_t>(a + pos)] = rem % p;
      rem /= p;
    }
    out.at(std::span<const Index>(idx)) = win[flat];
  }
  return out;
}

inline Vector evaluate_local_system(const LocalSystem& sys, const Vector& x) {
  const Index p = sys.basis.size(), w = sys.window_size();
  Vector f = Vector::Zero(sys.d);
  RowMatrix vals(w, p);
  for (Index l = 0; l < sys.d; ++l) {
    for (Index pos = 0; pos < w; ++pos) {
      const Index site = l - sys.s1 + pos;
      sys.basis.evaluate(site >= 0 && site < sys.d ? x(site) : 0.0, vals.row(pos).data());
    }
    const DenseTensor& c = sys.window[static_cast<std::size_t>(l)];
    double acc = 0.0;
    for (Index flat = 0; flat < c.size(); ++flat) {
      if (c[flat] == 0.0) continue;
      Index rem = flat;
      double term = c[flat];
      for (Index pos = w - 1; pos >= 0; --pos) {
        term *= vals(pos, rem % p);
        rem /= p;
      }
      acc += term;
    }
    f(l) = acc;
  }
  return f;
}

inline LocalSystem random_local_system(Index d, Index nnz, std::uint64_t seed, const Basis& basis, Index s1 = 1,
                                       Index s2 = 1) {
  LocalSystem sys;
  sys.d = d;
  sys.s1 = s1;
  sys.s2 = s2;
  sys.basis = basis;
  sys.separation_bound = nnz;
  const Index p = basis.size(), w = sys.window_size();
  Index total = 1;
  for (Index i = 0; i < w; ++i) total *= p;
  require(d >= 1, "random_local_system: need at least one site");
  require(nnz > 0 && nnz <= total, "random_local_system: nnz out of range");
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<Index> support(static_cast<std::size_t>(total));
  for (Index l = 0; l < d; ++l) {
    std::iota(support.begin(), support.end(), Index{0});
    // partial Fisher-Yates: the first nnz entries become a uniform sample
    for (Index i = 0; i < nnz; ++i) {
      std::uniform_int_distribution<Index> pick(i, total - 1);
      std::swap(support[static_cast<std::size_t>(i)], support[static_cast<std::size_t>(pick(rng))]);
    }
    DenseTensor c(std::vector<Index>(static_cast<std::size_t>(w), p));
    for (Index i = 0; i < nnz; ++i) c[support[static_cast<std::size_t>(i)]] = unif(rng);
    sys.window.push_back(std::move(c));
  }
  return sys;
}

// Equation l of a local system as a scalar train: TT-SVD of the folded
// window, constant cores elsewhere.
inline TensorTrain equation_tt(const LocalSystem& sys, Index l, double rel_tol = 0.0) {
  const Index p = sys.basis.size();
  const Index a = sys.first_site(l), b = sys.last_site(l);
  const TensorTrain win = tt_from_dense(folded_window(sys, l), rel_tol);
  std::vector<Core> cores;
  for (Index k = 0; k < sys.d; ++k) {
    if (k >= a && k <= b) {
      cores.push_back(win.core(k - a));
    } else {
      Core c(1, p, 1);
      c(0, 0, 0) = 1.0;
      cores.push_back(std::move(c));
    }
  }
  return TensorTrain(std::move(cores));
}

inline Index equation_count(const LocalSystem& s) { return s.d; }

// Selection model for a local system: window cores embedded into common
// bond dimensions, bond slot 0 carrying the constant outside the window.
inline SelectionModel to_selection_model(const LocalSystem& sys, double rel_tol = 0.0) {
  const Index d = sys.d, p = sys.basis.size();
  const SelectionMaps maps = build_selection_tensor(d, sys.s1, sys.s2);
  std::vector<TensorTrain> eqs;
  std::vector<Index> bond(static_cast<std::size_t>(std::max<Index>(d - 1, 0)), 1);
  for (Index l = 0; l < d; ++l) {
    eqs.push_back(equation_tt(sys, l, rel_tol));
    const auto r = eqs.back().ranks();
    for (std::size_t k = 0; k < r.size(); ++k) bond[k] = std::max(bond[k], r[k]);
  }
  std::vector<std::vector<Core>> cores(static_cast<std::size_t>(d));
  for (Index k = 0; k < d; ++k) {
    const Index left = k == 0 ? 1 : bond[static_cast<std::size_t>(k - 1)];
    const Index right = k == d - 1 ? 1 : bond[static_cast<std::size_t>(k)];
    for (Index q = 0; q < maps.types; ++q) {
      Core c(left, p, right);
      if (q == 0) c(0, 0, 0) = 1.0;
      cores[static_cast<std::size_t>(k)].push_back(std::move(c));
    }
  }
  for (Index l = 0; l < d; ++l) {
    for (Index k = sys.first_site(l); k <= sys.last_site(l); ++k) {
      const Core& src = eqs[static_cast<std::size_t>(l)].core(k);
      Core& dst = cores[static_cast<std::size_t>(k)][static_cast<std::size_t>(maps.type(k, l))];
      for (Index a = 0; a < src.left_rank(); ++a)
        for (Index i = 0; i < p; ++i)
          for (Index b = 0; b < src.right_rank(); ++b) dst(a, i, b) = src(a, i, b);
    }
  }
  return SelectionModel(std::move(cores), maps);
}

// ------------------------------------------------- random initial models --

inline SelectionModel random_selection_model(const SelectionMaps& maps, const std::vector<Index>& ranks, Index p,
                                             Rng& rng) {
  const Index d = maps.order();
  require_shape(static_cast<Index>(ranks.size()) == d - 1, "random_selection_model: need d-1 ranks");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<Core>> cores(static_cast<std::size_t>(d));
  for (Index k = 0; k < d; ++k) {
    const Index left = k == 0 ? 1 : ranks[static_cast<std::size_t>(k - 1)];
    const Index right = k == d - 1 ? 1 : ranks[static_cast<std::size_t>(k)];
    for (Index q = 0; q < maps.types; ++q) {
      Core c(left, p, right);
      for (Index n = 0; n < c.size(); ++n) c.as_vector()(n) = normal(rng);
      cores[static_cast<std::size_t>(k)].push_back(std::move(c));
    }
  }
  return SelectionModel(std::move(cores), maps);
}

inline SystemTT random_system_tt(Index d, const std::vector<Index>& ranks, Index p, Rng& rng) {
  require_shape(static_cast<Index>(ranks.size()) == d - 1, "random_system_tt: need d-1 ranks");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Core> cores;
  for (Index k = 0; k < d; ++k) {
    const Index left = k == 0 ? 1 : ranks[static_cast<std::size_t>(k - 1)];
    const Index right = k == d - 1 ? d : ranks[static_cast<std::size_t>(k)];
    Core c(left, p, right);
    for (Index n = 0; n < c.size(); ++n) c.as_vector()(n) = normal(rng);
    cores.push_back(std::move(c));
  }
  return SystemTT(TensorTrain(std::move(cores)));
}

}  // namespace ttsysid
