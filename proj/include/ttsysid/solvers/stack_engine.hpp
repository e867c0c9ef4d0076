#pragma once

#include "ttsysid/core.hpp"
#include "ttsysid/dictionary.hpp"
#include "ttsysid/models.hpp"
#include "ttsysid/solvers/local_solve.hpp"
#include "ttsysid/tensor_train.hpp"

#include <utility>
#include <vector>

namespace ttsysid {

namespace detail {

// Flattens Y (m x d) into the (j, l) row order used by the stacks.
inline Vector stack_rows(const Matrix& y) {
  Vector v(y.size());
  const Index d = y.cols();
  for (Index j = 0; j < y.rows(); ++j)
    for (Index l = 0; l < d; ++l) v(j * d + l) = y(j, l);
  return v;
}

inline constexpr Index kAssemblyChunk = 1024;

}  // namespace detail

// Cached partial contractions for a selection model. left(k) has rows (j, l)
// and r_{k-1} columns: the contraction of sites 0..k-1 for sample j under the
// activation pattern of equation l. right(k) is the same for sites k..d-1.
// The orthogonality centre sits at center(); all other sites are kept
// isometric in the sweep direction.
class SelectionStackEngine {
 public:
  SelectionStackEngine(SelectionModel model, DictionaryStack psi, const Matrix& y)
      : model_(std::move(model)), psi_(std::move(psi)), y_(detail::stack_rows(y)), m_(y.rows()), d_(y.cols()) {
    require_shape(model_.order() == d_ && psi_.order() == d_ && psi_.samples() == m_,
                  "SelectionStackEngine: model, dictionary and data disagree");
    require_shape(psi_.basis_size() == model_.phys(), "SelectionStackEngine: basis size mismatch");
    orthogonalize_right_of(0);
    rebuild();
  }

  Index order() const { return d_; }
  Index samples() const { return m_; }
  Index center() const { return center_; }
  const SelectionModel& model() const { return model_; }
  const DictionaryStack& dictionary() const { return psi_; }
  const Vector& targets() const { return y_; }
  const RowMatrix& left(Index k) const { return left_[static_cast<std::size_t>(k)]; }
  const RowMatrix& right(Index k) const { return right_[static_cast<std::size_t>(k)]; }

  void rebuild() {
    left_.assign(static_cast<std::size_t>(d_ + 1), RowMatrix());
    right_.assign(static_cast<std::size_t>(d_ + 1), RowMatrix());
    left_[0] = RowMatrix::Ones(m_ * d_, 1);
    right_[static_cast<std::size_t>(d_)] = RowMatrix::Ones(m_ * d_, 1);
    for (Index k = 0; k < center_; ++k) refresh_left(k);
    for (Index k = d_ - 1; k > center_; --k) refresh_right(k);
  }

  void refresh_left(Index k) {
    left_[static_cast<std::size_t>(k + 1)] =
        detail::advance_left(left(k), psi_[k], model_.site(k), activation(k));
  }
  void refresh_right(Index k) {
    right_[static_cast<std::size_t>(k)] =
        detail::advance_right(right(k + 1), psi_[k], model_.site(k), activation(k));
  }

  // One normal system per activation type at site k (rows of equations whose
  // variable k has that type). With factored set, each system also carries
  // the triangular factor of its design matrix, at several times the cost.
  std::vector<NormalEquations> assemble(Index k, bool factored = false) const {
    const Index p = psi_.basis_size();
    const Index rl = model_.core(k, 0).left_rank(), rr = model_.core(k, 0).right_rank();
    const Index dim = rl * p * rr;
    const Index n = model_.types();
    std::vector<NormalEquations> out(static_cast<std::size_t>(n));
    if (!factored)
      for (auto& ne : out) {
        ne.H = Matrix::Zero(dim, dim);
        ne.b = Vector::Zero(dim);
      }
    const RowMatrix& lk = left(k);
    const RowMatrix& rk = right(k + 1);
    const RowMatrix& psi = psi_[k];
    const auto& act = activation(k);
    Matrix g(dim, detail::kAssemblyChunk);
    Vector yc(detail::kAssemblyChunk);
    for (Index q = 0; q < n; ++q) {
      NormalEquations& ne = out[static_cast<std::size_t>(q)];
      detail::QrAccumulator acc(factored ? dim : 0);
      Index filled = 0;
      auto flush = [&] {
        if (filled == 0) return;
        if (factored) {
          acc.add(g.leftCols(filled), yc.head(filled));
        } else {
          ne.H.selfadjointView<Eigen::Lower>().rankUpdate(g.leftCols(filled));
          ne.b.noalias() += g.leftCols(filled) * yc.head(filled);
          ne.yy += yc.head(filled).squaredNorm();
          ne.rows += filled;
        }
        filled = 0;
      };
      for (Index l = 0; l < d_; ++l) {
        if (act[static_cast<std::size_t>(l)] != q) continue;
        for (Index j = 0; j < m_; ++j) {
          const Index row = j * d_ + l;
          double* col = g.col(filled).data();
          for (Index a = 0; a < rl; ++a) {
            const double la = lk(row, a);
            for (Index i = 0; i < p; ++i) {
              const double w = la * psi(j, i);
              double* dst = col + (a * p + i) * rr;
              for (Index b = 0; b < rr; ++b) dst[b] = w * rk(row, b);
            }
          }
          yc(filled) = y_(row);
          if (++filled == detail::kAssemblyChunk) flush();
        }
      }
      flush();
      if (factored) acc.finish(ne);
    }
    return out;
  }

  void set_site(Index k, std::vector<Core> cores) {
    require_shape(static_cast<Index>(cores.size()) == model_.types(), "set_site: one core per type");
    model_.mutable_site(k) = std::move(cores);
  }

  // Prediction for rows (j, l) with site k contracted between the stacks.
  Vector predict() const {
    const Index k = center_;
    const auto& site = model_.site(k);
    const auto& act = activation(k);
    std::vector<RowMatrix> t;
    for (const auto& c : site) t.push_back(detail::transfer_matrices(c, psi_[k]));
    const Index rl = site[0].left_rank(), rr = site[0].right_rank();
    Vector out(m_ * d_);
    for (Index j = 0; j < m_; ++j)
      for (Index l = 0; l < d_; ++l) {
        const Index row = j * d_ + l;
        Eigen::Map<const RowMatrix> mj(t[static_cast<std::size_t>(act[static_cast<std::size_t>(l)])].row(j).data(), rl,
                                       rr);
        out(row) = left(k).row(row) * mj * right(k + 1).row(row).transpose();
      }
    return out;
  }

  double residual_norm() const { return (predict() - y_).norm(); }

  double center_norm() const {
    double s = 0.0;
    for (const auto& c : model_.site(center_)) s += c.squared_norm();
    return std::sqrt(s);
  }

  // QR of the type-stacked left unfoldings at k, R pushed into site k+1.
  void move_right() {
    const Index k = center_;
    require(k + 1 < d_, "move_right: already at the last site");
    auto& site = model_.mutable_site(k);
    const Index n = model_.types();
    const Index rows = site[0].left_rank() * site[0].phys(), rr = site[0].right_rank();
    Matrix stacked(n * rows, rr);
    for (Index q = 0; q < n; ++q) stacked.middleRows(q * rows, rows) = site[static_cast<std::size_t>(q)].left_unfolding();
    auto [qm, r] = detail::thin_qr(stacked);
    const Index rnew = qm.cols();
    for (Index q = 0; q < n; ++q)
      site[static_cast<std::size_t>(q)] =
          Core(site[0].left_rank(), site[0].phys(), rnew, RowMatrix(qm.middleRows(q * rows, rows)));
    for (auto& c : model_.mutable_site(k + 1)) {
      const RowMatrix next = r * c.right_unfolding();
      c = Core::from_right_unfolding(c.phys(), next);
    }
    refresh_left(k);
    center_ = k + 1;
  }

  // LQ of the type-concatenated right unfoldings at k, L pushed into k-1.
  void move_left() {
    const Index k = center_;
    require(k > 0, "move_left: already at the first site");
    auto& site = model_.mutable_site(k);
    const Index n = model_.types();
    const Index rl = site[0].left_rank(), cols = site[0].phys() * site[0].right_rank();
    Matrix stacked(n * cols, rl);
    for (Index q = 0; q < n; ++q)
      stacked.middleRows(q * cols, cols) = site[static_cast<std::size_t>(q)].right_unfolding().transpose();
    auto [qm, r] = detail::thin_qr(stacked);
    for (Index q = 0; q < n; ++q) {
      const RowMatrix block = qm.middleRows(q * cols, cols).transpose();
      site[static_cast<std::size_t>(q)] = Core::from_right_unfolding(site[0].phys(), block);
    }
    for (auto& c : model_.mutable_site(k - 1)) {
      RowMatrix prev = c.left_unfolding() * r.transpose();
      const Index rnew = prev.cols();
      c = Core(c.left_rank(), c.phys(), rnew, std::move(prev));
    }
    refresh_right(k);
    center_ = k - 1;
  }

 private:
  const std::vector<int>& activation(Index k) const {
    return model_.maps().activation[static_cast<std::size_t>(k)];
  }

  // LQ sweep from the right end down to site, without stacks.
  void orthogonalize_right_of(Index site) {
    for (Index k = d_ - 1; k > site; --k) {
      auto& cur = model_.mutable_site(k);
      const Index n = model_.types();
      const Index rl = cur[0].left_rank(), cols = cur[0].phys() * cur[0].right_rank();
      Matrix stacked(n * cols, rl);
      for (Index q = 0; q < n; ++q)
        stacked.middleRows(q * cols, cols) = cur[static_cast<std::size_t>(q)].right_unfolding().transpose();
      auto [qm, r] = detail::thin_qr(stacked);
      for (Index q = 0; q < n; ++q) {
        const RowMatrix block = qm.middleRows(q * cols, cols).transpose();
        cur[static_cast<std::size_t>(q)] = Core::from_right_unfolding(cur[0].phys(), block);
      }
      for (auto& c : model_.mutable_site(k - 1)) {
        RowMatrix prev = c.left_unfolding() * r.transpose();
        const Index rnew = prev.cols();
        c = Core(c.left_rank(), c.phys(), rnew, std::move(prev));
      }
    }
    center_ = site;
  }

  SelectionModel model_;
  DictionaryStack psi_;
  Vector y_;
  Index m_, d_;
  Index center_ = 0;
  std::vector<RowMatrix> left_, right_;
};

// Stacks for a single train with the equation leg on its last core. left(k)
// is m x r_{k-1} (independent of the equation); right(k) has rows (j, l).
class TrainStackEngine {
 public:
  TrainStackEngine(SystemTT model, DictionaryStack psi, const Matrix& y)
      : tt_(std::move(model.mutable_tt())), psi_(std::move(psi)), y_(detail::stack_rows(y)), m_(y.rows()),
        d_(y.cols()) {
    require_shape(tt_.order() == d_ && tt_.right_boundary() == d_ && psi_.order() == d_ && psi_.samples() == m_,
                  "TrainStackEngine: model, dictionary and data disagree");
    require_shape(psi_.basis_size() == tt_.core(0).phys(), "TrainStackEngine: basis size mismatch");
    tt_ = tt_orthogonalize(std::move(tt_), 0);
    rebuild();
  }

  Index order() const { return d_; }
  Index samples() const { return m_; }
  Index center() const { return center_; }
  SystemTT model() const { return SystemTT(tt_); }
  const TensorTrain& train() const { return tt_; }
  const DictionaryStack& dictionary() const { return psi_; }
  const Vector& targets() const { return y_; }
  const RowMatrix& left(Index k) const { return left_[static_cast<std::size_t>(k)]; }
  const RowMatrix& right(Index k) const { return right_[static_cast<std::size_t>(k)]; }

  void rebuild() {
    left_.assign(static_cast<std::size_t>(d_ + 1), RowMatrix());
    right_.assign(static_cast<std::size_t>(d_ + 1), RowMatrix());
    left_[0] = RowMatrix::Ones(m_, 1);
    RowMatrix eye = RowMatrix::Zero(m_ * d_, d_);
    for (Index j = 0; j < m_; ++j)
      for (Index l = 0; l < d_; ++l) eye(j * d_ + l, l) = 1.0;
    right_[static_cast<std::size_t>(d_)] = std::move(eye);
    for (Index k = 0; k < center_; ++k) refresh_left(k);
    for (Index k = d_ - 1; k > center_; --k) refresh_right(k);
  }

  void refresh_left(Index k) {
    left_[static_cast<std::size_t>(k + 1)] = detail::advance_left_train(left(k), psi_[k], tt_.core(k));
  }
  void refresh_right(Index k) {
    right_[static_cast<std::size_t>(k)] = detail::advance_right_train(right(k + 1), psi_[k], tt_.core(k), d_);
  }

  // Normal equations for core k. With u_j = left_j (x) psi_j and
  // K_j = sum_l R_jl R_jl^T, the Gram matrix is sum_j (u_j u_j^T) (x) K_j, which
  // costs m (r p)^2 r^2 instead of m d (r p r)^2.
  NormalEquations assemble(Index k) const {
    const Index p = psi_.basis_size();
    const Index rl = tt_.core(k).left_rank(), rr = tt_.core(k).right_rank();
    const Index na = rl * p, nb = rr;
    const RowMatrix& lk = left(k);
    const RowMatrix& rk = right(k + 1);
    const RowMatrix& psi = psi_[k];
    Matrix u(m_, na), z(m_, na * na), w(m_, nb * nb), zy(m_, nb);
    for (Index j = 0; j < m_; ++j) {
      for (Index a = 0; a < rl; ++a)
        for (Index i = 0; i < p; ++i) u(j, a * p + i) = lk(j, a) * psi(j, i);
      for (Index al = 0; al < na; ++al)
        for (Index be = 0; be < na; ++be) z(j, al * na + be) = u(j, al) * u(j, be);
      const auto block = rk.middleRows(j * d_, d_);
      const RowMatrix kmat = block.transpose() * block;
      for (Index a = 0; a < nb; ++a)
        for (Index b = 0; b < nb; ++b) w(j, a * nb + b) = kmat(a, b);
      zy.row(j) = y_.segment(j * d_, d_).transpose() * block;
    }
    const Matrix h4 = z.transpose() * w;
    NormalEquations ne;
    const Index dim = na * nb;
    ne.H.resize(dim, dim);
    for (Index al = 0; al < na; ++al)
      for (Index be = 0; be < na; ++be)
        for (Index a = 0; a < nb; ++a)
          for (Index b = 0; b < nb; ++b) ne.H(al * nb + a, be * nb + b) = h4(al * na + be, a * nb + b);
    const Matrix bm = u.transpose() * zy;
    ne.b.resize(dim);
    for (Index al = 0; al < na; ++al)
      for (Index a = 0; a < nb; ++a) ne.b(al * nb + a) = bm(al, a);
    ne.yy = y_.squaredNorm();
    ne.rows = m_ * d_;
    return ne;
  }

  void set_core(Index k, Core c) {
    const auto center = tt_.center();
    tt_.mutable_core(k) = std::move(c);
    tt_.set_center(center);
  }

  Vector predict() const {
    const Index k = center_;
    const Core& c = tt_.core(k);
    const RowMatrix t = detail::transfer_matrices(c, psi_[k]);
    Vector out(m_ * d_);
    for (Index j = 0; j < m_; ++j) {
      Eigen::Map<const RowMatrix> mj(t.row(j).data(), c.left_rank(), c.right_rank());
      const Eigen::RowVectorXd lm = left(k).row(j) * mj;
      out.segment(j * d_, d_).noalias() = right(k + 1).middleRows(j * d_, d_) * lm.transpose();
    }
    return out;
  }

  double residual_norm() const { return (predict() - y_).norm(); }
  double center_norm() const { return std::sqrt(tt_.core(center_).squared_norm()); }

  void move_right() {
    const Index k = center_;
    require(k + 1 < d_, "move_right: already at the last site");
    auto& cores = tt_.mutable_cores();
    auto [q, r] = detail::thin_qr(cores[k].left_unfolding());
    const Index left = cores[k].left_rank(), p = cores[k].phys(), rnew = q.cols();
    cores[k] = Core(left, p, rnew, RowMatrix(q));
    const RowMatrix next = r * cores[k + 1].right_unfolding();
    cores[k + 1] = Core::from_right_unfolding(cores[k + 1].phys(), next);
    refresh_left(k);
    center_ = k + 1;
    tt_.set_center(center_);
  }

  void move_left() {
    const Index k = center_;
    require(k > 0, "move_left: already at the first site");
    auto& cores = tt_.mutable_cores();
    auto [q, r] = detail::thin_qr(cores[k].right_unfolding().transpose());
    const RowMatrix qt = q.transpose();
    cores[k] = Core::from_right_unfolding(cores[k].phys(), qt);
    RowMatrix prev = cores[k - 1].left_unfolding() * r.transpose();
    const Index rnew = prev.cols();
    cores[k - 1] = Core(cores[k - 1].left_rank(), cores[k - 1].phys(), rnew, std::move(prev));
    refresh_right(k);
    center_ = k - 1;
    tt_.set_center(center_);
  }

  // Direct access for the rank-adaptive solver, which changes bond
  // dimensions itself. The caller is responsible for stack refreshes.
  TensorTrain& mutable_train() { return tt_; }
  void set_center_index(Index k) {
    center_ = k;
    tt_.set_center(k);
  }
  RowMatrix& mutable_left(Index k) { return left_[static_cast<std::size_t>(k)]; }
  RowMatrix& mutable_right(Index k) { return right_[static_cast<std::size_t>(k)]; }

 private:
  TensorTrain tt_;
  DictionaryStack psi_;
  Vector y_;
  Index m_, d_;
  Index center_ = 0;
  std::vector<RowMatrix> left_, right_;
};

}  // namespace ttsysid
