#pragma once

#include "ttsysid/models.hpp"
#include "ttsysid/rng.hpp"
#include "ttsysid/solvers/als.hpp"
#include "ttsysid/solvers/config.hpp"
#include "ttsysid/solvers/local_solve.hpp"
#include "ttsysid/solvers/stack_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

#include <Eigen/SVD>

namespace ttsysid {

// theta = left * center * right, with the boundary leg of the last core
// multiplied by leg (the identity unless k is the last site). left is
// left-orthonormal and right right-orthonormal; sigma_left holds the singular
// values of the split before site k, sigma_right those of the split after it,
// and both are diagonal in the bases of the neighbouring cores.
struct SalsaDecomposition {
  Index site = 0;
  std::vector<Core> left;
  Vector sigma_left;
  Core center;
  Vector sigma_right;
  std::vector<Core> right;
  Matrix leg;

  SystemTT recombine() const {
    std::vector<Core> cores = left;
    cores.push_back(center);
    cores.insert(cores.end(), right.begin(), right.end());
    Core& last = cores.back();
    RowMatrix lu = last.left_unfolding() * leg;
    const Index r = lu.cols();
    last = Core(last.left_rank(), last.phys(), r, std::move(lu));
    return SystemTT(TensorTrain(std::move(cores)));
  }
};

namespace detail {

// Full (square) singular bases of the two unfoldings of a centre core.
struct CenterBases {
  Matrix u_left;    // r_l x r_l
  Vector s_left;    // length r_l, zero padded
  Matrix v_right;   // r_r x r_r
  Vector s_right;   // length r_r, zero padded
};

inline CenterBases center_bases(const Core& c) {
  CenterBases out;
  {
    Eigen::JacobiSVD<Matrix> svd(Matrix(c.right_unfolding()), Eigen::ComputeFullU);
    out.u_left = c.left_rank() == 1 ? Matrix::Identity(1, 1) : svd.matrixU();
    out.s_left = Vector::Zero(c.left_rank());
    out.s_left.head(svd.singularValues().size()) = svd.singularValues();
  }
  {
    Eigen::JacobiSVD<Matrix> svd(Matrix(c.left_unfolding()), Eigen::ComputeFullV);
    out.v_right = c.right_rank() == 1 ? Matrix::Identity(1, 1) : svd.matrixV();
    out.s_right = Vector::Zero(c.right_rank());
    out.s_right.head(svd.singularValues().size()) = svd.singularValues();
  }
  return out;
}

// n(a', i, b') = sum_{a, b} u(a, a') c(a, i, b) v(b, b')
inline Core rotate_core(const Core& c, const Matrix& u, const Matrix& v) {
  const Index rl = c.left_rank(), p = c.phys(), rr = c.right_rank();
  RowMatrix tmp(rl, p * rr);
  tmp = u.transpose() * c.right_unfolding();
  Core mid = Core::from_right_unfolding(p, tmp);
  RowMatrix lu = mid.left_unfolding() * v;
  return Core(rl, p, rr, std::move(lu));
}

// Q = u (x) I_p (x) v, mapping rotated coordinates to the original ones.
inline Matrix rotation_operator(const Matrix& u, Index p, const Matrix& v) {
  const Index rl = u.rows(), rr = v.rows(), n = rl * p * rr;
  Matrix q = Matrix::Zero(n, n);
  for (Index a = 0; a < rl; ++a)
    for (Index a2 = 0; a2 < rl; ++a2) {
      const double ua = u(a, a2);
      if (ua == 0.0) continue;
      for (Index i = 0; i < p; ++i)
        q.block((a * p + i) * rr, (a2 * p + i) * rr, rr, rr).noalias() = ua * v;
    }
  return q;
}

// Columns orthonormal to those of basis (which must be orthonormal).
inline Matrix orthonormal_complement(const Matrix& basis, Index n, Index count, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix w(n, count);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
  for (int pass = 0; pass < 2; ++pass) {
    if (basis.cols() > 0) w -= basis * (basis.transpose() * w);
    for (Index j = 0; j < count; ++j) {
      if (j > 0) w.col(j) -= w.leftCols(j) * (w.leftCols(j).transpose() * w.col(j));
      const double nrm = w.col(j).norm();
      require(nrm > 1e-12, "orthonormal_complement: space exhausted");
      w.col(j) /= nrm;
    }
  }
  return w;
}

inline Index saturating_pow(Index base, Index exp) {
  Index r = 1;
  for (Index i = 0; i < exp; ++i) {
    if (r > (std::numeric_limits<Index>::max() / 4) / std::max<Index>(base, 1)) return std::numeric_limits<Index>::max() / 4;
    r *= base;
  }
  return r;
}

// Largest meaningful rank of bond b (between sites b and b+1).
inline Index bond_capacity(Index b, Index d, Index p, Index legs) {
  const Index left = saturating_pow(p, b + 1);
  const Index right = saturating_pow(p, d - 1 - b);
  return std::min(left, right > std::numeric_limits<Index>::max() / 4 / legs ? right : right * legs);
}

// Index selection: every singular value above eps survives; the remaining
// slots are drawn at random from the others.
inline std::vector<Index> choose_slots(const Vector& s, double eps, Index keep, Rng& rng) {
  std::vector<Index> above, below;
  for (Index i = 0; i < s.size(); ++i) (s(i) > eps ? above : below).push_back(i);
  std::vector<Index> out = above;
  if (static_cast<Index>(out.size()) < keep) {
    std::shuffle(below.begin(), below.end(), rng);
    below.resize(static_cast<std::size_t>(keep - static_cast<Index>(out.size())));
    std::sort(below.begin(), below.end());
    out.insert(out.end(), below.begin(), below.end());
  }
  out.resize(static_cast<std::size_t>(std::min<Index>(keep, static_cast<Index>(out.size()))));
  std::sort(out.begin(), out.end());
  return out;
}

inline Index count_strictly_above(const Vector& s, double eps) {
  Index n = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > eps) ++n;
  return std::max<Index>(n, 1);
}

}  // namespace detail

inline SalsaDecomposition salsa_micro_decompose(const SystemTT& theta, Index k) {
  const Index d = theta.order();
  require(k >= 0 && k < d, "salsa_micro_decompose: site out of range");
  TensorTrain t = tt_orthogonalize(theta.tt(), k);
  const detail::CenterBases cb = detail::center_bases(t.core(k));
  SalsaDecomposition out;
  out.site = k;
  out.sigma_left = cb.s_left;
  out.sigma_right = cb.s_right;
  out.center = detail::rotate_core(t.core(k), cb.u_left, cb.v_right);
  for (Index j = 0; j < k; ++j) out.left.push_back(t.core(j));
  for (Index j = k + 1; j < d; ++j) out.right.push_back(t.core(j));
  if (k > 0) {
    Core& c = out.left.back();
    RowMatrix lu = c.left_unfolding() * cb.u_left;
    c = Core(c.left_rank(), c.phys(), c.right_rank(), std::move(lu));
  }
  if (k + 1 < d) {
    Core& c = out.right.front();
    RowMatrix ru = cb.v_right.transpose() * c.right_unfolding();
    c = Core::from_right_unfolding(c.phys(), ru);
    out.leg = Matrix::Identity(theta.equations(), theta.equations());
  } else {
    out.leg = cb.v_right.transpose();
  }
  return out;
}

// Minimiser of ||f - y||^2 + omega^2 (||S_L^-1 N||^2 + ||N S_R^-1||^2) over the
// rotated centre N, with singular values below eps raised to eps. Returns
// the centre core in the original (unrotated) basis of the engine.
inline Core salsa_local_solve(const Core& c, const NormalEquations& ne, double omega, double eps) {
  require(omega >= 0.0 && eps > 0.0, "salsa_local_solve: omega must be nonnegative and eps positive");
  const detail::CenterBases cb = detail::center_bases(c);
  const Index rl = c.left_rank(), p = c.phys(), rr = c.right_rank();
  NormalEquations rot;
  const Matrix q = detail::rotation_operator(cb.u_left, p, cb.v_right);
  const Matrix hfull = ne.H.selfadjointView<Eigen::Lower>();
  rot.H = q.transpose() * hfull * q;
  rot.b = q.transpose() * ne.b;
  rot.yy = ne.yy;
  rot.rows = ne.rows;
  if (ne.has_factor()) {
    rot.R = ne.R * q;
    rot.c = ne.c;
  }
  Vector shift(rl * p * rr);
  const double w2 = omega * omega;
  for (Index a = 0; a < rl; ++a) {
    const double sl = std::max(cb.s_left(a), eps);
    for (Index i = 0; i < p; ++i)
      for (Index b = 0; b < rr; ++b) {
        const double sr = std::max(cb.s_right(b), eps);
        shift((a * p + i) * rr + b) = w2 * (1.0 / (sl * sl) + 1.0 / (sr * sr));
      }
  }
  const Vector n = solve_shifted(rot, shift);
  Core out(rl, p, rr);
  out.as_vector() = q * n;
  return out;
}

inline Core salsa_local_solve(const TrainStackEngine& engine, Index k, double omega, double eps) {
  return salsa_local_solve(engine.train().core(k), engine.assemble(k), omega, eps);
}

inline constexpr double kSalsaEpsFloor = 1e-10;

namespace detail {

struct SalsaState {
  TrainStackEngine& engine;
  Rng& rng;
  Index p, d;
  Index r_min;
  double c;
  std::vector<Index> counts;
};

// Centre k -> k+1 with rank adaptation of bond k.
inline void salsa_move_right(SalsaState& st, double eps) {
  TrainStackEngine& e = st.engine;
  const Index k = e.center();
  auto& cores = e.mutable_train().mutable_cores();
  const Core& ck = cores[static_cast<std::size_t>(k)];
  const Core& cn = cores[static_cast<std::size_t>(k + 1)];
  const Index rl = ck.left_rank(), na = rl * st.p, nb = cn.phys() * cn.right_rank();
  const ThinSvd svd = thin_svd(Matrix(ck.left_unfolding()));
  const Matrix b = svd.V.transpose() * cn.right_unfolding();
  const Index s = svd.S.size();
  const Index count = count_strictly_above(svd.S, eps);
  const Index cap = std::min({bond_capacity(k, st.d, st.p, st.d), na, nb});
  const Index target = std::min(count + st.r_min, cap);
  const auto keep = choose_slots(svd.S, eps, std::min(target, s), st.rng);
  const Index nk = static_cast<Index>(keep.size());
  const Index extra = target - nk;
  Matrix u(na, target), bn(target, nb);
  for (Index j = 0; j < nk; ++j) {
    u.col(j) = svd.U.col(keep[static_cast<std::size_t>(j)]);
    bn.row(j) = svd.S(keep[static_cast<std::size_t>(j)]) * b.row(keep[static_cast<std::size_t>(j)]);
  }
  if (extra > 0) {
    u.rightCols(extra) = orthonormal_complement(svd.U, na, extra, st.rng);
    bn.bottomRows(extra) = st.c * eps * orthonormal_complement(b.transpose(), nb, extra, st.rng).transpose();
  }
  const Index phys_k = ck.phys(), phys_n = cn.phys();
  cores[static_cast<std::size_t>(k)] = Core(rl, phys_k, target, RowMatrix(u));
  cores[static_cast<std::size_t>(k + 1)] = Core::from_right_unfolding(phys_n, RowMatrix(bn));
  st.counts[static_cast<std::size_t>(k)] = std::min(count, target);
  e.refresh_left(k);
  e.set_center_index(k + 1);
}

// Centre k -> k-1 with rank adaptation of bond k-1.
inline void salsa_move_left(SalsaState& st, double eps) {
  TrainStackEngine& e = st.engine;
  const Index k = e.center();
  auto& cores = e.mutable_train().mutable_cores();
  const Core& ck = cores[static_cast<std::size_t>(k)];
  const Core& cp = cores[static_cast<std::size_t>(k - 1)];
  const Index nb = ck.phys() * ck.right_rank(), na = cp.left_rank() * cp.phys();
  const ThinSvd svd = thin_svd(Matrix(ck.right_unfolding()));
  const Matrix a = cp.left_unfolding() * svd.U;
  const Index s = svd.S.size();
  const Index count = count_strictly_above(svd.S, eps);
  const Index cap = std::min({bond_capacity(k - 1, st.d, st.p, st.d), na, nb});
  const Index target = std::min(count + st.r_min, cap);
  const auto keep = choose_slots(svd.S, eps, std::min(target, s), st.rng);
  const Index nk = static_cast<Index>(keep.size());
  const Index extra = target - nk;
  Matrix v(nb, target), an(na, target);
  for (Index j = 0; j < nk; ++j) {
    v.col(j) = svd.V.col(keep[static_cast<std::size_t>(j)]);
    an.col(j) = svd.S(keep[static_cast<std::size_t>(j)]) * a.col(keep[static_cast<std::size_t>(j)]);
  }
  if (extra > 0) {
    v.rightCols(extra) = orthonormal_complement(svd.V, nb, extra, st.rng);
    an.rightCols(extra) = st.c * eps * orthonormal_complement(a, na, extra, st.rng);
  }
  const Index phys_k = ck.phys(), phys_p = cp.phys(), rl_p = cp.left_rank();
  cores[static_cast<std::size_t>(k)] = Core::from_right_unfolding(phys_k, RowMatrix(v.transpose()));
  cores[static_cast<std::size_t>(k - 1)] = Core(rl_p, phys_p, target, RowMatrix(an));
  st.counts[static_cast<std::size_t>(k - 1)] = std::min(count, target);
  e.refresh_right(k);
  e.set_center_index(k - 1);
}

}  // namespace detail

// Rank-adaptive SALSA on the single-train format. The configured omega and
// eps are dimensionless: the regulariser weight is omega times the RMS of y,
// the singular value threshold is eps * ||theta|| (never below
// kSalsaEpsFloor * ||theta||), and R is the residual relative to ||y||.
// accept, when given, is consulted after every sweep.
inline SolveResult<SystemTT> salsa_solve(const Dataset& data, const DictionaryStack& psi, const SolverConfig& cfg,
                                         const SuccessTest<SystemTT>& accept = {}) {
  cfg.validate();
  const Index d = psi.order(), p = psi.basis_size();
  require(d >= 2, "salsa_solve: at least two variables");
  require_shape(data.Y.cols() == d && data.Y.rows() == psi.samples(), "salsa_solve: data shape");
  const auto& sp = cfg.salsa;
  Rng rng = make_rng(derive_seed(cfg.seed, {0x5a15aULL}));

  std::vector<Index> init(static_cast<std::size_t>(d - 1));
  for (Index b = 0; b < d - 1; ++b)
    init[static_cast<std::size_t>(b)] = std::min(1 + sp.r_min, detail::bond_capacity(b, d, p, d));
  for (Index b = 1; b < d - 1; ++b)
    init[static_cast<std::size_t>(b)] =
        std::min(init[static_cast<std::size_t>(b)], init[static_cast<std::size_t>(b - 1)] * p);
  SystemTT start = initial_system_tt(init, psi, data.Y, derive_seed(cfg.seed, {0x1417ULL}));
  TrainStackEngine engine(std::move(start), psi, data.Y);

  const double y_norm = data.Y.norm();
  const double scale = y_norm > 0.0 ? y_norm : 1.0;
  detail::SalsaState st{engine, rng, p, d, sp.r_min, sp.c, std::vector<Index>(static_cast<std::size_t>(d - 1), 1)};
  double omega = sp.omega_start, eps = sp.epsilon_start;

  SolveResult<SystemTT> out;
  out.trace.initial_residual = engine.residual_norm();
  const double guard = sp.divergence_factor * std::max(out.trace.initial_residual, 1e-300);
  const auto t0 = detail::Clock::now();
  const double y_rms = scale / std::sqrt(static_cast<double>(data.Y.size()));
  auto eps_abs = [&] {
    return std::max(std::max(eps, kSalsaEpsFloor) * tt_norm(engine.train()), kSalsaEpsFloor * y_rms);
  };
  auto solve_here = [&](double ea) {
    const Index k = engine.center();
    for (int rep = 0; rep < sp.solves_per_site; ++rep) {
      engine.set_core(k, salsa_local_solve(engine, k, omega * y_rms, ea));
    }
    if (cfg.record_micro_steps) out.trace.micro_residuals.push_back(engine.residual_norm());
  };

  for (int s = 1; s <= cfg.max_sweeps; ++s) {
    for (Index k = 0; k + 1 < d; ++k) {
      const double ea = eps_abs();
      solve_here(ea);
      detail::salsa_move_right(st, ea);
    }
    for (Index k = d - 1; k > 0; --k) {
      const double ea = eps_abs();
      solve_here(ea);
      detail::salsa_move_left(st, ea);
    }
    const double res = engine.residual_norm();
    SweepRecord rec;
    rec.sweep = s;
    rec.residual = res;
    rec.lambda_or_omega = omega;
    rec.epsilon = eps;
    rec.ranks = st.counts;
    rec.seconds = detail::seconds_since(t0);
    out.trace.sweeps.push_back(rec);
    require(std::isfinite(res), "salsa: residual became non-finite");
    if (res > guard) {
      out.trace.diverged = true;
      break;
    }
    const double rel = res / scale;
    // An exact fit leaves nothing to regularise against.
    if (rel == 0.0) break;
    omega = std::min(std::sqrt(rel), omega / sp.omega_min);
    eps = sp.s_min * rel;
    if (cfg.residual_threshold > 0.0 && rel < cfg.residual_threshold) break;
    if (accept) {
      const SystemTT current(tt_truncate_to_ranks(engine.train(), st.counts));
      if (accept(current)) {
        out.success = true;
        break;
      }
    }
  }
  out.model = SystemTT(tt_truncate_to_ranks(engine.train(), st.counts));
  return out;
}

}  // namespace ttsysid
