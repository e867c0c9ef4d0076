#pragma once

// Executable checks of the rank bounds for local systems, the quadratic
// nearest-neighbour function class, and the FPUT formats. Every check builds
// a concrete instance, measures ranks numerically and compares against the
// bound.

#include "ttsysid/models.hpp"
#include "ttsysid/rng.hpp"

#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace ttsysid {

struct RankCheck {
  std::string family;
  std::string instance;
  bool pass = true;
  std::string detail;
};

struct RankReport {
  std::vector<RankCheck> checks;

  int violations() const {
    int n = 0;
    for (const auto& c : checks) n += c.pass ? 0 : 1;
    return n;
  }
  int count(const std::string& family) const {
    int n = 0;
    for (const auto& c : checks) n += c.family == family ? 1 : 0;
    return n;
  }
};

inline constexpr double kRankTolerance = 1e-10;

namespace detail {

inline std::string ranks_str(const std::vector<Index>& r) {
  std::string s = "(";
  for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + std::to_string(r[i]);
  return s + ")";
}

class CheckBuilder {
 public:
  CheckBuilder(std::string family, std::string instance) {
    c_.family = std::move(family);
    c_.instance = std::move(instance);
  }
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (!c_.detail.empty()) c_.detail += "; ";
    c_.detail += what;
    c_.pass = false;
  }
  RankCheck done() { return std::move(c_); }

 private:
  RankCheck c_;
};

}  // namespace detail

// Local system with interaction range (s1, s2) and nnz coefficients per
// equation, N = nnz. Checks, for every equation, that the TT ranks of the
// dense coefficient tensor are at most N, at most N inside the window and 1
// outside; that the selection model with s1+s2+2 types and ranks <= N
// reproduces every equation; and that the single train satisfies
// r_k <= k - s2 + 1 + N(s1 + s2) (k counted from 1).
inline RankCheck check_local_system(Index d, Index s1, Index s2, Index nnz, std::uint64_t seed) {
  const Basis basis = make_basis(BasisKind::legendre, 4);
  const LocalSystem sys = random_local_system(d, nnz, seed, basis, s1, s2);
  std::ostringstream name;
  name << "d=" << d << " (s1,s2)=(" << s1 << ',' << s2 << ") N=" << nnz << " seed=" << seed;
  detail::CheckBuilder b("local-system", name.str());
  const Index n_bound = nnz;

  std::vector<TensorTrain> exact;
  for (Index l = 0; l < d; ++l) {
    const DenseTensor theta = dense_equation_tensor(sys, l);
    const TensorTrain tt = tt_from_dense(theta, kRankTolerance);
    const auto r = tt.ranks();
    for (Index k = 0; k + 1 < d; ++k) {
      const Index rk = r[static_cast<std::size_t>(k)];
      b.expect(rk <= n_bound, "(i) eq " + std::to_string(l) + " rank " + std::to_string(rk) + " > N");
      const bool inside = k >= l - s1 && k < l + s2;
      if (inside)
        b.expect(rk <= n_bound, "(ii) eq " + std::to_string(l) + " bond " + std::to_string(k + 1) + " inside > N");
      else
        b.expect(rk == 1, "(ii) eq " + std::to_string(l) + " bond " + std::to_string(k + 1) + " outside rank " +
                              std::to_string(rk) + " != 1");
    }
    exact.push_back(tt_from_dense(theta, 0.0));
  }

  const SelectionModel sel = to_selection_model(sys, 1e-12);
  b.expect(sel.types() == s1 + s2 + 2, "(iii) selection model has " + std::to_string(sel.types()) + " types");
  for (Index r : sel.ranks()) b.expect(r <= n_bound, "(iii) selection rank " + std::to_string(r) + " > N");
  for (Index l = 0; l < d; ++l) {
    const double err = tt_relative_distance(equation_tt(sel, l), exact[static_cast<std::size_t>(l)]);
    b.expect(err <= 1e-10, "(iii) eq " + std::to_string(l) + " reproduced with error " + std::to_string(err));
  }

  const auto single = numerical_ranks(to_single_tt(sel).tt(), kRankTolerance);
  for (Index k = 1; k < d; ++k) {
    const Index bound = k - s2 + 1 + n_bound * (s1 + s2);
    const Index rk = single[static_cast<std::size_t>(k - 1)];
    b.expect(rk <= bound, "(iv) single-train bond " + std::to_string(k) + " rank " + std::to_string(rk) + " > " +
                              std::to_string(bound));
  }
  return b.done();
}

// f(x) = sum_l sum_{i+j<p} a(i,j,l) x_l^i x_{l+1}^j in the monomial basis:
// every TT rank of the coefficient tensor is at most p. Also checked after
// conversion to the Legendre basis.
inline RankCheck check_quadratic_class(Index d, std::uint64_t seed) {
  const Index p = 4;
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  DenseTensor theta(std::vector<Index>(static_cast<std::size_t>(d), p));
  std::vector<Index> idx(static_cast<std::size_t>(d));
  for (Index l = 0; l + 1 < d; ++l)
    for (Index i = 0; i < p; ++i)
      for (Index j = 0; i + j < p; ++j) {
        std::fill(idx.begin(), idx.end(), 0);
        idx[static_cast<std::size_t>(l)] = i;
        idx[static_cast<std::size_t>(l + 1)] = j;
        theta.at(std::span<const Index>(idx)) += unif(rng);
      }
  detail::CheckBuilder b("quadratic-class", "d=" + std::to_string(d) + " seed=" + std::to_string(seed));
  const TensorTrain mono = tt_from_dense(theta, kRankTolerance);
  for (Index r : mono.ranks()) b.expect(r <= p, "monomial rank " + std::to_string(r) + " > p");
  const Matrix m = basis_change_matrix(make_basis(BasisKind::monomial, p), make_basis(BasisKind::legendre, p));
  const auto leg = numerical_ranks(change_physical_basis(tt_from_dense(theta, 0.0), m), kRankTolerance);
  for (Index r : leg) b.expect(r <= p, "legendre rank " + std::to_string(r) + " > p");
  return b.done();
}

// FPUT selection model: every interior bond has dimension 4 and each
// extracted equation has numerical ranks at most 4.
inline RankCheck check_fput_selection(Index d, const Vector& beta, const Vector& mfield) {
  detail::CheckBuilder b("fput-selection", "d=" + std::to_string(d) + (mfield.isZero() ? "" : " with mean field"));
  const SelectionModel m = fput_ground_truth(d, beta, mfield, make_basis(BasisKind::legendre, 4));
  b.expect(m.types() == 4, "selection model has " + std::to_string(m.types()) + " types");
  for (Index r : m.ranks()) b.expect(r == 4, "interior rank " + std::to_string(r) + " != 4");
  for (Index l = 0; l < d; ++l)
    for (Index r : numerical_ranks(equation_tt(m, l), kRankTolerance))
      b.expect(r <= 4, "equation " + std::to_string(l) + " rank " + std::to_string(r) + " > 4");
  return b.done();
}

// FPUT single train without mean field: rank 4 at the first bond and 4 + k
// at bond k for 1 < k < d.
inline std::vector<Index> fput_single_tt_ranks(Index d) {
  std::vector<Index> r;
  for (Index k = 1; k < d; ++k) r.push_back(k == 1 ? 4 : 4 + k);
  return r;
}

inline RankCheck check_fput_single_tt(Index d, const Vector& beta) {
  detail::CheckBuilder b("fput-single-tt", "d=" + std::to_string(d));
  const SelectionModel m = fput_ground_truth(d, beta, Vector::Zero(d), make_basis(BasisKind::legendre, 4));
  const auto got = numerical_ranks(to_single_tt(m).tt(), kRankTolerance);
  const auto want = fput_single_tt_ranks(d);
  b.expect(got == want, "ranks " + detail::ranks_str(got) + " != " + detail::ranks_str(want));
  return b.done();
}

// The full audit: local_instances random local systems with (s1, s2) in
// {(1,1), (2,1)} and d in 4..8, quadratic_instances members of the quadratic
// class with d in 3..6, and the FPUT checks for d in 3..6 with random
// nonzero beta.
inline RankReport rank_theory_suite(std::uint64_t seed, int local_instances = 100, int quadratic_instances = 40) {
  RankReport rep;
  Rng rng = make_rng(derive_seed(seed, {0}));
  for (int i = 0; i < local_instances; ++i) {
    const Index s1 = i % 2 == 0 ? 1 : 2, s2 = 1;
    const Index d = 4 + (i / 2) % 5;
    const Index total = s1 == 1 ? 64 : 256;
    std::uniform_int_distribution<Index> pick_n(1, std::min<Index>(total, 24));
    const Index nnz = pick_n(rng);
    rep.checks.push_back(check_local_system(d, s1, s2, nnz, derive_seed(seed, {1, static_cast<std::uint64_t>(i)})));
  }
  for (int i = 0; i < quadratic_instances; ++i)
    rep.checks.push_back(check_quadratic_class(3 + i % 4, derive_seed(seed, {2, static_cast<std::uint64_t>(i)})));
  std::uniform_real_distribution<double> beta_law(0.1, 1.0), field_law(-1.0, 1.0);
  for (Index d = 3; d <= 6; ++d) {
    Vector beta(d), field(d);
    for (Index k = 0; k < d; ++k) {
      beta(k) = beta_law(rng);
      field(k) = field_law(rng);
    }
    rep.checks.push_back(check_fput_selection(d, beta, Vector::Zero(d)));
    rep.checks.push_back(check_fput_selection(d, beta, field));
    rep.checks.push_back(check_fput_single_tt(d, beta));
  }
  return rep;
}

inline void write_report(std::ostream& os, const RankReport& rep, bool verbose = false) {
  for (const auto& c : rep.checks)
    if (verbose || !c.pass)
      os << (c.pass ? "PASS " : "FAIL ") << c.family << ' ' << c.instance << (c.pass ? "" : ": " + c.detail) << '\n';
  for (const char* fam : {"local-system", "quadratic-class", "fput-selection", "fput-single-tt"}) {
    int fails = 0;
    for (const auto& c : rep.checks) fails += c.family == fam && !c.pass ? 1 : 0;
    os << (fails ? "FAIL " : "PASS ") << fam << ": " << rep.count(fam) << " instances, " << fails << " violations\n";
  }
}

}  // namespace ttsysid
