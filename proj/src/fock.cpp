#include "bogexp/fock.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bogexp/combinatorics.hpp"

namespace bogexp {

namespace {

constexpr int kMaxDenseDim = 4096;

void check_dim(std::int64_t dim, const char* what) {
  if (dim > kMaxDenseDim) {
    std::ostringstream os;
    os << what << " basis dimension " << dim << " exceeds the dense budget of " << kMaxDenseDim
       << " (approx " << dim * dim * 16 << " bytes per operator)";
    throw ResourceError("basis-too-large", os.str());
  }
}

}  // namespace

std::int64_t fock_dim(int modes, int nmax) {
  std::int64_t d = 0;
  for (int n = 0; n <= nmax; ++n) d += binomial(n + modes - 1, modes - 1);
  return d;
}

std::int64_t nparticle_dim(int M, int N) { return binomial(N + M - 1, M - 1); }

FockBasis::FockBasis(int modes, int nmax) : modes_(modes), nmax_(nmax) {
  if (modes < 1) throw ConfigError("fock-modes", "need at least one excitation mode");
  if (nmax < 0) throw ConfigError("fock-nmax", "nmax must be non-negative");
  check_dim(fock_dim(modes, nmax), "Fock");
  sector_offsets_.resize(nmax + 2, 0);
  for (int n = 0; n <= nmax; ++n) {
    sector_offsets_[n] = static_cast<int>(states_.size());
    for (auto& occ : occupations_with_sum(modes, n)) {
      lookup_[occ] = static_cast<int>(states_.size());
      totals_.push_back(n);
      states_.push_back(std::move(occ));
    }
  }
  sector_offsets_[nmax + 1] = static_cast<int>(states_.size());
}

int FockBasis::index(const std::vector<int>& occ) const {
  auto it = lookup_.find(occ);
  return it == lookup_.end() ? -1 : it->second;
}

NParticleBasis::NParticleBasis(int M, int N) : modes_(M), N_(N) {
  if (M < 1) throw ConfigError("np-modes", "need at least one mode");
  if (N < 0) throw ConfigError("np-particles", "particle number must be non-negative");
  check_dim(nparticle_dim(M, N), "N-particle");
  for (auto& occ : occupations_with_sum(M, N)) {
    lookup_[occ] = static_cast<int>(states_.size());
    states_.push_back(std::move(occ));
  }
}

int NParticleBasis::index(const std::vector<int>& occ) const {
  auto it = lookup_.find(occ);
  return it == lookup_.end() ? -1 : it->second;
}

std::set<int> infer_sector_shift(const FockBasis& basis, const Matrix& m, double tol) {
  std::set<int> shifts;
  for (int c = 0; c < m.cols(); ++c)
    for (int r = 0; r < m.rows(); ++r)
      if (std::abs(m(r, c)) > tol) shifts.insert(basis.total(r) - basis.total(c));
  return shifts;
}

FockOperator::FockOperator(std::shared_ptr<const FockBasis> b, Matrix m, std::set<int> shifts)
    : basis(std::move(b)), mat(std::move(m)), sector_shift(std::move(shifts)) {
  for (int c = 0; c < mat.cols(); ++c)
    for (int r = 0; r < mat.rows(); ++r)
      if (std::abs(mat(r, c)) > 1e-14 &&
          !sector_shift.count(basis->total(r) - basis->total(c))) {
        std::ostringstream os;
        os << "operator entry (" << r << "," << c << ") moves sector "
           << basis->total(c) << " -> " << basis->total(r)
           << " outside the declared shift set";
        throw Error("sector-shift-violation", os.str());
      }
}

FockOperator FockOperator::adjoint() const {
  std::set<int> shifts;
  for (int s : sector_shift) shifts.insert(-s);
  return FockOperator(basis, mat.adjoint(), shifts);
}

Ladder ladder(const std::shared_ptr<const FockBasis>& basis, int mode) {
  const int m = mode - 1;
  if (m < 0 || m >= basis->modes()) throw ConfigError("ladder-mode", "mode index out of range");
  const int d = basis->dim();
  Matrix up = Matrix::Zero(d, d);
  std::vector<int> occ;
  for (int i = 0; i < d; ++i) {
    if (basis->total(i) + 1 > basis->nmax()) continue;  // hard truncation
    occ = basis->state(i);
    occ[m] += 1;
    up(basis->index(occ), i) = std::sqrt(static_cast<double>(occ[m]));
  }
  Ladder out;
  out.raise = FockOperator(basis, up, {+1});
  out.lower = FockOperator(basis, up.adjoint(), {-1});
  return out;
}

FockOperator number_operator(const std::shared_ptr<const FockBasis>& basis) {
  const int d = basis->dim();
  Matrix n = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i) n(i, i) = static_cast<double>(basis->total(i));
  return FockOperator(basis, n, {0});
}

namespace {

// Applies a normal-ordered monomial coef * a^dag_{c1} ... a^dag_{ck} a_{a1} ... a_{al}
// to basis column `i`, accumulating into `out`. Annihilators act right to
// left; amplitudes that would exceed nmax are dropped.
void apply_monomial(const FockBasis& basis, Matrix& out, int i, Complex coef,
                    const std::vector<int>& creators, const std::vector<int>& annihilators,
                    std::vector<int>& occ) {
  occ = basis.state(i);
  double amp = 1.0;
  for (auto it = annihilators.rbegin(); it != annihilators.rend(); ++it) {
    if (occ[*it] == 0) return;
    amp *= std::sqrt(static_cast<double>(occ[*it]));
    occ[*it] -= 1;
  }
  int total = 0;
  for (int x : occ) total += x;
  for (auto it = creators.rbegin(); it != creators.rend(); ++it) {
    if (++total > basis.nmax()) return;
    occ[*it] += 1;
    amp *= std::sqrt(static_cast<double>(occ[*it]));
  }
  out(basis.index(occ), i) += coef * amp;
}

}  // namespace

Kops build_Kops(const Kernels& kernels, const std::shared_ptr<const FockBasis>& basis) {
  const int e = kernels.M - 1;
  if (basis->modes() != e)
    throw ConfigError("kops-modes", "basis mode count does not match kernels");
  const int d = basis->dim();

  Kops ops;
  ops.basis = basis;

  Matrix k0 = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    double val = 0;
    for (int j = 0; j < e; ++j) val += basis->state(i)[j] * kernels.eps_exc(j);
    k0(i, i) = val;
  }
  ops.K0 = FockOperator(basis, k0, {0});

  Matrix k1 = Matrix::Zero(d, d), k2 = Matrix::Zero(d, d), k3 = Matrix::Zero(d, d),
         k4 = Matrix::Zero(d, d);
  std::vector<int> occ;
  for (int i = 0; i < d; ++i) {
    for (int a = 0; a < e; ++a)
      for (int b = 0; b < e; ++b) {
        if (std::abs(kernels.K1(a, b)) > 0)
          apply_monomial(*basis, k1, i, kernels.K1(a, b), {a}, {b}, occ);
        if (std::abs(kernels.K2(a, b)) > 0)
          apply_monomial(*basis, k2, i, 0.5 * kernels.K2(a, b), {a, b}, {}, occ);
        for (int c = 0; c < e; ++c) {
          const Complex w3 = kernels.k3(a, b, c);
          if (std::abs(w3) > 0) apply_monomial(*basis, k3, i, w3, {a, b}, {c}, occ);
          for (int f = 0; f < e; ++f) {
            const Complex w4 = kernels.K4(a, b, c, f);
            if (std::abs(w4) > 0) apply_monomial(*basis, k4, i, 0.5 * w4, {a, b}, {c, f}, occ);
          }
        }
      }
  }
  ops.K1 = FockOperator(basis, k1, {0});
  ops.K2 = FockOperator(basis, k2, {+2});
  ops.K3 = FockOperator(basis, k3, {+1});
  ops.K4 = FockOperator(basis, k4, {0});
  ops.N = number_operator(basis);
  return ops;
}

Matrix build_second_quantized(const Matrix& T, const Tensor4& V, double lambda,
                              const NParticleBasis& basis) {
  const int M = basis.modes();
  const int d = basis.dim();
  Matrix H = Matrix::Zero(d, d);
  std::vector<int> occ;
  for (int i = 0; i < d; ++i) {
    const auto& s = basis.state(i);
    // one-body
    for (int n = 0; n < M; ++n) {
      if (s[n] == 0) continue;
      for (int m = 0; m < M; ++m) {
        if (std::abs(T(m, n)) == 0) continue;
        occ = s;
        double amp = std::sqrt(static_cast<double>(occ[n]));
        occ[n] -= 1;
        occ[m] += 1;
        amp *= std::sqrt(static_cast<double>(occ[m]));
        H(basis.index(occ), i) += T(m, n) * amp;
      }
    }
    // two-body: a^dag_m a^dag_n a_p a_q
    for (int q = 0; q < M; ++q) {
      if (s[q] == 0) continue;
      for (int p = 0; p < M; ++p) {
        std::vector<int> s2 = s;
        double amp0 = std::sqrt(static_cast<double>(s2[q]));
        s2[q] -= 1;
        if (s2[p] == 0) continue;
        amp0 *= std::sqrt(static_cast<double>(s2[p]));
        s2[p] -= 1;
        for (int n = 0; n < M; ++n)
          for (int m = 0; m < M; ++m) {
            const Complex v = V(m, n, p, q);
            if (std::abs(v) == 0) continue;
            occ = s2;
            double amp = amp0;
            occ[n] += 1;
            amp *= std::sqrt(static_cast<double>(occ[n]));
            occ[m] += 1;
            amp *= std::sqrt(static_cast<double>(occ[m]));
            H(basis.index(occ), i) += 0.5 * lambda * v * amp;
          }
      }
    }
  }
  return H;
}

Matrix build_HN(const ModelSpec& model, int N) {
  if (N < 2) throw ConfigError("HN-N", "need N >= 2");
  NParticleBasis basis(model.M, N);
  return build_second_quantized(model.T, model.V, 1.0 / (N - 1), basis);
}

Complex permanent(const Matrix& a) {
  const int n = static_cast<int>(a.rows());
  if (n == 0) return Complex{1, 0};
  if (n > 20) throw ResourceError("permanent-size", "permanent beyond 20x20 not supported");
  // Ryser with Gray code: per(A) = (-1)^n sum_{S != 0} (-1)^{|S|} prod_i r_i(S).
  std::vector<Complex> row_sums(n, Complex{0, 0});
  Complex total{0, 0};
  std::uint64_t gray = 0;
  int popcount = 0;
  const std::uint64_t limit = 1ull << n;
  for (std::uint64_t k = 1; k < limit; ++k) {
    const std::uint64_t next = k ^ (k >> 1);
    const std::uint64_t changed = next ^ gray;
    const int j = std::countr_zero(changed);
    const double sign_col = (next & changed) ? 1.0 : -1.0;
    for (int i = 0; i < n; ++i) row_sums[i] += sign_col * a(i, j);
    popcount += (next & changed) ? 1 : -1;
    gray = next;
    Complex prod{1, 0};
    for (int i = 0; i < n; ++i) prod *= row_sums[i];
    total += ((n - popcount) % 2 == 0 ? 1.0 : -1.0) * prod;
  }
  return total;
}

namespace {

double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

bool is_identity_permutation_basis(const Matrix& B) {
  const int M = static_cast<int>(B.rows());
  for (int c = 0; c < M; ++c) {
    int ones = 0;
    for (int r = 0; r < M; ++r) {
      const double v = std::abs(B(r, c));
      if (v > 1e-15) {
        if (std::abs(B(r, c) - Complex{1, 0}) > 1e-14) return false;
        ++ones;
      }
    }
    if (ones != 1) return false;
  }
  return true;
}

}  // namespace

Matrix excitation_map(const HartreeSolution& sol, int N) {
  const int M = static_cast<int>(sol.phi.size());
  NParticleBasis np(M, N);
  FockBasis fock(M - 1, N);
  if (np.dim() != fock.dim())
    throw Error("excitation-dim", "N-particle and truncated Fock dimensions disagree");

  // Change of one-body basis, second-quantized: <m|Gamma(B^dag)|n> =
  // per(W[m,n]) / sqrt(prod m_i! prod n_j!) with W = B^dag.
  const Matrix W = sol.B.adjoint();
  const bool trivial = is_identity_permutation_basis(sol.B);
  if (!trivial && N > 14) {
    throw ResourceError("excitation-map-N",
                        "generic excitation map needs permanents; N > 14 unsupported");
  }

  Matrix U = Matrix::Zero(fock.dim(), np.dim());
  std::vector<int> rows, cols;
  for (int col = 0; col < np.dim(); ++col) {
    const auto& src = np.state(col);
    if (trivial) {
      // B maps mode j to mode pi(j); occupations permute with coefficient 1.
      std::vector<int> dst(M, 0);
      for (int j = 0; j < M; ++j) {
        if (src[j] == 0) continue;
        int target = 0;
        for (int r = 0; r < M; ++r)
          if (std::abs(sol.B(j, r)) > 0.5) target = r;
        dst[target] += src[j];
      }
      std::vector<int> exc(dst.begin() + 1, dst.end());
      U(fock.index(exc), col) = 1.0;
      continue;
    }
    cols.clear();
    for (int j = 0; j < M; ++j) cols.insert(cols.end(), src[j], j);
    double lognorm_col = 0;
    for (int j = 0; j < M; ++j) lognorm_col += log_factorial(src[j]);
    for (int row = 0; row < np.dim(); ++row) {
      const auto& dst = np.state(row);
      rows.clear();
      for (int i = 0; i < M; ++i) rows.insert(rows.end(), dst[i], i);
      Matrix sub(N, N);
      for (int r = 0; r < N; ++r)
        for (int c = 0; c < N; ++c) sub(r, c) = W(rows[r], cols[c]);
      double lognorm = lognorm_col;
      for (int i = 0; i < M; ++i) lognorm += log_factorial(dst[i]);
      const Complex amp = permanent(sub) * std::exp(-0.5 * lognorm);
      if (std::abs(amp) < 1e-300) continue;
      std::vector<int> exc(dst.begin() + 1, dst.end());
      U(fock.index(exc), col) += amp;
    }
  }
  return U;
}

FockOperator build_excitation_hamiltonian(const Kernels& kernels, int N) {
  auto basis = std::make_shared<const FockBasis>(kernels.M - 1, N);
  return build_excitation_hamiltonian(kernels, N, basis);
}

FockOperator build_excitation_hamiltonian(const Kernels& kernels, int N,
                                          const std::shared_ptr<const FockBasis>& basis) {
  if (N < 2) throw ConfigError("excitation-N", "need N >= 2");
  Kops ops = build_Kops(kernels, basis);
  const int d = basis->dim();
  RealVector f1(d), f2(d), f3(d);
  for (int i = 0; i < d; ++i) {
    const double n = basis->total(i);
    f1(i) = (N - n) / (N - 1.0);
    f2(i) = std::sqrt(std::max((N - n) * (N - n - 1.0), 0.0)) / (N - 1.0);
    f3(i) = std::sqrt(std::max(N - n, 0.0)) / (N - 1.0);
  }
  Matrix H = ops.K0.mat;
  H += Matrix(f1.cast<Complex>().asDiagonal()) * ops.K1.mat;
  Matrix K2f = ops.K2.mat * f2.cast<Complex>().asDiagonal();
  Matrix K3f = ops.K3.mat * f3.cast<Complex>().asDiagonal();
  H += K2f + K2f.adjoint() + K3f + K3f.adjoint();
  H += ops.K4.mat / (N - 1.0);
  return FockOperator(basis, H, {-2, -1, 0, 1, 2});
}

}  // namespace bogexp
