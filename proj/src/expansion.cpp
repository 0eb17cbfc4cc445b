#include "bogexp/expansion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bogexp/combinatorics.hpp"

namespace bogexp {

CoefficientTable taylor_coefficients(int jmax) {
  if (jmax < 0) throw ConfigError("taylor-jmax", "jmax must be non-negative");
  CoefficientTable t;
  t.jmax = jmax;
  t.c = RealMatrix::Zero(jmax + 1, jmax + 1);
  for (int l = 0; l <= jmax; ++l) {
    t.c(l, 0) = 1.0;
    for (int j = 1; j <= jmax; ++j) {
      // product (l-1/2)(l+1/2)...(l+j-3/2) / j!
      t.c(l, j) = t.c(l, j - 1) * (l + j - 1.5) / j;
    }
  }
  t.d = RealMatrix::Zero(jmax + 1, jmax + 1);
  for (int j = 0; j <= jmax; ++j)
    for (int nu = 0; nu <= j; ++nu) {
      double acc = 0;
      for (int l = 0; l <= nu; ++l) acc += t.c(0, l) * t.c(0, nu - l) * t.c(l, j - nu);
      t.d(j, nu) = acc;
    }
  return t;
}

double sqrt3_scalar(int n, int N) {
  return std::sqrt(std::max(static_cast<double>(N - n), 0.0)) / (N - 1.0);
}

double sqrt2_scalar(int n, int N) {
  const double x = (N - n) * (N - n - 1.0);
  return std::sqrt(std::max(x, 0.0)) / (N - 1.0);
}

double r3_scalar(const CoefficientTable& t, int a, int n, int N) {
  const double lam = 1.0 / (N - 1.0);
  double partial = 0;
  for (int l = 0; l <= a; ++l) partial += t.cj(l) * std::pow(lam, l + 0.5) * std::pow(n - 1.0, l);
  return (sqrt3_scalar(n, N) - partial) / std::pow(lam, a + 1.5);
}

double r2_scalar(const CoefficientTable& t, int a, int n, int N) {
  const double lam = 1.0 / (N - 1.0);
  double partial = 0;
  for (int l = 0; l <= a; ++l) {
    double inner = 0;
    for (int j = 0; j <= l; ++j) inner += t.d(l, j) * std::pow(n - 1.0, j);
    partial += std::pow(lam, l) * inner;
  }
  return (sqrt2_scalar(n, N) - partial) / std::pow(lam, a + 1.0);
}

ScalarRemainderReport scalar_remainder_check(int a, int N, const std::vector<int>& nvals) {
  const CoefficientTable t = taylor_coefficients(std::max(a + 1, 1));
  ScalarRemainderReport rep;
  for (int n : nvals) {
    if (n < 0 || n > N) throw ConfigError("remainder-n", "n values must lie in [0, N]");
    const double b3 = std::pow(2.0, a + 1) * std::pow(n + 1.0, a + 1);
    const double b2 = std::pow(a + 1.0, 2) * std::pow(4.0, a + 1) * std::pow(n + 1.0, a + 1);
    const double m3 = std::abs(r3_scalar(t, a, n, N)) / b3;
    const double m2 = std::abs(r2_scalar(t, a, n, N)) / b2;
    rep.worst_margin3 = std::max(rep.worst_margin3, m3);
    rep.worst_margin2 = std::max(rep.worst_margin2, m2);
  }
  rep.ok = rep.worst_margin3 <= 1.0 && rep.worst_margin2 <= 1.0;
  return rep;
}

namespace {

RealVector number_values(const FockBasis& basis) {
  RealVector n(basis.dim());
  for (int i = 0; i < basis.dim(); ++i) n(i) = basis.total(i);
  return n;
}

Matrix with_diag_right(const Matrix& op, const RealVector& f) {
  return op * f.cast<Complex>().asDiagonal();
}

}  // namespace

FockOperator build_Hj(const Kops& ops, const CoefficientTable& table, int j) {
  if (j < 1) throw ConfigError("Hj-order", "j must be >= 1");
  const auto& basis = ops.basis;
  const RealVector n = number_values(*basis);
  const int d = basis->dim();
  Matrix H = Matrix::Zero(d, d);
  std::set<int> shifts;
  if (j % 2 == 1) {
    const int p = (j + 1) / 2;  // j = 2p - 1
    if (p - 1 > table.jmax) throw ConfigError("Hj-table", "coefficient table too small");
    RealVector f(d);
    for (int i = 0; i < d; ++i) f(i) = std::pow(n(i) - 1.0, p - 1);
    const Matrix k3f = with_diag_right(ops.K3.mat, f);
    H = table.cj(p - 1) * (k3f + k3f.adjoint());
    shifts = {-1, 1};
  } else if (j == 2) {
    RealVector f(d);
    for (int i = 0; i < d; ++i) f(i) = n(i) - 0.5;
    const Matrix k2f = with_diag_right(ops.K2.mat, f);
    H = -(with_diag_right(ops.K1.mat, RealVector(n.array() - 1.0))) - k2f - k2f.adjoint() +
        ops.K4.mat;
    shifts = {-2, 0, 2};
  } else {
    const int p = j / 2;
    if (p > table.jmax) throw ConfigError("Hj-table", "coefficient table too small");
    for (int nu = 0; nu <= p; ++nu) {
      RealVector f(d);
      for (int i = 0; i < d; ++i) f(i) = std::pow(n(i) - 1.0, nu);
      const Matrix k2f = with_diag_right(ops.K2.mat, f);
      H += table.d(p, nu) * (k2f + k2f.adjoint());
    }
    shifts = {-2, 2};
  }
  // K1 acts as n-1 times a number-conserving operator; the diagonal ordering
  // above matters only through the number function, which commutes with K1.
  return FockOperator(basis, H, shifts);
}

FockOperator build_H_less(const Kops& ops, int N) {
  const auto& basis = ops.basis;
  const int d = basis->dim();
  const RealVector n = number_values(*basis);
  RealVector f1(d), f2(d), f3(d);
  for (int i = 0; i < d; ++i) {
    f1(i) = 1.0 - (n(i) - 1.0) / (N - 1.0);
    f2(i) = sqrt2_scalar(static_cast<int>(n(i)), N);
    f3(i) = sqrt3_scalar(static_cast<int>(n(i)), N);
  }
  Matrix H = ops.K0.mat + with_diag_right(ops.K1.mat, f1);
  const Matrix k2f = with_diag_right(ops.K2.mat, f2);
  const Matrix k3f = with_diag_right(ops.K3.mat, f3);
  H += k2f + k2f.adjoint() + k3f + k3f.adjoint();
  H += ops.K4.mat / (N - 1.0);
  return FockOperator(basis, H, {-2, -1, 0, 1, 2});
}

FockOperator build_Ra(const Kops& ops, const CoefficientTable& table, int a, int N) {
  const auto& basis = ops.basis;
  const int d = basis->dim();
  const double lam = 1.0 / (N - 1.0);
  const RealVector n = number_values(*basis);

  auto diag_r2 = [&](int order) {
    RealVector f(d);
    for (int i = 0; i < d; ++i) f(i) = r2_scalar(table, order, static_cast<int>(n(i)), N);
    return f;
  };
  auto diag_r3 = [&](int order) {
    RealVector f(d);
    for (int i = 0; i < d; ++i) f(i) = r3_scalar(table, order, static_cast<int>(n(i)), N);
    return f;
  };

  Matrix R;
  if (a == 0) {
    // R_0 = (K3 sqrt([N-n]_+/(N-1)) + h.c.) + lam^{1/2}((K2 r2_0 + h.c.) - (n-1)K1) + lam^{1/2} K4
    RealVector f3(d);
    for (int i = 0; i < d; ++i)
      f3(i) = std::sqrt(std::max(N - n(i), 0.0) / (N - 1.0));
    const Matrix k3f = with_diag_right(ops.K3.mat, f3);
    const Matrix k2f = with_diag_right(ops.K2.mat, diag_r2(0));
    R = k3f + k3f.adjoint() +
        std::sqrt(lam) * (k2f + k2f.adjoint() -
                          with_diag_right(ops.K1.mat, RealVector(n.array() - 1.0))) +
        std::sqrt(lam) * ops.K4.mat;
  } else if (a == 1) {
    const Matrix k2f = with_diag_right(ops.K2.mat, diag_r2(0));
    const Matrix k3f = with_diag_right(ops.K3.mat, diag_r3(0));
    R = -with_diag_right(ops.K1.mat, RealVector(n.array() - 1.0)) + k2f + k2f.adjoint() +
        std::sqrt(lam) * (k3f + k3f.adjoint()) + ops.K4.mat;
  } else if (a % 2 == 0) {
    const int j = a / 2;  // R_{2j} = K3 r3_{j-1} + lam^{1/2} K2 r2_j + h.c.
    const Matrix k3f = with_diag_right(ops.K3.mat, diag_r3(j - 1));
    const Matrix k2f = with_diag_right(ops.K2.mat, diag_r2(j));
    R = k3f + k3f.adjoint() + std::sqrt(lam) * (k2f + k2f.adjoint());
  } else {
    const int j = (a - 1) / 2;  // R_{2j+1} = K2 r2_j + lam^{1/2} K3 r3_j + h.c.
    const Matrix k2f = with_diag_right(ops.K2.mat, diag_r2(j));
    const Matrix k3f = with_diag_right(ops.K3.mat, diag_r3(j));
    R = k2f + k2f.adjoint() + std::sqrt(lam) * (k3f + k3f.adjoint());
  }
  return FockOperator(basis, R, {-2, -1, 0, 1, 2});
}

RemainderIdentityReport remainder_identity_check(const Kops& ops, const CoefficientTable& table,
                                                 int a, int N, double tol) {
  const double lam = 1.0 / (N - 1.0);
  Matrix lhs = build_H_less(ops, N).mat;
  lhs -= build_H0(ops).mat;
  for (int j = 1; j <= a; ++j) lhs -= std::pow(lam, j / 2.0) * build_Hj(ops, table, j).mat;
  const Matrix rhs = std::pow(lam, (a + 1) / 2.0) * build_Ra(ops, table, a, N).mat;
  RemainderIdentityReport rep;
  rep.max_deviation = (lhs - rhs).cwiseAbs().maxCoeff();
  rep.ok = rep.max_deviation <= tol;
  return rep;
}

PerturbationContext::PerturbationContext(Kops ops, SpectralData sd, CoefficientTable table)
    : ops_(std::move(ops)), sd_(std::move(sd)), table_(std::move(table)) {}

const Matrix& PerturbationContext::Hj(int j) {
  if (static_cast<int>(hj_.size()) < j) hj_.resize(j);
  if (hj_[j - 1].size() == 0) hj_[j - 1] = build_Hj(ops_, table_, j).mat;
  return hj_[j - 1];
}

const Matrix& PerturbationContext::O(int n, int k) {
  auto key = std::make_pair(n, k);
  auto it = resolvents_.find(key);
  if (it == resolvents_.end()) it = resolvents_.emplace(key, reduced_resolvent(sd_, n, k)).first;
  return it->second;
}

Vector PerturbationContext::chi0(int n) const {
  const auto& lvl = sd_.levels.at(n);
  if (lvl.multiplicity != 1)
    throw DegeneracyError("level-degenerate", "chi0 requires a non-degenerate level");
  Vector chi = lvl.vectors.col(0);
  int imax = 0;
  for (int i = 1; i < chi.size(); ++i)
    if (std::abs(chi(i)) > std::abs(chi(imax))) imax = i;
  if (std::abs(chi(imax)) > 0) chi *= std::conj(chi(imax)) / std::abs(chi(imax));
  return chi;
}

namespace {

int kappa(const std::vector<int>& m) {
  int zeros = 0;
  for (int x : m)
    if (x == 0) ++zeros;
  return 1 + zeros;
}

void check_order(int a) {
  if (a > 6)
    throw ConfigError("expansion-order",
                      "orders above 6 rejected (composition enumeration grows combinatorially)");
}

}  // namespace

std::vector<double> energy_coefficients(PerturbationContext& ctx, int n, int a) {
  check_order(a);
  const auto& lvl = ctx.sd().levels.at(n);
  const int delta = lvl.multiplicity;
  std::vector<double> E{lvl.energy};
  double max_imag = 0;
  for (int l = 1; l <= a; ++l) {
    Complex acc{0, 0};
    for (int nu = 1; nu <= 2 * l; ++nu) {
      for (const auto& j : compositions(2 * l, nu)) {
        for (const auto& m : weak_compositions(nu - 1, nu - 1)) {
          // Tr P0 H_{j1} O_{m1} ... O_{m_{nu-1}} H_{j_nu}, evaluated on the
          // level's eigencolumns right to left.
          Complex term{0, 0};
          for (int s = 0; s < delta; ++s) {
            Vector v = ctx.Hj(j[nu - 1]) * lvl.vectors.col(s);
            for (int mu = nu - 2; mu >= 0; --mu) {
              v = ctx.O(n, m[mu]) * v;
              v = ctx.Hj(j[mu]) * v;
            }
            term += lvl.vectors.col(s).dot(v);
          }
          acc += term / static_cast<double>(kappa(m));
        }
      }
    }
    acc /= static_cast<double>(delta);
    max_imag = std::max(max_imag, std::abs(acc.imag()));
    E.push_back(acc.real());
  }
  if (max_imag > 1e-10)
    throw Error("energy-imaginary", "energy coefficient has imaginary part above 1e-10");
  return E;
}

std::vector<double> energy_coefficients_iterative(PerturbationContext& ctx, int n, int a) {
  check_order(a);
  const auto& lvl = ctx.sd().levels.at(n);
  if (lvl.multiplicity != 1)
    throw DegeneracyError("iterative-degenerate",
                          "iterative energy formula requires a non-degenerate level; "
                          "use the trace formula");
  const Vector chi = ctx.chi0(n);
  // E_l = sum_nu sum_{|j|=2l} <chi, H_{j1} O_1 H'_{j2} ... O_1 H'_{j_{nu-1}} O_1 H_{j_nu} chi>
  // with H'_j = H_j - E_{j/2} for even j; interior orders are < l, so the
  // subtraction uses coefficients already computed.
  std::vector<double> E{lvl.energy};
  for (int l = 1; l <= a; ++l) {
    Complex acc{0, 0};
    for (int nu = 1; nu <= 2 * l; ++nu) {
      for (const auto& j : compositions(2 * l, nu)) {
        Vector v = ctx.Hj(j[nu - 1]) * chi;
        for (int mu = nu - 2; mu >= 1; --mu) {
          const Vector w = ctx.O(n, 1) * v;
          v = ctx.Hj(j[mu]) * w;
          if (j[mu] % 2 == 0) v -= E[j[mu] / 2] * w;
        }
        if (nu >= 2) v = ctx.Hj(j[0]) * (ctx.O(n, 1) * v);
        acc += chi.dot(v);
      }
    }
    E.push_back(acc.real());
  }
  return E;
}

std::vector<double> energy_coefficients_explicit(PerturbationContext& ctx, int n) {
  const Vector chi = ctx.chi0(n);
  const Matrix& O1 = ctx.O(n, 1);
  const Matrix& O2 = ctx.O(n, 2);
  const double E1 =
      (chi.dot(ctx.Hj(2) * chi) + chi.dot(ctx.Hj(1) * (O1 * (ctx.Hj(1) * chi)))).real();
  Complex sum4{0, 0};
  for (int nu = 1; nu <= 4; ++nu)
    for (const auto& j : compositions(4, nu)) {
      Vector v = ctx.Hj(j[nu - 1]) * chi;
      for (int mu = nu - 2; mu >= 0; --mu) v = ctx.Hj(j[mu]) * (O1 * v);
      sum4 += chi.dot(v);
    }
  const double corr = chi.dot(ctx.Hj(1) * (O2 * (ctx.Hj(1) * chi))).real();
  return {E1, sum4.real() - E1 * corr};
}

Matrix projector_coefficient(PerturbationContext& ctx, int n, int l) {
  check_order(l);
  const auto& lvl = ctx.sd().levels.at(n);
  if (l == 0) return lvl.projector;
  const int dim = ctx.dim();
  Matrix P = Matrix::Zero(dim, dim);
  for (int nu = 1; nu <= l; ++nu) {
    for (const auto& j : compositions(l, nu)) {
      for (const auto& k : weak_compositions(nu, nu + 1)) {
        Matrix term = ctx.O(n, k[0]);
        for (int mu = 0; mu < nu; ++mu) {
          term = term * ctx.Hj(j[mu]);
          term = term * ctx.O(n, k[mu + 1]);
        }
        P -= term;
      }
    }
  }
  return P;
}

WavefunctionCoefficients wavefunction_coefficients(PerturbationContext& ctx, int n, int a) {
  check_order(a);
  const auto& lvl = ctx.sd().levels.at(n);
  if (lvl.multiplicity != 1)
    throw DegeneracyError("wavefunction-degenerate",
                          "wavefunction expansion requires a non-degenerate level");
  WavefunctionCoefficients out;
  const Vector chi = ctx.chi0(n);
  const int dim = ctx.dim();

  std::vector<Matrix> P(a + 1);
  for (int l = 0; l <= a; ++l) P[l] = projector_coefficient(ctx, n, l);

  out.chi_tilde.assign(a + 1, Vector::Zero(dim));
  out.chi_tilde[0] = chi;
  for (int l = 1; l <= a; ++l) {
    Vector acc = Vector::Zero(dim);
    for (int nu = 1; nu <= l; ++nu)
      for (const auto& j : compositions(l, nu)) {
        Vector v = chi;
        for (int mu = nu - 1; mu >= 0; --mu) v = P[j[mu]] * v;
        acc += v;
      }
    out.chi_tilde[l] = acc;
  }

  // alpha recursion: alpha_odd = 0, alpha_0 = 1,
  // alpha_l = -1/2 sum_{j in N0^4, j1,j2 < l, |j|=l} alpha_j1 alpha_j2 <chi~_j3, chi~_j4>.
  out.alpha.assign(a + 1, 0.0);
  out.alpha[0] = 1.0;
  for (int l = 1; l <= a; ++l) {
    if (l % 2 == 1) continue;
    double acc = 0;
    for (int j1 = 0; j1 < l; ++j1)
      for (int j2 = 0; j2 < l; ++j2)
        for (int j3 = 0; j3 <= l - j1 - j2; ++j3) {
          const int j4 = l - j1 - j2 - j3;
          if (j4 < 0) continue;
          acc += out.alpha[j1] * out.alpha[j2] *
                 Complex(out.chi_tilde[j3].dot(out.chi_tilde[j4])).real();
        }
    out.alpha[l] = -0.5 * acc;
  }

  out.chi.assign(a + 1, Vector::Zero(dim));
  out.chi[0] = chi;
  for (int l = 1; l <= a; ++l) {
    Vector acc = Vector::Zero(dim);
    for (int j = 0; j <= l; ++j) acc += out.alpha[j] * out.chi_tilde[l - j];
    out.chi[l] = acc;
  }

  // Independent route: chi~_l = sum O_1 H'_{j1} ... O_1 H'_{j_{nu-1}} O_1 H_{j_nu} chi
  // with H'_j = H_j - E_{j/2} for even j.
  const std::vector<double> E = energy_coefficients_iterative(ctx, n, a);
  for (int l = 1; l <= a; ++l) {
    Vector acc = Vector::Zero(dim);
    for (int nu = 1; nu <= l; ++nu)
      for (const auto& j : compositions(l, nu)) {
        Vector v = ctx.Hj(j[nu - 1]) * chi;
        v = ctx.O(n, 1) * v;
        for (int mu = nu - 2; mu >= 0; --mu) {
          Vector w = ctx.Hj(j[mu]) * v;
          if (j[mu] % 2 == 0) w -= E[j[mu] / 2] * v;
          v = ctx.O(n, 1) * w;
        }
        acc += v;
      }
    out.iterative_deviation = std::max(out.iterative_deviation, (acc - out.chi_tilde[l]).norm());
  }
  return out;
}

Rdm1Coefficients rdm1_coefficients(PerturbationContext& ctx, int n) {
  const auto& basis = ctx.ops().basis;
  const int e = basis->modes();
  const int M = e + 1;
  const auto& lvl = ctx.sd().levels.at(n);
  const Matrix P1 = projector_coefficient(ctx, n, 1);
  const Matrix& P0 = lvl.projector;

  Rdm1Coefficients out;
  out.gamma0 = Matrix::Zero(M, M);
  out.gamma0(0, 0) = static_cast<double>(lvl.multiplicity);

  out.gamma1 = Matrix::Zero(M, M);
  Complex nbar{0, 0};
  for (int i = 0; i < basis->dim(); ++i) nbar += P0(i, i) * static_cast<double>(basis->total(i));
  out.gamma1(0, 0) = -nbar;

  std::vector<Matrix> raise(e), lower(e);
  for (int m = 0; m < e; ++m) {
    auto lad = ladder(basis, m + 1);
    raise[m] = lad.raise.mat;
    lower[m] = lad.lower.mat;
  }
  for (int m = 0; m < e; ++m) {
    const Complex t = (raise[m] * P1).trace();  // Tr a†_m P_1
    out.gamma1(0, m + 1) = t;
    out.gamma1(m + 1, 0) = std::conj(t);
  }
  for (int x = 0; x < e; ++x)
    for (int y = 0; y < e; ++y) {
      // Tr a†_y a_x P_0 contributes to the (x, y) matrix element.
      out.gamma1(x + 1, y + 1) = (raise[y] * (lower[x] * P0)).trace();
    }
  return out;
}

Matrix conjugated_one_body(const Matrix& A_hframe, const Kernels& kernels,
                           const std::shared_ptr<const FockBasis>& basis, int N) {
  const int e = kernels.M - 1;
  const int d = basis->dim();
  const RealVector n = number_values(*basis);

  Matrix A = Matrix::Zero(d, d);
  // A00 (N - Nhat)
  for (int i = 0; i < d; ++i) A(i, i) = A_hframe(0, 0) * (N - n(i));
  // dGamma_perp(qAq)
  std::vector<int> occ;
  for (int i = 0; i < d; ++i) {
    const auto& s = basis->state(i);
    for (int b = 0; b < e; ++b) {
      if (s[b] == 0) continue;
      for (int a2 = 0; a2 < e; ++a2) {
        const Complex t = A_hframe(a2 + 1, b + 1);
        if (std::abs(t) == 0) continue;
        occ = s;
        double amp = std::sqrt(static_cast<double>(occ[b]));
        occ[b] -= 1;
        occ[a2] += 1;
        amp *= std::sqrt(static_cast<double>(occ[a2]));
        A(basis->index(occ), i) += t * amp;
      }
    }
  }
  // a†(qA phi) sqrt(N - Nhat) + h.c.
  RealVector froot(d);
  for (int i = 0; i < d; ++i) froot(i) = std::sqrt(std::max(N - n(i), 0.0));
  Matrix creation = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    const auto& s = basis->state(i);
    int total = basis->total(i);
    if (total + 1 > basis->nmax()) continue;
    for (int m = 0; m < e; ++m) {
      const Complex coef = A_hframe(m + 1, 0);
      if (std::abs(coef) == 0) continue;
      occ = s;
      occ[m] += 1;
      creation(basis->index(occ), i) += coef * std::sqrt(static_cast<double>(occ[m]));
    }
  }
  const Matrix cr = creation * froot.cast<Complex>().asDiagonal();
  A += cr + cr.adjoint();
  return A / static_cast<double>(N);
}

ObservableExpansion observable_expansion(const Matrix& A_model, const HartreeSolution& sol,
                                         const Kernels& kernels, PerturbationContext& ctx, int N,
                                         int n, int a) {
  if (A_model.rows() != kernels.M || A_model.cols() != kernels.M)
    throw ConfigError("observable-shape", "one-body observable must be MxM");
  const Matrix A_h = sol.B.adjoint() * A_model * sol.B;

  ObservableExpansion out;
  out.lambda = 1.0 / (N - 1.0);

  // Coefficient side on the (smaller) expansion basis.
  const Matrix A_trunc = conjugated_one_body(A_h, kernels, ctx.ops().basis, N);
  for (int l = 0; l <= a; ++l) {
    const Complex t = (A_trunc * projector_coefficient(ctx, n, l)).trace();
    out.coefficients.push_back(t.real());
  }

  // Oracle side on the full nmax = N basis.
  auto big = std::make_shared<const FockBasis>(kernels.M - 1, N);
  const FockOperator HN = build_excitation_hamiltonian(kernels, N, big);
  SpectralData sd_exact = spectral_data(HN, n + 1, 1e-8);
  // Match the exact cluster to the Bogoliubov level by energy windows.
  const Matrix A_full = conjugated_one_body(A_h, kernels, big, N);
  const auto& target = ctx.sd().levels.at(n);
  Matrix Pex = Matrix::Zero(big->dim(), big->dim());
  int found = 0;
  for (int i = 0; i < sd_exact.eigenvalues.size(); ++i) {
    if (std::abs(sd_exact.eigenvalues(i) - target.energy) < ctx.sd().contour_radius.at(n)) {
      Pex += sd_exact.eigenvectors.col(i) * sd_exact.eigenvectors.col(i).adjoint();
      ++found;
    }
  }
  if (found == 0) throw Error("observable-cluster", "no exact level inside the contour window");
  out.exact = (A_full * Pex).trace().real();
  return out;
}

ObservableExpansion observable_expansion_two_body(const Tensor4& A2_model,
                                                  const HartreeSolution& sol,
                                                  const Kernels& kernels,
                                                  PerturbationContext& ctx, int N, int n, int a) {
  const int M = kernels.M;
  if (A2_model.dim() != M)
    throw ConfigError("observable-shape", "two-body observable must be an M^4 tensor");
  if (N > 14)
    throw ResourceError("observable-two-body-N",
                        "two-body conjugation uses the permanent-based map; N > 14 unsupported");

  ObservableExpansion out;
  out.lambda = 1.0 / (N - 1.0);

  // A_N = C(N,2)^{-1} sum_{i<j} A_{ij}, second-quantized on the N sector,
  // conjugated with the excitation map.
  NParticleBasis np(M, N);
  const double scale = 1.0 / binomial(N, 2);
  const Matrix AN =
      build_second_quantized(Matrix::Zero(M, M), A2_model, scale, np);
  const Matrix U = excitation_map(sol, N);
  const Matrix A_fock = U * AN * U.adjoint();

  const int small = std::min(ctx.dim(), static_cast<int>(A_fock.rows()));
  for (int l = 0; l <= a; ++l) {
    const Matrix Pl = projector_coefficient(ctx, n, l);
    out.coefficients.push_back(
        (A_fock.topLeftCorner(small, small) * Pl.topLeftCorner(small, small)).trace().real());
  }

  auto big = std::make_shared<const FockBasis>(M - 1, N);
  const FockOperator HN = build_excitation_hamiltonian(kernels, N, big);
  SpectralData sd_exact = spectral_data(HN, n + 1, 1e-8);
  const auto& target = ctx.sd().levels.at(n);
  Matrix Pex = Matrix::Zero(big->dim(), big->dim());
  int found = 0;
  for (int i = 0; i < sd_exact.eigenvalues.size(); ++i) {
    if (std::abs(sd_exact.eigenvalues(i) - target.energy) < ctx.sd().contour_radius.at(n)) {
      Pex += sd_exact.eigenvectors.col(i) * sd_exact.eigenvectors.col(i).adjoint();
      ++found;
    }
  }
  if (found == 0) throw Error("observable-cluster", "no exact level inside the contour window");
  out.exact = (A_fock * Pex).trace().real();
  return out;
}

ExpansionResult run_expansion(const Kernels& kernels, int n, int a, int nmax) {
  check_order(a);
  auto compute = [&](int trunc) {
    auto basis = std::make_shared<const FockBasis>(kernels.M - 1, trunc);
    Kops ops = build_Kops(kernels, basis);
    SpectralData sd = spectral_data(build_H0(ops), n + 1, 1e-8);
    CoefficientTable table = taylor_coefficients(std::max(2 * a, 2) + 1);
    return std::make_unique<PerturbationContext>(std::move(ops), std::move(sd), std::move(table));
  };
  auto ctx = compute(nmax);
  auto ctx2 = compute(nmax + 2);

  ExpansionResult res;
  res.level = n;
  res.order = a;
  res.nmax = nmax;
  res.delta0 = ctx->sd().levels.at(n).multiplicity;
  res.E = energy_coefficients(*ctx, n, a);
  const std::vector<double> E2 = energy_coefficients(*ctx2, n, a);
  for (size_t i = 0; i < res.E.size(); ++i) {
    res.E_delta.push_back(std::abs(res.E[i] - E2[i]));
    if (res.E_delta[i] >= 1e-6 * std::max(1.0, std::abs(res.E[i]))) res.truncation_flagged = true;
  }
  res.provenance = "trace";
  if (res.delta0 == 1) {
    const auto wf = wavefunction_coefficients(*ctx, n, a);
    res.alpha = wf.alpha;
    res.provenance = "trace+iterative";
  }
  for (int l = 1; l <= std::min(a, 3); ++l) {
    const Matrix P = projector_coefficient(*ctx, n, l);
    res.trace_Pl.push_back(std::abs(P.trace()));
    res.hermiticity_Pl.push_back((P - P.adjoint()).cwiseAbs().maxCoeff());
  }
  return res;
}

}  // namespace bogexp
