#include "doctest.h"

#include <cmath>

#include "bogexp/combinatorics.hpp"
#include "bogexp/expansion.hpp"
#include "bogexp/verify.hpp"

using namespace bogexp;

namespace {

// Independent binomial-series oracle: x^j coefficient of (1-x)^{(1-2l)/2}
// via the descending-factor form (-1)^j C(s, j).
double binomial_series_coeff(int l, int j) {
  const double s = 0.5 * (1 - 2 * l);
  double c = 1.0;
  for (int i = 0; i < j; ++i) c *= (s - i) / (i + 1);
  return ((j % 2 == 0) ? 1.0 : -1.0) * c;
}

struct Setup {
  HartreeSolution sol;
  Kernels ker;
  Kops ops;
  std::shared_ptr<PerturbationContext> ctx;
};

Setup make_setup(const ModelSpec& model, int nmax, int levels = 2) {
  Setup s;
  s.sol = hartree_solve(model);
  s.ker = build_kernels(s.sol, model);
  auto basis = std::make_shared<const FockBasis>(s.ker.M - 1, nmax);
  s.ops = build_Kops(s.ker, basis);
  SpectralData sd = spectral_data(build_H0(s.ops), levels, 1e-8);
  s.ctx = std::make_shared<PerturbationContext>(s.ops, std::move(sd), taylor_coefficients(16));
  return s;
}

ModelSpec torus_fixture(double v0, double v1) {
  TorusSpec ts;
  ts.d = 1;
  ts.Kcut = 1;
  ts.vhat[{0}] = v0;
  ts.vhat[{1}] = v1;
  return build_torus_model(ts);
}

ModelSpec free_fixture() {
  ModelSpec m;
  m.M = 3;
  m.T = Matrix::Zero(3, 3);
  m.T(1, 1) = 1.0;
  m.T(2, 2) = 2.3;
  m.V = Tensor4(3);
  return m;
}

}  // namespace

TEST_CASE("Taylor coefficients: frozen values and series oracle") {
  const CoefficientTable t = taylor_coefficients(8);
  for (int l = 0; l <= 8; ++l) CHECK(t.c(l, 0) == 1.0);
  CHECK(t.cj(1) == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(t.cj(2) == doctest::Approx(-0.125).epsilon(1e-15));
  CHECK(t.cj(3) == doctest::Approx(-1.0 / 16.0).epsilon(1e-15));
  for (int l = 0; l <= 8; ++l)
    for (int j = 0; j <= 8; ++j) {
      const double oracle = binomial_series_coeff(l, j);
      CHECK(std::abs(t.c(l, j) - oracle) <= 1e-14 * std::max(1.0, std::abs(oracle)));
    }
  // d-table frozen values and defining sum
  CHECK(t.d(0, 0) == 1.0);
  CHECK(t.d(1, 0) == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(t.d(1, 1) == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("scalar identity: order-lambda term of the pair square root is -(2n-1)/2") {
  // sqrt((N-n)(N-n-1))/(N-1) = 1 + lambda (d10 + d11 (n-1)) + O(lambda^2)
  const CoefficientTable t = taylor_coefficients(4);
  for (int n : {0, 1, 2, 5}) {
    const double predicted = t.d(1, 0) + t.d(1, 1) * (n - 1.0);
    CHECK(predicted == doctest::Approx(-(2.0 * n - 1.0) / 2.0).epsilon(1e-14));
    // numerical derivative in lambda at lambda -> 0 via Richardson over N
    const double f1 = (sqrt2_scalar(n, 1001) - 1.0) * 1000.0;
    const double f2 = (sqrt2_scalar(n, 2001) - 1.0) * 2000.0;
    CHECK(2 * f2 - f1 == doctest::Approx(predicted).epsilon(1e-5));
  }
}

TEST_CASE("scalar remainders: exact values and bounds") {
  const CoefficientTable t = taylor_coefficients(6);
  // a=0, n=1: sqrt(N-1)/(N-1) = lambda^(1/2) exactly, so the remainder vanishes
  CHECK(std::abs(r3_scalar(t, 0, 1, 30)) < 1e-12);
  CHECK(scalar_remainder_check(0, 30, {0, 1, 2, 3}).ok);
  CHECK(scalar_remainder_check(3, 50, {0, 1, 5, 10}).ok);
  ScalarRemainderReport rep = scalar_remainder_check(3, 50, {5});
  CHECK(rep.worst_margin3 <= 1.0);
  CHECK(rep.worst_margin2 <= 1.0);
}

TEST_CASE("H_j operators: vacuum expectations, parity, H_3 structure") {
  Setup s = make_setup(random_positive_model(3, 8), 9);
  const CoefficientTable t = taylor_coefficients(8);
  const int vac = s.ops.basis->index({0, 0});
  for (int j = 1; j <= 4; ++j) {
    FockOperator Hj = build_Hj(s.ops, t, j);
    CHECK((Hj.mat - Hj.mat.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
    for (int shift : Hj.sector_shift) CHECK((shift % 2 + 2) % 2 == j % 2);
    if (j <= 2) CHECK(std::abs(Hj.mat(vac, vac)) < 1e-13);
  }
  // H_3 = -1/2 (K3 (Nhat-1) + h.c.)
  const FockOperator H3 = build_Hj(s.ops, t, 3);
  RealVector nm1(s.ops.basis->dim());
  for (int i = 0; i < s.ops.basis->dim(); ++i) nm1(i) = s.ops.basis->total(i) - 1.0;
  const Matrix k3n = s.ops.K3.mat * nm1.cast<Complex>().asDiagonal();
  CHECK((H3.mat - (-0.5) * (k3n + k3n.adjoint())).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("remainder identity H^< = sum lambda^{j/2} H_j + lambda^{(a+1)/2} R_a") {
  Setup s = make_setup(random_positive_model(3, 19), 8);
  const CoefficientTable t = taylor_coefficients(10);
  for (int a = 0; a <= 3; ++a) {
    const auto rep = remainder_identity_check(s.ops, t, a, 12);
    CHECK(rep.ok);
    CHECK(rep.max_deviation < 1e-10);
  }
  // V = 0: all H_j and R_a vanish identically for j >= 1
  Setup f = make_setup(free_fixture(), 6, 1);
  for (int j = 1; j <= 4; ++j)
    CHECK(build_Hj(f.ops, t, j).mat.cwiseAbs().maxCoeff() < 1e-14);
  for (int a = 0; a <= 2; ++a)
    CHECK(build_Ra(f.ops, t, a, 9).mat.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("energy coefficients: free gas gives zero, formulas cross-agree") {
  Setup f = make_setup(free_fixture(), 8, 1);
  const auto Ef = energy_coefficients(*f.ctx, 0, 3);
  const auto Efi = energy_coefficients_iterative(*f.ctx, 0, 3);
  for (int l = 1; l <= 3; ++l) {
    CHECK(std::abs(Ef[l]) < 1e-13);
    CHECK(std::abs(Efi[l]) < 1e-13);
  }

  for (std::uint64_t seed : {101ull, 102ull, 103ull, 104ull, 105ull}) {
    Setup s = make_setup(random_positive_model(3, seed), 11);
    REQUIRE(s.ctx->sd().levels[0].multiplicity == 1);
    const auto Etr = energy_coefficients(*s.ctx, 0, 2);
    const auto Eit = energy_coefficients_iterative(*s.ctx, 0, 2);
    const auto Eex = energy_coefficients_explicit(*s.ctx, 0);
    CHECK(std::abs(Etr[1] - Eit[1]) < 1e-9);
    CHECK(std::abs(Etr[2] - Eit[2]) < 1e-9);
    CHECK(std::abs(Etr[1] - Eex[0]) < 1e-10);
    CHECK(std::abs(Etr[2] - Eex[1]) < 1e-10);
  }
}

TEST_CASE("parity: traces of odd-total chains vanish") {
  Setup s = make_setup(random_positive_model(3, 55), 9);
  const auto& P0 = s.ctx->sd().levels[0].projector;
  // |j| = 1 and every composition with |j| = 3
  CHECK(std::abs((P0 * s.ctx->Hj(1)).trace()) < 1e-12);
  for (int nu = 1; nu <= 3; ++nu)
    for (const auto& j : compositions(3, nu)) {
      Matrix chain = P0;
      for (size_t i = 0; i < j.size(); ++i) {
        chain = chain * s.ctx->Hj(j[i]);
        if (i + 1 < j.size()) chain = chain * s.ctx->O(0, 1);
      }
      CHECK(std::abs(chain.trace()) < 1e-12);
    }
}

TEST_CASE("energy coefficient E_1 matches an exact-diagonalization polynomial fit") {
  ModelSpec m = torus_fixture(1.5, 1.5);
  Setup s = make_setup(m, 14);
  const auto E = energy_coefficients(*s.ctx, 0, 1);

  std::vector<int> Ns{10, 14, 20, 28, 40};
  Eigen::MatrixXd X(Ns.size(), 4);
  Eigen::VectorXd y(Ns.size());
  for (size_t i = 0; i < Ns.size(); ++i) {
    const double lam = 1.0 / (Ns[i] - 1.0);
    const FockOperator HN = build_excitation_hamiltonian(s.ker, Ns[i]);
    Eigen::SelfAdjointEigenSolver<Matrix> es(HN.mat, Eigen::EigenvaluesOnly);
    y(i) = es.eigenvalues()(0) - E[0];
    for (int p = 0; p < 4; ++p) X(i, p) = std::pow(lam, p);
  }
  Eigen::VectorXd coef = X.colPivHouseholderQr().solve(y);
  CHECK(std::abs(coef(0)) < 1e-6);                    // no constant offset
  CHECK(std::abs(coef(1) - E[1]) / std::abs(E[1]) < 1e-3);  // lambda-linear term
}

TEST_CASE("iterative energies reject degenerate levels; trace formula handles them") {
  ModelSpec m = torus_fixture(1.5, 1.5);
  Setup s = make_setup(m, 12, 2);
  REQUIRE(s.ctx->sd().levels[1].multiplicity == 2);
  CHECK_THROWS_AS(energy_coefficients_iterative(*s.ctx, 1, 1), DegeneracyError);
  const auto E = energy_coefficients(*s.ctx, 1, 1);  // must not throw
  CHECK(std::isfinite(E[1]));
}

TEST_CASE("projector coefficients: base case, structure at l=1, algebra") {
  Setup s = make_setup(random_positive_model(3, 47), 10);
  const auto& sd = s.ctx->sd();
  const Matrix P0 = projector_coefficient(*s.ctx, 0, 0);
  CHECK((P0 - sd.levels[0].projector).cwiseAbs().maxCoeff() == 0.0);

  const Matrix P1 = projector_coefficient(*s.ctx, 0, 1);
  const Matrix expect = s.ctx->O(0, 1) * s.ctx->Hj(1) * P0 + P0 * s.ctx->Hj(1) * s.ctx->O(0, 1);
  CHECK((P1 - expect).cwiseAbs().maxCoeff() < 1e-10);

  std::vector<Matrix> P{P0, P1};
  for (int l = 2; l <= 3; ++l) P.push_back(projector_coefficient(*s.ctx, 0, l));
  for (int l = 1; l <= 3; ++l) {
    CHECK(std::abs(P[l].trace()) < 1e-9);
    CHECK((P[l] - P[l].adjoint()).cwiseAbs().maxCoeff() < 1e-10);
    Matrix conv = Matrix::Zero(s.ctx->dim(), s.ctx->dim());
    for (int j = 0; j <= l; ++j) conv += P[j] * P[l - j];
    CHECK((conv - P[l]).cwiseAbs().maxCoeff() < 1e-9);
  }

  // V = 0: all corrections vanish
  Setup f = make_setup(free_fixture(), 8, 1);
  for (int l = 1; l <= 2; ++l)
    CHECK(projector_coefficient(*f.ctx, 0, l).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("wavefunction coefficients: alpha values, chi-tilde structure, P^wf") {
  Setup s = make_setup(random_positive_model(3, 91), 10);
  const auto wf = wavefunction_coefficients(*s.ctx, 0, 3);
  CHECK(wf.alpha[0] == 1.0);
  CHECK(std::abs(wf.alpha[1]) < 1e-12);
  CHECK(std::abs(wf.alpha[3]) < 1e-12);
  CHECK(wf.alpha[2] ==
        doctest::Approx(-0.5 * wf.chi_tilde[1].squaredNorm()).epsilon(1e-12));
  CHECK(std::abs(Complex(wf.chi[0].dot(wf.chi_tilde[1]))) < 1e-10);
  CHECK(std::abs(Complex(wf.chi[0].dot(wf.chi_tilde[2]))) < 1e-10);

  // chi~_2 = (O_1 H_2 + O_1 H_1 O_1 H_1) chi_0; both coefficient routes agree
  const Vector chi = s.ctx->chi0(0);
  const Vector expect = s.ctx->O(0, 1) * (s.ctx->Hj(2) * chi) +
                        s.ctx->O(0, 1) * (s.ctx->Hj(1) * (s.ctx->O(0, 1) * (s.ctx->Hj(1) * chi)));
  CHECK((wf.chi_tilde[2] - expect).norm() < 1e-10);
  CHECK(wf.iterative_deviation < 1e-9);

  // P_l^wf = sum alpha_j1 alpha_j2 |chi~_j3><chi~_j4| reproduces P_l, l <= 2
  for (int l = 1; l <= 2; ++l) {
    Matrix Pwf = Matrix::Zero(s.ctx->dim(), s.ctx->dim());
    for (int j1 = 0; j1 <= l; ++j1)
      for (int j2 = 0; j2 <= l - j1; ++j2)
        for (int j3 = 0; j3 <= l - j1 - j2; ++j3) {
          const int j4 = l - j1 - j2 - j3;
          Pwf += wf.alpha[j1] * wf.alpha[j2] * wf.chi_tilde[j3] * wf.chi_tilde[j4].adjoint();
        }
    CHECK((Pwf - projector_coefficient(*s.ctx, 0, l)).cwiseAbs().maxCoeff() < 1e-9);
  }

  // degenerate level rejected
  Setup tor = make_setup(torus_fixture(1.5, 1.5), 10, 2);
  CHECK_THROWS_AS(wavefunction_coefficients(*tor.ctx, 1, 2), DegeneracyError);
}

TEST_CASE("one-particle density matrix coefficients") {
  // torus: the a^dag-trace line vanishes by momentum conservation and the
  // closed form holds entrywise
  Setup s = make_setup(torus_fixture(1.5, 1.5), 12);
  Rdm1Coefficients rdm = rdm1_coefficients(*s.ctx, 0);
  CHECK(std::abs(rdm.gamma1.trace()) < 1e-9);
  CHECK((rdm.gamma1 - rdm.gamma1.adjoint()).cwiseAbs().maxCoeff() < 1e-10);
  for (int mo = 1; mo < 3; ++mo) CHECK(std::abs(rdm.gamma1(0, mo)) < 1e-12);
  CHECK(rdm.gamma0(0, 0) == Complex{1, 0});

  const double veff = s.ker.K1(0, 0).real();
  const double alpha = veff / (1 + veff + std::sqrt(1 + 2 * veff));
  const double gamma2 = alpha * alpha / (1 - alpha * alpha);
  Matrix closed = Matrix::Zero(3, 3);
  closed(0, 0) = -2 * gamma2;
  closed(1, 1) = gamma2;
  closed(2, 2) = gamma2;
  const double dev12 = (rdm.gamma1 - closed).cwiseAbs().maxCoeff();
  CHECK(dev12 < 1e-6);

  // deviation shrinks when nmax -> 14
  Setup s14 = make_setup(torus_fixture(1.5, 1.5), 14);
  Rdm1Coefficients rdm14 = rdm1_coefficients(*s14.ctx, 0);
  CHECK((rdm14.gamma1 - closed).cwiseAbs().maxCoeff() < dev12);

  // generic model: traceless and Hermitian
  Setup r = make_setup(random_positive_model(3, 12), 10);
  Rdm1Coefficients rr = rdm1_coefficients(*r.ctx, 0);
  CHECK(std::abs(rr.gamma1.trace()) < 1e-9);
  CHECK((rr.gamma1 - rr.gamma1.adjoint()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("observable expansion: identity, q, and parity selection") {
  ModelSpec m = random_positive_model(3, 71);
  Setup s = make_setup(m, 10);
  const int N = 14;

  // A = identity: Tr A P_0 = delta, higher coefficients vanish
  ObservableExpansion ide =
      observable_expansion(Matrix::Identity(3, 3), s.sol, s.ker, *s.ctx, N, 0, 3);
  CHECK(ide.coefficients[0] == doctest::Approx(1.0).epsilon(1e-10));
  for (int l = 1; l <= 3; ++l) CHECK(std::abs(ide.coefficients[l]) < 1e-9);
  CHECK(ide.exact == doctest::Approx(1.0).epsilon(1e-10));

  // A = q: the conjugated observable is exactly Nhat/N
  const Matrix q_model = s.sol.q;
  const Matrix A_h = s.sol.B.adjoint() * q_model * s.sol.B;
  auto basis = s.ops.basis;
  const Matrix conj_q = conjugated_one_body(A_h, s.ker, basis, N);
  Matrix NoverN = Matrix::Zero(basis->dim(), basis->dim());
  for (int i = 0; i < basis->dim(); ++i) NoverN(i, i) = basis->total(i) / double(N);
  CHECK((conj_q - NoverN).cwiseAbs().maxCoeff() < 1e-12);
  ObservableExpansion qexp = observable_expansion(q_model, s.sol, s.ker, *s.ctx, N, 0, 2);
  Complex trP0N{0, 0};
  for (int i = 0; i < basis->dim(); ++i)
    trP0N += s.ctx->sd().levels[0].projector(i, i) * double(basis->total(i));
  CHECK(qexp.coefficients[0] == doctest::Approx((trP0N / double(N)).real()).epsilon(1e-10));

  // parity: odd-l coefficients of a parity-even observable vanish
  for (int l = 1; l <= 3; l += 2) CHECK(std::abs(ide.coefficients[l]) < 1e-10);
  for (int l = 1; l <= 1; l += 2) CHECK(std::abs(qexp.coefficients[l]) < 1e-10);
}

TEST_CASE("run_expansion: diagnostics and invariants") {
  ModelSpec m = torus_fixture(1.5, 1.5);
  HartreeSolution sol = hartree_solve(m);
  Kernels ker = build_kernels(sol, m);
  ExpansionResult res = run_expansion(ker, 0, 2, 10);
  CHECK(res.delta0 == 1);
  CHECK(res.E.size() == 3);
  for (double d : res.E_delta) CHECK(d < 1e-6);
  for (double t : res.trace_Pl) CHECK(t < 1e-9);
  for (double h : res.hermiticity_Pl) CHECK(h < 1e-10);
  REQUIRE(res.alpha.size() == 3);
  CHECK(std::abs(res.alpha[1]) < 1e-12);
  CHECK(res.provenance == "trace+iterative");
  // order guard
  CHECK_THROWS_AS(run_expansion(ker, 0, 7, 24), ConfigError);
}

TEST_CASE("two-body observable: q-pair projector conjugates to Nhat(Nhat-1)/(N(N-1))") {
  ModelSpec m = random_positive_model(3, 71);
  Setup s = make_setup(m, 8);
  const int N = 10;
  // A2 = q tensor q in the model frame
  Tensor4 A2(3);
  const Matrix q = s.sol.q;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c)
        for (int d = 0; d < 3; ++d) A2(a, b, c, d) = q(a, c) * q(b, d);
  ObservableExpansion exp2 = observable_expansion_two_body(A2, s.sol, s.ker, *s.ctx, N, 0, 2);
  // exact Tr A P for the conjugated operator Nhat(Nhat-1)/(N(N-1)) against the
  // series through l = 2: the difference is O(lambda^2)-small but nonzero;
  // the l = 0 coefficient is Tr P0 Nhat(Nhat-1)/(N(N-1)).
  Complex tr0{0, 0};
  const auto& basis = s.ops.basis;
  for (int i = 0; i < basis->dim(); ++i) {
    const double n = basis->total(i);
    tr0 += s.ctx->sd().levels[0].projector(i, i) * n * (n - 1.0);
  }
  CHECK(exp2.coefficients[0] ==
        doctest::Approx((tr0 / (N * (N - 1.0))).real()).epsilon(1e-9));
  CHECK(std::abs(exp2.coefficients[1]) < 1e-10);  // parity
  CHECK(std::isfinite(exp2.exact));
  // resource guard
  CHECK_THROWS_AS(observable_expansion_two_body(A2, s.sol, s.ker, *s.ctx, 20, 0, 1),
                  ResourceError);
}

TEST_CASE("projector coefficients at a degenerate level stay Hermitian and traceless") {
  Setup s = make_setup(torus_fixture(1.5, 1.5), 12, 2);
  REQUIRE(s.ctx->sd().levels[1].multiplicity == 2);
  for (int l = 1; l <= 2; ++l) {
    const Matrix P = projector_coefficient(*s.ctx, 1, l);
    CHECK(std::abs(Complex(P.trace())) < 1e-9);
    CHECK((P - P.adjoint()).cwiseAbs().maxCoeff() < 1e-10);
  }
}
