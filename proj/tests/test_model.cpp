#include "doctest.h"

#include <cmath>
#include <random>

#include "bogexp/bogoliubov.hpp"
#include "bogexp/model.hpp"

using namespace bogexp;

namespace {

int mode_of_momentum(const ModelSpec& m, const std::vector<int>& k) {
  for (int i = 0; i < m.M; ++i)
    if (m.momenta[i] == k) return i;
  return -1;
}

// Independent Hartree oracle: projected gradient descent on the unit sphere
// from many random starts.
double hartree_oracle(const ModelSpec& model, int starts, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double best = 1e300;
  for (int s = 0; s < starts; ++s) {
    Vector phi(model.M);
    for (int i = 0; i < model.M; ++i) phi(i) = Complex(gauss(rng), gauss(rng));
    phi.normalize();
    double E = hartree_energy(model, phi);
    double step = 0.2;
    for (int iter = 0; iter < 4000; ++iter) {
      const Vector grad = (model.T + mean_field(model, phi)) * phi;
      Vector trial = phi - step * grad;
      trial.normalize();
      const double Et = hartree_energy(model, trial);
      if (Et <= E) {
        phi = trial;
        E = Et;
        step *= 1.1;
      } else {
        step *= 0.5;
        if (step < 1e-14) break;
      }
    }
    best = std::min(best, E);
  }
  return best;
}

}  // namespace

TEST_CASE("torus free gas: kinetic diagonal and zero interaction") {
  TorusSpec ts;
  ts.d = 1;
  ts.Kcut = 1;
  ModelSpec m = build_torus_model(ts);
  REQUIRE(m.M == 3);
  // modes ordered with k=0 first; diagonal values {0,1,1} over momenta (0,-1,1)
  CHECK(m.momenta[0] == std::vector<int>{0});
  CHECK(m.T(0, 0).real() == doctest::Approx(0.0));
  CHECK(m.T(mode_of_momentum(m, {-1}), mode_of_momentum(m, {-1})).real() == doctest::Approx(1.0));
  CHECK(m.T(mode_of_momentum(m, {1}), mode_of_momentum(m, {1})).real() == doctest::Approx(1.0));
  double vmax = 0;
  for (auto& v : m.V.data()) vmax = std::max(vmax, std::abs(v));
  CHECK(vmax == 0.0);
  validate_model(m);
}

TEST_CASE("torus interaction: momentum conservation and (2pi)^-d scale") {
  const double g = 0.7;
  TorusSpec ts;
  ts.d = 1;
  ts.Kcut = 1;
  ts.vhat[{0}] = g;
  ts.vhat[{1}] = g;  // symmetrized to -1 automatically
  ModelSpec m = build_torus_model(ts);
  const int k0 = mode_of_momentum(m, {0}), kp = mode_of_momentum(m, {1}),
            km = mode_of_momentum(m, {-1});
  // conserving entries carry g/(2pi)
  CHECK(m.V(kp, km, k0, k0).real() == doctest::Approx(g / (2 * M_PI)).epsilon(1e-14));
  CHECK(m.V(k0, k0, k0, k0).real() == doctest::Approx(g / (2 * M_PI)).epsilon(1e-14));
  CHECK(m.V(kp, k0, k0, kp).real() == doctest::Approx(g / (2 * M_PI)).epsilon(1e-14));
  // momentum-violating entries vanish
  CHECK(std::abs(m.V(kp, k0, k0, k0)) == 0.0);
  CHECK(std::abs(m.V(kp, kp, k0, k0)) == 0.0);
  validate_model(m);
}

TEST_CASE("torus mode count: Kcut=2 gives M=5") {
  TorusSpec ts;
  ts.d = 1;
  ts.Kcut = 2;
  CHECK(build_torus_model(ts).M == 5);
}

TEST_CASE("torus spec validation") {
  TorusSpec bad;
  bad.d = 1;
  bad.Kcut = 1;
  bad.vhat[{0}] = -1.0;
  CHECK_THROWS_AS(build_torus_model(bad), ConfigError);

  TorusSpec range;
  range.d = 1;
  range.Kcut = 1;
  range.vhat[{5}] = 1.0;
  CHECK_THROWS_AS(build_torus_model(range), ConfigError);

  TorusSpec asym;
  asym.d = 1;
  asym.Kcut = 1;
  asym.vhat[{1}] = 1.0;
  asym.vhat[{-1}] = 2.0;
  CHECK_THROWS_AS(build_torus_model(asym), ConfigError);

  TorusSpec huge;
  huge.d = 2;
  huge.Kcut = 6;
  CHECK_THROWS_AS(build_torus_model(huge), ResourceError);
}

TEST_CASE("model validation catches broken symmetries and false positivity") {
  ModelSpec m = random_positive_model(3, 7);
  validate_model(m);

  ModelSpec broken = m;
  broken.V(0, 1, 2, 0) += Complex(1e-3, 0);
  CHECK_THROWS_AS(validate_model(broken), ConfigError);

  ModelSpec negative = m;
  for (auto& v : negative.V.data()) v = -v;
  CHECK_THROWS_AS(validate_model(negative), ConfigError);
  negative.positive_type = false;
  CHECK_NOTHROW(validate_model(negative));
}

TEST_CASE("hartree on the torus: uniform minimizer and frozen constants") {
  TorusSpec ts;
  ts.d = 1;
  ts.Kcut = 1;
  ts.vhat[{0}] = 1.5;
  ts.vhat[{1}] = 1.5;
  ModelSpec m = build_torus_model(ts);
  HartreeSolution sol = hartree_solve(m);
  // phi is the zero-momentum coordinate vector
  CHECK(std::abs(sol.phi(0) - Complex{1, 0}) < 1e-12);
  CHECK(sol.eH == doctest::Approx(1.5 / (4 * M_PI)).epsilon(1e-14));
  CHECK(sol.muH == doctest::Approx(1.5 / (2 * M_PI)).epsilon(1e-14));
  CHECK((sol.h * sol.phi).norm() < 1e-10);
  CHECK(sol.gH == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((sol.q * sol.q - sol.q).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(sol.phi.norm() - 1.0) < 1e-12);
}

TEST_CASE("hartree with V=0 reduces to the ground state of T") {
  ModelSpec m;
  m.M = 4;
  m.T = Matrix::Zero(4, 4);
  m.T(0, 0) = 0.3;
  m.T(1, 1) = 1.0;
  m.T(2, 2) = 2.0;
  m.T(3, 3) = 4.0;
  m.T(0, 1) = m.T(1, 0) = 0.1;
  m.V = Tensor4(4);
  HartreeSolution sol = hartree_solve(m);
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.T);
  CHECK(sol.eH == doctest::Approx(es.eigenvalues()(0)).epsilon(1e-12));
  const Matrix expected_h = m.T - es.eigenvalues()(0) * Matrix::Identity(4, 4);
  CHECK((sol.h - expected_h).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("hartree agrees with a 64-start projected-gradient oracle") {
  ModelSpec m = random_positive_model(4, 2024);
  HartreeSolution sol = hartree_solve(m);
  const double oracle = hartree_oracle(m, 64, 99);
  CHECK(std::abs(sol.eH - oracle) < 1e-8);
}

TEST_CASE("hartree SCF energies are non-increasing after damping") {
  ModelSpec m = random_positive_model(4, 5, 0.6);
  HartreeSolution sol = hartree_solve(m);
  for (size_t i = 1; i < sol.energy_history.size(); ++i)
    CHECK(sol.energy_history[i] <= sol.energy_history[i - 1] + 1e-12);
}

TEST_CASE("hartree rejects a degenerate mean-field ground state") {
  ModelSpec m;
  m.M = 3;
  m.T = Matrix::Zero(3, 3);
  m.T(2, 2) = 1.0;  // two degenerate lowest levels
  m.V = Tensor4(3);
  CHECK_THROWS_AS(hartree_solve(m), DegeneracyError);
}

TEST_CASE("gauge invariance: a global phase changes neither energies nor kernels") {
  ModelSpec m = random_positive_model(3, 11);
  HartreeSolution sol = hartree_solve(m);
  Kernels ker = build_kernels(sol, m);

  HartreeSolution rotated = sol;
  const Complex z = std::polar(1.0, 0.7343);
  rotated.phi *= z;
  rotated.B.col(0) = rotated.phi;
  CHECK(hartree_energy(m, rotated.phi) == doctest::Approx(sol.eH).epsilon(1e-13));
  const Matrix h2 = m.T + mean_field(m, rotated.phi) -
                    Complex(rotated.phi.dot((m.T + mean_field(m, rotated.phi)) * rotated.phi)) *
                        Matrix::Identity(3, 3);
  CHECK((h2 - sol.h).cwiseAbs().maxCoeff() < 1e-12);
  Kernels ker2 = build_kernels(rotated, m);
  CHECK((ker.K2.cwiseAbs() - ker2.K2.cwiseAbs()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((ker.K1.cwiseAbs() - ker2.K1.cwiseAbs()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("kernels vanish for V=0") {
  ModelSpec m;
  m.M = 3;
  m.T = Matrix::Zero(3, 3);
  m.T(1, 1) = 1.0;
  m.T(2, 2) = 2.5;
  m.V = Tensor4(3);
  HartreeSolution sol = hartree_solve(m);
  Kernels ker = build_kernels(sol, m);
  CHECK(ker.K1.cwiseAbs().maxCoeff() == 0.0);
  CHECK(ker.K2.cwiseAbs().maxCoeff() == 0.0);
  double k34 = 0;
  for (auto& v : ker.K3) k34 = std::max(k34, std::abs(v));
  for (auto& v : ker.K4.data()) k34 = std::max(k34, std::abs(v));
  CHECK(k34 == 0.0);
}

TEST_CASE("torus kernels: pair kernel couples only opposite momenta") {
  const double g = 0.9;
  TorusSpec ts;
  ts.d = 1;
  ts.Kcut = 1;
  ts.vhat[{1}] = g;
  ModelSpec m = build_torus_model(ts);
  HartreeSolution sol = hartree_solve(m);
  Kernels ker = build_kernels(sol, m);
  // excitation modes are momenta -1, +1 in h-eigenbasis order
  int ip = -1, im = -1;
  for (int i = 1; i < 3; ++i) {
    Vector col = sol.B.col(i);
    if (std::abs(col(mode_of_momentum(m, {1}))) > 0.5) ip = i - 1;
    if (std::abs(col(mode_of_momentum(m, {-1}))) > 0.5) im = i - 1;
  }
  REQUIRE(ip >= 0);
  REQUIRE(im >= 0);
  CHECK(std::abs(ker.K2(ip, im) - Complex(g / (2 * M_PI), 0)) < 1e-13);
  CHECK(std::abs(ker.K2(ip, ip)) < 1e-13);
  CHECK((ker.K2 - ker.K2.transpose()).cwiseAbs().maxCoeff() < 1e-13);
  // direct tensor contraction cross-check: K2[m,n] = sum V[m,n,p,q] phi_p phi_q
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      Complex acc{0, 0};
      for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q) {
          Complex vmp{0, 0};
          // transform bra indices to the h-frame
          for (int mm = 0; mm < 3; ++mm)
            for (int nn = 0; nn < 3; ++nn)
              vmp += std::conj(sol.B(mm, a + 1)) * std::conj(sol.B(nn, b + 1)) *
                     m.V(mm, nn, p, q);
          acc += vmp * sol.phi(p) * sol.phi(q);
        }
      CHECK(std::abs(acc - ker.K2(a, b)) < 1e-12);
    }
}

TEST_CASE("kernel identities in the h-eigenbasis: vanishing condensate entries") {
  for (std::uint64_t seed : {3ull, 17ull}) {
    ModelSpec m = random_positive_model(3, seed);
    HartreeSolution sol = hartree_solve(m);
    Kernels ker = build_kernels(sol, m);
    // W_0000 = W_000m = W_m0n0 = 0
    CHECK(std::abs(ker.W(0, 0, 0, 0)) < 1e-12);
    for (int mm = 0; mm < 3; ++mm) {
      CHECK(std::abs(ker.W(0, 0, 0, mm)) < 1e-12);
      for (int nn = 0; nn < 3; ++nn) CHECK(std::abs(ker.W(mm, 0, nn, 0)) < 1e-12);
    }
    // K1 Hermitian, K2 symmetric, K4 Hermitian on pairs
    CHECK((ker.K1 - ker.K1.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((ker.K2 - ker.K2.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    const int e = 2;
    for (int a = 0; a < e; ++a)
      for (int b = 0; b < e; ++b)
        for (int c = 0; c < e; ++c)
          for (int d2 = 0; d2 < e; ++d2)
            CHECK(std::abs(ker.K4(a, b, c, d2) - std::conj(ker.K4(c, d2, a, b))) < 1e-12);
    // K3 extended to the full space annihilates phi: its annihilation slot is
    // q-projected, so the phi component (index 0 in the h-frame) is absent.
    Vector phi_h = Vector::Zero(3);
    phi_h(0) = 1.0;
    for (int a = 0; a < e; ++a)
      for (int b = 0; b < e; ++b) {
        Complex acc{0, 0};
        for (int p = 0; p < 3; ++p) {
          const Complex coef = (p == 0) ? Complex{0, 0} : ker.W(a + 1, b + 1, p, 0);
          acc += coef * phi_h(p);
        }
        CHECK(std::abs(acc) < 1e-12);
      }
  }
}

TEST_CASE("kernel K operator is positive semidefinite on real-structured models") {
  // real random model: conjugation acts entrywise
  ModelSpec m = random_positive_model(4, 31, 0.3, /*real_valued=*/true);
  HartreeSolution sol = hartree_solve(m);
  Matrix K(m.M, m.M);
  for (int a = 0; a < m.M; ++a)
    for (int b = 0; b < m.M; ++b) {
      Complex acc{0, 0};
      for (int p = 0; p < m.M; ++p)
        for (int q = 0; q < m.M; ++q) acc += m.V(a, b, p, q) * sol.phi(p) * sol.phi(q);
      K(a, b) = acc;
    }
  Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix((K + K.adjoint()) / 2.0));
  CHECK(es.eigenvalues()(0) > -1e-10);

  // torus: conjugation flips momenta
  TorusSpec ts;
  ts.d = 1;
  ts.Kcut = 1;
  ts.vhat[{0}] = 1.0;
  ts.vhat[{1}] = 0.5;
  ModelSpec tor = build_torus_model(ts);
  HartreeSolution tsol = hartree_solve(tor);
  Matrix Kt(tor.M, tor.M);
  for (int a = 0; a < tor.M; ++a)
    for (int b = 0; b < tor.M; ++b) {
      std::vector<int> mk = tor.momenta[b];
      for (int& c : mk) c = -c;
      int bf = mode_of_momentum(tor, mk);
      Complex acc{0, 0};
      for (int p = 0; p < tor.M; ++p)
        for (int q = 0; q < tor.M; ++q) acc += tor.V(a, bf, p, q) * tsol.phi(p) * tsol.phi(q);
      Kt(a, b) = acc;
    }
  Eigen::SelfAdjointEigenSolver<Matrix> est(Matrix((Kt + Kt.adjoint()) / 2.0));
  CHECK(est.eigenvalues()(0) > -1e-10);
}

TEST_CASE("two-dimensional torus: mode set, conservation, dispersion") {
  TorusSpec ts;
  ts.d = 2;
  ts.Kcut = 1;
  ts.vhat[{0, 0}] = 1.0;
  ts.vhat[{1, 0}] = 0.8;
  ts.vhat[{0, 1}] = 0.8;
  ts.vhat[{1, 1}] = 0.3;
  ModelSpec m = build_torus_model(ts);
  REQUIRE(m.M == 9);
  CHECK(m.momenta[0] == std::vector<int>{0, 0});
  CHECK(m.T(0, 0).real() == 0.0);
  validate_model(m);
  HartreeSolution sol = hartree_solve(m);
  CHECK(std::abs(sol.phi(0) - Complex{1, 0}) < 1e-12);
  CHECK(sol.eH == doctest::Approx(0.5 / std::pow(2 * M_PI, 2)).epsilon(1e-13));
  Kernels ker = build_kernels(sol, m);
  QuadraticSolution qs = diagonalize_quadratic(ker);
  // dispersion per mode: sqrt(|k|^4 + 2 |k|^2 veff(k)) with veff the K1 entry
  for (int i = 0; i < 8; ++i) {
    const double eps = ker.eps_exc(i);
    const double veff = ker.K1(i, i).real();
    const double expect = std::sqrt(eps * eps + 2 * eps * veff);
    // quasiparticle energies are sorted; match against the multiset
    double best = 1e300;
    for (int j = 0; j < 8; ++j) best = std::min(best, std::abs(qs.d(j) - expect));
    CHECK(best < 1e-12);
  }
}

TEST_CASE("hartree non-convergence raises a diagnostic with residual history") {
  ModelSpec m = random_positive_model(4, 2024, 0.8);
  HartreeOptions opts;
  opts.max_iter = 1;
  opts.tol = 1e-16;
  try {
    hartree_solve(m, opts);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(std::string(e.what()).find("residuals:") != std::string::npos);
    CHECK(e.reason() == "hartree-no-convergence");
  }
}
