#include "bogexp/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace bogexp {

namespace {

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

std::pair<RealVector, Matrix> eigh(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  if (solver.info() != Eigen::Success) {
    throw Error("eigh-failed", "Hermitian eigensolver did not converge");
  }
  return {solver.eigenvalues(), solver.eigenvectors()};
}

Vector random_unit_vector(int M, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector v(M);
  for (int i = 0; i < M; ++i) v(i) = Complex(gauss(rng), gauss(rng));
  v.normalize();
  return v;
}

// Orders |phi| entries as a descending sort key; used to break exact energy
// ties between distinct stationary points deterministically.
bool abs_lex_greater(const Vector& a, const Vector& b) {
  for (int i = 0; i < a.size(); ++i) {
    double da = std::abs(a(i)), db = std::abs(b(i));
    if (std::abs(da - db) > 1e-12) return da > db;
  }
  return false;
}

}  // namespace

void validate_model(const ModelSpec& model) {
  const int M = model.M;
  if (M <= 0) throw ConfigError("model-empty", "model has no modes");
  if (model.T.rows() != M || model.T.cols() != M || model.V.dim() != M) {
    throw ConfigError("model-shape", "T/V dimensions do not match M");
  }
  const double scale = std::max(1.0, max_abs(model.T));
  if (max_abs(model.T - model.T.adjoint()) > 1e-12 * scale) {
    throw ConfigError("model-T-not-hermitian", "one-body matrix T is not Hermitian to 1e-12");
  }
  double dev = 0, vmax = 0;
  for (int m = 0; m < M; ++m)
    for (int n = 0; n < M; ++n)
      for (int p = 0; p < M; ++p)
        for (int q = 0; q < M; ++q) {
          dev = std::max(dev, std::abs(model.V(m, n, p, q) - std::conj(model.V(p, q, m, n))));
          dev = std::max(dev, std::abs(model.V(m, n, p, q) - model.V(n, m, q, p)));
          vmax = std::max(vmax, std::abs(model.V(m, n, p, q)));
        }
  if (dev > 1e-14 * std::max(1.0, vmax)) {
    throw ConfigError("model-V-symmetry", "interaction tensor violates its symmetries");
  }
  if (model.positive_type) {
    // Positive type: the reshape (mp),(nq) -> V[m,n,p,q] must be positive
    // semidefinite. The reshape presumes that complex conjugation acts
    // entrywise on the mode basis; on a plane-wave basis conjugation flips
    // momenta, so the second index pair is routed through that flip.
    std::vector<int> flip(M);
    for (int i = 0; i < M; ++i) flip[i] = i;
    if (model.is_torus()) {
      for (int i = 0; i < M; ++i) {
        std::vector<int> mk = model.momenta[i];
        for (int& c : mk) c = -c;
        flip[i] = static_cast<int>(std::find(model.momenta.begin(), model.momenta.end(), mk) -
                                   model.momenta.begin());
      }
    }
    Matrix R(M * M, M * M);
    for (int m = 0; m < M; ++m)
      for (int p = 0; p < M; ++p)
        for (int n = 0; n < M; ++n)
          for (int q = 0; q < M; ++q)
            R(m * M + p, n * M + q) = model.V(m, flip[n], p, flip[q]);
    if (max_abs(R - R.adjoint()) > 1e-10) {
      throw ConfigError("model-not-positive-type", "positive-type reshape is not Hermitian");
    }
    auto [w, U] = eigh(Matrix((R + R.adjoint()) / 2.0));
    if (w(0) < -1e-10) {
      std::ostringstream os;
      os << "positive-type flag set but reshaped tensor has eigenvalue " << w(0);
      throw ConfigError("model-not-positive-type", os.str());
    }
  }
}

ModelSpec build_torus_model(const TorusSpec& spec) {
  if (spec.d != 1 && spec.d != 2) throw ConfigError("torus-dim", "torus dimension must be 1 or 2");
  if (spec.Kcut < 0) throw ConfigError("torus-kcut", "Kcut must be non-negative");

  std::int64_t M64 = 1;
  for (int i = 0; i < spec.d; ++i) M64 *= 2 * spec.Kcut + 1;
  const std::int64_t tensor_bytes = M64 * M64 * M64 * M64 * 16;
  if (M64 > 64) {
    std::ostringstream os;
    os << "torus cutoff needs M=" << M64 << " modes, interaction tensor alone requires "
       << tensor_bytes << " bytes";
    throw ResourceError("torus-too-large", os.str());
  }
  const int M = static_cast<int>(M64);

  // Canonical vhat table: symmetrized, range-checked, non-negative.
  std::map<std::vector<int>, double> table;
  for (const auto& [k, v] : spec.vhat) {
    if (static_cast<int>(k.size()) != spec.d)
      throw ConfigError("torus-vhat-dim", "vhat key has wrong dimension");
    for (int c : k)
      if (std::abs(c) > 2 * spec.Kcut)
        throw ConfigError("torus-vhat-range", "vhat momentum exceeds 2*Kcut");
    if (v < 0) throw ConfigError("torus-vhat-negative", "vhat must be non-negative (positive type)");
    std::vector<int> mk(k);
    for (int& c : mk) c = -c;
    auto it = table.find(mk);
    if (it != table.end() && it->second != v)
      throw ConfigError("torus-vhat-asym", "vhat(-k) != vhat(k)");
    table[k] = v;
    table[mk] = v;
  }
  auto vhat = [&](const std::vector<int>& k) -> double {
    auto it = table.find(k);
    return it == table.end() ? 0.0 : it->second;
  };

  // Mode set {k : |k|_inf <= Kcut}, ordered by (|k|^2, lexicographic), so the
  // zero mode comes first.
  std::vector<std::vector<int>> momenta;
  std::vector<int> k(spec.d, -spec.Kcut);
  while (true) {
    momenta.push_back(k);
    int i = spec.d - 1;
    while (i >= 0 && k[i] == spec.Kcut) {
      k[i] = -spec.Kcut;
      --i;
    }
    if (i < 0) break;
    ++k[i];
  }
  auto ksq = [](const std::vector<int>& kk) {
    int s = 0;
    for (int c : kk) s += c * c;
    return s;
  };
  std::sort(momenta.begin(), momenta.end(), [&](const auto& a, const auto& b) {
    if (ksq(a) != ksq(b)) return ksq(a) < ksq(b);
    return a < b;
  });

  ModelSpec model;
  model.M = M;
  model.torus_dim = spec.d;
  model.momenta = momenta;
  model.positive_type = true;
  {
    std::ostringstream os;
    os << "torus d=" << spec.d << " Kcut=" << spec.Kcut;
    model.label = os.str();
  }
  model.T = Matrix::Zero(M, M);
  for (int m = 0; m < M; ++m) model.T(m, m) = static_cast<double>(ksq(momenta[m]));

  const double norm = std::pow(2 * M_PI, -spec.d);
  model.V = Tensor4(M);
  std::vector<int> diff(spec.d);
  for (int m = 0; m < M; ++m)
    for (int n = 0; n < M; ++n)
      for (int p = 0; p < M; ++p)
        for (int q = 0; q < M; ++q) {
          bool conserved = true;
          for (int c = 0; c < spec.d; ++c) {
            if (momenta[m][c] + momenta[n][c] != momenta[p][c] + momenta[q][c]) {
              conserved = false;
              break;
            }
            diff[c] = momenta[m][c] - momenta[p][c];
          }
          if (conserved) model.V(m, n, p, q) = norm * vhat(diff);
        }
  return model;
}

ModelSpec random_positive_model(int M, std::uint64_t seed, double coupling, bool real_valued) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.5, 1.0);

  ModelSpec model;
  model.M = M;
  {
    std::ostringstream os;
    os << "random M=" << M << " seed=" << seed;
    model.label = os.str();
  }
  Matrix G(M, M);
  auto draw = [&]() { return Complex(gauss(rng), real_valued ? 0.0 : gauss(rng)); };
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < M; ++j) G(i, j) = draw();
  model.T = Matrix((G + G.adjoint()) / 2.0) * 0.3;
  for (int i = 0; i < M; ++i) model.T(i, i) += static_cast<double>(i);

  // V = sum_k lambda_k (A ⊗ conj(A) + conj(A) ⊗ A) over Hermitian A: each term
  // is a positive-type multiplication-operator pair, so all symmetries and the
  // positive-type reshape hold exactly.
  model.V = Tensor4(M);
  const int terms = M;
  for (int t = 0; t < terms; ++t) {
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < M; ++j) G(i, j) = draw();
    Matrix A = (G + G.adjoint()) / 2.0;
    const double lam = coupling * unif(rng) / terms;
    for (int m = 0; m < M; ++m)
      for (int n = 0; n < M; ++n)
        for (int p = 0; p < M; ++p)
          for (int q = 0; q < M; ++q) {
            model.V(m, n, p, q) +=
                lam * (A(m, p) * std::conj(A(n, q)) + std::conj(A(m, p)) * A(n, q));
          }
  }
  model.positive_type = true;
  return model;
}

Matrix mean_field(const ModelSpec& model, const Vector& phi) {
  const int M = model.M;
  Matrix mf = Matrix::Zero(M, M);
  for (int m = 0; m < M; ++m)
    for (int p = 0; p < M; ++p) {
      Complex acc{0, 0};
      for (int n = 0; n < M; ++n)
        for (int q = 0; q < M; ++q) acc += std::conj(phi(n)) * model.V(m, n, p, q) * phi(q);
      mf(m, p) = acc;
    }
  return Matrix((mf + mf.adjoint()) / 2.0);
}

double hartree_energy(const ModelSpec& model, const Vector& phi) {
  const Complex kinetic = phi.dot(model.T * phi);
  const Complex inter = phi.dot(mean_field(model, phi) * phi);
  return kinetic.real() + 0.5 * inter.real();
}

HartreeSolution hartree_solve(const ModelSpec& model, const HartreeOptions& opts) {
  validate_model(model);
  if (opts.tol <= 0) throw ConfigError("hartree-tol", "tolerance must be positive");
  const int M = model.M;

  struct Run {
    bool converged = false;
    double energy = 0;
    Vector phi;
    int iterations = 0;
    double residual = 0;
    std::vector<double> history;
  };

  std::mt19937_64 rng(opts.seed);
  std::vector<Vector> starts;
  {
    auto [w, U] = eigh(model.T);
    starts.push_back(U.col(0));
  }
  for (int s = 0; s < opts.random_starts; ++s) starts.push_back(random_unit_vector(M, rng));

  std::vector<Run> runs;
  std::vector<double> residual_history;
  for (const Vector& start : starts) {
    Run run;
    run.phi = start;
    double E = hartree_energy(model, run.phi);
    run.history.push_back(E);
    for (int iter = 1; iter <= opts.max_iter; ++iter) {
      Matrix F = model.T + mean_field(model, run.phi);
      const double mu = run.phi.dot(F * run.phi).real();
      run.residual = (F * run.phi - mu * run.phi).norm();
      run.iterations = iter - 1;
      residual_history.push_back(run.residual);
      if (run.residual <= opts.tol) {
        run.converged = true;
        break;
      }
      auto [w, U] = eigh(F);
      Vector psi = U.col(0);
      // Align the candidate's phase with the current iterate so the damped
      // combination interpolates rather than cancels.
      const Complex ov = run.phi.dot(psi);
      if (std::abs(ov) > 1e-14) psi *= std::conj(ov) / std::abs(ov);
      // Backtracking damping: halve the step until the energy is
      // non-increasing. s -> 0 recovers the current iterate, so the loop
      // terminates; if no step helps, the iterate is stationary.
      double s = opts.damping;
      bool accepted = false;
      while (s >= 1e-10) {
        Vector trial = (1.0 - s) * run.phi + s * psi;
        const double nrm = trial.norm();
        if (nrm > 1e-14) {
          trial /= nrm;
          const double Et = hartree_energy(model, trial);
          if (Et <= E + 1e-12 * std::max(1.0, std::abs(E))) {
            run.phi = trial;
            E = Et;
            run.history.push_back(E);
            accepted = true;
            break;
          }
        }
        s /= 2;
      }
      if (!accepted) break;  // stationary up to round-off; residual re-checked next pass
    }
    run.energy = E;
    runs.push_back(std::move(run));
  }

  const Run* best = nullptr;
  for (const Run& run : runs) {
    if (!run.converged) continue;
    if (!best || run.energy < best->energy - 1e-12 ||
        (std::abs(run.energy - best->energy) <= 1e-12 && abs_lex_greater(run.phi, best->phi))) {
      best = &run;
    }
  }
  if (!best) {
    std::ostringstream os;
    os << "Hartree SCF did not converge in " << opts.max_iter << " iterations; residuals:";
    for (size_t i = residual_history.size() > 8 ? residual_history.size() - 8 : 0;
         i < residual_history.size(); ++i)
      os << " " << residual_history[i];
    throw ConvergenceError("hartree-no-convergence", os.str());
  }

  HartreeSolution sol;
  sol.phi = best->phi;
  sol.iterations = best->iterations;
  sol.energy_history = best->history;

  // Gauge fix: rotate the global phase so the largest-magnitude component is
  // real positive.
  int imax = 0;
  for (int i = 1; i < M; ++i)
    if (std::abs(sol.phi(i)) > std::abs(sol.phi(imax))) imax = i;
  const Complex big = sol.phi(imax);
  if (std::abs(big) > 0) sol.phi *= std::conj(big) / std::abs(big);

  Matrix F = model.T + mean_field(model, sol.phi);
  sol.muH = sol.phi.dot(F * sol.phi).real();
  sol.eH = hartree_energy(model, sol.phi);
  sol.h = Matrix((F + F.adjoint()) / 2.0) - sol.muH * Matrix::Identity(M, M);
  sol.residual = (sol.h * sol.phi).norm();
  sol.q = Matrix::Identity(M, M) - sol.phi * sol.phi.adjoint();

  // Eigenbasis of h with column 0 = phi. When h is already diagonal and phi
  // is a coordinate vector (the torus case), keep the coordinate basis: this
  // preserves momentum labels through degenerate +-k pairs.
  sol.B = Matrix::Zero(M, M);
  sol.eps = RealVector::Zero(M);
  double offdiag = 0;
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < M; ++j)
      if (i != j) offdiag = std::max(offdiag, std::abs(sol.h(i, j)));
  const bool diagonal_h = offdiag <= 1e-12 * std::max(1.0, max_abs(sol.h));
  const bool coordinate_phi = std::abs(sol.phi(imax)) >= 1.0 - 1e-12;

  if (diagonal_h && coordinate_phi) {
    std::vector<int> order;
    for (int i = 0; i < M; ++i)
      if (i != imax) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return sol.h(a, a).real() < sol.h(b, b).real();
    });
    sol.B.col(0) = sol.phi;
    sol.eps(0) = 0.0;
    for (int j = 0; j < M - 1; ++j) {
      sol.B(order[j], j + 1) = 1.0;
      sol.eps(j + 1) = sol.h(order[j], order[j]).real();
    }
  } else {
    auto [w, U] = eigh(sol.h);
    int jstar = 0;
    double best_ov = 0;
    for (int j = 0; j < M; ++j) {
      const double ov = std::abs(Complex(U.col(j).dot(sol.phi)));
      if (ov > best_ov) {
        best_ov = ov;
        jstar = j;
      }
    }
    if (jstar != 0) {
      throw DegeneracyError("hartree-ground-mismatch",
                            "minimizer is not the ground state of h; model outside scope");
    }
    sol.B.col(0) = sol.phi;
    sol.eps(0) = 0.0;
    int col = 1;
    for (int j = 0; j < M; ++j) {
      if (j == jstar) continue;
      Vector v = U.col(j);
      v -= sol.phi * sol.phi.dot(v);
      v.normalize();
      sol.B.col(col) = v;
      sol.eps(col) = w(j);
      ++col;
    }
  }
  sol.gH = sol.eps(1);
  if (sol.gH <= 1e-10) {
    std::ostringstream os;
    os << "Hartree ground state of h is degenerate (gap " << sol.gH << ")";
    throw DegeneracyError("hartree-degenerate", os.str());
  }
  return sol;
}

namespace {

// W' [a,b,c,d] = sum conj(B[m,a]) conj(B[n,b]) W[m,n,p,q] B[p,c] B[q,d],
// contracted one axis at a time.
Tensor4 transform_tensor(const Tensor4& W, const Matrix& B) {
  const int M = W.dim();
  Tensor4 X(M), Y(M);
  // axis 0 (bra): conj(B)
  for (int a = 0; a < M; ++a)
    for (int n = 0; n < M; ++n)
      for (int p = 0; p < M; ++p)
        for (int q = 0; q < M; ++q) {
          Complex acc{0, 0};
          for (int m = 0; m < M; ++m) acc += std::conj(B(m, a)) * W(m, n, p, q);
          X(a, n, p, q) = acc;
        }
  // axis 1 (bra)
  for (int a = 0; a < M; ++a)
    for (int b = 0; b < M; ++b)
      for (int p = 0; p < M; ++p)
        for (int q = 0; q < M; ++q) {
          Complex acc{0, 0};
          for (int n = 0; n < M; ++n) acc += std::conj(B(n, b)) * X(a, n, p, q);
          Y(a, b, p, q) = acc;
        }
  // axis 2 (ket)
  for (int a = 0; a < M; ++a)
    for (int b = 0; b < M; ++b)
      for (int c = 0; c < M; ++c)
        for (int q = 0; q < M; ++q) {
          Complex acc{0, 0};
          for (int p = 0; p < M; ++p) acc += Y(a, b, p, q) * B(p, c);
          X(a, b, c, q) = acc;
        }
  // axis 3 (ket)
  for (int a = 0; a < M; ++a)
    for (int b = 0; b < M; ++b)
      for (int c = 0; c < M; ++c)
        for (int d = 0; d < M; ++d) {
          Complex acc{0, 0};
          for (int q = 0; q < M; ++q) acc += X(a, b, c, q) * B(q, d);
          Y(a, b, c, d) = acc;
        }
  return Y;
}

}  // namespace

Kernels build_kernels(const HartreeSolution& sol, const ModelSpec& model) {
  const int M = model.M;
  Kernels ker;
  ker.M = M;
  ker.eps_exc = sol.eps.segment(1, M - 1);

  const Matrix mf = mean_field(model, sol.phi);
  const double mu2 = sol.phi.dot(mf * sol.phi).real();

  // W = v - (v*|phi|^2) ⊗ 1 - 1 ⊗ (v*|phi|^2) + <phi,(v*|phi|^2)phi>.
  Tensor4 Wm(M);
  for (int m = 0; m < M; ++m)
    for (int n = 0; n < M; ++n)
      for (int p = 0; p < M; ++p)
        for (int q = 0; q < M; ++q) {
          Complex w = model.V(m, n, p, q);
          if (n == q) w -= mf(m, p);
          if (m == p) w -= mf(n, q);
          if (m == p && n == q) w += mu2;
          Wm(m, n, p, q) = w;
        }

  ker.W = transform_tensor(Wm, sol.B);
  ker.V_frame = transform_tensor(model.V, sol.B);
  ker.T_frame = sol.B.adjoint() * model.T * sol.B;

  const int e = M - 1;
  ker.K1 = Matrix(e, e);
  ker.K2 = Matrix(e, e);
  for (int m = 0; m < e; ++m)
    for (int n = 0; n < e; ++n) {
      ker.K1(m, n) = ker.W(0, m + 1, n + 1, 0);
      ker.K2(m, n) = ker.W(m + 1, n + 1, 0, 0);
    }
  ker.K3.assign(static_cast<size_t>(e) * e * e, Complex{0, 0});
  for (int m = 0; m < e; ++m)
    for (int n = 0; n < e; ++n)
      for (int p = 0; p < e; ++p)
        ker.K3[(static_cast<size_t>(m) * e + n) * e + p] = ker.W(m + 1, n + 1, p + 1, 0);
  ker.K4 = Tensor4(e);
  for (int m = 0; m < e; ++m)
    for (int n = 0; n < e; ++n)
      for (int p = 0; p < e; ++p)
        for (int q = 0; q < e; ++q) ker.K4(m, n, p, q) = ker.W(m + 1, n + 1, p + 1, q + 1);
  return ker;
}

}  // namespace bogexp
