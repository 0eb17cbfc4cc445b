#include "bogexp/verify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bogexp {

namespace {

std::pair<RealVector, Matrix> eigh(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  if (solver.info() != Eigen::Success) throw Error("eigh-failed", "eigensolver did not converge");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

RealVector eigvals_only(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw Error("eigh-failed", "eigensolver did not converge");
  return solver.eigenvalues();
}

DistinctSpectrum distinctify(const RealVector& w, int count, double merge_tol) {
  DistinctSpectrum out;
  int i = 0;
  while (i < w.size() && static_cast<int>(out.energies.size()) < count) {
    int j = i + 1;
    double acc = w(i);
    while (j < w.size() && w(j) - w(j - 1) <= merge_tol * std::max(1.0, std::abs(w(j)))) {
      acc += w(j);
      ++j;
    }
    out.energies.push_back(acc / (j - i));
    out.multiplicities.push_back(j - i);
    i = j;
  }
  return out;
}

// One pipeline shared by the studies: Hartree solve, kernels, coefficient
// contexts at nmax and nmax+2.
struct StudyPipeline {
  HartreeSolution sol;
  Kernels kernels;
  std::unique_ptr<PerturbationContext> ctx, ctx2;

  StudyPipeline(const ModelSpec& model, int n, int nmax) {
    sol = hartree_solve(model);
    kernels = build_kernels(sol, model);
    ctx = make(n, nmax);
    ctx2 = make(n, nmax + 2);
  }

  std::unique_ptr<PerturbationContext> make(int n, int trunc) const {
    auto basis = std::make_shared<const FockBasis>(kernels.M - 1, trunc);
    Kops ops = build_Kops(kernels, basis);
    SpectralData sd = spectral_data(build_H0(ops), n + 1, 1e-8);
    return std::make_unique<PerturbationContext>(std::move(ops), std::move(sd),
                                                 taylor_coefficients(16));
  }

  RealVector exact_excitations(int N) const {
    const FockOperator HN = build_excitation_hamiltonian(kernels, N);
    return eigvals_only(HN.mat);
  }
};

}  // namespace

DistinctSpectrum exact_spectrum(const ModelSpec& model, int N, int count) {
  const Matrix HN = build_HN(model, N);
  if ((HN - HN.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, HN.cwiseAbs().maxCoeff()))
    throw Error("HN-not-hermitian", "assembled H_N is not Hermitian");
  return distinctify(eigvals_only(HN), count, 1e-9);
}

ClusterReport cluster(const SpectralData& bog, const RealVector& excitations_sorted, int n,
                      double merge_tol) {
  if (n < 0 || n >= static_cast<int>(bog.levels.size()))
    throw ConfigError("cluster-level", "Bogoliubov level outside stored range");
  const DistinctSpectrum ds =
      distinctify(excitations_sorted, static_cast<int>(excitations_sorted.size()), merge_tol);

  ClusterReport rep;
  rep.n = n;
  rep.delta0 = bog.levels[n].multiplicity;
  rep.window = bog.contour_radius[n];
  for (size_t nu = 0; nu < ds.energies.size(); ++nu) {
    int inside = 0;
    int match = -1;
    for (size_t m = 0; m < bog.levels.size(); ++m) {
      if (std::abs(ds.energies[nu] - bog.levels[m].energy) < bog.contour_radius[m]) {
        ++inside;
        match = static_cast<int>(m);
      }
    }
    if (inside > 1) {
      std::ostringstream os;
      os << "excitation level " << nu << " lies inside the windows of " << inside
         << " Bogoliubov levels";
      throw Error("cluster-ambiguous", os.str());
    }
    if (match == n) {
      rep.indices.push_back(static_cast<int>(nu));
      rep.excitations.push_back(ds.energies[nu]);
      rep.multiplicities.push_back(ds.multiplicities[nu]);
    }
  }
  if (rep.indices.empty()) throw Error("cluster-empty", "no N-body level inside the window");
  for (size_t i = 1; i < rep.indices.size(); ++i) {
    if (rep.indices[i] != rep.indices[i - 1] + 1)
      throw Error("cluster-gap", "cluster index set is not contiguous");
  }
  double acc = 0;
  for (size_t i = 0; i < rep.excitations.size(); ++i)
    acc += rep.multiplicities[i] * rep.excitations[i];
  rep.mean = acc / rep.delta0;
  return rep;
}

SlopeFit fit_loglog(const std::vector<double>& lambdas, const std::vector<double>& errors,
                    const std::vector<double>& floors, double slope_req, double r2_req) {
  SlopeFit fit;
  bool all_tiny = true;
  for (size_t i = 0; i < errors.size(); ++i) {
    if (errors[i] >= 1e-12) all_tiny = false;
    const double floor = floors.empty() ? 0.0 : floors[i];
    if (errors[i] > 0 && errors[i] > floor) {
      fit.lambdas.push_back(lambdas[i]);
      fit.errors.push_back(errors[i]);
    }
  }
  if (all_tiny) {
    fit.exact_zero = true;
    fit.pass = true;
    return fit;
  }
  const int npts = static_cast<int>(fit.lambdas.size());
  if (npts < 4) {
    fit.pass = false;
    return fit;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (int i = 0; i < npts; ++i) {
    const double x = std::log(fit.lambdas[i]);
    const double y = std::log(fit.errors[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  const double denom = npts * sxx - sx * sx;
  fit.slope = (npts * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / npts;
  double ss_res = 0, ss_tot = 0;
  const double ymean = sy / npts;
  for (int i = 0; i < npts; ++i) {
    const double x = std::log(fit.lambdas[i]);
    const double y = std::log(fit.errors[i]);
    ss_res += std::pow(y - (fit.intercept + fit.slope * x), 2);
    ss_tot += std::pow(y - ymean, 2);
  }
  fit.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  fit.pass = fit.slope >= slope_req && fit.r2 >= r2_req;
  return fit;
}

SlopeFit energy_convergence_study(const ModelSpec& model, int n, int a,
                                  const std::vector<int>& Nlist, const StudySettings& s) {
  StudyPipeline pipe(model, n, s.nmax);
  const std::vector<double> E = energy_coefficients(*pipe.ctx, n, a);
  const std::vector<double> E2 = energy_coefficients(*pipe.ctx2, n, a);

  std::vector<double> lambdas, errors, floors;
  for (int N : Nlist) {
    const double lam = 1.0 / (N - 1.0);
    const RealVector exc = pipe.exact_excitations(N);
    const ClusterReport rep = cluster(pipe.ctx->sd(), exc, n, s.merge_tol);
    double pred = 0, pred2 = 0;
    for (int l = 0; l <= a; ++l) {
      pred += std::pow(lam, l) * E[l];
      pred2 += std::pow(lam, l) * E2[l];
    }
    lambdas.push_back(lam);
    errors.push_back(std::abs(rep.mean - pred));
    floors.push_back(std::abs(pred - pred2));
  }
  SlopeFit fit = fit_loglog(lambdas, errors, floors, a + 0.8, 0.98);
  for (size_t i = 0; i < Nlist.size(); ++i)
    fit.table.push_back({static_cast<double>(Nlist[i]), lambdas[i], errors[i], floors[i]});
  std::ostringstream os;
  os << "energy expansion, level n=" << n << ", order a=" << a
     << "; expected error O(lambda^{a+1})";
  fit.criterion = os.str();
  return fit;
}

ProjectorStudy projector_convergence_study(const ModelSpec& model, int n, int a,
                                           const std::vector<int>& Nlist,
                                           const std::vector<Matrix>& observables,
                                           const std::vector<std::string>& labels,
                                           const StudySettings& s) {
  StudyPipeline pipe(model, n, s.nmax);
  const int small_dim = pipe.ctx->dim();

  std::vector<Matrix> P(a + 1), Pb(a + 1);
  for (int l = 0; l <= a; ++l) {
    P[l] = projector_coefficient(*pipe.ctx, n, l);
    Pb[l] = projector_coefficient(*pipe.ctx2, n, l);
  }

  std::vector<double> lambdas;
  std::vector<double> tn_err, tn_floor;
  std::vector<std::vector<double>> obs_err(observables.size()), obs_floor(observables.size());

  for (int N : Nlist) {
    const double lam = 1.0 / (N - 1.0);
    lambdas.push_back(lam);
    auto big = std::make_shared<const FockBasis>(pipe.kernels.M - 1, N);
    const FockOperator HN = build_excitation_hamiltonian(pipe.kernels, N, big);
    auto [w, Uv] = eigh(HN.mat);

    // Exact projector: all eigenvectors inside the level-n window.
    const double En = pipe.ctx->sd().levels[n].energy;
    const double window = pipe.ctx->sd().contour_radius[n];
    Matrix Pex = Matrix::Zero(big->dim(), big->dim());
    int found = 0;
    for (int i = 0; i < w.size(); ++i) {
      if (std::abs(w(i) - En) < window) {
        Pex += Uv.col(i) * Uv.col(i).adjoint();
        ++found;
      }
    }
    if (found == 0) throw Error("projector-cluster", "no exact level inside the window");

    // Sum of embedded coefficients; number-major ordering nests the bases,
    // and coefficients built above nmax = N are truncated to min(N, nmax).
    Matrix approx = Matrix::Zero(big->dim(), big->dim());
    Matrix approx2 = Matrix::Zero(big->dim(), big->dim());
    const int k1 = std::min(small_dim, big->dim());
    const int k2 = std::min(pipe.ctx2->dim(), big->dim());
    for (int l = 0; l <= a; ++l) {
      approx.topLeftCorner(k1, k1) += std::pow(lam, l / 2.0) * P[l].topLeftCorner(k1, k1);
      approx2.topLeftCorner(k2, k2) += std::pow(lam, l / 2.0) * Pb[l].topLeftCorner(k2, k2);
    }

    const Matrix D = Pex - approx;
    tn_err.push_back(eigvals_only(D).cwiseAbs().sum());
    {
      Matrix D12 = approx - approx2;
      tn_floor.push_back(eigvals_only(D12).cwiseAbs().sum());
    }

    for (size_t ob = 0; ob < observables.size(); ++ob) {
      const Matrix A_h = pipe.sol.B.adjoint() * observables[ob] * pipe.sol.B;
      const Matrix A_full = conjugated_one_body(A_h, pipe.kernels, big, N);
      const double exact = (A_full * Pex).trace().real();
      const double approx_val = (A_full * approx).trace().real();
      const double approx_val2 = (A_full * approx2).trace().real();
      obs_err[ob].push_back(std::abs(exact - approx_val));
      obs_floor[ob].push_back(std::abs(approx_val - approx_val2));
    }
  }

  ProjectorStudy study;
  study.trace_norm = fit_loglog(lambdas, tn_err, tn_floor, (a + 1) / 2.0 - 0.2, 0.98);
  {
    for (size_t i = 0; i < Nlist.size(); ++i)
      study.trace_norm.table.push_back(
          {static_cast<double>(Nlist[i]), lambdas[i], tn_err[i], tn_floor[i]});
    std::ostringstream os;
    os << "projector trace norm, level n=" << n << ", order a=" << a
       << "; expected error O(lambda^{(a+1)/2})";
    study.trace_norm.criterion = os.str();
  }
  for (size_t ob = 0; ob < observables.size(); ++ob) {
    SlopeFit f = fit_loglog(lambdas, obs_err[ob], obs_floor[ob], (a + 2) / 2.0 - 0.2, 0.98);
    for (size_t i = 0; i < Nlist.size(); ++i)
      f.table.push_back(
          {static_cast<double>(Nlist[i]), lambdas[i], obs_err[ob][i], obs_floor[ob][i]});
    std::ostringstream os;
    os << "projector observable <" << labels[ob] << ">, level n=" << n << ", order a=" << a
       << "; expected error O(lambda^{(a+2)/2})";
    f.criterion = os.str();
    study.observables.push_back(std::move(f));
    study.labels.push_back(labels[ob]);
  }
  return study;
}

SlopeFit wavefunction_convergence_study(const ModelSpec& model, int n, int a,
                                        const std::vector<int>& Nlist, const StudySettings& s) {
  StudyPipeline pipe(model, n, s.nmax);
  const auto wf = wavefunction_coefficients(*pipe.ctx, n, a);
  const auto wf2 = wavefunction_coefficients(*pipe.ctx2, n, a);
  const int small_dim = pipe.ctx->dim();

  std::vector<double> lambdas, errors, floors;
  for (int N : Nlist) {
    const double lam = 1.0 / (N - 1.0);
    auto big = std::make_shared<const FockBasis>(pipe.kernels.M - 1, N);
    const FockOperator HN = build_excitation_hamiltonian(pipe.kernels, N, big);
    auto [w, Uv] = eigh(HN.mat);

    const double En = pipe.ctx->sd().levels[n].energy;
    const double window = pipe.ctx->sd().contour_radius[n];
    int match = -1;
    for (int i = 0; i < w.size(); ++i) {
      if (std::abs(w(i) - En) < window) {
        if (match >= 0)
          throw DegeneracyError("wf-degenerate", "wavefunction study needs a simple level");
        match = i;
      }
    }
    if (match < 0) throw Error("wf-cluster", "no exact level inside the window");
    Vector psi = Uv.col(match);

    Vector approx = Vector::Zero(big->dim());
    Vector approx2 = Vector::Zero(big->dim());
    const int k1 = std::min(small_dim, big->dim());
    const int k2 = std::min(pipe.ctx2->dim(), big->dim());
    for (int l = 0; l <= a; ++l) {
      approx.head(k1) += std::pow(lam, l / 2.0) * wf.chi[l].head(k1);
      approx2.head(k2) += std::pow(lam, l / 2.0) * wf2.chi[l].head(k2);
    }
    // Deterministic phase: rotate psi to maximize the real overlap.
    const Complex ov = approx.dot(psi);
    if (std::abs(ov) > 0) psi *= std::conj(ov) / std::abs(ov);

    lambdas.push_back(lam);
    errors.push_back((psi - approx).norm());
    floors.push_back((approx - approx2).norm());
  }
  SlopeFit fit = fit_loglog(lambdas, errors, floors, (a + 1) / 2.0 - 0.2, 0.98);
  for (size_t i = 0; i < Nlist.size(); ++i)
    fit.table.push_back({static_cast<double>(Nlist[i]), lambdas[i], errors[i], floors[i]});
  std::ostringstream os;
  os << "wavefunction expansion, level n=" << n << ", order a=" << a
     << "; expected error O(lambda^{(a+1)/2})";
  fit.criterion = os.str();
  return fit;
}

double oracle_self_consistency(const ModelSpec& model, int N) {
  const HartreeSolution sol = hartree_solve(model);
  const Kernels kernels = build_kernels(sol, model);
  const RealVector direct = eigvals_only(build_HN(model, N)).array() - N * sol.eH;
  const RealVector viaU = eigvals_only(build_excitation_hamiltonian(kernels, N).mat);
  return (direct - viaU).cwiseAbs().maxCoeff();
}

double number_bound_constant(const ModelSpec& model, int N) {
  const HartreeSolution sol = hartree_solve(model);
  const Kernels kernels = build_kernels(sol, model);
  const FockOperator HN = build_excitation_hamiltonian(kernels, N);
  const int dim = HN.dim();
  Matrix G = HN.mat + std::pow(N, 1.0 / 3.0) * Matrix::Identity(dim, dim);
  // smallest c with (Nhat+1) <= c G: largest eigenvalue of G^{-1/2}(Nhat+1)G^{-1/2}
  auto [w, U] = eigh(G);
  if (w(0) <= 0) throw Error("number-bound-indefinite", "H + N^(1/3) is not positive");
  Matrix Gmh = U * w.cwiseInverse().cwiseSqrt().cast<Complex>().asDiagonal() * U.adjoint();
  RealVector np1(dim);
  for (int i = 0; i < dim; ++i) np1(i) = HN.basis->total(i) + 1.0;
  const Matrix X = Gmh * np1.cast<Complex>().asDiagonal() * Gmh;
  return eigvals_only(X).maxCoeff();
}

}  // namespace bogexp
