#include "bogexp/bogoliubov.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace bogexp {

namespace {

std::pair<RealVector, Matrix> eigh(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  if (solver.info() != Eigen::Success) throw Error("eigh-failed", "eigensolver did not converge");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

}  // namespace

QuadraticSolution diagonalize_quadratic(const Kernels& kernels) {
  const int e = kernels.M - 1;
  Matrix A = Matrix(kernels.eps_exc.cast<Complex>().asDiagonal()) + kernels.K1;
  A = (A + A.adjoint()) / 2.0;
  Matrix B = (kernels.K2 + kernels.K2.transpose()) / 2.0;

  Matrix M2(2 * e, 2 * e);
  M2.topLeftCorner(e, e) = A;
  M2.topRightCorner(e, e) = B;
  M2.bottomLeftCorner(e, e) = B.conjugate();
  M2.bottomRightCorner(e, e) = A.conjugate();

  Eigen::LLT<Matrix> llt(M2);
  if (llt.info() != Eigen::Success) {
    throw DegeneracyError("quadratic-not-positive",
                          "block matrix [[A,B],[B*,A*]] is not positive definite");
  }
  const Matrix K = Matrix(llt.matrixL()).adjoint();  // M2 = K† K

  Matrix S = Matrix::Zero(2 * e, 2 * e);
  S.topLeftCorner(e, e) = Matrix::Identity(e, e);
  S.bottomRightCorner(e, e) = -Matrix::Identity(e, e);

  auto [w, Uc] = eigh(Matrix(K * S * K.adjoint()));
  if (w(e - 1) >= 0 || w(e) <= 0) {
    throw DegeneracyError("quadratic-spectrum",
                          "symplectic eigenproblem lacks the expected +- split");
  }

  // Quasiparticle annihilator rows: b_i = d_i^{-1/2} u_i† K acting on (a; a†).
  QuadraticSolution out;
  out.d = RealVector(e);
  Matrix rows(e, 2 * e);
  for (int i = 0; i < e; ++i) {
    const double d = w(e + i);
    out.d(i) = d;
    rows.row(i) = Uc.col(e + i).adjoint() * K / std::sqrt(d);
  }
  // Per-mode phase gauge: rotate each quasiparticle so the dominant entry of
  // its a-coefficient row is real positive (deterministic output).
  for (int i = 0; i < e; ++i) {
    int jmax = 0;
    for (int j = 1; j < e; ++j)
      if (std::abs(rows(i, j)) > std::abs(rows(i, jmax))) jmax = j;
    const Complex z = rows(i, jmax);
    if (std::abs(z) > 0) rows.row(i) *= std::conj(z) / std::abs(z);
  }
  const Matrix Ub = rows.leftCols(e);
  const Matrix Vb = rows.rightCols(e);

  out.E00 = 0.5 * (out.d.sum() - A.trace().real());

  // Block convention of the diagonalizing map: the annihilators read
  // b = U a - conj(V) a†, so that U*U = 1 + V*V and U V* = conj(V) conj(U)*.
  out.map.U = Ub;
  out.map.V = -Vb.conjugate();
  out.map.V_hs = out.map.V.norm();
  out.map.U_op = out.map.U.operatorNorm();
  out.map.CV = 2.0 * out.map.V_hs * out.map.V_hs + out.map.U_op * out.map.U_op + 1.0;

  // a_i = sum_k P_ik b_k + Q_ik b†_k with P = Ub†, Q = -Vb^T; vacuum
  // expectations follow from <b b†> = 1.
  const Matrix P = Ub.adjoint();
  const Matrix Q = -Vb.transpose();
  out.map.gamma = Q.conjugate() * Q.transpose();
  out.map.pairing = P * Q.transpose();
  return out;
}

FockOperator build_H0(const Kops& ops) {
  Matrix H = ops.K0.mat + ops.K1.mat + ops.K2.mat + ops.K2.mat.adjoint();
  return FockOperator(ops.basis, H, {-2, 0, 2});
}

int SpectralData::cluster_of_eigenindex(int i) const {
  for (size_t n = 0; n < levels.size(); ++n) {
    if (i >= levels[n].first && i < levels[n].first + levels[n].multiplicity)
      return static_cast<int>(n);
  }
  return -1;
}

SpectralData spectral_data(const FockOperator& H0, int count, double cluster_tol) {
  SpectralData sd;
  sd.basis = H0.basis;
  std::tie(sd.eigenvalues, sd.eigenvectors) = eigh(H0.mat);
  const int dim = static_cast<int>(sd.eigenvalues.size());

  // Cluster the sorted spectrum into levels.
  std::vector<std::pair<int, int>> clusters;  // [first, last)
  int first = 0;
  for (int i = 1; i <= dim; ++i) {
    if (i == dim ||
        sd.eigenvalues(i) - sd.eigenvalues(i - 1) >
            cluster_tol * std::max(1.0, std::abs(sd.eigenvalues(i)))) {
      clusters.push_back({first, i});
      first = i;
    }
  }

  // The top quarter of the truncated spectrum is dominated by the cutoff and
  // is not reliable.
  const double ceiling =
      sd.eigenvalues(0) + 0.75 * (sd.eigenvalues(dim - 1) - sd.eigenvalues(0));
  int reliable = 0;
  while (reliable < static_cast<int>(clusters.size()) &&
         sd.eigenvalues(clusters[reliable].first) <= ceiling)
    ++reliable;
  if (count + 1 > reliable) {
    std::ostringstream os;
    os << "requested " << count << " levels but only " << reliable - 1
       << " are below the reliable ceiling";
    throw Error("levels-beyond-reliable", os.str());
  }

  for (int n = 0; n < count; ++n) {
    SpectralLevel lvl;
    lvl.first = clusters[n].first;
    lvl.multiplicity = clusters[n].second - clusters[n].first;
    lvl.vectors = sd.eigenvectors.middleCols(lvl.first, lvl.multiplicity);
    lvl.projector = lvl.vectors * lvl.vectors.adjoint();
    double mean = 0;
    for (int i = clusters[n].first; i < clusters[n].second; ++i) mean += sd.eigenvalues(i);
    lvl.energy = mean / lvl.multiplicity;
    sd.levels.push_back(std::move(lvl));
  }
  for (int n = 0; n < count; ++n) {
    const double next = sd.eigenvalues(clusters[n + 1].first);
    sd.gaps.push_back(next - sd.levels[n].energy);
  }
  for (int n = 0; n < count; ++n) {
    const double below = (n == 0) ? sd.gaps[0] : sd.gaps[n - 1];
    sd.contour_radius.push_back(0.5 * std::min(below, sd.gaps[n]));
  }

  sd.ground = sd.eigenvectors.col(0);
  int imax = 0;
  for (int i = 1; i < dim; ++i)
    if (std::abs(sd.ground(i)) > std::abs(sd.ground(imax))) imax = i;
  if (std::abs(sd.ground(imax)) > 0)
    sd.ground *= std::conj(sd.ground(imax)) / std::abs(sd.ground(imax));
  return sd;
}

Matrix reduced_resolvent(const SpectralData& sd, int n, int k) {
  if (n < 0 || n >= static_cast<int>(sd.levels.size()))
    throw ConfigError("resolvent-level", "level index outside the stored range");
  if (k < 0) throw ConfigError("resolvent-power", "k must be non-negative");
  if (k == 0) return Matrix(-sd.levels[n].projector);
  const int dim = static_cast<int>(sd.eigenvalues.size());
  const double En = sd.levels[n].energy;
  const int lo = sd.levels[n].first;
  const int hi = lo + sd.levels[n].multiplicity;
  Vector coef = Vector::Zero(dim);
  for (int i = 0; i < dim; ++i) {
    if (i >= lo && i < hi) continue;
    coef(i) = std::pow(En - sd.eigenvalues(i), -k);
  }
  return sd.eigenvectors * coef.asDiagonal() * sd.eigenvectors.adjoint();
}

std::vector<double> quasiparticle_match(const SpectralData& sd, const RealVector& d, double E00) {
  std::vector<double> out;
  const double top = sd.levels.empty() ? E00 : sd.levels.back().energy;
  const double budget = top - E00 + 1.0;
  // Enumerate all occupation sums nu . d <= budget by depth-first search.
  std::vector<double> sums;
  std::function<void(int, double)> walk = [&](int mode, double acc) {
    if (acc > budget) return;
    if (mode == d.size()) {
      sums.push_back(acc);
      return;
    }
    for (double a = acc; a <= budget; a += d(mode)) walk(mode + 1, a);
  };
  walk(0, 0.0);
  for (const auto& lvl : sd.levels) {
    double best = 1e300;
    for (double s : sums) best = std::min(best, std::abs(lvl.energy - (E00 + s)));
    out.push_back(best);
  }
  return out;
}

WickReport quasifree_groundstate_check(const SpectralData& sd) {
  const auto& basis = sd.basis;
  const int e = basis->modes();
  const Vector& chi = sd.ground;

  std::vector<Matrix> ops;  // a_1..a_e, a†_1..a†_e
  for (int m = 1; m <= e; ++m) ops.push_back(ladder(basis, m).lower.mat);
  for (int m = 1; m <= e; ++m) ops.push_back(ladder(basis, m).raise.mat);
  const int nops = 2 * e;

  WickReport rep;
  rep.gamma = Matrix::Zero(e, e);
  rep.pairing = Matrix::Zero(e, e);
  for (int i = 0; i < e; ++i)
    for (int j = 0; j < e; ++j) {
      rep.gamma(i, j) = chi.dot(ops[e + i] * (ops[j] * chi));   // <a†_i a_j>... see below
      rep.pairing(i, j) = chi.dot(ops[i] * (ops[j] * chi));     // <a_i a_j>
    }

  // two-point table in position order
  Matrix two(nops, nops);
  std::vector<Vector> applied(nops);
  for (int i = 0; i < nops; ++i) applied[i] = ops[i] * chi;
  for (int i = 0; i < nops; ++i)
    for (int j = 0; j < nops; ++j) two(i, j) = chi.dot(ops[i] * applied[j]);

  for (int i = 0; i < nops; ++i) rep.max_odd = std::max(rep.max_odd, std::abs(chi.dot(applied[i])));
  for (int i = 0; i < nops; ++i)
    for (int j = 0; j < nops; ++j)
      for (int k = 0; k < nops; ++k) {
        const Complex v = chi.dot(ops[i] * (ops[j] * applied[k]));
        rep.max_odd = std::max(rep.max_odd, std::abs(v));
      }

  for (int i = 0; i < nops; ++i)
    for (int j = 0; j < nops; ++j)
      for (int k = 0; k < nops; ++k)
        for (int l = 0; l < nops; ++l) {
          const Complex val = chi.dot(ops[i] * (ops[j] * (ops[k] * applied[l])));
          const Complex wick =
              two(i, j) * two(k, l) + two(i, k) * two(j, l) + two(i, l) * two(j, k);
          rep.max_pairing_residual = std::max(rep.max_pairing_residual, std::abs(val - wick));
        }
  return rep;
}

NumberBoundReport number_bound_checks(const SpectralData& sd, const QuadraticSolution& qs,
                                      const FockOperator& H0) {
  NumberBoundReport rep;
  const auto& basis = sd.basis;
  const int dim = basis->dim();
  RealVector nplus1(dim);
  for (int i = 0; i < dim; ++i) nplus1(i) = basis->total(i) + 1.0;

  rep.moments_ok = true;
  for (int b = 1; b <= 3; ++b) {
    double moment = 0;
    for (int i = 0; i < dim; ++i)
      moment += std::pow(nplus1(i), b) * std::norm(sd.ground(i));
    const double bound = std::pow(qs.map.CV, b) * std::pow(b, b);
    rep.moments.push_back(moment);
    rep.bounds.push_back(bound);
    if (moment > bound) rep.moments_ok = false;
  }

  const double E0 = sd.levels.empty() ? sd.eigenvalues(0) : sd.levels[0].energy;
  rep.constant = qs.map.CV * (1.0 + 1.0 / qs.d(0));
  Matrix X = rep.constant * (H0.mat - E0 * Matrix::Identity(dim, dim) +
                             Matrix::Identity(dim, dim));
  for (int i = 0; i < dim; ++i) X(i, i) -= nplus1(i);
  // Compress onto sectors <= nmax - 2, away from the truncation edge.
  const int cut = basis->sector_offset(std::max(basis->nmax() - 1, 0));
  auto [w, U] = eigh(Matrix(X.topLeftCorner(cut, cut)));
  rep.comparison_min_eig = w(0);
  return rep;
}

}  // namespace bogexp
