#pragma once

#include <memory>
#include <vector>

#include "bogexp/fock.hpp"
#include "bogexp/model.hpp"
#include "bogexp/types.hpp"

namespace bogexp {

// Bogoliubov block pair in the convention where the quasiparticle
// annihilators are read off the inverse map, b = U† a - V† a†. Then
// U†U - V†V = 1, U V^T is symmetric, and V U^{-1} is (the conjugate of) the
// ground-state pair amplitude.
struct BogoliubovMap {
  Matrix U, V;
  double V_hs = 0;   // ||V||_HS
  double U_op = 0;   // ||U||_op
  double CV = 0;     // 2 ||V||_HS^2 + ||U||_op^2 + 1
  Matrix gamma;      // <a^dag_i a_j> in the quasiparticle vacuum
  Matrix pairing;    // <a_i a_j>
};

struct QuadraticSolution {
  BogoliubovMap map;
  RealVector d;   // per-mode quasiparticle energies, ascending
  double E00 = 0;  // ground energy: (sum d - tr A)/2
};

// Solves the symplectic eigenproblem for [[A,B],[conj(B),conj(A)]] with
// A = diag(eps) + K1, B = K2 (Cholesky + Hermitian eigenproblem of K S K†).
QuadraticSolution diagonalize_quadratic(const Kernels& kernels);

// H0 = K0 + K1 + K2 + K2†.
FockOperator build_H0(const Kops& ops);

struct SpectralLevel {
  double energy = 0;
  int multiplicity = 0;
  int first = 0;  // eigencolumn range [first, first+multiplicity)
  Matrix projector;
  Matrix vectors;
};

struct SpectralData {
  std::shared_ptr<const FockBasis> basis;
  RealVector eigenvalues;  // full truncated spectrum, ascending
  Matrix eigenvectors;
  std::vector<SpectralLevel> levels;        // clustered low levels
  std::vector<double> gaps;                 // g^(n) = E^(n+1) - E^(n)
  std::vector<double> contour_radius;       // (1/2) min(g^(n-1), g^(n))
  Vector ground;                            // phase-fixed lowest eigenvector

  int cluster_of_eigenindex(int i) const;   // -1 when above the stored levels
};

SpectralData spectral_data(const FockOperator& H0, int count, double cluster_tol = 1e-8);

// O_k^(n): -P_0^(n) for k = 0, else Q_0^(n) (E_0^(n) - H0)^{-k} Q_0^(n)
// assembled from the full truncated eigensystem.
Matrix reduced_resolvent(const SpectralData& sd, int n, int k);

// Deviation of each stored level from the best-matching E00 + sum nu_j d_j.
std::vector<double> quasiparticle_match(const SpectralData& sd, const RealVector& d, double E00);

struct WickReport {
  double max_odd = 0;            // largest |1- or 3-point function|
  double max_pairing_residual = 0;  // largest |4-point - sum of 3 pairings|
  Matrix gamma;                  // measured <a^dag_i a_j>
  Matrix pairing;                // measured <a_i a_j>
};

WickReport quasifree_groundstate_check(const SpectralData& sd);

struct NumberBoundReport {
  // <chi, (N+1)^b chi> vs C_V^b b^b for b = 1,2,3
  std::vector<double> moments;
  std::vector<double> bounds;
  bool moments_ok = false;
  // smallest eigenvalue of c (H0 - E0 + 1) - (N+1) compressed on sectors
  // <= nmax - 2, with c = C_V (1 + 1/d_min)
  double comparison_min_eig = 0;
  double constant = 0;
};

NumberBoundReport number_bound_checks(const SpectralData& sd, const QuadraticSolution& qs,
                                      const FockOperator& H0);

}  // namespace bogexp
