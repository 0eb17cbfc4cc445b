#pragma once

#include <array>
#include <string>
#include <vector>

#include "bogexp/expansion.hpp"

namespace bogexp {

struct DistinctSpectrum {
  std::vector<double> energies;      // distinct eigenvalues, ascending
  std::vector<int> multiplicities;
};

// Lowest `count` distinct eigenvalues of H_N (absolute energies) with
// multiplicities; eigenvalues closer than 1e-9 * max(1,|E|) are merged.
DistinctSpectrum exact_spectrum(const ModelSpec& model, int N, int count);

// Eigenvalue cluster of the N-body problem associated with Bogoliubov level n.
struct ClusterReport {
  int n = 0;
  std::vector<int> indices;             // distinct-level indices nu
  std::vector<double> excitations;      // E_N^(nu) - N e_H
  std::vector<int> multiplicities;      // delta_N^(nu)
  double mean = 0;                      // sum delta * E / delta_0 (excitation scale)
  int delta0 = 0;
  double window = 0;
};

// Assigns distinct excitation levels to Bogoliubov level n by the contour
// window (half the minimal adjacent gap); errors out on ambiguity.
ClusterReport cluster(const SpectralData& bog, const RealVector& excitations_sorted, int n,
                      double merge_tol = 1e-9);

struct SlopeFit {
  std::vector<double> lambdas;  // points used by the fit
  std::vector<double> errors;
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
  bool pass = false;
  bool exact_zero = false;
  std::string criterion;
  // full study table: N, lambda, error, truncation floor
  std::vector<std::array<double, 4>> table;
};

// Ordinary least squares on (log lambda, log error). Points with error <= 0
// or below their truncation floor are excluded; at least 4 points required.
SlopeFit fit_loglog(const std::vector<double>& lambdas, const std::vector<double>& errors,
                    const std::vector<double>& floors, double slope_req, double r2_req);

struct StudySettings {
  int nmax = 14;            // coefficient-side truncation
  double merge_tol = 1e-9;  // exact-spectrum clustering
};

// Energy expansion check: error(N) = |cluster mean - sum_{l<=a} lambda^l E_l|
// against PASS slope >= a + 0.8, R^2 >= 0.98.
SlopeFit energy_convergence_study(const ModelSpec& model, int n, int a,
                                  const std::vector<int>& Nlist, const StudySettings& s = {});

struct ProjectorStudy {
  SlopeFit trace_norm;                    // slope >= (a+1)/2 - 0.2
  std::vector<SlopeFit> observables;      // slope >= (a+2)/2 - 0.2 each
  std::vector<std::string> labels;
};

ProjectorStudy projector_convergence_study(const ModelSpec& model, int n, int a,
                                           const std::vector<int>& Nlist,
                                           const std::vector<Matrix>& observables,
                                           const std::vector<std::string>& labels,
                                           const StudySettings& s = {});

// Wavefunction check at a non-degenerate level:
// error(N) = || Psi_N - sum_l lambda^{l/2} chi_l || after phase alignment;
// PASS slope >= (a+1)/2 - 0.2.
SlopeFit wavefunction_convergence_study(const ModelSpec& model, int n, int a,
                                        const std::vector<int>& Nlist,
                                        const StudySettings& s = {});

// Definition-level identity: spec(H_N - N e_H) == spec(excitation Hamiltonian),
// largest eigenvalue deviation returned.
double oracle_self_consistency(const ModelSpec& model, int N);

// Minimal c with (N_perp + 1) <= c (H_{<=N} + N^{1/3}) on the truncated space.
double number_bound_constant(const ModelSpec& model, int N);

}  // namespace bogexp
