#pragma once

#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "bogexp/bogoliubov.hpp"
#include "bogexp/fock.hpp"
#include "bogexp/types.hpp"

namespace bogexp {

// Taylor coefficients of the number-function square roots:
//   c_j^{(l)} = (l-1/2)(l+1/2)...(l+j-3/2)/j!   (c_0^{(l)} = 1),
//   d_{j,nu}  = sum_{l=0}^{nu} c_l^{(0)} c_{nu-l}^{(0)} c_{j-nu}^{(l)}.
// c_j^{(0)} is the x^j coefficient of sqrt(1-x).
struct CoefficientTable {
  int jmax = 0;
  RealMatrix c;  // c(l, j), rows l = 0..jmax, cols j = 0..jmax
  RealMatrix d;  // d(j, nu), defined for jmax >= j >= nu >= 0

  double cj(int j) const { return c(0, j); }
};

CoefficientTable taylor_coefficients(int jmax);

// Exact scalar number functions and Taylor remainders (lambda = 1/(N-1)):
//   sqrt([N-n]_+)/(N-1)            = sum_{l<=a} c_l lambda^{l+1/2} (n-1)^l + lambda^{a+3/2} r3
//   sqrt([(N-n)(N-n-1)]_+)/(N-1)   = sum_{l<=a} lambda^l sum_j d_{l,j} (n-1)^j + lambda^{a+1} r2
double sqrt3_scalar(int n, int N);
double sqrt2_scalar(int n, int N);
double r3_scalar(const CoefficientTable& t, int a, int n, int N);
double r2_scalar(const CoefficientTable& t, int a, int n, int N);

struct ScalarRemainderReport {
  bool ok = true;
  double worst_margin3 = 0;  // max |r3| / bound over the tested n
  double worst_margin2 = 0;
};

// Asserts |r3(a,n)| <= 2^{a+1} (n+1)^{a+1} and
// |r2(a,n)| <= (a+1)^2 4^{a+1} (n+1)^{a+1} for the given n values.
ScalarRemainderReport scalar_remainder_check(int a, int N, const std::vector<int>& nvals);

// Operator coefficients of the lambda^{1/2} expansion:
//   H_1 = K3 + K3†,
//   H_2 = -(Nhat-1) K1 - (K2 (Nhat-1/2) + h.c.) + K4,
//   H_{2j-1} = c_{j-1} (K3 (Nhat-1)^{j-1} + h.c.),
//   H_{2j}   = sum_nu d_{j,nu} (K2 (Nhat-1)^nu + h.c.)          (j >= 2).
FockOperator build_Hj(const Kops& ops, const CoefficientTable& table, int j);

// The number-function form of the excitation Hamiltonian on an arbitrary
// truncation (positive parts clamp the square roots above n = N).
FockOperator build_H_less(const Kops& ops, int N);

// Remainder operator R_a with the exact scalar remainders r2/r3 as diagonal
// number functions.
FockOperator build_Ra(const Kops& ops, const CoefficientTable& table, int a, int N);

struct RemainderIdentityReport {
  double max_deviation = 0;
  bool ok = false;
};

// Checks H^< - sum_{j<=a} lambda^{j/2} H_j = lambda^{(a+1)/2} R_a entrywise.
RemainderIdentityReport remainder_identity_check(const Kops& ops, const CoefficientTable& table,
                                                 int a, int N, double tol = 1e-10);

// Shared evaluation state for the Rayleigh-Schroedinger coefficient formulas:
// caches H_j operators and reduced resolvents over one truncated basis.
class PerturbationContext {
 public:
  PerturbationContext(Kops ops, SpectralData sd, CoefficientTable table);

  const Kops& ops() const { return ops_; }
  const SpectralData& sd() const { return sd_; }
  const CoefficientTable& table() const { return table_; }
  const Matrix& Hj(int j);
  const Matrix& O(int n, int k);
  int dim() const { return ops_.basis->dim(); }
  // Level-n eigenvectors and the phase-fixed chi_0 for non-degenerate levels.
  Vector chi0(int n) const;

 private:
  Kops ops_;
  SpectralData sd_;
  CoefficientTable table_;
  std::vector<Matrix> hj_;
  std::map<std::pair<int, int>, Matrix> resolvents_;
};

// Trace formula (kappa-weighted compositions). Returns E_0..E_a.
std::vector<double> energy_coefficients(PerturbationContext& ctx, int n, int a);

// Iterative formula with O_1 resolvents only; non-degenerate levels.
std::vector<double> energy_coefficients_iterative(PerturbationContext& ctx, int n, int a);

// Closed forms for E_1 and E_2 at a non-degenerate level, as an independent
// cross-check of the first two orders.
std::vector<double> energy_coefficients_explicit(PerturbationContext& ctx, int n);

// P_l^(n): -sum_{nu} sum_{|j|=l} sum_{|k|=nu} O_{k1} H_{j1} ... H_{j_nu} O_{k_{nu+1}}
// (P_0^(n) at l = 0).
Matrix projector_coefficient(PerturbationContext& ctx, int n, int l);

struct WavefunctionCoefficients {
  std::vector<Vector> chi;        // chi_0..chi_a
  std::vector<Vector> chi_tilde;  // chi~_0..chi~_a (chi~_0 = chi_0)
  std::vector<double> alpha;      // alpha_0..alpha_a
  double iterative_deviation = 0;  // max_l ||chi~_l - chi~_l(iterative)||
};

WavefunctionCoefficients wavefunction_coefficients(PerturbationContext& ctx, int n, int a);

struct Rdm1Coefficients {
  Matrix gamma0;  // delta_0^(n) |phi><phi| in the h-eigenbasis
  Matrix gamma1;  // first correction, h-eigenbasis, traceless Hermitian
};

Rdm1Coefficients rdm1_coefficients(PerturbationContext& ctx, int n);

struct ObservableExpansion {
  std::vector<double> coefficients;  // Tr A P_l, l = 0..a
  double exact = 0;                  // Tr A P^(n) from the N-body oracle
  double lambda = 0;
};

// One-body observable A (model basis); conjugation by the excitation map is
// evaluated exactly through the substitution rules. Two-body observables go
// through the permanent-based map and are resource-guarded (N <= 14).
ObservableExpansion observable_expansion(const Matrix& A_model, const HartreeSolution& sol,
                                         const Kernels& kernels, PerturbationContext& ctx, int N,
                                         int n, int a);

ObservableExpansion observable_expansion_two_body(const Tensor4& A2_model,
                                                  const HartreeSolution& sol,
                                                  const Kernels& kernels,
                                                  PerturbationContext& ctx, int N, int n, int a);

// Conjugated one-body observable (N-dependent) on a truncated basis:
//   U dGamma(A) U†/N = [A00 (N-Nhat) + (a†(qA phi) sqrt(N-Nhat) + h.c.) + dGamma_perp(qAq)]/N.
Matrix conjugated_one_body(const Matrix& A_hframe, const Kernels& kernels,
                           const std::shared_ptr<const FockBasis>& basis, int N);

// High-level driver used by the CLI: runs every coefficient at nmax and
// nmax+2 and records the differences as truncation diagnostics.
struct ExpansionResult {
  int level = 0;
  int order = 0;
  int nmax = 0;
  int delta0 = 0;
  std::vector<double> E;
  std::vector<double> E_delta;       // |E(nmax) - E(nmax+2)|
  std::vector<double> alpha;         // empty for degenerate levels
  std::vector<double> trace_Pl;      // |Tr P_l|, l = 1..min(order,3)
  std::vector<double> hermiticity_Pl;
  std::string provenance;            // "trace" or "trace+iterative"
  bool truncation_flagged = false;   // some coefficient moved >= 1e-6 relative
};

ExpansionResult run_expansion(const Kernels& kernels, int n, int a, int nmax);

}  // namespace bogexp
