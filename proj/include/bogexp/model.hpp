#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bogexp/types.hpp"

namespace bogexp {

// Finite mean-field model: M orthonormal one-body modes, Hermitian one-body
// matrix T and two-body tensor V[m,n,p,q] = <e_m ⊗ e_n, v e_p ⊗ e_q> with the
// symmetries V[m,n,p,q] = conj(V[p,q,m,n]) = V[n,m,q,p]. The N-body
// Hamiltonian is sum_j T_j + (1/(N-1)) sum_{i<j} v(i,j).
struct ModelSpec {
  int M = 0;
  Matrix T;
  Tensor4 V;
  bool positive_type = false;
  std::string label;

  // Torus metadata: empty unless built from a TorusSpec. momenta[m] is the
  // integer momentum vector of mode m; used for structural degeneracy
  // detection and for the momentum-flip conjugation.
  int torus_dim = 0;
  std::vector<std::vector<int>> momenta;

  bool is_torus() const { return torus_dim > 0; }
};

// Homogeneous gas on [0,2pi)^d with plane-wave modes e^{ik·x}/(2pi)^{d/2},
// |k|_inf <= Kcut, kinetic eigenvalue |k|^2. vhat(k) is the Fourier transform
// of the interaction on the torus, so matrix elements carry (2pi)^{-d}:
//   V[m,n,p,q] = (2pi)^{-d} vhat(k_m - k_p) [k_m + k_n == k_p + k_q].
struct TorusSpec {
  int d = 1;
  int Kcut = 1;
  std::map<std::vector<int>, double> vhat;  // momentum -> coefficient, vhat(-k)=vhat(k)>=0
};

struct HartreeOptions {
  int max_iter = 500;
  double tol = 1e-12;
  double damping = 0.5;
  std::uint64_t seed = 1;
  int random_starts = 3;
};

struct HartreeSolution {
  Vector phi;        // unit-norm minimizer, gauge-fixed
  double eH = 0;     // Hartree energy per particle
  double muH = 0;    // Lagrange multiplier
  Matrix h;          // T + mean-field - muH, shifted so h*phi = 0
  double gH = 0;     // spectral gap of h above its zero ground eigenvalue
  Matrix q;          // I - phi*phi†
  Matrix B;          // unitary eigenbasis of h; column 0 is phi
  RealVector eps;    // eigenvalues of h, ascending; eps[0] = 0
  int iterations = 0;
  double residual = 0;
  std::vector<double> energy_history;  // accepted energies of the winning run
};

// Interaction kernels in the eigenbasis {phi_n} of h (phi_0 = phi).
// Excitation-mode tensors use 0-based indices 0..M-2 for modes 1..M-1.
//   W[m,n,p,q] = <phi_m ⊗ phi_n, W phi_p ⊗ phi_q> with
//   W = v - (v*|phi|^2) ⊗ 1 - 1 ⊗ (v*|phi|^2) + <phi,(v*|phi|^2)phi>.
struct Kernels {
  int M = 0;
  RealVector eps_exc;        // h eigenvalues on excitation modes (size M-1)
  Matrix K1;                 // qKq, (M-1)x(M-1): K1[m,n] = W[0,m+1,n+1,0]
  Matrix K2;                 // pair kernel, symmetric: K2[m,n] = W[m+1,n+1,0,0]
  std::vector<Complex> K3;   // K3[(m,n),p] = W[m+1,n+1,p+1,0], flat (M-1)^3
  Tensor4 K4;                // projected W on excitation modes, (M-1)^4
  Tensor4 W;                 // full W tensor in the h-eigenbasis, M^4

  Matrix T_frame;            // T in the h-eigenbasis
  Tensor4 V_frame;           // V in the h-eigenbasis

  Complex k3(int m, int n, int p) const {
    int e = M - 1;
    return K3[(static_cast<size_t>(m) * e + n) * e + p];
  }
};

// Validates the ModelSpec invariants; throws ConfigError on violation.
// Checks T Hermiticity (1e-12 relative), the two V symmetries, and, when
// positive_type is set, that the M^2 x M^2 reshape (mp),(nq) -> V[m,n,p,q]
// has smallest eigenvalue >= -1e-10.
void validate_model(const ModelSpec& model);

ModelSpec build_torus_model(const TorusSpec& spec);

// Reproducible positive-type model with moderate coupling, for tests and the
// self-test fixture. V = sum of conjugation-symmetrized rank-one Hermitian
// multiplication operators, so the positive-type reshape holds exactly.
ModelSpec random_positive_model(int M, std::uint64_t seed, double coupling = 0.3,
                                bool real_valued = false);

double hartree_energy(const ModelSpec& model, const Vector& phi);
Matrix mean_field(const ModelSpec& model, const Vector& phi);

HartreeSolution hartree_solve(const ModelSpec& model, const HartreeOptions& opts = {});

Kernels build_kernels(const HartreeSolution& sol, const ModelSpec& model);

}  // namespace bogexp
