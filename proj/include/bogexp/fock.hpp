#pragma once

#include <memory>
#include <set>
#include <unordered_map>
#include <vector>

#include "bogexp/model.hpp"
#include "bogexp/types.hpp"

namespace bogexp {

namespace detail {
struct OccHash {
  size_t operator()(const std::vector<int>& v) const {
    size_t h = 1469598103934665603ull;
    for (int x : v) {
      h ^= static_cast<size_t>(x) + 0x9e3779b97f4a7c15ull;
      h *= 1099511628211ull;
    }
    return h;
  }
};
}  // namespace detail

// Occupation-number basis over `modes` excitation modes with total number
// <= nmax. States ordered number-major, lexicographic within each sector.
class FockBasis {
 public:
  FockBasis(int modes, int nmax);

  int modes() const { return modes_; }
  int nmax() const { return nmax_; }
  int dim() const { return static_cast<int>(states_.size()); }
  const std::vector<int>& state(int i) const { return states_[i]; }
  int total(int i) const { return totals_[i]; }
  // Index of an occupation vector; -1 if outside the basis.
  int index(const std::vector<int>& occ) const;
  // First state index of the sector with total number n (n = 0..nmax+1; the
  // value at nmax+1 is dim()).
  int sector_offset(int n) const { return sector_offsets_[n]; }

  bool operator==(const FockBasis& o) const { return modes_ == o.modes_ && nmax_ == o.nmax_; }

 private:
  int modes_, nmax_;
  std::vector<std::vector<int>> states_;
  std::vector<int> totals_;
  std::vector<int> sector_offsets_;
  std::unordered_map<std::vector<int>, int, detail::OccHash> lookup_;
};

// Fixed-N occupation basis over M modes (sum of occupations = N).
class NParticleBasis {
 public:
  NParticleBasis(int M, int N);

  int modes() const { return modes_; }
  int particles() const { return N_; }
  int dim() const { return static_cast<int>(states_.size()); }
  const std::vector<int>& state(int i) const { return states_[i]; }
  int index(const std::vector<int>& occ) const;

 private:
  int modes_, N_;
  std::vector<std::vector<int>> states_;
  std::unordered_map<std::vector<int>, int, detail::OccHash> lookup_;
};

std::int64_t fock_dim(int modes, int nmax);
std::int64_t nparticle_dim(int M, int N);

// Matrix on a FockBasis together with its declared set of number-sector
// shifts; construction verifies that every stored entry respects the set.
struct FockOperator {
  std::shared_ptr<const FockBasis> basis;
  Matrix mat;
  std::set<int> sector_shift;

  FockOperator() = default;
  FockOperator(std::shared_ptr<const FockBasis> b, Matrix m, std::set<int> shifts);

  FockOperator adjoint() const;
  int dim() const { return static_cast<int>(mat.rows()); }
};

std::set<int> infer_sector_shift(const FockBasis& basis, const Matrix& m, double tol = 1e-14);

struct Ladder {
  FockOperator raise;
  FockOperator lower;
};

// a^dag_mode / a_mode with sqrt(n) amplitudes; raising amplitudes that would
// exceed nmax are dropped (hard truncation), lower is the exact adjoint.
// `mode` is 1-based (h-eigenbasis labels 1..M-1).
Ladder ladder(const std::shared_ptr<const FockBasis>& basis, int mode);

FockOperator number_operator(const std::shared_ptr<const FockBasis>& basis);

// Second-quantized kernel operators on the truncated basis:
//   K0 = dGamma(h),  K1 = sum K1[i,j] a^dag_i a_j,
//   K2 = 1/2 sum K2[i,j] a^dag_i a^dag_j,
//   K3 = sum K3[i,j,k] a^dag_i a^dag_j a_k,
//   K4 = 1/2 sum K4[i,j,k,l] a^dag_i a^dag_j a_k a_l.
struct Kops {
  std::shared_ptr<const FockBasis> basis;
  FockOperator K0, K1, K2, K3, K4;
  FockOperator N;  // number operator, kept alongside for convenience
};

Kops build_Kops(const Kernels& kernels, const std::shared_ptr<const FockBasis>& basis);

// H = sum_{mn} T[m,n] a^dag_m a_n + (lambda/2) sum V[m,n,p,q] a^dag_m a^dag_n a_p a_q
// on the fixed-N sector over the M modes of T.
Matrix build_second_quantized(const Matrix& T, const Tensor4& V, double lambda,
                              const NParticleBasis& basis);

// N-body Hamiltonian of the model in its own mode basis, lambda_N = 1/(N-1).
Matrix build_HN(const ModelSpec& model, int N);

// Unitary from the model-basis N-particle space to FockBasis(M-1, nmax=N):
// the product state phi^{tensor N} maps to the vacuum. Columns implement
// (+)_j q^{tensor j} ( a(phi)^{N-j} / sqrt((N-j)!) Psi ).
Matrix excitation_map(const HartreeSolution& sol, int N);

// Excitation Hamiltonian on FockBasis(M-1, nmax=N):
//   K0 + ((N-Nhat)/(N-1)) K1 + (K2 f2(Nhat) + h.c.) + (K3 f3(Nhat) + h.c.) + K4/(N-1)
// with f2(n) = sqrt((N-n)(N-n-1))/(N-1), f3(n) = sqrt(N-n)/(N-1).
FockOperator build_excitation_hamiltonian(const Kernels& kernels, int N);
FockOperator build_excitation_hamiltonian(const Kernels& kernels, int N,
                                          const std::shared_ptr<const FockBasis>& basis);

// Permanent of a square complex matrix (Ryser, Gray-code), used by the
// excitation map's change of one-body basis.
Complex permanent(const Matrix& a);

}  // namespace bogexp
