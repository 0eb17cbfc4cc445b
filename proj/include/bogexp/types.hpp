#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace bogexp {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

inline constexpr Complex I{0.0, 1.0};

// Error taxonomy shared by library and CLI. Reason codes are stable strings
// so that callers can switch on them without parsing prose.
class Error : public std::runtime_error {
 public:
  Error(std::string reason_code, const std::string& what)
      : std::runtime_error(what), reason_(std::move(reason_code)) {}
  const std::string& reason() const { return reason_; }

 private:
  std::string reason_;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string reason, const std::string& what) : Error(std::move(reason), what) {}
};

class ResourceError : public Error {
 public:
  ResourceError(std::string reason, const std::string& what) : Error(std::move(reason), what) {}
};

class DegeneracyError : public Error {
 public:
  DegeneracyError(std::string reason, const std::string& what) : Error(std::move(reason), what) {}
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(std::string reason, const std::string& what) : Error(std::move(reason), what) {}
};

// Dense rank-4 tensor with equal extent along every axis, addressed as
// t(m, n, p, q). Used for two-body matrix elements.
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(int dim) : dim_(dim), data_(static_cast<size_t>(dim) * dim * dim * dim) {}

  int dim() const { return dim_; }

  Complex& operator()(int m, int n, int p, int q) { return data_[index(m, n, p, q)]; }
  const Complex& operator()(int m, int n, int p, int q) const { return data_[index(m, n, p, q)]; }

  const std::vector<Complex>& data() const { return data_; }
  std::vector<Complex>& data() { return data_; }

  void set_zero() { std::fill(data_.begin(), data_.end(), Complex{0, 0}); }

 private:
  size_t index(int m, int n, int p, int q) const {
    return ((static_cast<size_t>(m) * dim_ + n) * dim_ + p) * dim_ + q;
  }
  int dim_ = 0;
  std::vector<Complex> data_;
};

}  // namespace bogexp
