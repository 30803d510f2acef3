#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace gkelab {

using Array = Eigen::ArrayXd;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using cplx = std::complex<double>;
using Mask = std::vector<uint8_t>;  // 1 = valid sample, 0 = excluded

// Contract violations in inputs (bad domains, non-positive densities, schema errors).
struct InvalidInput : std::invalid_argument {
  explicit InvalidInput(const std::string& msg) : std::invalid_argument(msg) {}
};

// A consistency requirement that the given data cannot satisfy
// (e.g. closed-surface integral compatibility for exact mode).
struct ConsistencyError : std::runtime_error {
  explicit ConsistencyError(const std::string& msg) : std::runtime_error(msg) {}
};

// Iterative solver breakdown; carries the residual history for diagnosis.
struct SolverError : std::runtime_error {
  std::vector<double> residual_history;
  explicit SolverError(const std::string& msg, std::vector<double> hist = {})
      : std::runtime_error(msg), residual_history(std::move(hist)) {}
};

}  // namespace gkelab
