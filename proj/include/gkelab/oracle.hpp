#pragma once

#include <functional>

#include "gkelab/continuity.hpp"

namespace gkelab {

// Full product-space Monge-Ampere check on base torus x flat fiber torus
// with constant modulus. Solves
//   det(P_t + Hess(phi)) = e^{k phi} Omega4 / (1+t)
// with P_t = diag(chi_t, fiber_rho/(1+t)) and the complex Hessian taken in
// base and sheared fiber coordinates, everything spectral on the 4-grid.
// Fiber-invariant data reproduces the reduced family exactly, so this is an
// independent discretization of the same geometry, not a re-run of it.

struct OraclePerturbation {
  double eps = 0;   // multiplies Omega4 by 1 + eps cos(2 pi kb x / px) cos(2 pi kf alpha)
  int k_base = 1;
  int k_fiber = 1;
  // Optional positive multiplier of Omega4 on (x, y, alpha, beta) with the
  // fiber coordinates in [0,1); replaces the cosine profile when set.
  std::function<double(double, double, double, double)> profile;
};

struct OracleResult {
  int nx = 0, ny = 0, nf = 0;  // base and fiber grid sizes
  Array phi4;                  // layout ((beta*nf + alpha)*ny + j)*nx + i
  SolveReport report;
  Array fiber_avg;             // base-grid average over the fiber
  Array fiber_osc;             // base-grid sup - inf over the fiber
  double fiber_osc_sup = 0;    // sup over base nodes of the fiber oscillation
  double det_min = 0;          // positivity certificate of the solved metric
  // Both sides of the global volume constraint at the solution, plus the
  // largest gap seen at any accepted iterate (coordinate measure).
  double vol_lhs = 0, vol_rhs = 0, vol_gap_max = 0;
};

// Grids stay small by design: this solver exists to cross-check the reduced
// family, so base and fiber resolutions are capped at 16 per axis.
OracleResult solve_full_ma(const FibrationSpec& spec, double t, int n_fiber,
                           const OraclePerturbation& pert = {}, const NewtonOptions& opt = {});

// Per-base-node fiber mean / oscillation of a 4-grid potential.
Array fiber_average(const Array& phi4, int nx, int ny, int nf);
Array fiber_oscillation(const Array& phi4, int nx, int ny, int nf);

// Max violation of the rescaling identity of the flat fiber potential,
// q(s, sqrt(1+t) w) / (1+t) = q(s, w), over random fiber samples at every
// base node; exactly zero in exact arithmetic.
double scaling_transport_check(const FibrationSpec& spec, double t, int n_samples = 64,
                               uint64_t seed = 1u);

}  // namespace gkelab
