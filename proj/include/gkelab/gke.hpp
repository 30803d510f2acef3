#pragma once

#include "gkelab/fibration.hpp"

namespace gkelab {

struct NewtonOptions {
  double tol = 1e-10;    // sup-norm of the density residual
  int max_iter = 80;
  int max_backtrack = 40;
  double lin_tol = 1e-12;  // relative tolerance of inner linear solves
  int lin_maxit = 1200;
};

struct SolveReport {
  bool converged = false;
  int iterations = 0;
  double residual = 0;
  std::vector<double> history;  // residual after each accepted step
};

// Damped Newton for  ref + ddbar(phi) = W e^{k phi}  over the joint valid
// mask. Torus grids without punctures run a preconditioned CG on spectral
// operators; everything else factors the graded sparse stencil.
// The residual decreases monotonically along accepted steps; failure to
// find a decreasing step raises SolverError with the history attached.
SolveReport solve_exp_ma(const BaseForm& ref, const BaseForm& W, double k, ScalarField& phi,
                         const NewtonOptions& opt = {});

struct GkeResult {
  ScalarField phi;
  SolveReport report;
};

// Generalized equation on the base: chi + ddbar(phi) = F e^{phi} chi.
GkeResult solve_gke(const FibrationSpec& spec, const NewtonOptions& opt = {});

struct IdentityReport {
  ScalarField residual;       // ric(base) + base - wp, mode defect removed
  double sup_compact = 0;     // sup over the compact diagnostic region
  double sup_raw = 0;         // sup over every valid node
  double defect_used = 0;     // constant subtracted in twisted mode
  Mask compact;
};

// Residual of the curvature identity satisfied by the solved base form,
// measured away from cores and the disk edge.
IdentityReport gke_identity_residual(const FibrationSpec& spec, const ScalarField& phi_hat,
                                     double edge_margin_frac = 0.15, double core_factor = 2.0);

// Half the outward flux of -log(F) through the circle of radius r around
// marked point i; tends to 2 pi e_i as the circle shrinks.
double cone_flux(const FibrationSpec& spec, size_t marked_index, double r, int samples = 256);

// Solve twice from independent starts (zero and a seeded smooth bump of
// amplitude amp); returns the sup difference of the two solutions.
double uniqueness_spread(const FibrationSpec& spec, const NewtonOptions& opt, double amp,
                         uint64_t seed);

// Bilinear sample of a field at an off-node point; throws if the stencil
// touches an invalid sample.
double bilinear(const ScalarField& f, cplx pos);

}  // namespace gkelab
