#pragma once

#include "gkelab/field.hpp"

namespace gkelab {

// Orbifold-type exponent presets indexed by the fiber multiplicity m >= 2.
double cone_exponent(int multiplicity);    // 1 - 1/m
double blowup_exponent(int multiplicity);  // max(5/6, 1 - 1/(2m))

struct MarkedPoint {
  cplx pos;
  int multiplicity = 2;
  double e = 0;          // cone weight; preset from multiplicity when <= 0
  double beta = 0;       // blow-up rate; preset from multiplicity when <= 0
  double exclusion = 0;  // core radius; defaults to 4 grid spacings when <= 0
  double sigma_scale = 1.0;
};

// Base Kaehler form with an analytically known curvature.
struct ChiSpec {
  enum class Kind { flat, bump, fs };
  Kind kind = Kind::flat;
  double scale = 1.0;
  double amp = 0.0;  // bump amplitude, > -1
  double width = 0.3;
  cplx center = 0.0;

  Array density(const BaseDomain& dom) const;
  Array ricci_density(const BaseDomain& dom) const;
};

enum class ConsistencyMode { exact, twisted };

struct FibrationInput {
  DomainPtr dom;
  std::vector<MarkedPoint> marked;
  std::vector<cplx> tau = {cplx(0, 1)};  // polynomial in s, constant first
  double fiber_area = 1.0;
  ConsistencyMode mode = ConsistencyMode::exact;
  bool chi_autoscale = false;  // rescale chi to meet the closed-surface balance
  ChiSpec chi, chi0;
};

// Everything downstream solvers need, precomputed once per configuration.
struct FibrationSpec {
  FibrationInput in;  // echo, with presets and autoscale applied
  DomainPtr dom;

  BaseForm chi, chi0, wp;
  Array ric_chi;   // analytic curvature density of chi
  Array im_tau;    // Im tau(s), validated >= positivity floor
  Array tau_re;    // Re tau(s)
  Array fiber_rho; // fiber density a0 / Im tau

  ScalarField sigma;
  double sigma_grad_sup = 0, sigma_hess_sup = 0;

  ScalarField h;       // smooth log-factor of F from the linear solve
  double log_z = 0;    // normalization subtracted from log F
  BaseForm F;          // twist density, masked at puncture cores
  BaseForm omega_ref;  // reference volume density 2 F fiber_rho chi

  // Off-puncture constant produced by the singular factors of ddbar(log F)
  // on the torus (zero on the disk).
  double ricci_sing_const = 0;
  // Constant defect density of chi - ddbar(log omega_ref); zero in exact mode.
  double defect_const = 0;

  double compat_actual = 0;    // integral of chi + ric(chi) - wp
  double compat_required = 0;  // pi * sum of cone weights
  double chi_scale_applied = 1;

  uint64_t hash = 0;

  Mask core_mask;  // interior minus puncture cores (the solver mask)
  // Curvature density of the base form e^{k phi} F chi assembled from the
  // certified pieces; the fiber contribution of a fibered metric subtracts
  // a further wp term on top of this.
  Array assemble_base_ricci(double k, const ScalarField& phi, Mask* out_mask) const;
};

// Build the domain punctures implied by a marked-point list (exclusion
// defaults applied at spacing h).
std::vector<Puncture> punctures_for(const std::vector<MarkedPoint>& marked, double h);

FibrationSpec build_fibration(FibrationInput in);

// Weil-Petersson density |tau'|^2 / (4 Im(tau)^2) for a polynomial tau.
BaseForm weil_petersson(const DomainPtr& dom, const std::vector<cplx>& tau);

// Covering radius of the unit lattice Z + tau Z (flat metric |dw|^2).
double lattice_covering_radius(cplx tau);
// Largest fiber diameter over valid base nodes for fiber density a0/Im tau.
double max_fiber_diameter(const FibrationSpec& spec);

}  // namespace gkelab
