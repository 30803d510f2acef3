#pragma once

#include "gkelab/field.hpp"

namespace gkelab {

// ddbar(f) is the density of i*ddbar f against dx dy in the convention
// where it equals the quarter Laplacian f_ss̄ = (f_xx + f_yy)/4.
// Torus grids without masked nodes use the spectral stencil; everything
// else uses centered differences, and the result mask drops any node whose
// stencil touches an invalid sample.
ScalarField ddbar(const ScalarField& f);

// Curvature form of the metric with the given positive density:
// ric = -ddbar(log density). Throws InvalidInput on non-positive samples.
BaseForm ricci(const BaseForm& g);

// Pointwise quotient density(a)/density(b); b must be positive.
ScalarField trace(const BaseForm& a, const BaseForm& b);

// integral of the density over valid nodes with quadrature weights.
double integrate(const BaseForm& g);
double integrate(const ScalarField& f, const BaseForm& against);

// |df|^2 pointwise (centered differences off-torus).
ScalarField grad_sq(const ScalarField& f);

ScalarField log_density(const BaseForm& g);
BaseForm exp_field(const ScalarField& f);

// Form algebra on a shared domain; masks intersect.
BaseForm add(const BaseForm& a, const BaseForm& b);
BaseForm lincomb(double ca, const BaseForm& a, double cb, const BaseForm& b);
BaseForm scale(const BaseForm& a, double c);
// chi + ddbar(phi) as a form.
BaseForm perturb(const BaseForm& chi, const ScalarField& phi);

double mean_value(const ScalarField& f);

// Mask of nodes at least margin away from the disk edge and at least
// factor * exclusion away from every puncture (torus: puncture rule only).
Mask compact_mask(const BaseDomain& dom, double edge_margin, double puncture_factor);

}  // namespace gkelab
