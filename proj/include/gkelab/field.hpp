#pragma once

#include <functional>

#include "gkelab/grid.hpp"

namespace gkelab {

// Scalar sample grid with a validity mask. Operations intersect masks and
// never read values at invalid nodes.
struct ScalarField {
  DomainPtr dom;
  Array v;
  Mask mask;

  ScalarField() = default;
  explicit ScalarField(DomainPtr d, double init = 0.0);
  ScalarField(DomainPtr d, Array values, Mask m);

  double& at(int i, int j) { return v[dom->idx(i, j)]; }
  double at(int i, int j) const { return v[dom->idx(i, j)]; }
  bool valid(int i, int j) const { return mask[dom->idx(i, j)] != 0; }
  int n_valid() const;

  // sup |v| over valid nodes, optionally intersected with a further mask.
  double sup_abs(const Mask* restrict_to = nullptr) const;
};

// A (1,1)-form recorded by its density against dx dy. Positivity means the
// density is positive at every valid sample.
struct BaseForm {
  DomainPtr dom;
  Array density;
  Mask mask;
  // Optional per-node quadrature weights replacing the domain cell weights
  // (used for densities with integrable singularities near punctures).
  std::shared_ptr<const Array> quad;

  BaseForm() = default;
  explicit BaseForm(DomainPtr d, double init = 0.0);
  BaseForm(DomainPtr d, Array dens, Mask m);

  bool positive() const;
  double min_valid() const;
};

ScalarField make_field(const DomainPtr& dom, const std::function<double(cplx)>& f);
BaseForm make_form(const DomainPtr& dom, const std::function<double(cplx)>& density);

// Throws InvalidInput unless both live on layout-identical domains.
void require_same_domain(const BaseDomain& a, const BaseDomain& b, const char* what);

Mask mask_and(const Mask& a, const Mask& b);
int mask_count(const Mask& m);

}  // namespace gkelab
