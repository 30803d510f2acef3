#include "gkelab/field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace gkelab {

ScalarField::ScalarField(DomainPtr d, double init)
    : dom(std::move(d)), v(Array::Constant(dom->size(), init)), mask(dom->interior_mask()) {}

ScalarField::ScalarField(DomainPtr d, Array values, Mask m)
    : dom(std::move(d)), v(std::move(values)), mask(std::move(m)) {
  if (v.size() != dom->size() || mask.size() != static_cast<size_t>(dom->size()))
    throw InvalidInput("field storage does not match the domain layout");
}

int ScalarField::n_valid() const { return mask_count(mask); }

double ScalarField::sup_abs(const Mask* restrict_to) const {
  double s = 0;
  for (int k = 0; k < v.size(); ++k) {
    if (!mask[k]) continue;
    if (restrict_to && !(*restrict_to)[k]) continue;
    s = std::max(s, std::abs(v[k]));
  }
  return s;
}

BaseForm::BaseForm(DomainPtr d, double init)
    : dom(std::move(d)), density(Array::Constant(dom->size(), init)), mask(dom->interior_mask()) {}

BaseForm::BaseForm(DomainPtr d, Array dens, Mask m)
    : dom(std::move(d)), density(std::move(dens)), mask(std::move(m)) {
  if (density.size() != dom->size() || mask.size() != static_cast<size_t>(dom->size()))
    throw InvalidInput("form storage does not match the domain layout");
}

bool BaseForm::positive() const {
  for (int k = 0; k < density.size(); ++k)
    if (mask[k] && !(density[k] > 0)) return false;
  return true;
}

double BaseForm::min_valid() const {
  double m = std::numeric_limits<double>::infinity();
  for (int k = 0; k < density.size(); ++k)
    if (mask[k]) m = std::min(m, density[k]);
  return m;
}

ScalarField make_field(const DomainPtr& dom, const std::function<double(cplx)>& f) {
  ScalarField out(dom);
  for (int j = 0; j < dom->ny; ++j)
    for (int i = 0; i < dom->nx; ++i) out.at(i, j) = f(dom->node(i, j));
  return out;
}

BaseForm make_form(const DomainPtr& dom, const std::function<double(cplx)>& density) {
  BaseForm out(dom);
  for (int j = 0; j < dom->ny; ++j)
    for (int i = 0; i < dom->nx; ++i) out.density[dom->idx(i, j)] = density(dom->node(i, j));
  return out;
}

void require_same_domain(const BaseDomain& a, const BaseDomain& b, const char* what) {
  if (!a.same_layout(b)) throw InvalidInput(std::string(what) + ": operands live on different domains");
}

Mask mask_and(const Mask& a, const Mask& b) {
  Mask out(a.size());
  for (size_t k = 0; k < a.size(); ++k) out[k] = (a[k] && b[k]) ? 1 : 0;
  return out;
}

int mask_count(const Mask& m) {
  int n = 0;
  for (auto b : m) n += (b != 0);
  return n;
}

}  // namespace gkelab
