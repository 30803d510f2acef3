#include "gkelab/ops.hpp"

#include <cmath>

#include "gkelab/fft.hpp"

namespace gkelab {

namespace {

bool full_mask(const Mask& m) {
  for (auto b : m)
    if (!b) return false;
  return true;
}

inline int wrap(int i, int n) { return i < 0 ? i + n : (i >= n ? i - n : i); }

// Gather the four axis neighbors of (i,j); returns false if any is invalid.
bool stencil(const ScalarField& f, int i, int j, double& e, double& w, double& n, double& s) {
  const BaseDomain& d = *f.dom;
  const bool tor = d.is_torus();
  auto get = [&](int ii, int jj, double& out) {
    if (tor) {
      ii = wrap(ii, d.nx);
      jj = wrap(jj, d.ny);
    } else if (ii < 0 || ii >= d.nx || jj < 0 || jj >= d.ny) {
      return false;
    }
    const int k = d.idx(ii, jj);
    if (!f.mask[k]) return false;
    out = f.v[k];
    return true;
  };
  return get(i + 1, j, e) && get(i - 1, j, w) && get(i, j + 1, n) && get(i, j - 1, s);
}

}  // namespace

ScalarField ddbar(const ScalarField& f) {
  const BaseDomain& d = *f.dom;
  if (d.is_torus() && full_mask(f.mask)) {
    return ScalarField(f.dom, fft::ddbar(d, f.v), f.mask);
  }
  ScalarField out(f.dom);
  out.mask.assign(d.size(), 0);
  const double ax = 1.0 / (4 * d.hx * d.hx), ay = 1.0 / (4 * d.hy * d.hy);
  for (int j = 0; j < d.ny; ++j)
    for (int i = 0; i < d.nx; ++i) {
      const int k = d.idx(i, j);
      if (!f.mask[k]) continue;
      double e, w, n, s;
      if (!stencil(f, i, j, e, w, n, s)) continue;
      out.v[k] = ax * (e - 2 * f.v[k] + w) + ay * (n - 2 * f.v[k] + s);
      out.mask[k] = 1;
    }
  return out;
}

ScalarField grad_sq(const ScalarField& f) {
  const BaseDomain& d = *f.dom;
  if (d.is_torus() && full_mask(f.mask)) {
    return ScalarField(f.dom, fft::grad_sq(d, f.v), f.mask);
  }
  ScalarField out(f.dom);
  out.mask.assign(d.size(), 0);
  for (int j = 0; j < d.ny; ++j)
    for (int i = 0; i < d.nx; ++i) {
      const int k = d.idx(i, j);
      if (!f.mask[k]) continue;
      double e, w, n, s;
      if (!stencil(f, i, j, e, w, n, s)) continue;
      const double gx = (e - w) / (2 * d.hx), gy = (n - s) / (2 * d.hy);
      out.v[k] = gx * gx + gy * gy;
      out.mask[k] = 1;
    }
  return out;
}

BaseForm ricci(const BaseForm& g) {
  if (!g.positive()) throw InvalidInput("curvature needs a positive metric density");
  ScalarField lg(g.dom, g.density.log(), g.mask);
  ScalarField dd = ddbar(lg);
  return BaseForm(g.dom, -dd.v, dd.mask);
}

ScalarField trace(const BaseForm& a, const BaseForm& b) {
  require_same_domain(*a.dom, *b.dom, "trace");
  Mask m = mask_and(a.mask, b.mask);
  Array out = Array::Zero(a.density.size());
  for (int k = 0; k < out.size(); ++k) {
    if (!m[k]) continue;
    if (!(b.density[k] > 0)) throw InvalidInput("trace denominator must be positive");
    out[k] = a.density[k] / b.density[k];
  }
  return ScalarField(a.dom, std::move(out), std::move(m));
}

double integrate(const BaseForm& g) {
  const Array& w = g.quad ? *g.quad : g.dom->cell_weights();
  double s = 0;
  for (int k = 0; k < g.density.size(); ++k)
    if (g.mask[k]) s += g.density[k] * w[k];
  return s;
}

double integrate(const ScalarField& f, const BaseForm& against) {
  require_same_domain(*f.dom, *against.dom, "integrate");
  const Array& w = against.quad ? *against.quad : against.dom->cell_weights();
  double s = 0;
  for (int k = 0; k < f.v.size(); ++k)
    if (f.mask[k] && against.mask[k]) s += f.v[k] * against.density[k] * w[k];
  return s;
}

ScalarField log_density(const BaseForm& g) {
  if (!g.positive()) throw InvalidInput("log of a non-positive density");
  return ScalarField(g.dom, g.density.log(), g.mask);
}

BaseForm exp_field(const ScalarField& f) { return BaseForm(f.dom, f.v.exp(), f.mask); }

BaseForm add(const BaseForm& a, const BaseForm& b) { return lincomb(1, a, 1, b); }

BaseForm lincomb(double ca, const BaseForm& a, double cb, const BaseForm& b) {
  require_same_domain(*a.dom, *b.dom, "lincomb");
  BaseForm out(a.dom, ca * a.density + cb * b.density, mask_and(a.mask, b.mask));
  if (a.quad) out.quad = a.quad;
  if (b.quad) out.quad = b.quad;
  return out;
}

BaseForm scale(const BaseForm& a, double c) {
  BaseForm out(a.dom, c * a.density, a.mask);
  out.quad = a.quad;
  return out;
}

BaseForm perturb(const BaseForm& chi, const ScalarField& phi) {
  require_same_domain(*chi.dom, *phi.dom, "perturb");
  ScalarField dd = ddbar(phi);
  BaseForm out(chi.dom, chi.density + dd.v, mask_and(chi.mask, dd.mask));
  out.quad = chi.quad;
  return out;
}

double mean_value(const ScalarField& f) {
  double s = 0;
  int n = 0;
  for (int k = 0; k < f.v.size(); ++k)
    if (f.mask[k]) {
      s += f.v[k];
      ++n;
    }
  if (n == 0) throw InvalidInput("mean of an empty field");
  return s / n;
}

Mask compact_mask(const BaseDomain& dom, double edge_margin, double puncture_factor) {
  Mask m = dom.interior_mask();
  for (int j = 0; j < dom.ny; ++j)
    for (int i = 0; i < dom.nx; ++i) {
      const int k = dom.idx(i, j);
      if (!m[k]) continue;
      if (dom.kind == DomainKind::disk) {
        if (std::abs(dom.node(i, j)) > dom.radius - edge_margin) {
          m[k] = 0;
          continue;
        }
      }
      for (const auto& p : dom.punctures)
        if (dom.puncture_separation(dom.node(i, j), p.pos) < puncture_factor * p.exclusion) {
          m[k] = 0;
          break;
        }
    }
  return m;
}

}  // namespace gkelab
