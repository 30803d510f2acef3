#include "gkelab/fibration.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "gkelab/fft.hpp"
#include "gkelab/linsolve.hpp"
#include "gkelab/ops.hpp"

namespace gkelab {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kImFloor = 1e-6;

cplx poly_eval(const std::vector<cplx>& c, cplx s) {
  cplx v = 0;
  for (size_t k = c.size(); k-- > 0;) v = v * s + c[k];
  return v;
}

cplx poly_deriv(const std::vector<cplx>& c, cplx s) {
  cplx v = 0;
  for (size_t k = c.size(); k-- > 1;) v = v * s + double(k) * c[k];
  return v;
}

uint64_t fnv1a(const std::string& bytes) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

void append_num(std::string& s, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g;", v);
  s += buf;
}

}  // namespace

double cone_exponent(int multiplicity) {
  if (multiplicity < 2) throw InvalidInput("fiber multiplicity must be at least 2");
  return 1.0 - 1.0 / multiplicity;
}

double blowup_exponent(int multiplicity) {
  if (multiplicity < 2) throw InvalidInput("fiber multiplicity must be at least 2");
  return std::max(5.0 / 6.0, 1.0 - 1.0 / (2.0 * multiplicity));
}

Array ChiSpec::density(const BaseDomain& dom) const {
  if (!(scale > 0)) throw InvalidInput("chi scale must be positive");
  Array out(dom.size());
  for (int j = 0; j < dom.ny; ++j)
    for (int i = 0; i < dom.nx; ++i) {
      const cplx s = dom.node(i, j);
      double v = scale;
      switch (kind) {
        case Kind::flat:
          break;
        case Kind::bump: {
          const double g = std::exp(-std::norm(s - center) / (width * width));
          v = scale * (1 + amp * g);
          break;
        }
        case Kind::fs:
          v = scale / ((1 + std::norm(s)) * (1 + std::norm(s)));
          break;
      }
      if (!(v > 0)) throw InvalidInput("chi density must stay positive");
      out[dom.idx(i, j)] = v;
    }
  return out;
}

Array ChiSpec::ricci_density(const BaseDomain& dom) const {
  Array out = Array::Zero(dom.size());
  for (int j = 0; j < dom.ny; ++j)
    for (int i = 0; i < dom.nx; ++i) {
      const cplx s = dom.node(i, j);
      double v = 0;
      switch (kind) {
        case Kind::flat:
          break;
        case Kind::bump: {
          const double w2 = width * width;
          const double r2 = std::norm(s - center);
          const double g = std::exp(-r2 / w2);
          const double q = 1 + amp * g;
          const double ddg = g * (r2 - w2) / (w2 * w2);
          const double grad2 = g * g * r2 / (w2 * w2);
          v = -amp * ddg / q + amp * amp * grad2 / (q * q);
          break;
        }
        case Kind::fs: {
          const double q = 1 + std::norm(s);
          v = 2.0 / (q * q);
          break;
        }
      }
      out[dom.idx(i, j)] = v;
    }
  return out;
}

std::vector<Puncture> punctures_for(const std::vector<MarkedPoint>& marked, double h) {
  std::vector<Puncture> out;
  out.reserve(marked.size());
  for (const auto& m : marked) {
    const double ex = m.exclusion > 0 ? m.exclusion : 4 * h;
    out.push_back({m.pos, ex});
  }
  return out;
}

BaseForm weil_petersson(const DomainPtr& dom, const std::vector<cplx>& tau) {
  BaseForm wp(dom, 0.0);
  for (int j = 0; j < dom->ny; ++j)
    for (int i = 0; i < dom->nx; ++i) {
      const cplx s = dom->node(i, j);
      const double im = poly_eval(tau, s).imag();
      if (im < kImFloor) throw InvalidInput("Im(tau) fell below the positivity floor");
      const double dt = std::abs(poly_deriv(tau, s));
      wp.density[dom->idx(i, j)] = dt * dt / (4 * im * im);
    }
  return wp;
}

FibrationSpec build_fibration(FibrationInput in) {
  if (!in.dom) throw InvalidInput("fibration needs a domain");
  const BaseDomain& d = *in.dom;
  const double h = d.spacing();

  if (!(in.fiber_area > 0)) throw InvalidInput("fiber area must be positive");
  if (in.tau.empty()) throw InvalidInput("tau polynomial must have at least a constant term");
  if (d.is_torus())
    for (size_t k = 1; k < in.tau.size(); ++k)
      if (std::abs(in.tau[k]) != 0)
        throw InvalidInput("tau must be constant on a torus base (periodicity)");

  // apply exponent presets, then validate ranges
  for (auto& m : in.marked) {
    if (m.multiplicity < 2) throw InvalidInput("fiber multiplicity must be at least 2");
    if (m.e <= 0) m.e = cone_exponent(m.multiplicity);
    if (m.beta <= 0) m.beta = blowup_exponent(m.multiplicity);
    if (m.exclusion <= 0) m.exclusion = 4 * h;
    if (!(m.e > 0 && m.e < 1)) throw InvalidInput("cone weight must lie in (0,1)");
    if (!(m.beta >= 5.0 / 6.0 - 1e-12 && m.beta < 1))
      throw InvalidInput("blow-up rate must lie in [5/6, 1)");
    if (m.e > m.beta + 1e-12) throw InvalidInput("cone weight must not exceed the blow-up rate");
    if (m.exclusion < 2 * h) throw InvalidInput("exclusion core must span at least two spacings");
  }
  // the domain must carry a matching puncture for every marked point
  for (const auto& m : in.marked) {
    bool found = false;
    for (const auto& p : d.punctures)
      if (std::abs(p.pos - m.pos) < 1e-12 && std::abs(p.exclusion - m.exclusion) < 1e-12) {
        found = true;
        break;
      }
    if (!found) throw InvalidInput("domain punctures must match the marked points");
  }

  FibrationSpec spec;
  spec.dom = in.dom;

  // tau, fiber density, Weil-Petersson
  spec.im_tau = Array(d.size());
  spec.tau_re = Array(d.size());
  for (int j = 0; j < d.ny; ++j)
    for (int i = 0; i < d.nx; ++i) {
      const cplx t = poly_eval(in.tau, d.node(i, j));
      if (t.imag() < kImFloor) throw InvalidInput("Im(tau) fell below the positivity floor");
      spec.im_tau[d.idx(i, j)] = t.imag();
      spec.tau_re[d.idx(i, j)] = t.real();
    }
  spec.fiber_rho = in.fiber_area / spec.im_tau;
  spec.wp = weil_petersson(in.dom, in.tau);

  spec.compat_required = 0;
  for (const auto& m : in.marked) spec.compat_required += kPi * m.e;

  // closed-surface balance; optionally rescale chi to meet it exactly
  {
    Array chi_rho = in.chi.density(d);
    Array ric = in.chi.ricci_density(d);
    double ichain = 0, ichi = 0;
    const Array& w = d.cell_weights();
    for (int k = 0; k < d.size(); ++k) {
      ichain += (ric[k] - spec.wp.density[k]) * w[k];
      ichi += chi_rho[k] * w[k];
    }
    if (d.is_torus() && in.mode == ConsistencyMode::exact) {
      if (in.chi_autoscale) {
        const double c = (spec.compat_required - ichain) / ichi;
        if (!(c > 0))
          throw ConsistencyError("closed-surface balance cannot be met by scaling chi");
        in.chi.scale *= c;
        spec.chi_scale_applied = c;
      } else if (std::abs(ichi + ichain - spec.compat_required) >
                 1e-8 * std::max(1.0, std::abs(spec.compat_required))) {
        throw ConsistencyError("exact mode needs the closed-surface balance to hold");
      }
    }
  }

  spec.chi = BaseForm(in.dom, in.chi.density(d), d.interior_mask());
  spec.chi0 = BaseForm(in.dom, in.chi0.density(d), d.interior_mask());
  spec.ric_chi = in.chi.ricci_density(d);
  spec.core_mask = d.puncture_mask();

  // sigma cutoff: product of per-point gaussians
  spec.sigma = ScalarField(in.dom, 1.0);
  if (!in.marked.empty()) {
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i < d.nx; ++i) {
        double prod = 1;
        for (const auto& m : in.marked) {
          const double r = d.puncture_separation(d.node(i, j), m.pos);
          const double dd = 3 * m.exclusion * m.sigma_scale;
          prod *= r * r / (dd * dd);
        }
        spec.sigma.v[d.idx(i, j)] = 1 - std::exp(-prod);
      }
    ScalarField gs = grad_sq(spec.sigma);
    ScalarField dds = ddbar(spec.sigma);
    spec.sigma_grad_sup = gs.sup_abs();
    spec.sigma_hess_sup = dds.sup_abs();
  }

  // smooth log-factor h from chi + ric(chi) - wp
  Array rhs = spec.chi.density + spec.ric_chi - spec.wp.density;
  {
    double total = 0;
    const Array& w = d.cell_weights();
    for (int k = 0; k < d.size(); ++k) total += rhs[k] * w[k];
    spec.compat_actual = total;
  }
  if (d.is_torus()) {
    spec.h = ScalarField(in.dom, fft::poisson_zero_mean(d, rhs), d.interior_mask());
    const double mean_rhs = rhs.mean();
    spec.ricci_sing_const = spec.compat_required / d.area();
    spec.defect_const = mean_rhs - spec.ricci_sing_const;
    if (in.mode == ConsistencyMode::exact && std::abs(spec.defect_const) > 1e-8)
      throw ConsistencyError("exact mode left a nonzero normalization defect");
  } else {
    GridLaplacian L(in.dom, d.interior_mask());
    Array full = L.scatter(L.solve_poisson(L.gather(rhs), 0.0));
    spec.h = ScalarField(in.dom, std::move(full), d.interior_mask());
    spec.ricci_sing_const = 0;
    spec.defect_const = 0;
  }

  // singular factors of log F
  Array log_f = spec.h.v;
  if (d.is_torus()) {
    for (const auto& m : in.marked) {
      // discrete Green factor: ddbar G = (pi/2)(delta_h - 1/area)
      Array delta = Array::Zero(d.size());
      int bi = 0, bj = 0;
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < d.ny; ++j)
        for (int i = 0; i < d.nx; ++i) {
          const double r = d.puncture_separation(d.node(i, j), m.pos);
          if (r < best) {
            best = r;
            bi = i;
            bj = j;
          }
        }
      delta[d.idx(bi, bj)] = 1.0 / d.cell_area();
      Array g = fft::poisson_zero_mean(d, Array(0.5 * kPi * delta));
      log_f -= 2 * m.e * g;
    }
  } else {
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i < d.nx; ++i) {
        const int k = d.idx(i, j);
        for (const auto& m : in.marked) {
          const double r = std::abs(d.node(i, j) - m.pos);
          log_f[k] += -2 * m.e * std::log(std::max(r, 1e-300));
        }
      }
  }

  // graded quadrature weights near the cores
  auto quad = std::make_shared<Array>(d.cell_weights());
  if (!in.marked.empty()) {
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i < d.nx; ++i) {
        const int k = d.idx(i, j);
        if (!spec.core_mask[k] || (*quad)[k] == 0) continue;
        for (const auto& m : in.marked) {
          const double rc = d.puncture_separation(d.node(i, j), m.pos);
          if (rc > 6 * h) continue;
          const int ss = 16;
          double acc = 0;
          for (int b = 0; b < ss; ++b)
            for (int a = 0; a < ss; ++a) {
              const cplx sub(d.x(i) + ((a + 0.5) / ss - 0.5) * d.hx,
                             d.y(j) + ((b + 0.5) / ss - 0.5) * d.hy);
              const double rs = std::max(d.puncture_separation(sub, m.pos), 1e-12);
              acc += std::pow(rs, -2 * m.e);
            }
          (*quad)[k] *= (acc / (ss * ss)) / std::pow(rc, -2 * m.e);
        }
      }
  }

  // normalize so the twisted reference mass matches the chi mass
  {
    double num = 0, den = 0;
    for (int k = 0; k < d.size(); ++k) {
      if (!spec.core_mask[k]) continue;
      num += std::exp(log_f[k]) * spec.chi.density[k] * (*quad)[k];
      den += spec.chi.density[k] * (*quad)[k];
    }
    if (!(num > 0) || !(den > 0)) throw ConsistencyError("degenerate twist normalization");
    spec.log_z = std::log(num / den);
  }
  spec.F = BaseForm(in.dom, (log_f - spec.log_z).exp(), spec.core_mask);
  spec.F.quad = quad;
  spec.omega_ref = BaseForm(in.dom, 2.0 * spec.F.density * spec.fiber_rho * spec.chi.density,
                            spec.core_mask);
  spec.omega_ref.quad = quad;

  // configuration fingerprint
  {
    std::string c;
    c += d.is_torus() ? "T;" : "D;";
    append_num(c, d.nx);
    append_num(c, d.ny);
    append_num(c, d.is_torus() ? d.px : d.radius);
    append_num(c, d.is_torus() ? d.py : d.boundary_value);
    for (const auto& m : in.marked) {
      append_num(c, m.pos.real());
      append_num(c, m.pos.imag());
      append_num(c, m.multiplicity);
      append_num(c, m.e);
      append_num(c, m.beta);
      append_num(c, m.exclusion);
    }
    c += "tau;";
    for (const auto& t : in.tau) {
      append_num(c, t.real());
      append_num(c, t.imag());
    }
    append_num(c, in.fiber_area);
    c += in.mode == ConsistencyMode::exact ? "exact;" : "twisted;";
    append_num(c, double(int(in.chi.kind)));
    append_num(c, in.chi.scale);
    append_num(c, in.chi.amp);
    append_num(c, in.chi.width);
    append_num(c, double(int(in.chi0.kind)));
    append_num(c, in.chi0.scale);
    append_num(c, in.chi0.amp);
    append_num(c, in.chi0.width);
    spec.hash = fnv1a(c);
  }

  spec.in = std::move(in);
  return spec;
}

Array FibrationSpec::assemble_base_ricci(double k, const ScalarField& phi, Mask* out_mask) const {
  ScalarField ddp = ddbar(phi);
  ScalarField ddh = ddbar(h);
  Array ric = -k * ddp.v - ddh.v - ricci_sing_const + ric_chi;
  if (out_mask) *out_mask = mask_and(ddp.mask, ddh.mask);
  return ric;
}

double lattice_covering_radius(cplx tau) {
  if (!(tau.imag() > 0)) throw InvalidInput("lattice parameter needs Im(tau) > 0");
  const int ns = 96;
  double cov = 0;
  for (int b = 0; b < ns; ++b)
    for (int a = 0; a < ns; ++a) {
      const cplx w = (a + 0.5) / ns + tau * ((b + 0.5) / ns);
      double best = std::numeric_limits<double>::infinity();
      for (int q = -2; q <= 3; ++q)
        for (int p = -2; p <= 3; ++p) best = std::min(best, std::abs(w - (double(p) + tau * double(q))));
      cov = std::max(cov, best);
    }
  return cov;
}

double max_fiber_diameter(const FibrationSpec& spec) {
  const BaseDomain& d = *spec.dom;
  const bool const_tau = spec.in.tau.size() == 1 ||
                         [&] {
                           for (size_t k = 1; k < spec.in.tau.size(); ++k)
                             if (std::abs(spec.in.tau[k]) != 0) return false;
                           return true;
                         }();
  double cov0 = const_tau ? lattice_covering_radius(spec.in.tau[0]) : 0;
  double best = 0;
  const int stride = std::max(1, d.nx / 32);
  for (int j = 0; j < d.ny; j += stride)
    for (int i = 0; i < d.nx; i += stride) {
      const int k = d.idx(i, j);
      if (!d.interior_mask()[k]) continue;
      const double cov =
          const_tau ? cov0
                    : lattice_covering_radius(cplx(spec.tau_re[k], spec.im_tau[k]));
      best = std::max(best, cov * std::sqrt(spec.fiber_rho[k]));
    }
  return best;
}

}  // namespace gkelab
