#include "gkelab/gke.hpp"

#include <cmath>
#include <random>

#include "gkelab/fft.hpp"
#include "gkelab/linsolve.hpp"
#include "gkelab/ops.hpp"

namespace gkelab {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool full_mask(const Mask& m) {
  for (auto b : m)
    if (!b) return false;
  return true;
}

double sup_norm(const Array& a, const Mask& m) {
  double s = 0;
  for (int k = 0; k < a.size(); ++k)
    if (m[k]) s = std::max(s, std::abs(a[k]));
  return s;
}

}  // namespace

double bilinear(const ScalarField& f, cplx pos) {
  const BaseDomain& d = *f.dom;
  double fx = (pos.real() - d.ox) / d.hx;
  double fy = (pos.imag() - d.oy) / d.hy;
  int i0 = static_cast<int>(std::floor(fx));
  int j0 = static_cast<int>(std::floor(fy));
  const double wx = fx - i0, wy = fy - j0;
  auto fetch = [&](int i, int j) -> double {
    if (d.is_torus()) {
      i = ((i % d.nx) + d.nx) % d.nx;
      j = ((j % d.ny) + d.ny) % d.ny;
    } else if (i < 0 || i >= d.nx || j < 0 || j >= d.ny) {
      throw InvalidInput("sample point outside the grid");
    }
    const int k = d.idx(i, j);
    if (!f.mask[k]) throw InvalidInput("sample stencil touches an invalid node");
    return f.v[k];
  };
  return (1 - wx) * (1 - wy) * fetch(i0, j0) + wx * (1 - wy) * fetch(i0 + 1, j0) +
         (1 - wx) * wy * fetch(i0, j0 + 1) + wx * wy * fetch(i0 + 1, j0 + 1);
}

SolveReport solve_exp_ma(const BaseForm& ref, const BaseForm& W, double k, ScalarField& phi,
                         const NewtonOptions& opt) {
  require_same_domain(*ref.dom, *W.dom, "solve_exp_ma");
  if (!(k > 0)) throw InvalidInput("exponential coefficient must be positive");
  if (!W.positive()) throw InvalidInput("right-hand density must be positive");
  const DomainPtr dom = ref.dom;
  Mask mask = mask_and(ref.mask, W.mask);
  if (!phi.dom) phi = ScalarField(dom, 0.0);
  require_same_domain(*phi.dom, *dom, "solve_exp_ma initial guess");
  phi.mask = mask;

  SolveReport rep;
  const bool spectral = dom->is_torus() && full_mask(mask);

  if (spectral) {
    auto residual = [&](const Array& u) -> Array {
      return ref.density + fft::ddbar(*dom, u) - W.density * (k * u).exp();
    };
    Array u = phi.v;
    Array N = residual(u);
    double nrm = sup_norm(N, mask);
    rep.history.push_back(nrm);
    for (int it = 0; it < opt.max_iter && nrm > opt.tol; ++it) {
      Array m = k * W.density * (k * u).exp();
      Array delta = cg_shifted_spectral(*dom, m, N, opt.lin_tol, opt.lin_maxit);
      double alpha = 1.0;
      bool accepted = false;
      for (int bt = 0; bt < opt.max_backtrack; ++bt, alpha *= 0.5) {
        Array trial = u + alpha * delta;
        Array Nt = residual(trial);
        const double nt = sup_norm(Nt, mask);
        if (nt < (1 - 1e-4 * alpha) * nrm) {
          u = std::move(trial);
          N = std::move(Nt);
          nrm = nt;
          accepted = true;
          break;
        }
      }
      if (!accepted) throw SolverError("newton line search failed", rep.history);
      rep.history.push_back(nrm);
      rep.iterations = it + 1;
    }
    phi.v = u;
    rep.residual = nrm;
    rep.converged = nrm <= opt.tol;
    if (!rep.converged) throw SolverError("newton failed to converge", rep.history);
    return rep;
  }

  GridLaplacian L(dom, mask);
  const double datum = dom->is_torus() ? 0.0 : dom->boundary_value;
  Vector refv = L.gather(ref.density), Wv = L.gather(W.density);
  auto residual = [&](const Vector& u) -> Vector {
    return refv + L.apply(u, datum) - Wv.cwiseProduct((k * u).array().exp().matrix());
  };
  Vector u = L.gather(phi.v);
  Vector N = residual(u);
  double nrm = N.lpNorm<Eigen::Infinity>();
  rep.history.push_back(nrm);
  for (int it = 0; it < opt.max_iter && nrm > opt.tol; ++it) {
    Vector m = k * Wv.cwiseProduct((k * u).array().exp().matrix());
    L.factor_shifted(m);
    Vector delta = L.solve(-N);
    double alpha = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < opt.max_backtrack; ++bt, alpha *= 0.5) {
      Vector trial = u + alpha * delta;
      Vector Nt = residual(trial);
      const double nt = Nt.lpNorm<Eigen::Infinity>();
      if (nt < (1 - 1e-4 * alpha) * nrm) {
        u = std::move(trial);
        N = std::move(Nt);
        nrm = nt;
        accepted = true;
        break;
      }
    }
    if (!accepted) throw SolverError("newton line search failed", rep.history);
    rep.history.push_back(nrm);
    rep.iterations = it + 1;
  }
  phi.v = L.scatter(u, dom->is_torus() ? 0.0 : datum);
  rep.residual = nrm;
  rep.converged = nrm <= opt.tol;
  if (!rep.converged) throw SolverError("newton failed to converge", rep.history);
  return rep;
}

GkeResult solve_gke(const FibrationSpec& spec, const NewtonOptions& opt) {
  BaseForm W(spec.dom, spec.F.density * spec.chi.density, spec.core_mask);
  BaseForm ref(spec.dom, spec.chi.density, spec.core_mask);
  GkeResult out;
  out.phi = ScalarField(spec.dom, 0.0);
  out.phi.mask = spec.core_mask;
  out.report = solve_exp_ma(ref, W, 1.0, out.phi, opt);
  return out;
}

IdentityReport gke_identity_residual(const FibrationSpec& spec, const ScalarField& phi_hat,
                                     double edge_margin_frac, double core_factor) {
  Mask ric_mask;
  Array ric = spec.assemble_base_ricci(1.0, phi_hat, &ric_mask);
  Array base = phi_hat.v.exp() * spec.F.density * spec.chi.density;

  IdentityReport rep;
  rep.defect_used = spec.defect_const;
  rep.residual = ScalarField(spec.dom, ric + base - spec.wp.density - spec.defect_const,
                             mask_and(mask_and(ric_mask, spec.core_mask), phi_hat.mask));
  const double margin = spec.dom->is_torus() ? 0.0 : edge_margin_frac * spec.dom->radius;
  rep.compact = mask_and(compact_mask(*spec.dom, margin, core_factor), rep.residual.mask);
  rep.sup_raw = rep.residual.sup_abs();
  rep.sup_compact = rep.residual.sup_abs(&rep.compact);
  return rep;
}

double cone_flux(const FibrationSpec& spec, size_t marked_index, double r, int samples) {
  if (marked_index >= spec.in.marked.size()) throw InvalidInput("marked point index out of range");
  const auto& m = spec.in.marked[marked_index];
  ScalarField neg_log_f(spec.dom, -spec.F.density.log(), spec.F.mask);
  const double dr = spec.dom->spacing();
  double flux = 0;
  for (int q = 0; q < samples; ++q) {
    const double th = 2 * kPi * (q + 0.5) / samples;
    const cplx dir(std::cos(th), std::sin(th));
    const double lo = bilinear(neg_log_f, m.pos + (r - dr) * dir);
    const double hi = bilinear(neg_log_f, m.pos + (r + dr) * dir);
    flux += (hi - lo) / (2 * dr) * r * (2 * kPi / samples);
  }
  return 0.5 * flux;
}

double uniqueness_spread(const FibrationSpec& spec, const NewtonOptions& opt, double amp,
                         uint64_t seed) {
  GkeResult a = solve_gke(spec, opt);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0, 2 * kPi);
  const double p1 = phase(rng), p2 = phase(rng);
  const BaseDomain& d = *spec.dom;
  ScalarField start(spec.dom, 0.0);
  for (int j = 0; j < d.ny; ++j)
    for (int i = 0; i < d.nx; ++i) {
      const cplx s = d.node(i, j);
      double v;
      if (d.is_torus()) {
        v = std::cos(2 * kPi * s.real() / d.px + p1) * std::cos(2 * kPi * s.imag() / d.py + p2);
      } else {
        const double env = 1 - std::norm(s) / (d.radius * d.radius);
        v = env * std::cos(3 * s.real() + p1) * std::cos(3 * s.imag() + p2);
      }
      start.at(i, j) = amp * v;
    }
  if (!d.is_torus()) start.v += d.boundary_value;  // keep the datum at the edge

  BaseForm W(spec.dom, spec.F.density * spec.chi.density, spec.core_mask);
  BaseForm ref(spec.dom, spec.chi.density, spec.core_mask);
  ScalarField b = start;
  b.mask = spec.core_mask;
  solve_exp_ma(ref, W, 1.0, b, opt);

  double sup = 0;
  for (int k = 0; k < d.size(); ++k)
    if (a.phi.mask[k] && b.mask[k]) sup = std::max(sup, std::abs(a.phi.v[k] - b.v[k]));
  return sup;
}

}  // namespace gkelab
