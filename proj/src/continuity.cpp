#include "gkelab/continuity.hpp"

#include <cmath>
#include <limits>

#include "gkelab/fft.hpp"
#include "gkelab/linsolve.hpp"
#include "gkelab/ops.hpp"

namespace gkelab {

namespace {

bool full_mask(const Mask& m) {
  for (auto b : m)
    if (!b) return false;
  return true;
}

double sup_abs_masked(const Array& a, const Mask& m) {
  double s = 0;
  for (int k = 0; k < a.size(); ++k)
    if (m[k]) s = std::max(s, std::abs(a[k]));
  return s;
}

}  // namespace

std::vector<double> geometric_schedule(double t0, double t1, int n) {
  if (!(t0 > 0) || !(t1 > t0) || n < 2) throw InvalidInput("schedule needs 0 < t0 < t1, n >= 2");
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = t0 * std::pow(t1 / t0, double(i) / (n - 1));
  return out;
}

BaseForm chi_t_form(const FibrationSpec& spec, double t) {
  if (!(t > 0)) throw InvalidInput("family parameter must be positive");
  const double a = 1.0 / (1.0 + t), b = t / (1.0 + t);
  BaseForm out(spec.dom, a * spec.chi0.density + b * spec.chi.density, spec.core_mask);
  return out;
}

SolveReport reduced_step(const FibrationSpec& spec, double t, ScalarField& phi,
                         const NewtonOptions& opt) {
  const double k = (1.0 + t) / t;
  BaseForm ref = chi_t_form(spec, t);
  BaseForm W(spec.dom, spec.F.density * spec.chi.density, spec.core_mask);
  if (!phi.dom) {
    phi = ScalarField(spec.dom, spec.dom->is_torus() ? 0.0 : spec.dom->boundary_value);
    phi.mask = spec.core_mask;
  }
  return solve_exp_ma(ref, W, k, phi, opt);
}

SolveReport rescaled_step(const FibrationSpec& spec, double u, ScalarField& psi,
                          const NewtonOptions& opt) {
  if (!(u > 0)) throw InvalidInput("rescaled time must be positive");
  const double c = 1.0 - std::exp(-u);
  const double t = std::expm1(u);
  const DomainPtr dom = spec.dom;
  BaseForm chit = chi_t_form(spec, t);
  const Array fchi = spec.F.density * spec.chi.density;
  Mask mask = spec.core_mask;
  if (!psi.dom) {
    psi = ScalarField(dom, dom->is_torus() ? 0.0 : dom->boundary_value);
    psi.mask = mask;
  }

  SolveReport rep;
  const bool spectral = dom->is_torus() && full_mask(mask);

  if (spectral) {
    auto density = [&](const Array& v) -> Array { return chit.density + fft::ddbar(*dom, v); };
    auto resid = [&](const Array& v, const Array& D) -> Array {
      return v - c * (D / fchi).log();
    };
    Array v = psi.v;
    Array D = density(v);
    if (D.minCoeff() <= 0) throw SolverError("rescaled start leaves the positive cone");
    Array R = resid(v, D);
    double nrm = sup_abs_masked(R, mask);
    rep.history.push_back(nrm);
    for (int it = 0; it < opt.max_iter && nrm > opt.tol; ++it) {
      Array delta = cg_shifted_spectral(*dom, D / c, Array(-(D * R) / c), opt.lin_tol, opt.lin_maxit);
      double alpha = 1.0;
      bool accepted = false;
      for (int bt = 0; bt < opt.max_backtrack; ++bt, alpha *= 0.5) {
        Array trial = v + alpha * delta;
        Array Dt = density(trial);
        if (Dt.minCoeff() <= 0) continue;
        Array Rt = resid(trial, Dt);
        const double nt = sup_abs_masked(Rt, mask);
        if (nt < (1 - 1e-4 * alpha) * nrm) {
          v = std::move(trial);
          D = std::move(Dt);
          R = std::move(Rt);
          nrm = nt;
          accepted = true;
          break;
        }
      }
      if (!accepted) throw SolverError("rescaled line search failed", rep.history);
      rep.history.push_back(nrm);
      rep.iterations = it + 1;
    }
    psi.v = v;
    rep.residual = nrm;
    rep.converged = nrm <= opt.tol;
    if (!rep.converged) throw SolverError("rescaled newton failed to converge", rep.history);
    return rep;
  }

  GridLaplacian L(dom, mask);
  const double datum = dom->is_torus() ? 0.0 : dom->boundary_value;
  Vector chit_g = L.gather(chit.density), fchi_g = L.gather(fchi);
  auto density = [&](const Vector& v) -> Vector { return chit_g + L.apply(v, datum); };
  auto resid = [&](const Vector& v, const Vector& D) -> Vector {
    return v - c * (D.array() / fchi_g.array()).log().matrix();
  };
  Vector v = L.gather(psi.v);
  Vector D = density(v);
  if (D.minCoeff() <= 0) throw SolverError("rescaled start leaves the positive cone");
  Vector R = resid(v, D);
  double nrm = R.lpNorm<Eigen::Infinity>();
  rep.history.push_back(nrm);
  for (int it = 0; it < opt.max_iter && nrm > opt.tol; ++it) {
    L.factor_weighted(D, c);
    Vector delta = L.solve(Vector(-(D.array() * R.array()).matrix()));
    double alpha = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < opt.max_backtrack; ++bt, alpha *= 0.5) {
      Vector trial = v + alpha * delta;
      Vector Dt = density(trial);
      if (Dt.minCoeff() <= 0) continue;
      Vector Rt = resid(trial, Dt);
      const double nt = Rt.lpNorm<Eigen::Infinity>();
      if (nt < (1 - 1e-4 * alpha) * nrm) {
        v = std::move(trial);
        D = std::move(Dt);
        R = std::move(Rt);
        nrm = nt;
        accepted = true;
        break;
      }
    }
    if (!accepted) throw SolverError("rescaled line search failed", rep.history);
    rep.history.push_back(nrm);
    rep.iterations = it + 1;
  }
  psi.v = L.scatter(v, dom->is_torus() ? 0.0 : datum);
  rep.residual = nrm;
  rep.converged = nrm <= opt.tol;
  if (!rep.converged) throw SolverError("rescaled newton failed to converge", rep.history);
  return rep;
}

ContinuityResult run_continuity(
    const FibrationSpec& spec, const std::vector<double>& t_values, const ContinuityOptions& opt,
    const ScalarField* phi_start, size_t start_index,
    const std::function<void(size_t, const StepRecord&, const ScalarField&, const ScalarField&)>&
        on_step,
    const ScalarField* psi_start) {
  if (t_values.empty()) throw InvalidInput("empty continuity schedule");
  for (size_t i = 1; i < t_values.size(); ++i)
    if (!(t_values[i] > t_values[i - 1])) throw InvalidInput("schedule must increase");
  if (start_index >= t_values.size()) throw InvalidInput("resume index beyond the schedule");

  ContinuityResult out;
  if (opt.track_limit) out.phi_inf = solve_gke(spec, opt.newton).phi;

  const double margin_edge =
      spec.dom->is_torus() ? 0.0 : opt.compact_edge_frac * spec.dom->radius;
  Mask compact = mask_and(compact_mask(*spec.dom, margin_edge, opt.compact_core_factor),
                          spec.core_mask);
  const double fiber_diam0 = max_fiber_diameter(spec);

  if (phi_start) {
    out.phi = *phi_start;
    out.psi = psi_start ? *psi_start : *phi_start;  // same fixed point either way
  }

  for (size_t i = start_index; i < t_values.size(); ++i) {
    const double t = t_values[i];
    const double u = std::log1p(t);
    const double k = (1.0 + t) / t;
    StepRecord rec;
    rec.t = t;
    rec.u = u;

    SolveReport rep = reduced_step(spec, t, out.phi, opt.newton);
    rec.newton_iters = rep.iterations;
    rec.newton_residual = rep.residual;

    BaseForm omega_b = perturb(chi_t_form(spec, t), out.phi);

    // curvature identity, assembled from the certified factors
    {
      Mask rm;
      Array ric_base = spec.assemble_base_ricci(k, out.phi, &rm);
      Array target = (1.0 / t) * spec.chi0.density - k * omega_b.density;
      Array res = ric_base - spec.wp.density - target - spec.defect_const;
      Mask m = mask_and(mask_and(rm, omega_b.mask), compact);
      rec.identity_residual = sup_abs_masked(res, m);

      Array marg = (1.0 / t) * spec.chi0.density + (2.0 - k) * omega_b.density -
                   spec.wp.density + spec.defect_const;
      double mn = std::numeric_limits<double>::infinity();
      for (int kk = 0; kk < marg.size(); ++kk)
        if (m[kk]) mn = std::min(mn, marg[kk]);
      rec.margin = mn;
    }

    rec.phi_sup = out.phi.sup_abs();
    {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (int kk = 0; kk < out.phi.v.size(); ++kk)
        if (out.phi.mask[kk] && compact[kk]) {
          lo = std::min(lo, out.phi.v[kk]);
          hi = std::max(hi, out.phi.v[kk]);
        }
      rec.phi_osc = hi - lo;
    }

    // trace and volume-ratio envelopes of the flowing metric
    {
      Mask m = mask_and(mask_and(omega_b.mask, spec.F.mask),
                        mask_and(compact, spec.sigma.mask));
      double blo = std::numeric_limits<double>::infinity(), bhi = -blo;
      for (int kk = 0; kk < omega_b.density.size(); ++kk) {
        if (!m[kk]) continue;
        rec.trace_chi_max =
            std::max(rec.trace_chi_max, spec.chi.density[kk] / omega_b.density[kk]);
        const double tr0 = spec.chi0.density[kk] / ((1.0 + t) * omega_b.density[kk]) + 1.0;
        rec.weighted_trace_max =
            std::max(rec.weighted_trace_max,
                     std::pow(spec.sigma.v[kk], opt.lambda2) * std::log(tr0));
        const double band = omega_b.density[kk] / (spec.F.density[kk] * spec.chi.density[kk]);
        blo = std::min(blo, band);
        bhi = std::max(bhi, band);
      }
      rec.band_lo = blo;
      rec.band_hi = bhi;
    }

    if (opt.rescaled) {
      rescaled_step(spec, u, out.psi, opt.newton);
      double gap = 0;
      for (int kk = 0; kk < out.psi.v.size(); ++kk)
        if (out.psi.mask[kk] && out.phi.mask[kk])
          gap = std::max(gap, std::abs(out.psi.v[kk] - out.phi.v[kk]));
      rec.rescaled_gap = gap;

      // volume-normalized trace function against the generalized limit
      if (opt.track_limit) {
        ScalarField ddpsi = ddbar(out.psi);
        Array eta = chi_t_form(spec, t).density + ddpsi.v;
        Array g = spec.F.density * spec.chi.density * (k * out.psi.v).exp() / eta;
        Mask m = mask_and(mask_and(ddpsi.mask, spec.core_mask), compact);
        rec.g_dev = sup_abs_masked(Array(g - 1.0), m);
        Array tr = spec.F.density * spec.chi.density * out.phi_inf.v.exp() / eta;
        rec.trace_decay = sup_abs_masked(Array(tr - 1.0), mask_and(m, out.phi_inf.mask));
      }

      // flow-derivative probe
      const double du = std::min(opt.du_probe, 0.45 * u);
      if (du > 1e-6) {
        ScalarField plus = out.psi, minus = out.psi;
        rescaled_step(spec, u + du, plus, opt.newton);
        rescaled_step(spec, u - du, minus, opt.newton);
        double sup = 0, decay = 0;
        for (int kk = 0; kk < plus.v.size(); ++kk)
          if (plus.mask[kk] && minus.mask[kk]) {
            const double d = (plus.v[kk] - minus.v[kk]) / (2 * du);
            sup = std::max(sup, std::abs(d));
            if (opt.track_limit && out.phi_inf.mask[kk] && compact[kk])
              decay = std::max(decay, std::abs(out.psi.v[kk] + d - out.phi_inf.v[kk]));
          }
        rec.du_psi = sup;
        rec.lemma_decay = decay;
      }
    }

    if (opt.track_limit) {
      double gap = 0;
      for (int kk = 0; kk < out.phi.v.size(); ++kk)
        if (out.phi.mask[kk] && out.phi_inf.mask[kk] && compact[kk])
          gap = std::max(gap, std::abs(out.phi.v[kk] - out.phi_inf.v[kk]));
      rec.gke_gap = gap;
    }

    rec.fiber_diam = fiber_diam0 / std::sqrt(1.0 + t);

    out.records.push_back(rec);
    if (on_step) on_step(i, rec, out.phi, out.psi);
  }
  return out;
}

EnvelopeFit fit_decay_envelope(const std::vector<StepRecord>& records) {
  std::vector<std::pair<double, double>> rows;  // (u, du_psi)
  double env = 0, last = 0;
  for (const auto& r : records) {
    if (!(r.du_psi > 0) || !(r.u > 0)) continue;
    rows.emplace_back(r.u, r.du_psi);
    env = std::max(env, r.du_psi * std::exp(r.u));
    last = r.du_psi * std::exp(r.u);
  }
  if (rows.size() < 3) throw InvalidInput("envelope fit needs at least three usable rows");

  // The rate is asymptotic; early rows sit in the transition regime, so the
  // slope is fitted on the later half of the sweep only.
  const size_t tail = std::max<size_t>(3, (rows.size() + 1) / 2);
  EnvelopeFit fit;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = rows.size() - tail; i < rows.size(); ++i) {
    const double x = rows[i].first, y = std::log(rows[i].second);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++fit.n_used;
  }
  const double det = fit.n_used * sxx - sx * sx;
  fit.rate = (fit.n_used * sxy - sx * sy) / det;
  fit.log_c = (sy * sxx - sx * sxy) / det;
  fit.envelope_const = env;
  fit.ratio = last > 0 ? env / last : std::numeric_limits<double>::infinity();
  return fit;
}

}  // namespace gkelab
