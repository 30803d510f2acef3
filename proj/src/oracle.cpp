#include "gkelab/oracle.hpp"

#include <fftw3.h>

#include <cmath>
#include <limits>
#include <memory>
#include <random>

namespace gkelab {

namespace {

constexpr double kPi = 3.14159265358979323846;

double wavenumber(int k, int n, double period) {
  const int kk = (k <= n / 2) ? k : k - n;
  return 2.0 * kPi * kk / period;
}

// Shared 4-d transform workspace with cached plans (FFTW_ESTIMATE keeps
// planning deterministic).
struct Fft4 {
  int nx, ny, nf;
  size_t n;
  fftw_complex* buf;
  fftw_plan fwd, bwd;

  Fft4(int nx_, int ny_, int nf_) : nx(nx_), ny(ny_), nf(nf_) {
    n = size_t(nx) * ny * nf * nf;
    buf = fftw_alloc_complex(n);
    int dims[4] = {nf, nf, ny, nx};
    fwd = fftw_plan_dft(4, dims, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd = fftw_plan_dft(4, dims, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~Fft4() {
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
    fftw_free(buf);
  }
  Fft4(const Fft4&) = delete;

  void load(const Array& re) {
    for (size_t k = 0; k < n; ++k) {
      buf[k][0] = re[k];
      buf[k][1] = 0;
    }
  }
};

struct Spectra {
  // per-axis angular wavenumbers; fiber axes live on unit periods with the
  // shear folded into the effective fiber frequencies
  std::vector<double> kx, ky, ka, kb;
  double re_tau, im_tau;

  double kwx(int a) const { return ka[a]; }
  double kwy(int a, int b) const { return (kb[b] - re_tau * ka[a]) / im_tau; }
};

bool nyquist(int k, int n) { return 2 * k == n; }

// Apply a complex multiplier indexed by the four mode indices; out_re/out_im
// receive the real and imaginary parts of the result.
template <class Mult>
void apply_mult(Fft4& f, const Array& in, Mult mult, Array* out_re, Array* out_im) {
  f.load(in);
  fftw_execute(f.fwd);
  size_t id = 0;
  for (int b = 0; b < f.nf; ++b)
    for (int a = 0; a < f.nf; ++a)
      for (int j = 0; j < f.ny; ++j)
        for (int i = 0; i < f.nx; ++i, ++id) {
          const cplx m = mult(i, j, a, b);
          const cplx v = cplx(f.buf[id][0], f.buf[id][1]) * m;
          f.buf[id][0] = v.real();
          f.buf[id][1] = v.imag();
        }
  fftw_execute(f.bwd);
  const double scale = 1.0 / double(f.n);
  if (out_re) {
    out_re->resize(f.n);
    for (size_t k = 0; k < f.n; ++k) (*out_re)[k] = f.buf[k][0] * scale;
  }
  if (out_im) {
    out_im->resize(f.n);
    for (size_t k = 0; k < f.n; ++k) (*out_im)[k] = f.buf[k][1] * scale;
  }
}

struct HessOps {
  Fft4& f;
  const Spectra& sp;

  // second derivatives keep the full multiplier, matching the base-grid
  // spectral convention; the odd-order mixed entry drops Nyquist modes
  Array ss(const Array& v) {
    Array out;
    apply_mult(f, v,
               [&](int i, int j, int, int) {
                 const double kx = sp.kx[i], ky = sp.ky[j];
                 return cplx(-0.25 * (kx * kx + ky * ky), 0);
               },
               &out, nullptr);
    return out;
  }
  Array ww(const Array& v) {
    Array out;
    apply_mult(f, v,
               [&](int, int, int a, int b) {
                 const double wx = sp.kwx(a), wy = sp.kwy(a, b);
                 return cplx(-0.25 * (wx * wx + wy * wy), 0);
               },
               &out, nullptr);
    return out;
  }
  // mixed entry d_s d_wbar: complex field
  void sw(const Array& v, Array& re, Array& im) {
    apply_mult(f, v,
               [&](int i, int j, int a, int b) {
                 const double kx = nyquist(i, f.nx) ? 0.0 : sp.kx[i];
                 const double ky = nyquist(j, f.ny) ? 0.0 : sp.ky[j];
                 const double ka = nyquist(a, f.nf) ? 0.0 : sp.ka[a];
                 const double kb = nyquist(b, f.nf) ? 0.0 : sp.kb[b];
                 const double wx = ka;
                 const double wy = (kb - sp.re_tau * ka) / sp.im_tau;
                 const cplx ds = 0.5 * cplx(0, 1) * cplx(kx, -ky);  // multiplier of d/ds
                 const cplx dwb = 0.5 * cplx(0, 1) * cplx(wx, wy);  // multiplier of d/dwbar
                 return ds * dwb;
               },
               &re, &im);
  }
};

// BiCGStab on a matrix-free real operator with a spectral preconditioner.
template <class Op, class Prec>
Array bicgstab(size_t n, Op&& A, Prec&& P, const Array& b, double rel_tol, int maxit,
               std::vector<double>& hist) {
  Array x = Array::Zero(n);
  Array r = b;
  const double b2 = std::sqrt((b * b).sum());
  if (b2 == 0) return x;
  Array r0 = r;
  double rho = 1, alpha = 1, omega = 1;
  Array v = Array::Zero(n), p = Array::Zero(n);
  for (int it = 0; it < maxit; ++it) {
    const double rho1 = (r0 * r).sum();
    if (std::abs(rho1) < 1e-300) throw SolverError("bicgstab breakdown (rho)", hist);
    if (it == 0) {
      p = r;
    } else {
      const double beta = (rho1 / rho) * (alpha / omega);
      p = r + beta * (p - omega * v);
    }
    Array ph = P(p);
    v = A(ph);
    alpha = rho1 / (r0 * v).sum();
    if (!std::isfinite(alpha)) throw SolverError("bicgstab breakdown (alpha)", hist);
    Array s = r - alpha * v;
    double snorm = std::sqrt((s * s).sum());
    if (snorm <= rel_tol * b2) {
      x += alpha * ph;
      hist.push_back(snorm / b2);
      return x;
    }
    Array sh = P(s);
    Array tv = A(sh);
    omega = (tv * s).sum() / (tv * tv).sum();
    if (!std::isfinite(omega) || omega == 0) throw SolverError("bicgstab breakdown (omega)", hist);
    x += alpha * ph + omega * sh;
    r = s - omega * tv;
    rho = rho1;
    const double rnorm = std::sqrt((r * r).sum());
    hist.push_back(rnorm / b2);
    if (rnorm <= rel_tol * b2) return x;
  }
  throw SolverError("bicgstab stalled before reaching tolerance", hist);
}

}  // namespace

OracleResult solve_full_ma(const FibrationSpec& spec, double t, int n_fiber,
                           const OraclePerturbation& pert, const NewtonOptions& opt) {
  const BaseDomain& d = *spec.dom;
  if (!d.is_torus()) throw InvalidInput("product check needs a torus base");
  if (!spec.in.marked.empty()) throw InvalidInput("product check runs on unmarked bases");
  if (n_fiber < 4) throw InvalidInput("fiber grid too coarse");
  if (d.nx > 16 || d.ny > 16 || n_fiber > 16)
    throw InvalidInput("product check grids are capped at 16 per axis");
  if (!(t > 0)) throw InvalidInput("family parameter must be positive");
  for (size_t k = 1; k < spec.in.tau.size(); ++k)
    if (std::abs(spec.in.tau[k]) != 0) throw InvalidInput("product check needs constant tau");

  const int nx = d.nx, ny = d.ny, nf = n_fiber;
  const size_t n = size_t(nx) * ny * nf * nf;
  const double k_t = (1.0 + t) / t;
  const cplx tau = spec.in.tau[0];
  const double rho_f = spec.in.fiber_area / tau.imag();

  Fft4 fft(nx, ny, nf);
  Spectra sp;
  sp.re_tau = tau.real();
  sp.im_tau = tau.imag();
  sp.kx.resize(nx);
  sp.ky.resize(ny);
  sp.ka.resize(nf);
  sp.kb.resize(nf);
  for (int i = 0; i < nx; ++i) sp.kx[i] = wavenumber(i, nx, d.px);
  for (int j = 0; j < ny; ++j) sp.ky[j] = wavenumber(j, ny, d.py);
  for (int a = 0; a < nf; ++a) sp.ka[a] = wavenumber(a, nf, 1.0);
  for (int b = 0; b < nf; ++b) sp.kb[b] = wavenumber(b, nf, 1.0);
  HessOps H{fft, sp};

  // lift the base data and the twisted volume onto the 4-grid
  BaseForm chit = chi_t_form(spec, t);
  Array chit4(n), omega4(n);
  {
    size_t id = 0;
    for (int b = 0; b < nf; ++b)
      for (int a = 0; a < nf; ++a)
        for (int j = 0; j < ny; ++j)
          for (int i = 0; i < nx; ++i, ++id) {
            const int kb2 = d.idx(i, j);
            chit4[id] = chit.density[kb2];
            double om = spec.F.density[kb2] * rho_f * spec.chi.density[kb2];
            if (pert.profile) {
              om *= pert.profile(d.x(i), d.y(j), double(a) / nf, double(b) / nf);
            } else if (pert.eps != 0) {
              const double cx = std::cos(2 * kPi * pert.k_base * d.x(i) / d.px);
              const double ca = std::cos(2 * kPi * pert.k_fiber * double(a) / nf);
              om *= 1.0 + pert.eps * cx * ca;
            }
            omega4[id] = om;
          }
  }
  if (omega4.minCoeff() <= 0) throw InvalidInput("perturbed volume density must stay positive");

  const double fib_p = rho_f / (1.0 + t);
  const double vol_scale = 1.0 / (1.0 + t);

  Array phi = Array::Zero(n);
  Array m00, m11, msw_re, msw_im;
  auto assemble = [&](const Array& v) {
    m00 = chit4 + H.ss(v);
    m11 = fib_p + H.ww(v);
    H.sw(v, msw_re, msw_im);
  };
  auto det_of = [&]() -> Array {
    return m00 * m11 - msw_re * msw_re - msw_im * msw_im;
  };
  auto residual = [&](const Array& v) -> Array {
    assemble(v);
    return det_of() - vol_scale * (k_t * v).exp() * omega4;
  };

  SolveReport rep;
  Array N = residual(phi);
  double nrm = N.abs().maxCoeff();
  rep.history.push_back(nrm);
  const double coord_vol = d.px * d.py;  // unit fiber coordinate square
  double vol_gap_max = std::abs(N.mean()) * coord_vol;
  for (int it = 0; it < opt.max_iter && nrm > opt.tol; ++it) {
    // linearization around the current assembly
    Array mexp = vol_scale * k_t * (k_t * phi).exp() * omega4;
    Array a00 = m00, a11 = m11, asw_re = msw_re, asw_im = msw_im;
    auto L = [&](const Array& v) -> Array {
      Array dss = H.ss(v), dww = H.ww(v), dsw_re, dsw_im;
      H.sw(v, dsw_re, dsw_im);
      return a11 * dss + a00 * dww - 2.0 * (asw_re * dsw_re + asw_im * dsw_im) - mexp * v;
    };
    const double c11 = a11.mean(), c00 = a00.mean(), cm = mexp.mean();
    auto P = [&](const Array& r) -> Array {
      Array out;
      apply_mult(fft, r,
                 [&](int i, int j, int a, int b) {
                   const double kx = sp.kx[i], ky = sp.ky[j];
                   const double wx = sp.kwx(a), wy = sp.kwy(a, b);
                   const double denom = cm + 0.25 * c11 * (kx * kx + ky * ky) +
                                        0.25 * c00 * (wx * wx + wy * wy);
                   return cplx(1.0 / denom, 0);
                 },
                 &out, nullptr);
      return out;
    };
    std::vector<double> lin_hist;
    Array delta = bicgstab(n, [&](const Array& v) { return Array(-L(v)); }, P, N, opt.lin_tol,
                           opt.lin_maxit, lin_hist);
    double alpha = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < opt.max_backtrack; ++bt, alpha *= 0.5) {
      Array trial = phi + alpha * delta;
      Array Nt = residual(trial);
      if (m00.minCoeff() <= 0 || det_of().minCoeff() <= 0) continue;
      const double nt = Nt.abs().maxCoeff();
      if (nt < (1 - 1e-4 * alpha) * nrm) {
        phi = std::move(trial);
        N = std::move(Nt);
        nrm = nt;
        accepted = true;
        break;
      }
    }
    if (!accepted) throw SolverError("product-space newton line search failed", rep.history);
    vol_gap_max = std::max(vol_gap_max, std::abs(N.mean()) * coord_vol);
    rep.history.push_back(nrm);
    rep.iterations = it + 1;
  }
  rep.residual = nrm;
  rep.converged = nrm <= opt.tol;
  if (!rep.converged) throw SolverError("product-space newton failed to converge", rep.history);

  OracleResult out;
  out.nx = nx;
  out.ny = ny;
  out.nf = nf;
  out.report = rep;

  // positivity certificate, volume constraint, and fiber statistics
  assemble(phi);
  Array det = det_of();
  out.det_min = det.minCoeff();
  out.vol_lhs = det.mean() * coord_vol;
  out.vol_rhs = (vol_scale * (k_t * phi).exp() * omega4).mean() * coord_vol;
  out.vol_gap_max = vol_gap_max;
  out.fiber_avg = fiber_average(phi, nx, ny, nf);
  out.fiber_osc = fiber_oscillation(phi, nx, ny, nf);
  out.fiber_osc_sup = out.fiber_osc.maxCoeff();
  out.phi4 = std::move(phi);
  return out;
}

Array fiber_average(const Array& phi4, int nx, int ny, int nf) {
  if (phi4.size() != Eigen::Index(size_t(nx) * ny * nf * nf))
    throw InvalidInput("potential size does not match the stated grid");
  Array out = Array::Zero(size_t(nx) * ny);
  for (int b = 0; b < nf; ++b)
    for (int a = 0; a < nf; ++a)
      for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
          out[size_t(j) * nx + i] += phi4[((size_t(b) * nf + a) * ny + j) * nx + i];
  return out / double(size_t(nf) * nf);
}

Array fiber_oscillation(const Array& phi4, int nx, int ny, int nf) {
  if (phi4.size() != Eigen::Index(size_t(nx) * ny * nf * nf))
    throw InvalidInput("potential size does not match the stated grid");
  const double inf = std::numeric_limits<double>::infinity();
  Array lo = Array::Constant(size_t(nx) * ny, inf);
  Array hi = Array::Constant(size_t(nx) * ny, -inf);
  for (int b = 0; b < nf; ++b)
    for (int a = 0; a < nf; ++a)
      for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
          const double v = phi4[((size_t(b) * nf + a) * ny + j) * nx + i];
          const size_t k = size_t(j) * nx + i;
          lo[k] = std::min(lo[k], v);
          hi[k] = std::max(hi[k], v);
        }
  return hi - lo;
}

double scaling_transport_check(const FibrationSpec& spec, double t, int n_samples,
                               uint64_t seed) {
  if (t < 0) throw InvalidInput("family parameter must be nonnegative");
  if (n_samples < 1) throw InvalidInput("need at least one sample");
  const BaseDomain& d = *spec.dom;
  const double root = std::sqrt(1.0 + t);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double worst = 0;
  for (int k = 0; k < d.size(); ++k) {
    if (!spec.core_mask[k]) continue;
    const double rho = spec.fiber_rho[k];
    const cplx tau(spec.tau_re[k], spec.im_tau[k]);
    for (int s = 0; s < n_samples; ++s) {
      const cplx w = unif(rng) + tau * unif(rng);
      const double q = 0.5 * rho * std::norm(w);
      const double qt = 0.5 * rho * std::norm(root * w) / (1.0 + t);
      worst = std::max(worst, std::abs(qt - q));
    }
  }
  return worst;
}

}  // namespace gkelab
