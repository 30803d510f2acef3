#include "gkelab/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <vector>

namespace gkelab {
namespace fft {

namespace {

struct Plan2d {
  int nx, ny;
  fftw_complex* buf;
  fftw_plan fwd, bwd;

  Plan2d(int nx_, int ny_) : nx(nx_), ny(ny_) {
    buf = fftw_alloc_complex(static_cast<size_t>(nx) * ny);
    // FFTW_ESTIMATE keeps plans deterministic across runs
    fwd = fftw_plan_dft_2d(ny, nx, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd = fftw_plan_dft_2d(ny, nx, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~Plan2d() {
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
    fftw_free(buf);
  }
  Plan2d(const Plan2d&) = delete;
};

Plan2d& plan_for(int nx, int ny) {
  static std::map<std::pair<int, int>, std::unique_ptr<Plan2d>> cache;
  auto& slot = cache[{nx, ny}];
  if (!slot) slot = std::make_unique<Plan2d>(nx, ny);
  return *slot;
}

void require_clean_torus(const BaseDomain& dom) {
  if (!dom.is_torus()) throw InvalidInput("spectral operators need a torus domain");
}

double wavenumber(int k, int n, double period) {
  const int kk = (k <= n / 2) ? k : k - n;
  return 2.0 * M_PI * kk / period;
}

// Apply a real spectral multiplier; mult(kx, ky) with angular wavenumbers.
template <class Mult>
Array apply_multiplier(const BaseDomain& dom, const Array& values, Mult mult) {
  require_clean_torus(dom);
  const int nx = dom.nx, ny = dom.ny;
  Plan2d& p = plan_for(nx, ny);
  for (int k = 0; k < nx * ny; ++k) {
    p.buf[k][0] = values[k];
    p.buf[k][1] = 0.0;
  }
  fftw_execute(p.fwd);
  for (int j = 0; j < ny; ++j) {
    const double ky = wavenumber(j, ny, dom.py);
    for (int i = 0; i < nx; ++i) {
      const double kx = wavenumber(i, nx, dom.px);
      const double m = mult(kx, ky);
      const int k = j * nx + i;
      p.buf[k][0] *= m;
      p.buf[k][1] *= m;
    }
  }
  fftw_execute(p.bwd);
  Array out(nx * ny);
  const double scale = 1.0 / (double(nx) * ny);
  for (int k = 0; k < nx * ny; ++k) out[k] = p.buf[k][0] * scale;
  return out;
}

}  // namespace

Array ddbar(const BaseDomain& dom, const Array& values) {
  return apply_multiplier(dom, values,
                          [](double kx, double ky) { return -0.25 * (kx * kx + ky * ky); });
}

Array poisson_zero_mean(const BaseDomain& dom, const Array& rhs) {
  return apply_multiplier(dom, rhs, [](double kx, double ky) {
    const double k2 = kx * kx + ky * ky;
    return k2 == 0 ? 0.0 : -4.0 / k2;
  });
}

Array helmholtz(const BaseDomain& dom, double c, const Array& rhs) {
  if (!(c > 0)) throw InvalidInput("helmholtz shift must be positive");
  return apply_multiplier(dom, rhs, [c](double kx, double ky) {
    return 1.0 / (c + 0.25 * (kx * kx + ky * ky));
  });
}

Array grad_sq(const BaseDomain& dom, const Array& values) {
  require_clean_torus(dom);
  const int nx = dom.nx, ny = dom.ny;
  Plan2d& p = plan_for(nx, ny);
  Array gx(nx * ny), gy(nx * ny);
  for (int pass = 0; pass < 2; ++pass) {
    for (int k = 0; k < nx * ny; ++k) {
      p.buf[k][0] = values[k];
      p.buf[k][1] = 0.0;
    }
    fftw_execute(p.fwd);
    for (int j = 0; j < ny; ++j) {
      const double ky = wavenumber(j, ny, dom.py);
      for (int i = 0; i < nx; ++i) {
        const double kx = wavenumber(i, nx, dom.px);
        // on even grids the Nyquist derivative mode is dropped
        double w = pass == 0 ? (2 * i == nx ? 0.0 : kx) : (2 * j == ny ? 0.0 : ky);
        const int k = j * nx + i;
        const double re = p.buf[k][0], im = p.buf[k][1];
        p.buf[k][0] = -w * im;  // multiply by i*w
        p.buf[k][1] = w * re;
      }
    }
    fftw_execute(p.bwd);
    Array& g = pass == 0 ? gx : gy;
    const double scale = 1.0 / (double(nx) * ny);
    for (int k = 0; k < nx * ny; ++k) g[k] = p.buf[k][0] * scale;
  }
  return gx * gx + gy * gy;
}

}  // namespace fft
}  // namespace gkelab
