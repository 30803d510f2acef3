#pragma once

#include "gkelab/grid.hpp"

namespace gkelab {

// Spectral operators on unmasked torus grids. Plans are cached per grid
// shape and created with FFTW_ESTIMATE so results are run-to-run identical.
namespace fft {

// quarter-Laplacian d/ds d/dsbar applied spectrally.
Array ddbar(const BaseDomain& dom, const Array& values);

// Solve (1/4) lap u = rhs - mean(rhs), normalized to mean(u) = 0.
Array poisson_zero_mean(const BaseDomain& dom, const Array& rhs);

// Solve (c - (1/4) lap) u = rhs, c > 0.
Array helmholtz(const BaseDomain& dom, double c, const Array& rhs);

// Squared gradient |du|^2 = u_x^2 + u_y^2 computed spectrally.
Array grad_sq(const BaseDomain& dom, const Array& values);

}  // namespace fft
}  // namespace gkelab
