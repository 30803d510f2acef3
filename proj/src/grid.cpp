#include "gkelab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gkelab {

namespace {

void check_common(int nx, int ny, const std::vector<Puncture>& punctures) {
  if (nx < 12 || ny < 12) throw InvalidInput("grid resolution must be at least 12 per axis");
  for (const auto& p : punctures)
    if (!(p.exclusion >= 0) || !std::isfinite(p.exclusion))
      throw InvalidInput("puncture exclusion radius must be finite and non-negative");
}

}  // namespace

std::shared_ptr<const BaseDomain> BaseDomain::torus(int nx, int ny, double px, double py,
                                                    std::vector<Puncture> punctures) {
  check_common(nx, ny, punctures);
  if (!(px > 0) || !(py > 0)) throw InvalidInput("torus periods must be positive");
  auto d = std::make_shared<BaseDomain>();
  d->kind = DomainKind::torus;
  d->nx = nx;
  d->ny = ny;
  d->px = px;
  d->py = py;
  d->hx = px / nx;
  d->hy = py / ny;
  d->ox = 0.0;
  d->oy = 0.0;
  d->punctures = std::move(punctures);
  d->finalize();
  return d;
}

std::shared_ptr<const BaseDomain> BaseDomain::disk(int n, double radius, double boundary_value,
                                                   std::vector<Puncture> punctures) {
  check_common(n, n, punctures);
  if (!(radius > 0)) throw InvalidInput("disk radius must be positive");
  auto d = std::make_shared<BaseDomain>();
  d->kind = DomainKind::disk;
  d->nx = n;
  d->ny = n;
  d->radius = radius;
  d->boundary_value = boundary_value;
  d->hx = 2 * radius / n;
  d->hy = d->hx;
  // cell-centered so no node lands on the origin or the circle
  d->ox = -radius + 0.5 * d->hx;
  d->oy = -radius + 0.5 * d->hy;
  d->punctures = std::move(punctures);
  d->finalize();
  return d;
}

void BaseDomain::finalize() {
  const int n = size();
  interior_.assign(n, 1);
  weights_ = Array::Constant(n, cell_area());

  if (kind == DomainKind::disk) {
    const double r2 = radius * radius;
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const double xc = x(i), yc = y(j);
        const double rc2 = xc * xc + yc * yc;
        const int k = idx(i, j);
        // cells fully inside keep the plain weight; cut cells get their
        // inside fraction by subsampling
        const double reach = 0.5 * std::hypot(hx, hy);
        const double rc = std::sqrt(rc2);
        if (rc + reach <= radius) continue;
        if (rc - reach >= radius) {
          interior_[k] = 0;
          weights_[k] = 0.0;
          continue;
        }
        const int ss = 8;
        int in = 0;
        for (int b = 0; b < ss; ++b)
          for (int a = 0; a < ss; ++a) {
            const double xs = xc + ((a + 0.5) / ss - 0.5) * hx;
            const double ys = yc + ((b + 0.5) / ss - 0.5) * hy;
            if (xs * xs + ys * ys < r2) ++in;
          }
        const double frac = double(in) / (ss * ss);
        if (rc2 < r2 && frac > 0) {
          weights_[k] = frac * cell_area();
        } else {
          interior_[k] = 0;
          weights_[k] = 0.0;
        }
      }
  }

  for (const auto& p : punctures) {
    const double xr = p.pos.real(), yr = p.pos.imag();
    if (kind == DomainKind::disk) {
      if (std::hypot(xr, yr) + p.exclusion >= radius)
        throw InvalidInput("puncture (with its exclusion core) must lie strictly inside the disk");
    } else {
      if (xr < 0 || xr >= px || yr < 0 || yr >= py)
        throw InvalidInput("torus puncture must lie inside the fundamental cell");
    }
  }
  for (size_t a = 0; a < punctures.size(); ++a)
    for (size_t b = a + 1; b < punctures.size(); ++b) {
      double d = puncture_separation(punctures[a].pos, punctures[b].pos);
      if (d < 4 * spacing())
        throw InvalidInput("marked points closer than four grid spacings are not resolved");
    }

  area_ = 0;
  for (int k = 0; k < n; ++k) area_ += weights_[k];
}

double BaseDomain::puncture_separation(cplx a, cplx b) const {
  if (kind == DomainKind::disk) return std::abs(a - b);
  // nearest periodic image
  double dx = std::fmod(std::abs(a.real() - b.real()), px);
  double dy = std::fmod(std::abs(a.imag() - b.imag()), py);
  dx = std::min(dx, px - dx);
  dy = std::min(dy, py - dy);
  return std::hypot(dx, dy);
}

Mask BaseDomain::puncture_mask() const {
  Mask m = interior_;
  for (const auto& p : punctures) {
    if (p.exclusion <= 0) continue;
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        if (puncture_separation(node(i, j), p.pos) <= p.exclusion) m[idx(i, j)] = 0;
      }
  }
  return m;
}

double BaseDomain::puncture_distance(int i, int j) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : punctures) best = std::min(best, puncture_separation(node(i, j), p.pos));
  return best;
}

bool BaseDomain::same_layout(const BaseDomain& o) const {
  return kind == o.kind && nx == o.nx && ny == o.ny && px == o.px && py == o.py &&
         radius == o.radius;
}

}  // namespace gkelab
