#include <catch2/catch.hpp>
#include <cmath>

#include "gkelab/fft.hpp"
#include "gkelab/ops.hpp"

using namespace gkelab;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("torus layout and quadrature") {
  auto d = BaseDomain::torus(32, 16, 2.0, 1.0);
  CHECK(d->hx == Approx(2.0 / 32));
  CHECK(d->hy == Approx(1.0 / 16));
  CHECK(d->area() == Approx(2.0));
  CHECK(mask_count(d->interior_mask()) == 32 * 16);

  BaseForm one(d, 1.0);
  CHECK(integrate(one) == Approx(2.0).epsilon(1e-14));
}

TEST_CASE("disk layout, cut-cell quadrature, cell centering") {
  auto d = BaseDomain::disk(64, 2.0);
  for (int j = 0; j < d->ny; ++j)
    for (int i = 0; i < d->nx; ++i) CHECK(std::abs(d->node(i, j)) > 1e-12);

  BaseForm one(d, 1.0);
  CHECK(integrate(one) == Approx(4 * kPi).epsilon(0.01));
  CHECK(d->area() == Approx(4 * kPi).epsilon(0.01));
}

TEST_CASE("domain validation") {
  CHECK_THROWS_AS(BaseDomain::torus(8, 32, 1, 1), InvalidInput);
  CHECK_THROWS_AS(BaseDomain::disk(32, -1.0), InvalidInput);
  // puncture core sticking out of the disk
  CHECK_THROWS_AS(BaseDomain::disk(32, 1.0, 0.0, {{cplx(0.95, 0), 0.2}}), InvalidInput);
  // under-resolved pair of marked points
  auto mk = [](double sep) {
    return BaseDomain::disk(32, 1.0, 0.0, {{cplx(0, 0), 0.01}, {cplx(sep, 0), 0.01}});
  };
  CHECK_THROWS_AS(mk(0.1), InvalidInput);  // h = 1/16, 4h = 0.25
  CHECK_NOTHROW(mk(0.5));
}

TEST_CASE("spectral ddbar is exact on trigonometric data") {
  auto d = BaseDomain::torus(64, 48, 2.0, 3.0);
  const double kx = 2 * kPi / 2.0, ky2 = 2 * (2 * kPi / 3.0);
  auto f = make_field(d, [&](cplx s) { return std::cos(kx * s.real()) * std::sin(ky2 * s.imag()); });
  ScalarField dd = ddbar(f);
  const double lam = -0.25 * (kx * kx + ky2 * ky2);
  double err = 0;
  for (int k = 0; k < d->size(); ++k) err = std::max(err, std::abs(dd.v[k] - lam * f.v[k]));
  CHECK(err < 1e-10);

  ScalarField gs = grad_sq(f);
  auto ref = make_field(d, [&](cplx s) {
    const double gx = -kx * std::sin(kx * s.real()) * std::sin(ky2 * s.imag());
    const double gy = ky2 * std::cos(kx * s.real()) * std::cos(ky2 * s.imag());
    return gx * gx + gy * gy;
  });
  err = 0;
  for (int k = 0; k < d->size(); ++k) err = std::max(err, std::abs(gs.v[k] - ref.v[k]));
  CHECK(err < 1e-9);
}

TEST_CASE("ddbar of |s|^2 is 1 and masks shrink by one ring") {
  auto d = BaseDomain::disk(48, 1.5);
  auto f = make_field(d, [](cplx s) { return std::norm(s); });
  ScalarField dd = ddbar(f);
  CHECK(mask_count(dd.mask) > 0);
  CHECK(mask_count(dd.mask) < mask_count(f.mask));
  for (int k = 0; k < d->size(); ++k)
    if (dd.mask[k]) CHECK(dd.v[k] == Approx(1.0).margin(1e-11));
}

TEST_CASE("ddbar linearity and Stokes on the torus") {
  auto d = BaseDomain::torus(32, 32, 1.0, 1.0);
  auto f = make_field(d, [](cplx s) { return std::cos(2 * kPi * s.real()); });
  auto g = make_field(d, [](cplx s) { return std::sin(4 * kPi * s.imag()) + s.real() * 0; });
  ScalarField both(d);
  both.v = 2.0 * f.v - 3.0 * g.v;
  ScalarField lhs = ddbar(both);
  ScalarField df = ddbar(f), dg = ddbar(g);
  double err = 0;
  for (int k = 0; k < d->size(); ++k)
    err = std::max(err, std::abs(lhs.v[k] - (2 * df.v[k] - 3 * dg.v[k])));
  CHECK(err < 1e-11);

  BaseForm as_form(d, df.v, df.mask);
  CHECK(std::abs(integrate(as_form)) < 1e-12);
}

TEST_CASE("curvature of the round density") {
  // density (1+|s|^2)^-2 has ric = 2 (1+|s|^2)^-2
  auto d = BaseDomain::disk(96, 1.0);
  auto g = make_form(d, [](cplx s) { return std::pow(1 + std::norm(s), -2.0); });
  BaseForm ric = ricci(g);
  double rel = 0;
  for (int k = 0; k < d->size(); ++k)
    if (ric.mask[k]) {
      const double ref = 2 * g.density[k];
      rel = std::max(rel, std::abs(ric.density[k] - ref) / ref);
    }
  CHECK(rel < 5e-4);
}

TEST_CASE("hyperbolic density satisfies the Liouville relation") {
  // rho = 2 lam^2 / (1 - lam^2 |s|^2)^2 obeys ddbar log rho = rho
  auto d = BaseDomain::disk(96, 1.0);
  const double lam = 0.6;
  auto rho = make_form(d, [&](cplx s) {
    const double q = 1 - lam * lam * std::norm(s);
    return 2 * lam * lam / (q * q);
  });
  ScalarField dd = ddbar(log_density(rho));
  double rel = 0;
  for (int k = 0; k < d->size(); ++k)
    if (dd.mask[k]) rel = std::max(rel, std::abs(dd.v[k] - rho.density[k]) / rho.density[k]);
  CHECK(rel < 5e-4);
}

TEST_CASE("trace and integrate against a reference form") {
  auto d = BaseDomain::torus(32, 32, 1.0, 1.0);
  auto a = make_form(d, [](cplx s) { return 2 + std::sin(2 * kPi * s.real()); });
  auto b = make_form(d, [](cplx) { return 0.5; });
  ScalarField tr = trace(a, b);
  for (int k = 0; k < d->size(); ++k) CHECK(tr.v[k] == Approx(2 * a.density[k]));
  CHECK(integrate(tr, b) == Approx(integrate(a)).epsilon(1e-12));
}

TEST_CASE("compact region mask respects edges and cores") {
  auto d = BaseDomain::disk(64, 1.0, 0.0, {{cplx(0.2, 0.1), 0.08}});
  Mask m = compact_mask(*d, 0.25, 2.0);
  for (int j = 0; j < d->ny; ++j)
    for (int i = 0; i < d->nx; ++i) {
      if (!m[d->idx(i, j)]) continue;
      CHECK(std::abs(d->node(i, j)) <= 0.75 + 1e-12);
      CHECK(std::abs(d->node(i, j) - cplx(0.2, 0.1)) >= 0.16 - 1e-12);
    }
  CHECK(mask_count(m) > 0);
}

TEST_CASE("masked stencils propagate into derived fields") {
  auto d = BaseDomain::torus(32, 32, 1.0, 1.0, {{cplx(0.5, 0.5), 0.1}});
  ScalarField f(d, 1.0);
  f.mask = d->puncture_mask();
  ScalarField dd = ddbar(f);
  CHECK(mask_count(dd.mask) < mask_count(f.mask));
  // every surviving node had a full stencil of valid samples
  for (int k = 0; k < d->size(); ++k)
    if (dd.mask[k]) CHECK(std::abs(dd.v[k]) < 1e-13);
}

TEST_CASE("spectral poisson inverts ddbar up to the mean") {
  auto d = BaseDomain::torus(48, 48, 1.0, 1.0);
  auto f = make_field(d, [](cplx s) {
    return std::cos(2 * kPi * s.real()) * std::cos(6 * kPi * s.imag());
  });
  Array rhs = fft::ddbar(*d, f.v);
  Array u = fft::poisson_zero_mean(*d, rhs);
  double err = 0;
  for (int k = 0; k < d->size(); ++k) err = std::max(err, std::abs(u[k] - f.v[k]));
  CHECK(err < 1e-11);  // f already has mean zero
}
