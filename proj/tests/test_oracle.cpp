#include <catch2/catch.hpp>
#include <cmath>

#include "gkelab/oracle.hpp"

using namespace gkelab;

namespace {

constexpr double kTau = 6.283185307179586476925287;  // 2 pi

FibrationSpec product_torus(int n, ChiSpec chi = {}, ChiSpec chi0 = {}, double fiber_area = 1.0) {
  FibrationInput in;
  in.dom = BaseDomain::torus(n, n, 1.0, 1.0);
  in.mode = ConsistencyMode::twisted;
  in.chi = chi;
  in.chi0 = chi0;
  in.fiber_area = fiber_area;
  return build_fibration(in);
}

}  // namespace

TEST_CASE("fiber-invariant data reproduces the base family") {
  ChiSpec chi;
  chi.kind = ChiSpec::Kind::bump;
  chi.amp = 0.4;
  chi.width = 0.15;
  chi.center = cplx(0.5, 0.5);
  ChiSpec chi0;
  chi0.scale = 1.6;
  FibrationSpec spec = product_torus(12, chi, chi0);

  const double t = 3.0;
  NewtonOptions opt;
  opt.tol = 1e-11;

  ScalarField phi;
  SolveReport base = reduced_step(spec, t, phi, opt);
  REQUIRE(base.converged);

  OracleResult res = solve_full_ma(spec, t, 8, {}, opt);
  REQUIRE(res.report.converged);
  CHECK(res.det_min > 0);
  // the solution never leaves the fiber-invariant subspace
  CHECK(res.fiber_osc_sup < 1e-10);
  // and its base trace is the reduced solution, not merely close to it
  CHECK((res.fiber_avg - phi.v).abs().maxCoeff() < 1e-8);
  // global volume constraint at the solution
  CHECK(std::abs(res.vol_lhs - res.vol_rhs) < 1e-10);
}

TEST_CASE("matched reference classes solve to the zero potential") {
  FibrationSpec spec = product_torus(12);
  OracleResult res = solve_full_ma(spec, 2.0, 8);
  REQUIRE(res.report.converged);
  CHECK(res.report.iterations == 0);  // zero is already exact
  CHECK(res.phi4.abs().maxCoeff() == 0.0);
  CHECK(res.fiber_osc_sup == 0.0);
  CHECK(res.det_min > 0);
}

TEST_CASE("manufactured four-dimensional solution is recovered") {
  FibrationSpec spec = product_torus(12, {}, ChiSpec{ChiSpec::Kind::flat, 1.6});
  // flat chi keeps the twist factor constant, so the volume datum is the
  // profile alone
  CHECK(spec.F.density.maxCoeff() == Approx(1.0).margin(1e-12));
  CHECK(spec.F.density.minCoeff() == Approx(1.0).margin(1e-12));

  const double t = 3.0;
  const double k = (1 + t) / t;
  const double chi_t = 1.6 / (1 + t) + t / (1 + t);
  const double fib = 1.0 / (1 + t);  // fiber density over 1+t, tau = i, a0 = 1
  const double A = 0.005;

  auto phi_star = [&](double x, double al, double be) {
    return A * std::cos(kTau * x) * std::cos(kTau * al) * std::cos(kTau * be);
  };
  OraclePerturbation pert;
  pert.profile = [&](double x, double, double al, double be) {
    const double p = phi_star(x, al, be);
    const double pss = -0.25 * kTau * kTau * p;
    const double pww = -0.5 * kTau * kTau * p;
    const double dxa =
        A * kTau * kTau * std::sin(kTau * x) * std::sin(kTau * al) * std::cos(kTau * be);
    const double dxb =
        A * kTau * kTau * std::sin(kTau * x) * std::cos(kTau * al) * std::sin(kTau * be);
    const double det = (chi_t + pss) * (fib + pww) - 0.0625 * (dxa * dxa + dxb * dxb);
    return det * (1 + t) * std::exp(-k * p);
  };

  NewtonOptions opt;
  opt.tol = 1e-12;
  OracleResult res = solve_full_ma(spec, t, 12, pert, opt);
  REQUIRE(res.report.converged);
  CHECK(res.det_min > 0);

  double err = 0;
  const int n = res.nx, nf = res.nf;
  for (int b = 0; b < nf; ++b)
    for (int a = 0; a < nf; ++a)
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          const double x = double(i) / n;
          const double got = res.phi4[((size_t(b) * nf + a) * size_t(n) + j) * n + i];
          err = std::max(err, std::abs(got - phi_star(x, double(a) / nf, double(b) / nf)));
        }
  CHECK(err < 1e-9);
}

TEST_CASE("fiber statistics of a four-grid potential") {
  const int nx = 12, ny = 12, nf = 6;
  Array base(nx * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) base[j * nx + i] = std::sin(kTau * i / nx) + 0.3 * j;

  SECTION("fiber-constant lift: oscillation vanishes, average is the slice") {
    Array phi4(size_t(nx) * ny * nf * nf);
    for (int b = 0; b < nf; ++b)
      for (int a = 0; a < nf; ++a)
        for (int j = 0; j < ny; ++j)
          for (int i = 0; i < nx; ++i)
            phi4[((size_t(b) * nf + a) * ny + j) * nx + i] = base[j * nx + i];
    CHECK(fiber_oscillation(phi4, nx, ny, nf).maxCoeff() == 0.0);
    CHECK((fiber_average(phi4, nx, ny, nf) - base).abs().maxCoeff() < 1e-14);
  }

  SECTION("pure fiber mode averages to zero") {
    Array phi4(size_t(nx) * ny * nf * nf);
    for (int b = 0; b < nf; ++b)
      for (int a = 0; a < nf; ++a)
        for (int j = 0; j < ny; ++j)
          for (int i = 0; i < nx; ++i)
            phi4[((size_t(b) * nf + a) * ny + j) * nx + i] =
                std::cos(kTau * double(a) / nf) + std::sin(kTau * double(b) / nf);
    CHECK(fiber_average(phi4, nx, ny, nf).abs().maxCoeff() < 1e-13);
    CHECK(fiber_oscillation(phi4, nx, ny, nf).minCoeff() > 1.0);
  }

  SECTION("size mismatch is rejected") {
    CHECK_THROWS_AS(fiber_average(base, nx, ny, nf), InvalidInput);
    CHECK_THROWS_AS(fiber_oscillation(base, nx, ny, 5), InvalidInput);
  }
}

TEST_CASE("fiber oscillation of a perturbed volume decays like 1/(1+t)") {
  FibrationSpec spec = product_torus(12, {}, ChiSpec{ChiSpec::Kind::flat, 1.6}, 0.1);
  NewtonOptions opt;
  opt.tol = 1e-12;

  OraclePerturbation pert;
  pert.eps = 1e-2;

  const double ts[3] = {1.0, 10.0, 100.0};
  double scaled[3];
  OracleResult first;
  for (int q = 0; q < 3; ++q) {
    OracleResult r = solve_full_ma(spec, ts[q], 12, pert, opt);
    REQUIRE(r.report.converged);
    CHECK(r.det_min > 0);
    CHECK(r.fiber_osc_sup > 1e-8);  // the perturbation actually bites
    CHECK(r.fiber_osc_sup < pert.eps);
    CHECK(std::abs(r.vol_lhs - r.vol_rhs) < 1e-10);
    scaled[q] = (1 + ts[q]) * r.fiber_osc_sup;
    if (q == 0) first = std::move(r);
  }
  // (1+t)-scaled oscillation is non-increasing up to a 20% tolerance
  CHECK(scaled[1] <= 1.2 * scaled[0]);
  CHECK(scaled[2] <= 1.2 * scaled[1]);

  // response is linear in the perturbation size at this amplitude
  OraclePerturbation half = pert;
  half.eps = 5e-3;
  OracleResult rh = solve_full_ma(spec, 1.0, 12, half, opt);
  CHECK(first.fiber_osc_sup / rh.fiber_osc_sup == Approx(2.0).epsilon(0.05));

  // the fiber average stays near the unperturbed family
  ScalarField phi;
  reduced_step(spec, 1.0, phi, opt);
  CHECK((first.fiber_avg - phi.v).abs().maxCoeff() < 0.02);
}

TEST_CASE("flat fiber potential is exactly quadratically homogeneous") {
  FibrationSpec spec = product_torus(12);
  CHECK(scaling_transport_check(spec, 0.0, 32, 7) == 0.0);
  CHECK(scaling_transport_check(spec, 1.0, 64, 7) < 1e-12);
  CHECK(scaling_transport_check(spec, 1000.0, 64, 7) < 1e-12);

  // varying modulus over a marked disk
  FibrationInput din;
  std::vector<MarkedPoint> marked{{cplx(0.15, -0.1), 2}};
  auto punct = punctures_for(marked, 2.0 / 32);
  din.dom = BaseDomain::disk(32, 1.0, 0.0, punct);
  din.marked = marked;
  din.marked[0].exclusion = punct[0].exclusion;
  din.tau = {cplx(0, 1), cplx(0.15, 0.0)};
  FibrationSpec disk_spec = build_fibration(din);
  for (uint64_t seed = 1; seed <= 4; ++seed) {
    CHECK(scaling_transport_check(disk_spec, 10.0, 16, seed) < 1e-12);
    CHECK(scaling_transport_check(disk_spec, 37.5, 16, seed) < 1e-12);
  }
  CHECK_THROWS_AS(scaling_transport_check(spec, -1.0, 16, 1), InvalidInput);
}

TEST_CASE("product check validates its inputs") {
  FibrationSpec spec = product_torus(12);
  CHECK_THROWS_AS(solve_full_ma(spec, 0.0, 8), InvalidInput);
  CHECK_THROWS_AS(solve_full_ma(spec, 1.0, 3), InvalidInput);
  CHECK_THROWS_AS(solve_full_ma(spec, 1.0, 20), InvalidInput);

  FibrationSpec wide = product_torus(24);
  CHECK_THROWS_AS(solve_full_ma(wide, 1.0, 8), InvalidInput);

  OraclePerturbation bad;
  bad.eps = -1.5;  // drives the volume density negative
  CHECK_THROWS_AS(solve_full_ma(spec, 1.0, 8, bad), InvalidInput);

  FibrationInput din;
  std::vector<MarkedPoint> marked{{cplx(0.15, -0.1), 2}};
  auto punct = punctures_for(marked, 2.0 / 32);
  din.dom = BaseDomain::disk(32, 1.0, 0.0, punct);
  din.marked = marked;
  din.marked[0].exclusion = punct[0].exclusion;
  FibrationSpec disk_spec = build_fibration(din);
  CHECK_THROWS_AS(solve_full_ma(disk_spec, 1.0, 8), InvalidInput);
}
