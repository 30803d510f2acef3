#include <catch2/catch.hpp>
#include <cmath>

#include "gkelab/continuity.hpp"
#include "gkelab/ops.hpp"

using namespace gkelab;

namespace {

FibrationSpec trivial_torus(int n, double chi_scale = 1.0, double chi0_scale = 1.6) {
  FibrationInput in;
  in.dom = BaseDomain::torus(n, n, 1.0, 1.0);
  in.mode = ConsistencyMode::twisted;
  in.chi.scale = chi_scale;
  in.chi0.scale = chi0_scale;
  return build_fibration(in);
}

FibrationSpec marked_disk(int n) {
  FibrationInput in;
  std::vector<MarkedPoint> marked{{cplx(0.15, -0.1), 2}};
  auto punct = punctures_for(marked, 2.0 / n);
  in.dom = BaseDomain::disk(n, 1.0, 0.0, punct);
  in.marked = marked;
  in.marked[0].exclusion = punct[0].exclusion;
  in.tau = {cplx(0, 1), cplx(0.15, 0.0)};
  in.chi0.kind = ChiSpec::Kind::bump;
  in.chi0.amp = 0.4;
  in.chi0.width = 0.5;
  return build_fibration(in);
}

}  // namespace

TEST_CASE("schedules") {
  auto s = geometric_schedule(1.0, 16.0, 5);
  REQUIRE(s.size() == 5);
  CHECK(s.front() == Approx(1.0));
  CHECK(s.back() == Approx(16.0));
  CHECK(s[1] / s[0] == Approx(2.0));
  CHECK_THROWS_AS(geometric_schedule(0.0, 1.0, 4), InvalidInput);
  CHECK_THROWS_AS(geometric_schedule(2.0, 1.0, 4), InvalidInput);
}

TEST_CASE("family interpolates between the reference classes") {
  FibrationSpec spec = trivial_torus(48);
  BaseForm c2 = chi_t_form(spec, 3.0);
  // chi0 = 1.6, chi = 1.0 flat: chi_3 = 1.6/4 + 3/4
  CHECK(c2.density[0] == Approx(1.15).epsilon(1e-14));
}

TEST_CASE("flat family solves in closed form on the torus") {
  FibrationSpec spec = trivial_torus(48);
  // constant solution: phi = log(chi_t / chi) / k
  const double t = 3.0, k = (1 + t) / t;
  ScalarField phi;
  SolveReport rep = reduced_step(spec, t, phi, {});
  CHECK(rep.converged);
  const double expect = std::log((1.6 / 4 + 3.0 / 4) / 1.0) / k;
  for (int kk = 0; kk < phi.v.size(); ++kk)
    CHECK(phi.v[kk] == Approx(expect).margin(1e-9));
}

TEST_CASE("rescaled variable reaches the same discrete fixed point") {
  FibrationSpec spec = trivial_torus(48);
  ContinuityOptions opt;
  ContinuityResult res = run_continuity(spec, geometric_schedule(1.0, 27.0, 4), opt);
  REQUIRE(res.records.size() == 4);
  for (const auto& r : res.records) {
    CHECK(r.rescaled_gap < 1e-8);
    CHECK(r.identity_residual < 1e-9);
    CHECK(r.g_dev < 1e-8);
    CHECK(r.margin > 0);
  }
}

TEST_CASE("gap to the generalized limit decays like 1/t") {
  FibrationSpec spec = trivial_torus(48);
  ContinuityOptions opt;
  opt.rescaled = false;
  auto sched = geometric_schedule(2.0, 32.0, 5);
  ContinuityResult res = run_continuity(spec, sched, opt);
  // closed form: phi(t) - phi_inf = log(chi_t/chi)/k, phi_inf = 0
  for (size_t i = 0; i < sched.size(); ++i) {
    const double t = sched[i], k = (1 + t) / t;
    const double expect = std::abs(std::log((1.6 + t) / (1 + t)) / k);
    CHECK(res.records[i].gke_gap == Approx(expect).margin(1e-8));
  }
  // asymptotic coefficient: gap * (1+t)^2 / t tends to chi0 - chi = 0.6
  const auto& lastr = res.records.back();
  const double coef = lastr.gke_gap * (1 + lastr.t) * (1 + lastr.t) / lastr.t;
  CHECK(coef == Approx(0.6).epsilon(0.02));
}

TEST_CASE("flow derivative and fiber size decay at their model rates") {
  FibrationSpec spec = trivial_torus(32);
  ContinuityOptions opt;
  ContinuityResult res = run_continuity(spec, geometric_schedule(1.0, 81.0, 5), opt);
  EnvelopeFit fit = fit_decay_envelope(res.records);
  CHECK(fit.n_used == 3);  // tail half of five rows
  CHECK(fit.rate > -1.35);
  CHECK(fit.rate < -0.65);
  CHECK(fit.ratio < 3.0);

  for (size_t i = 1; i < res.records.size(); ++i) {
    const double expect = std::sqrt((1 + res.records[i - 1].t) / (1 + res.records[i].t));
    CHECK(res.records[i].fiber_diam / res.records[i - 1].fiber_diam ==
          Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("marked disk family: identity, margin and equivalence hold") {
  FibrationSpec spec = marked_disk(64);
  ContinuityOptions opt;
  opt.newton.tol = 1e-10;
  ContinuityResult res = run_continuity(spec, {1.0, 4.0, 16.0}, opt);
  for (const auto& r : res.records) {
    CHECK(r.newton_residual <= 1e-10);
    CHECK(r.rescaled_gap < 1e-7);
    CHECK(r.identity_residual < 1e-8);
    CHECK(r.margin > 0);
    CHECK(r.phi_osc <= 2 * r.phi_sup);
  }
  // the limit gap shrinks along the sweep
  CHECK(res.records.back().gke_gap < res.records.front().gke_gap);
}

TEST_CASE("a sweep can resume from a checkpointed potential") {
  FibrationSpec spec = trivial_torus(32);
  ContinuityOptions opt;
  std::vector<double> sched = {1.0, 3.0, 9.0};
  ContinuityResult full = run_continuity(spec, sched, opt);

  ContinuityResult head = run_continuity(spec, {sched[0], sched[1]}, opt);
  ContinuityResult tail = run_continuity(spec, sched, opt, &head.phi, 2);
  REQUIRE(tail.records.size() == 1);
  CHECK(tail.records[0].t == sched[2]);
  double diff = 0;
  for (int k = 0; k < full.phi.v.size(); ++k)
    diff = std::max(diff, std::abs(full.phi.v[k] - tail.phi.v[k]));
  CHECK(diff < 1e-11);
  CHECK(tail.records[0].newton_residual <= opt.newton.tol);
}

TEST_CASE("envelope fit recovers a synthetic exponential") {
  std::vector<StepRecord> recs(6);
  for (int i = 0; i < 6; ++i) {
    recs[i].u = 0.5 + 0.4 * i;
    recs[i].du_psi = 3.0 * std::exp(-recs[i].u);
  }
  EnvelopeFit fit = fit_decay_envelope(recs);
  CHECK(fit.rate == Approx(-1.0).margin(1e-12));
  CHECK(fit.envelope_const == Approx(3.0).margin(1e-12));
  CHECK(fit.ratio == Approx(1.0).margin(1e-12));
}
