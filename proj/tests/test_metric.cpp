#include <catch2/catch.hpp>
#include <cmath>

#include "gkelab/gke.hpp"
#include "gkelab/metric.hpp"

using namespace gkelab;

namespace {

const double pi = std::acos(-1.0);

FibrationSpec trivial_torus(int n, double chi_scale = 1.0, double chi0_scale = 1.0) {
  FibrationInput in;
  in.dom = BaseDomain::torus(n, n, 1.0, 1.0);
  in.mode = ConsistencyMode::twisted;
  in.chi.scale = chi_scale;
  in.chi0.scale = chi0_scale;
  return build_fibration(in);
}

FibrationSpec marked_disk(int n, int multiplicity = 2) {
  FibrationInput in;
  std::vector<MarkedPoint> marked{{cplx(0.15, -0.1), multiplicity}};
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

BaseForm flat_torus_form(int n) {
  auto dom = BaseDomain::torus(n, n, 1.0, 1.0);
  return BaseForm(dom, Array::Constant(dom->size(), 1.0), Mask(dom->size(), 1));
}

// Pure radial power density on the punctured unit disk.
BaseForm radial_disk_form(int n, double two_beta, double exclusion_cells = 2.0) {
  auto dom = BaseDomain::disk(n, 1.0, 0.0, {{cplx(0, 0), exclusion_cells * 2.0 / n}});
  Array dens(dom->size());
  for (int j = 0; j < dom->ny; ++j)
    for (int i = 0; i < dom->nx; ++i)
      dens[dom->idx(i, j)] = std::pow(std::abs(dom->node(i, j)), -two_beta);
  return BaseForm(dom, dens, dom->puncture_mask());
}

void fit_loglog(const std::vector<double>& x, const std::vector<double>& y, double* slope) {
  double n = double(x.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  *slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_CASE("flat torus distances match the closed form") {
  BaseForm flat = flat_torus_form(96);
  MetricGraph g = MetricGraph::build(flat);
  const BaseDomain& d = *flat.dom;

  int origin = g.vtx_of_node[d.idx(0, 0)];
  Array dist = g.distances({origin});
  CHECK(dist[g.vtx_of_node[d.idx(48, 48)]] == Approx(std::sqrt(2.0) / 2).epsilon(0.02));
  CHECK(dist[g.vtx_of_node[d.idx(48, 0)]] == Approx(0.5).epsilon(0.02));
  // periodic wrap: three quarters along an axis is a quarter the short way
  CHECK(dist[g.vtx_of_node[d.idx(72, 0)]] == Approx(0.25).epsilon(0.02));

  CHECK(g.nearest_vertex(cplx(0.501, 0.499)) == g.vtx_of_node[d.idx(48, 48)]);
  CHECK_THROWS_AS(g.distances({}), InvalidInput);
  CHECK_THROWS_AS(g.distances({-1}), InvalidInput);
}

TEST_CASE("sixteen-neighbor paths never lengthen and stay symmetric") {
  auto dom = BaseDomain::torus(64, 64, 1.0, 1.0);
  Array dens(dom->size());
  for (int j = 0; j < 64; ++j)
    for (int i = 0; i < 64; ++i)
      dens[dom->idx(i, j)] =
          1.0 + 0.5 * std::cos(2 * pi * dom->x(i)) * std::cos(2 * pi * dom->y(j));
  BaseForm rho(dom, dens, Mask(dom->size(), 1));

  MetricGraph g8 = MetricGraph::build(rho, false);
  MetricGraph g16 = MetricGraph::build(rho, true);
  REQUIRE(g8.n() == g16.n());
  Array d8 = g8.distances({0});
  Array d16 = g16.distances({0});
  for (int v = 0; v < g8.n(); ++v) REQUIRE(d16[v] <= d8[v] + 1e-12);

  int a = g16.vtx_of_node[dom->idx(5, 9)], b = g16.vtx_of_node[dom->idx(40, 27)];
  double dab = g16.distances({a})[b];
  double dba = g16.distances({b})[a];
  CHECK(std::abs(dab - dba) <= 1e-12 * dab);
}

TEST_CASE("radial densities integrate along rays") {
  BaseForm rho = radial_disk_form(96, 5.0 / 3.0);
  const BaseDomain& d = *rho.dom;
  MetricGraph g = MetricGraph::build(rho);

  int va = g.nearest_vertex(cplx(0.3, 0.0));
  int vb = g.nearest_vertex(cplx(0.6, 0.0));
  double ra = std::abs(d.node(g.node_of_vtx[va] % d.nx, g.node_of_vtx[va] / d.nx));
  double rb = std::abs(d.node(g.node_of_vtx[vb] % d.nx, g.node_of_vtx[vb] / d.nx));
  double expect = 6.0 * (std::pow(rb, 1.0 / 6.0) - std::pow(ra, 1.0 / 6.0));
  CHECK(g.distances({va})[vb] == Approx(expect).epsilon(0.03));

  // the node-level field agrees and masks the exclusion core
  Array field = distance_field(rho, {g.node_of_vtx[va]});
  CHECK(field[g.node_of_vtx[vb]] == Approx(expect).epsilon(0.03));
  int core = d.idx(48, 48);
  REQUIRE(rho.mask[core] == 0);
  CHECK(!std::isfinite(field[core]));
  CHECK_THROWS_AS(distance_field(rho, {core}), InvalidInput);
}

TEST_CASE("ball diameter scaling recovers the metric exponents") {
  std::vector<double> radii{0.3, 0.42, 0.6, 0.84};

  BaseForm radial = radial_disk_form(96, 5.0 / 3.0);
  ExponentFit cone = diameter_exponent_fit(radial, cplx(0, 0), radii);
  CHECK(cone.slope == Approx(1.0 / 6.0).margin(0.02));
  CHECK(cone.n_used == 4);

  auto dom = BaseDomain::disk(96, 1.0);
  BaseForm flat(dom, Array::Constant(dom->size(), 1.0), dom->interior_mask());
  ExponentFit line = diameter_exponent_fit(flat, cplx(0, 0), radii);
  CHECK(line.slope == Approx(1.0).margin(0.02));

  std::vector<double> with_small{0.05, 0.3, 0.42, 0.6, 0.84};
  ExponentFit skipped = diameter_exponent_fit(flat, cplx(0, 0), with_small);
  CHECK(skipped.skipped.size() == 1);
  CHECK(skipped.n_used == 4);

  CHECK_THROWS_AS(diameter_exponent_fit(flat, cplx(0, 0), {0.2, 0.3, 0.4}), InvalidInput);
  CHECK_THROWS_AS(diameter_exponent_fit(flat, cplx(0, 0), {0.4, 0.3, 0.2, 0.1}), InvalidInput);
}

TEST_CASE("density growth fits recover the built singularities") {
  // The smooth factor of F bends log F by ~ r^2 away from the core, so the
  // pure power only shows in annuli tight around the exclusion.
  FibrationSpec s2 = marked_disk(128, 2);
  BlowupFit f2 = blowup_exponent_fit(s2.F, s2.in.marked[0].pos, 0.05, 0.16);
  CHECK(f2.slope == Approx(-1.0).margin(0.05));
  CHECK(f2.slope >= -2.0 * blowup_exponent(2));
  CHECK_FALSE(f2.per_ray);

  FibrationSpec s4 = marked_disk(128, 4);
  BlowupFit f4 = blowup_exponent_fit(s4.F, s4.in.marked[0].pos, 0.05, 0.16);
  CHECK(f4.slope == Approx(-1.5).margin(0.05));
  CHECK(f4.slope >= -2.0 * blowup_exponent(4));

  // smooth density: ring medians cancel the gradient term
  FibrationSpec smooth = trivial_torus(96, 1.0, 1.6);
  BlowupFit f0 = blowup_exponent_fit(smooth.F, cplx(0.5, 0.5), 0.04, 0.15);
  CHECK(f0.slope == Approx(0.0).margin(0.05));

  CHECK_THROWS_AS(blowup_exponent_fit(smooth.F, cplx(0.5, 0.5), 0.2, 0.1), InvalidInput);
  CHECK_THROWS_AS(blowup_exponent_fit(smooth.F, cplx(0.5, 0.5), 0.04, 0.15, 2), InvalidInput);
}

TEST_CASE("anisotropic growth falls back to a per-ray envelope") {
  auto dom = BaseDomain::disk(128, 1.0, 0.0, {{cplx(0, 0), 2.0 * 2.0 / 128}});
  Array dens(dom->size());
  for (int j = 0; j < dom->ny; ++j)
    for (int i = 0; i < dom->nx; ++i) {
      cplx s = dom->node(i, j);
      double th = std::arg(s);
      dens[dom->idx(i, j)] = std::pow(std::abs(s), -1.0) * (1.0 + 0.9 * std::cos(2 * th));
    }
  BaseForm rho(dom, dens, dom->puncture_mask());
  BlowupFit fit = blowup_exponent_fit(rho, cplx(0, 0), 0.18, 0.55);
  CHECK(fit.per_ray);
  CHECK(fit.anisotropy > 0.5);
  // every ray carries the same radial power, so the envelope is tight
  CHECK(fit.slope_min == Approx(-1.0).margin(0.05));
  CHECK(fit.slope_max == Approx(-1.0).margin(0.05));
  CHECK(fit.slope == Approx(-1.0).margin(0.1));
}

TEST_CASE("completion reproduces closed-form completed distances") {
  SECTION("radial power law") {
    BaseForm rho = radial_disk_form(96, 5.0 / 3.0);
    CompletedBaseSpace space = completion_build(rho, rho.dom->punctures);
    REQUIRE(space.marked.size() == 1);
    CHECK(space.blowup_e[0] == Approx(5.0 / 6.0).margin(0.02));
    CHECK(space.cauchy_spread[0] <= 0.01);
    for (double r : {0.3, 0.6}) {
      int v = space.graph.nearest_vertex(cplx(r, 0.0));
      int nd = space.graph.node_of_vtx[v];
      double rr = std::abs(rho.dom->node(nd % rho.dom->nx, nd / rho.dom->nx));
      CHECK(space.marked_dist[0][v] ==
            Approx(6.0 * std::pow(rr, 1.0 / 6.0)).epsilon(0.03));
    }
    CHECK(space.triangle_defect <= 1e-3 * space.diameter);
    CHECK(space.diameter > 0);
  }
  SECTION("flat density completes to the euclidean distance") {
    auto dom = BaseDomain::disk(96, 1.0, 0.0, {{cplx(0, 0), 2.0 * 2.0 / 96}});
    BaseForm rho(dom, Array::Constant(dom->size(), 1.0), dom->puncture_mask());
    CompletedBaseSpace space = completion_build(rho, dom->punctures);
    CHECK(space.blowup_e[0] == Approx(0.0).margin(0.02));
    for (cplx p : {cplx(0.5, 0.0), cplx(0.3, 0.4)}) {
      int v = space.graph.nearest_vertex(p);
      int nd = space.graph.node_of_vtx[v];
      double rr = std::abs(dom->node(nd % dom->nx, nd / dom->nx));
      CHECK(space.marked_dist[0][v] == Approx(rr).epsilon(0.02));
    }
  }
  SECTION("non-integrable density fails loudly") {
    BaseForm rho = radial_disk_form(96, 2.0);
    CHECK_THROWS_AS(completion_build(rho, rho.dom->punctures), ConsistencyError);
  }
  SECTION("option validation") {
    BaseForm rho = radial_disk_form(96, 5.0 / 3.0);
    CompletionOptions opt;
    opt.levels = 1;
    CHECK_THROWS_AS(completion_build(rho, rho.dom->punctures, opt), InvalidInput);
  }
}

TEST_CASE("completion of a solved limit density stays consistent") {
  FibrationSpec spec = marked_disk(64, 2);
  GkeResult gke = solve_gke(spec);
  REQUIRE(gke.report.converged);
  Mask mask = mask_and(spec.F.mask, mask_and(spec.chi.mask, gke.phi.mask));
  BaseForm lim(spec.dom, spec.F.density * gke.phi.v.exp() * spec.chi.density, mask);

  CompletedBaseSpace space = completion_build(lim, spec.dom->punctures);
  CHECK(space.cauchy_spread[0] <= 0.01);
  CHECK(space.triangle_defect <= 1e-3 * space.diameter);
  CHECK(std::isfinite(space.diameter));
  // The asymptotic rate at an m=2 core is 1/2, but the fit annulus sits well
  // outside the exclusion where the smooth factor still bends the slope, so
  // only the integrability band is stable across grids.
  CHECK(space.blowup_e[0] > 0.25);
  CHECK(space.blowup_e[0] < blowup_exponent(2) + 0.05);

  double dia = space.diameter;
  double n_emp = empirical_inclusion_constant(space, spec.chi, 0, {0.1 * dia, 0.2 * dia, 0.4 * dia});
  CHECK(n_emp >= 1.0);
  CHECK(n_emp < 1e3);
  CHECK_THROWS_AS(empirical_inclusion_constant(space, spec.chi, 1, {0.1}), InvalidInput);
  CHECK_THROWS_AS(empirical_inclusion_constant(space, spec.chi, 0, {}), InvalidInput);
}

TEST_CASE("sample distortion bounds track the metric gap") {
  BaseForm flat = flat_torus_form(48);
  MetricGraph g = MetricGraph::build(flat);
  // coarse subgrid so the diametral pair (0,0)-(1/2,1/2) is among the samples
  std::vector<int> keep;
  for (int j = 0; j < 48; j += 8)
    for (int i = 0; i < 48; i += 8) keep.push_back(g.vtx_of_node[flat.dom->idx(i, j)]);
  int nb = int(keep.size());
  Matrix da(nb, nb);
  for (int a = 0; a < nb; ++a) {
    Array f = g.distances({keep[a]});
    for (int b = 0; b < nb; ++b) da(a, b) = f[keep[b]];
  }
  Correspondence identity;
  for (int a = 0; a < nb; ++a) identity.pairs.push_back({a, a});

  CHECK(gh_upper_bound(da, da, identity) == 0.0);

  const double eps = 0.1;
  Matrix db = (1.0 + eps) * da;
  double dmax = da.maxCoeff();
  double bound = gh_upper_bound(da, db, identity);
  CHECK(bound == Approx(0.5 * eps * dmax).epsilon(1e-12));
  // the sampled diameter is close to the flat one and bounds the distortion
  CHECK(bound == Approx(0.5 * eps * std::sqrt(2.0) / 2).epsilon(0.05));
  CHECK(bound >= 0.5 * std::abs(da.maxCoeff() - db.maxCoeff()) - 1e-12);

  Correspondence holey;
  for (int a = 1; a < nb; ++a) holey.pairs.push_back({a, a});
  CHECK_THROWS_AS(gh_upper_bound(da, db, holey), InvalidInput);
  CHECK_THROWS_AS(gh_upper_bound(Matrix::Zero(2, 3), db, identity), InvalidInput);
  CHECK_THROWS_AS(gh_upper_bound(da, db, Correspondence{}), InvalidInput);
}

TEST_CASE("collapsing family converges to its base at the fiber rate") {
  FibrationSpec spec = trivial_torus(48);
  GhOptions opt;
  opt.base_samples = 120;
  opt.completion.diameter_sources = 48;

  std::vector<double> ts{1.0, 10.0, 100.0, 1000.0};
  GhExperiment exp = gh_convergence_experiment(spec, ts, opt);
  REQUIRE(exp.rows.size() == ts.size());
  CHECK(exp.limit.marked.empty());
  CHECK(exp.base_net_radius > 0);
  CHECK(exp.total_net_radius >= exp.base_net_radius);

  std::vector<double> onept, best;
  for (const GhRow& r : exp.rows) {
    CHECK(r.best > 0);
    CHECK(r.best == Approx(r.direct));
    CHECK(r.triangle == Approx(r.direct));
    CHECK(r.fiber_term == Approx(max_fiber_diameter(spec) / std::sqrt(1.0 + r.t)));
    onept.push_back(1.0 + r.t);
    best.push_back(r.best);
  }
  for (size_t i = 1; i < best.size(); ++i) CHECK(best[i] <= best[i - 1] * (1 + 1e-9));
  double slope;
  fit_loglog(onept, best, &slope);
  CHECK(slope == Approx(-0.5).margin(0.05));

  CHECK_THROWS_AS(gh_convergence_experiment(spec, {}, opt), InvalidInput);
  CHECK_THROWS_AS(gh_convergence_experiment(spec, {2.0, 1.0}, opt), InvalidInput);
}

TEST_CASE("marked family keeps its truncation bounds honest") {
  FibrationSpec spec = marked_disk(64, 2);
  GhOptions opt;
  opt.base_samples = 100;
  opt.completion.diameter_sources = 48;
  opt.completion.triangle_samples = 800;

  std::vector<double> ts{1.0, 10.0, 100.0, 1000.0};
  GhExperiment exp = gh_convergence_experiment(spec, ts, opt);
  REQUIRE(exp.rows.size() == ts.size());
  REQUIRE(exp.limit.marked.size() == 1);

  double dia = exp.limit.diameter;
  for (size_t i = 0; i < exp.rows.size(); ++i) {
    const GhRow& r = exp.rows[i];
    CHECK(r.best <= r.direct + 1e-15);
    CHECK(r.best <= r.triangle + 1e-15);
    CHECK(std::isfinite(r.triangle));
    CHECK(r.gh1_worst <= std::max(2.0 * exp.base_net_radius, 0.05 * dia));
    if (i) CHECK(r.best <= exp.rows[i - 1].best * (1 + 1e-9));
  }
  CHECK(exp.rows.back().best <= 0.2 * exp.rows.front().best);
}

TEST_CASE("volume ratios respect the curvature comparison") {
  CHECK(sinh3_volume(0.0) == 0.0);
  CHECK_THROWS_AS(sinh3_volume(-1.0), InvalidInput);

  FibrationSpec spec = trivial_torus(96);
  ScalarField phi(spec.dom, 0.0);
  int center = spec.dom->idx(0, 0);

  BishopGromov bg = bishop_gromov_ratio(spec, phi, 1.0, center, 0.1, 0.2);
  CHECK(bg.compared);
  CHECK_FALSE(bg.truncated);
  // flat small-ball growth is quartic and the hyperbolic model grows faster
  CHECK(bg.measured == Approx(16.0).epsilon(0.1));
  CHECK(bg.model >= 16.0);
  CHECK(bg.measured <= bg.model * 1.05);

  BishopGromov same = bishop_gromov_ratio(spec, phi, 1.0, center, 0.15, 0.15);
  CHECK(same.measured == 1.0);
  CHECK(same.model == 1.0);

  CHECK_THROWS_AS(bishop_gromov_ratio(spec, phi, 0.0, center, 0.1, 0.2), InvalidInput);
  CHECK_THROWS_AS(bishop_gromov_ratio(spec, phi, 1.0, center, 0.2, 0.1), InvalidInput);

  FibrationSpec disk = marked_disk(48, 2);
  ScalarField zero(disk.dom, 0.0);
  zero.mask = disk.core_mask;
  int edge_center = -1;
  {
    MetricGraph probe = MetricGraph::build(disk.F, true);
    edge_center = probe.node_of_vtx[probe.nearest_vertex(cplx(0.55, 0.2))];
  }
  BishopGromov cut = bishop_gromov_ratio(disk, zero, 1.0, edge_center, 0.3, 1.5);
  CHECK(cut.truncated);
  CHECK_FALSE(cut.compared);
}

TEST_CASE("solved limit distances are stable under refinement") {
  auto limit_form = [](int n, FibrationSpec* out_spec) {
    *out_spec = marked_disk(n, 2);
    GkeResult gke = solve_gke(*out_spec);
    REQUIRE(gke.report.converged);
    Mask mask = mask_and(out_spec->F.mask, mask_and(out_spec->chi.mask, gke.phi.mask));
    return BaseForm(out_spec->dom, out_spec->F.density * gke.phi.v.exp() * out_spec->chi.density,
                    mask);
  };
  FibrationSpec s72, s144;
  BaseForm f72 = limit_form(72, &s72);
  BaseForm f144 = limit_form(144, &s144);

  auto pair_distance = [](const BaseForm& f) {
    MetricGraph g = MetricGraph::build(f);
    int a = g.nearest_vertex(cplx(-0.5, -0.3));
    int b = g.nearest_vertex(cplx(0.55, 0.25));
    return g.distances({a})[b];
  };
  double d72 = pair_distance(f72);
  double d144 = pair_distance(f144);
  CHECK(d72 == Approx(d144).epsilon(0.02));
}
