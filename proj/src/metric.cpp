#include "gkelab/metric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <random>

namespace gkelab {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kInf = std::numeric_limits<double>::infinity();
// Inner exclusion of a punctured ball as a fraction of its radius.
constexpr double kInnerCutFraction = 0.2;

int wrap_idx(int k, int n) {
  int r = k % n;
  return r < 0 ? r + n : r;
}

// Bilinear density sample; false when the stencil leaves the valid region
// or the interpolated value is unusable as a metric density.
// Bilinear density sample; log_blend interpolates log density instead, which
// is unbiased on power-law blowups (log r is harmonic, so the curvature
// terms cancel over a ring) where blending the convex density inflates it.
bool sample_density(const BaseForm& f, double xx, double yy, double* out, bool log_blend = false) {
  const BaseDomain& d = *f.dom;
  double fx = (xx - d.ox) / d.hx;
  double fy = (yy - d.oy) / d.hy;
  int i0 = int(std::floor(fx));
  int j0 = int(std::floor(fy));
  if (!d.is_torus()) {
    i0 = std::min(std::max(i0, 0), d.nx - 2);
    j0 = std::min(std::max(j0, 0), d.ny - 2);
  }
  double ax = fx - i0, ay = fy - j0;
  double v[4];
  int c = 0;
  for (int dj = 0; dj <= 1; ++dj) {
    for (int di = 0; di <= 1; ++di) {
      int i = i0 + di, j = j0 + dj;
      if (d.is_torus()) {
        i = wrap_idx(i, d.nx);
        j = wrap_idx(j, d.ny);
      } else if (i < 0 || i >= d.nx || j < 0 || j >= d.ny) {
        return false;
      }
      int n = d.idx(i, j);
      if (!f.mask[n]) return false;
      double val = f.density[n];
      if (log_blend && !(val > 0 && std::isfinite(val))) return false;
      v[c++] = log_blend ? std::log(val) : val;
    }
  }
  double blend =
      (1 - ax) * (1 - ay) * v[0] + ax * (1 - ay) * v[1] + (1 - ax) * ay * v[2] + ax * ay * v[3];
  *out = log_blend ? std::exp(blend) : blend;
  return *out > 0 && std::isfinite(*out);
}

// Evenly strided subset of {0, ..., n-1} with at most cap entries.
std::vector<int> stride_pick(int n, int cap) {
  std::vector<int> out;
  if (n <= 0 || cap <= 0) return out;
  if (n <= cap) {
    out.resize(n);
    std::iota(out.begin(), out.end(), 0);
    return out;
  }
  double step = double(n) / cap;
  int last = -1;
  for (int k = 0; k < cap; ++k) {
    int i = int(k * step);
    if (i != last) out.push_back(i);
    last = i;
  }
  return out;
}

void fit_line(const std::vector<double>& x, const std::vector<double>& y, double* slope,
              double* icept) {
  double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  double den = n * sxx - sx * sx;
  if (den == 0) throw InvalidInput("degenerate abscissae in a line fit");
  *slope = (n * sxy - sx * sy) / den;
  *icept = (sy - *slope * sx) / n;
}

double finite_max(const Array& a) {
  double m = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (std::isfinite(a[i]) && a[i] > m) m = a[i];
  return m;
}

struct EdgeOffset {
  int dx, dy;
  int g1x, g1y, g2x, g2y;  // lattice points that must be valid alongside
  bool guarded;
  bool knight;
};

const EdgeOffset kOffsets[] = {
    {1, 0, 0, 0, 0, 0, false, false},
    {0, 1, 0, 0, 0, 0, false, false},
    {1, 1, 1, 0, 0, 1, true, false},
    {1, -1, 1, 0, 0, -1, true, false},
    {1, 2, 0, 1, 1, 1, true, true},
    {2, 1, 1, 0, 1, 1, true, true},
    {2, -1, 1, 0, 1, -1, true, true},
    {1, -2, 0, -1, 1, -1, true, true},
};

}  // namespace

MetricGraph MetricGraph::build(const BaseForm& rho, bool knight) {
  if (!rho.dom) throw InvalidInput("metric graph needs a density with a domain");
  const BaseDomain& d = *rho.dom;
  MetricGraph g;
  g.dom = rho.dom;
  g.knight = knight;
  g.valid = rho.mask;
  g.vtx_of_node.assign(d.size(), -1);
  for (int j = 0; j < d.ny; ++j) {
    for (int i = 0; i < d.nx; ++i) {
      int n = d.idx(i, j);
      if (!g.valid[n]) continue;
      double v = rho.density[n];
      if (!(v > 0) || !std::isfinite(v))
        throw InvalidInput("metric density must be positive and finite on valid nodes");
      g.vtx_of_node[n] = int(g.node_of_vtx.size());
      g.node_of_vtx.push_back(n);
    }
  }
  g.adj.assign(g.node_of_vtx.size(), {});

  auto node_at = [&](int i, int j) -> int {
    if (d.is_torus()) {
      i = wrap_idx(i, d.nx);
      j = wrap_idx(j, d.ny);
    } else if (i < 0 || i >= d.nx || j < 0 || j >= d.ny) {
      return -1;
    }
    return d.idx(i, j);
  };
  auto vtx_at = [&](int i, int j) -> int {
    int n = node_at(i, j);
    return n < 0 ? -1 : g.vtx_of_node[n];
  };

  const double gauss = 0.5 / std::sqrt(3.0);
  for (int j = 0; j < d.ny; ++j) {
    for (int i = 0; i < d.nx; ++i) {
      int v1 = g.vtx_of_node[d.idx(i, j)];
      if (v1 < 0) continue;
      for (const EdgeOffset& o : kOffsets) {
        if (o.knight && !knight) continue;
        int v2 = vtx_at(i + o.dx, j + o.dy);
        if (v2 < 0) continue;
        if (o.guarded &&
            (vtx_at(i + o.g1x, j + o.g1y) < 0 || vtx_at(i + o.g2x, j + o.g2y) < 0))
          continue;
        double sx = o.dx * d.hx, sy = o.dy * d.hy;
        double len = std::hypot(sx, sy);
        double x0 = d.x(i), y0 = d.y(j);
        double s1, s2, w;
        if (sample_density(rho, x0 + (0.5 - gauss) * sx, y0 + (0.5 - gauss) * sy, &s1, true) &&
            sample_density(rho, x0 + (0.5 + gauss) * sx, y0 + (0.5 + gauss) * sy, &s2, true)) {
          w = len * 0.5 * (std::sqrt(s1) + std::sqrt(s2));
        } else {
          // Stencil cut by the mask: fall back to the endpoint average.
          w = len * 0.5 *
              (std::sqrt(rho.density[g.node_of_vtx[v1]]) +
               std::sqrt(rho.density[g.node_of_vtx[v2]]));
        }
        g.adj[v1].push_back({v2, w});
        g.adj[v2].push_back({v1, w});
      }
    }
  }
  return g;
}

Array MetricGraph::distances_seeded(const std::vector<std::pair<int, double>>& sources) const {
  if (sources.empty()) throw InvalidInput("shortest paths need at least one source");
  Array dist = Array::Constant(n(), kInf);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
  for (const auto& [v, off] : sources) {
    if (v < 0 || v >= n()) throw InvalidInput("source vertex out of range");
    if (!(off >= 0) || !std::isfinite(off)) throw InvalidInput("source offset must be finite and >= 0");
    if (off < dist[v]) {
      dist[v] = off;
      heap.push({off, v});
    }
  }
  while (!heap.empty()) {
    auto [dv, v] = heap.top();
    heap.pop();
    if (dv > dist[v]) continue;
    for (const auto& [u, w] : adj[v]) {
      double cand = dv + w;
      if (cand < dist[u]) {
        dist[u] = cand;
        heap.push({cand, u});
      }
    }
  }
  return dist;
}

Array MetricGraph::distances(const std::vector<int>& source_vertices) const {
  std::vector<std::pair<int, double>> seeds;
  seeds.reserve(source_vertices.size());
  for (int v : source_vertices) seeds.push_back({v, 0.0});
  return distances_seeded(seeds);
}

Array MetricGraph::distances_from_node(int node) const {
  if (node < 0 || node >= int(vtx_of_node.size())) throw InvalidInput("source node out of range");
  int v = vtx_of_node[node];
  if (v < 0) throw InvalidInput("source node is masked");
  return distances({v});
}

int MetricGraph::nearest_vertex(cplx p) const {
  int best = -1;
  double bd = kInf;
  for (int v = 0; v < n(); ++v) {
    int nd = node_of_vtx[v];
    double s = dom->puncture_separation(dom->node(nd % dom->nx, nd / dom->nx), p);
    if (s < bd) {
      bd = s;
      best = v;
    }
  }
  return best;
}

Array distance_field(const BaseForm& rho, const std::vector<int>& source_nodes, bool knight) {
  MetricGraph g = MetricGraph::build(rho, knight);
  std::vector<int> src;
  for (int n : source_nodes) {
    if (n < 0 || n >= rho.dom->size()) throw InvalidInput("source node out of range");
    int v = g.vtx_of_node[n];
    if (v < 0) throw InvalidInput("source node is masked");
    src.push_back(v);
  }
  Array d = g.distances(src);
  Array out = Array::Constant(rho.dom->size(), kInf);
  for (int v = 0; v < g.n(); ++v) out[g.node_of_vtx[v]] = d[v];
  return out;
}

double punctured_disk_diameter(const BaseForm& rho, cplx center, double r, bool knight) {
  if (!(r > 0)) throw InvalidInput("ball radius must be positive");
  const BaseDomain& d = *rho.dom;
  // The inner cut scales with r so the ball is self-similar across radii:
  // a cut frozen at the grid exclusion would enter every diameter through
  // its own r-independent scale and bias exponent fits upward.
  double cut = kInnerCutFraction * r;
  Mask ball(d.size(), 0);
  for (int j = 0; j < d.ny; ++j)
    for (int i = 0; i < d.nx; ++i) {
      int n = d.idx(i, j);
      double s = d.puncture_separation(d.node(i, j), center);
      if (rho.mask[n] && s <= r && s >= cut) ball[n] = 1;
    }
  BaseForm sub(rho.dom, rho.density, mask_and(rho.mask, ball));
  if (mask_count(sub.mask) < 8) throw InvalidInput("ball resolves too few grid nodes");
  MetricGraph g = MetricGraph::build(sub, knight);

  double h = d.spacing();
  std::vector<int> rim, inner;
  for (int v = 0; v < g.n(); ++v) {
    int nd = g.node_of_vtx[v];
    double s = d.puncture_separation(d.node(nd % d.nx, nd / d.nx), center);
    (s >= r - 1.5 * h ? rim : inner).push_back(v);
  }
  std::vector<int> sources;
  for (int k : stride_pick(int(rim.size()), 128)) sources.push_back(rim[k]);
  for (int k : stride_pick(int(inner.size()), 64)) sources.push_back(inner[k]);
  if (sources.empty()) throw InvalidInput("ball has no usable source vertices");

  double diam = 0;
  for (int s : sources) diam = std::max(diam, finite_max(g.distances({s})));
  return diam;
}

ExponentFit diameter_exponent_fit(const BaseForm& rho, cplx center,
                                  const std::vector<double>& radii, bool knight) {
  if (radii.size() < 4) throw InvalidInput("diameter fit needs at least four radii");
  for (size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0)) throw InvalidInput("diameter fit radii must be positive");
    if (i && radii[i] <= radii[i - 1]) throw InvalidInput("diameter fit radii must increase");
  }
  ExponentFit out;
  double floor = 6.0 * rho.dom->spacing();
  std::vector<double> lx, ly;
  for (double r : radii) {
    if (r < floor) {
      out.skipped.push_back(r);
      continue;
    }
    double diam = punctured_disk_diameter(rho, center, r, knight);
    if (!(diam > 0)) throw InvalidInput("degenerate ball diameter in the fit sweep");
    out.radii.push_back(r);
    out.values.push_back(diam);
    lx.push_back(std::log(r));
    ly.push_back(std::log(diam));
  }
  out.n_used = int(lx.size());
  if (out.n_used < 2) throw InvalidInput("too few radii above the resolution floor");
  fit_line(lx, ly, &out.slope, &out.intercept);
  return out;
}

BlowupFit blowup_exponent_fit(const BaseForm& F, cplx center, double r_in, double r_out,
                              int rings, int rays) {
  if (!(r_in > 0) || !(r_out > r_in)) throw InvalidInput("blow-up fit needs 0 < r_in < r_out");
  if (rings < 3 || rays < 4) throw InvalidInput("blow-up fit needs >= 3 rings and >= 4 rays");
  BlowupFit out;
  std::vector<double> lr, lmed;
  std::vector<std::vector<double>> ray_lr(rays), ray_lv(rays);
  for (int k = 0; k < rings; ++k) {
    double r = r_in * std::pow(r_out / r_in, double(k) / (rings - 1));
    std::vector<double> vals;
    double lo = kInf, hi = -kInf;
    for (int a = 0; a < rays; ++a) {
      double th = 2.0 * kPi * a / rays;
      double v;
      if (!sample_density(F, center.real() + r * std::cos(th), center.imag() + r * std::sin(th),
                          &v, true))
        continue;
      double lv = std::log(v);
      vals.push_back(lv);
      lo = std::min(lo, lv);
      hi = std::max(hi, lv);
      ray_lr[a].push_back(std::log(r));
      ray_lv[a].push_back(lv);
    }
    if (int(vals.size()) * 2 < rays) continue;
    std::nth_element(vals.begin(), vals.begin() + vals.size() / 2, vals.end());
    lr.push_back(std::log(r));
    lmed.push_back(vals[vals.size() / 2]);
    out.anisotropy = std::max(out.anisotropy, 0.5 * (hi - lo));
  }
  out.n_rings = int(lr.size());
  if (out.n_rings < 3) throw InvalidInput("blow-up annulus leaves the valid region");
  fit_line(lr, lmed, &out.slope, &out.intercept);
  out.slope_min = out.slope_max = out.slope;
  out.per_ray = out.anisotropy > 0.5;
  if (out.per_ray) {
    bool any = false;
    for (int a = 0; a < rays; ++a) {
      if (ray_lr[a].size() < 3) continue;
      double s, c;
      fit_line(ray_lr[a], ray_lv[a], &s, &c);
      if (!any) {
        out.slope_min = out.slope_max = s;
        any = true;
      } else {
        out.slope_min = std::min(out.slope_min, s);
        out.slope_max = std::max(out.slope_max, s);
      }
    }
  }
  return out;
}

double CompletedBaseSpace::marked_to_marked(int i, int j) const {
  int m = int(marked.size());
  if (i < 0 || j < 0 || i >= m || j >= m) throw InvalidInput("marked index out of range");
  if (i == j) return 0.0;
  if (i > j) std::swap(i, j);
  return marked_pair_dist[size_t(i) * (2 * m - i - 1) / 2 + (j - i - 1)];
}

CompletedBaseSpace completion_build(const BaseForm& rho, const std::vector<Puncture>& marked,
                                    const CompletionOptions& opt) {
  if (opt.levels < 2) throw InvalidInput("completion needs at least two ring levels");
  CompletedBaseSpace out;
  out.graph = MetricGraph::build(rho, opt.knight);
  const BaseDomain& d = *rho.dom;
  const MetricGraph& g = out.graph;
  int nv = g.n();
  if (nv == 0) throw InvalidInput("completion over an empty metric graph");
  double h = d.spacing();
  double extent = d.is_torus() ? 0.5 * std::min(d.px, d.py) : d.radius;

  // Separation of every vertex from each marked point, reused per ring level.
  std::vector<Array> sep(marked.size());
  std::vector<std::vector<std::pair<int, double>>> finest_ring(marked.size());
  for (size_t k = 0; k < marked.size(); ++k) {
    sep[k] = Array(nv);
    for (int v = 0; v < nv; ++v) {
      int nd = g.node_of_vtx[v];
      sep[k][v] = d.puncture_separation(d.node(nd % d.nx, nd / d.nx), marked[k].pos);
    }
  }

  std::vector<Array> final_est(marked.size());
  for (size_t k = 0; k < marked.size(); ++k) {
    double excl = marked[k].exclusion;
    double r_fin = excl + 2.0 * h;
    double r0 = opt.r0 > 0 ? opt.r0 : std::max(8.0 * h, 2.0 * r_fin);
    if (r0 < 1.2 * r_fin) r0 = 2.0 * r_fin;
    if (r0 > 0.5 * extent)
      throw ConsistencyError("puncture exclusion leaves no room for completion rings");

    // Local power-law fit of the density feeding the tail integral.
    double fit_in = std::max(excl + 1.5 * h, 1.5 * h);
    double fit_out = std::min(2.0 * r0, 0.45 * extent);
    if (fit_out <= 1.3 * fit_in)
      throw ConsistencyError("no annulus available to fit the puncture exponent");
    BlowupFit bf = blowup_exponent_fit(rho, marked[k].pos, fit_in, fit_out, 8, 16);
    double e_hat = -0.5 * bf.slope;
    if (e_hat >= 1.0)
      throw ConsistencyError("fitted exponent puts the puncture at infinite distance");
    double c_half = std::exp(0.5 * bf.intercept);
    auto tail_at = [&](double r) { return c_half * std::pow(r, 1.0 - e_hat) / (1.0 - e_hat); };

    // Level l trusts the fitted tail inside radius r_l and the graph outside:
    // every vertex within r_l seeds the heap with its own tail integral, so
    // the sets nest across levels and successive estimates differ only by the
    // model-vs-graph mismatch over the annulus between the two radii.
    std::vector<Array> est(opt.levels);
    for (int l = 0; l < opt.levels; ++l) {
      double r = r0 * std::pow(r_fin / r0, double(l) / (opt.levels - 1));
      std::vector<std::pair<int, double>> seeds;
      for (int attempt = 0; attempt < 2 && seeds.empty(); ++attempt) {
        for (int v = 0; v < nv; ++v)
          if (sep[k][v] <= r) seeds.push_back({v, tail_at(sep[k][v])});
        r += h;
      }
      if (seeds.empty()) throw ConsistencyError("completion ring resolves no vertices");
      est[l] = g.distances_seeded(seeds);
      if (l == opt.levels - 1) finest_ring[k] = seeds;
    }

    double sup_last = 0, spread = 0;
    for (int v = 0; v < nv; ++v) {
      double a = est[opt.levels - 1][v], b = est[opt.levels - 2][v];
      if (!std::isfinite(a) || !std::isfinite(b)) continue;
      sup_last = std::max(sup_last, a);
      spread = std::max(spread, std::abs(a - b));
    }
    double rel = sup_last > 0 ? spread / sup_last : 0.0;
    if (rel > opt.cauchy_tol)
      throw ConsistencyError("completion estimates are not Cauchy across ring levels");

    out.marked.push_back(marked[k].pos);
    out.cauchy_spread.push_back(rel);
    out.tail.push_back(tail_at(r_fin));
    out.blowup_e.push_back(e_hat);
    out.blowup_c.push_back(c_half * c_half);
    final_est[k] = std::move(est[opt.levels - 1]);
  }
  out.marked_dist = std::move(final_est);

  int nm = int(marked.size());
  out.marked_pair_dist.assign(size_t(nm) * (nm - 1) / 2, 0.0);
  for (int i = 0; i < nm; ++i)
    for (int j = i + 1; j < nm; ++j) {
      double via_j = kInf, via_i = kInf;
      for (const auto& [v, off] : finest_ring[j]) via_j = std::min(via_j, out.marked_dist[i][v] + off);
      for (const auto& [v, off] : finest_ring[i]) via_i = std::min(via_i, out.marked_dist[j][v] + off);
      out.marked_pair_dist[size_t(i) * (2 * nm - i - 1) / 2 + (j - i - 1)] = std::min(via_j, via_i);
    }

  // Diameter from spread single-source eccentricities plus completion rows.
  std::vector<int> dsrc = stride_pick(nv, opt.diameter_sources);
  std::vector<Array> fields;
  fields.reserve(dsrc.size());
  double diam = 0;
  for (int s : dsrc) {
    fields.push_back(g.distances({s}));
    diam = std::max(diam, finite_max(fields.back()));
  }
  for (int k = 0; k < nm; ++k) diam = std::max(diam, finite_max(out.marked_dist[k]));
  for (int i = 0; i < nm; ++i)
    for (int j = i + 1; j < nm; ++j) diam = std::max(diam, out.marked_to_marked(i, j));
  out.diameter = diam;

  // Triangle spot-check mixing completion points with graph vertices. Pure
  // graph triples hold exactly, so every sampled triple involves a marked
  // point; pool points have full distance fields.
  if (nm > 0) {
    int np = int(dsrc.size()) + nm;
    auto pool_to_vtx = [&](int a, int v) {
      return a < int(dsrc.size()) ? fields[a][v] : out.marked_dist[a - dsrc.size()][v];
    };
    auto pool_to_pool = [&](int a, int b) {
      if (a == b) return 0.0;
      if (b < int(dsrc.size())) return pool_to_vtx(a, dsrc[b]);
      if (a < int(dsrc.size())) return pool_to_vtx(b, dsrc[a]);
      return out.marked_to_marked(a - int(dsrc.size()), b - int(dsrc.size()));
    };
    std::mt19937_64 rng(opt.seed);
    std::uniform_int_distribution<int> pick_marked(int(dsrc.size()), np - 1);
    std::uniform_int_distribution<int> pick_pool(0, np - 1);
    std::uniform_int_distribution<int> pick_vtx(0, nv - 1);
    double worst = 0;
    for (int it = 0; it < opt.triangle_samples; ++it) {
      int a = pick_marked(rng), b = pick_pool(rng), cv = pick_vtx(rng);
      if (a == b) continue;
      double ab = pool_to_pool(a, b), ac = pool_to_vtx(a, cv), bc = pool_to_vtx(b, cv);
      if (!std::isfinite(ab) || !std::isfinite(ac) || !std::isfinite(bc)) continue;
      worst = std::max({worst, ac - ab - bc, ab - ac - bc, bc - ab - ac});
    }
    out.triangle_defect = worst;
  }
  return out;
}

double empirical_inclusion_constant(const CompletedBaseSpace& space, const BaseForm& rho_ref,
                                    int marked_index, const std::vector<double>& deltas) {
  if (marked_index < 0 || marked_index >= int(space.marked.size()))
    throw InvalidInput("marked index out of range");
  if (deltas.empty()) throw InvalidInput("inclusion sweep needs at least one delta");
  require_same_domain(*space.graph.dom, *rho_ref.dom, "inclusion reference density");
  MetricGraph ref = MetricGraph::build(rho_ref, space.graph.knight);
  const BaseDomain& d = *rho_ref.dom;
  cplx p = space.marked[marked_index];

  double h = d.spacing();
  double rad = 1.8 * h;
  std::vector<int> src;
  while (src.empty()) {
    for (int v = 0; v < ref.n(); ++v) {
      int nd = ref.node_of_vtx[v];
      if (d.puncture_separation(d.node(nd % d.nx, nd / d.nx), p) <= rad) src.push_back(v);
    }
    rad *= 1.5;
    if (rad > 64 * h) throw InvalidInput("no reference vertices near the marked point");
  }
  Array dref = ref.distances(src);

  double worst = 1.0;
  for (double delta : deltas) {
    if (!(delta > 0)) throw InvalidInput("inclusion deltas must be positive");
    double sup = 0;
    bool any = false;
    for (int v = 0; v < ref.n(); ++v) {
      if (dref[v] > delta) continue;
      int v2 = space.graph.vtx_of_node[ref.node_of_vtx[v]];
      if (v2 < 0) continue;
      double dc = space.marked_dist[marked_index][v2];
      if (!std::isfinite(dc)) continue;
      sup = std::max(sup, dc);
      any = true;
    }
    if (!any) continue;
    auto f = [&](double n) { return n * std::pow(delta, 1.0 / n); };
    double lo = std::max(1.0, std::log(std::max(delta, 1.0)));
    if (f(lo) >= sup) {
      worst = std::max(worst, lo);
      continue;
    }
    double hi = 2.0 * lo;
    while (f(hi) < sup) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (lo + hi);
      (f(mid) < sup ? lo : hi) = mid;
    }
    worst = std::max(worst, hi);
  }
  return worst;
}

double gh_upper_bound(const Matrix& da, const Matrix& db, const Correspondence& r) {
  if (da.rows() != da.cols() || db.rows() != db.cols())
    throw InvalidInput("distance matrices must be square");
  if (r.pairs.empty()) throw InvalidInput("empty correspondence");
  std::vector<char> hit_a(da.rows(), 0), hit_b(db.rows(), 0);
  for (const auto& [a, b] : r.pairs) {
    if (a < 0 || a >= da.rows() || b < 0 || b >= db.rows())
      throw InvalidInput("correspondence index out of range");
    hit_a[a] = hit_b[b] = 1;
  }
  if (std::find(hit_a.begin(), hit_a.end(), 0) != hit_a.end() ||
      std::find(hit_b.begin(), hit_b.end(), 0) != hit_b.end())
    throw InvalidInput("correspondence must cover both sample sets");
  double worst = 0;
  for (const auto& [a1, b1] : r.pairs)
    for (const auto& [a2, b2] : r.pairs)
      worst = std::max(worst, std::abs(da(a1, a2) - db(b1, b2)));
  return 0.5 * worst;
}

GhExperiment gh_convergence_experiment(
    const FibrationSpec& spec, const std::vector<double>& ts, const GhOptions& opt,
    const std::function<void(size_t, const GhRow&, const ScalarField&)>& on_row,
    const ScalarField* phi_start, size_t start_index) {
  if (ts.empty()) throw InvalidInput("gh experiment needs a parameter schedule");
  if (start_index >= ts.size()) throw InvalidInput("gh resume index is past the schedule");
  for (size_t i = 0; i < ts.size(); ++i) {
    if (!(ts[i] > 0)) throw InvalidInput("gh schedule values must be positive");
    if (i && ts[i] <= ts[i - 1]) throw InvalidInput("gh schedule must increase");
  }
  GhExperiment out;
  GkeResult gke = solve_gke(spec, opt.newton);
  Mask mask = mask_and(spec.F.mask, mask_and(spec.chi.mask, gke.phi.mask));
  Array lim_dens = spec.F.density * gke.phi.v.exp() * spec.chi.density;
  out.limit = completion_build(BaseForm(spec.dom, lim_dens, mask), spec.dom->punctures,
                               opt.completion);
  const MetricGraph& g = out.limit.graph;
  int nv = g.n();
  int nm = int(out.limit.marked.size());
  int nb = std::min(opt.base_samples, nv);
  if (nb < 2) throw InvalidInput("gh experiment needs at least two base samples");
  std::vector<int> keep = stride_pick(nv, nb);
  nb = int(keep.size());

  Matrix db(nb + nm, nb + nm);
  db.setZero();
  for (int a = 0; a < nb; ++a) {
    Array f = g.distances({keep[a]});
    for (int b = a; b < nb; ++b) db(a, b) = db(b, a) = f[keep[b]];
  }
  for (int k = 0; k < nm; ++k) {
    for (int a = 0; a < nb; ++a) db(a, nb + k) = db(nb + k, a) = out.limit.marked_dist[k][keep[a]];
    for (int j = k + 1; j < nm; ++j)
      db(nb + k, nb + j) = db(nb + j, nb + k) = out.limit.marked_to_marked(k, j);
  }
  if (!db.allFinite()) throw ConsistencyError("limit sample distances are not all finite");
  out.base_net_radius = finite_max(g.distances(keep));

  // Fiber sample points: half-lattice points in each fiber torus, distances
  // and covering radius in the unscaled fiber metric rho_f |dw|^2.
  int ff = std::min(std::max(opt.fiber_samples, 1), 4);
  std::vector<Matrix> fd(nb, Matrix(ff, ff));
  double fiber_cov = 0;
  for (int a = 0; a < nb; ++a) {
    int nd = g.node_of_vtx[keep[a]];
    cplx tau(spec.tau_re[nd], spec.im_tau[nd]);
    double sr = std::sqrt(spec.fiber_rho[nd]);
    cplx pts[4] = {cplx(0, 0), cplx(0.5, 0), 0.5 * tau, 0.5 * (1.0 + tau)};
    auto image_min = [&](cplx w) {
      double best = kInf;
      for (int mi = -1; mi <= 1; ++mi)
        for (int ni = -1; ni <= 1; ++ni) best = std::min(best, std::abs(w + double(mi) + double(ni) * tau));
      return best;
    };
    for (int f1 = 0; f1 < ff; ++f1)
      for (int f2 = 0; f2 < ff; ++f2) fd[a](f1, f2) = sr * image_min(pts[f1] - pts[f2]);
    double cov = 0;
    for (int u = 0; u < 24; ++u)
      for (int v = 0; v < 24; ++v) {
        cplx w = cplx((u + 0.5) / 24.0, 0) + tau * ((v + 0.5) / 24.0);
        double best = kInf;
        for (int f1 = 0; f1 < ff; ++f1) best = std::min(best, image_min(w - pts[f1]));
        cov = std::max(cov, best);
      }
    fiber_cov = std::max(fiber_cov, sr * cov);
  }
  out.total_net_radius = std::hypot(out.base_net_radius, fiber_cov / std::sqrt(1.0 + ts.front()));

  std::vector<double> deltas;
  if (nm > 0) {
    double d0 = std::max(2.0 * out.base_net_radius, 0.02 * out.limit.diameter);
    double d1 = 0.5 * out.limit.diameter;
    int nd = std::max(opt.delta_count, 1);
    for (int i = 0; i < nd; ++i)
      deltas.push_back(d0 * std::pow(d1 / d0, nd == 1 ? 0.0 : double(i) / (nd - 1)));
  }
  std::vector<double> to_marked(nb, kInf);
  for (int a = 0; a < nb; ++a)
    for (int k = 0; k < nm; ++k) to_marked[a] = std::min(to_marked[a], db(a, nb + k));

  Correspondence proj;
  for (int a = 0; a < nb; ++a)
    for (int f = 0; f < ff; ++f) proj.pairs.push_back({a * ff + f, a});
  Matrix dbb = db.topLeftCorner(nb, nb);
  double fdiam = max_fiber_diameter(spec);

  ScalarField phi;
  if (phi_start) phi = *phi_start;
  int nx = nb * ff;
  Matrix da(nx, nx), dbt(nb, nb);
  for (size_t ti = start_index; ti < ts.size(); ++ti) {
    const double t = ts[ti];
    reduced_step(spec, t, phi, opt.newton);
    double kt = (1.0 + t) / t;
    Array dens = (kt * phi.v).exp() * spec.F.density * spec.chi.density;
    MetricGraph gt = MetricGraph::build(BaseForm(spec.dom, dens, mask), opt.completion.knight);
    if (gt.n() != nv) throw ConsistencyError("vertex set changed along the family");
    for (int a = 0; a < nb; ++a) {
      Array f = gt.distances({keep[a]});
      for (int b = a; b < nb; ++b) dbt(a, b) = dbt(b, a) = f[keep[b]];
    }
    if (!dbt.allFinite()) throw ConsistencyError("family sample distances are not all finite");
    double root = std::sqrt(1.0 + t);
    for (int a = 0; a < nb; ++a)
      for (int f1 = 0; f1 < ff; ++f1)
        for (int b = 0; b < nb; ++b)
          for (int f2 = 0; f2 < ff; ++f2)
            da(a * ff + f1, b * ff + f2) =
                std::hypot(dbt(a, b), 0.5 * (fd[a](f1, f2) + fd[b](f1, f2)) / root);

    GhRow row;
    row.t = t;
    row.direct = gh_upper_bound(da, dbb, proj);
    row.fiber_term = fdiam / root;
    if (nm == 0) {
      row.triangle = row.direct;
    } else {
      row.triangle = kInf;
      row.gh1_worst = -kInf;
      for (double delta : deltas) {
        std::vector<int> kd;
        for (int a = 0; a < nb; ++a)
          if (to_marked[a] >= delta) kd.push_back(a);
        if (kd.size() < 2) continue;
        double gh4 = 0;
        for (int ai : kd)
          for (int bi : kd)
            for (int f1 = 0; f1 < ff; ++f1)
              for (int f2 = 0; f2 < ff; ++f2)
                gh4 = std::max(gh4, std::abs(da(ai * ff + f1, bi * ff + f2) - db(ai, bi)));
        gh4 *= 0.5;
        double gh2 = 0;
        for (int p = 0; p < nx; ++p) {
          double m2 = kInf;
          for (int ai : kd)
            for (int f1 = 0; f1 < ff; ++f1) m2 = std::min(m2, da(p, ai * ff + f1));
          gh2 = std::max(gh2, m2);
        }
        double gh1 = 0;
        for (int q = 0; q < nb + nm; ++q) {
          double m1 = kInf;
          for (int ai : kd) m1 = std::min(m1, db(q, ai));
          gh1 = std::max(gh1, m1);
        }
        double tri = gh1 + gh2 + gh4;
        if (tri < row.triangle) {
          row.triangle = tri;
          row.delta_best = delta;
        }
        row.gh1_worst = std::max(row.gh1_worst, gh1 - delta);
      }
      if (!std::isfinite(row.triangle)) {
        row.triangle = row.direct;
        row.delta_best = 0;
        row.gh1_worst = 0;
      }
    }
    row.best = std::min(row.direct, row.triangle);
    out.rows.push_back(row);
    if (on_row) on_row(ti, row, phi);
  }
  return out;
}

double sinh3_volume(double r) {
  if (!(r >= 0)) throw InvalidInput("model volume radius must be >= 0");
  // cosh^3/3 - cosh + 2/3 refactored as (c-1)^2 (c+2) / 3 with
  // c - 1 = 2 sinh^2(r/2), which cannot cancel to a negative value.
  double cm1 = 2.0 * std::pow(std::sinh(0.5 * r), 2);
  return cm1 * cm1 * (cm1 + 3.0) / 3.0;
}

BishopGromov bishop_gromov_ratio(const FibrationSpec& spec, const ScalarField& phi_t, double t,
                                 int center_node, double r1, double r2, bool knight) {
  if (!(t > 0)) throw InvalidInput("volume comparison needs t > 0");
  if (!(r1 > 0) || r2 < r1) throw InvalidInput("volume comparison needs 0 < r1 <= r2");
  const BaseDomain& d = *spec.dom;
  if (center_node < 0 || center_node >= d.size()) throw InvalidInput("center node out of range");
  double kt = (1.0 + t) / t;
  Mask mask = mask_and(spec.F.mask, mask_and(spec.chi.mask, phi_t.mask));
  Array dens = (kt * phi_t.v).exp() * spec.F.density * spec.chi.density;
  MetricGraph g = MetricGraph::build(BaseForm(spec.dom, dens, mask), knight);
  int cv = g.vtx_of_node[center_node];
  if (cv < 0) throw InvalidInput("center node is masked");
  Array dist = g.distances({cv});

  BishopGromov out;
  out.model = r1 == r2 ? 1.0 : sinh3_volume(r2) / sinh3_volume(r1);

  // The comparison needs the full ball; flag any frontier vertex (mask or
  // grid boundary in reach) closer than the outer radius.
  for (int v = 0; v < g.n() && !out.truncated; ++v) {
    if (!(dist[v] < r2)) continue;
    int nd = g.node_of_vtx[v];
    int i = nd % d.nx, j = nd / d.nx;
    static const int off[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    for (const auto& o : off) {
      int ii = i + o[0], jj = j + o[1];
      if (d.is_torus()) {
        ii = wrap_idx(ii, d.nx);
        jj = wrap_idx(jj, d.ny);
      } else if (ii < 0 || ii >= d.nx || jj < 0 || jj >= d.ny) {
        out.truncated = true;
        break;
      }
      if (!mask[d.idx(ii, jj)]) {
        out.truncated = true;
        break;
      }
    }
  }

  const Array& cw = d.cell_weights();
  double a0 = spec.in.fiber_area;
  auto ball_volume = [&](double r) {
    double vol = 0;
    for (int v = 0; v < g.n(); ++v) {
      double bd = dist[v];
      if (!(bd < r)) continue;
      int nd = g.node_of_vtx[v];
      cplx tau(spec.tau_re[nd], spec.im_tau[nd]);
      // Metric radius left for the fiber, converted to lattice units of the
      // time-t fiber metric rho_f |dw|^2 / (1+t).
      double llat = std::sqrt((r * r - bd * bd) * (1.0 + t) / spec.fiber_rho[nd]);
      double frac;
      if (llat >= lattice_covering_radius(tau)) {
        frac = 1.0;
      } else {
        double lam1 = std::min({1.0, std::abs(tau), std::abs(tau - 1.0), std::abs(tau + 1.0)});
        if (llat <= 0.45 * lam1) {
          frac = kPi * llat * llat / tau.imag();
        } else {
          int inside = 0;
          for (int u = 0; u < 24; ++u)
            for (int w = 0; w < 24; ++w) {
              cplx z = cplx((u + 0.5) / 24.0, 0) + tau * ((w + 0.5) / 24.0);
              double best = kInf;
              for (int mi = -1; mi <= 1; ++mi)
                for (int ni = -1; ni <= 1; ++ni)
                  best = std::min(best, std::abs(z + double(mi) + double(ni) * tau));
              if (best <= llat) ++inside;
            }
          frac = double(inside) / (24.0 * 24.0);
        }
      }
      vol += cw[nd] * dens[nd] * (a0 / (1.0 + t)) * frac;
    }
    return vol;
  };

  double v1 = ball_volume(r1);
  double v2 = r1 == r2 ? v1 : ball_volume(r2);
  if (!(v1 > 0)) throw InvalidInput("inner ball carries no volume");
  out.measured = v2 / v1;
  out.compared = !out.truncated;
  return out;
}

}  // namespace gkelab
