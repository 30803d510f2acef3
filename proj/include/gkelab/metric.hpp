#pragma once

#include <utility>

#include "gkelab/continuity.hpp"

namespace gkelab {

// Weighted-graph discretization of a conformal metric rho |ds|^2: vertices
// are the valid nodes of the density form, edges the 8-neighbor stencil plus
// optional knight moves, weights the segment length integral of sqrt(rho)
// by a 2-point Gauss rule. Distances are exact graph shortest paths, so
// they overestimate the continuum metric by the stencil anisotropy only.
struct MetricGraph {
  DomainPtr dom;
  Mask valid;                    // node-indexed vertex mask
  std::vector<int> vtx_of_node;  // -1 where masked
  std::vector<int> node_of_vtx;
  std::vector<std::vector<std::pair<int, double>>> adj;
  bool knight = true;

  static MetricGraph build(const BaseForm& rho, bool knight = true);

  int n() const { return int(node_of_vtx.size()); }
  // Multi-source shortest-path distances to every vertex (inf unreachable).
  Array distances(const std::vector<int>& source_vertices) const;
  // Sources carrying initial offsets (completion tails seed the heap).
  Array distances_seeded(const std::vector<std::pair<int, double>>& sources) const;
  Array distances_from_node(int node) const;
  int nearest_vertex(cplx p) const;  // valid node closest to p, -1 if none
};

// Per-node distance field from the given source nodes (inf on masked nodes).
Array distance_field(const BaseForm& rho, const std::vector<int>& source_nodes,
                     bool knight = true);

// Diameter of the coordinate annulus 0.2 r <= |s - center| <= r in the graph
// metric, from rim and spread interior sources; exact when a diametral
// endpoint is among the sources, a lower envelope otherwise. The inner cut
// scales with r so radius sweeps compare self-similar regions.
double punctured_disk_diameter(const BaseForm& rho, cplx center, double r, bool knight = true);

struct ExponentFit {
  double slope = 0, intercept = 0;
  int n_used = 0;
  std::vector<double> radii, values;   // the fitted pairs
  std::vector<double> skipped;         // radii below the resolution floor
};

// Least-squares slope of log diameter against log r over a radius sweep;
// radii under 6 grid spacings are excluded and reported, not fitted.
ExponentFit diameter_exponent_fit(const BaseForm& rho, cplx center,
                                  const std::vector<double>& radii, bool knight = true);

struct BlowupFit {
  double slope = 0, intercept = 0;  // ring-median fit of log F vs log r
  double anisotropy = 0;            // max over rings of (max-min)/2 of log F
  bool per_ray = false;             // true when anisotropy exceeded the gate
  double slope_min = 0, slope_max = 0;  // per-ray envelope when per_ray
  int n_rings = 0;
};

// Radial growth fit of a density around a point across geometric rings;
// strongly anisotropic data is refit per ray and reported as an envelope.
BlowupFit blowup_exponent_fit(const BaseForm& F, cplx center, double r_in, double r_out,
                              int rings = 8, int rays = 16);

struct CompletionOptions {
  double r0 = 0;            // coarsest puncture radius; default 8 spacings
  int levels = 3;           // shrinking radii r0 / 2^l
  double cauchy_tol = 0.01; // relative agreement demanded of the last two levels
  bool knight = true;
  int diameter_sources = 96;
  int triangle_samples = 4000;
  uint64_t seed = 1;
};

// Completion of a punctured conformal metric: distances to each puncture are
// limits over shrinking circles, closed by the fitted power-law tail
// integral sqrt(C) r^(1-e) / (1-e). A fitted exponent e >= 1 means the
// puncture is at infinite distance and the build fails loudly.
struct CompletedBaseSpace {
  MetricGraph graph;
  std::vector<cplx> marked;
  std::vector<Array> marked_dist;  // vertex-indexed completed distances
  std::vector<double> tail;        // tail correction at the finest radius
  std::vector<double> cauchy_spread;  // relative spread of the last two levels
  std::vector<double> blowup_e, blowup_c;
  std::vector<double> marked_pair_dist;  // row-major upper triangle
  double diameter = 0;          // over vertices and completion points
  double triangle_defect = 0;   // worst sampled triangle violation

  double marked_to_marked(int i, int j) const;
};

CompletedBaseSpace completion_build(const BaseForm& rho, const std::vector<Puncture>& marked,
                                    const CompletionOptions& opt = {});

// Smallest N >= 1 with sup{d_complete(s0, q) : d_ref(s0, q) <= delta} <=
// N delta^(1/N) for every delta in the sweep; reported per the delta grid.
double empirical_inclusion_constant(const CompletedBaseSpace& space, const BaseForm& rho_ref,
                                    int marked_index, const std::vector<double>& deltas);

// A correspondence between two finite metric samples: index pairs, required
// to cover both sides.
struct Correspondence {
  std::vector<std::pair<int, int>> pairs;
};

// Standard distortion bound: half the sup over pair-of-pairs of
// |d_A(p, q) - d_B(p', q')|.
double gh_upper_bound(const Matrix& da, const Matrix& db, const Correspondence& r);

struct GhOptions {
  int base_samples = 160;     // target size of the base sample net
  int fiber_samples = 4;      // fiber points carried per base sample
  int delta_count = 6;        // truncation sweep size
  CompletionOptions completion;
  NewtonOptions newton;
};

struct GhRow {
  double t = 0;
  double direct = 0;        // half distortion of the full projection
  double triangle = 0;      // best truncated three-term bound
  double delta_best = 0;    // truncation radius realizing it
  double gh1_worst = 0;     // max over the sweep of (measured GH1 - delta)
  double best = 0;          // headline bound min(triangle, direct-composed)
  double fiber_term = 0;    // (1+t)^(-1/2) max fiber diameter
};

struct GhExperiment {
  std::vector<GhRow> rows;
  double base_net_radius = 0;   // sampling slack, reported, not added
  double total_net_radius = 0;
  CompletedBaseSpace limit;     // the completed target space
};

// Gromov-Hausdorff upper-bound series of the collapsing family against the
// completed base: per t, the projection-correspondence bound assembled both
// directly and through the truncation triangle, distances in the total
// space by the product formula d^2 = d_base(t)^2 + d_fiber^2 / (1+t).
// on_row fires after each schedule point with the potential of that state;
// start_index/phi_start resume a partially completed series (rows before
// start_index are omitted from the result).
GhExperiment gh_convergence_experiment(
    const FibrationSpec& spec, const std::vector<double>& ts, const GhOptions& opt = {},
    const std::function<void(size_t, const GhRow&, const ScalarField&)>& on_row = {},
    const ScalarField* phi_start = nullptr, size_t start_index = 0);

struct BishopGromov {
  double measured = 0, model = 0;
  bool compared = false;   // false when the outer ball left the domain
  bool truncated = false;
};

// Volume ratio of concentric total-space balls against the sinh^3 model of
// the Ric >= -2 omega lower bound; measured by integrating the product
// volume density over graph-metric balls.
BishopGromov bishop_gromov_ratio(const FibrationSpec& spec, const ScalarField& phi_t, double t,
                                 int center_node, double r1, double r2, bool knight = true);

// Closed form of the comparison integral: int_0^R sinh^3 v dv.
double sinh3_volume(double r);

}  // namespace gkelab
