#pragma once

#include <memory>

#include "gkelab/types.hpp"

namespace gkelab {

enum class DomainKind { torus, disk };

// A puncture carries the marked-point location and the radius of the
// exclusion core that solvers and diagnostics mask out around it.
struct Puncture {
  cplx pos;
  double exclusion = 0.0;
};

// Uniform rectangular grid over a flat torus or a round disk.
// Torus nodes sit at (i*hx, j*hy); disk nodes are cell-centered on
// [-R,R]^2 so a marked point at the origin never coincides with a node.
class BaseDomain {
 public:
  static std::shared_ptr<const BaseDomain> torus(int nx, int ny, double px, double py,
                                                 std::vector<Puncture> punctures = {});
  static std::shared_ptr<const BaseDomain> disk(int n, double radius, double boundary_value = 0.0,
                                                std::vector<Puncture> punctures = {});

  DomainKind kind = DomainKind::torus;
  int nx = 0, ny = 0;
  double px = 0, py = 0;        // torus periods
  double radius = 0;            // disk radius
  double boundary_value = 0.0;  // Dirichlet datum carried by the disk boundary
  std::vector<Puncture> punctures;

  double hx = 0, hy = 0;
  double ox = 0, oy = 0;  // coordinates of node (0,0)

  int size() const { return nx * ny; }
  int idx(int i, int j) const { return j * nx + i; }
  double x(int i) const { return ox + i * hx; }
  double y(int j) const { return oy + j * hy; }
  cplx node(int i, int j) const { return {x(i), y(j)}; }
  double cell_area() const { return hx * hy; }
  double spacing() const { return hx > hy ? hx : hy; }

  bool is_torus() const { return kind == DomainKind::torus; }
  // Geometric interior indicator (torus: everywhere 1).
  const Mask& interior_mask() const { return interior_; }
  bool interior(int i, int j) const { return interior_[idx(i, j)] != 0; }
  // Interior minus the puncture exclusion cores.
  Mask puncture_mask() const;
  // Per-node quadrature weights (dA units; boundary-cut disk cells carry
  // their inside fraction, exterior nodes carry 0).
  const Array& cell_weights() const { return weights_; }
  double area() const { return area_; }

  // Shortest distance from a node to the nearest marked point.
  double puncture_distance(int i, int j) const;
  // Distance between two base points (torus: nearest periodic image).
  double puncture_separation(cplx a, cplx b) const;

  bool same_layout(const BaseDomain& o) const;

 private:
  Mask interior_;
  Array weights_;
  double area_ = 0;
  void finalize();
};

using DomainPtr = std::shared_ptr<const BaseDomain>;

}  // namespace gkelab
