#pragma once

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "gkelab/field.hpp"

namespace gkelab {

// Sparse quarter-Laplacian over the active nodes of a mask.
//
// Boundary handling:
//  - disk edge: Shortley-Weller arms cut at the circle, Dirichlet datum
//    dom.boundary_value (increments use datum 0);
//  - puncture holes and masked torus regions: reflected (zero-flux) arms;
//  - clean torus: periodic wrap.
//
// The operator is assembled once; Helmholtz / weighted factorizations reuse
// the symbolic pattern across repeated factorizations.
// CG for (diag(m) - (1/4) lap) x = b on an unmasked torus, preconditioned
// by the constant-coefficient spectral inverse at the mean shift. Throws
// SolverError (with the residual history) on stall or indefiniteness.
Array cg_shifted_spectral(const BaseDomain& dom, const Array& m, const Array& b, double rel_tol,
                          int maxit);

class GridLaplacian {
 public:
  GridLaplacian(DomainPtr dom, Mask active);

  int n() const { return static_cast<int>(nodes_.size()); }
  const std::vector<int>& nodes() const { return nodes_; }
  int unknown_of(int node) const { return unknown_[node]; }

  Vector gather(const Array& values) const;
  // Scatter unknowns back to the grid; untouched nodes get `fill`.
  Array scatter(const Vector& u, double fill = 0.0) const;
  Mask active_mask() const;

  // (1/4) lap u with the Dirichlet datum folded in (defaults to the
  // domain's boundary value).
  Vector apply(const Vector& u, double datum) const;
  Vector apply(const Vector& u) const;
  // Same but with datum 0 (action on increments).
  Vector apply_homogeneous(const Vector& u) const;

  // Factor ((1/4) lap - diag(m)), m >= 0 and somewhere positive on the
  // disk-free torus; solve with right-hand side rhs and Dirichlet datum 0.
  void factor_shifted(const Vector& m);
  // Factor (diag(d) - c * (1/4) lap), d > 0, c >= 0.
  void factor_weighted(const Vector& d, double c);
  Vector solve(const Vector& rhs) const;

  // Poisson solve (1/4) lap u = rhs with a Dirichlet datum (disk only).
  Vector solve_poisson(const Vector& rhs) const;
  Vector solve_poisson(const Vector& rhs, double datum) const;

 private:
  DomainPtr dom_;
  Mask active_;
  std::vector<int> nodes_;
  std::vector<int> unknown_;
  Eigen::SparseMatrix<double> A_;  // homogeneous part of (1/4) lap
  Vector bc_;                      // per-unit-datum contribution: apply(u, g) = A u + g * bc
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
  bool analyzed_ = false;
  bool factored_ = false;
  void factor(const Eigen::SparseMatrix<double>& M);
};

}  // namespace gkelab
