#include "gkelab/linsolve.hpp"

#include <cmath>
#include <vector>

#include "gkelab/fft.hpp"

namespace gkelab {

Array cg_shifted_spectral(const BaseDomain& dom, const Array& m, const Array& b, double rel_tol,
                          int maxit) {
  const double shift = std::max(m.mean(), 1e-14);
  auto op = [&](const Array& v) -> Array { return m * v - fft::ddbar(dom, v); };
  auto prec = [&](const Array& r) -> Array { return fft::helmholtz(dom, shift, r); };
  Array x = Array::Zero(b.size());
  Array r = b;
  const double b2 = std::sqrt((b * b).sum());
  if (b2 == 0) return x;
  Array z = prec(r);
  Array p = z;
  double rz = (r * z).sum();
  std::vector<double> hist;
  for (int it = 0; it < maxit; ++it) {
    Array Ap = op(p);
    const double pAp = (p * Ap).sum();
    if (!(pAp > 0)) throw SolverError("cg operator lost positivity", hist);
    const double alpha = rz / pAp;
    x += alpha * p;
    r -= alpha * Ap;
    const double rnorm = std::sqrt((r * r).sum());
    hist.push_back(rnorm / b2);
    if (rnorm <= rel_tol * b2) return x;
    z = prec(r);
    const double rz2 = (r * z).sum();
    p = z + (rz2 / rz) * p;
    rz = rz2;
  }
  throw SolverError("cg stalled before reaching tolerance", hist);
}

namespace {
inline int wrap(int i, int n) { return i < 0 ? i + n : (i >= n ? i - n : i); }
// Arms shorter than this fraction of h are clamped; moves the circle by
// O(0.05 h) at a handful of nodes, keeps the matrix well conditioned.
constexpr double kMinArm = 0.05;
}  // namespace

GridLaplacian::GridLaplacian(DomainPtr dom, Mask active) : dom_(std::move(dom)), active_(std::move(active)) {
  const BaseDomain& d = *dom_;
  if (active_.size() != static_cast<size_t>(d.size()))
    throw InvalidInput("active mask does not match the domain layout");
  unknown_.assign(d.size(), -1);
  for (int k = 0; k < d.size(); ++k)
    if (active_[k]) {
      unknown_[k] = static_cast<int>(nodes_.size());
      nodes_.push_back(k);
    }
  if (nodes_.empty()) throw InvalidInput("no active nodes to solve on");

  const int n = static_cast<int>(nodes_.size());
  A_.resize(n, n);
  bc_ = Vector::Zero(n);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(n) * 5);

  const bool tor = d.is_torus();
  const double R = d.radius;

  // Arm toward (di,dj): full length to an active node, a Dirichlet cut at
  // the circle, or a reflected (zero-flux) stub at a masked hole.
  struct Arm {
    double len;
    int nbr;      // unknown index, -1 otherwise
    bool dirich;  // true: boundary datum sits at the far end
  };
  auto probe = [&](int i, int j, int di, int dj) -> Arm {
    const double h = di ? d.hx : d.hy;
    int ii = i + di, jj = j + dj;
    if (tor) {
      ii = wrap(ii, d.nx);
      jj = wrap(jj, d.ny);
      const int k = d.idx(ii, jj);
      if (active_[k]) return {h, unknown_[k], false};
      return {h, -1, false};  // reflected
    }
    const bool ongrid = ii >= 0 && ii < d.nx && jj >= 0 && jj < d.ny;
    if (ongrid) {
      const int k = d.idx(ii, jj);
      if (active_[k]) return {h, unknown_[k], false};
      if (d.interior_mask()[k]) return {h, -1, false};  // masked hole: reflect
    }
    // crosses the circle: cut the arm where |q + t*h*dir| = R
    const double qx = d.x(i), qy = d.y(j);
    const double qd = di ? qx * di : qy * dj;
    const double a = h * h, b = 2 * h * qd, c = qx * qx + qy * qy - R * R;
    double disc = b * b - 4 * a * c;
    if (disc < 0) disc = 0;
    double t = (-b + std::sqrt(disc)) / (2 * a);
    if (t < kMinArm) t = kMinArm;
    if (t > 1) t = 1;
    return {t * h, -1, true};
  };

  for (int row = 0; row < n; ++row) {
    const int k = nodes_[row];
    const int i = k % d.nx, j = k / d.nx;
    double diag = 0;
    for (int axis = 0; axis < 2; ++axis) {
      const Arm p = axis == 0 ? probe(i, j, 1, 0) : probe(i, j, 0, 1);
      const Arm m = axis == 0 ? probe(i, j, -1, 0) : probe(i, j, 0, -1);
      const double cp = 2.0 / (p.len * (p.len + m.len));
      const double cm = 2.0 / (m.len * (p.len + m.len));
      const Arm* arms[2] = {&p, &m};
      const double coefs[2] = {cp, cm};
      for (int side = 0; side < 2; ++side) {
        const Arm& arm = *arms[side];
        const double coef = coefs[side];
        if (arm.nbr >= 0)
          trip.emplace_back(row, arm.nbr, 0.25 * coef);
        else if (arm.dirich)
          bc_[row] += 0.25 * coef;
        else
          diag += 0.25 * coef;  // reflected: far value equals the center
      }
      diag -= 0.25 * (cp + cm);
    }
    trip.emplace_back(row, row, diag);
  }
  A_.setFromTriplets(trip.begin(), trip.end());
  A_.makeCompressed();
}

Vector GridLaplacian::gather(const Array& values) const {
  Vector u(n());
  for (int r = 0; r < n(); ++r) u[r] = values[nodes_[r]];
  return u;
}

Array GridLaplacian::scatter(const Vector& u, double fill) const {
  Array out = Array::Constant(dom_->size(), fill);
  for (int r = 0; r < n(); ++r) out[nodes_[r]] = u[r];
  return out;
}

Mask GridLaplacian::active_mask() const { return active_; }

Vector GridLaplacian::apply(const Vector& u, double datum) const { return A_ * u + datum * bc_; }

Vector GridLaplacian::apply(const Vector& u) const { return apply(u, dom_->boundary_value); }

Vector GridLaplacian::apply_homogeneous(const Vector& u) const { return A_ * u; }

void GridLaplacian::factor(const Eigen::SparseMatrix<double>& M) {
  if (!analyzed_) {
    lu_.analyzePattern(M);
    analyzed_ = true;
  }
  lu_.factorize(M);
  if (lu_.info() != Eigen::Success) throw SolverError("sparse factorization failed");
  factored_ = true;
}

void GridLaplacian::factor_shifted(const Vector& m) {
  if (m.size() != n()) throw InvalidInput("shift vector size mismatch");
  Eigen::SparseMatrix<double> M = A_;
  for (int r = 0; r < n(); ++r) M.coeffRef(r, r) -= m[r];
  factor(M);
}

void GridLaplacian::factor_weighted(const Vector& di, double c) {
  if (di.size() != n()) throw InvalidInput("weight vector size mismatch");
  Eigen::SparseMatrix<double> M = (-c) * A_;
  for (int r = 0; r < n(); ++r) M.coeffRef(r, r) += di[r];
  factor(M);
}

Vector GridLaplacian::solve(const Vector& rhs) const {
  if (!factored_) throw SolverError("solve before factorization");
  Vector x = lu_.solve(rhs);
  if (lu_.info() != Eigen::Success) throw SolverError("sparse back-substitution failed");
  return x;
}

Vector GridLaplacian::solve_poisson(const Vector& rhs) const {
  return solve_poisson(rhs, dom_->boundary_value);
}

Vector GridLaplacian::solve_poisson(const Vector& rhs, double datum) const {
  // Dirichlet rows make A nonsingular on the disk; the torus operator has a
  // constant nullspace and must go through the shifted path instead.
  if (dom_->is_torus()) throw InvalidInput("plain Poisson solve is disk-only");
  auto* self = const_cast<GridLaplacian*>(this);
  self->factor(A_);
  return lu_.solve(Vector(rhs - datum * bc_));
}

}  // namespace gkelab
