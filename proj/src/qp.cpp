#include "chargegame/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "chargegame/errors.hpp"

namespace chargegame::qp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Factorization state of the dual method with identity Hessian. With N the
// matrix of active normals (in >= form), J is orthogonal and J^T N = [R; 0]
// with R upper triangular.
class ActiveSetState {
 public:
  explicit ActiveSetState(Eigen::Index n) : J_(Matrix::Identity(n, n)), R_(Matrix::Zero(n, n)) {}

  Eigen::Index size() const { return q_; }

  // d = J^T np
  Vector transformed(const Vector& np) const { return J_.transpose() * np; }

  // Primal direction: component of np outside the active span.
  Vector primal_direction(const Vector& d) const {
    const Eigen::Index n = J_.rows();
    return J_.rightCols(n - q_) * d.tail(n - q_);
  }

  // Dual direction: coordinates of np's in-span component on the active normals.
  Vector dual_direction(const Vector& d) const {
    if (q_ == 0) return Vector();
    return R_.topLeftCorner(q_, q_).triangularView<Eigen::Upper>().solve(d.head(q_));
  }

  // Appends a normal whose transformed vector is d. Returns false when it
  // is linearly dependent on the active normals.
  bool add(Vector d, double r_norm_scale) {
    const Eigen::Index n = J_.rows();
    for (Eigen::Index j = n - 1; j > q_; --j) {
      const double a = d(j - 1);
      const double b = d(j);
      if (b == 0.0) continue;
      const double h = std::hypot(a, b);
      const double c = a / h;
      const double s = b / h;
      d(j - 1) = h;
      d(j) = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) {
        const double left = J_(k, j - 1);
        const double right = J_(k, j);
        J_(k, j - 1) = c * left + s * right;
        J_(k, j) = -s * left + c * right;
      }
    }
    if (std::abs(d(q_)) <= 1e-14 * std::max(1.0, r_norm_scale)) return false;
    R_.col(q_).head(q_ + 1) = d.head(q_ + 1);
    ++q_;
    return true;
  }

  // Removes active normal at position l and restores triangularity.
  void remove(Eigen::Index l) {
    for (Eigen::Index j = l; j + 1 < q_; ++j) R_.col(j) = R_.col(j + 1);
    R_.col(q_ - 1).setZero();
    const Eigen::Index n = J_.rows();
    for (Eigen::Index j = l; j + 1 < q_; ++j) {
      const double a = R_(j, j);
      const double b = R_(j + 1, j);
      if (b == 0.0) continue;
      const double h = std::hypot(a, b);
      const double c = a / h;
      const double s = b / h;
      for (Eigen::Index k = j; k + 1 < q_; ++k) {
        const double top = R_(j, k);
        const double bottom = R_(j + 1, k);
        R_(j, k) = c * top + s * bottom;
        R_(j + 1, k) = -s * top + c * bottom;
      }
      R_(j + 1, j) = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) {
        const double left = J_(k, j);
        const double right = J_(k, j + 1);
        J_(k, j) = c * left + s * right;
        J_(k, j + 1) = -s * left + c * right;
      }
    }
    --q_;
  }

 private:
  Matrix J_;
  Matrix R_;
  Eigen::Index q_ = 0;
};

}  // namespace

ProjectionResult project_dual_active_set(const Matrix& A, const Vector& b, const Vector& y, double tol,
                                         int max_iterations) {
  const Eigen::Index m = A.rows();
  const Eigen::Index n = A.cols();
  if (y.size() != n || b.size() != m) throw DimensionError("projection data has inconsistent dimensions");
  if (max_iterations <= 0) max_iterations = static_cast<int>(10 * (m + n) + 100);

  ProjectionResult out;
  out.x = y;
  out.lambda = Vector::Zero(m);

  // Internally constraints are n_i^T x >= c_i with n_i = -a_i, c_i = -b_i.
  Vector row_norm(m);
  for (Eigen::Index i = 0; i < m; ++i) row_norm(i) = A.row(i).norm();
  const double scale = row_norm.size() ? row_norm.maxCoeff() : 1.0;

  ActiveSetState state(n);
  std::vector<Eigen::Index> active;
  std::vector<double> u;
  std::vector<char> is_active(static_cast<std::size_t>(m), 0);
  Vector& x = out.x;

  auto slack = [&](Eigen::Index i) { return b(i) - A.row(i).dot(x); };

  for (int iter = 0; iter < max_iterations; ++iter) {
    out.iterations = iter + 1;
    Eigen::Index p = -1;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (is_active[static_cast<std::size_t>(i)] || row_norm(i) == 0.0) continue;
      const double s = slack(i);
      const double threshold = -tol * row_norm(i) * (1.0 + x.norm()) - tol * std::abs(b(i));
      if (s < threshold && s < worst) {
        worst = s;
        p = i;
      }
    }
    if (p < 0) {
      for (std::size_t k = 0; k < active.size(); ++k) out.lambda(active[k]) = u[k];
      out.status = Status::Optimal;
      return out;
    }

    const Vector np = -A.row(p).transpose();
    double u_new = 0.0;
    bool added = false;
    while (!added) {
      if (++iter >= max_iterations) {
        out.status = Status::IterationLimit;
        return out;
      }
      const Vector d = state.transformed(np);
      const Vector z = state.primal_direction(d);
      const Vector r = state.dual_direction(d);

      double t1 = kInf;
      Eigen::Index drop = -1;
      for (Eigen::Index k = 0; k < r.size(); ++k) {
        if (r(k) > 0.0) {
          const double t = u[static_cast<std::size_t>(k)] / r(k);
          if (t < t1) {
            t1 = t;
            drop = k;
          }
        }
      }
      double t2 = kInf;
      const double zn = z.dot(np);
      if (z.norm() > 1e-12 * row_norm(p) && zn > 0.0) t2 = -slack(p) / zn;

      if (t1 == kInf && t2 == kInf) {
        // np lies in the span of the active normals with nonpositive
        // coefficients: a_p - sum r_k a_k = 0 certifies emptiness.
        out.status = Status::Infeasible;
        out.certificate = Vector::Zero(m);
        out.certificate(p) = 1.0;
        for (Eigen::Index k = 0; k < r.size(); ++k) out.certificate(active[static_cast<std::size_t>(k)]) = -r(k);
        return out;
      }
      const double t = std::min(t1, t2);
      if (t2 < kInf) x += t * z;
      for (Eigen::Index k = 0; k < r.size(); ++k) u[static_cast<std::size_t>(k)] -= t * r(k);
      u_new += t;

      if (t2 <= t1) {
        if (!state.add(d, scale)) {
          out.status = Status::IterationLimit;
          return out;
        }
        active.push_back(p);
        u.push_back(u_new);
        is_active[static_cast<std::size_t>(p)] = 1;
        added = true;
      } else {
        const auto l = static_cast<std::size_t>(drop);
        is_active[static_cast<std::size_t>(active[l])] = 0;
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(l));
        u.erase(u.begin() + static_cast<std::ptrdiff_t>(l));
        state.remove(drop);
      }
    }
  }
  out.status = Status::IterationLimit;
  return out;
}

ProjectionResult project_dykstra(const Matrix& A, const Vector& b, const Vector& y, double tol, int max_sweeps) {
  const Eigen::Index m = A.rows();
  if (y.size() != A.cols() || b.size() != m) throw DimensionError("projection data has inconsistent dimensions");
  ProjectionResult out;
  out.x = y;
  Matrix increments = Matrix::Zero(m, A.cols());
  Vector row_sq(m);
  for (Eigen::Index i = 0; i < m; ++i) row_sq(i) = A.row(i).squaredNorm();

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    out.iterations = sweep + 1;
    double moved = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (row_sq(i) == 0.0) continue;
      const Vector z = out.x + increments.row(i).transpose();
      const double excess = A.row(i).dot(z) - b(i);
      Vector next = z;
      if (excess > 0.0) next -= (excess / row_sq(i)) * A.row(i).transpose();
      increments.row(i) = (z - next).transpose();
      moved = std::max(moved, (next - out.x).lpNorm<Eigen::Infinity>());
      out.x = std::move(next);
    }
    if (moved < tol) {
      // Multipliers of the halfspace steps: increment_i = lambda_i a_i.
      out.lambda = Vector::Zero(m);
      for (Eigen::Index i = 0; i < m; ++i) {
        if (row_sq(i) > 0.0) out.lambda(i) = increments.row(i).dot(A.row(i)) / row_sq(i);
      }
      out.status = Status::Optimal;
      return out;
    }
  }
  out.lambda = Vector::Zero(m);
  out.status = Status::IterationLimit;
  return out;
}

ProjectionResult project(const Matrix& A, const Vector& b, const Vector& y, double tol) {
  auto result = project_dual_active_set(A, b, y, tol);
  if (result.status == Status::IterationLimit) {
    auto fallback = project_dykstra(A, b, y);
    fallback.iterations += result.iterations;
    return fallback;
  }
  return result;
}

double kkt_residual(const Matrix& A, const Vector& b, const Vector& y, const Vector& x, const Vector& lambda) {
  double res = (x - y + A.transpose() * lambda).lpNorm<Eigen::Infinity>();
  const Vector slack = A * x - b;
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    res = std::max(res, slack(i));
    res = std::max(res, -lambda(i));
    res = std::max(res, std::abs(lambda(i) * slack(i)));
  }
  return res;
}

}  // namespace chargegame::qp
