#pragma once

// Independent reference computations used only by tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Lawson-Hanson nonnegative least squares: min ||E u - f|| s.t. u >= 0.
inline Vector nnls(const Matrix& E, const Vector& f, int max_iter = 0) {
  const Eigen::Index m = E.cols();
  if (max_iter <= 0) max_iter = static_cast<int>(30 * m + 100);
  Vector u = Vector::Zero(m);
  std::vector<char> passive(static_cast<std::size_t>(m), 0);
  const double tol = 1e-13 * std::max(1.0, E.norm()) * std::max(1.0, f.norm());

  auto solve_passive = [&](Vector& z) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
    }
    z = Vector::Zero(m);
    if (idx.empty()) return;
    Matrix Ep(E.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) Ep.col(static_cast<Eigen::Index>(k)) = E.col(idx[k]);
    const Vector zp = Ep.colPivHouseholderQr().solve(f);
    for (std::size_t k = 0; k < idx.size(); ++k) z(idx[k]) = zp(static_cast<Eigen::Index>(k));
  };

  for (int outer = 0; outer < max_iter; ++outer) {
    const Vector w = E.transpose() * (f - E * u);
    Eigen::Index best = -1;
    double best_w = tol;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (!passive[static_cast<std::size_t>(j)] && w(j) > best_w) {
        best_w = w(j);
        best = j;
      }
    }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = 1;
    for (int inner = 0; inner < max_iter; ++inner) {
      Vector z;
      solve_passive(z);
      bool ok = true;
      for (Eigen::Index j = 0; j < m; ++j) {
        if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0) ok = false;
      }
      if (ok) {
        u = z;
        break;
      }
      double alpha = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < m; ++j) {
        if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0) alpha = std::min(alpha, u(j) / (u(j) - z(j)));
      }
      u += alpha * (z - u);
      for (Eigen::Index j = 0; j < m; ++j) {
        if (passive[static_cast<std::size_t>(j)] && std::abs(u(j)) <= 1e-15) {
          passive[static_cast<std::size_t>(j)] = 0;
          u(j) = 0.0;
        }
      }
    }
  }
  return u;
}

/// Euclidean projection of y onto {x : A x <= b} by least-distance
/// programming (reduced to NNLS), followed by an exact re-solve on the
/// detected active set. Returns nullopt when the set is empty.
inline std::optional<Vector> project_ldp(const Matrix& A, const Vector& b, const Vector& y) {
  const Eigen::Index n = A.cols();
  const Eigen::Index m = A.rows();
  // x = y + z with -A z >= A y - b
  const Matrix G = -A;
  const Vector h = A * y - b;
  Matrix E(n + 1, m);
  E.topRows(n) = G.transpose();
  E.row(n) = h.transpose();
  Vector f = Vector::Zero(n + 1);
  f(n) = 1.0;
  const Vector u = nnls(E, f);
  const Vector r = E * u - f;
  if (r.norm() < 1e-12 || std::abs(r(n)) < 1e-14) return std::nullopt;
  Vector x = y - r.head(n) / r(n);

  // Polish: project y onto the affine hull of the active rows.
  std::vector<Eigen::Index> act;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (std::abs(A.row(i).dot(x) - b(i)) <= 1e-9 * (1.0 + std::abs(b(i)))) act.push_back(i);
  }
  if (!act.empty()) {
    Matrix Aa(static_cast<Eigen::Index>(act.size()), n);
    Vector ba(static_cast<Eigen::Index>(act.size()));
    for (std::size_t k = 0; k < act.size(); ++k) {
      Aa.row(static_cast<Eigen::Index>(k)) = A.row(act[k]);
      ba(static_cast<Eigen::Index>(k)) = b(act[k]);
    }
    // x = y - Aa^T mu with Aa x = ba, minimum-norm mu for dependent rows.
    const Matrix K = Aa * Aa.transpose();
    const Vector mu = K.completeOrthogonalDecomposition().solve(Aa * y - ba);
    const Vector polished = y - Aa.transpose() * mu;
    if (((A * polished - b).array() <= 1e-10 * (1.0 + b.cwiseAbs().maxCoeff())).all()) x = polished;
  }
  return x;
}

/// Central finite-difference gradient of a scalar function.
inline Vector fd_gradient(const std::function<double(const Vector&)>& fn, const Vector& x, double h = 1e-6) {
  Vector g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Vector xp = x;
    Vector xm = x;
    xp(k) += h;
    xm(k) -= h;
    g(k) = (fn(xp) - fn(xm)) / (2.0 * h);
  }
  return g;
}

/// Central finite-difference Jacobian with [J]_{i,j} = d g_j / d x_i.
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& fn, const Vector& x, double h = 1e-6) {
  const Vector f0 = fn(x);
  Matrix J(x.size(), f0.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector xp = x;
    Vector xm = x;
    xp(i) += h;
    xm(i) -= h;
    J.row(i) = ((fn(xp) - fn(xm)) / (2.0 * h)).transpose();
  }
  return J;
}

}  // namespace oracle
