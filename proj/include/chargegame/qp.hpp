#pragma once

#include "chargegame/linalg.hpp"

namespace chargegame::qp {

enum class Status { Optimal, Infeasible, IterationLimit };

/// Euclidean projection of y onto {x : A x <= b}.
struct ProjectionResult {
  Status status = Status::Optimal;
  Vector x;
  /// Multipliers, one per row of A: x = y - A^T lambda at optimality.
  Vector lambda;
  /// Farkas multipliers when status == Infeasible.
  Vector certificate;
  int iterations = 0;
};

/// Dual active-set method (Goldfarb-Idnani) for min 1/2 ||x - y||^2 s.t. A x <= b.
/// Starts from the unconstrained minimizer x = y and adds the most violated
/// constraint each outer step, keeping dual feasibility throughout.
ProjectionResult project_dual_active_set(const Matrix& A, const Vector& b, const Vector& y, double tol = 1e-12,
                                         int max_iterations = 0);

/// Dykstra alternating projections onto the halfspaces of A x <= b.
/// Stops when a full sweep moves x by less than `tol`.
ProjectionResult project_dykstra(const Matrix& A, const Vector& b, const Vector& y, double tol = 1e-13,
                                 int max_sweeps = 200000);

/// Projection with the active-set solver, falling back to Dykstra on an iteration limit.
ProjectionResult project(const Matrix& A, const Vector& b, const Vector& y, double tol = 1e-12);

/// Largest violation of the projection KKT system (stationarity, primal and
/// dual feasibility, complementarity).
double kkt_residual(const Matrix& A, const Vector& b, const Vector& y, const Vector& x, const Vector& lambda);

}  // namespace chargegame::qp
