#pragma once

#include <optional>
#include <string>
#include <variant>

#include "chargegame/linalg.hpp"

namespace chargegame {

/// lower <= x <= upper
struct BoxSet {
  Vector lower;
  Vector upper;
};

/// EV charging constraints:
///   0 <= x_t <= x_tilde_t,  sum_t x_t >= theta,  |x_{t+1} - x_t| <= ramp (t = 1..n-1).
struct EVChargingSet {
  Vector x_tilde;
  double theta = 0.0;
  std::optional<double> ramp;
};

/// A x <= b
struct PolytopeSet {
  Matrix A;
  Vector b;
};

/// {base + a v1 + c v2 : a, c in [0, 1]} intersected with the nonnegative orthant.
struct AffineSlabSet {
  Vector base;
  Vector v1;
  Vector v2;
};

/// Nonemptiness answer with a feasible witness or a Farkas certificate.
struct NonemptyResult {
  bool nonempty = false;
  std::optional<Vector> witness;
  /// Multipliers over `halfspaces()` rows proving emptiness, when one was produced.
  std::optional<Vector> certificate;
};

/// Closed convex constraint set of one agent.
///
/// The descriptor is kept as given; a compiled halfspace system backs
/// projection. For EV sets, slots with x_tilde_t = 0 are eliminated and a
/// ramp r >= max x_tilde is dropped as vacuous.
class FeasibleSet {
 public:
  using Descriptor = std::variant<BoxSet, EVChargingSet, PolytopeSet, AffineSlabSet>;

  /// Throws ValidationError on malformed descriptors (size mismatch, negative
  /// x_tilde or theta, nonpositive ramp, dependent slab directions). Empty
  /// but well-formed sets are accepted; see check_nonempty().
  explicit FeasibleSet(Descriptor descriptor);

  static FeasibleSet box(Vector lower, Vector upper) { return FeasibleSet(BoxSet{std::move(lower), std::move(upper)}); }
  static FeasibleSet ev_charging(Vector x_tilde, double theta, std::optional<double> ramp = std::nullopt) {
    return FeasibleSet(EVChargingSet{std::move(x_tilde), theta, ramp});
  }
  static FeasibleSet polytope(Matrix A, Vector b) { return FeasibleSet(PolytopeSet{std::move(A), std::move(b)}); }
  static FeasibleSet affine_slab(Vector base, Vector v1, Vector v2) {
    return FeasibleSet(AffineSlabSet{std::move(base), std::move(v1), std::move(v2)});
  }

  const Descriptor& descriptor() const { return descriptor_; }
  Eigen::Index dimension() const { return dimension_; }
  std::string kind() const;

  /// Euclidean projection. Throws InfeasibleError (with certificate when
  /// available) if the set is empty.
  Vector project(const Vector& y) const;

  /// Every defining inequality holds within tol.
  bool contains(const Vector& x, double tol) const;

  NonemptyResult check_nonempty() const;

  /// Upper bound on max ||x|| over the set.
  double norm_bound() const;

  /// Full halfspace system {x : A x <= b} in R^n describing the set
  /// (equalities appear as pairs of opposite rows).
  const Matrix& halfspace_matrix() const { return A_full_; }
  const Vector& halfspace_rhs() const { return b_full_; }

 private:
  void compile();
  Vector project_ev(const Vector& y) const;
  Vector project_slab(const Vector& y) const;

  Descriptor descriptor_;
  Eigen::Index dimension_ = 0;

  Matrix A_full_;
  Vector b_full_;

  // EV: reduced system on the free slots.
  std::vector<Eigen::Index> free_slots_;
  Vector reduced_upper_;
  Matrix A_reduced_;
  Vector b_reduced_;
  bool ramp_active_ = false;

  // Affine slab: orthonormal chart (x = base + U u) and constraints in u.
  Matrix chart_U_;
  Matrix chart_A_box_;
  Vector chart_b_box_;
  Matrix chart_A_all_;
  Vector chart_b_all_;
};

}  // namespace chargegame
