#pragma once

#include <memory>
#include <vector>

#include "chargegame/feasible_sets.hpp"
#include "chargegame/linalg.hpp"
#include "chargegame/price_models.hpp"

namespace chargegame {

inline constexpr double kDefaultFeasibilityTol = 1e-8;

/// Joint action: row i is agent i's schedule. Feasibility is checked on
/// demand against `feasibility_tol`, not on every mutation.
struct StrategyProfile {
  RowMatrix x;
  double feasibility_tol = kDefaultFeasibilityTol;

  Eigen::Index agents() const { return x.rows(); }
  Eigen::Index horizon() const { return x.cols(); }
  Vector row(Eigen::Index i) const { return x.row(i).transpose(); }
};

/// sigma(x) = (1/M) sum_j x^j
struct AverageAction {
  Vector sigma;
};

using SetRef = std::shared_ptr<const FeasibleSet>;

/// Aggregative charging game. Prices are evaluated at (z + d) / kappa
/// componentwise; kappa = 1 recovers p(z + d).
///
/// Immutable after construction. Agents may share one set instance.
class Game {
 public:
  /// Throws ValidationError / DimensionError on malformed input and
  /// InfeasibleError when some agent set is empty.
  Game(std::vector<SetRef> agents, PriceFunction price, Vector d, Vector kappa = Vector());

  Eigen::Index agents() const { return static_cast<Eigen::Index>(agents_.size()); }
  Eigen::Index horizon() const { return d_.size(); }
  const FeasibleSet& agent_set(Eigen::Index i) const { return *agents_.at(static_cast<std::size_t>(i)); }
  const std::vector<SetRef>& agent_sets() const { return agents_; }
  const PriceFunction& price() const { return price_; }
  const Vector& d() const { return d_; }
  const Vector& kappa() const { return kappa_; }

  /// (z + d) / kappa
  Vector price_argument(const Vector& z) const;
  /// p((z + d) / kappa)
  Vector price_at(const Vector& z) const;
  /// Jacobian of z -> p((z + d) / kappa), [.]_{i,j} = d p_j / d z_i.
  Matrix price_jacobian_at(const Vector& z) const;

  /// Upper bound on max ||x|| over the union of agent sets.
  double radius() const { return radius_; }

  bool is_feasible(const StrategyProfile& profile) const;
  /// Row-wise projection of an arbitrary M x n matrix.
  StrategyProfile project(const RowMatrix& x) const;
  /// Projection of the zero profile, the default starting point.
  StrategyProfile projected_zero() const;

 private:
  std::vector<SetRef> agents_;
  PriceFunction price_;
  Vector d_;
  Vector kappa_;
  double radius_ = 0.0;
};

/// Column mean of the profile rows. Throws DimensionError for an empty profile.
AverageAction average(const StrategyProfile& profile);

/// J^i = p((sigma + d) / kappa)^T x^i for agent i (0-based).
double agent_cost(const Game& game, Eigen::Index i, const StrategyProfile& profile);

/// J_S = p((sigma + d) / kappa)^T (sigma + d)
double social_cost(const Game& game, const AverageAction& sigma);

/// Gradient of J^i with respect to x^i with the other agents fixed:
///   p(sigma + d) + (1/M) [grad_z p(sigma + d)] x^i.
Vector nash_gradient(const Game& game, Eigen::Index i, const StrategyProfile& profile);

/// F_W(z) = p(z + d)
Vector wardrop_operator(const Game& game, const Vector& z);

/// F_S(z) = p(z + d) + [grad_z p(z + d)] (z + d)
Vector social_operator(const Game& game, const Vector& z);

}  // namespace chargegame
