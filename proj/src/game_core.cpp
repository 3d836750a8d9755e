#include "chargegame/game_core.hpp"

#include <algorithm>
#include <unordered_set>

#include <fmt/format.h>

#include "chargegame/errors.hpp"

namespace chargegame {

namespace {

void check_agent(const Game& game, Eigen::Index i) {
  if (i < 0 || i >= game.agents()) {
    throw DimensionError(fmt::format("agent index {} out of range [0, {})", i, game.agents()));
  }
}

void check_profile(const Game& game, const StrategyProfile& profile) {
  if (profile.agents() != game.agents() || profile.horizon() != game.horizon()) {
    throw DimensionError(fmt::format("profile is {}x{}, game is {}x{}", profile.agents(), profile.horizon(),
                                     game.agents(), game.horizon()));
  }
}

}  // namespace

Game::Game(std::vector<SetRef> agents, PriceFunction price, Vector d, Vector kappa)
    : agents_(std::move(agents)), price_(std::move(price)), d_(std::move(d)), kappa_(std::move(kappa)) {
  if (agents_.empty()) throw ValidationError("a game needs at least one agent");
  const Eigen::Index n = d_.size();
  if (n == 0) throw DimensionError("horizon must be positive");
  if (kappa_.size() == 0) kappa_ = Vector::Ones(n);
  if (kappa_.size() != n) throw DimensionError("kappa and d must have equal length");
  if (!d_.allFinite() || (d_.array() < 0.0).any()) throw ValidationError("d must be finite and nonnegative");
  if (!kappa_.allFinite() || (kappa_.array() <= 0.0).any()) throw ValidationError("kappa must be positive");
  if (const auto dim = price_.dimension(); dim && *dim != n) {
    throw DimensionError(fmt::format("price has {} components, horizon is {}", *dim, n));
  }
  if (const auto* het = std::get_if<HeterogeneousPriceModel>(&price_.variant())) {
    for (std::size_t t = 0; t < het->components.size(); ++t) {
      het->components[t].validate();
      het->components[t].at_slot(static_cast<int>(t) + 1);
    }
  }
  if (const auto* mono = std::get_if<MonomialPriceModel>(&price_.variant())) {
    if (!(mono->alpha > 0.0) || !(mono->k > 0.0)) throw ValidationError("monomial price needs alpha > 0 and k > 0");
  }

  std::unordered_set<const FeasibleSet*> seen;
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    const auto& set = agents_[i];
    if (!set) throw ValidationError(fmt::format("agent {} has no constraint set", i));
    if (set->dimension() != n) {
      throw DimensionError(fmt::format("agent {} set has dimension {}, horizon is {}", i, set->dimension(), n));
    }
    if (!seen.insert(set.get()).second) continue;
    if (!set->check_nonempty().nonempty) throw InfeasibleError(fmt::format("agent {} has an empty constraint set", i));
    radius_ = std::max(radius_, set->norm_bound());
  }
}

Vector Game::price_argument(const Vector& z) const {
  if (z.size() != horizon()) throw DimensionError("argument does not match the horizon");
  return (z + d_).cwiseQuotient(kappa_);
}

Vector Game::price_at(const Vector& z) const { return price_.evaluate(price_argument(z)); }

Matrix Game::price_jacobian_at(const Vector& z) const {
  return kappa_.cwiseInverse().asDiagonal() * price_.jacobian(price_argument(z));
}

bool Game::is_feasible(const StrategyProfile& profile) const {
  if (profile.agents() != agents() || profile.horizon() != horizon()) return false;
  for (Eigen::Index i = 0; i < agents(); ++i) {
    if (!agent_set(i).contains(profile.row(i), profile.feasibility_tol)) return false;
  }
  return true;
}

StrategyProfile Game::project(const RowMatrix& x) const {
  if (x.rows() != agents() || x.cols() != horizon()) throw DimensionError("profile shape does not match the game");
  StrategyProfile out{RowMatrix(x.rows(), x.cols())};
  for (Eigen::Index i = 0; i < agents(); ++i) out.x.row(i) = agent_set(i).project(x.row(i).transpose()).transpose();
  return out;
}

StrategyProfile Game::projected_zero() const { return project(RowMatrix::Zero(agents(), horizon())); }

AverageAction average(const StrategyProfile& profile) {
  if (profile.agents() == 0) throw DimensionError("profile has no agents");
  return {profile.x.colwise().mean().transpose()};
}

double agent_cost(const Game& game, Eigen::Index i, const StrategyProfile& profile) {
  check_agent(game, i);
  check_profile(game, profile);
  return game.price_at(average(profile).sigma).dot(profile.row(i));
}

double social_cost(const Game& game, const AverageAction& sigma) {
  const Vector load = sigma.sigma + game.d();
  return game.price_at(sigma.sigma).dot(load);
}

Vector nash_gradient(const Game& game, Eigen::Index i, const StrategyProfile& profile) {
  check_agent(game, i);
  check_profile(game, profile);
  const Vector sigma = average(profile).sigma;
  return game.price_at(sigma) + game.price_jacobian_at(sigma) * profile.row(i) / static_cast<double>(game.agents());
}

Vector wardrop_operator(const Game& game, const Vector& z) { return game.price_at(z); }

Vector social_operator(const Game& game, const Vector& z) {
  return game.price_at(z) + game.price_jacobian_at(z) * (z + game.d());
}

}  // namespace chargegame
