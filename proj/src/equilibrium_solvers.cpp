#include "chargegame/equilibrium_solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "chargegame/errors.hpp"
#include "chargegame/rng.hpp"

namespace chargegame {

namespace {

constexpr double kStepShrink = 0.5;
constexpr double kStepGrow = 1.2;
constexpr double kLipschitzRatio = 0.9;
constexpr double kGrowBelowRatio = 0.5;
constexpr double kMinStep = 1e-14;
constexpr double kMaxStep = 1e8;
// Below this population the Nash operator may fail to be monotone.
constexpr Eigen::Index kVerifySmallPopulation = 50;

RowMatrix project_rows(const Game& game, const RowMatrix& y) {
  RowMatrix out(y.rows(), y.cols());
  const auto M = static_cast<long>(y.rows());
#pragma omp parallel for schedule(static) if (M >= 64)
  for (long i = 0; i < M; ++i) {
    out.row(i) = game.agent_set(i).project(y.row(i).transpose()).transpose();
  }
  return out;
}

Vector column_mean(const RowMatrix& x) { return x.colwise().mean().transpose(); }

EquilibriumResult finish(const Game& game, EquilibriumKind kind, RowMatrix x, long iterations, bool converged) {
  EquilibriumResult r;
  r.profile = StrategyProfile{std::move(x)};
  r.sigma = average(r.profile);
  r.kind = kind;
  r.residual = natural_residual(game, kind, r.profile);
  r.iterations = iterations;
  r.social_cost_value = social_cost(game, r.sigma);
  r.converged = converged;
  r.verified = converged;
  return r;
}

// Step test at the end of an iteration: the cheap residual at the current
// step bounds the unit-step residual from above when step <= 1.
bool unit_residual_below(const Game& game, EquilibriumKind kind, const RowMatrix& x, double predictor, double step,
                         double tol) {
  if (predictor > tol) return false;
  if (step <= 1.0) return true;
  return natural_residual(game, kind, StrategyProfile{x}) <= tol;
}

EquilibriumResult extragradient(const Game& game, EquilibriumKind kind, const SolverConfig& cfg,
                                const std::optional<StrategyProfile>& start) {
  if (!(cfg.residual_tol > 0.0)) throw ValidationError("residual_tol must be positive");
  if (cfg.max_iters <= 0) throw ValidationError("max_iters must be positive");
  RowMatrix x = start ? project_rows(game, start->x) : game.projected_zero().x;
  if (x.rows() != game.agents() || x.cols() != game.horizon()) throw DimensionError("start profile has the wrong shape");

  double step = cfg.step_size ? *cfg.step_size : auto_step_size(game, kind);
  if (!(step > 0.0)) throw ValidationError("step_size must be positive");

  RowMatrix Fx = joint_operator(game, kind, x);
  long it = 0;
  for (; it < cfg.max_iters; ++it) {
    RowMatrix Fbar;
    double move = 0.0;
    double ratio = 0.0;
    while (true) {
      const RowMatrix xbar = project_rows(game, x - step * Fx);
      move = (xbar - x).norm();
      if (move == 0.0) break;
      Fbar = joint_operator(game, kind, xbar);
      ratio = step * (Fbar - Fx).norm() / move;
      if (!cfg.backtracking || ratio <= kLipschitzRatio || step <= kMinStep) break;
      step *= kStepShrink;
    }
    if (unit_residual_below(game, kind, x, move / step, step, cfg.residual_tol)) break;
    x = project_rows(game, x - step * Fbar);
    if (cfg.backtracking && ratio < kGrowBelowRatio && step < kMaxStep) step *= kStepGrow;
    Fx = joint_operator(game, kind, x);
  }
  return finish(game, kind, std::move(x), it, it < cfg.max_iters);
}

double agent_cost_with(const Game& game, const Vector& others_sum, const Vector& xi) {
  const Vector sigma = (others_sum + xi) / static_cast<double>(game.agents());
  return game.price_at(sigma).dot(xi);
}

Vector agent_gradient_with(const Game& game, const Vector& others_sum, const Vector& xi) {
  const Vector sigma = (others_sum + xi) / static_cast<double>(game.agents());
  return game.price_at(sigma) + game.price_jacobian_at(sigma) * xi / static_cast<double>(game.agents());
}

}  // namespace

std::string to_string(EquilibriumKind kind) {
  switch (kind) {
    case EquilibriumKind::Nash:
      return "nash";
    case EquilibriumKind::Wardrop:
      return "wardrop";
    case EquilibriumKind::Social:
      return "social";
  }
  return "unknown";
}

RowMatrix joint_operator(const Game& game, EquilibriumKind kind, const RowMatrix& x) {
  if (x.rows() != game.agents() || x.cols() != game.horizon()) throw DimensionError("joint action has the wrong shape");
  const Vector sigma = column_mean(x);
  RowMatrix F(x.rows(), x.cols());
  switch (kind) {
    case EquilibriumKind::Nash: {
      const Vector p = game.price_at(sigma);
      const Matrix jac = game.price_jacobian_at(sigma);
      F.noalias() = x * jac.transpose() / static_cast<double>(game.agents());
      F.rowwise() += p.transpose();
      break;
    }
    case EquilibriumKind::Wardrop:
      F.rowwise() = wardrop_operator(game, sigma).transpose();
      break;
    case EquilibriumKind::Social:
      F.rowwise() = social_operator(game, sigma).transpose();
      break;
  }
  return F;
}

double natural_residual(const Game& game, EquilibriumKind kind, const StrategyProfile& profile, double gamma) {
  if (!(gamma > 0.0)) throw ValidationError("residual step must be positive");
  const RowMatrix& x = profile.x;
  const RowMatrix moved = project_rows(game, x - gamma * joint_operator(game, kind, x));
  return (x - moved).norm() / gamma;
}

double auto_step_size(const Game& game, EquilibriumKind kind) {
  const double R = std::max(game.radius(), 1e-12);
  const auto consts = estimate_constants(game.price(), R, game.d(), 0.0, game.kappa());
  double L = consts.L_p;
  if (kind == EquilibriumKind::Nash) L *= 1.0 + 1.0 / static_cast<double>(game.agents());
  if (kind == EquilibriumKind::Social) L *= 2.0;
  if (!(L > 0.0) || !std::isfinite(L)) return 1.0;
  return 0.9 / L;
}

StrategyProfile start_profile(const Game& game, std::uint64_t seed, int index) {
  if (index <= 0) return game.projected_zero();
  const CounterRng rng(derive_seed(seed, 0x5354415254ULL, static_cast<std::uint64_t>(index)), 0);
  const double hi = std::isfinite(game.radius()) ? game.radius() : 1.0;
  RowMatrix y(game.agents(), game.horizon());
  std::uint64_t k = 0;
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index t = 0; t < y.cols(); ++t) y(i, t) = rng.uniform(k++, 0.0, hi);
  return StrategyProfile{project_rows(game, y)};
}

EquilibriumResult solve_nash(const Game& game, const SolverConfig& cfg, const std::optional<StrategyProfile>& start) {
  EquilibriumResult r = extragradient(game, EquilibriumKind::Nash, cfg, start);
  bool check = cfg.verify == VerifyMode::Always;
  if (cfg.verify == VerifyMode::Auto) {
    const double R = std::max(game.radius(), 1e-12);
    DomainBox box{game.d().cwiseQuotient(game.kappa()),
                  (game.d().array() + R).matrix().cwiseQuotient(game.kappa())};
    check = game.agents() <= kVerifySmallPopulation || !validate_assumptions(game.price(), box).strongly_monotone();
  }
  if (check && r.converged) {
    std::vector<double> gaps(static_cast<std::size_t>(game.agents()));
    const auto M = static_cast<long>(game.agents());
#pragma omp parallel for schedule(static) if (M >= 16)
    for (long i = 0; i < M; ++i) gaps[static_cast<std::size_t>(i)] = best_response_gap(game, i, r.profile).gap;
    r.max_best_response_gap = *std::max_element(gaps.begin(), gaps.end());
    r.verified = *r.max_best_response_gap <= cfg.verify_tol;
  }
  return r;
}

EquilibriumResult solve_wardrop(const Game& game, const SolverConfig& cfg, const std::optional<StrategyProfile>& start) {
  return extragradient(game, EquilibriumKind::Wardrop, cfg, start);
}

EquilibriumResult solve_social(const Game& game, const SolverConfig& cfg, const std::optional<StrategyProfile>& start) {
  if (!(cfg.residual_tol > 0.0)) throw ValidationError("residual_tol must be positive");
  if (cfg.max_iters <= 0) throw ValidationError("max_iters must be positive");
  RowMatrix x = start ? project_rows(game, start->x) : game.projected_zero().x;
  if (x.rows() != game.agents() || x.cols() != game.horizon()) throw DimensionError("start profile has the wrong shape");
  double step = cfg.step_size ? *cfg.step_size : auto_step_size(game, EquilibriumKind::Social);
  if (!(step > 0.0)) throw ValidationError("step_size must be positive");

  // Objective M * J_S(sigma(x)); its gradient in x^i is social_operator(sigma).
  const double M = static_cast<double>(game.agents());
  auto objective = [&](const RowMatrix& z) { return M * social_cost(game, {column_mean(z)}); };
  double fx = objective(x);
  RowMatrix G = joint_operator(game, EquilibriumKind::Social, x);
  long it = 0;
  for (; it < cfg.max_iters; ++it) {
    RowMatrix xn;
    double move = 0.0;
    double fn = fx;
    while (true) {
      xn = project_rows(game, x - step * G);
      const RowMatrix dx = xn - x;
      move = dx.norm();
      if (move == 0.0) break;
      fn = objective(xn);
      if (!cfg.backtracking) break;
      const double model = fx + (G.array() * dx.array()).sum() + 0.5 / step * move * move;
      if (fn <= model + 1e-15 * std::abs(fx) || step <= kMinStep) break;
      step *= kStepShrink;
    }
    if (unit_residual_below(game, EquilibriumKind::Social, x, move / step, step, cfg.residual_tol)) break;
    x = std::move(xn);
    fx = fn;
    G = joint_operator(game, EquilibriumKind::Social, x);
    if (cfg.backtracking && step < kMaxStep) step *= kStepGrow;
  }
  return finish(game, EquilibriumKind::Social, std::move(x), it, it < cfg.max_iters);
}

EquilibriumResult solve_nash_multistart(const Game& game, const SolverConfig& cfg, int starts) {
  if (starts < 1) throw ValidationError("multi-start needs at least one start");
  std::optional<EquilibriumResult> best;
  for (int s = 0; s < starts; ++s) {
    EquilibriumResult r = solve_nash(game, cfg, start_profile(game, cfg.seed, s));
    r.start_index = s;
    if (!best || (r.converged && (!best->converged || r.social_cost_value > best->social_cost_value))) {
      best = std::move(r);
    }
  }
  return *best;
}

BestResponseGap best_response_gap(const Game& game, Eigen::Index i, const StrategyProfile& profile, double tol,
                                  long max_iters) {
  if (i < 0 || i >= game.agents()) {
    throw DimensionError(fmt::format("agent index {} out of range [0, {})", i, game.agents()));
  }
  if (profile.agents() != game.agents() || profile.horizon() != game.horizon()) {
    throw DimensionError("profile shape does not match the game");
  }
  const FeasibleSet& set = game.agent_set(i);
  const Vector current = profile.row(i);
  const Vector others = profile.x.colwise().sum().transpose() - current;
  const double current_cost = agent_cost_with(game, others, current);

  BestResponseGap out;
  Vector x = current;
  double fx = current_cost;
  Vector g = agent_gradient_with(game, others, x);
  double step = 1.0;
  {
    const double R = std::max(game.radius(), 1e-12);
    const auto consts = estimate_constants(game.price(), R, game.d(), 0.0, game.kappa());
    if (consts.L_p > 0.0 && std::isfinite(consts.L_p)) step = 1.0 / consts.L_p;
  }
  long it = 0;
  for (; it < max_iters; ++it) {
    Vector xn;
    double fn = fx;
    double move = 0.0;
    while (true) {
      xn = set.project(x - step * g);
      const Vector dx = xn - x;
      move = dx.norm();
      if (move == 0.0) break;
      fn = agent_cost_with(game, others, xn);
      if (fn <= fx + g.dot(dx) + 0.5 / step * move * move + 1e-15 * std::abs(fx) || step <= kMinStep) break;
      step *= kStepShrink;
    }
    if (move / step <= tol && (step <= 1.0 || (x - set.project(x - g)).norm() <= tol)) {
      out.converged = true;
      break;
    }
    x = std::move(xn);
    fx = fn;
    g = agent_gradient_with(game, others, x);
    if (step < kMaxStep) step *= kStepGrow;
  }
  out.iterations = it;
  out.best_response = x;
  out.gap = current_cost - std::min(fx, current_cost);
  return out;
}

}  // namespace chargegame
