#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "chargegame/game_core.hpp"

namespace chargegame {

enum class EquilibriumKind { Nash, Wardrop, Social };

std::string to_string(EquilibriumKind kind);

/// When to confirm a Nash result through best-response gaps.
enum class VerifyMode { Auto, Always, Never };

struct SolverConfig {
  /// Initial step; nullopt resolves to 0.9 / L from the constants estimate.
  std::optional<double> step_size;
  long max_iters = 50000;
  double residual_tol = 1e-7;
  std::uint64_t seed = 0;
  /// Adapt the step to the local Lipschitz ratio (halve / grow).
  bool backtracking = true;
  VerifyMode verify = VerifyMode::Auto;
  /// Tolerance on the best-response gap for `verified`.
  double verify_tol = 1e-6;
};

struct EquilibriumResult {
  StrategyProfile profile;
  AverageAction sigma;
  EquilibriumKind kind = EquilibriumKind::Nash;
  /// Natural-map residual with unit step on the joint action.
  double residual = 0.0;
  long iterations = 0;
  double social_cost_value = 0.0;
  bool converged = false;
  bool verified = false;
  /// Largest best-response gap, when it was computed.
  std::optional<double> max_best_response_gap;
  /// Start index that produced this result in a multi-start run.
  int start_index = 0;
};

/// Joint operator whose VI on the product of agent sets characterizes each
/// solution concept. Row i holds agent i's block:
///   Nash:    nash_gradient(i, x)
///   Wardrop: wardrop_operator(sigma)
///   Social:  social_operator(sigma), i.e. M times the gradient of J_S(sigma(x)) in x^i.
RowMatrix joint_operator(const Game& game, EquilibriumKind kind, const RowMatrix& x);

/// ||x - Proj_X(x - gamma F(x))|| / gamma over the joint action.
double natural_residual(const Game& game, EquilibriumKind kind, const StrategyProfile& profile, double gamma = 1.0);

/// Initial step used when SolverConfig::step_size is unset.
double auto_step_size(const Game& game, EquilibriumKind kind);

/// Start profile number `index`: 0 is the projected zero profile, later
/// indices project seeded uniform draws on [0, radius].
StrategyProfile start_profile(const Game& game, std::uint64_t seed, int index);

EquilibriumResult solve_nash(const Game& game, const SolverConfig& cfg = {},
                             const std::optional<StrategyProfile>& start = std::nullopt);
EquilibriumResult solve_wardrop(const Game& game, const SolverConfig& cfg = {},
                                const std::optional<StrategyProfile>& start = std::nullopt);
EquilibriumResult solve_social(const Game& game, const SolverConfig& cfg = {},
                               const std::optional<StrategyProfile>& start = std::nullopt);

/// Runs solve_nash from `starts` start profiles and returns the converged
/// result with the largest social cost (the first one if none converged).
EquilibriumResult solve_nash_multistart(const Game& game, const SolverConfig& cfg, int starts = 5);

struct BestResponseGap {
  double gap = 0.0;
  bool converged = false;
  long iterations = 0;
  Vector best_response;
};

/// J^i(current) - J^i(best response), with agent i's subproblem solved by
/// projected gradient while the others stay fixed.
BestResponseGap best_response_gap(const Game& game, Eigen::Index i, const StrategyProfile& profile,
                                  double tol = 1e-10, long max_iters = 20000);

}  // namespace chargegame
