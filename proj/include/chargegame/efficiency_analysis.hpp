#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "chargegame/equilibrium_solvers.hpp"
#include "chargegame/ev_scenarios.hpp"
#include "chargegame/price_models.hpp"

namespace chargegame {

/// J_S(sigma_N) / J_S(sigma_S). Throws DomainError when J_S(sigma_S) <= 0.
double price_of_anarchy(const EquilibriumResult& nash, const EquilibriumResult& social);

enum class BoundRegime { LinearOrMonomial, Heterogeneous };

/// 1 + c / (J_hat sqrt(M)), or alpha_L + c / (J_hat sqrt(M)) in the
/// heterogeneous regime. Infinite when c is.
double theoretical_bound(const ConstantsEstimate& consts, long M, BoundRegime regime = BoundRegime::LinearOrMonomial,
                         double alpha_L = 1.0);

/// Regime and anarchy value implied by a price: linear and monomial prices
/// use the unit limit, other separable prices the anarchy value of their
/// component functions.
struct PriceRegime {
  BoundRegime regime = BoundRegime::LinearOrMonomial;
  std::optional<double> alpha_L;
};
PriceRegime price_regime(const PriceFunction& price);

struct SweepRecord {
  std::string case_id;
  long M = 0;
  std::uint64_t seed = 0;
  double J_nash = 0.0;
  double J_social = 0.0;
  double poa = 0.0;
  std::optional<double> bound;
  std::optional<double> alpha_L;
  double residual_nash = 0.0;
  long iterations = 0;
  long wall_time_ms = 0;
  bool converged = false;
  /// Nash was the max-cost result of several starts.
  bool multi_start = false;
};

struct Scenario {
  std::string case_id;
  std::function<Game(long M, std::uint64_t seed)> make;
};
Scenario scenario_from_case(const CaseSpec& spec);

struct SweepOptions {
  std::vector<long> M_list;
  int samples = 10;
  /// Sample s uses seed base_seed + s.
  std::uint64_t base_seed = 0;
  /// Starts per Nash solve; 1 is a single solve from the projected zero profile.
  int multi_start = 1;
  SolverConfig solver;
  bool record_timing = false;
  /// Worker threads for sweep cells; 0 leaves the OpenMP default.
  int threads = 0;
  double max_skip_rate = 0.05;
};

struct SweepSummary {
  long M = 0;
  long samples = 0;
  long skipped = 0;
  double worst_poa = 0.0;
  /// Quantiles of J_nash - J_social: min, 25%, median, 75%, max.
  double gap_min = 0.0;
  double gap_q25 = 0.0;
  double gap_median = 0.0;
  double gap_q75 = 0.0;
  double gap_max = 0.0;
  double gap_mean = 0.0;
};

struct SweepResult {
  std::vector<SweepRecord> records;  // sorted by (M, seed)
  std::vector<SweepSummary> per_M;   // sorted by M
  long skipped = 0;
  /// False when more than max_skip_rate of the cells did not converge.
  bool ok = true;
};

/// One record per (M, sample); cells run in parallel, results are ordered
/// and aggregated deterministically.
SweepResult population_sweep(const Scenario& scenario, const SweepOptions& options);

/// Per-M aggregation over converged records (sorted by M).
std::vector<SweepSummary> summarize(const std::vector<SweepRecord>& records);

struct AlignmentMinor {
  Eigen::Index j = 0;
  Eigen::Index k = 0;
  double value = 0.0;
};

struct AlignmentResult {
  bool aligned = true;
  Vector F_W;
  Vector F_S;
  /// Largest violated 2x2 minor of [F_W | F_S].
  std::optional<AlignmentMinor> certificate;
};

inline constexpr double kAlignmentTol = 1e-10;

/// Whether F_S(z_bar) is a multiple of F_W(z_bar) for the homogeneous price f.
AlignmentResult check_alignment(const ScalarPrice& f, const Vector& z_bar, const Vector& d);

struct CounterexampleSpec {
  ScalarPrice f;
  Vector z_bar;
  Vector d;
  Vector v1;
  Vector v2;
  double beta_probe = 0.0;
};

struct Counterexample {
  CounterexampleSpec spec;
  Game game;
  /// F_S(z_bar)^T (z_hat - z_bar) at z_hat = z_bar + beta_probe v2; negative.
  double inner_product = 0.0;
  /// |v1^T v2| / (|v1| |v2|)
  double orthogonality = 0.0;
};

/// Homogeneous game whose agents all share the slab {z_bar + a v1 + b v2 :
/// a, b in [0, 1]} intersected with the nonnegative orthant. z_bar solves the
/// Wardrop problem while F_S(z_bar) has a descent direction inside the slab.
/// Throws ValidationError for monomial or aligned prices and GeometryError
/// when z_bar is not strictly positive.
Counterexample build_counterexample(const ScalarPrice& f, const Vector& z_bar, const Vector& d, long M);

}  // namespace chargegame
