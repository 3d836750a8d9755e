// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "chargegame/cli_runner.hpp"
#include "support/oracles.hpp"

using namespace chargegame;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Vector uniform_vec(std::mt19937_64& rng, Eigen::Index n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

Matrix random_spd(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> g;
  Matrix B(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) B(i, j) = g(rng);
  return B * B.transpose() / static_cast<double>(n) + 0.5 * Matrix::Identity(n, n);
}

// Nonempty by construction: the constant profile 0.5 meets every row.
FeasibleSet simple_ev_set(std::mt19937_64& rng, Eigen::Index n, bool ramp) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::optional<double> r;
  if (ramp) r = 0.6 + u(rng);
  return FeasibleSet::ev_charging(uniform_vec(rng, n, 0.5, 2.0), 0.5 * u(rng) * 0.5 * static_cast<double>(n), r);
}

// Closed slots and a theta drawn up to the bisected capacity.
FeasibleSet hard_ev_set(std::mt19937_64& rng, Eigen::Index n, bool ramp) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector x_tilde = uniform_vec(rng, n, 0.5, 3.0);
  for (Eigen::Index t = 0; t < n; ++t) {
    if (u(rng) < 0.15) x_tilde(t) = 0.0;
  }
  std::optional<double> r;
  if (ramp) r = 0.3 + 1.5 * u(rng);
  double lo = 0.0;
  double hi = x_tilde.sum();
  for (int it = 0; it < 50; ++it) {
    const double mid = 0.5 * (lo + hi);
    (FeasibleSet::ev_charging(x_tilde, mid, r).check_nonempty().nonempty ? lo : hi) = mid;
  }
  return FeasibleSet::ev_charging(x_tilde, lo * u(rng), r);
}

FeasibleSet random_polytope(std::mt19937_64& rng, Eigen::Index n, Eigen::Index m) {
  const Vector center = uniform_vec(rng, n, -1.0, 1.0);
  Matrix A(m + 2 * n, n);
  Vector b(m + 2 * n);
  for (Eigen::Index i = 0; i < m; ++i) {
    A.row(i) = uniform_vec(rng, n, -1.0, 1.0).transpose();
    b(i) = A.row(i).dot(center) + uniform_vec(rng, 1, 0.05, 1.0)(0);
  }
  for (Eigen::Index t = 0; t < n; ++t) {
    A.row(m + t) = Vector::Unit(n, t).transpose();
    b(m + t) = center(t) + 2.0;
    A.row(m + n + t) = -Vector::Unit(n, t).transpose();
    b(m + n + t) = -center(t) + 2.0;
  }
  return FeasibleSet::polytope(A, b);
}

FeasibleSet random_set(std::mt19937_64& rng, int kind, Eigen::Index n) {
  switch (kind % 5) {
    case 0:
      return hard_ev_set(rng, n, true);
    case 1:
      return hard_ev_set(rng, n, false);
    case 2:
      return random_polytope(rng, n, n + 2);
    case 3: {
      const Vector lo = uniform_vec(rng, n, -1.0, 0.0);
      return FeasibleSet::box(lo, lo + uniform_vec(rng, n, 0.1, 2.0));
    }
    default: {
      const Vector v1 = uniform_vec(rng, n, 0.5, 2.0);
      Vector w = uniform_vec(rng, n, -1.0, 1.0);
      w -= w.dot(v1) / v1.squaredNorm() * v1;
      return FeasibleSet::affine_slab(uniform_vec(rng, n, 1.0, 2.0), v1, w);
    }
  }
}

// One (Nash, Wardrop or social) instance feeding the bound checks.
struct BoundSample {
  std::string label;
  double poa = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> bound;
  double sigma_gap = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> sigma_gap_bound;
};

BoundSample bound_sample(std::string label, const Game& g, const EquilibriumResult& nash,
                         const EquilibriumResult& social, const EquilibriumResult* wardrop) {
  BoundSample s;
  s.label = std::move(label);
  s.poa = nash.social_cost_value / social.social_cost_value;
  const auto consts = estimate_constants(g.price(), std::max(g.radius(), 1e-12), g.d(), social.social_cost_value, g.kappa());
  const PriceRegime regime = price_regime(g.price());
  if (consts.poa_bound_defined()) {
    const double b = theoretical_bound(consts, g.agents(), regime.regime, regime.alpha_L.value_or(1.0));
    if (std::isfinite(b)) s.bound = b;
  }
  if (wardrop) {
    s.sigma_gap = (nash.sigma.sigma - wardrop->sigma.sigma).norm();
    if (consts.monotone()) {
      const double b = consts.average_gap_bound(g.agents());
      if (std::isfinite(b)) s.sigma_gap_bound = b;
    }
  }
  return s;
}

std::vector<BoundSample> g_bound_samples;
int g_failures = 0;

void report(int id, bool pass, double secs, double limit_secs, const std::string& detail) {
  const bool in_time = secs <= limit_secs;
  if (!pass || !in_time) ++g_failures;
  fmt::print("criterion {}: {} ({:.1f} s, limit {:.0f} s) {}{}\n", id, pass && in_time ? "PASS" : "FAIL", secs,
             limit_secs, detail, in_time ? "" : " [over time limit]");
  std::fflush(stdout);
}

SolverConfig tight_solver() {
  SolverConfig cfg;
  cfg.residual_tol = 1e-9;
  cfg.max_iters = 200000;
  return cfg;
}

void linear_optimality() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<int> Md(2, 50);
  std::uniform_int_distribution<int> nd(2, 24);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  int unconverged = 0;
  for (int game = 0; game < 50; ++game) {
    const int M = Md(rng);
    const int n = nd(rng);
    const Matrix C = random_spd(rng, n);
    std::vector<SetRef> sets;
    for (int i = 0; i < M; ++i) sets.push_back(std::make_shared<FeasibleSet>(simple_ev_set(rng, n, u(rng) < 0.5)));
    const Game g(sets, PriceFunction::linear(C), uniform_vec(rng, n, 0.0, 1.0));
    const SolverConfig cfg = tight_solver();
    const auto ward = solve_wardrop(g, cfg);
    const auto social = solve_social(g, cfg);
    const auto nash = solve_nash(g, cfg);
    if (!ward.converged || !social.converged || !nash.converged) {
      ++unconverged;
      continue;
    }
    worst = std::max(worst, std::abs(ward.social_cost_value / social.social_cost_value - 1.0));
    g_bound_samples.push_back(bound_sample(fmt::format("linear game {}", game), g, nash, social, &ward));
  }
  report(1, unconverged == 0 && worst <= 1e-5, seconds_since(t0), 120,
         fmt::format("max |J_S(sigma_W)/J_S(sigma_S) - 1| = {:.3g} (tol 1e-5), unconverged = {}", worst, unconverged));
}

void monomial_asymptotics() {
  const auto t0 = Clock::now();
  SweepOptions opt;
  opt.M_list = {5, 10, 20, 50, 100, 200};
  opt.samples = 10;
  opt.base_seed = 0;
  const CaseSpec spec = case_spec(1);
  const auto result = population_sweep(scenario_from_case(spec), opt);
  constexpr double kNoise = 0.01;
  bool poa_trend = true;
  bool gap_trend = true;
  for (std::size_t k = 1; k < result.per_M.size(); ++k) {
    poa_trend = poa_trend && result.per_M[k].worst_poa <= result.per_M[k - 1].worst_poa + kNoise;
    gap_trend = gap_trend && result.per_M[k].gap_mean <= result.per_M[k - 1].gap_mean + kNoise;
  }
  const double poa_200 = result.per_M.back().worst_poa;
  std::string trace;
  for (const auto& s : result.per_M) trace += fmt::format(" M={}:{:.4f}/{:.4f}", s.M, s.worst_poa, s.gap_mean);

  // Wardrop partners of every sweep cell for the average-gap inequality.
  for (const auto& r : result.records) {
    if (!r.converged) continue;
    const Game g = generate_fleet(spec, r.M, r.seed);
    SolverConfig cfg;
    cfg.seed = r.seed;
    const auto nash = solve_nash(g, cfg);
    const auto ward = solve_wardrop(g, cfg);
    const auto social = solve_social(g, cfg);
    if (!nash.converged || !ward.converged || !social.converged) continue;
    g_bound_samples.push_back(bound_sample(fmt::format("case 1 M={} seed={}", r.M, r.seed), g, nash, social, &ward));
  }
  report(2, result.ok && result.skipped == 0 && poa_trend && gap_trend && poa_200 <= 1.05, seconds_since(t0), 600,
         fmt::format("worst PoA nonincreasing={} mean gap nonincreasing={} PoA(200)={:.5f} (<= 1.05), skipped={};{}",
                     poa_trend, gap_trend, poa_200, result.skipped, trace));
}

void heterogeneous_limit() {
  const auto t0 = Clock::now();
  const Game g = generate_fleet(case_spec(2), 1000, 0);
  const SolverConfig cfg;
  const auto nash = solve_nash(g, cfg);
  const auto social = solve_social(g, cfg);
  const double poa = nash.social_cost_value / social.social_cost_value;
  AnarchyClass affine;
  affine.kind = AnarchyClass::Kind::Affine;
  const double alpha = anarchy_value(affine).alpha;
  const bool pass = nash.converged && social.converged && poa >= 1.25 && poa <= 1.34 && std::abs(alpha - 4.0 / 3.0) <= 1e-3;
  if (nash.converged && social.converged) g_bound_samples.push_back(bound_sample("case 2 M=1000", g, nash, social, nullptr));
  report(3, pass, seconds_since(t0), 300,
         fmt::format("PoA(1000) = {:.5f} in [1.25, 1.34], affine anarchy value = {:.6f} (4/3 +- 1e-3)", poa, alpha));
}

void finite_m_bounds() {
  const auto t0 = Clock::now();
  int bound_checked = 0;
  int bound_violations = 0;
  int gap_checked = 0;
  int gap_violations = 0;
  std::string first_violation;
  for (const auto& s : g_bound_samples) {
    if (s.bound) {
      ++bound_checked;
      if (!(s.poa <= *s.bound)) {
        ++bound_violations;
        if (first_violation.empty()) first_violation = fmt::format(" first: {} PoA {} > {}", s.label, s.poa, *s.bound);
      }
    }
    if (s.sigma_gap_bound) {
      ++gap_checked;
      if (!(s.sigma_gap <= *s.sigma_gap_bound)) {
        ++gap_violations;
        if (first_violation.empty()) {
          first_violation = fmt::format(" first: {} gap {} > {}", s.label, s.sigma_gap, *s.sigma_gap_bound);
        }
      }
    }
  }
  report(4, bound_checked > 0 && gap_checked > 0 && bound_violations == 0 && gap_violations == 0, seconds_since(t0), 60,
         fmt::format("PoA <= bound on {}/{} computable instances, average gap on {}/{} pairs ({} instances total){}",
                     bound_checked - bound_violations, bound_checked, gap_checked - gap_violations, gap_checked,
                     g_bound_samples.size(), first_violation));
}

void counterexample() {
  const auto t0 = Clock::now();
  const auto f = ScalarPrice::affine(1.0, 1.0);
  const Vector z_bar = (Vector(2) << 1.0, 2.0).finished();
  const Vector d = Vector::Ones(2);
  bool pass = true;
  double delta = 0.0;
  std::string trace;
  for (long M : {10L, 100L, 1000L}) {
    const auto cx = build_counterexample(f, z_bar, d, M);
    if (M == 10) {
      pass = pass && cx.orthogonality <= 1e-10 && cx.inner_product < 0.0;
      trace += fmt::format("orthogonality {:.2g}, inner product {:.4f};", cx.orthogonality, cx.inner_product);
    }
    const auto nash = solve_nash(cx.game, {});
    const auto social = solve_social(cx.game, {});
    pass = pass && nash.converged && social.converged;
    const double poa = nash.social_cost_value / social.social_cost_value;
    if (M == 10) delta = 0.5 * (poa - 1.0);
    pass = pass && delta > 0.0 && poa >= 1.0 + delta;
    trace += fmt::format(" PoA({}) = {:.8f}", M, poa);
  }
  report(5, pass, seconds_since(t0), 180, fmt::format("{}; delta = {:.3g}", trace, delta));
}

double grid_best_cost(const Game& g, Eigen::Index i, const StrategyProfile& p, double step, double hi) {
  const Eigen::Index M = g.agents();
  const Vector others = p.x.colwise().sum().transpose() - p.row(i);
  double best = std::numeric_limits<double>::infinity();
  const int steps = static_cast<int>(std::round(hi / step));
  Vector x(2);
  for (int a = 0; a <= steps; ++a) {
    for (int b = 0; b <= steps; ++b) {
      x << a * step, b * step;
      if (!g.agent_set(i).contains(x, 1e-12)) continue;
      best = std::min(best, g.price_at((others + x) / static_cast<double>(M)).dot(x));
    }
  }
  return best;
}

void oracle_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1006);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_gap = -std::numeric_limits<double>::infinity();
  bool converged = true;
  for (int game = 0; game < 20; ++game) {
    std::vector<SetRef> sets;
    for (int i = 0; i < 2; ++i) {
      sets.push_back(std::make_shared<FeasibleSet>(FeasibleSet::ev_charging(uniform_vec(rng, 2, 0.5, 1.0), 0.2 + 0.7 * u(rng))));
    }
    const PriceFunction price = game % 2 == 0 ? PriceFunction::monomial(0.5 + u(rng), 1.0 + 3.0 * u(rng))
                                              : PriceFunction::linear(random_spd(rng, 2));
    const Game g(sets, price, uniform_vec(rng, 2, 0.1, 1.0));
    const auto nash = solve_nash(g, {});
    converged = converged && nash.converged;
    for (Eigen::Index i = 0; i < 2; ++i) {
      worst_gap = std::max(worst_gap, agent_cost(g, i, nash.profile) - grid_best_cost(g, i, nash.profile, 1e-3, 1.0));
    }
  }
  double worst_proj = 0.0;
  int oracle_failures = 0;
  for (int pair = 0; pair < 1000; ++pair) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(u(rng) * 7.0);
    const FeasibleSet set = random_set(rng, pair, n);
    const Vector y = uniform_vec(rng, n, -3.0, 4.0);
    const auto ref = oracle::project_ldp(set.halfspace_matrix(), set.halfspace_rhs(), y);
    if (!ref) {
      ++oracle_failures;
      continue;
    }
    worst_proj = std::max(worst_proj, (set.project(y) - *ref).lpNorm<Eigen::Infinity>());
  }
  report(6, converged && worst_gap <= 5e-3 && worst_proj <= 1e-8 && oracle_failures == 0, seconds_since(t0), 600,
         fmt::format("max grid best-response gap = {:.3g} (<= 5e-3), max projection deviation = {:.3g} (<= 1e-8), "
                     "oracle failures = {}",
                     worst_gap, worst_proj, oracle_failures));
}

double relative_error(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

Game random_game(std::mt19937_64& rng, int family, Eigen::Index M, Eigen::Index n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PriceFunction price = PriceFunction::monomial(0.1 + u(rng), 1.0 + 3.0 * u(rng));
  if (family == 0) price = PriceFunction::linear(random_spd(rng, n));
  if (family == 2) {
    std::vector<ScalarPrice> comps;
    for (Eigen::Index t = 0; t < n; ++t) {
      comps.push_back(t % 2 == 0 ? ScalarPrice::affine(0.2 + u(rng), u(rng)) : ScalarPrice::monomial(0.2 + u(rng), 2.0));
    }
    price = PriceFunction::heterogeneous(comps);
  }
  std::vector<SetRef> sets;
  for (Eigen::Index i = 0; i < M; ++i) sets.push_back(std::make_shared<FeasibleSet>(simple_ev_set(rng, n, true)));
  return Game(sets, price, uniform_vec(rng, n, 0.1, 1.0), uniform_vec(rng, n, 0.5, 2.0));
}

void numerical_hygiene() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1007);
  double fd_worst = 0.0;
  for (int trial = 0; trial < 60; ++trial) {
    const int family = trial % 3;
    const Eigen::Index M = 1 + trial % 4;
    const Game g = random_game(rng, family, M, 4);
    RowMatrix x(M, 4);
    for (Eigen::Index i = 0; i < M; ++i) x.row(i) = uniform_vec(rng, 4, 0.1, 2.0).transpose();
    const StrategyProfile p{x};
    const Vector y = uniform_vec(rng, 4, 0.3, 2.0);
    const auto price_of = [&](const Vector& v) { return g.price().evaluate(v); };
    fd_worst = std::max(fd_worst, relative_error(g.price().jacobian(y), oracle::fd_jacobian(price_of, y)));
    for (Eigen::Index i = 0; i < M; ++i) {
      const auto cost_of = [&](const Vector& xi) {
        StrategyProfile q = p;
        q.x.row(i) = xi.transpose();
        return agent_cost(g, i, q);
      };
      fd_worst = std::max(fd_worst, relative_error(nash_gradient(g, i, p), oracle::fd_gradient(cost_of, p.row(i))));
    }
    const Vector z = average(p).sigma;
    const auto js_of = [&](const Vector& v) { return social_cost(g, AverageAction{v}); };
    fd_worst = std::max(fd_worst, relative_error(social_operator(g, z), oracle::fd_gradient(js_of, z)));
  }

  double idem_worst = 0.0;
  double expand_worst = 0.0;
  for (int trial = 0; trial < 300; ++trial) {
    const Eigen::Index n = 2 + trial % 8;
    const FeasibleSet set = random_set(rng, trial, n);
    const Vector a = uniform_vec(rng, n, -3.0, 4.0);
    const Vector b = uniform_vec(rng, n, -3.0, 4.0);
    const Vector pa = set.project(a);
    const Vector pb = set.project(b);
    idem_worst = std::max(idem_worst, (set.project(pa) - pa).norm());
    expand_worst = std::max(expand_worst, (pa - pb).norm() - (a - b).norm());
  }

  double unique_worst = 0.0;
  bool ward_converged = true;
  for (const auto& [id, M] : {std::pair{1, 40L}, std::pair{2, 30L}}) {
    const Game g = generate_fleet(case_spec(id), M, 7);
    std::optional<Vector> first;
    for (std::size_t s = 0; s < 5; ++s) {
      SolverConfig cfg = tight_solver();
      const auto w = solve_wardrop(g, cfg, start_profile(g, 7, s));
      ward_converged = ward_converged && w.converged;
      if (!first) {
        first = w.sigma.sigma;
      } else {
        unique_worst = std::max(unique_worst, (w.sigma.sigma - *first).norm());
      }
    }
  }

  SweepOptions opt;
  opt.M_list = {4, 12, 30};
  opt.samples = 3;
  opt.base_seed = 99;
  const Scenario scenario = scenario_from_case(case_spec(1));
  const std::string a = cli::sweep_csv(population_sweep(scenario, opt).records);
  opt.threads = 1;
  const std::string b = cli::sweep_csv(population_sweep(scenario, opt).records);
  const bool deterministic = a == b;

  const bool pass = fd_worst <= 1e-5 && idem_worst <= 1e-10 && expand_worst <= 1e-10 && ward_converged &&
                    unique_worst <= 1e-6 && deterministic;
  report(7, pass, seconds_since(t0), 600,
         fmt::format("finite differences {:.2g} (<= 1e-5), idempotence {:.2g}, expansion {:.2g}, Wardrop spread over 5 "
                     "starts {:.2g} (<= 1e-6), sweep determinism {}",
                     fd_worst, idem_worst, expand_worst, unique_worst, deterministic ? "identical" : "DIFFERS"));
}

template <typename F>
void guarded(int id, F&& body) {
  const auto t0 = Clock::now();
  try {
    body();
  } catch (const std::exception& e) {
    report(id, false, seconds_since(t0), 0, fmt::format("threw: {}", e.what()));
  }
}

}  // namespace

int main() {
  guarded(1, linear_optimality);
  guarded(2, monomial_asymptotics);
  guarded(3, heterogeneous_limit);
  guarded(4, finite_m_bounds);
  guarded(5, counterexample);
  guarded(6, oracle_equivalence);
  guarded(7, numerical_hygiene);
  fmt::print("{} of 7 criteria passed\n", 7 - g_failures);
  return g_failures == 0 ? 0 : 1;
}
