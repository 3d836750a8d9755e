#include "chargegame/efficiency_analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <fmt/format.h>

#include "chargegame/errors.hpp"

namespace chargegame {

namespace {

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

double price_of_anarchy(const EquilibriumResult& nash, const EquilibriumResult& social) {
  if (!(social.social_cost_value > 0.0)) {
    throw DomainError(fmt::format("price of anarchy undefined: social cost {} is not positive", social.social_cost_value));
  }
  return nash.social_cost_value / social.social_cost_value;
}

double theoretical_bound(const ConstantsEstimate& consts, long M, BoundRegime regime, double alpha_L) {
  if (!(consts.J_hat > 0.0)) throw ValidationError("theoretical bound needs J_hat > 0");
  if (M <= 0) throw ValidationError("M must be positive");
  const double limit = regime == BoundRegime::Heterogeneous ? alpha_L : 1.0;
  return limit + consts.c / (consts.J_hat * std::sqrt(static_cast<double>(M)));
}

PriceRegime price_regime(const PriceFunction& price) {
  PriceRegime out;
  if (const auto* het = std::get_if<HeterogeneousPriceModel>(&price.variant())) {
    AnarchyClass cls;
    for (const auto& c : het->components) {
      for (auto& m : c.members()) cls.members.push_back(std::move(m));
    }
    out.regime = BoundRegime::Heterogeneous;
    out.alpha_L = anarchy_value(cls).alpha;
  }
  return out;
}

Scenario scenario_from_case(const CaseSpec& spec) {
  spec.validate();
  return Scenario{spec.case_id, [spec](long M, std::uint64_t seed) { return generate_fleet(spec, M, seed); }};
}

std::vector<SweepSummary> summarize(const std::vector<SweepRecord>& records) {
  std::vector<SweepSummary> out;
  std::size_t begin = 0;
  while (begin < records.size()) {
    std::size_t end = begin;
    while (end < records.size() && records[end].M == records[begin].M) ++end;
    SweepSummary s;
    s.M = records[begin].M;
    s.samples = static_cast<long>(end - begin);
    std::vector<double> gaps;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t k = begin; k < end; ++k) {
      const auto& r = records[k];
      if (!r.converged) {
        ++s.skipped;
        continue;
      }
      worst = std::max(worst, r.poa);
      gaps.push_back(r.J_nash - r.J_social);
    }
    if (!gaps.empty()) {
      s.worst_poa = worst;
      s.gap_min = quantile(gaps, 0.0);
      s.gap_q25 = quantile(gaps, 0.25);
      s.gap_median = quantile(gaps, 0.5);
      s.gap_q75 = quantile(gaps, 0.75);
      s.gap_max = quantile(gaps, 1.0);
      double sum = 0.0;
      for (double g : gaps) sum += g;
      s.gap_mean = sum / static_cast<double>(gaps.size());
    } else {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      s.worst_poa = s.gap_min = s.gap_q25 = s.gap_median = s.gap_q75 = s.gap_max = s.gap_mean = nan;
    }
    out.push_back(s);
    begin = end;
  }
  return out;
}

SweepResult population_sweep(const Scenario& scenario, const SweepOptions& options) {
  if (options.M_list.empty()) throw ValidationError("M_list is empty");
  if (options.samples <= 0) throw ValidationError("samples must be positive");
  if (options.multi_start <= 0) throw ValidationError("multi_start must be positive");
  std::vector<long> Ms = options.M_list;
  for (long M : Ms) {
    if (M <= 0) throw ValidationError("every M must be positive");
  }
  std::sort(Ms.begin(), Ms.end());
  Ms.erase(std::unique(Ms.begin(), Ms.end()), Ms.end());

  struct Cell {
    long M;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (long M : Ms)
    for (int s = 0; s < options.samples; ++s) cells.push_back({M, options.base_seed + static_cast<std::uint64_t>(s)});

  std::vector<SweepRecord> records(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  const auto count = static_cast<long>(cells.size());
  int threads = 1;
#ifdef _OPENMP
  threads = options.threads > 0 ? options.threads : omp_get_max_threads();
#endif
  (void)threads;

#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (long k = 0; k < count; ++k) {
    try {
      const auto& cell = cells[static_cast<std::size_t>(k)];
      const auto t0 = std::chrono::steady_clock::now();
      const Game game = scenario.make(cell.M, cell.seed);
      SolverConfig cfg = options.solver;
      cfg.seed = cell.seed;
      const EquilibriumResult nash =
          options.multi_start > 1 ? solve_nash_multistart(game, cfg, options.multi_start) : solve_nash(game, cfg);
      const EquilibriumResult social = solve_social(game, cfg);

      SweepRecord r;
      r.case_id = scenario.case_id;
      r.M = cell.M;
      r.seed = cell.seed;
      r.J_nash = nash.social_cost_value;
      r.J_social = social.social_cost_value;
      r.residual_nash = nash.residual;
      r.iterations = nash.iterations;
      r.multi_start = options.multi_start > 1;
      r.converged = nash.converged && social.converged && social.social_cost_value > 0.0;
      r.poa = r.converged ? price_of_anarchy(nash, social) : std::numeric_limits<double>::quiet_NaN();

      const PriceRegime regime = price_regime(game.price());
      r.alpha_L = regime.alpha_L;
      if (r.converged) {
        const auto consts =
            estimate_constants(game.price(), std::max(game.radius(), 1e-12), game.d(), r.J_social, game.kappa());
        if (consts.poa_bound_defined()) {
          const double b = theoretical_bound(consts, cell.M, regime.regime, regime.alpha_L.value_or(1.0));
          if (std::isfinite(b)) r.bound = b;
        }
      }
      if (options.record_timing) {
        r.wall_time_ms = static_cast<long>(
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count());
      }
      records[static_cast<std::size_t>(k)] = std::move(r);
    } catch (...) {
      errors[static_cast<std::size_t>(k)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  SweepResult out;
  out.records = std::move(records);
  out.per_M = summarize(out.records);
  for (const auto& r : out.records) {
    if (!r.converged) ++out.skipped;
  }
  out.ok = static_cast<double>(out.skipped) <= options.max_skip_rate * static_cast<double>(out.records.size());
  return out;
}

AlignmentResult check_alignment(const ScalarPrice& f, const Vector& z_bar, const Vector& d) {
  f.validate();
  const Eigen::Index n = z_bar.size();
  if (n == 0 || d.size() != n) throw DimensionError("z_bar and d must have equal, positive length");
  if ((z_bar.array() <= 0.0).any() || (d.array() <= 0.0).any()) {
    throw ValidationError("z_bar and d must be strictly positive");
  }
  AlignmentResult out;
  out.F_W.resize(n);
  out.F_S.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const int slot = static_cast<int>(t) + 1;
    const double y = z_bar(t) + d(t);
    out.F_W(t) = f.value(y, slot);
    out.F_S(t) = out.F_W(t) + f.derivative(y, slot) * y;
  }
  if (out.F_W.norm() == 0.0) throw DomainError("F_W vanishes at z_bar; the price must be positive");
  double worst = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = j + 1; k < n; ++k) {
      const double a = out.F_W(j) * out.F_S(k);
      const double b = out.F_W(k) * out.F_S(j);
      const double minor = a - b;
      const double scale = std::abs(a) + std::abs(b);
      const double rel = scale > 0.0 ? std::abs(minor) / scale : 0.0;
      if (rel > kAlignmentTol && rel > worst) {
        worst = rel;
        out.certificate = AlignmentMinor{j, k, minor};
      }
    }
  }
  out.aligned = !out.certificate.has_value();
  return out;
}

Counterexample build_counterexample(const ScalarPrice& f, const Vector& z_bar, const Vector& d, long M) {
  if (M <= 0) throw ValidationError("M must be positive");
  if (f.as_positive_monomial()) {
    throw ValidationError("refused: monomial prices keep Wardrop equilibria socially optimal");
  }
  if ((z_bar.array() <= 0.0).any()) throw GeometryError("z_bar must be strictly positive");
  const AlignmentResult align = check_alignment(f, z_bar, d);
  if (align.aligned) throw ValidationError("refused: F_S(z_bar) is aligned with F_W(z_bar)");

  CounterexampleSpec spec;
  spec.f = f;
  spec.z_bar = z_bar;
  spec.d = d;
  spec.v1 = align.F_W;
  spec.v2 = align.F_W.dot(align.F_S) * align.F_W - align.F_W.squaredNorm() * align.F_S;

  // Largest step keeping z_bar + beta v2 > 0, halved and capped at the slab edge.
  double reach = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t < z_bar.size(); ++t) {
    if (spec.v2(t) < 0.0) reach = std::min(reach, -z_bar(t) / spec.v2(t));
  }
  if (!(reach > 0.0)) throw GeometryError("no positive step keeps z_bar + beta v2 in the open orthant");
  spec.beta_probe = std::min(1.0, 0.5 * reach);

  const Eigen::Index n = z_bar.size();
  auto set = std::make_shared<FeasibleSet>(FeasibleSet::affine_slab(z_bar, spec.v1, spec.v2));
  std::vector<SetRef> sets(static_cast<std::size_t>(M), set);
  Game game(std::move(sets), PriceFunction::homogeneous(f, static_cast<int>(n)), d);

  const double inner = align.F_S.dot(spec.beta_probe * spec.v2);
  const double ortho = std::abs(spec.v1.dot(spec.v2)) / (spec.v1.norm() * spec.v2.norm());
  return Counterexample{std::move(spec), std::move(game), inner, ortho};
}

}  // namespace chargegame
