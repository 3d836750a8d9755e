#include "chargegame/ev_scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "chargegame/errors.hpp"
#include "chargegame/rng.hpp"

namespace chargegame {

int slot_start_hour(int slot) { return ((kFirstSlotHour + slot - 1) % 24 + 24) % 24; }

int slot_for_hour(int hour) { return ((hour - kFirstSlotHour) % 24 + 24) % 24 + 1; }

FeasibleSet EVAgentParams::to_set(int n) const {
  if (!(b > 0.0)) throw ValidationError("charging efficiency b must be positive");
  if (t_min < 1 || t_max > n || t_min > t_max) {
    throw ValidationError(fmt::format("window [{}, {}] is not inside 1..{}", t_min, t_max, n));
  }
  Vector x_tilde = Vector::Zero(n);
  for (int t = t_min; t <= t_max; ++t) x_tilde(t - 1) = x_tilde_level;
  const double th = theta();
  if (th < 0.0) throw ValidationError("desired charge is below the initial charge");
  return FeasibleSet::ev_charging(x_tilde, th, r);
}

DemandProfile demand_profile(const DemandSelection& selection, int n, const Vector& kappa) {
  if (n <= 0) throw ValidationError("horizon must be positive");
  DemandProfile out;
  out.kappa = kappa.size() == 0 ? Vector::Ones(n) : kappa;
  if (out.kappa.size() != n) throw DimensionError("kappa does not match the horizon");
  if (!out.kappa.allFinite() || (out.kappa.array() <= 0.0).any()) throw ValidationError("kappa must be positive");

  if (std::holds_alternative<ZeroDemand>(selection)) {
    out.d = Vector::Zero(n);
  } else if (const auto* v = std::get_if<SyntheticValley>(&selection)) {
    if (!(v->trough >= 0.0) || !(v->peak >= v->trough)) throw ValidationError("valley needs 0 <= trough <= peak");
    out.d.resize(n);
    for (int s = 1; s <= n; ++s) {
      const double phase = 2.0 * std::numbers::pi * (slot_start_hour(s) - v->trough_hour) / 24.0;
      out.d(s - 1) = v->trough + (v->peak - v->trough) * 0.5 * (1.0 - std::cos(phase));
    }
  } else {
    const auto& file = std::get<DemandFile>(selection);
    std::ifstream in(file.path);
    if (!in) throw ValidationError(fmt::format("cannot read demand file '{}'", file.path));
    std::vector<double> values;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      std::istringstream ls(line);
      double value = 0.0;
      std::string rest;
      if (!(ls >> value) || (ls >> rest)) {
        throw ValidationError(fmt::format("{}:{}: expected one number", file.path, lineno));
      }
      if (!(value >= 0.0) || !std::isfinite(value)) {
        throw ValidationError(fmt::format("{}:{}: demand must be finite and nonnegative", file.path, lineno));
      }
      values.push_back(value);
    }
    if (values.size() != 24) throw ValidationError(fmt::format("{}: expected 24 values, found {}", file.path, values.size()));
    if (n != 24) throw DimensionError("demand files describe a 24-slot horizon");
    out.d = Eigen::Map<const Vector>(values.data(), 24);
  }
  return out;
}

void write_demand_csv(const std::string& path, const Vector& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(fmt::format("cannot write demand file '{}'", path));
  for (Eigen::Index t = 0; t < d.size(); ++t) out << fmt::format("{:.17g}\n", d(t));
}

void CaseSpec::validate() const {
  if (horizon <= 0) throw ValidationError("horizon must be positive");
  if (window_first < 1 || window_last > horizon || window_first > window_last) {
    throw ValidationError(fmt::format("window [{}, {}] is not inside 1..{}", window_first, window_last, horizon));
  }
  if (!(eta.lo <= eta.hi) || !(eta.lo >= 0.0)) throw ValidationError("eta distribution needs 0 <= lo <= hi");
  if (!(b > 0.0)) throw ValidationError("b must be positive");
  if (!(s1 >= 0.0) || s1 > eta.lo) throw ValidationError("s1 must be in [0, eta.lo]");
  if (ramp && (!(ramp->lo > 0.0) || !(ramp->lo <= ramp->hi))) throw ValidationError("ramp distribution needs 0 < lo <= hi");
  if (!(x_tilde_level > 0.0)) throw ValidationError("x_tilde level must be positive");
  if (const auto dim = price.dimension(); dim && *dim != horizon) throw DimensionError("price does not match the horizon");
  if (kappa.size() != 0 && kappa.size() != horizon) throw DimensionError("kappa does not match the horizon");
}

PriceFunction overnight_schedule_price(int horizon) {
  const int last_flat = slot_for_hour(1);     // slot starting at 1am
  const int last_linear = slot_for_hour(10);  // slot starting at 10am
  const auto schedule = ScalarPrice::schedule({
      {{1, last_flat}, ScalarPrice::constant(0.15)},
      {{last_flat + 1, last_linear}, ScalarPrice::affine(0.15, 0.0)},
      {{last_linear + 1, horizon}, ScalarPrice::constant(0.15)},
  });
  return PriceFunction::homogeneous(schedule, horizon);
}

CaseSpec case_spec(int id) {
  CaseSpec spec;
  spec.case_id = std::to_string(id);
  switch (id) {
    case 1:
      spec.price = PriceFunction::monomial(0.15, 3.0);
      spec.eta = {5.0, 15.0};
      spec.window = WindowMode::RandomEndpoints;
      spec.ramp = Uniform{1.0, 7.0};
      spec.demand = SyntheticValley{};
      break;
    case 2:
      spec.price = overnight_schedule_price();
      spec.eta = {9.0, 9.0};
      break;
    case 3:
      spec.price = overnight_schedule_price();
      spec.eta = {9.0, 9.0};
      spec.demand = SyntheticValley{};
      break;
    case 4:
      spec.price = overnight_schedule_price();
      spec.eta = {5.0, 13.0};
      break;
    default:
      throw ValidationError(fmt::format("unknown case id {}", id));
  }
  return spec;
}

Fleet generate_fleet_params(const CaseSpec& spec, long M, std::uint64_t seed) {
  spec.validate();
  if (M <= 0) throw ValidationError("M must be positive");
  Fleet fleet;
  fleet.params.reserve(static_cast<std::size_t>(M));
  const long max_attempts_per_agent = 1000;
  const long drawn = std::max(M, kRejectionProbeAgents);
  long attempts = 0;
  long rejections = 0;
  for (long i = 0; i < drawn; ++i) {
    for (long attempt = 0;; ++attempt) {
      if (attempt >= max_attempts_per_agent) {
        throw ValidationError(fmt::format("agent {} stayed infeasible after {} draws", i, attempt));
      }
      const CounterRng rng(derive_seed(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(attempt)), 0);
      EVAgentParams p;
      p.b = spec.b;
      p.s1 = spec.s1;
      p.eta = spec.eta.draw(rng.uniform(0));
      p.x_tilde_level = spec.x_tilde_level;
      if (spec.window == WindowMode::RandomEndpoints) {
        const auto a = static_cast<int>(rng.uniform_int(1, spec.window_first, spec.window_last));
        const auto c = static_cast<int>(rng.uniform_int(2, spec.window_first, spec.window_last));
        p.t_min = std::min(a, c);
        p.t_max = std::max(a, c);
      } else {
        p.t_min = spec.window_first;
        p.t_max = spec.window_last;
      }
      if (spec.ramp) p.r = spec.ramp->draw(rng.uniform(3));
      ++attempts;
      const bool ok = p.to_set(spec.horizon).check_nonempty().nonempty;
      if (!ok) ++rejections;
      if (i < M) {
        ++fleet.attempts;
        if (!ok) ++fleet.rejections;
      }
      if (ok) {
        if (i < M) fleet.params.push_back(p);
        break;
      }
    }
  }
  const double rate = static_cast<double>(rejections) / static_cast<double>(attempts);
  if (rate > kMaxRejectionRate) {
    throw ValidationError(fmt::format("rejection rate {:.3f} exceeds {:.2f}; the case draws mostly empty sets", rate,
                                      kMaxRejectionRate));
  }
  return fleet;
}

Game build_game(const CaseSpec& spec, const Fleet& fleet) {
  const DemandProfile demand = demand_profile(spec.demand, spec.horizon, spec.kappa);
  std::vector<SetRef> sets;
  sets.reserve(fleet.params.size());
  // Identical parameters share one set instance.
  std::map<std::tuple<double, double, double, int, int, double, double>, SetRef> cache;
  for (const auto& p : fleet.params) {
    const auto key = std::make_tuple(p.b, p.s1, p.eta, p.t_min, p.t_max, p.x_tilde_level, p.r.value_or(-1.0));
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, std::make_shared<FeasibleSet>(p.to_set(spec.horizon))).first;
    sets.push_back(it->second);
  }
  return Game(std::move(sets), spec.price, demand.d, demand.kappa);
}

Game generate_fleet(const CaseSpec& spec, long M, std::uint64_t seed) {
  return build_game(spec, generate_fleet_params(spec, M, seed));
}

}  // namespace chargegame
