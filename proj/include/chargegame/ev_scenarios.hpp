#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>

#include "chargegame/game_core.hpp"

namespace chargegame {

/// Clock hour (0..23) at the start of slot s; slot 1 starts at 5pm.
inline constexpr int kFirstSlotHour = 17;
int slot_start_hour(int slot);
/// Slot whose interval starts at the given clock hour.
int slot_for_hour(int hour);

/// Overnight charging window 5pm..10am, i.e. slots 1..18.
inline constexpr int kWindowFirstSlot = 1;
inline constexpr int kWindowLastSlot = 18;
inline constexpr double kDefaultXTildeLevel = 3.3;

struct EVAgentParams {
  double b = 1.0;    // charging efficiency
  double s1 = 0.0;   // initial charge
  double eta = 0.0;  // desired charge
  int t_min = kWindowFirstSlot;
  int t_max = kWindowLastSlot;
  double x_tilde_level = kDefaultXTildeLevel;
  std::optional<double> r;

  /// (eta - s1) / b
  double theta() const { return (eta - s1) / b; }
  /// Charging set on a horizon of n slots (window bounds are 1-based, inclusive).
  FeasibleSet to_set(int n) const;
};

struct DemandProfile {
  Vector d;
  Vector kappa;
};

struct ZeroDemand {};
/// Smooth day/night curve: trough at `trough_hour`, peak twelve hours later.
struct SyntheticValley {
  double peak = 1.0;
  double trough = 0.3;
  double trough_hour = 4.0;
};
/// 24 nonnegative values, one per line.
struct DemandFile {
  std::string path;
};
using DemandSelection = std::variant<ZeroDemand, SyntheticValley, DemandFile>;

/// d over n slots (slot-aligned clock hours), kappa all ones unless given.
DemandProfile demand_profile(const DemandSelection& selection, int n = 24, const Vector& kappa = Vector());
void write_demand_csv(const std::string& path, const Vector& d);

/// Closed interval; lo == hi is a point mass.
struct Uniform {
  double lo = 0.0;
  double hi = 0.0;
  double draw(double u01) const { return lo + (hi - lo) * u01; }
};

enum class WindowMode {
  Full,           // every agent charges over [window_first, window_last]
  RandomEndpoints // two uniform slots in that range, sorted
};

struct CaseSpec {
  std::string case_id = "custom";
  int horizon = 24;
  PriceFunction price;
  /// Draws eta; theta = (eta - s1) / b.
  Uniform eta{9.0, 9.0};
  double b = 1.0;
  double s1 = 0.0;
  WindowMode window = WindowMode::Full;
  int window_first = kWindowFirstSlot;
  int window_last = kWindowLastSlot;
  std::optional<Uniform> ramp;
  double x_tilde_level = kDefaultXTildeLevel;
  DemandSelection demand = ZeroDemand{};
  Vector kappa;  // empty: all ones

  void validate() const;
};

/// The four cases of the EV study (ids 1..4).
CaseSpec case_spec(int id);
/// Price of cases 2-4: 0.15 from 5pm through the 1am slot, 0.15 y from 2am through 10am.
PriceFunction overnight_schedule_price(int horizon = 24);

struct Fleet {
  std::vector<EVAgentParams> params;
  long rejections = 0;
  long attempts = 0;
};

/// Largest tolerated share of rejected draws. The rate is measured over at
/// least kRejectionProbeAgents agents so small fleets are not judged on a
/// handful of draws; agents beyond M are drawn only for the count.
inline constexpr double kMaxRejectionRate = 0.5;
inline constexpr long kRejectionProbeAgents = 256;

/// Agent parameters for (spec, M, seed); draw k of agent i depends only on
/// (seed, i, attempt, k). Empty sets are redrawn and counted.
Fleet generate_fleet_params(const CaseSpec& spec, long M, std::uint64_t seed);

/// Game for the drawn fleet. Agents with identical parameters share one set.
Game generate_fleet(const CaseSpec& spec, long M, std::uint64_t seed);
Game build_game(const CaseSpec& spec, const Fleet& fleet);

}  // namespace chargegame
