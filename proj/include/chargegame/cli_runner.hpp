#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chargegame/efficiency_analysis.hpp"
#include "chargegame/errors.hpp"

namespace chargegame::cli {

using Json = nlohmann::ordered_json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNonConvergence = 3;

enum class Command { Validate, Solve, Sweep, Counterexample, AnarchyValue, EvGen };

std::optional<Command> parse_command(const std::string& name);
std::string to_string(Command command);

/// Explicit game description: price, agent sets, d and kappa.
struct GameDescription {
  PriceFunction price;
  std::vector<FeasibleSet> agents;
  Vector d;
  Vector kappa;  // empty: all ones

  Game build() const;
};

struct CounterexampleConfig {
  ScalarPrice f;
  Vector z_bar;
  Vector d;
};

struct RunConfig {
  std::optional<Command> command;
  std::string output_dir;

  std::optional<GameDescription> game;
  std::optional<CaseSpec> scenario;
  SolverConfig solver;

  std::vector<long> M_list;
  int samples = 1;
  std::uint64_t base_seed = 0;
  int multi_start = 1;
  bool record_timing = false;

  std::optional<CounterexampleConfig> counterexample;
  std::optional<AnarchyClass> anarchy_class;
};

/// One schema violation, addressed by a field path such as "M_list[0]".
struct ConfigIssue {
  std::string path;
  std::string message;
};

class ConfigError : public ValidationError {
 public:
  explicit ConfigError(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

/// Syntax error with 1-based line and column.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column);
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Parses and validates; throws ParseError or ConfigError listing every violation.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);
RunConfig config_from_json(const Json& j);

Json to_json(const RunConfig& config);
Json to_json(const ScalarPrice& f);
Json to_json(const PriceFunction& p);
Json to_json(const FeasibleSet& set);
Json to_json(const CaseSpec& spec);
Json to_json(const GameDescription& game);
/// Game description of a generated fleet, loadable as the "game" record.
GameDescription describe_game(const Game& game);

/// sweep.csv, poa_vs_M.csv and costgap_vs_M.csv in `dir` (created if needed).
void write_results(const std::vector<SweepRecord>& records, const std::string& dir);
std::string sweep_csv(const std::vector<SweepRecord>& records);
std::string poa_csv(const std::vector<SweepSummary>& summary);
std::string costgap_csv(const std::vector<SweepSummary>& summary);

/// Runs a validated config; results go to `out`, diagnostics to `err` with
/// lines of the form "chargegame: <category>: <message>". Returns the exit code.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Optional cap on sweep threads from CHARGEGAME_THREADS (0 when unset).
int threads_from_environment();

}  // namespace chargegame::cli
