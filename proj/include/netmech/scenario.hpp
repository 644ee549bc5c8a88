#pragma once

// Scenario files, the full audit pipeline, and sweeps over overrides.
//
// Scenario schema (JSON, schema_version 1):
//   {
//     "schema_version": 1,
//     "name": "example-1",
//     "agents": [{"a": 2.0, "b": 1.0}, ...],
//     "links":  [{"capacity": 1.0, "coefficients": {"0": 1.0, "1": 1.0}}, ...],
//     "routes": {"0": [0], "1": [0]},
//     "mechanism": "wbb" | "sbb",
//     "params": {"eta": 1e-3, "zeta": 1e-3},
//     "solver": {"tolerance": 1e-8, "max_iterations": 500},
//     "best_response": {"max_rounds": 200, "change_tolerance": 1e-9, "epsilon": 1e-6,
//                       "deviation_samples": 1000, "perturbation": 1e-3, "starts": 2},
//     "seed": 1
//   }
// A "random" object ({"agents": 4, "links": 2, "capacity": [lo, hi], ...})
// may replace agents/links/routes; the instance is drawn from "seed".

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "netmech/centralized.hpp"
#include "netmech/game.hpp"
#include "netmech/mechanism.hpp"
#include "netmech/network.hpp"

namespace netmech {

inline constexpr int kScenarioSchemaVersion = 1;

struct DynamicsConfig {
  std::size_t starts = 2;      // perturbed initial profiles per run
  double perturbation = 1e-3;  // relative size of the y / rho perturbation
};

struct Scenario {
  int schema_version = kScenarioSchemaVersion;
  std::string name;
  NetworkSpec spec;
  ValuationProfile valuations;
  Mechanism mechanism = Mechanism::Wbb;
  MechanismParams params;
  SolverConfig solver;
  BrConfig best_response;
  DynamicsConfig dynamics;
  VerifyTolerances tolerances;
  std::uint64_t seed = 1;
  std::optional<InstanceShape> random;  // set when the instance is drawn from seed
};

/// Redraws spec and valuations from scenario.random with scenario.seed.
void regenerate(Scenario& scenario);

class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(const std::string& what, std::string field, std::size_t line = 0)
      : std::runtime_error(what), field_(std::move(field)), line_(line) {}
  const std::string& field() const noexcept { return field_; }
  std::size_t line() const noexcept { return line_; }  // 0 when unknown

 private:
  std::string field_;
  std::size_t line_;
};

/// Parses and validates; A3 and every other network violation are rejected
/// with InvalidNetwork. Syntax errors carry the line, schema errors the field.
Scenario parse_scenario(const std::string& text, const std::string& origin = "<string>");
Scenario load_scenario(const std::filesystem::path& path);

/// Canonical JSON text of a scenario (sorted keys, fixed number format).
std::string scenario_to_json(const Scenario& scenario, int indent = 2);

/// FNV-1a 64 of the canonical text, as 16 hex digits.
std::string scenario_hash(const Scenario& scenario);

enum class RunStatus { Pass, Fail, OutOfScope };
std::string_view to_string(RunStatus s);
int exit_code(RunStatus s);  // 0, 1, 2

struct DynamicsRun {
  std::size_t start = 0;
  EquilibriumReport report;
  double x_error_inf = 0.0;
};

struct RunReport {
  std::string scenario_name;
  std::string scenario_hash;
  std::uint64_t seed = 0;
  Mechanism mechanism = Mechanism::Wbb;
  MechanismParams requested_params;

  KktCertificate certificate;
  std::optional<std::string> solver_error;
  bool a4 = false;
  std::string scope_note;  // why the instance is out of scope
  std::optional<EtaCertificate> eta;
  std::optional<std::string> eta_error;
  std::optional<EquilibriumReport> constructed;
  double constructed_x_error = 0.0;
  std::vector<DynamicsRun> dynamics;

  std::vector<CheckResult> checks;  // asserted properties
  double revenue = 0.0;             // sum of taxes at the constructed NE
  RunStatus status = RunStatus::Fail;
  double seconds = 0.0;             // timing, excluded from comparisons

  double x_error_inf() const;       // worst over constructed and converged runs
  double max_deviation_gain() const;
  std::size_t br_rounds() const;    // worst over converged runs
};

RunReport run(const Scenario& scenario);

/// Deterministic JSON; timing goes under "timing" and is omitted when
/// include_timing is false.
std::string report_to_json(const RunReport& report, bool include_timing = true, int indent = 2);

struct SweepOverrides {
  std::vector<double> etas;
  std::vector<std::uint64_t> seeds;
  std::vector<std::size_t> agent_counts;  // only for scenarios with a random block
  std::vector<Mechanism> mechanisms;
};

struct SweepRow {
  std::string scenario_id;
  Mechanism mechanism = Mechanism::Wbb;
  double x_error_inf = 0.0;
  double budget_residual = 0.0;
  double max_deviation_gain = 0.0;
  std::size_t br_rounds = 0;
  RunStatus status = RunStatus::Fail;
  std::string error;  // non-empty when the run threw
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<RunReport> reports;  // aligned with rows; default-constructed on error
};

/// Every combination of the non-empty override lists (a single run when all
/// are empty). Runs in parallel over at most `jobs` threads; row order is the
/// enumeration order. Writes one report per configuration plus summary.csv
/// under out_dir when it is non-empty.
SweepResult sweep(const Scenario& base, const SweepOverrides& overrides, const std::filesystem::path& out_dir,
                  std::size_t jobs = 1);

std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace netmech
