// netmech: command-line front end for scenario files.
//
//   netmech validate    --scenario FILE
//   netmech solve       --scenario FILE [--tol T] [--out FILE]
//   netmech equilibrium --scenario FILE [--mechanism wbb|sbb] [--eta E] [--zeta Z] [--tol T] [--out FILE]
//   netmech run         --scenario FILE [--mechanism M] [--eta E] [--zeta Z] [--seed S] [--tol T]
//                       [--out FILE] [--no-timing]
//   netmech sweep       --scenario FILE --out DIR [--eta E...] [--seed S...] [--agents N...]
//                       [--mechanism M...] [--jobs J]
//
// Exit status: 0 when every asserted check passed, 2 for out-of-scope
// instances, 1 for failures and usage errors.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "netmech/scenario.hpp"

using namespace netmech;

namespace {

struct Common {
  std::string scenario;
  std::string out;
  std::optional<double> tol;
  std::optional<double> eta;
  std::optional<double> zeta;
  std::optional<std::uint64_t> seed;
  std::string mechanism;
  bool no_timing = false;
};

Scenario load(const Common& c) {
  Scenario sc = load_scenario(c.scenario);
  if (!c.mechanism.empty()) sc.mechanism = parse_mechanism(c.mechanism);
  if (c.eta) sc.params.eta = *c.eta;
  if (c.zeta) sc.params.zeta = *c.zeta;
  if (c.tol) sc.solver.tolerance = *c.tol;
  if (c.seed) {
    sc.seed = *c.seed;
    sc.best_response.seed = *c.seed;
    if (sc.random) regenerate(sc);
  }
  return sc;
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text << '\n';
    return;
  }
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write " + out);
  f << text << '\n';
}

int cmd_validate(const Common& c) {
  const Scenario sc = load(c);
  std::cout << "ok: " << sc.spec.n_agents << " agents, " << sc.spec.links.size() << " links, hash "
            << scenario_hash(sc) << '\n';
  return 0;
}

nlohmann::json certificate_json(const KktCertificate& cert) {
  return {{"x_star", cert.x_star},
          {"lambda_star", cert.lambda_star},
          {"nu_star", cert.nu_star},
          {"residuals",
           {{"primal", cert.residuals.primal},
            {"dual", cert.residuals.dual},
            {"comp_slack", cert.residuals.comp_slack},
            {"stationarity", cert.residuals.stationarity}}},
          {"iterations", cert.iterations},
          {"optimal", cert.optimal}};
}

int cmd_solve(const Common& c) {
  const Scenario sc = load(c);
  const Network net(sc.spec);
  try {
    const auto cert = solve_cp(net, sc.valuations, sc.solver);
    emit(certificate_json(cert).dump(2), c.out);
    return 0;
  } catch (const SolverError& e) {
    std::cerr << "error: " << e.what() << '\n';
    emit(certificate_json(e.best()).dump(2), c.out);
    return 1;
  }
}

int cmd_equilibrium(const Common& c) {
  const Scenario sc = load(c);
  const Network net(sc.spec);
  const auto cert = solve_cp(net, sc.valuations, sc.solver);
  const Profile ne = construct_ne_from_kkt(net, cert, sc.mechanism);
  const auto eq = verify_equilibrium(net, sc.valuations, ne, sc.params, sc.mechanism, sc.tolerances, sc.best_response);
  nlohmann::json doc;
  doc["mechanism"] = std::string(to_string(sc.mechanism));
  doc["allocation"] = eq.allocation;
  doc["x_star"] = cert.x_star;
  doc["common_prices"] = eq.common_prices;
  doc["taxes"] = eq.taxes;
  doc["utilities"] = eq.utilities;
  doc["max_deviation_gain"] = eq.max_deviation_gain;
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& k : eq.checks) {
    checks.push_back({{"name", k.name}, {"residual", k.residual}, {"tolerance", k.tolerance}, {"pass", k.pass}});
  }
  doc["checks"] = checks;
  doc["equilibrium"] = eq.equilibrium;
  emit(doc.dump(2), c.out);
  return eq.equilibrium ? 0 : 1;
}

int cmd_run(const Common& c) {
  const Scenario sc = load(c);
  const RunReport rep = run(sc);
  emit(report_to_json(rep, !c.no_timing), c.out);
  std::cerr << sc.name << ": " << to_string(rep.status) << '\n';
  return exit_code(rep.status);
}

int cmd_sweep(const Common& c, const SweepOverrides& ov, std::size_t jobs) {
  const Scenario sc = load(c);
  const SweepResult res = sweep(sc, ov, c.out, jobs);
  std::cout << sweep_csv(res.rows);
  int code = 0;
  for (const auto& row : res.rows) {
    if (row.status == RunStatus::Fail) code = 1;
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Network resource-allocation contracts: solve, construct and audit equilibria"};
  app.require_subcommand(1);

  Common c;
  SweepOverrides ov;
  std::vector<std::string> mech_list;
  std::size_t jobs = 1;

  auto add_scenario = [&](CLI::App* sub) {
    sub->add_option("--scenario", c.scenario, "Scenario file (JSON)")->required()->check(CLI::ExistingFile);
  };
  auto add_params = [&](CLI::App* sub) {
    sub->add_option("--mechanism", c.mechanism, "wbb or sbb");
    sub->add_option("--eta", c.eta, "Slack-term weight");
    sub->add_option("--zeta", c.zeta, "Rho-penalty weight (SBB)");
  };

  auto* validate = app.add_subcommand("validate", "Load and validate a scenario");
  add_scenario(validate);

  auto* solve = app.add_subcommand("solve", "Solve the centralized problem and print the KKT certificate");
  add_scenario(solve);
  solve->add_option("--tol", c.tol, "KKT residual tolerance");
  solve->add_option("--out", c.out, "Output file (default stdout)");

  auto* equilibrium = app.add_subcommand("equilibrium", "Construct and audit the equilibrium");
  add_scenario(equilibrium);
  add_params(equilibrium);
  equilibrium->add_option("--tol", c.tol, "KKT residual tolerance");
  equilibrium->add_option("--out", c.out, "Output file (default stdout)");

  auto* runc = app.add_subcommand("run", "Full pipeline with a JSON report");
  add_scenario(runc);
  add_params(runc);
  runc->add_option("--seed", c.seed, "Override the scenario seed");
  runc->add_option("--tol", c.tol, "KKT residual tolerance");
  runc->add_option("--out", c.out, "Report file (default stdout)");
  runc->add_flag("--no-timing", c.no_timing, "Omit the timing block");

  auto* sweepc = app.add_subcommand("sweep", "Run every combination of overrides");
  add_scenario(sweepc);
  sweepc->add_option("--out", c.out, "Directory for reports and summary.csv")->required();
  sweepc->add_option("--eta", ov.etas, "Eta values");
  sweepc->add_option("--zeta", c.zeta, "Rho-penalty weight (SBB)");
  sweepc->add_option("--seed", ov.seeds, "Seeds");
  sweepc->add_option("--agents", ov.agent_counts, "Agent counts (random scenarios)");
  sweepc->add_option("--mechanism", mech_list, "Mechanisms");
  sweepc->add_option("--tol", c.tol, "KKT residual tolerance");
  sweepc->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) return cmd_validate(c);
    if (*solve) return cmd_solve(c);
    if (*equilibrium) return cmd_equilibrium(c);
    if (*runc) return cmd_run(c);
    if (*sweepc) {
      for (const auto& m : mech_list) ov.mechanisms.push_back(parse_mechanism(m));
      return cmd_sweep(c, ov, jobs);
    }
  } catch (const ScenarioError& e) {
    std::cerr << "scenario error: " << e.what() << '\n';
  } catch (const InvalidNetwork& e) {
    std::cerr << "invalid network: " << e.what() << '\n';
  } catch (const A4Violation& e) {
    std::cerr << "out-of-scope instance: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
  }
  return 1;
}
