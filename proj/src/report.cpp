#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "netmech/scenario.hpp"

namespace netmech {

using nlohmann::json;

namespace {

json checks_json(const std::vector<CheckResult>& checks) {
  json out = json::array();
  for (const auto& c : checks) {
    out.push_back({{"name", c.name}, {"residual", c.residual}, {"tolerance", c.tolerance}, {"pass", c.pass}});
  }
  return out;
}

json profile_json(const Profile& profile, Mechanism mechanism) {
  json out = json::array();
  for (const auto& m : profile) {
    json msg = {{"y", m.y}, {"p", m.p}};
    if (mechanism == Mechanism::Sbb) msg["rho"] = m.rho;
    out.push_back(msg);
  }
  return out;
}

json equilibrium_json(const EquilibriumReport& eq) {
  json out;
  out["profile"] = profile_json(eq.profile, eq.mechanism);
  out["allocation"] = eq.allocation;
  out["taxes"] = eq.taxes;
  out["utilities"] = eq.utilities;
  out["common_prices"] = eq.common_prices;
  out["prices_equal"] = eq.prices_equal;
  out["checks"] = checks_json(eq.checks);
  out["max_deviation_gain"] = eq.max_deviation_gain;
  out["deviations_sampled_per_agent"] = eq.deviations_sampled;
  if (eq.worst_deviation) {
    out["worst_deviation"] = {{"agent", eq.worst_deviation->agent},
                              {"kind", eq.worst_deviation->kind},
                              {"gain", eq.worst_deviation->gain}};
  }
  out["equilibrium"] = eq.equilibrium;
  return out;
}

}  // namespace

std::string report_to_json(const RunReport& rep, bool include_timing, int indent) {
  json doc;
  doc["scenario"] = {{"name", rep.scenario_name}, {"hash", rep.scenario_hash}};
  doc["seed"] = rep.seed;
  doc["mechanism"] = std::string(to_string(rep.mechanism));
  doc["status"] = std::string(to_string(rep.status));
  doc["exit_code"] = exit_code(rep.status);
  doc["params"] = {{"eta", rep.requested_params.eta}, {"zeta", rep.requested_params.zeta}};

  const KktCertificate& c = rep.certificate;
  doc["certificate"] = {{"x_star", c.x_star},
                        {"lambda_star", c.lambda_star},
                        {"nu_star", c.nu_star},
                        {"residuals",
                         {{"primal", c.residuals.primal},
                          {"dual", c.residuals.dual},
                          {"comp_slack", c.residuals.comp_slack},
                          {"stationarity", c.residuals.stationarity}}},
                        {"iterations", c.iterations},
                        {"optimal", c.optimal}};
  if (rep.solver_error) doc["solver_error"] = *rep.solver_error;
  doc["a4"] = rep.a4;
  if (!rep.scope_note.empty()) doc["scope_note"] = rep.scope_note;
  if (rep.eta) {
    json hess = json::array();
    for (const auto& h : rep.eta->hessians) hess.push_back({{"agent", h.agent}, {"max_eigenvalue", h.max_eigenvalue}});
    doc["eta_certificate"] = {{"eta", rep.eta->params.eta},
                              {"zeta", rep.eta->params.zeta},
                              {"shrinks", rep.eta->shrinks},
                              {"max_eigenvalue", rep.eta->max_eigenvalue},
                              {"price_diagonal_error", rep.eta->price_diagonal_error},
                              {"agents", hess}};
  }
  if (rep.eta_error) doc["eta_error"] = *rep.eta_error;
  if (rep.constructed) {
    doc["constructed"] = equilibrium_json(*rep.constructed);
    doc["constructed"]["x_error_inf"] = rep.constructed_x_error;
  }
  json dyn = json::array();
  for (const auto& d : rep.dynamics) {
    json run = equilibrium_json(d.report);
    run["start"] = d.start;
    run["converged"] = d.report.converged;
    if (!d.report.converged) run["flag"] = "not_converged";
    run["rounds"] = d.report.rounds;
    run["x_error_inf"] = d.x_error_inf;
    json rows = json::array();
    for (const auto& t : d.report.trace) rows.push_back({t.round, t.max_change, t.welfare, t.price_spread});
    run["trace"] = {{"columns", {"round", "max_change", "welfare", "price_spread"}}, {"rows", rows}};
    dyn.push_back(run);
  }
  doc["dynamics"] = dyn;
  doc["checks"] = checks_json(rep.checks);
  doc[rep.mechanism == Mechanism::Wbb ? "seller_revenue" : "budget_residual"] = rep.revenue;
  if (include_timing) doc["timing"] = {{"seconds", rep.seconds}};
  return doc.dump(indent);
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "scenario_id,mechanism,x_error_inf,budget_residual,max_deviation_gain,br_rounds,status\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    std::string status(to_string(r.status));
    if (!r.error.empty()) status = "error";
    out << r.scenario_id << ',' << to_string(r.mechanism) << ',' << num(r.x_error_inf) << ','
        << num(r.budget_residual) << ',' << num(r.max_deviation_gain) << ',' << r.br_rounds << ',' << status << '\n';
  }
  return out.str();
}

}  // namespace netmech
