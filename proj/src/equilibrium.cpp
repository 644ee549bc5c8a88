#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "netmech/game.hpp"
#include "netmech/sbb.hpp"

namespace netmech {

const CheckResult* EquilibriumReport::check(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

namespace {

struct DeviationSearch {
  const Network& net;
  const ValuationProfile& vals;
  const Profile& profile;
  const MechanismParams& params;
  Mechanism mechanism;
  const BrConfig& config;

  Deviation worst;
  std::size_t sampled = 0;

  double gain(AgentId i, const Message& dev, double base) {
    Profile p = profile;
    p[i] = dev;
    ++sampled;
    return agent_utility(net, vals, p, i, params, mechanism) - base;
  }

  void consider(AgentId i, const char* kind, const Message& dev, double base) {
    const double g = gain(i, dev, base);
    if (g > worst.gain || sampled == 1) {
      worst.agent = i;
      worst.kind = kind;
      worst.message = dev;
      worst.gain = g;
    }
  }

  // Returns the number of deviations tried for agent i.
  std::size_t run(AgentId i) {
    const std::size_t before = sampled;
    const Message& m = profile[i];
    const double base = agent_utility(net, vals, profile, i, params, mechanism);
    const auto route = net.route(i);
    const bool sbb = mechanism == Mechanism::Sbb;
    const auto y = demands(profile);
    const auto x = allocate(net, y);
    const auto load = link_loads(net, x);

    // Quote the others' average price on one link.
    for (std::size_t k = 0; k < route.size(); ++k) {
      Message d = m;
      d.p[k] = avg_price_excluding(net, profile, i, route[k]);
      consider(i, "price-to-average", d, base);
    }
    // Undercut a positive price on a slack link.
    for (std::size_t k = 0; k < route.size(); ++k) {
      const LinkId l = route[k];
      const double pbar = avg_price_excluding(net, profile, i, l);
      const double slack = net.capacity(l) - load[l];
      const double eps = 0.5 * std::min(params.eta * pbar * slack, m.p[k]);
      if (eps > 0.0) {
        Message d = m;
        d.p[k] -= eps;
        consider(i, "undercut-slack-price", d, base);
      }
    }
    // Demand scalings, with rho left alone and with rho tracking r.
    const double scale_y = m.y > 0.0 ? m.y : 1.0;
    for (double delta : {1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 0.5}) {
      for (double sign : {1.0, -1.0}) {
        Message d = m;
        d.y = m.y > 0.0 ? m.y * (1.0 + sign * delta) : (sign > 0 ? delta * scale_y : 0.0);
        if (d.y == m.y) continue;
        consider(i, "demand-scaling", d, base);
        if (sbb) {
          Profile p = profile;
          p[i].y = d.y;
          d.rho = scaling(net, demands(p));
          consider(i, "demand-scaling-rho", d, base);
        }
      }
    }
    for (double f : {0.0, 2.0, 10.0}) {
      Message d = m;
      d.y = m.y * f;
      if (m.y == 0.0 && f > 0.0) d.y = f;
      consider(i, f == 0.0 ? "opt-out" : "demand-multiple", d, base);
    }
    {
      Message d = m;
      d.y = 0.0;
      std::fill(d.p.begin(), d.p.end(), 0.0);
      d.rho = 0.0;
      consider(i, "zero-message", d, base);
    }
    consider(i, "best-response", best_response(net, vals, profile, i, params, mechanism, config), base);

    // Random perturbations with log-uniform radius.
    std::mt19937_64 rng(config.seed * 0x9E3779B97F4A7C15ULL + i + 1);
    std::uniform_real_distribution<double> log_radius(std::log(config.deviation_radius_min),
                                                      std::log(config.deviation_radius_max));
    std::normal_distribution<double> normal;
    std::uniform_int_distribution<int> which(0, sbb ? 3 : 2);
    std::bernoulli_distribution coin(0.5);
    while (sampled - before < config.deviation_samples) {
      const double radius = std::exp(log_radius(rng));
      const int mode = which(rng);  // 0 y, 1 prices, 2 all, 3 rho
      Message d = m;
      if (mode == 0 || mode == 2) {
        d.y = m.y > 0.0 ? m.y * std::exp(radius * normal(rng)) : radius * std::abs(normal(rng)) * scale_y;
      }
      if (mode == 1 || mode == 2) {
        for (std::size_t k = 0; k < d.p.size(); ++k) {
          if (mode == 2 || coin(rng)) d.p[k] = std::max(0.0, m.p[k] + radius * std::max(1.0, m.p[k]) * normal(rng));
        }
      }
      if (sbb && (mode == 2 || mode == 3)) {
        d.rho = std::max(0.0, m.rho + radius * std::max(1.0, m.rho) * normal(rng));
      }
      consider(i, "random", d, base);
    }
    return sampled - before;
  }
};

CheckResult make_check(std::string name, double residual, double tolerance) {
  return {std::move(name), residual, tolerance, residual <= tolerance};
}

}  // namespace

EquilibriumReport verify_equilibrium(const Network& net, const ValuationProfile& vals, const Profile& profile,
                                     const MechanismParams& params, Mechanism mechanism,
                                     const VerifyTolerances& tol, const BrConfig& config) {
  validate_profile(net, profile);
  validate_params(params, mechanism);
  const auto out = outcome(net, vals, profile, params, mechanism);
  const auto load = link_loads(net, out.x);

  EquilibriumReport rep;
  rep.mechanism = mechanism;
  rep.profile = profile;
  rep.allocation = out.x;
  rep.taxes = out.t;
  rep.utilities = out.u;

  double spread = 0.0;
  double min_quote = 0.0;
  rep.common_prices.resize(net.links());
  for (LinkId l = 0; l < net.links(); ++l) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
    for (const auto& m : net.members(l)) {
      const double q = profile[m.agent].p[m.slot];
      lo = std::min(lo, q);
      hi = std::max(hi, q);
      sum += q;
    }
    rep.common_prices[l] = sum / static_cast<double>(net.link_size(l));
    spread = std::max(spread, hi - lo);
    min_quote = std::min(min_quote, lo);
  }
  rep.checks.push_back(make_check("equal_prices", spread, tol.equal_prices));
  rep.prices_equal = rep.checks.back().pass;
  rep.checks.push_back(make_check("dual_feasibility", -min_quote, tol.dual_feasibility));

  double cs = 0.0;
  for (LinkId l = 0; l < net.links(); ++l) {
    cs = std::max(cs, std::abs(rep.common_prices[l] * (load[l] - net.capacity(l))));
  }
  rep.checks.push_back(make_check("complementary_slackness", cs, tol.comp_slackness));

  double stat = 0.0;
  for (AgentId i = 0; i < net.agents(); ++i) {
    double mu = 0.0;
    const auto route = net.route(i);
    const auto alpha = net.route_alpha(i);
    for (std::size_t k = 0; k < route.size(); ++k) mu += alpha[k] * rep.common_prices[route[k]];
    const double gap = vals.at(i).d1(out.x[i]) - mu;
    stat = std::max(stat, out.x[i] > 0.0 ? std::abs(gap) : std::max(0.0, gap));
  }
  rep.checks.push_back(make_check("stationarity", stat, tol.stationarity));

  double ir = 0.0;
  for (AgentId i = 0; i < net.agents(); ++i) ir = std::max(ir, vals.at(i).value(0.0) - out.u[i]);
  rep.checks.push_back(make_check("individual_rationality", ir, tol.individual_rationality));

  if (mechanism == Mechanism::Wbb) {
    rep.checks.push_back(make_check("weak_budget_balance", std::max(0.0, -out.tax_sum), tol.budget));
  } else {
    rep.checks.push_back(make_check("strong_budget_balance", std::abs(out.tax_sum), tol.budget));
    double rho = 0.0;
    for (const auto& m : profile) rho = std::max(rho, std::abs(m.rho - out.r));
    rep.checks.push_back(make_check("rho_agreement", rho, tol.rho_agreement));
  }

  DeviationSearch search{net, vals, profile, params, mechanism, config, {}, 0};
  rep.deviations_sampled = std::numeric_limits<std::size_t>::max();
  for (AgentId i = 0; i < net.agents(); ++i) rep.deviations_sampled = std::min(rep.deviations_sampled, search.run(i));
  rep.max_deviation_gain = std::max(0.0, search.worst.gain);
  rep.worst_deviation = search.worst;
  rep.checks.push_back(make_check("epsilon_nash", rep.max_deviation_gain, config.epsilon));

  rep.equilibrium = std::all_of(rep.checks.begin(), rep.checks.end(), [](const CheckResult& c) { return c.pass; });
  return rep;
}

EquilibriumReport iterate_best_response(const Network& net, const ValuationProfile& vals, const Profile& init,
                                        const MechanismParams& params, Mechanism mechanism,
                                        const BrConfig& config, const VerifyTolerances& tol) {
  validate_profile(net, init);
  validate_params(params, mechanism);
  Profile profile = init;
  std::vector<AgentId> order(net.agents());
  std::iota(order.begin(), order.end(), AgentId{0});
  std::mt19937_64 rng(config.seed);

  std::vector<EquilibriumReport::TraceRow> trace;
  bool converged = false;
  std::size_t round = 0;
  while (round < config.max_rounds) {
    ++round;
    if (config.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double change = 0.0;
    for (AgentId i : order) {
      Message next = best_response(net, vals, profile, i, params, mechanism, config);
      const Message& cur = profile[i];
      change = std::max(change, std::abs(next.y - cur.y) / std::max(1.0, cur.y));
      for (std::size_t k = 0; k < cur.p.size(); ++k) change = std::max(change, std::abs(next.p[k] - cur.p[k]));
      if (mechanism == Mechanism::Sbb) change = std::max(change, std::abs(next.rho - cur.rho));
      profile[i] = std::move(next);
    }
    const auto x = allocate(net, demands(profile));
    double spread = 0.0;
    for (LinkId l = 0; l < net.links(); ++l) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const auto& m : net.members(l)) {
        lo = std::min(lo, profile[m.agent].p[m.slot]);
        hi = std::max(hi, profile[m.agent].p[m.slot]);
      }
      spread = std::max(spread, hi - lo);
    }
    trace.push_back({round, change, social_welfare(vals, x), spread});
    if (change <= config.change_tolerance) {
      converged = true;
      break;
    }
  }
  auto rep = verify_equilibrium(net, vals, profile, params, mechanism, tol, config);
  rep.converged = converged;
  rep.rounds = round;
  rep.trace = std::move(trace);
  return rep;
}

}  // namespace netmech
