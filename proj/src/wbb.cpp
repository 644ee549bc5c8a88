#include "netmech/wbb.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <string>

#include "netmech/centralized.hpp"

namespace netmech {

std::string_view to_string(Mechanism m) { return m == Mechanism::Wbb ? "wbb" : "sbb"; }

Mechanism parse_mechanism(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "wbb") return Mechanism::Wbb;
  if (lower == "sbb") return Mechanism::Sbb;
  throw std::invalid_argument("unknown mechanism '" + std::string(name) + "' (expected wbb or sbb)");
}

void validate_params(const MechanismParams& params, Mechanism mechanism) {
  if (!(params.eta > 0.0) || !std::isfinite(params.eta)) throw std::invalid_argument("eta must be positive");
  if (mechanism == Mechanism::Sbb && (!(params.zeta > 0.0) || !std::isfinite(params.zeta))) {
    throw std::invalid_argument("zeta must be positive");
  }
}

void validate_profile(const Network& net, const Profile& profile) {
  if (profile.size() != net.agents()) throw std::invalid_argument("profile has wrong number of messages");
  auto ok = [](double v) { return v >= 0.0 && std::isfinite(v); };
  for (AgentId i = 0; i < net.agents(); ++i) {
    const Message& m = profile[i];
    if (m.p.size() != net.route(i).size()) {
      throw std::invalid_argument("agent " + std::to_string(i) + " quotes prices for the wrong number of links");
    }
    if (!ok(m.y) || !ok(m.rho) || !std::all_of(m.p.begin(), m.p.end(), ok)) {
      throw std::invalid_argument("agent " + std::to_string(i) + " sent a negative or non-finite component");
    }
  }
}

std::vector<double> demands(const Profile& profile) {
  std::vector<double> y;
  y.reserve(profile.size());
  for (const auto& m : profile) y.push_back(m.y);
  return y;
}

double avg_price_excluding(const Network& net, const Profile& profile, AgentId i, LinkId l) {
  if (!net.uses(i, l)) throw std::invalid_argument("avg_price_excluding: link not on the agent's route");
  const auto n_l = net.link_size(l);
  if (n_l < 2) throw std::logic_error("avg_price_excluding: link carries fewer than two agents");
  double sum = 0.0;
  for (const auto& m : net.members(l)) {
    if (m.agent != i) sum += profile[m.agent].p[m.slot];
  }
  return sum / static_cast<double>(n_l - 1);
}

std::vector<std::vector<LinkTax>> wbb_link_taxes(const Network& net, const Profile& profile,
                                                 std::span<const double> x, const MechanismParams& params) {
  const auto load = link_loads(net, x);
  std::vector<std::vector<LinkTax>> out(net.agents());
  for (AgentId i = 0; i < net.agents(); ++i) {
    const auto route = net.route(i);
    const auto alpha = net.route_alpha(i);
    out[i].resize(route.size());
    for (std::size_t k = 0; k < route.size(); ++k) {
      const LinkId l = route[k];
      const double pbar = avg_price_excluding(net, profile, i, l);
      const double gap = profile[i].p[k] - pbar;
      LinkTax& tax = out[i][k];
      tax.payment = x[i] * alpha[k] * pbar;
      tax.price_penalty = gap * gap;
      tax.slack_term = params.eta * pbar * gap * (net.capacity(l) - load[l]);
    }
  }
  return out;
}

namespace {

std::vector<double> sum_taxes(const std::vector<std::vector<LinkTax>>& parts) {
  std::vector<double> t(parts.size(), 0.0);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    for (const auto& part : parts[i]) t[i] += part.total();
  }
  return t;
}

}  // namespace

std::vector<double> tax_wbb(const Network& net, const Profile& profile, const MechanismParams& params) {
  validate_profile(net, profile);
  const auto x = allocate(net, demands(profile));
  return sum_taxes(wbb_link_taxes(net, profile, x, params));
}

Outcome outcome_wbb(const Network& net, const ValuationProfile& vals, const Profile& profile,
                    const MechanismParams& params, AllocationRule rule) {
  validate_profile(net, profile);
  const auto y = demands(profile);
  Outcome out;
  out.x = allocate(net, y, rule);
  if (std::any_of(y.begin(), y.end(), [](double v) { return v > 0.0; })) {
    auto factors = scale_factors(net, y, rule);
    out.r = factors.r;
    out.link_factors = std::move(factors.links);
  }
  out.t = sum_taxes(wbb_link_taxes(net, profile, out.x, params));
  out.u.resize(net.agents());
  for (AgentId i = 0; i < net.agents(); ++i) {
    out.u[i] = vals.at(i).value(out.x[i]) - out.t[i];
    out.tax_sum += out.t[i];
  }
  return out;
}

}  // namespace netmech
