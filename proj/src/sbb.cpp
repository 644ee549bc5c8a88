#include "netmech/sbb.hpp"

#include <algorithm>
#include <stdexcept>

#include "netmech/wbb.hpp"

namespace netmech {

double avg_rho_excluding(const Profile& profile, AgentId i) {
  if (profile.size() < 2) throw std::invalid_argument("avg_rho_excluding needs at least two agents");
  if (i >= profile.size()) throw std::out_of_range("agent index out of range");
  double sum = 0.0;
  for (AgentId j = 0; j < profile.size(); ++j) {
    if (j != i) sum += profile[j].rho;
  }
  return sum / static_cast<double>(profile.size() - 1);
}

std::vector<std::vector<LinkTax>> sbb_link_taxes(const Network& net, const Profile& profile,
                                                 std::span<const double> x, const MechanismParams& params) {
  auto out = wbb_link_taxes(net, profile, x, params);
  for (AgentId i = 0; i < net.agents(); ++i) {
    const double rho_bar = avg_rho_excluding(profile, i);
    const auto route = net.route(i);
    for (std::size_t k = 0; k < route.size(); ++k) {
      const LinkId l = route[k];
      double others = 0.0;
      for (const auto& m : net.members(l)) {
        if (m.agent != i) others += m.alpha * profile[m.agent].y;
      }
      const double pbar = avg_price_excluding(net, profile, i, l);
      out[i][k].redistribution = -rho_bar * pbar / static_cast<double>(net.link_size(l) - 1) * others;
    }
  }
  return out;
}

std::vector<double> rho_penalties(const Network& net, const Profile& profile, const MechanismParams& params) {
  const double r = scaling(net, demands(profile));
  std::vector<double> out(profile.size());
  for (AgentId i = 0; i < profile.size(); ++i) {
    const double gap = profile[i].rho - r;
    out[i] = params.zeta * gap * gap;
  }
  return out;
}

std::vector<double> tax_sbb(const Network& net, const Profile& profile, const MechanismParams& params) {
  validate_profile(net, profile);
  const auto x = allocate(net, demands(profile));
  const auto parts = sbb_link_taxes(net, profile, x, params);
  auto t = rho_penalties(net, profile, params);
  for (AgentId i = 0; i < net.agents(); ++i) {
    for (const auto& part : parts[i]) t[i] += part.total();
  }
  return t;
}

Outcome outcome_sbb(const Network& net, const ValuationProfile& vals, const Profile& profile,
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
  const auto parts = sbb_link_taxes(net, profile, out.x, params);
  out.t.assign(net.agents(), 0.0);
  out.u.resize(net.agents());
  for (AgentId i = 0; i < net.agents(); ++i) {
    const double gap = profile[i].rho - out.r;
    out.t[i] = params.zeta * gap * gap;
    for (const auto& part : parts[i]) out.t[i] += part.total();
    out.u[i] = vals.at(i).value(out.x[i]) - out.t[i];
    out.tax_sum += out.t[i];
  }
  return out;
}

Outcome outcome(const Network& net, const ValuationProfile& vals, const Profile& profile,
                const MechanismParams& params, Mechanism mechanism, AllocationRule rule) {
  return mechanism == Mechanism::Wbb ? outcome_wbb(net, vals, profile, params, rule)
                                     : outcome_sbb(net, vals, profile, params, rule);
}

}  // namespace netmech
