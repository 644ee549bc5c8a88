#include "netmech/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace netmech {

namespace {

std::string join_messages(const std::vector<Violation>& violations) {
  std::ostringstream out;
  out << "invalid network:";
  for (const auto& v : violations) out << "\n  " << v.message;
  return out.str();
}

}  // namespace

std::vector<Violation> validate_spec(const NetworkSpec& spec) {
  std::vector<Violation> out;
  auto add = [&out](ViolationKind kind, std::string message) {
    out.push_back({kind, std::move(message)});
  };

  if (spec.n_agents < 2) {
    add(ViolationKind::TooFewAgents, "need at least two agents, got " + std::to_string(spec.n_agents));
  }
  if (spec.routes.size() != spec.n_agents) {
    add(ViolationKind::RouteCount, "expected " + std::to_string(spec.n_agents) + " routes, got " +
                                       std::to_string(spec.routes.size()));
  }

  const std::size_t n_links = spec.links.size();
  std::vector<std::set<AgentId>> users(n_links);
  for (std::size_t i = 0; i < spec.routes.size(); ++i) {
    const auto& route = spec.routes[i];
    if (route.empty()) add(ViolationKind::EmptyRoute, "agent " + std::to_string(i) + " has an empty route");
    std::set<LinkId> seen;
    for (LinkId l : route) {
      if (l >= n_links) {
        add(ViolationKind::UnknownLink,
            "agent " + std::to_string(i) + " routes over unknown link " + std::to_string(l));
        continue;
      }
      if (!seen.insert(l).second) {
        add(ViolationKind::DuplicateLink,
            "agent " + std::to_string(i) + " lists link " + std::to_string(l) + " twice");
      }
      users[l].insert(i);
    }
  }

  for (std::size_t l = 0; l < n_links; ++l) {
    const LinkSpec& link = spec.links[l];
    const std::string name = "link " + std::to_string(l);
    if (link.id != l) {
      add(ViolationKind::LinkIdMismatch, name + " carries id " + std::to_string(link.id));
    }
    if (users[l].empty()) add(ViolationKind::UnusedLink, name + " is on no route");
    if (users[l].size() < 2) {
      add(ViolationKind::TooFewAgentsOnLink,
          "A3 on " + name + ": " + std::to_string(users[l].size()) + " agent(s), need at least 2");
    }
    if (!(link.capacity > 0.0) || !std::isfinite(link.capacity)) {
      add(ViolationKind::NonPositiveCapacity, "capacity positivity on " + name);
    }
    for (const auto& [agent, alpha] : link.coefficients) {
      if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        add(ViolationKind::NonPositiveCoefficient,
            "coefficient positivity on " + name + " for agent " + std::to_string(agent));
      }
    }
    std::set<AgentId> keys;
    for (const auto& entry : link.coefficients) keys.insert(entry.first);
    if (keys != users[l]) {
      add(ViolationKind::CoefficientMismatch,
          name + ": coefficient agents do not match the agents routed over it");
    }
  }
  return out;
}

InvalidNetwork::InvalidNetwork(std::vector<Violation> violations)
    : std::invalid_argument(join_messages(violations)), violations_(std::move(violations)) {}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  if (auto violations = validate_spec(spec_); !violations.empty()) {
    throw InvalidNetwork(std::move(violations));
  }
  for (auto& route : spec_.routes) std::sort(route.begin(), route.end());

  members_.assign(spec_.links.size(), {});
  route_alpha_.resize(spec_.n_agents);
  for (AgentId i = 0; i < spec_.n_agents; ++i) {
    const auto& route = spec_.routes[i];
    route_alpha_[i].reserve(route.size());
    for (std::size_t k = 0; k < route.size(); ++k) {
      const double alpha = spec_.links[route[k]].coefficients.at(i);
      route_alpha_[i].push_back(alpha);
      members_[route[k]].push_back({i, alpha, k});
    }
  }
}

std::size_t Network::slot(AgentId i, LinkId l) const {
  const auto& route = spec_.routes.at(i);
  auto it = std::lower_bound(route.begin(), route.end(), l);
  if (it == route.end() || *it != l) {
    throw std::out_of_range("agent " + std::to_string(i) + " does not use link " + std::to_string(l));
  }
  return static_cast<std::size_t>(it - route.begin());
}

bool Network::uses(AgentId i, LinkId l) const {
  const auto& route = spec_.routes.at(i);
  return std::binary_search(route.begin(), route.end(), l);
}

double LogValuation::value(double x) const {
  if (x < 0.0) throw std::domain_error("valuation evaluated at negative rate");
  return a * std::log1p(b * x);
}

double LogValuation::d1(double x) const {
  if (x < 0.0) throw std::domain_error("valuation evaluated at negative rate");
  return a * b / (1.0 + b * x);
}

double LogValuation::d2(double x) const {
  if (x < 0.0) throw std::domain_error("valuation evaluated at negative rate");
  const double s = 1.0 + b * x;
  return -a * b * b / (s * s);
}

double LogValuation::inverse_marginal(double mu) const {
  if (mu <= 0.0) return std::numeric_limits<double>::infinity();
  if (mu >= a * b) return 0.0;
  return a / mu - 1.0 / b;
}

bool valid_valuations(const ValuationProfile& profile, std::size_t n_agents) {
  if (profile.size() != n_agents) return false;
  return std::all_of(profile.begin(), profile.end(), [](const LogValuation& v) {
    return v.a > 0.0 && v.b > 0.0 && std::isfinite(v.a) && std::isfinite(v.b);
  });
}

double valuation(const ValuationProfile& profile, AgentId i, double x) { return profile.at(i).value(x); }
double valuation_d1(const ValuationProfile& profile, AgentId i, double x) { return profile.at(i).d1(x); }
double valuation_d2(const ValuationProfile& profile, AgentId i, double x) { return profile.at(i).d2(x); }

ActiveSet active_set(const Network& net, std::span<const double> y) {
  if (y.size() != net.agents()) throw std::invalid_argument("demand vector has wrong length");
  ActiveSet out;
  out.per_link.resize(net.links());
  for (AgentId i = 0; i < net.agents(); ++i) {
    if (y[i] < 0.0) throw std::invalid_argument("negative demand");
    if (y[i] > 0.0) out.agents.push_back(i);
  }
  for (LinkId l = 0; l < net.links(); ++l) {
    for (const auto& m : net.members(l)) {
      if (y[m.agent] > 0.0) out.per_link[l].push_back(m.agent);
    }
  }
  return out;
}

Instance random_instance(std::mt19937_64& rng, const InstanceShape& shape) {
  if (shape.agents < 2 || shape.links < 1) {
    throw std::invalid_argument("random instances need at least two agents and one link");
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  std::uniform_int_distribution<std::size_t> pick_agent(0, shape.agents - 1);
  std::uniform_int_distribution<std::size_t> pick_link(0, shape.links - 1);

  std::vector<std::set<AgentId>> on_link(shape.links);
  for (LinkId l = 0; l < shape.links; ++l) {
    for (AgentId i = 0; i < shape.agents; ++i) {
      if (unit(rng) < shape.join_probability) on_link[l].insert(i);
    }
    while (on_link[l].size() < 2) on_link[l].insert(pick_agent(rng));
  }
  for (AgentId i = 0; i < shape.agents; ++i) {
    bool covered = false;
    for (const auto& s : on_link) covered = covered || s.count(i) > 0;
    if (!covered) on_link[pick_link(rng)].insert(i);
  }

  Instance inst;
  inst.spec.n_agents = shape.agents;
  inst.spec.routes.assign(shape.agents, {});
  for (LinkId l = 0; l < shape.links; ++l) {
    LinkSpec link;
    link.id = l;
    link.capacity = uniform(shape.capacity_lo, shape.capacity_hi);
    for (AgentId i : on_link[l]) {
      link.coefficients[i] = uniform(shape.alpha_lo, shape.alpha_hi);
      inst.spec.routes[i].push_back(l);
    }
    inst.spec.links.push_back(std::move(link));
  }
  for (AgentId i = 0; i < shape.agents; ++i) {
    inst.valuations.push_back({uniform(shape.a_lo, shape.a_hi), uniform(shape.b_lo, shape.b_hi)});
  }
  return inst;
}

}  // namespace netmech
