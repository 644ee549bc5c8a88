#pragma once

// Problem instance: agents, links, fixed routes, capacity coefficients and
// the per-agent valuation family.

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace netmech {

using AgentId = std::size_t;
using LinkId = std::size_t;

struct LinkSpec {
  LinkId id = 0;
  double capacity = 0.0;
  // alpha_j^l for every agent j whose route contains this link.
  std::map<AgentId, double> coefficients;
};

struct NetworkSpec {
  std::size_t n_agents = 0;
  std::vector<LinkSpec> links;
  std::vector<std::vector<LinkId>> routes;
};

enum class ViolationKind {
  TooFewAgents,
  RouteCount,
  EmptyRoute,
  UnknownLink,
  DuplicateLink,
  LinkIdMismatch,
  UnusedLink,
  TooFewAgentsOnLink,  // (A3)
  NonPositiveCapacity,
  NonPositiveCoefficient,
  CoefficientMismatch,
};

struct Violation {
  ViolationKind kind;
  std::string message;
};

/// Lists every structural assumption the network breaks. Empty means valid.
std::vector<Violation> validate_spec(const NetworkSpec& spec);

class InvalidNetwork : public std::invalid_argument {
 public:
  explicit InvalidNetwork(std::vector<Violation> violations);
  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  std::vector<Violation> violations_;
};

/// A validated network with dense lookup tables. Immutable after construction.
class Network {
 public:
  struct Member {
    AgentId agent;
    double alpha;
    std::size_t slot;  // position of the link inside the agent's route
  };

  /// Throws InvalidNetwork when validate_spec reports anything.
  explicit Network(NetworkSpec spec);

  std::size_t agents() const noexcept { return spec_.n_agents; }
  std::size_t links() const noexcept { return spec_.links.size(); }
  const NetworkSpec& spec() const noexcept { return spec_; }

  double capacity(LinkId l) const { return spec_.links.at(l).capacity; }
  std::span<const LinkId> route(AgentId i) const { return spec_.routes.at(i); }
  std::span<const double> route_alpha(AgentId i) const { return route_alpha_.at(i); }
  std::span<const Member> members(LinkId l) const { return members_.at(l); }
  std::size_t link_size(LinkId l) const { return members_.at(l).size(); }

  // Index of l inside route(i); throws std::out_of_range if i does not use l.
  std::size_t slot(AgentId i, LinkId l) const;
  bool uses(AgentId i, LinkId l) const;

 private:
  NetworkSpec spec_;
  std::vector<std::vector<Member>> members_;
  std::vector<std::vector<double>> route_alpha_;
};

/// v(x) = a ln(1 + b x); strictly increasing, strictly concave, v'(0) = ab.
struct LogValuation {
  double a = 1.0;
  double b = 1.0;

  double value(double x) const;
  double d1(double x) const;
  double d2(double x) const;
  // Smallest x >= 0 with v'(x) <= mu; +inf when mu <= 0.
  double inverse_marginal(double mu) const;
};

using ValuationProfile = std::vector<LogValuation>;

bool valid_valuations(const ValuationProfile& profile, std::size_t n_agents);

double valuation(const ValuationProfile& profile, AgentId i, double x);
double valuation_d1(const ValuationProfile& profile, AgentId i, double x);
double valuation_d2(const ValuationProfile& profile, AgentId i, double x);

struct ActiveSet {
  std::vector<std::vector<AgentId>> per_link;  // S^l(y), ascending
  std::vector<AgentId> agents;                 // S(y)
};

ActiveSet active_set(const Network& net, std::span<const double> y);

// Random desk-scale instances for experiments and property tests.
struct InstanceShape {
  std::size_t agents = 2;
  std::size_t links = 1;
  double capacity_lo = 0.5, capacity_hi = 2.0;
  double alpha_lo = 0.5, alpha_hi = 2.0;
  double a_lo = 0.5, a_hi = 3.0;
  double b_lo = 0.5, b_hi = 3.0;
  double join_probability = 0.6;
};

struct Instance {
  NetworkSpec spec;
  ValuationProfile valuations;
};

/// Always satisfies validate_spec; requires agents >= 2 and links >= 1.
Instance random_instance(std::mt19937_64& rng, const InstanceShape& shape);

}  // namespace netmech
