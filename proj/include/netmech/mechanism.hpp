#pragma once

// Message and outcome types shared by the WBB and SBB contracts.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "netmech/allocation.hpp"
#include "netmech/network.hpp"

namespace netmech {

enum class Mechanism { Wbb, Sbb };

std::string_view to_string(Mechanism m);
Mechanism parse_mechanism(std::string_view name);  // "wbb" / "sbb", case-insensitive

/// One agent's report: demand y, quoted prices aligned with the agent's
/// sorted route, and the scaling signal rho (read only by the SBB contract).
struct Message {
  double y = 0.0;
  std::vector<double> p;
  double rho = 0.0;
};

using Profile = std::vector<Message>;

struct MechanismParams {
  double eta = 1e-3;
  double zeta = 1e-3;  // SBB only
};

void validate_params(const MechanismParams& params, Mechanism mechanism);

/// Throws std::invalid_argument unless every message has the right shape
/// and all components are finite and nonnegative.
void validate_profile(const Network& net, const Profile& profile);

std::vector<double> demands(const Profile& profile);

// Per-link tax components for one agent, in contract order.
struct LinkTax {
  double payment = 0.0;         // x_i alpha_i^l pbar
  double price_penalty = 0.0;   // (p_i^l - pbar)^2
  double slack_term = 0.0;      // eta pbar (p_i^l - pbar)(c^l - load^l)
  double redistribution = 0.0;  // SBB only, already signed (<= 0)

  double total() const noexcept { return payment + price_penalty + slack_term + redistribution; }
};

struct Outcome {
  std::vector<double> x;
  std::vector<double> t;
  std::vector<double> u;
  double r = 0.0;  // 0 when y = 0
  std::vector<LinkFactor> link_factors;  // empty when y = 0
  double tax_sum = 0.0;  // seller revenue (WBB) or budget residual (SBB)
};

/// Average of the other agents' quotes for link l; l must be on i's route.
double avg_price_excluding(const Network& net, const Profile& profile, AgentId i, LinkId l);

}  // namespace netmech
