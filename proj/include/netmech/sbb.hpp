#pragma once

// Strong-budget-balance contract. Same allocation as WBB; each link tax gains
// a redistribution term built only from the other agents' messages, and the
// agent pays zeta (rho_i - r)^2 for disagreeing with the scaling factor.

#include <vector>

#include "netmech/mechanism.hpp"

namespace netmech {

/// Mean of rho_j over j != i. Throws std::invalid_argument when N < 2.
double avg_rho_excluding(const Profile& profile, AgentId i);

std::vector<std::vector<LinkTax>> sbb_link_taxes(const Network& net, const Profile& profile,
                                                 std::span<const double> x, const MechanismParams& params);

// zeta (rho_i - r)^2 for every agent, r := 0 when y = 0.
std::vector<double> rho_penalties(const Network& net, const Profile& profile, const MechanismParams& params);

std::vector<double> tax_sbb(const Network& net, const Profile& profile, const MechanismParams& params);

Outcome outcome_sbb(const Network& net, const ValuationProfile& vals, const Profile& profile,
                    const MechanismParams& params, AllocationRule rule = AllocationRule::Corrected);

Outcome outcome(const Network& net, const ValuationProfile& vals, const Profile& profile,
                const MechanismParams& params, Mechanism mechanism,
                AllocationRule rule = AllocationRule::Corrected);

}  // namespace netmech
