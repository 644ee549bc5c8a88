#pragma once

// Weak-budget-balance contract: scaled proportional allocation and the
// three-term tax
//   t_i^l = x_i alpha_i^l pbar + (p_i^l - pbar)^2 + eta pbar (p_i^l - pbar)(c^l - load^l)
// with pbar the average quote of the other agents on l.

#include <vector>

#include "netmech/mechanism.hpp"

namespace netmech {

/// Per-agent, per-route-slot breakdown of the WBB tax at allocation x.
std::vector<std::vector<LinkTax>> wbb_link_taxes(const Network& net, const Profile& profile,
                                                 std::span<const double> x, const MechanismParams& params);

std::vector<double> tax_wbb(const Network& net, const Profile& profile, const MechanismParams& params);

Outcome outcome_wbb(const Network& net, const ValuationProfile& vals, const Profile& profile,
                    const MechanismParams& params, AllocationRule rule = AllocationRule::Corrected);

}  // namespace netmech
