#pragma once

// Scaled proportional allocation x = r y, shared by both mechanisms.
//
// r = min_l r^l with
//   r^l = c^l / sum_j alpha_j^l y_j                       when |S^l(y)| >= 2,
//   r^l = c^l / (alpha_i^l y_i) - f^l(y_i)                when S^l(y) = {i},
//   r^l unbounded                                          when S^l(y) is empty,
// and f^l(y_i) = c^l / (alpha_i^l y_i (y_i + 1)).

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "netmech/network.hpp"

namespace netmech {

enum class AllocationRule {
  Corrected,         // single-active links use the f^l correction
  PureProportional,  // c^l / sum alpha y for every non-empty active set
};

enum class LinkRegime { Idle, Single, Shared };

struct LinkFactor {
  LinkRegime regime = LinkRegime::Idle;
  double value = 0.0;          // meaningful unless regime == Idle
  AgentId single_agent = 0;    // meaningful when regime == Single
  bool bounded() const noexcept { return regime != LinkRegime::Idle; }
};

struct ScaleFactors {
  double r = 0.0;
  std::vector<LinkFactor> links;
  std::vector<LinkId> argmin;  // every link attaining r, ascending; argmin.front() is reported
};

/// Throws std::invalid_argument for negative or all-zero demands.
ScaleFactors scale_factors(const Network& net, std::span<const double> y,
                           AllocationRule rule = AllocationRule::Corrected);

/// x = 0 for y = 0, otherwise x_i = r y_i. Feasible for every y >= 0.
std::vector<double> allocate(const Network& net, std::span<const double> y,
                             AllocationRule rule = AllocationRule::Corrected);

/// The scaling factor r, with r := 0 at y = 0.
double scaling(const Network& net, std::span<const double> y, AllocationRule rule = AllocationRule::Corrected);

enum class Side { Right, Left };

// Which formula gives d x_i / d y_i on the attaining link q.
enum class SensitivityCase {
  OffLink,       // (A)  i not on q
  SharedLink,    // (B1) i on q, |S^q| >= 2
  SingleActive,  // (B2) S^q = {i}
};

struct DemandSensitivity {
  double r = 0.0;    // scaling factor on this side
  double dr = 0.0;   // one-sided d r / d y_i
  LinkId link = 0;   // attaining link q for this side
  SensitivityCase kind = SensitivityCase::OffLink;
  std::vector<double> dx;  // one-sided d x_j / d y_i for every agent j
};

/// One-sided sensitivity of the allocation to agent i's demand. At y_i = 0
/// only Side::Right exists; it is taken along the branch where i is active.
/// Links whose factors tie within a relative 1e-12 are treated as kinks.
DemandSensitivity demand_sensitivity(const Network& net, std::span<const double> y, AgentId i, Side side,
                                     AllocationRule rule = AllocationRule::Corrected);

}  // namespace netmech
