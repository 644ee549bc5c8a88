#include "netmech/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace netmech {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTieTolerance = 1e-12;

void check_demands(const Network& net, std::span<const double> y) {
  if (y.size() != net.agents()) throw std::invalid_argument("demand vector has wrong length");
  for (double v : y) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("demands must be finite and nonnegative");
  }
}

// forced: an agent with y = 0 treated as infinitesimally active (right limit).
LinkFactor link_factor(const Network& net, LinkId l, std::span<const double> y, AllocationRule rule,
                       std::optional<AgentId> forced) {
  LinkFactor f;
  std::size_t active = 0;
  double weighted = 0.0;
  double single_alpha = 0.0;
  for (const auto& m : net.members(l)) {
    const bool on = y[m.agent] > 0.0 || forced == m.agent;
    if (!on) continue;
    ++active;
    weighted += m.alpha * y[m.agent];
    f.single_agent = m.agent;
    single_alpha = m.alpha;
  }
  const double c = net.capacity(l);
  if (active == 0) {
    f.regime = LinkRegime::Idle;
    f.value = kInf;
  } else if (active >= 2) {
    f.regime = LinkRegime::Shared;
    f.value = c / weighted;
  } else {
    f.regime = LinkRegime::Single;
    const double yi = y[f.single_agent];
    if (rule == AllocationRule::PureProportional) {
      f.value = yi > 0.0 ? c / weighted : kInf;
    } else if (yi > 0.0) {
      const double correction = c / (single_alpha * yi * (yi + 1.0));
      f.value = std::max(0.0, c / weighted - correction);
    } else {
      f.value = c / single_alpha;  // limit of c / (alpha (y + 1)) as y -> 0+
    }
  }
  return f;
}

double factor_slope(const Network& net, LinkId l, const LinkFactor& f, std::span<const double> y, AgentId i,
                    AllocationRule rule) {
  if (f.regime == LinkRegime::Idle || !net.uses(i, l)) return 0.0;
  const double c = net.capacity(l);
  const double alpha = net.spec().links[l].coefficients.at(i);
  if (f.regime == LinkRegime::Shared) {
    return -alpha * f.value * f.value / c;
  }
  if (f.single_agent != i) return 0.0;
  if (rule == AllocationRule::PureProportional) {
    return y[i] > 0.0 ? -c / (alpha * y[i] * y[i]) : 0.0;
  }
  const double s = y[i] + 1.0;
  return -c / (alpha * s * s);
}

}  // namespace

ScaleFactors scale_factors(const Network& net, std::span<const double> y, AllocationRule rule) {
  check_demands(net, y);
  if (std::all_of(y.begin(), y.end(), [](double v) { return v == 0.0; })) {
    throw std::invalid_argument("scale_factors: all-zero demand");
  }
  ScaleFactors out;
  out.r = kInf;
  out.links.reserve(net.links());
  for (LinkId l = 0; l < net.links(); ++l) {
    out.links.push_back(link_factor(net, l, y, rule, std::nullopt));
    if (out.links.back().bounded()) out.r = std::min(out.r, out.links.back().value);
  }
  if (!std::isfinite(out.r)) {
    throw std::logic_error("nonzero demand left every link unbounded");
  }
  for (LinkId l = 0; l < net.links(); ++l) {
    if (out.links[l].bounded() && out.links[l].value <= out.r * (1.0 + kTieTolerance)) out.argmin.push_back(l);
  }
  return out;
}

std::vector<double> allocate(const Network& net, std::span<const double> y, AllocationRule rule) {
  check_demands(net, y);
  std::vector<double> x(net.agents(), 0.0);
  if (std::all_of(y.begin(), y.end(), [](double v) { return v == 0.0; })) return x;
  const double r = scale_factors(net, y, rule).r;
  for (AgentId i = 0; i < net.agents(); ++i) x[i] = r * y[i];
  return x;
}

double scaling(const Network& net, std::span<const double> y, AllocationRule rule) {
  check_demands(net, y);
  if (std::all_of(y.begin(), y.end(), [](double v) { return v == 0.0; })) return 0.0;
  return scale_factors(net, y, rule).r;
}

DemandSensitivity demand_sensitivity(const Network& net, std::span<const double> y, AgentId i, Side side,
                                     AllocationRule rule) {
  check_demands(net, y);
  if (i >= net.agents()) throw std::out_of_range("agent index out of range");
  if (side == Side::Left && y[i] == 0.0) {
    throw std::invalid_argument("no left derivative at zero demand");
  }
  const std::optional<AgentId> forced = y[i] > 0.0 ? std::nullopt : std::optional<AgentId>(i);

  std::vector<LinkFactor> factors;
  factors.reserve(net.links());
  double r = kInf;
  for (LinkId l = 0; l < net.links(); ++l) {
    factors.push_back(link_factor(net, l, y, rule, forced));
    if (factors.back().bounded()) r = std::min(r, factors.back().value);
  }
  if (!std::isfinite(r)) throw std::domain_error("demand_sensitivity: no bounded link on this branch");

  DemandSensitivity out;
  out.r = r;
  bool chosen = false;
  for (LinkId l = 0; l < net.links(); ++l) {
    const auto& f = factors[l];
    if (!f.bounded() || f.value > r * (1.0 + kTieTolerance)) continue;
    const double slope = factor_slope(net, l, f, y, i, rule);
    // Right derivative of a min takes the smallest slope among tied pieces, left the largest.
    const bool better = !chosen || (side == Side::Right ? slope < out.dr : slope > out.dr);
    if (better) {
      out.dr = slope;
      out.link = l;
      chosen = true;
    }
  }
  const auto& q = factors[out.link];
  if (!net.uses(i, out.link) || (q.regime == LinkRegime::Single && q.single_agent != i)) {
    out.kind = SensitivityCase::OffLink;
  } else if (q.regime == LinkRegime::Shared) {
    out.kind = SensitivityCase::SharedLink;
  } else {
    out.kind = SensitivityCase::SingleActive;
  }
  out.dx.assign(net.agents(), 0.0);
  for (AgentId j = 0; j < net.agents(); ++j) out.dx[j] = y[j] * out.dr;
  out.dx[i] += r;
  return out;
}

}  // namespace netmech
