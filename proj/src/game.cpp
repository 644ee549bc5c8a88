#include "netmech/game.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "netmech/sbb.hpp"
#include "netmech/wbb.hpp"

namespace netmech {

namespace {

// Agent i's tax given the allocation, loads and scaling factor already known.
double agent_tax(const Network& net, const Profile& profile, std::span<const double> x,
                 std::span<const double> load, double r, AgentId i, const MechanismParams& params,
                 Mechanism mechanism) {
  const auto route = net.route(i);
  const auto alpha = net.route_alpha(i);
  const Message& m = profile[i];
  double t = 0.0;
  const double rho_bar = mechanism == Mechanism::Sbb ? avg_rho_excluding(profile, i) : 0.0;
  for (std::size_t k = 0; k < route.size(); ++k) {
    const LinkId l = route[k];
    const double pbar = avg_price_excluding(net, profile, i, l);
    const double gap = m.p[k] - pbar;
    t += x[i] * alpha[k] * pbar + gap * gap + params.eta * pbar * gap * (net.capacity(l) - load[l]);
    if (mechanism == Mechanism::Sbb) {
      double others = 0.0;
      for (const auto& mem : net.members(l)) {
        if (mem.agent != i) others += mem.alpha * profile[mem.agent].y;
      }
      t -= rho_bar * pbar / static_cast<double>(net.link_size(l) - 1) * others;
    }
  }
  if (mechanism == Mechanism::Sbb) {
    const double g = m.rho - r;
    t += params.zeta * g * g;
  }
  return t;
}

double utility_unchecked(const Network& net, const ValuationProfile& vals, const Profile& profile, AgentId i,
                         const MechanismParams& params, Mechanism mechanism, AllocationRule rule) {
  const auto y = demands(profile);
  const auto x = allocate(net, y, rule);
  const auto load = link_loads(net, x);
  const double r = mechanism == Mechanism::Sbb ? scaling(net, y, rule) : 0.0;
  return vals.at(i).value(x[i]) - agent_tax(net, profile, x, load, r, i, params, mechanism);
}

double y_derivative(const Network& net, const ValuationProfile& vals, const Profile& profile,
                    std::span<const double> y, std::span<const double> x, double r, AgentId i,
                    const MechanismParams& params, Mechanism mechanism, Side side, AllocationRule rule) {
  const auto sens = demand_sensitivity(net, y, i, side, rule);
  const auto route = net.route(i);
  const auto alpha = net.route_alpha(i);
  const double dxi = sens.dx[i];
  // On the right branch at y_i = 0 the allocation is evaluated in the limit.
  const double xi = y[i] > 0.0 ? x[i] : 0.0;
  double d = vals.at(i).d1(xi) * dxi;
  for (std::size_t k = 0; k < route.size(); ++k) {
    const LinkId l = route[k];
    const double pbar = avg_price_excluding(net, profile, i, l);
    const double gap = profile[i].p[k] - pbar;
    double dload = 0.0;
    for (const auto& mem : net.members(l)) dload += mem.alpha * sens.dx[mem.agent];
    d -= alpha[k] * pbar * dxi;
    d += params.eta * pbar * gap * dload;
  }
  if (mechanism == Mechanism::Sbb) d += 2.0 * params.zeta * (profile[i].rho - r) * sens.dr;
  return d;
}

}  // namespace

double agent_utility(const Network& net, const ValuationProfile& vals, const Profile& profile, AgentId i,
                     const MechanismParams& params, Mechanism mechanism, AllocationRule rule) {
  validate_profile(net, profile);
  if (i >= net.agents()) throw std::out_of_range("agent index out of range");
  return utility_unchecked(net, vals, profile, i, params, mechanism, rule);
}

UtilityGradient utility_gradient(const Network& net, const ValuationProfile& vals, const Profile& profile,
                                 AgentId i, const MechanismParams& params, Mechanism mechanism,
                                 AllocationRule rule) {
  validate_profile(net, profile);
  if (i >= net.agents()) throw std::out_of_range("agent index out of range");
  const auto y = demands(profile);
  const auto x = allocate(net, y, rule);
  const auto load = link_loads(net, x);
  const double r = scaling(net, y, rule);

  UtilityGradient g;
  const auto route = net.route(i);
  g.dp.resize(route.size());
  for (std::size_t k = 0; k < route.size(); ++k) {
    const LinkId l = route[k];
    const double pbar = avg_price_excluding(net, profile, i, l);
    g.dp[k] = -2.0 * (profile[i].p[k] - pbar) - params.eta * pbar * (net.capacity(l) - load[l]);
  }
  if (mechanism == Mechanism::Sbb) g.drho = -2.0 * params.zeta * (profile[i].rho - r);

  g.dy_right = y_derivative(net, vals, profile, y, x, r, i, params, mechanism, Side::Right, rule);
  if (y[i] > 0.0) {
    g.dy_left = y_derivative(net, vals, profile, y, x, r, i, params, mechanism, Side::Left, rule);
    const double scale = std::max({1.0, std::abs(g.dy_right), std::abs(*g.dy_left)});
    g.kink = std::abs(g.dy_right - *g.dy_left) > 1e-12 * scale;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Best response

namespace {

class BestResponder {
 public:
  BestResponder(const Network& net, const ValuationProfile& vals, const Profile& profile, AgentId i,
                const MechanismParams& params, Mechanism mechanism, const BrConfig& config)
      : net_(net), vals_(vals), work_(profile), i_(i), params_(params), mech_(mechanism), cfg_(config) {}

  struct Point {
    double y = 0.0;
    double u = -std::numeric_limits<double>::infinity();
    Message msg;
  };

  // Closed-form price and rho maximisers for demand yv, then the utility.
  Point evaluate(double yv) {
    Message& m = work_[i_];
    m.y = yv;
    const auto y = demands(work_);
    const auto x = allocate(net_, y);
    const auto load = link_loads(net_, x);
    const auto route = net_.route(i_);
    for (std::size_t k = 0; k < route.size(); ++k) {
      const LinkId l = route[k];
      const double pbar = avg_price_excluding(net_, work_, i_, l);
      const double slack = net_.capacity(l) - load[l];
      m.p[k] = std::max(0.0, pbar - 0.5 * params_.eta * pbar * slack);
    }
    const double r = scaling(net_, y);
    if (mech_ == Mechanism::Sbb) m.rho = r;
    Point pt;
    pt.y = yv;
    pt.msg = m;
    pt.u = vals_.at(i_).value(x[i_]) - agent_tax(net_, work_, x, load, r, i_, params_, mech_);
    return pt;
  }

  UtilityGradient gradient(const Point& pt) {
    work_[i_] = pt.msg;
    return utility_gradient(net_, vals_, work_, i_, params_, mech_);
  }

  // Backtracking along the ray y + step (projected onto y >= 0).
  bool line_search(const Point& from, double slope, double step, Point& out) {
    for (int halvings = 0; halvings < 60; ++halvings) {
      const double yt = std::max(0.0, from.y + step);
      if (yt == from.y) return false;
      Point trial = evaluate(yt);
      if (trial.u > from.u + 1e-4 * slope * (yt - from.y)) {
        out = std::move(trial);
        return true;
      }
      step *= 0.5;
    }
    return false;
  }

  Point ascend(double start) {
    Point cur = evaluate(start);
    double t = 1.0;  // step per unit slope when no curvature estimate exists
    std::optional<std::pair<double, double>> prev;  // (y, slope) of last accepted point on this side
    for (std::size_t step = 0; step < cfg_.max_ascent_steps; ++step) {
      const auto g = gradient(cur);
      const double dr = g.dy_right;
      const double dl = g.dy_left.value_or(-1.0);
      const double tol = cfg_.gradient_tolerance;
      bool up = dr > tol;
      bool down = cur.y > 0.0 && dl < -tol;
      if (!up && !down) break;

      auto propose = [&](double slope) {
        if (prev && std::abs(cur.y - prev->first) > 0.0) {
          const double curv = -(slope - prev->second) / (cur.y - prev->first);
          if (curv > 0.0 && std::isfinite(curv)) return slope / curv;
        }
        return t * slope;
      };

      Point next;
      bool moved = false;
      double used_slope = 0.0;
      if (up) {
        moved = line_search(cur, dr, propose(dr), next);
        used_slope = dr;
      }
      if (!moved && down) {
        prev.reset();
        moved = line_search(cur, dl, propose(dl), next);
        used_slope = dl;
      }
      if (!moved) break;
      const double dy = next.y - cur.y;
      t = std::min(1e6, 2.0 * std::abs(dy / used_slope));
      prev = std::make_pair(cur.y, used_slope);
      const bool tiny = std::abs(dy) <= cfg_.y_tolerance * std::max(1.0, cur.y);
      cur = std::move(next);
      if (tiny) break;
    }
    return cur;
  }

  Message run() {
    const double y0 = work_[i_].y;
    std::vector<double> starts{y0, 0.0};
    if (y0 > 0.0) {
      starts.push_back(2.0 * y0);
    } else {
      double sum = 0.0;
      std::size_t cnt = 0;
      for (const auto& m : work_) {
        if (m.y > 0.0) {
          sum += m.y;
          ++cnt;
        }
      }
      starts.push_back(cnt ? sum / static_cast<double>(cnt) : 1.0);
    }
    Point best;
    for (double s : starts) {
      Point pt = ascend(s);
      if (pt.u > best.u) best = std::move(pt);
    }
    return best.msg;
  }

 private:
  const Network& net_;
  const ValuationProfile& vals_;
  Profile work_;
  AgentId i_;
  MechanismParams params_;
  Mechanism mech_;
  BrConfig cfg_;
};

}  // namespace

Message best_response(const Network& net, const ValuationProfile& vals, const Profile& profile, AgentId i,
                      const MechanismParams& params, Mechanism mechanism, const BrConfig& config) {
  validate_profile(net, profile);
  validate_params(params, mechanism);
  if (i >= net.agents()) throw std::out_of_range("agent index out of range");
  BestResponder br(net, vals, profile, i, params, mechanism, config);
  return br.run();
}

// ---------------------------------------------------------------------------
// Construction from the centralized optimum

bool satisfies_a4(const Network& net, const std::vector<double>& x_star) {
  if (x_star.size() != net.agents()) throw std::invalid_argument("allocation has wrong size");
  for (LinkId l = 0; l < net.links(); ++l) {
    std::size_t active = 0;
    for (const auto& m : net.members(l)) {
      if (x_star[m.agent] > kPositiveRate) ++active;
    }
    if (active < 2) return false;
  }
  return true;
}

Profile construct_ne_from_kkt(const Network& net, const KktCertificate& cert, Mechanism mechanism, double scale) {
  if (cert.x_star.size() != net.agents() || cert.lambda_star.size() != net.links()) {
    throw std::invalid_argument("certificate does not match the network");
  }
  if (!(scale > 0.0)) throw std::invalid_argument("scale must be positive");
  for (LinkId l = 0; l < net.links(); ++l) {
    std::size_t active = 0;
    for (const auto& m : net.members(l)) {
      if (cert.x_star[m.agent] > kPositiveRate) ++active;
    }
    if (active < 2) {
      throw A4Violation("link " + std::to_string(l) + " has " + std::to_string(active) +
                        " agent(s) with positive optimal rate; at least two are required");
    }
  }
  Profile profile(net.agents());
  for (AgentId i = 0; i < net.agents(); ++i) {
    const double xi = cert.x_star[i];
    profile[i].y = xi > kPositiveRate ? scale * xi : 0.0;
    const auto route = net.route(i);
    profile[i].p.resize(route.size());
    for (std::size_t k = 0; k < route.size(); ++k) profile[i].p[k] = std::max(0.0, cert.lambda_star[route[k]]);
  }
  if (mechanism == Mechanism::Sbb) {
    const double r = scaling(net, demands(profile));
    for (auto& m : profile) m.rho = r;
  }
  return profile;
}

// ---------------------------------------------------------------------------
// Hessian and eta validation

namespace {

// Gradient as a vector in the coordinates (y, [rho], p...).
Eigen::VectorXd gradient_vector(const Network& net, const ValuationProfile& vals, const Profile& profile,
                                AgentId i, const MechanismParams& params, Mechanism mechanism, Side side) {
  const auto g = utility_gradient(net, vals, profile, i, params, mechanism);
  const bool sbb = mechanism == Mechanism::Sbb;
  Eigen::VectorXd v(1 + (sbb ? 1 : 0) + static_cast<Eigen::Index>(g.dp.size()));
  v(0) = side == Side::Right ? g.dy_right : g.dy_left.value();
  Eigen::Index k = 1;
  if (sbb) v(k++) = g.drho;
  for (double d : g.dp) v(k++) = d;
  return v;
}

double& coordinate(Profile& profile, AgentId i, Eigen::Index c, bool sbb) {
  if (c == 0) return profile[i].y;
  if (sbb && c == 1) return profile[i].rho;
  return profile[i].p[static_cast<std::size_t>(c - (sbb ? 2 : 1))];
}

Eigen::MatrixXd side_hessian(const Network& net, const ValuationProfile& vals, const Profile& profile, AgentId i,
                             const MechanismParams& params, Mechanism mechanism, Side side) {
  const bool sbb = mechanism == Mechanism::Sbb;
  const Eigen::VectorXd g0 = gradient_vector(net, vals, profile, i, params, mechanism, side);
  const Eigen::Index n = g0.size();
  Eigen::MatrixXd h(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    Profile work = profile;
    double& coord = coordinate(work, i, c, sbb);
    const double base = coord;
    if (c == 0) {
      // One-sided in y, staying on the requested branch.
      const double step = 1e-6 * std::max(1.0, base);
      coord = side == Side::Right ? base + step : base - step;
      const Eigen::VectorXd g1 = gradient_vector(net, vals, work, i, params, mechanism, side);
      h.col(c) = side == Side::Right ? (g1 - g0) / step : (g0 - g1) / step;
    } else {
      // The gradient is affine in prices and rho, so any step is exact up to rounding.
      const double step = 1e-3 * std::max(1.0, base);
      coord = base + step;
      const Eigen::VectorXd gp = gradient_vector(net, vals, work, i, params, mechanism, side);
      if (base >= step) {
        coord = base - step;
        const Eigen::VectorXd gm = gradient_vector(net, vals, work, i, params, mechanism, side);
        h.col(c) = (gp - gm) / (2.0 * step);
      } else {
        h.col(c) = (gp - g0) / step;
      }
    }
  }
  return 0.5 * (h + h.transpose());
}

double max_eigenvalue(const Eigen::MatrixXd& h) {
  if (h.size() == 0) return -std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

}  // namespace

AgentHessian utility_hessian(const Network& net, const ValuationProfile& vals, const Profile& profile,
                             AgentId i, const MechanismParams& params, Mechanism mechanism) {
  validate_profile(net, profile);
  if (i >= net.agents()) throw std::out_of_range("agent index out of range");
  AgentHessian out;
  out.agent = i;
  out.right = side_hessian(net, vals, profile, i, params, mechanism, Side::Right);
  const Eigen::Index first_price = mechanism == Mechanism::Sbb ? 2 : 1;
  if (profile[i].y > 0.0) {
    out.left = side_hessian(net, vals, profile, i, params, mechanism, Side::Left);
    out.max_eigenvalue = std::max(max_eigenvalue(out.right), max_eigenvalue(out.left));
  } else {
    // y sits on its bound; only the remaining block has to be negative definite.
    const Eigen::Index n = out.right.rows() - 1;
    out.max_eigenvalue = max_eigenvalue(out.right.bottomRightCorner(n, n));
  }
  for (Eigen::Index c = first_price; c < out.right.rows(); ++c) {
    out.price_diagonal_error = std::max(out.price_diagonal_error, std::abs(out.right(c, c) + 2.0));
  }
  return out;
}

EtaCertificate validate_eta(const Network& net, const ValuationProfile& vals, const KktCertificate& cert,
                            const MechanismParams& params, Mechanism mechanism, const EtaConfig& config) {
  validate_params(params, mechanism);
  const Profile profile = construct_ne_from_kkt(net, cert, mechanism);
  MechanismParams cur = params;
  std::vector<double> history;
  for (std::size_t attempt = 0;; ++attempt) {
    EtaCertificate out;
    out.params = cur;
    out.shrinks = attempt;
    out.max_eigenvalue = -std::numeric_limits<double>::infinity();
    for (AgentId i = 0; i < net.agents(); ++i) {
      auto h = utility_hessian(net, vals, profile, i, cur, mechanism);
      out.max_eigenvalue = std::max(out.max_eigenvalue, h.max_eigenvalue);
      out.price_diagonal_error = std::max(out.price_diagonal_error, h.price_diagonal_error);
      out.hessians.push_back(std::move(h));
    }
    history.push_back(out.max_eigenvalue);
    if (out.max_eigenvalue <= config.eigenvalue_ceiling) return out;
    if (attempt >= config.max_shrinks) {
      throw EtaValidationError("agent Hessians not negative definite after " + std::to_string(attempt) +
                                   " shrinks (eta = " + std::to_string(cur.eta) +
                                   ", max eigenvalue = " + std::to_string(out.max_eigenvalue) + ")",
                               history);
    }
    cur.eta *= config.shrink_factor;
    if (mechanism == Mechanism::Sbb) cur.zeta *= config.shrink_factor;
  }
}

// ---------------------------------------------------------------------------
// Single-active-agent probe

bool ProbeReport::demonstrated() const {
  if (cases.empty() || !shared_links_agree) return false;
  return std::all_of(cases.begin(), cases.end(), [](const ProbeCase& c) {
    return c.stationarity_vacuous_pure && c.stationarity_binds_corrected;
  });
}

ProbeReport extraneous_equilibria_probe(const Network& net, const ValuationProfile& vals,
                                        const MechanismParams& params, std::size_t count) {
  validate_params(params, Mechanism::Wbb);
  static constexpr double kDemands[] = {0.25, 0.5, 1.0, 2.0, 4.0};
  ProbeReport report;
  const std::size_t n = net.agents();
  for (std::size_t c = 0; c < count; ++c) {
    ProbeCase pc;
    pc.agent = c % n;
    pc.demand = kDemands[(c / n) % std::size(kDemands)];
    const AgentId k = pc.agent;

    Profile profile(n);
    for (AgentId j = 0; j < n; ++j) profile[j].p.assign(net.route(j).size(), 0.5);
    profile[k].y = pc.demand;
    const auto y = demands(profile);

    const auto x_pure = allocate(net, y, AllocationRule::PureProportional);
    const auto x_corr = allocate(net, y, AllocationRule::Corrected);
    const auto route = net.route(k);
    const auto alpha = net.route_alpha(k);

    // Every other case quotes prices that make the corrected gap vanish.
    if (c % 2 == 1) {
      const double target = vals.at(k).d1(x_corr[k]);
      for (std::size_t s = 0; s < route.size(); ++s) {
        const double q = target / (alpha[s] * static_cast<double>(route.size()));
        for (const auto& m : net.members(route[s])) profile[m.agent].p[m.slot] = q;
      }
    }

    auto price_sum = [&] {
      double s = 0.0;
      for (std::size_t t = 0; t < route.size(); ++t) s += profile[k].p[t] * alpha[t];
      return s;
    };
    pc.gap_pure = vals.at(k).d1(x_pure[k]) - price_sum();
    pc.gap_corrected = vals.at(k).d1(x_corr[k]) - price_sum();

    pc.beta_pure = demand_sensitivity(net, y, k, Side::Right, AllocationRule::PureProportional).dx[k];
    pc.beta_corrected = demand_sensitivity(net, y, k, Side::Right, AllocationRule::Corrected).dx[k];
    const double h = 1e-7 * std::max(1.0, pc.demand);
    auto yh = y;
    yh[k] += h;
    pc.beta_pure_fd = (allocate(net, yh, AllocationRule::PureProportional)[k] - x_pure[k]) / h;
    pc.beta_corrected_fd = (allocate(net, yh, AllocationRule::Corrected)[k] - x_corr[k]) / h;

    pc.dy_pure =
        utility_gradient(net, vals, profile, k, params, Mechanism::Wbb, AllocationRule::PureProportional).dy_right;
    pc.dy_corrected =
        utility_gradient(net, vals, profile, k, params, Mechanism::Wbb, AllocationRule::Corrected).dy_right;

    pc.stationarity_vacuous_pure = std::abs(pc.beta_pure) <= 1e-12 && std::abs(pc.dy_pure) <= 1e-10;
    const bool gap_zero = std::abs(pc.gap_corrected) <= 1e-9;
    pc.stationarity_binds_corrected =
        pc.beta_corrected > 0.0 && (gap_zero ? std::abs(pc.dy_corrected) <= 1e-9 : std::abs(pc.dy_corrected) > 1e-9);
    report.cases.push_back(pc);
  }

  // With every agent active, each link has at least two active agents.
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<double> y(n);
    for (AgentId j = 0; j < n; ++j) y[j] = 0.5 + 0.37 * static_cast<double>((j + 1) * (trial + 1) % 7);
    const auto a = allocate(net, y, AllocationRule::PureProportional);
    const auto b = allocate(net, y, AllocationRule::Corrected);
    if (a != b) report.shared_links_agree = false;
  }
  return report;
}

}  // namespace netmech
