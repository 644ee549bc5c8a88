#include "netmech/centralized.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace netmech {

double KktResiduals::max() const { return std::max({primal, dual, comp_slack, stationarity}); }

double social_welfare(const ValuationProfile& vals, std::span<const double> x) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += vals.at(i).value(x[i]);
  return total;
}

std::vector<double> link_loads(const Network& net, std::span<const double> x) {
  std::vector<double> load(net.links(), 0.0);
  for (LinkId l = 0; l < net.links(); ++l) {
    for (const auto& m : net.members(l)) load[l] += m.alpha * x[m.agent];
  }
  return load;
}

KktResiduals check_kkt(const Network& net, const ValuationProfile& vals, std::span<const double> x,
                       std::span<const double> lambda) {
  if (x.size() != net.agents() || lambda.size() != net.links() || vals.size() != net.agents()) {
    throw std::invalid_argument("check_kkt: dimension mismatch");
  }
  KktResiduals res;
  const auto load = link_loads(net, x);
  for (AgentId i = 0; i < net.agents(); ++i) res.primal = std::max(res.primal, -x[i]);
  for (LinkId l = 0; l < net.links(); ++l) {
    const double excess = load[l] - net.capacity(l);
    res.primal = std::max(res.primal, excess);
    res.dual = std::max(res.dual, -lambda[l]);
    res.comp_slack = std::max(res.comp_slack, std::abs(lambda[l] * excess));
  }
  for (AgentId i = 0; i < net.agents(); ++i) {
    double price = 0.0;
    const auto route = net.route(i);
    const auto alpha = net.route_alpha(i);
    for (std::size_t k = 0; k < route.size(); ++k) price += lambda[route[k]] * alpha[k];
    if (x[i] > 0.0) {
      res.stationarity = std::max(res.stationarity, std::abs(vals[i].d1(x[i]) - price));
    } else {
      res.stationarity = std::max(res.stationarity, std::max(0.0, vals[i].d1(0.0) - price));
    }
  }
  return res;
}

namespace {

// Box cap that never binds at the optimum: twice the tightest single-link bound.
std::vector<double> rate_caps(const Network& net) {
  std::vector<double> cap(net.agents(), std::numeric_limits<double>::infinity());
  for (AgentId i = 0; i < net.agents(); ++i) {
    const auto route = net.route(i);
    const auto alpha = net.route_alpha(i);
    for (std::size_t k = 0; k < route.size(); ++k) cap[i] = std::min(cap[i], net.capacity(route[k]) / alpha[k]);
    cap[i] *= 2.0;
  }
  return cap;
}

struct DualPoint {
  std::vector<double> lambda;
  std::vector<double> mu;  // aggregated price per agent
  std::vector<double> x;
  std::vector<bool> interior;
  double value = 0.0;  // dual function, to be minimised
  Eigen::VectorXd grad;
};

DualPoint evaluate_dual(const Network& net, const ValuationProfile& vals, const std::vector<double>& cap,
                        std::vector<double> lambda) {
  DualPoint d;
  d.lambda = std::move(lambda);
  d.mu.assign(net.agents(), 0.0);
  d.x.assign(net.agents(), 0.0);
  d.interior.assign(net.agents(), false);
  for (AgentId i = 0; i < net.agents(); ++i) {
    const auto route = net.route(i);
    const auto alpha = net.route_alpha(i);
    double mu = 0.0;
    for (std::size_t k = 0; k < route.size(); ++k) mu += d.lambda[route[k]] * alpha[k];
    double x = vals[i].inverse_marginal(mu);
    if (x >= cap[i]) {
      x = cap[i];
    } else if (x > 0.0) {
      d.interior[i] = true;
    }
    d.mu[i] = mu;
    d.x[i] = x;
    d.value += vals[i].value(x) - mu * x;
  }
  d.grad.resize(static_cast<Eigen::Index>(net.links()));
  const auto load = link_loads(net, d.x);
  for (LinkId l = 0; l < net.links(); ++l) {
    d.value += d.lambda[l] * net.capacity(l);
    d.grad[static_cast<Eigen::Index>(l)] = net.capacity(l) - load[l];
  }
  return d;
}

Eigen::MatrixXd dual_hessian(const Network& net, const ValuationProfile& vals, const DualPoint& d) {
  const auto L = static_cast<Eigen::Index>(net.links());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(L, L);
  for (AgentId i = 0; i < net.agents(); ++i) {
    if (!d.interior[i]) continue;
    const double w = vals[i].a / (d.mu[i] * d.mu[i]);
    const auto route = net.route(i);
    const auto alpha = net.route_alpha(i);
    for (std::size_t p = 0; p < route.size(); ++p) {
      for (std::size_t q = 0; q < route.size(); ++q) {
        h(static_cast<Eigen::Index>(route[p]), static_cast<Eigen::Index>(route[q])) += w * alpha[p] * alpha[q];
      }
    }
  }
  return h;
}

KktCertificate certify(const Network& net, const ValuationProfile& vals, const DualPoint& d, std::size_t iters) {
  KktCertificate cert;
  cert.x_star = d.x;
  cert.lambda_star = d.lambda;
  cert.nu_star.resize(net.agents());
  for (AgentId i = 0; i < net.agents(); ++i) {
    cert.nu_star[i] = std::max(0.0, d.mu[i] - vals[i].d1(d.x[i]));
  }
  cert.residuals = check_kkt(net, vals, cert.x_star, cert.lambda_star);
  cert.iterations = iters;
  return cert;
}

}  // namespace

KktCertificate solve_cp(const Network& net, const ValuationProfile& vals, const SolverConfig& config) {
  if (!(config.tolerance > 0.0)) throw std::invalid_argument("solver tolerance must be positive");
  if (!valid_valuations(vals, net.agents())) throw std::invalid_argument("valuation profile does not match network");

  const std::size_t L = net.links();
  std::vector<double> lambda = config.initial_lambda;
  if (lambda.empty()) lambda.assign(L, 1.0);
  if (lambda.size() != L) throw std::invalid_argument("initial_lambda has wrong length");
  for (double& v : lambda) v = std::max(v, 0.0);

  const auto cap = rate_caps(net);
  DualPoint cur = evaluate_dual(net, vals, cap, lambda);
  KktCertificate best = certify(net, vals, cur, 0);

  // A few extra Newton steps past the tolerance cost little and tighten x★.
  const double polish_target = 1e-4 * config.tolerance;
  std::size_t polish = 0;
  for (std::size_t iter = 1; iter <= config.max_iterations; ++iter) {
    if (best.residuals.within(config.tolerance)) {
      if (best.residuals.max() <= polish_target || ++polish > 3) break;
    }

    // Bound-active set: multiplier at (or near) zero with the gradient pushing it negative.
    double proj_norm = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      const double moved = std::max(0.0, cur.lambda[l] - cur.grad[static_cast<Eigen::Index>(l)]);
      proj_norm = std::max(proj_norm, std::abs(cur.lambda[l] - moved));
    }
    const double eps = std::min(1e-3, proj_norm);
    std::vector<std::size_t> free_set;
    std::vector<bool> bound(L, false);
    for (std::size_t l = 0; l < L; ++l) {
      if (cur.lambda[l] <= eps && cur.grad[static_cast<Eigen::Index>(l)] > 0.0) {
        bound[l] = true;
      } else {
        free_set.push_back(l);
      }
    }

    const Eigen::MatrixXd hess = dual_hessian(net, vals, cur);
    Eigen::VectorXd dir = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L));
    if (!free_set.empty()) {
      const auto F = static_cast<Eigen::Index>(free_set.size());
      Eigen::MatrixXd hf(F, F);
      Eigen::VectorXd gf(F);
      double scale = 1.0;
      for (Eigen::Index a = 0; a < F; ++a) {
        gf[a] = cur.grad[static_cast<Eigen::Index>(free_set[a])];
        for (Eigen::Index b = 0; b < F; ++b) {
          hf(a, b) = hess(static_cast<Eigen::Index>(free_set[a]), static_cast<Eigen::Index>(free_set[b]));
        }
        scale = std::max(scale, hf(a, a));
      }
      hf.diagonal().array() += config.regularization * scale;
      Eigen::VectorXd step = -hf.ldlt().solve(gf);
      if (!step.allFinite() || step.dot(gf) >= 0.0) step = -gf;
      for (Eigen::Index a = 0; a < F; ++a) dir[static_cast<Eigen::Index>(free_set[a])] = step[a];
    }
    for (std::size_t l = 0; l < L; ++l) {
      if (bound[l]) dir[static_cast<Eigen::Index>(l)] = -cur.grad[static_cast<Eigen::Index>(l)];
    }

    // Armijo backtracking along the projection arc. Near the optimum the dual
    // value stops resolving the decrease, so a full step that shrinks the
    // projected gradient is also accepted.
    auto pg_norm = [L](const DualPoint& d) {
      double m = 0.0;
      for (std::size_t l = 0; l < L; ++l) {
        const double g = d.grad[static_cast<Eigen::Index>(l)];
        m = std::max(m, std::abs(d.lambda[l] - std::max(0.0, d.lambda[l] - g)));
      }
      return m;
    };
    double s = 1.0;
    bool accepted = false;
    for (int k = 0; k < 80 && !accepted; ++k, s *= 0.5) {
      std::vector<double> trial(L);
      for (std::size_t l = 0; l < L; ++l) trial[l] = std::max(0.0, cur.lambda[l] + s * dir[static_cast<Eigen::Index>(l)]);
      DualPoint next = evaluate_dual(net, vals, cap, std::move(trial));
      double decrease = 0.0;
      for (std::size_t l = 0; l < L; ++l) {
        decrease += cur.grad[static_cast<Eigen::Index>(l)] * (next.lambda[l] - cur.lambda[l]);
      }
      const bool unresolved = std::abs(decrease) <= 1e-12 * std::max(1.0, std::abs(cur.value));
      const bool full_step_helps = k == 0 && unresolved && pg_norm(next) < 0.5 * pg_norm(cur);
      if (next.value <= cur.value + config.armijo * decrease || next.value <= cur.value || full_step_helps) {
        cur = std::move(next);
        accepted = true;
      }
    }
    if (!accepted) {
      // Rounding floor: the line search can no longer tell points apart.
      break;
    }
    KktCertificate cert = certify(net, vals, cur, iter);
    if (cert.residuals.max() <= best.residuals.max()) best = std::move(cert);
    best.iterations = iter;
  }

  best.optimal = best.residuals.within(config.tolerance);
  if (!best.optimal) {
    throw SolverError("solve_cp did not reach the KKT tolerance", best);
  }
  return best;
}

std::vector<double> brute_force_cp(const Network& net, const ValuationProfile& vals, double grid_step) {
  const std::size_t n = net.agents();
  if (n > 3) throw std::invalid_argument("brute_force_cp supports at most three agents");
  if (!(grid_step > 0.0)) throw std::invalid_argument("grid_step must be positive");

  auto coeff = [&](AgentId i, LinkId l) { return net.uses(i, l) ? net.spec().links[l].coefficients.at(i) : 0.0; };

  // Largest rate of agent i given the residual capacities.
  auto max_rate = [&](AgentId i, const std::vector<double>& residual) {
    double best = std::numeric_limits<double>::infinity();
    for (LinkId l : net.route(i)) best = std::min(best, residual[l] / coeff(i, l));
    return std::max(best, 0.0);
  };
  auto consume = [&](std::vector<double>& residual, AgentId i, double rate) {
    for (LinkId l : net.route(i)) residual[l] -= coeff(i, l) * rate;
  };
  auto table = [&](AgentId i, std::size_t count) {
    std::vector<double> t(count);
    for (std::size_t k = 0; k < count; ++k) t[k] = vals[i].value(static_cast<double>(k) * grid_step);
    return t;
  };

  std::vector<double> capacity(net.links());
  for (LinkId l = 0; l < net.links(); ++l) capacity[l] = net.capacity(l);

  std::vector<double> best_x(n, 0.0);
  double best_value = -std::numeric_limits<double>::infinity();

  // One agent (the filler) takes whatever its route leaves after the gridded
  // agents, then the gridded agents are topped up in order so every candidate
  // is maximal. With a single filler a zero-rate agent would absorb the slack
  // and bias the result, so every agent takes a turn as filler.
  for (AgentId filler = 0; filler < n; ++filler) {
    std::vector<AgentId> outer;
    for (AgentId i = 0; i < n; ++i)
      if (i != filler) outer.push_back(i);
    std::vector<std::size_t> count;
    std::vector<std::vector<double>> tab;
    for (AgentId i : outer) {
      count.push_back(static_cast<std::size_t>(std::floor(max_rate(i, capacity) / grid_step)) + 1);
      tab.push_back(table(i, count.back()));
    }

    std::vector<double> x(n, 0.0), res(net.links()), res0(net.links());
    auto evaluate = [&](double base) {
      x[filler] = max_rate(filler, res);
      consume(res, filler, x[filler]);
      double value = base + vals[filler].value(x[filler]);
      for (AgentId i : outer) {
        const double extra = max_rate(i, res);
        if (extra > 0.0) {
          value += vals[i].value(x[i] + extra) - vals[i].value(x[i]);
          x[i] += extra;
          consume(res, i, extra);
        }
      }
      if (value > best_value) {
        best_value = value;
        best_x = x;
      }
    };

    if (outer.empty()) {
      res = capacity;
      evaluate(0.0);
      continue;
    }
    if (outer.size() == 1) {
      const AgentId a = outer[0];
      for (std::size_t ka = 0; ka < count[0]; ++ka) {
        x[a] = static_cast<double>(ka) * grid_step;
        res = capacity;
        consume(res, a, x[a]);
        evaluate(tab[0][ka]);
      }
      continue;
    }

    const AgentId a = outer[0], b = outer[1];
    for (std::size_t ka = 0; ka < count[0]; ++ka) {
      const double xa = static_cast<double>(ka) * grid_step;
      res0 = capacity;
      consume(res0, a, xa);
      const auto cb = std::min(count[1], static_cast<std::size_t>(std::floor(max_rate(b, res0) / grid_step)) + 1);
      for (std::size_t kb = 0; kb < cb; ++kb) {
        x[a] = xa;
        x[b] = static_cast<double>(kb) * grid_step;
        res = res0;
        consume(res, b, x[b]);
        evaluate(tab[0][ka] + tab[1][kb]);
      }
    }
  }
  return best_x;
}

}  // namespace netmech
