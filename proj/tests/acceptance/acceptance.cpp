// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "netmech/centralized.hpp"
#include "netmech/game.hpp"
#include "netmech/sbb.hpp"
#include "netmech/scenario.hpp"
#include "oracles.hpp"

using namespace netmech;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, const Verdict& v, Clock::time_point t0) {
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  std::printf("criterion %2d: %s  %s [%s] (%.2fs)\n", id, v.pass ? "PASS" : "FAIL", title, v.detail.c_str(), secs);
  std::fflush(stdout);
  if (!v.pass) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

struct SuiteInstance {
  std::string name;
  NetworkSpec spec;
  ValuationProfile vals;
};

// Desk-scale suite shared by criteria 4, 5, 6 and 8.
std::vector<SuiteInstance> build_suite() {
  std::vector<SuiteInstance> suite;
  suite.push_back({"example-1", oracle::example1_spec(), oracle::example1_vals()});
  suite.push_back({"two-binding-links", oracle::two_binding_links_spec(), {{1.0, 1.0}, {1.0, 1.0}}});
  const std::size_t shapes[][2] = {{2, 1}, {3, 1}, {3, 2}, {4, 2}, {4, 3}, {5, 2}};
  std::uint64_t seed = 100;
  for (const auto& s : shapes) {
    for (int k = 0; k < 4; ++k, ++seed) {
      InstanceShape shape;
      shape.agents = s[0];
      shape.links = s[1];
      shape.capacity_lo = 1.0;
      shape.capacity_hi = 3.0;
      std::mt19937_64 rng(seed);
      auto inst = random_instance(rng, shape);
      suite.push_back({"random-n" + std::to_string(s[0]) + "-l" + std::to_string(s[1]) + "-s" + std::to_string(seed),
                       std::move(inst.spec), std::move(inst.valuations)});
    }
  }
  return suite;
}

// Every certificate produced anywhere in the run, for criterion 2.
double worst_kkt = 0.0;
std::size_t kkt_count = 0;
bool kkt_failed = false;

KktCertificate solve_logged(const Network& net, const ValuationProfile& vals) {
  try {
    auto cert = solve_cp(net, vals);
    worst_kkt = std::max(worst_kkt, cert.residuals.max());
    ++kkt_count;
    return cert;
  } catch (const SolverError& e) {
    kkt_failed = true;
    worst_kkt = std::max(worst_kkt, e.best().residuals.max());
    ++kkt_count;
    return e.best();
  }
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---------------------------------------------------------------------------

Verdict criterion1() {
  const double step = 1e-3;
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::mt19937_64 rng(2024);
  for (int k = 0; k < 200; ++k) {
    InstanceShape shape;
    shape.agents = 2 + static_cast<std::size_t>(k % 2);
    shape.links = 1 + static_cast<std::size_t>((k / 2) % 2);
    const auto inst = random_instance(rng, shape);
    Network net(inst.spec);
    const auto cert = solve_logged(net, inst.valuations);
    const auto grid = brute_force_cp(net, inst.valuations, step);
    const double err = max_abs_diff(cert.x_star, grid);
    if (err > worst) {
      worst = err;
      worst_name = "instance " + std::to_string(k);
    }
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  Verdict v;
  v.pass = worst <= 2.0 * step && secs < 60.0;
  v.detail = "200 instances, worst |x_cp - x_grid|_inf = " + fmt("%.3g", worst) + " (" + worst_name +
             "), bound 2e-3, " + fmt("%.1f", secs) + "s of 60s";
  return v;
}

Verdict criterion3() {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_violation = -1.0, most_negative = 0.0;
  std::size_t profiles = 0;
  for (int k = 0; k < 20; ++k) {
    InstanceShape shape;
    shape.agents = 2 + static_cast<std::size_t>(k % 4);
    shape.links = 1 + static_cast<std::size_t>(k % 3);
    const auto inst = random_instance(rng, shape);
    Network net(inst.spec);
    std::vector<std::vector<double>> ys;
    // On equilibrium, when the instance admits one.
    const auto cert = solve_logged(net, inst.valuations);
    if (satisfies_a4(net, cert.x_star)) ys.push_back(demands(construct_ne_from_kkt(net, cert, Mechanism::Wbb)));
    while (ys.size() < 500) {
      std::vector<double> y(net.agents());
      const double scale = std::pow(10.0, -4.0 + 8.0 * unit(rng));
      for (auto& v : y) v = unit(rng) < 0.3 ? 0.0 : scale * unit(rng);
      ys.push_back(std::move(y));
    }
    for (const auto& y : ys) {
      const auto x = allocate(net, y);
      const auto load = link_loads(net, x);
      for (LinkId l = 0; l < net.links(); ++l) worst_violation = std::max(worst_violation, load[l] - net.capacity(l));
      for (double xi : x) most_negative = std::min(most_negative, xi);
      ++profiles;
    }
  }
  Verdict v;
  v.pass = profiles >= 10000 && worst_violation <= 1e-12 && most_negative >= 0.0;
  v.detail = std::to_string(profiles) + " profiles on 20 instances, max(load - c) = " + fmt("%.3g", worst_violation) +
             ", min x = " + fmt("%.3g", most_negative);
  return v;
}

struct SuiteResults {
  std::size_t in_scope = 0, out_of_scope = 0;
  // criterion 4
  double worst_x_error = 0.0;
  double worst_gain = 0.0;
  std::size_t min_samples = static_cast<std::size_t>(-1);
  std::size_t dyn_runs = 0, dyn_converged = 0;
  double worst_dyn_x_error = 0.0;
  double worst_dyn_gain = 0.0;
  bool structured_present = true;
  // criterion 5
  double equal_prices = 0.0, comp_slack = 0.0, stationarity = 0.0, ir = 0.0, revenue_floor = 0.0;
  // criterion 6
  double sbb_budget = 0.0, rho_agreement = 0.0;
  std::size_t sbb_converged_equilibria = 0;
  // criterion 8
  double max_eig = -1e300, price_diag = 0.0;
  std::size_t shrinks = 0;
  bool eta_failed = false;
  std::string eta_failure;
};

SuiteResults run_suite(const std::vector<SuiteInstance>& suite) {
  SuiteResults res;
  res.revenue_floor = 1e300;
  BrConfig br;
  br.deviation_samples = 1000;
  for (const auto& inst : suite) {
    Network net(inst.spec);
    const auto cert = solve_logged(net, inst.vals);
    if (!satisfies_a4(net, cert.x_star)) {
      ++res.out_of_scope;
      continue;
    }
    ++res.in_scope;
    for (Mechanism mech : {Mechanism::Wbb, Mechanism::Sbb}) {
      MechanismParams params;  // eta = zeta = 1e-3
      try {
        const auto eta = validate_eta(net, inst.vals, cert, params, mech);
        res.max_eig = std::max(res.max_eig, eta.max_eigenvalue);
        res.price_diag = std::max(res.price_diag, eta.price_diagonal_error);
        res.shrinks += eta.shrinks;
        params = eta.params;
      } catch (const EtaValidationError& e) {
        res.eta_failed = true;
        res.eta_failure = inst.name + ": " + e.what();
      }

      const auto ne = construct_ne_from_kkt(net, cert, mech);
      const auto rep = verify_equilibrium(net, inst.vals, ne, params, mech, {}, br);
      res.worst_x_error = std::max(res.worst_x_error, max_abs_diff(rep.allocation, cert.x_star));
      res.worst_gain = std::max(res.worst_gain, rep.max_deviation_gain);
      res.min_samples = std::min(res.min_samples, rep.deviations_sampled);
      res.equal_prices = std::max(res.equal_prices, rep.check("equal_prices")->residual);
      res.comp_slack = std::max(res.comp_slack, rep.check("complementary_slackness")->residual);
      res.stationarity = std::max(res.stationarity, rep.check("stationarity")->residual);
      for (double u : rep.utilities) res.ir = std::min(res.ir, u);
      if (mech == Mechanism::Wbb) {
        double rev = 0.0;
        for (double t : rep.taxes) rev += t;
        res.revenue_floor = std::min(res.revenue_floor, rev);
      } else {
        res.sbb_budget = std::max(res.sbb_budget, rep.check("strong_budget_balance")->residual);
        res.rho_agreement = std::max(res.rho_agreement, rep.check("rho_agreement")->residual);
      }

      // Best-response dynamics from perturbed demand and rho; prices start at the equilibrium quotes.
      for (std::uint64_t s = 0; s < 2; ++s) {
        std::mt19937_64 rng(1000 + s);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        Profile init = ne;
        for (auto& m : init) {
          m.y *= 1.0 + 1e-3 * u(rng);
          if (mech == Mechanism::Sbb) m.rho *= 1.0 + 1e-3 * u(rng);
        }
        const auto dyn = iterate_best_response(net, inst.vals, init, params, mech, br);
        ++res.dyn_runs;
        if (!dyn.converged) continue;
        ++res.dyn_converged;
        res.worst_dyn_x_error = std::max(res.worst_dyn_x_error, max_abs_diff(dyn.allocation, cert.x_star));
        res.worst_dyn_gain = std::max(res.worst_dyn_gain, dyn.max_deviation_gain);
        res.min_samples = std::min(res.min_samples, dyn.deviations_sampled);
        if (mech == Mechanism::Sbb && dyn.equilibrium) {
          ++res.sbb_converged_equilibria;
          res.sbb_budget = std::max(res.sbb_budget, dyn.check("strong_budget_balance")->residual);
          res.rho_agreement = std::max(res.rho_agreement, dyn.check("rho_agreement")->residual);
        }
      }
    }
  }
  return res;
}

double sbb_identity_residual() {
  std::mt19937_64 rng(66);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  std::bernoulli_distribution zero(0.2);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    InstanceShape shape;
    shape.agents = 2 + static_cast<std::size_t>(k % 4);
    shape.links = 1 + static_cast<std::size_t>(k % 3);
    const auto inst = random_instance(rng, shape);
    Network net(inst.spec);
    std::vector<double> price(net.links());
    for (auto& p : price) p = u(rng);
    Profile prof(net.agents());
    for (AgentId i = 0; i < net.agents(); ++i) {
      prof[i].y = zero(rng) ? 0.0 : u(rng);
      for (LinkId l : net.route(i)) prof[i].p.push_back(price[l]);
    }
    const double r = scaling(net, demands(prof));
    for (auto& m : prof) m.rho = r;
    const auto out = outcome_sbb(net, inst.valuations, prof, {u(rng), u(rng) + 1e-3});
    worst = std::max(worst, std::abs(out.tax_sum));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Criterion 7

// Second-order one-sided difference, f'(x) from f(x), f(x +/- h), f(x +/- 2h).
double one_sided(const std::function<double(double)>& f, double x, double h, bool right) {
  const double s = right ? 1.0 : -1.0;
  return s * (-3.0 * f(x) + 4.0 * f(x + s * h) - f(x + 2.0 * s * h)) / (2.0 * h);
}

constexpr double kRelFloor = 1e-3;

Verdict criterion7() {
  double worst_y = 0.0, worst_p = 0.0, worst_rho = 0.0;
  std::size_t points = 0;
  for (Mechanism mech : {Mechanism::Wbb, Mechanism::Sbb}) {
    std::mt19937_64 rng(mech == Mechanism::Wbb ? 71 : 72);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t done = 0;
    while (done < 500) {
      InstanceShape shape;
      shape.agents = 2 + done % 4;
      shape.links = 1 + done % 3;
      const auto inst = random_instance(rng, shape);
      Network net(inst.spec);
      const MechanismParams params{0.01 + 0.2 * u(rng), 0.01 + 0.2 * u(rng)};
      const AgentId i = done % net.agents();
      Profile prof(net.agents());
      for (AgentId j = 0; j < net.agents(); ++j) {
        prof[j].y = (j != i && u(rng) < 0.3) ? 0.0 : 0.05 + 3.0 * u(rng);
        prof[j].rho = 2.0 * u(rng);
        for (std::size_t k = 0; k < net.route(j).size(); ++k) prof[j].p.push_back(2.0 * u(rng));
      }
      const auto g = utility_gradient(net, inst.valuations, prof, i, params, mech);
      auto util = [&](auto setter) {
        return [&, setter](double v) {
          Profile q = prof;
          setter(q, v);
          return agent_utility(net, inst.valuations, q, i, params, mech);
        };
      };
      const auto fy = util([i](Profile& q, double v) { q[i].y = v; });
      const double h = 1e-5 * std::max(1.0, prof[i].y);
      const double h_left = std::min(h, 0.25 * prof[i].y);
      worst_y = std::max(worst_y, oracle::rel_error(g.dy_right, one_sided(fy, prof[i].y, h, true), kRelFloor));
      worst_y = std::max(worst_y, oracle::rel_error(*g.dy_left, one_sided(fy, prof[i].y, h_left, false), kRelFloor));
      for (std::size_t k = 0; k < g.dp.size(); ++k) {
        const auto fp = util([i, k](Profile& q, double v) { q[i].p[k] = v; });
        worst_p = std::max(worst_p, oracle::rel_error(g.dp[k], one_sided(fp, prof[i].p[k], 1e-4, true), kRelFloor));
      }
      if (mech == Mechanism::Sbb) {
        const auto fr = util([i](Profile& q, double v) { q[i].rho = v; });
        worst_rho = std::max(worst_rho, oracle::rel_error(g.drho, one_sided(fr, prof[i].rho, 1e-4, true), kRelFloor));
      }
      ++done;
      ++points;
    }
  }

  // The two beta formulas, from the test's own reading of the definition.
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_b1 = 0.0, worst_b2 = 0.0;
  std::size_t n_b1 = 0, n_b2 = 0;
  for (int k = 0; n_b1 < 200 || n_b2 < 200; ++k) {
    InstanceShape shape;
    shape.agents = 2 + static_cast<std::size_t>(k % 3);
    shape.links = 1 + static_cast<std::size_t>(k % 2);
    const auto inst = random_instance(rng, shape);
    Network net(inst.spec);
    const AgentId i = static_cast<AgentId>(k) % net.agents();
    const bool single = k % 2 == 1;
    std::vector<double> y(net.agents());
    for (AgentId j = 0; j < net.agents(); ++j) y[j] = (single && j != i) ? 0.0 : 0.05 + 3.0 * u(rng);

    // Attaining link and its factor, computed here from the definition.
    double best = 1e300;
    LinkId q = 0;
    for (LinkId l = 0; l < net.links(); ++l) {
      NetworkSpec one;
      one.n_agents = net.agents();
      one.links = {inst.spec.links[l]};
      const double rl = oracle::scaling_factor(one, y);
      bool any = false;
      for (const auto& [j, a] : inst.spec.links[l].coefficients) any = any || y[j] > 0.0;
      if (any && rl < best) {
        best = rl;
        q = l;
      }
    }
    const auto& link = inst.spec.links[q];
    if (!link.coefficients.count(i)) continue;  // off-link case, not a beta formula
    const double c = link.capacity;
    double beta;
    if (single) {
      beta = c / (link.coefficients.at(i) * (y[i] + 1.0) * (y[i] + 1.0));
    } else {
      double others = 0.0;
      for (const auto& [j, a] : link.coefficients) {
        if (j != i) others += a * y[j];
      }
      beta = best * best / c * others;
    }
    auto fx = [&](double v) {
      auto yy = y;
      yy[i] = v;
      return oracle::allocation(inst.spec, yy)[i];
    };
    const double fd = one_sided(fx, y[i], 1e-5, true);
    const double lib = demand_sensitivity(net, y, i, Side::Right).dx[i];
    const double err = std::max(oracle::rel_error(beta, fd, 1e-12), oracle::rel_error(lib, beta, 1e-12));
    if (single && n_b2 < 200) {
      worst_b2 = std::max(worst_b2, err);
      ++n_b2;
    } else if (!single && n_b1 < 200) {
      worst_b1 = std::max(worst_b1, err);
      ++n_b1;
    }
  }

  Verdict v;
  v.pass = worst_y <= 1e-4 && worst_p <= 1e-4 && worst_rho <= 1e-4 && worst_b1 <= 1e-4 && worst_b2 <= 1e-4;
  v.detail = std::to_string(points) + " points; rel err y " + fmt("%.2g", worst_y) + ", p " + fmt("%.2g", worst_p) +
             ", rho " + fmt("%.2g", worst_rho) + "; B1 " + fmt("%.2g", worst_b1) + " (" + std::to_string(n_b1) +
             "), B2 " + fmt("%.2g", worst_b2) + " (" + std::to_string(n_b2) + ")";
  return v;
}

Verdict criterion9() {
  Verdict v;
  std::size_t cases = 0;
  bool all = true;
  double min_beta = 1e300;
  for (const auto& [spec, vals] : {std::pair{oracle::example1_spec(), oracle::example1_vals()},
                                   std::pair{oracle::two_binding_links_spec(), ValuationProfile{{2, 1}, {1.5, 2}}}}) {
    Network net(spec);
    const auto probe = extraneous_equilibria_probe(net, vals, {}, 10);
    all = all && probe.demonstrated() && probe.cases.size() == 10;
    for (const auto& c : probe.cases) {
      min_beta = std::min(min_beta, c.beta_corrected);
      all = all && c.beta_pure == 0.0 && std::abs(c.beta_pure_fd) <= 1e-9 &&
            oracle::rel_error(c.beta_corrected, c.beta_corrected_fd) <= 1e-4;
      ++cases;
    }
  }
  v.pass = all;
  v.detail = std::to_string(cases) + " single-active profiles: pure beta = 0 with vacuous y-condition, corrected beta >= " +
             fmt("%.3g", min_beta) + " and y-condition binding";
  return v;
}

Verdict criterion10() {
  Verdict v;
  v.pass = true;
  for (const char* file : {"example1_wbb.json", "example1_sbb.json", "random_4x2.json"}) {
    const auto sc = load_scenario(std::string(NETMECH_SCENARIOS) + "/" + file);
    const auto a = report_to_json(run(sc), false);
    const auto b = report_to_json(run(sc), false);
    if (a != b) {
      v.pass = false;
      v.detail += std::string(file) + " differs; ";
    }
  }
  if (v.pass) v.detail = "3 scenarios, byte-identical reports without timing";
  return v;
}

}  // namespace

int main() {
  const auto start = Clock::now();

  auto t = Clock::now();
  report(1, "solver matches brute-force grid", criterion1(), t);

  t = Clock::now();
  const Verdict v3 = criterion3();

  const auto suite = build_suite();
  const SuiteResults s = run_suite(suite);

  {
    Verdict v;
    v.pass = !kkt_failed && worst_kkt <= 1e-8;
    v.detail = std::to_string(kkt_count) + " certificates, worst residual " + fmt("%.3g", worst_kkt);
    report(2, "KKT certificates", v, t);
  }
  report(3, "allocation feasible everywhere", v3, t);
  {
    Verdict v;
    v.pass = s.in_scope > 0 && s.worst_x_error <= 1e-5 && s.worst_gain <= 1e-6 && s.min_samples >= 1000 &&
             s.worst_dyn_x_error <= 1e-5 && s.worst_dyn_gain <= 1e-6;
    v.detail = std::to_string(s.in_scope) + " in-scope / " + std::to_string(s.out_of_scope) +
               " out-of-scope instances; constructed |x - x*| " + fmt("%.2g", s.worst_x_error) + ", gain " +
               fmt("%.2g", s.worst_gain) + "; BR converged " + std::to_string(s.dyn_converged) + "/" +
               std::to_string(s.dyn_runs) + ", |x - x*| " + fmt("%.2g", s.worst_dyn_x_error) + ", gain " +
               fmt("%.2g", s.worst_dyn_gain) + "; >= " + std::to_string(s.min_samples) + " deviations per agent";
    report(4, "full implementation", v, t);
  }
  {
    Verdict v;
    v.pass = s.equal_prices == 0.0 && s.comp_slack <= 1e-8 && s.stationarity <= 1e-7 && s.ir >= -1e-10 &&
             s.revenue_floor >= -1e-10;
    v.detail = "equal prices " + fmt("%.2g", s.equal_prices) + ", comp slack " + fmt("%.2g", s.comp_slack) +
               ", stationarity " + fmt("%.2g", s.stationarity) + ", min utility " + fmt("%.3g", s.ir) +
               ", min WBB revenue " + fmt("%.3g", s.revenue_floor);
    report(5, "equilibrium properties at constructed NE", v, t);
  }
  {
    t = Clock::now();
    const double identity = sbb_identity_residual();
    Verdict v;
    v.pass = s.sbb_budget <= 1e-10 && s.rho_agreement <= 1e-8 && identity <= 1e-10;
    v.detail = "|sum t| at equilibria " + fmt("%.2g", s.sbb_budget) + " (constructed + " +
               std::to_string(s.sbb_converged_equilibria) + " converged), rho agreement " +
               fmt("%.2g", s.rho_agreement) + ", 1000 equal-price rho=r profiles " + fmt("%.2g", identity);
    report(6, "strong budget balance", v, t);
  }
  t = Clock::now();
  report(7, "gradient fidelity", criterion7(), t);
  {
    Verdict v;
    v.pass = !s.eta_failed && s.max_eig <= -1e-8 && s.price_diag <= 1e-9;
    v.detail = "max eigenvalue " + fmt("%.3g", s.max_eig) + ", |H_pp + 2| " + fmt("%.2g", s.price_diag) +
               ", total eta shrinks " + std::to_string(s.shrinks) + (s.eta_failed ? "; " + s.eta_failure : "");
    report(8, "negative-definite agent Hessians", v, Clock::now());
  }
  t = Clock::now();
  report(9, "extraneous-equilibria probe", criterion9(), t);
  t = Clock::now();
  {
    Verdict v = criterion10();
    const double total = std::chrono::duration<double>(Clock::now() - start).count();
    v.pass = v.pass && total < 300.0;
    v.detail += ", whole run " + fmt("%.1f", total) + "s of 300s";
    report(10, "determinism and runtime", v, t);
  }

  std::printf("%s: %d criterion(s) failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
