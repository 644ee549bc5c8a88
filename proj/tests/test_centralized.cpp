#include <gtest/gtest.h>

#include <cmath>

#include "netmech/centralized.hpp"
#include "oracles.hpp"

using namespace netmech;

TEST(SolveCp, ExampleOneMatchesHandSolution) {
  Network net(oracle::example1_spec());
  const auto cert = solve_cp(net, oracle::example1_vals());
  ASSERT_TRUE(cert.optimal);
  EXPECT_NEAR(cert.x_star[0], 5.0 / 7.0, 1e-9);
  EXPECT_NEAR(cert.x_star[1], 2.0 / 7.0, 1e-9);
  EXPECT_NEAR(cert.lambda_star[0], 7.0 / 6.0, 1e-9);
  EXPECT_LE(cert.residuals.max(), 1e-8);
}

TEST(SolveCp, SymmetricAgentsSplitEvenly) {
  Network net(oracle::example1_spec());
  const auto cert = solve_cp(net, {{1.0, 1.0}, {1.0, 1.0}});
  EXPECT_NEAR(cert.x_star[0], 0.5, 1e-9);
  EXPECT_NEAR(cert.x_star[1], 0.5, 1e-9);
}

TEST(SolveCp, BothLinksBindOnTheTwoLinkInstance) {
  Network net(oracle::two_binding_links_spec());
  const auto cert = solve_cp(net, {{1.0, 1.0}, {1.0, 1.0}});
  EXPECT_NEAR(cert.x_star[0], 1.0 / 3.0, 1e-9);
  EXPECT_NEAR(cert.x_star[1], 1.0 / 3.0, 1e-9);
  EXPECT_NEAR(cert.lambda_star[0], 0.25, 1e-9);
  EXPECT_NEAR(cert.lambda_star[1], 0.25, 1e-9);
}

TEST(SolveCp, SlackLinkHasZeroPrice) {
  NetworkSpec s = oracle::example1_spec();
  s.links.push_back({1, 100.0, {{0, 1.0}, {1, 1.0}}});
  s.routes = {{0, 1}, {0, 1}};
  Network net(s);
  const auto cert = solve_cp(net, oracle::example1_vals());
  EXPECT_NEAR(cert.lambda_star[1], 0.0, 1e-12);
  EXPECT_NEAR(cert.x_star[0], 5.0 / 7.0, 1e-9);
}

TEST(SolveCp, BoundaryAgentGetsNothing) {
  Network net(oracle::example1_spec());
  const auto cert = solve_cp(net, {{10.0, 10.0}, {0.1, 1.0}});
  EXPECT_EQ(cert.x_star[1], 0.0);
  EXPECT_NEAR(cert.x_star[0], 1.0, 1e-9);
  EXPECT_GT(cert.nu_star[1], 0.0);
}

TEST(SolveCp, AgreesWithBisectionOracleOnSingleLinks) {
  std::mt19937_64 rng(11);
  InstanceShape shape;
  shape.links = 1;
  for (int trial = 0; trial < 50; ++trial) {
    shape.agents = 2 + trial % 4;
    const auto inst = random_instance(rng, shape);
    Network net(inst.spec);
    std::vector<double> a, b, alpha;
    for (AgentId i = 0; i < net.agents(); ++i) {
      a.push_back(inst.valuations[i].a);
      b.push_back(inst.valuations[i].b);
      alpha.push_back(inst.spec.links[0].coefficients.at(i));
    }
    const auto ref = oracle::single_link_cp(a, b, alpha, inst.spec.links[0].capacity);
    const auto cert = solve_cp(net, inst.valuations);
    for (AgentId i = 0; i < net.agents(); ++i) EXPECT_NEAR(cert.x_star[i], ref.x[i], 1e-8);
    EXPECT_NEAR(cert.lambda_star[0], ref.lambda, 1e-8);
  }
}

TEST(SolveCp, NonConvergenceCarriesBestIterate) {
  Network net(oracle::example1_spec());
  SolverConfig cfg;
  cfg.max_iterations = 0;
  try {
    solve_cp(net, oracle::example1_vals(), cfg);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.best().x_star.size(), 2u);
    EXPECT_FALSE(e.best().optimal);
  }
}

TEST(CheckKkt, ReportsViolationsWithoutThrowing) {
  Network net(oracle::example1_spec());
  const auto vals = oracle::example1_vals();
  const std::vector<double> x{5.0 / 7.0, 2.0 / 7.0};
  EXPECT_LE(check_kkt(net, vals, x, std::vector<double>{7.0 / 6.0}).max(), 1e-12);

  const auto over = check_kkt(net, vals, std::vector<double>{1.0, 1.0}, std::vector<double>{1.0});
  EXPECT_NEAR(over.primal, 1.0, 1e-15);
  const auto neg = check_kkt(net, vals, x, std::vector<double>{-0.5});
  EXPECT_NEAR(neg.dual, 0.5, 1e-15);
  // Zero rate with v'(0) above the price: hinge residual.
  const auto hinge = check_kkt(net, vals, std::vector<double>{1.0, 0.0}, std::vector<double>{1.0});
  EXPECT_NEAR(hinge.stationarity, 0.5, 1e-15);
}

TEST(CheckKkt, DimensionMismatchThrows) {
  Network net(oracle::example1_spec());
  EXPECT_THROW(check_kkt(net, oracle::example1_vals(), std::vector<double>{1.0}, std::vector<double>{1.0}),
               std::invalid_argument);
  EXPECT_THROW(check_kkt(net, oracle::example1_vals(), std::vector<double>{1.0, 1.0}, std::vector<double>{}),
               std::invalid_argument);
}

TEST(BruteForce, ExampleOneWithinTwoGridSteps) {
  Network net(oracle::example1_spec());
  const auto x = brute_force_cp(net, oracle::example1_vals(), 1e-3);
  EXPECT_NEAR(x[0], 5.0 / 7.0, 2e-3);
  EXPECT_NEAR(x[1], 2.0 / 7.0, 2e-3);
}

TEST(BruteForce, RejectsLargeInstances) {
  NetworkSpec s;
  s.n_agents = 4;
  s.links.push_back({0, 1.0, {{0, 1.0}, {1, 1.0}, {2, 1.0}, {3, 1.0}}});
  s.routes = {{0}, {0}, {0}, {0}};
  Network net(s);
  EXPECT_THROW(brute_force_cp(net, {{1, 1}, {1, 1}, {1, 1}, {1, 1}}, 1e-2), std::invalid_argument);
}

TEST(Welfare, SumOfValuations) {
  const auto vals = oracle::example1_vals();
  EXPECT_NEAR(social_welfare(vals, std::vector<double>{1.0, 0.0}), 2.0 * std::log(2.0), 1e-15);
  Network net(oracle::two_binding_links_spec());
  const auto load = link_loads(net, std::vector<double>{1.0, 1.0});
  EXPECT_DOUBLE_EQ(load[0], 3.0);
  EXPECT_DOUBLE_EQ(load[1], 3.0);
}
