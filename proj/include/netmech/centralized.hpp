#pragma once

// Social-welfare maximisation under link capacities, with a KKT certificate.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "netmech/network.hpp"

namespace netmech {

struct SolverConfig {
  double tolerance = 1e-8;  // on the max-norm of every KKT residual
  std::size_t max_iterations = 500;
  std::vector<double> initial_lambda;  // empty: every multiplier starts at 1
  double armijo = 1e-4;
  double regularization = 1e-12;
};

struct KktResiduals {
  double primal = 0.0;
  double dual = 0.0;
  double comp_slack = 0.0;
  double stationarity = 0.0;

  double max() const;
  bool within(double tol) const { return max() <= tol; }
};

struct KktCertificate {
  std::vector<double> x_star;
  std::vector<double> lambda_star;
  std::vector<double> nu_star;
  KktResiduals residuals;
  std::size_t iterations = 0;
  bool optimal = false;
};

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, KktCertificate best)
      : std::runtime_error(what), best_(std::move(best)) {}
  const KktCertificate& best() const noexcept { return best_; }

 private:
  KktCertificate best_;
};

/// Dual projected-Newton ascent with closed-form per-agent stationarity.
/// Throws SolverError (carrying the best iterate) when the residuals do not
/// reach config.tolerance within config.max_iterations.
KktCertificate solve_cp(const Network& net, const ValuationProfile& vals, const SolverConfig& config = {});

/// Residuals of the four KKT conditions at (x, lambda). Negative entries are
/// reported as primal/dual violations. Throws std::invalid_argument on a size
/// mismatch.
KktResiduals check_kkt(const Network& net, const ValuationProfile& vals, std::span<const double> x,
                       std::span<const double> lambda);

/// Grid oracle for N <= 3: every agent but the last walks a grid of spacing
/// grid_step, the last takes its largest feasible rate.
std::vector<double> brute_force_cp(const Network& net, const ValuationProfile& vals, double grid_step);

double social_welfare(const ValuationProfile& vals, std::span<const double> x);

// Load sum_j alpha_j^l x_j on every link.
std::vector<double> link_loads(const Network& net, std::span<const double> x);

}  // namespace netmech
