#pragma once

// Games induced by the two contracts: analytic utility gradients, numerical
// best responses, equilibrium construction from a KKT certificate, and
// residual/deviation audits of every equilibrium property.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "netmech/centralized.hpp"
#include "netmech/mechanism.hpp"

namespace netmech {

/// û_i(s) = v_i(x_i) - t_i.
double agent_utility(const Network& net, const ValuationProfile& vals, const Profile& profile, AgentId i,
                     const MechanismParams& params, Mechanism mechanism,
                     AllocationRule rule = AllocationRule::Corrected);

struct UtilityGradient {
  double dy_right = 0.0;
  std::optional<double> dy_left;  // absent at y_i = 0
  std::vector<double> dp;         // aligned with the agent's route
  double drho = 0.0;              // SBB only
  bool kink = false;              // one-sided y-derivatives differ
};

UtilityGradient utility_gradient(const Network& net, const ValuationProfile& vals, const Profile& profile,
                                 AgentId i, const MechanismParams& params, Mechanism mechanism,
                                 AllocationRule rule = AllocationRule::Corrected);

struct BrConfig {
  double epsilon = 1e-6;            // ε-NE tolerance in utility units
  double y_tolerance = 1e-13;       // relative step size that ends the ascent
  double gradient_tolerance = 1e-13;
  std::size_t max_ascent_steps = 400;
  std::size_t max_rounds = 200;
  double change_tolerance = 1e-9;   // profile change that ends the dynamics
  std::size_t deviation_samples = 1000;  // per agent
  double deviation_radius_min = 1e-6;
  double deviation_radius_max = 1.0;
  bool shuffle = false;
  std::uint64_t seed = 1;
};

/// Maximiser of û_i over agent i's message space with the others fixed.
/// Prices and rho are set to their closed-form maximisers for the current
/// demand; the demand is found by projected gradient ascent with one-sided
/// derivatives from three starts (current, zero, perturbed).
Message best_response(const Network& net, const ValuationProfile& vals, const Profile& profile, AgentId i,
                      const MechanismParams& params, Mechanism mechanism, const BrConfig& config = {});

struct CheckResult {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct VerifyTolerances {
  double equal_prices = 1e-8;
  double dual_feasibility = 0.0;
  double comp_slackness = 1e-8;
  double stationarity = 1e-7;
  double individual_rationality = 1e-10;
  double budget = 1e-10;  // WBB: revenue >= -budget; SBB: |sum t| <= budget
  double rho_agreement = 1e-8;
};

struct Deviation {
  AgentId agent = 0;
  std::string kind;
  Message message;
  double gain = 0.0;
};

struct EquilibriumReport {
  Mechanism mechanism = Mechanism::Wbb;
  Profile profile;
  std::vector<double> allocation;
  std::vector<double> taxes;
  std::vector<double> utilities;
  std::vector<double> common_prices;  // per-link mean quote
  bool prices_equal = false;
  std::vector<CheckResult> checks;
  double max_deviation_gain = 0.0;
  std::size_t deviations_sampled = 0;  // per agent (minimum over agents)
  std::optional<Deviation> worst_deviation;
  bool equilibrium = false;

  // Filled by iterate_best_response.
  bool converged = true;
  std::size_t rounds = 0;
  struct TraceRow {
    std::size_t round;
    double max_change;
    double welfare;
    double price_spread;
  };
  std::vector<TraceRow> trace;

  const CheckResult* check(const std::string& name) const;
};

/// Residual checks for every equilibrium property plus a sampled ε-NE
/// certificate. The structured deviations used by the equal-price and
/// complementary-slackness arguments are always in the sample.
EquilibriumReport verify_equilibrium(const Network& net, const ValuationProfile& vals, const Profile& profile,
                                     const MechanismParams& params, Mechanism mechanism,
                                     const VerifyTolerances& tol = {}, const BrConfig& config = {});

/// Round-robin best responses until the profile stops moving; the result is
/// audited by verify_equilibrium. converged = false on hitting the round cap.
EquilibriumReport iterate_best_response(const Network& net, const ValuationProfile& vals, const Profile& init,
                                        const MechanismParams& params, Mechanism mechanism,
                                        const BrConfig& config = {}, const VerifyTolerances& tol = {});

class A4Violation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rates at or below this count as zero when reading an optimal allocation.
inline constexpr double kPositiveRate = 1e-9;

/// True when every link carries at least two agents with positive optimal rate.
bool satisfies_a4(const Network& net, const std::vector<double>& x_star);

/// y = scale * x★, every price = λ★ on its link, rho = r(y) for SBB.
/// Throws A4Violation when some link has fewer than two active agents.
Profile construct_ne_from_kkt(const Network& net, const KktCertificate& cert, Mechanism mechanism,
                              double scale = 1.0);

struct AgentHessian {
  AgentId agent = 0;
  Eigen::MatrixXd right;  // coordinates: y, [rho], p...
  Eigen::MatrixXd left;   // empty when y_i = 0
  double max_eigenvalue = 0.0;
  double price_diagonal_error = 0.0;  // max |H_pp + 2|
};

/// Numeric Hessian of û_i with respect to s_i, from finite differences of the
/// analytic gradient (one-sided in y).
AgentHessian utility_hessian(const Network& net, const ValuationProfile& vals, const Profile& profile,
                             AgentId i, const MechanismParams& params, Mechanism mechanism);

struct EtaCertificate {
  MechanismParams params;
  std::size_t shrinks = 0;
  double max_eigenvalue = 0.0;
  double price_diagonal_error = 0.0;
  std::vector<AgentHessian> hessians;
};

class EtaValidationError : public std::runtime_error {
 public:
  EtaValidationError(const std::string& what, std::vector<double> eigenvalues)
      : std::runtime_error(what), eigenvalues_(std::move(eigenvalues)) {}
  const std::vector<double>& max_eigenvalues() const noexcept { return eigenvalues_; }

 private:
  std::vector<double> eigenvalues_;
};

struct EtaConfig {
  double eigenvalue_ceiling = -1e-8;
  std::size_t max_shrinks = 6;
  double shrink_factor = 0.1;
};

/// Certifies negative-definite agent Hessians at the constructed equilibrium,
/// shrinking eta (and zeta) until they are.
EtaCertificate validate_eta(const Network& net, const ValuationProfile& vals, const KktCertificate& cert,
                            const MechanismParams& params, Mechanism mechanism, const EtaConfig& config = {});

struct ProbeCase {
  AgentId agent = 0;
  double demand = 0.0;
  double beta_pure = 0.0;
  double beta_corrected = 0.0;
  double beta_pure_fd = 0.0;
  double beta_corrected_fd = 0.0;
  double dy_pure = 0.0;         // right y-derivative of û_i, pure map
  double dy_corrected = 0.0;    // same, corrected map
  double gap_pure = 0.0;        // v'(x_i) - sum_l p^l alpha_i^l under the pure map
  double gap_corrected = 0.0;
  bool stationarity_vacuous_pure = false;     // beta = 0: the y-condition holds whatever v'
  bool stationarity_binds_corrected = false;  // y-derivative vanishes exactly when the gap does
};

struct ProbeReport {
  std::vector<ProbeCase> cases;
  bool shared_links_agree = true;  // pure and corrected maps coincide when every link has >= 2 active
  bool demonstrated() const;
};

/// Single-active-agent profiles under the uncorrected and the corrected map.
ProbeReport extraneous_equilibria_probe(const Network& net, const ValuationProfile& vals,
                                        const MechanismParams& params, std::size_t count = 10);

}  // namespace netmech
