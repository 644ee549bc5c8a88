#include "netmech/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "netmech/sbb.hpp"

namespace netmech {

using nlohmann::json;

namespace {

class Reader {
 public:
  explicit Reader(std::string origin) : origin_(std::move(origin)) {}

  [[noreturn]] void fail(const std::string& field, const std::string& msg) const {
    throw ScenarioError(origin_ + ": " + field + ": " + msg, field);
  }

  const json& member(const json& obj, const std::string& key, const std::string& path) const {
    auto it = obj.find(key);
    if (it == obj.end()) fail(join(path, key), "missing required field");
    return *it;
  }

  double number(const json& v, const std::string& path) const {
    if (!v.is_number()) fail(path, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(path, "must be finite");
    return d;
  }

  double number_or(const json& obj, const std::string& key, const std::string& path, double fallback) const {
    auto it = obj.find(key);
    return it == obj.end() ? fallback : number(*it, join(path, key));
  }

  std::uint64_t count(const json& v, const std::string& path) const {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) fail(path, "expected a nonnegative integer");
    return v.get<std::uint64_t>();
  }

  std::uint64_t count_or(const json& obj, const std::string& key, const std::string& path,
                         std::uint64_t fallback) const {
    auto it = obj.find(key);
    return it == obj.end() ? fallback : count(*it, join(path, key));
  }

  const json& object(const json& v, const std::string& path) const {
    if (!v.is_object()) fail(path, "expected an object");
    return v;
  }

  const json& array(const json& v, const std::string& path) const {
    if (!v.is_array()) fail(path, "expected an array");
    return v;
  }

  std::size_t index_key(const std::string& key, const std::string& path) const {
    std::size_t pos = 0;
    unsigned long value = 0;
    try {
      value = std::stoul(key, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != key.size()) fail(path, "key '" + key + "' is not an agent index");
    return value;
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }
  static std::string at(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

 private:
  std::string origin_;
};

std::pair<double, double> range_or(const Reader& rd, const json& obj, const std::string& key,
                                   const std::string& path, std::pair<double, double> fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  const std::string p = Reader::join(path, key);
  const json& arr = rd.array(*it, p);
  if (arr.size() != 2) rd.fail(p, "expected [lo, hi]");
  const double lo = rd.number(arr[0], Reader::at(p, 0));
  const double hi = rd.number(arr[1], Reader::at(p, 1));
  if (!(lo > 0.0) || hi < lo) rd.fail(p, "need 0 < lo <= hi");
  return {lo, hi};
}

void read_network(const Reader& rd, const json& doc, Scenario& sc) {
  const json& agents = rd.array(rd.member(doc, "agents", ""), "agents");
  if (agents.empty()) rd.fail("agents", "no agents");
  sc.spec.n_agents = agents.size();
  sc.valuations.clear();
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const std::string p = Reader::at("agents", i);
    const json& ag = rd.object(agents[i], p);
    LogValuation v;
    v.a = rd.number(rd.member(ag, "a", p), p + ".a");
    v.b = rd.number(rd.member(ag, "b", p), p + ".b");
    if (!(v.a > 0.0)) rd.fail(p + ".a", "must be positive");
    if (!(v.b > 0.0)) rd.fail(p + ".b", "must be positive");
    sc.valuations.push_back(v);
  }

  const json& links = rd.array(rd.member(doc, "links", ""), "links");
  sc.spec.links.clear();
  for (std::size_t l = 0; l < links.size(); ++l) {
    const std::string p = Reader::at("links", l);
    const json& lk = rd.object(links[l], p);
    LinkSpec spec;
    spec.id = l;
    spec.capacity = rd.number(rd.member(lk, "capacity", p), p + ".capacity");
    const json& coeffs = rd.object(rd.member(lk, "coefficients", p), p + ".coefficients");
    for (auto it = coeffs.begin(); it != coeffs.end(); ++it) {
      const std::string cp = p + ".coefficients." + it.key();
      const AgentId j = rd.index_key(it.key(), cp);
      if (j >= sc.spec.n_agents) rd.fail(cp, "unknown agent " + it.key());
      spec.coefficients[j] = rd.number(it.value(), cp);
    }
    sc.spec.links.push_back(std::move(spec));
  }

  const json& routes = rd.member(doc, "routes", "");
  sc.spec.routes.assign(sc.spec.n_agents, {});
  auto read_route = [&](const json& v, const std::string& p, AgentId i) {
    const json& arr = rd.array(v, p);
    for (std::size_t k = 0; k < arr.size(); ++k) {
      const std::uint64_t l = rd.count(arr[k], Reader::at(p, k));
      sc.spec.routes[i].push_back(static_cast<LinkId>(l));
    }
  };
  if (routes.is_object()) {
    for (auto it = routes.begin(); it != routes.end(); ++it) {
      const std::string p = "routes." + it.key();
      const AgentId i = rd.index_key(it.key(), p);
      if (i >= sc.spec.n_agents) rd.fail(p, "unknown agent " + it.key());
    }
    for (AgentId i = 0; i < sc.spec.n_agents; ++i) {
      const std::string key = std::to_string(i);
      auto it = routes.find(key);
      if (it == routes.end()) rd.fail("routes." + key, "agent " + key + " has no route");
      read_route(*it, "routes." + key, i);
    }
  } else if (routes.is_array()) {
    if (routes.size() != sc.spec.n_agents) {
      const std::string key = std::to_string(std::min(routes.size(), sc.spec.n_agents));
      rd.fail("routes", "expected one route per agent (agent " + key + " has no route)");
    }
    for (AgentId i = 0; i < sc.spec.n_agents; ++i) read_route(routes[i], Reader::at("routes", i), i);
  } else {
    rd.fail("routes", "expected an object keyed by agent index or an array");
  }
}

void read_random(const Reader& rd, const json& block, Scenario& sc) {
  InstanceShape shape;
  shape.agents = rd.count(rd.member(block, "agents", "random"), "random.agents");
  shape.links = rd.count(rd.member(block, "links", "random"), "random.links");
  if (shape.agents < 2) rd.fail("random.agents", "need at least two agents");
  if (shape.links < 1) rd.fail("random.links", "need at least one link");
  std::tie(shape.capacity_lo, shape.capacity_hi) =
      range_or(rd, block, "capacity", "random", {shape.capacity_lo, shape.capacity_hi});
  std::tie(shape.alpha_lo, shape.alpha_hi) = range_or(rd, block, "alpha", "random", {shape.alpha_lo, shape.alpha_hi});
  std::tie(shape.a_lo, shape.a_hi) = range_or(rd, block, "a", "random", {shape.a_lo, shape.a_hi});
  std::tie(shape.b_lo, shape.b_hi) = range_or(rd, block, "b", "random", {shape.b_lo, shape.b_hi});
  shape.join_probability = rd.number_or(block, "join_probability", "random", shape.join_probability);
  if (!(shape.join_probability > 0.0) || shape.join_probability > 1.0) {
    rd.fail("random.join_probability", "must lie in (0, 1]");
  }
  sc.random = shape;
  regenerate(sc);
}

std::size_t line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

json shape_json(const InstanceShape& s) {
  return json{{"agents", s.agents},
              {"links", s.links},
              {"capacity", {s.capacity_lo, s.capacity_hi}},
              {"alpha", {s.alpha_lo, s.alpha_hi}},
              {"a", {s.a_lo, s.a_hi}},
              {"b", {s.b_lo, s.b_hi}},
              {"join_probability", s.join_probability}};
}

}  // namespace

void regenerate(Scenario& scenario) {
  if (!scenario.random) throw std::logic_error("scenario has no random block");
  std::mt19937_64 rng(scenario.seed);
  Instance inst = random_instance(rng, *scenario.random);
  scenario.spec = std::move(inst.spec);
  scenario.valuations = std::move(inst.valuations);
}

Scenario parse_scenario(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t line = line_of(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ScenarioError(origin + ":" + std::to_string(line) + ": syntax error: " + e.what(), "", line);
  }
  const Reader rd(origin);
  rd.object(doc, "<document>");

  Scenario sc;
  const std::uint64_t version = rd.count(rd.member(doc, "schema_version", ""), "schema_version");
  if (version != static_cast<std::uint64_t>(kScenarioSchemaVersion)) {
    rd.fail("schema_version", "unsupported version " + std::to_string(version));
  }
  if (auto it = doc.find("name"); it != doc.end()) {
    if (!it->is_string()) rd.fail("name", "expected a string");
    sc.name = it->get<std::string>();
  }
  sc.seed = rd.count(rd.member(doc, "seed", ""), "seed");
  if (auto it = doc.find("mechanism"); it != doc.end()) {
    if (!it->is_string()) rd.fail("mechanism", "expected \"wbb\" or \"sbb\"");
    try {
      sc.mechanism = parse_mechanism(it->get<std::string>());
    } catch (const std::invalid_argument& e) {
      rd.fail("mechanism", e.what());
    }
  }
  if (auto it = doc.find("params"); it != doc.end()) {
    rd.object(*it, "params");
    sc.params.eta = rd.number_or(*it, "eta", "params", sc.params.eta);
    sc.params.zeta = rd.number_or(*it, "zeta", "params", sc.params.zeta);
  }
  if (!(sc.params.eta > 0.0)) rd.fail("params.eta", "must be positive");
  if (!(sc.params.zeta > 0.0)) rd.fail("params.zeta", "must be positive");
  if (auto it = doc.find("solver"); it != doc.end()) {
    rd.object(*it, "solver");
    sc.solver.tolerance = rd.number_or(*it, "tolerance", "solver", sc.solver.tolerance);
    sc.solver.max_iterations = rd.count_or(*it, "max_iterations", "solver", sc.solver.max_iterations);
  }
  if (auto it = doc.find("best_response"); it != doc.end()) {
    const std::string p = "best_response";
    rd.object(*it, p);
    BrConfig& br = sc.best_response;
    br.max_rounds = rd.count_or(*it, "max_rounds", p, br.max_rounds);
    br.change_tolerance = rd.number_or(*it, "change_tolerance", p, br.change_tolerance);
    br.epsilon = rd.number_or(*it, "epsilon", p, br.epsilon);
    br.deviation_samples = rd.count_or(*it, "deviation_samples", p, br.deviation_samples);
    sc.dynamics.starts = rd.count_or(*it, "starts", p, sc.dynamics.starts);
    sc.dynamics.perturbation = rd.number_or(*it, "perturbation", p, sc.dynamics.perturbation);
    if (auto s = it->find("shuffle"); s != it->end()) {
      if (!s->is_boolean()) rd.fail(p + ".shuffle", "expected true or false");
      br.shuffle = s->get<bool>();
    }
  }
  sc.best_response.seed = sc.seed;

  if (auto it = doc.find("random"); it != doc.end()) {
    read_random(rd, rd.object(*it, "random"), sc);
  } else {
    read_network(rd, doc, sc);
  }
  Network net(sc.spec);  // throws InvalidNetwork listing every violation
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError("cannot open scenario file " + path.string(), "");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path.string());
}

std::string scenario_to_json(const Scenario& sc, int indent) {
  json doc;
  doc["schema_version"] = sc.schema_version;
  doc["name"] = sc.name;
  doc["seed"] = sc.seed;
  doc["mechanism"] = std::string(to_string(sc.mechanism));
  doc["params"] = {{"eta", sc.params.eta}, {"zeta", sc.params.zeta}};
  doc["solver"] = {{"tolerance", sc.solver.tolerance}, {"max_iterations", sc.solver.max_iterations}};
  doc["best_response"] = {{"max_rounds", sc.best_response.max_rounds},
                          {"change_tolerance", sc.best_response.change_tolerance},
                          {"epsilon", sc.best_response.epsilon},
                          {"deviation_samples", sc.best_response.deviation_samples},
                          {"shuffle", sc.best_response.shuffle},
                          {"starts", sc.dynamics.starts},
                          {"perturbation", sc.dynamics.perturbation}};
  if (sc.random) doc["random"] = shape_json(*sc.random);
  json agents = json::array();
  for (const auto& v : sc.valuations) agents.push_back({{"a", v.a}, {"b", v.b}});
  doc["agents"] = agents;
  json links = json::array();
  for (const auto& l : sc.spec.links) {
    json coeffs = json::object();
    for (const auto& [j, a] : l.coefficients) coeffs[std::to_string(j)] = a;
    links.push_back({{"capacity", l.capacity}, {"coefficients", coeffs}});
  }
  doc["links"] = links;
  json routes = json::object();
  for (AgentId i = 0; i < sc.spec.routes.size(); ++i) routes[std::to_string(i)] = sc.spec.routes[i];
  doc["routes"] = routes;
  return doc.dump(indent);
}

std::string scenario_hash(const Scenario& scenario) {
  const std::string text = scenario_to_json(scenario, -1);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Pass:
      return "pass";
    case RunStatus::OutOfScope:
      return "out-of-scope instance";
    case RunStatus::Fail:
      break;
  }
  return "fail";
}

int exit_code(RunStatus s) {
  switch (s) {
    case RunStatus::Pass:
      return 0;
    case RunStatus::OutOfScope:
      return 2;
    case RunStatus::Fail:
      break;
  }
  return 1;
}

double RunReport::x_error_inf() const {
  double e = constructed ? constructed_x_error : 0.0;
  for (const auto& d : dynamics) {
    if (d.report.converged) e = std::max(e, d.x_error_inf);
  }
  return e;
}

double RunReport::max_deviation_gain() const {
  double g = constructed ? constructed->max_deviation_gain : 0.0;
  for (const auto& d : dynamics) {
    if (d.report.converged) g = std::max(g, d.report.max_deviation_gain);
  }
  return g;
}

std::size_t RunReport::br_rounds() const {
  std::size_t r = 0;
  for (const auto& d : dynamics) r = std::max(r, d.report.rounds);
  return r;
}

namespace {

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

constexpr double kAllocationTolerance = 1e-5;
constexpr double kRevenueFloor = -1e-10;

void add_check(RunReport& rep, std::string name, double residual, double tolerance) {
  rep.checks.push_back({std::move(name), residual, tolerance, residual <= tolerance});
}

void add_report_checks(RunReport& rep, const std::string& prefix, const EquilibriumReport& eq) {
  for (const auto& c : eq.checks) rep.checks.push_back({prefix + "." + c.name, c.residual, c.tolerance, c.pass});
}

}  // namespace

RunReport run(const Scenario& sc) {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep;
  rep.scenario_name = sc.name;
  rep.scenario_hash = scenario_hash(sc);
  rep.seed = sc.seed;
  rep.mechanism = sc.mechanism;
  rep.requested_params = sc.params;
  auto finish = [&](RunStatus status) {
    rep.status = status;
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
  };

  const Network net(sc.spec);
  validate_params(sc.params, sc.mechanism);

  try {
    rep.certificate = solve_cp(net, sc.valuations, sc.solver);
  } catch (const SolverError& e) {
    rep.certificate = e.best();
    rep.solver_error = e.what();
  }
  add_check(rep, "kkt", rep.certificate.residuals.max(), sc.solver.tolerance);
  if (rep.solver_error) return finish(RunStatus::Fail);

  rep.a4 = satisfies_a4(net, rep.certificate.x_star);
  if (!rep.a4) {
    rep.scope_note = "some link has fewer than two agents with positive optimal rate";
    return finish(RunStatus::OutOfScope);
  }

  MechanismParams params = sc.params;
  try {
    rep.eta = validate_eta(net, sc.valuations, rep.certificate, sc.params, sc.mechanism);
    params = rep.eta->params;
  } catch (const EtaValidationError& e) {
    rep.eta_error = e.what();
    add_check(rep, "hessian_certificate", 1.0, 0.0);
    return finish(RunStatus::Fail);
  }
  add_check(rep, "hessian_certificate", std::max(0.0, rep.eta->max_eigenvalue + 1e-8), 0.0);

  const Profile ne = construct_ne_from_kkt(net, rep.certificate, sc.mechanism);
  rep.constructed = verify_equilibrium(net, sc.valuations, ne, params, sc.mechanism, sc.tolerances, sc.best_response);
  rep.constructed_x_error = max_abs_diff(rep.constructed->allocation, rep.certificate.x_star);
  add_report_checks(rep, "constructed", *rep.constructed);
  add_check(rep, "constructed.allocation_error", rep.constructed_x_error, kAllocationTolerance);
  rep.revenue = std::accumulate(rep.constructed->taxes.begin(), rep.constructed->taxes.end(), 0.0);

  // Best-response dynamics from small perturbations of the constructed NE.
  for (std::size_t s = 0; s < sc.dynamics.starts; ++s) {
    std::mt19937_64 rng(sc.seed * 1000003ULL + s);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Profile init = ne;
    for (auto& m : init) {
      m.y *= 1.0 + sc.dynamics.perturbation * u(rng);
      if (sc.mechanism == Mechanism::Sbb) m.rho *= 1.0 + sc.dynamics.perturbation * u(rng);
    }
    DynamicsRun dr;
    dr.start = s;
    dr.report = iterate_best_response(net, sc.valuations, init, params, sc.mechanism, sc.best_response, sc.tolerances);
    dr.x_error_inf = max_abs_diff(dr.report.allocation, rep.certificate.x_star);
    if (dr.report.converged) {
      const std::string prefix = "dynamics[" + std::to_string(s) + "]";
      add_check(rep, prefix + ".allocation_error", dr.x_error_inf, kAllocationTolerance);
      const CheckResult* eps = dr.report.check("epsilon_nash");
      rep.checks.push_back({prefix + ".epsilon_nash", eps->residual, eps->tolerance, eps->pass});
      if (sc.mechanism == Mechanism::Sbb && dr.report.equilibrium) {
        const CheckResult* bb = dr.report.check("strong_budget_balance");
        rep.checks.push_back({prefix + ".strong_budget_balance", bb->residual, bb->tolerance, bb->pass});
      }
    }
    rep.dynamics.push_back(std::move(dr));
  }

  if (sc.mechanism == Mechanism::Wbb) add_check(rep, "seller_revenue", std::max(0.0, kRevenueFloor - rep.revenue), 0.0);

  const bool ok = std::all_of(rep.checks.begin(), rep.checks.end(), [](const CheckResult& c) { return c.pass; });
  return finish(ok ? RunStatus::Pass : RunStatus::Fail);
}

SweepResult sweep(const Scenario& base, const SweepOverrides& ov, const std::filesystem::path& out_dir,
                  std::size_t jobs) {
  if (!ov.agent_counts.empty() && !base.random) {
    throw std::invalid_argument("agent-count overrides need a scenario with a random block");
  }
  // Enumerate configurations: mechanism x eta x agents x seed.
  struct Config {
    Scenario scenario;
    std::string id;
  };
  std::vector<Config> configs;
  const std::vector<Mechanism> mechs = ov.mechanisms.empty() ? std::vector<Mechanism>{base.mechanism} : ov.mechanisms;
  const std::vector<double> etas = ov.etas.empty() ? std::vector<double>{base.params.eta} : ov.etas;
  const std::vector<std::size_t> ns =
      ov.agent_counts.empty() ? std::vector<std::size_t>{base.random ? base.random->agents : base.spec.n_agents}
                              : ov.agent_counts;
  const std::vector<std::uint64_t> seeds = ov.seeds.empty() ? std::vector<std::uint64_t>{base.seed} : ov.seeds;
  const std::string stem = base.name.empty() ? "scenario" : base.name;
  for (Mechanism m : mechs) {
    for (double eta : etas) {
      for (std::size_t n : ns) {
        for (std::uint64_t seed : seeds) {
          Config c{base, {}};
          c.scenario.mechanism = m;
          c.scenario.params.eta = eta;
          c.scenario.seed = seed;
          c.scenario.best_response.seed = seed;
          if (base.random) {
            c.scenario.random->agents = n;
            regenerate(c.scenario);
          }
          char buf[64];
          std::snprintf(buf, sizeof buf, "%s-eta%g-n%zu-seed%llu", std::string(to_string(m)).c_str(), eta, n,
                        static_cast<unsigned long long>(seed));
          c.id = stem + "-" + buf;
          c.scenario.name = c.id;
          configs.push_back(std::move(c));
        }
      }
    }
  }

  SweepResult result;
  result.rows.resize(configs.size());
  result.reports.resize(configs.size());
  auto work = [&](std::size_t k) {
    SweepRow& row = result.rows[k];
    row.scenario_id = configs[k].id;
    row.mechanism = configs[k].scenario.mechanism;
    try {
      RunReport rep = run(configs[k].scenario);
      row.x_error_inf = rep.x_error_inf();
      row.budget_residual = rep.revenue;
      row.max_deviation_gain = rep.max_deviation_gain();
      row.br_rounds = rep.br_rounds();
      row.status = rep.status;
      result.reports[k] = std::move(rep);
    } catch (const std::exception& e) {
      row.status = RunStatus::Fail;
      row.error = e.what();
    }
  };
  jobs = std::max<std::size_t>(1, jobs);
  for (std::size_t begin = 0; begin < configs.size(); begin += jobs) {
    std::vector<std::future<void>> batch;
    for (std::size_t k = begin; k < std::min(configs.size(), begin + jobs); ++k) {
      batch.push_back(std::async(std::launch::async, work, k));
    }
    for (auto& f : batch) f.get();
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    for (std::size_t k = 0; k < configs.size(); ++k) {
      if (!result.rows[k].error.empty()) continue;
      std::ofstream(out_dir / (configs[k].id + ".json")) << report_to_json(result.reports[k]) << '\n';
    }
    std::ofstream(out_dir / "summary.csv") << sweep_csv(result.rows);
  }
  return result;
}

}  // namespace netmech
