#include "matchq/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace matchq {

namespace {

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw InputError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw InputError(where + ": unknown key '" + k + "'");
}

template <typename T>
void read(const Json& j, const char* key, T& dst, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InputError(where + "." + key + ": wrong type");
  }
}

Json patience_to_json(const PatienceModel& m) {
  if (m.kind() == PatienceModel::Kind::Perfect) return Json{{"kind", "perfect"}};
  return Json{{"kind", "max_rejections"}, {"K", m.max_rejections_k()}};
}

PatienceModel patience_from_json(const Json& j) {
  check_keys(j, {"kind", "K"}, "market.patience");
  std::string kind = "perfect";
  int k = 0;
  read(j, "kind", kind, "market.patience");
  read(j, "K", k, "market.patience");
  if (kind == "perfect") return PatienceModel::perfect();
  if (kind == "max_rejections") return PatienceModel::max_rejections(k);
  throw InputError("market.patience.kind must be perfect or max_rejections");
}

const char* sigma_mode_name(SigmaMode m) {
  switch (m) {
    case SigmaMode::Truthful: return "truthful";
    case SigmaMode::Solve: return "solve";
    case SigmaMode::Explicit: return "explicit";
  }
  return "truthful";
}

}  // namespace

RunConfig::RunConfig() {
  market.ell = 1;
  market.lambda = {40.0, 60.0};
  market.mu = {30.0, 40.0};
  market.theta = 4.0;
}

PolicySpec RunConfig::policy_spec() const { return make_policy(policy, market.ell, pooled); }

ChainOptions RunConfig::chain_options() const {
  ChainOptions o;
  if (solver.cap > 0)
    o.truncation = solver.truncation == "per_cell" ? Truncation::per_cell(solver.cap)
                                                   : Truncation::population(solver.cap);
  o.tail_target = solver.tail_target;
  o.tol = solver.tol;
  o.max_states = solver.max_states;
  return o;
}

ScalarOptions RunConfig::scalar_options() const {
  ScalarOptions o;
  o.chain = chain_options();
  o.grid_points = equilibrium.grid_points;
  o.tol = equilibrium.tol;
  o.eps = equilibrium.eps;
  return o;
}

ProjectionOptions RunConfig::projection_options() const {
  ProjectionOptions o;
  o.chain = chain_options();
  o.step = equilibrium.step;
  o.damping = equilibrium.damping;
  o.max_iter = equilibrium.max_iter;
  o.tol = equilibrium.tol;
  o.eps = equilibrium.eps;
  return o;
}

StrategyProfile RunConfig::fixed_sigma() const {
  const PolicySpec spec = policy_spec();
  switch (sigma_mode) {
    case SigmaMode::Truthful: return StrategyProfile::truthful(market.num_types(), spec.num_queues);
    case SigmaMode::Explicit: return sigma;
    case SigmaMode::Solve: break;
  }
  throw InputError("sigma is 'solve'; this command needs a fixed profile");
}

SystemState RunConfig::couple_base() const {
  const int nq = policy_spec().num_queues;
  SystemState s(market.num_types(), nq);
  if (couple.base.empty()) return s;
  if (static_cast<int>(couple.base.size()) != market.num_types())
    throw InputError("couple.base needs one row per agent type");
  for (int i = 0; i < market.num_types(); ++i) {
    if (static_cast<int>(couple.base[i].size()) != nq)
      throw InputError("couple.base rows need one entry per queue");
    for (int q = 0; q < nq; ++q) {
      if (couple.base[i][q] < 0) throw InputError("couple.base counts must be >= 0");
      s.set(i, q, couple.base[i][q]);
    }
  }
  return s;
}

void RunConfig::validate() const {
  market.validate();
  const PolicySpec spec = policy_spec();
  spec.validate(market.ell);
  if (sigma_mode == SigmaMode::Explicit) sigma.validate(market.num_types(), spec.num_queues);
  if (solver.truncation != "population" && solver.truncation != "per_cell")
    throw InputError("solver.truncation must be population or per_cell");
  if (solver.cap < 0) throw InputError("solver.cap must be >= 0");
  if (!(solver.tail_target > 0.0 && solver.tail_target < 1.0))
    throw InputError("solver.tail_target must lie in (0, 1)");
  if (!(solver.tol > 0.0)) throw InputError("solver.tol must be > 0");
  if (solver.max_states < 1) throw InputError("solver.max_states must be >= 1");
  if (equilibrium.method != "scalar" && equilibrium.method != "projection")
    throw InputError("equilibrium.method must be scalar or projection");
  if (equilibrium.grid_points < 2) throw InputError("equilibrium.grid_points must be >= 2");
  if (!(equilibrium.tol > 0.0)) throw InputError("equilibrium.tol must be > 0");
  if (!(equilibrium.eps >= 0.0)) throw InputError("equilibrium.eps must be >= 0");
  if (!(equilibrium.step > 0.0)) throw InputError("equilibrium.step must be > 0");
  if (!(equilibrium.damping > 0.0 && equilibrium.damping <= 1.0))
    throw InputError("equilibrium.damping must lie in (0, 1]");
  if (equilibrium.max_iter < 1) throw InputError("equilibrium.max_iter must be >= 1");
  if (!(sim.horizon > 0.0)) throw InputError("sim.horizon must be > 0");
  if (!(sim.warmup >= 0.0 && sim.warmup < sim.horizon))
    throw InputError("sim.warmup must lie in [0, horizon)");
  if (sim.replications < 0) throw InputError("sim.replications must be >= 0");
  if (sim.batches < 2) throw InputError("sim.batches must be >= 2");
  if (sim.injections < 0) throw InputError("sim.injections must be >= 0");
  couple_base();
  if (couple.specialized < 1 || couple.specialized > market.ell)
    throw InputError("couple.specialized must name a specialized type");
  if (!(couple.horizon >= 0.0)) throw InputError("couple.horizon must be >= 0");
  if (couple.replications < 2) throw InputError("couple.replications must be >= 2");
  if (sweep.points < 2) throw InputError("sweep.points must be >= 2");
  if (!(sweep.upper >= 0.0)) throw InputError("sweep.upper must be >= 0");
  if (sweep.market) sweep.market->validate();
  if (sweep.ell != 1 && sweep.ell != 2) throw InputError("sweep.ell must be 1 or 2");
  if (sweep.n_params < 1 || sweep.n_sigmas < 1)
    throw InputError("sweep.n_params and sweep.n_sigmas must be >= 1");
  if (sweep.replications < 2) throw InputError("sweep.replications must be >= 2");
  if (format != "json" && format != "csv") throw InputError("output.format must be json or csv");
}

Json market_to_json(const MarketParams& p) {
  return Json{{"ell", p.ell},
              {"lambda", p.lambda},
              {"mu", p.mu},
              {"theta", p.theta},
              {"patience", patience_to_json(p.patience)}};
}

MarketParams market_from_json(const Json& j) {
  check_keys(j, {"ell", "lambda", "mu", "theta", "patience"}, "market");
  MarketParams p;
  read(j, "ell", p.ell, "market");
  read(j, "lambda", p.lambda, "market");
  read(j, "mu", p.mu, "market");
  read(j, "theta", p.theta, "market");
  if (j.contains("patience")) p.patience = patience_from_json(j.at("patience"));
  return p;
}

RunConfig config_from_json(const Json& doc) {
  check_keys(doc, {"market", "policy", "sigma", "solver", "equilibrium", "sim", "couple", "sweep",
                   "seed", "output", "_manifest"},
             "config");
  RunConfig c;
  if (doc.contains("market")) c.market = market_from_json(doc.at("market"));
  if (doc.contains("policy")) {
    const Json& j = doc.at("policy");
    check_keys(j, {"kind", "pooled"}, "policy");
    std::string kind = to_string(c.policy);
    read(j, "kind", kind, "policy");
    c.policy = policy_kind_from_string(kind);
    if (c.policy == PolicyKind::Custom) throw InputError("policy.kind must be NCR, ACR or RCR");
    read(j, "pooled", c.pooled, "policy");
  }
  if (doc.contains("sigma")) {
    const Json& j = doc.at("sigma");
    if (j.is_string()) {
      const auto s = j.get<std::string>();
      if (s == "truthful") c.sigma_mode = SigmaMode::Truthful;
      else if (s == "solve") c.sigma_mode = SigmaMode::Solve;
      else throw InputError("sigma must be 'truthful', 'solve' or a matrix");
    } else if (j.is_array()) {
      std::vector<std::vector<double>> rows;
      read(doc, "sigma", rows, "config");
      c.sigma = StrategyProfile(rows);
      c.sigma_mode = SigmaMode::Explicit;
    } else {
      throw InputError("sigma must be 'truthful', 'solve' or a matrix");
    }
  }
  if (doc.contains("solver")) {
    const Json& j = doc.at("solver");
    check_keys(j, {"truncation", "cap", "tail_target", "tol", "max_states"}, "solver");
    read(j, "truncation", c.solver.truncation, "solver");
    read(j, "cap", c.solver.cap, "solver");
    read(j, "tail_target", c.solver.tail_target, "solver");
    read(j, "tol", c.solver.tol, "solver");
    read(j, "max_states", c.solver.max_states, "solver");
  }
  if (doc.contains("equilibrium")) {
    const Json& j = doc.at("equilibrium");
    check_keys(j, {"method", "grid_points", "tol", "eps", "step", "damping", "max_iter"},
               "equilibrium");
    read(j, "method", c.equilibrium.method, "equilibrium");
    read(j, "grid_points", c.equilibrium.grid_points, "equilibrium");
    read(j, "tol", c.equilibrium.tol, "equilibrium");
    read(j, "eps", c.equilibrium.eps, "equilibrium");
    read(j, "step", c.equilibrium.step, "equilibrium");
    read(j, "damping", c.equilibrium.damping, "equilibrium");
    read(j, "max_iter", c.equilibrium.max_iter, "equilibrium");
  }
  if (doc.contains("sim")) {
    const Json& j = doc.at("sim");
    check_keys(j, {"horizon", "warmup", "replications", "batches", "injections"}, "sim");
    read(j, "horizon", c.sim.horizon, "sim");
    read(j, "warmup", c.sim.warmup, "sim");
    read(j, "replications", c.sim.replications, "sim");
    read(j, "batches", c.sim.batches, "sim");
    read(j, "injections", c.sim.injections, "sim");
  }
  if (doc.contains("couple")) {
    const Json& j = doc.at("couple");
    check_keys(j, {"base", "specialized", "horizon", "replications"}, "couple");
    read(j, "base", c.couple.base, "couple");
    read(j, "specialized", c.couple.specialized, "couple");
    read(j, "horizon", c.couple.horizon, "couple");
    read(j, "replications", c.couple.replications, "couple");
  }
  if (doc.contains("sweep")) {
    const Json& j = doc.at("sweep");
    check_keys(j, {"points", "upper", "market", "ell", "n_params", "n_sigmas", "state_budget",
                   "replications"},
               "sweep");
    read(j, "points", c.sweep.points, "sweep");
    read(j, "upper", c.sweep.upper, "sweep");
    if (j.contains("market") && !j.at("market").is_null())
      c.sweep.market = market_from_json(j.at("market"));
    read(j, "ell", c.sweep.ell, "sweep");
    read(j, "n_params", c.sweep.n_params, "sweep");
    read(j, "n_sigmas", c.sweep.n_sigmas, "sweep");
    read(j, "state_budget", c.sweep.state_budget, "sweep");
    read(j, "replications", c.sweep.replications, "sweep");
  }
  read(doc, "seed", c.seed, "config");
  if (doc.contains("output")) {
    const Json& j = doc.at("output");
    check_keys(j, {"path", "format"}, "output");
    read(j, "path", c.out, "output");
    read(j, "format", c.format, "output");
  }
  return c;
}

Json config_to_json(const RunConfig& c) {
  Json doc;
  doc["market"] = market_to_json(c.market);
  doc["policy"] = Json{{"kind", to_string(c.policy)}, {"pooled", c.pooled}};
  if (c.sigma_mode == SigmaMode::Explicit) doc["sigma"] = c.sigma.rows();
  else doc["sigma"] = sigma_mode_name(c.sigma_mode);
  doc["solver"] = Json{{"truncation", c.solver.truncation},
                       {"cap", c.solver.cap},
                       {"tail_target", c.solver.tail_target},
                       {"tol", c.solver.tol},
                       {"max_states", c.solver.max_states}};
  doc["equilibrium"] = Json{{"method", c.equilibrium.method},
                            {"grid_points", c.equilibrium.grid_points},
                            {"tol", c.equilibrium.tol},
                            {"eps", c.equilibrium.eps},
                            {"step", c.equilibrium.step},
                            {"damping", c.equilibrium.damping},
                            {"max_iter", c.equilibrium.max_iter}};
  doc["sim"] = Json{{"horizon", c.sim.horizon},
                    {"warmup", c.sim.warmup},
                    {"replications", c.sim.replications},
                    {"batches", c.sim.batches},
                    {"injections", c.sim.injections}};
  doc["couple"] = Json{{"base", c.couple.base},
                       {"specialized", c.couple.specialized},
                       {"horizon", c.couple.horizon},
                       {"replications", c.couple.replications}};
  doc["sweep"] = Json{{"points", c.sweep.points},
                      {"upper", c.sweep.upper},
                      {"market", c.sweep.market ? market_to_json(*c.sweep.market) : Json(nullptr)},
                      {"ell", c.sweep.ell},
                      {"n_params", c.sweep.n_params},
                      {"n_sigmas", c.sweep.n_sigmas},
                      {"state_budget", c.sweep.state_budget},
                      {"replications", c.sweep.replications}};
  doc["seed"] = c.seed;
  doc["output"] = Json{{"path", c.out}, {"format", c.format}};
  return doc;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path);
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(doc);
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Json make_manifest(const RunConfig& cfg, const std::string& command,
                   const std::vector<std::string>& artifacts) {
  Json doc = config_to_json(cfg);
  doc["_manifest"] = Json{{"command", command},
                          {"artifacts", artifacts},
                          {"config_hash", hex64(fnv1a(config_to_json(cfg).dump()))},
                          {"seed", cfg.seed},
                          {"version", MATCHQ_VERSION}};
  return doc;
}

}  // namespace matchq
