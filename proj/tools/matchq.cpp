// matchq: command-line front end for the matching-queue library.

#include "matchq/config.hpp"
#include "matchq/ctmc.hpp"
#include "matchq/equilibrium.hpp"
#include "matchq/experiments.hpp"
#include "matchq/sim.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

using namespace matchq;
namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfigError = 2, kConvergenceError = 3 };

void report_error(const char* kind, const std::string& message) {
  std::cerr << Json{{"error", kind}, {"message", message}}.dump() << '\n';
}

// Data goes to <out>/<name> when an output directory is set, else stdout.
class Sink {
public:
  Sink(const RunConfig& cfg, const std::string& command, std::string name)
      : cfg_(cfg), command_(command), name_(std::move(name)) {
    if (!cfg.out.empty()) {
      fs::create_directories(cfg.out);
      file_ = std::make_unique<std::ofstream>(fs::path(cfg.out) / name_);
      if (!*file_) throw InputError("cannot write to " + (fs::path(cfg.out) / name_).string());
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }
  void add_artifact(const std::string& name) { extra_.push_back(name); }
  std::string path(const std::string& name) const { return (fs::path(cfg_.out) / name).string(); }
  bool to_files() const { return !cfg_.out.empty(); }

  void finish() {
    stream().flush();
    if (!file_) return;
    file_->close();
    std::vector<std::string> artifacts{name_};
    artifacts.insert(artifacts.end(), extra_.begin(), extra_.end());
    std::ofstream m(fs::path(cfg_.out) / "manifest.json");
    m << make_manifest(cfg_, command_, artifacts).dump(2) << '\n';
  }

private:
  const RunConfig& cfg_;
  std::string command_;
  std::string name_;
  std::vector<std::string> extra_;
  std::unique_ptr<std::ofstream> file_;
};

std::string data_name(const RunConfig& cfg, const std::string& stem) {
  return stem + "." + cfg.format;
}

void write_json(Sink& sink, const Json& j) { sink.stream() << j.dump(2) << '\n'; }

Json wait_json(const Wait& w) { return w.infinite ? Json("inf") : Json(w.mean); }

Json sigma_json(const StrategyProfile& s) { return s.rows(); }

std::string flatten(const StrategyProfile& s) {
  std::ostringstream o;
  o << std::setprecision(15);
  bool first = true;
  for (const auto& row : s.rows())
    for (double x : row) {
      o << (first ? "" : ";") << x;
      first = false;
    }
  return o.str();
}

// Equilibria for the configured policy: every scalar equilibrium, the
// projection result, or the single NCR profile.
std::vector<EquilibriumResult> equilibria(const RunConfig& cfg) {
  const PolicySpec spec = cfg.policy_spec();
  if (spec.kind == PolicyKind::NCR) {
    auto r = verify_ne(cfg.market, spec, StrategyProfile::truthful(cfg.market.num_types(), 1),
                       cfg.equilibrium.eps, cfg.chain_options());
    r.method = "trivial";
    r.converged = r.residual <= cfg.equilibrium.tol;
    return {r};
  }
  if (cfg.equilibrium.method == "scalar")
    return solve_scalar_two_type(cfg.market, spec, cfg.scalar_options()).equilibria;
  const StrategyProfile init = cfg.sigma_mode == SigmaMode::Explicit
                                   ? cfg.sigma
                                   : StrategyProfile::truthful(cfg.market.num_types(),
                                                               spec.num_queues);
  return {solve_projection(cfg.market, spec, init, cfg.projection_options())};
}

StrategyProfile resolve_sigma(const RunConfig& cfg) {
  if (cfg.sigma_mode != SigmaMode::Solve) return cfg.fixed_sigma();
  const auto eq = equilibria(cfg);
  if (eq.empty()) throw ConvergenceError("no equilibrium found", 0.0);
  // smallest ACR / largest RCR equilibrium
  return cfg.policy == PolicyKind::RCR ? eq.back().sigma : eq.front().sigma;
}

int cmd_throughput(const RunConfig& cfg) {
  const PolicySpec spec = cfg.policy_spec();
  const StrategyProfile sigma = resolve_sigma(cfg);
  const ExactSolution sol = solve_exact(cfg.market, spec, sigma, cfg.chain_options());
  const double tp = throughput(sol.chain, sol.dist);
  Json rec{{"policy", to_string(spec.kind)},
           {"sigma", sigma_json(sigma)},
           {"exact",
            {{"throughput", tp},
             {"states", sol.chain.num_states()},
             {"cap", sol.chain.truncation().total_cap},
             {"cell_cap", sol.chain.truncation().cell_cap},
             {"tail_mass", sol.dist.tail_mass},
             {"residual", sol.dist.residual}}}};
  ReplicationSummary simr;
  if (cfg.sim.replications > 0) {
    SimOptions so;
    so.horizon = cfg.sim.horizon;
    so.warmup = cfg.sim.warmup;
    so.batches = cfg.sim.batches;
    simr = replicate_throughput(cfg.market, spec, sigma, so, cfg.sim.replications, cfg.seed);
    rec["sim"] = Json{{"replications", simr.replications},
                      {"horizon", cfg.sim.horizon},
                      {"warmup", cfg.sim.warmup},
                      {"mean", simr.mean},
                      {"std_error", simr.std_error},
                      {"half_width", 1.96 * simr.std_error}};
  }
  Sink sink(cfg, "throughput", data_name(cfg, "throughput"));
  if (cfg.format == "json") {
    write_json(sink, rec);
  } else {
    auto& o = sink.stream();
    o << std::setprecision(15) << "policy,sigma,tp_exact,states,tail_mass,tp_sim,tp_sim_se\n";
    o << to_string(spec.kind) << ',' << flatten(sigma) << ',' << tp << ','
      << sol.chain.num_states() << ',' << sol.dist.tail_mass << ',';
    if (cfg.sim.replications > 0) o << simr.mean << ',' << simr.std_error;
    else o << ',';
    o << '\n';
  }
  sink.finish();
  return kOk;
}

int cmd_waits(const RunConfig& cfg) {
  const PolicySpec spec = cfg.policy_spec();
  const StrategyProfile sigma = resolve_sigma(cfg);
  const ExactSolution sol = solve_exact(cfg.market, spec, sigma, cfg.chain_options());
  const WaitTable w = virtual_wait_table(sol.chain, sol.dist, {}, cfg.chain_options());
  struct Row {
    int type, queue;
    Wait exact;
    TaggedWaitEstimate sim;
  };
  std::vector<Row> rows;
  for (int i = 0; i < cfg.market.num_types(); ++i)
    for (int q = 0; q < spec.num_queues; ++q) {
      Row r{i, q, w.at(i, q), {}};
      if (cfg.sim.injections > 0 && !r.exact.infinite) {
        TaggedWaitOptions to;
        to.injections = cfg.sim.injections;
        to.batches = cfg.sim.batches;
        r.sim = tagged_wait(cfg.market, spec, sigma, i, q, to,
                            EventStream(cfg.seed).child(static_cast<std::uint64_t>(i * 64 + q)));
      }
      rows.push_back(r);
    }
  Sink sink(cfg, "waits", data_name(cfg, "waits"));
  if (cfg.format == "json") {
    Json arr = Json::array();
    for (const auto& r : rows) {
      Json j{{"type", r.type}, {"queue", r.queue}, {"exact", wait_json(r.exact)}};
      if (cfg.sim.injections > 0 && !r.exact.infinite)
        j["sim"] = Json{{"mean", r.sim.infinite ? Json("inf") : Json(r.sim.mean)},
                        {"std_error", r.sim.std_error},
                        {"samples", r.sim.samples}};
      arr.push_back(j);
    }
    write_json(sink, Json{{"policy", to_string(spec.kind)},
                          {"sigma", sigma_json(sigma)},
                          {"states", sol.chain.num_states()},
                          {"tail_mass", sol.dist.tail_mass},
                          {"waits", arr}});
  } else {
    auto& o = sink.stream();
    o << std::setprecision(15) << "type,queue,wait_exact,wait_sim,wait_sim_se\n";
    for (const auto& r : rows) {
      o << r.type << ',' << r.queue << ',';
      if (r.exact.infinite) o << "inf";
      else o << r.exact.mean;
      o << ',';
      if (cfg.sim.injections > 0 && !r.exact.infinite) o << r.sim.mean << ',' << r.sim.std_error;
      else o << ',';
      o << '\n';
    }
  }
  sink.finish();
  return kOk;
}

int cmd_equilibrium(const RunConfig& cfg) {
  const PolicySpec spec = cfg.policy_spec();
  const auto eqs = equilibria(cfg);
  std::vector<double> tps;
  for (const auto& e : eqs)
    tps.push_back(exact_throughput(cfg.market, spec, e.sigma, cfg.chain_options()));
  Sink sink(cfg, "equilibrium", data_name(cfg, "equilibrium"));
  if (cfg.format == "json") {
    Json arr = Json::array();
    for (std::size_t k = 0; k < eqs.size(); ++k) {
      const auto& e = eqs[k];
      Json waits = Json::array();
      for (int i = 0; i < e.waits.num_types(); ++i) {
        Json row = Json::array();
        for (int q = 0; q < e.waits.num_queues(); ++q)
          row.push_back(e.waits.has(i, q) ? wait_json(e.waits.at(i, q)) : Json(nullptr));
        waits.push_back(row);
      }
      arr.push_back(Json{{"sigma", sigma_json(e.sigma)},
                         {"sigma01", e.sigma.num_queues() > 1 ? Json(e.sigma(0, 1)) : Json(nullptr)},
                         {"waits", waits},
                         {"residual", e.residual},
                         {"tp_exact", tps[k]},
                         {"iterations", e.iterations},
                         {"method", e.method},
                         {"converged", e.converged}});
    }
    write_json(sink, Json{{"market", market_to_json(cfg.market)},
                          {"policy", to_string(spec.kind)},
                          {"equilibria", arr}});
  } else {
    auto& o = sink.stream();
    o << std::setprecision(15)
      << "ell,lambda,mu,theta,policy,sigma,sigma01,residual,tp_exact,method,converged\n";
    auto join = [](const std::vector<double>& v) {
      std::ostringstream s;
      s << std::setprecision(15);
      for (std::size_t k = 0; k < v.size(); ++k) s << (k ? ";" : "") << v[k];
      return s.str();
    };
    for (std::size_t k = 0; k < eqs.size(); ++k) {
      const auto& e = eqs[k];
      o << cfg.market.ell << ',' << join(cfg.market.lambda) << ',' << join(cfg.market.mu) << ','
        << cfg.market.theta << ',' << to_string(spec.kind) << ',' << flatten(e.sigma) << ',';
      if (e.sigma.num_queues() > 1) o << e.sigma(0, 1);
      o << ',' << e.residual << ',' << tps[k] << ',' << e.method << ','
        << (e.converged ? 1 : 0) << '\n';
    }
  }
  sink.finish();
  return kOk;
}

Json row_json(const Fig47Row& r) {
  return Json{{"mu0", r.mu0},           {"fb", r.fb},
              {"tp_ncr", r.tp_ncr},     {"tp_acr", r.tp_acr},
              {"tp_rcr", r.tp_rcr},     {"frac_ncr", r.frac_ncr()},
              {"frac_acr", r.frac_acr()}, {"frac_rcr", r.frac_rcr()},
              {"sigma01_acr", r.sigma_acr}, {"sigma01_rcr", r.sigma_rcr},
              {"n_eq_acr", r.n_acr},    {"n_eq_rcr", r.n_rcr},
              {"residual_acr", r.residual_acr}, {"residual_rcr", r.residual_rcr}};
}

Json row_json(const Fig6Row& r) {
  return Json{{"lambda0", r.lambda0},
              {"fb", r.braess.first_best},
              {"tp_acr", r.braess.tp_acr},
              {"tp_rcr", r.braess.tp_rcr},
              {"frac_acr", r.frac_acr()},
              {"frac_rcr", r.frac_rcr()},
              {"sigma01_acr", r.braess.sigma_acr},
              {"sigma01_rcr", r.braess.sigma_rcr}};
}

Json row_json(const Thm2Row& r) {
  return Json{{"draw", r.draw},     {"market", market_to_json(r.params)},
              {"sigma0", r.sigma0}, {"tp_rcr", r.tp_rcr},
              {"tp_ncr", r.tp_ncr}, {"gap", r.gap()},
              {"ok", r.ok()}};
}

Json row_json(const LemmaRow& r) {
  const auto& e = r.estimate;
  return Json{{"policy", r.policy},     {"patience", r.patience},
              {"base", r.base},         {"horizon", r.horizon},
              {"seed", r.seed},         {"replications", e.replications},
              {"mean_base", e.mean_base}, {"mean_flexible", e.mean_flexible},
              {"mean_special", e.mean_special}, {"d1", e.d1},
              {"d1_se", e.d1_se},       {"d2", e.d2},
              {"d2_se", e.d2_se},       {"d1_ok", r.d1_ok()},
              {"d2_ok", r.d2_ok()}};
}

// Streams CSV rows as they arrive; JSON is written once at the end.
template <typename Row, typename Run>
int run_sweep(const RunConfig& cfg, const std::string& name, Run run, Json extra = {}) {
  Sink sink(cfg, "sweep " + name, data_name(cfg, name));
  const bool csv = cfg.format == "csv";
  if (csv) write_csv_header(sink.stream(), static_cast<const Row*>(nullptr));
  RowSink<Row> rows = [&](const Row& r) {
    if (!csv) return;
    write_csv_row(sink.stream(), r);
    sink.stream().flush();
  };
  const auto result = run(rows);
  if (!csv) {
    Json arr = Json::array();
    for (const auto& r : result.first) arr.push_back(row_json(r));
    Json doc{{"sweep", name}, {"rows", arr}};
    for (auto& [k, v] : result.second.items()) doc[k] = v;
    for (auto& [k, v] : extra.items()) doc[k] = v;
    write_json(sink, doc);
  }
  sink.finish();
  if (result.second.contains("passed") && !result.second["passed"].template get<bool>()) {
    std::cerr << Json{{"sweep", name}, {"passed", false}}.dump() << '\n';
    return kFailure;
  }
  return kOk;
}

int cmd_sweep(const RunConfig& cfg, const std::string& name) {
  if (name == "fig4_7") {
    Fig47Options o;
    if (cfg.sweep.market) o.base = *cfg.sweep.market;
    if (cfg.sweep.upper > 0.0) o.upper = cfg.sweep.upper;
    o.points = cfg.sweep.points;
    o.eq = cfg.scalar_options();
    return run_sweep<Fig47Row>(cfg, name, [&](const RowSink<Fig47Row>& s) {
      return std::make_pair(sweep_fig4_7(o, s), Json::object());
    });
  }
  if (name == "fig6") {
    Fig6Options o;
    if (cfg.sweep.market) o.base = *cfg.sweep.market;
    if (cfg.sweep.upper > 0.0) o.upper = cfg.sweep.upper;
    o.points = cfg.sweep.points;
    o.eq = cfg.scalar_options();
    return run_sweep<Fig6Row>(cfg, name, [&](const RowSink<Fig6Row>& s) {
      return std::make_pair(sweep_fig6(o, s), Json::object());
    });
  }
  if (name == "thm2") {
    Thm2Options o;
    o.ell = cfg.sweep.ell;
    o.n_params = cfg.sweep.n_params;
    o.n_sigmas = cfg.sweep.n_sigmas;
    o.state_budget = cfg.sweep.state_budget;
    o.seed = cfg.seed;
    o.chain = cfg.chain_options();
    return run_sweep<Thm2Row>(cfg, name, [&](const RowSink<Thm2Row>& s) {
      Thm2Report rep = theorem2_grid(o, s);
      Json summary{{"violations", rep.violations},
                   {"rejected_draws", rep.rejected_draws},
                   {"max_gap", rep.max_gap},
                   {"min_gap", rep.min_gap},
                   {"passed", rep.passed}};
      return std::make_pair(std::move(rep.rows), summary);
    });
  }
  if (name == "lemmas") {
    LemmaOptions o;
    if (cfg.sweep.market) o.params = *cfg.sweep.market;
    o.replications = cfg.sweep.replications;
    o.seed = cfg.seed;
    return run_sweep<LemmaRow>(cfg, name, [&](const RowSink<LemmaRow>& s) {
      LemmaReport rep = lemma_suite(o, s);
      return std::make_pair(std::move(rep.rows), Json{{"passed", rep.passed}});
    });
  }
  throw InputError("unknown sweep " + name);
}

int cmd_couple(const RunConfig& cfg) {
  const PolicySpec spec = cfg.policy_spec();
  const StrategyProfile sigma = resolve_sigma(cfg);
  const SystemState base = cfg.couple_base();
  Sink sink(cfg, "couple", data_name(cfg, "couple"));
  const FlexibilityEstimate e =
      coupled_value_of_flexibility(cfg.market, spec, sigma, base, cfg.couple.specialized,
                                   cfg.couple.horizon, cfg.couple.replications, cfg.seed,
                                   sink.to_files());
  if (cfg.format == "json") {
    write_json(sink, Json{{"policy", to_string(spec.kind)},
                          {"sigma", sigma_json(sigma)},
                          {"base", cfg.couple.base},
                          {"specialized", cfg.couple.specialized},
                          {"horizon", e.horizon},
                          {"replications", e.replications},
                          {"mean_base", e.mean_base},
                          {"mean_flexible", e.mean_flexible},
                          {"mean_special", e.mean_special},
                          {"d1", e.d1},
                          {"d1_se", e.d1_se},
                          {"d2", e.d2},
                          {"d2_se", e.d2_se}});
  } else {
    auto& o = sink.stream();
    o << std::setprecision(15)
      << "horizon,replications,mean_base,mean_flexible,mean_special,d1,d1_se,d2,d2_se\n"
      << e.horizon << ',' << e.replications << ',' << e.mean_base << ',' << e.mean_flexible
      << ',' << e.mean_special << ',' << e.d1 << ',' << e.d1_se << ',' << e.d2 << ','
      << e.d2_se << '\n';
  }
  if (sink.to_files()) {
    const std::pair<const char*, const std::vector<EventRecord>*> logs[] = {
        {"events_base.csv", &e.log_base},
        {"events_flexible.csv", &e.log_flexible},
        {"events_special.csv", &e.log_special}};
    for (const auto& [name, log] : logs) {
      std::ofstream f(sink.path(name));
      write_event_log(*log, f);
      sink.add_artifact(name);
    }
  }
  sink.finish();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Strategic matching queues: exact analysis, equilibria, simulation, sweeps"};
  app.set_version_flag("--version", std::string(MATCHQ_VERSION));
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out, format, sweep_name;
  std::uint64_t seed = 0;
  int cap = 0, reps = 0, points = 0;
  double horizon = 0.0;
  auto* o_config = app.add_option("--config", config_path, "JSON config file")
                       ->envname("MATCHQ_CONFIG");
  auto* o_seed = app.add_option("--seed", seed, "Base random seed")->envname("MATCHQ_SEED");
  auto* o_out = app.add_option("--out", out, "Output directory (stdout when unset)")
                    ->envname("MATCHQ_OUT");
  auto* o_format = app.add_option("--format", format, "csv or json")
                       ->check(CLI::IsMember({"csv", "json"}))
                       ->envname("MATCHQ_FORMAT");
  auto* o_cap = app.add_option("--cap", cap, "Population cap (0 = adaptive)")
                    ->check(CLI::NonNegativeNumber)
                    ->envname("MATCHQ_CAP");
  auto* o_horizon = app.add_option("--horizon", horizon, "Simulation or coupling horizon")
                        ->check(CLI::NonNegativeNumber)
                        ->envname("MATCHQ_HORIZON");
  auto* o_reps = app.add_option("--reps", reps, "Replications")
                     ->check(CLI::PositiveNumber)
                     ->envname("MATCHQ_REPS");
  auto* o_points = app.add_option("--points", points, "Sweep grid points")
                       ->check(CLI::Range(2, 100000))
                       ->envname("MATCHQ_POINTS");

  auto* c_tp = app.add_subcommand("throughput", "Exact (and simulated) throughput");
  auto* c_waits = app.add_subcommand("waits", "Expected virtual waits per (type, queue)");
  auto* c_eq = app.add_subcommand("equilibrium", "Nash equilibria of the joining game");
  auto* c_sweep = app.add_subcommand("sweep", "Parameter sweeps and property suites");
  c_sweep->add_option("name", sweep_name, "fig4_7, fig6, thm2 or lemmas")
      ->required()
      ->check(CLI::IsMember({"fig4_7", "fig6", "thm2", "lemmas"}));
  auto* c_couple = app.add_subcommand("couple", "Coupled value-of-flexibility estimate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage", e.what());
    return kConfigError;
  }

  try {
    RunConfig cfg = *o_config ? load_config(config_path) : RunConfig{};
    const bool couple = c_couple->parsed();
    const bool lemmas = c_sweep->parsed() && sweep_name == "lemmas";
    if (*o_seed) cfg.seed = seed;
    if (*o_out) cfg.out = out;
    if (*o_format) cfg.format = format;
    if (*o_cap) cfg.solver.cap = cap;
    if (*o_horizon) (couple ? cfg.couple.horizon : cfg.sim.horizon) = horizon;
    if (*o_reps) {
      if (couple) cfg.couple.replications = reps;
      else if (lemmas) cfg.sweep.replications = reps;
      else cfg.sim.replications = reps;
    }
    if (*o_points) cfg.sweep.points = points;
    cfg.validate();

    if (c_tp->parsed()) return cmd_throughput(cfg);
    if (c_waits->parsed()) return cmd_waits(cfg);
    if (c_eq->parsed()) return cmd_equilibrium(cfg);
    if (c_sweep->parsed()) return cmd_sweep(cfg, sweep_name);
    if (couple) return cmd_couple(cfg);
  } catch (const InputError& e) {
    report_error("config", e.what());
    return kConfigError;
  } catch (const CapacityError& e) {
    report_error("capacity", e.what());
    return kConfigError;
  } catch (const ConvergenceError& e) {
    report_error("convergence", e.what());
    return kConvergenceError;
  } catch (const std::exception& e) {
    report_error("internal", e.what());
    return kFailure;
  }
  return kFailure;
}
