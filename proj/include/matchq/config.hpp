#ifndef MATCHQ_CONFIG_HPP
#define MATCHQ_CONFIG_HPP

// Run configuration: JSON schema, defaults, validation and manifests.

#include "matchq/ctmc.hpp"
#include "matchq/equilibrium.hpp"
#include "matchq/model.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace matchq {

using Json = nlohmann::ordered_json;

enum class SigmaMode { Truthful, Solve, Explicit };

struct SolverConfig {
  std::string truncation = "population";  // population | per_cell
  int cap = 0;                             // 0 = adaptive
  double tail_target = 1e-8;
  double tol = 1e-10;
  std::size_t max_states = 1000000;
};

struct EquilibriumConfig {
  std::string method = "scalar";  // scalar | projection
  int grid_points = 11;
  double tol = 1e-6;
  double eps = 1e-6;
  double step = 1.0;
  double damping = 0.5;
  int max_iter = 500;
};

struct SimConfig {
  double horizon = 1000.0;
  double warmup = 0.0;
  int replications = 0;  // 0 = exact only
  int batches = 32;
  int injections = 0;    // tagged injections for simulated waits; 0 = exact only
};

struct CoupleConfig {
  std::vector<std::vector<int>> base;  // counts per (type, queue); empty = all zero
  int specialized = 1;
  double horizon = 1.0;
  int replications = 10000;
};

struct SweepConfig {
  int points = 61;
  double upper = 0.0;  // 0 = figure default
  std::optional<MarketParams> market;
  int ell = 1;
  int n_params = 25;
  int n_sigmas = 5;
  std::size_t state_budget = 60000;
  int replications = 10000;
};

struct RunConfig {
  MarketParams market;
  PolicyKind policy = PolicyKind::ACR;
  bool pooled = false;
  SigmaMode sigma_mode = SigmaMode::Truthful;
  StrategyProfile sigma;  // used with SigmaMode::Explicit
  SolverConfig solver;
  EquilibriumConfig equilibrium;
  SimConfig sim;
  CoupleConfig couple;
  SweepConfig sweep;
  std::uint64_t seed = 1;
  std::string out;
  std::string format = "json";  // json | csv

  RunConfig();

  PolicySpec policy_spec() const;
  ChainOptions chain_options() const;
  ScalarOptions scalar_options() const;
  ProjectionOptions projection_options() const;
  /// Explicit or truthful profile; throws for SigmaMode::Solve.
  StrategyProfile fixed_sigma() const;
  SystemState couple_base() const;

  /// Throws InputError on out-of-range knobs.
  void validate() const;
};

/// Parses a config document; unknown keys raise InputError. A top-level
/// "_manifest" member is accepted and ignored.
RunConfig config_from_json(const Json& doc);
Json config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::string& path);

Json market_to_json(const MarketParams& p);
MarketParams market_from_json(const Json& j);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);
std::string hex64(std::uint64_t v);

/// Resolved config plus a "_manifest" member (command, artifacts, config hash,
/// seed, version). Loading it back reproduces the run.
Json make_manifest(const RunConfig& cfg, const std::string& command,
                   const std::vector<std::string>& artifacts);

}  // namespace matchq

#endif  // MATCHQ_CONFIG_HPP
