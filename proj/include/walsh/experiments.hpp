// Experiment registry: one named, configurable, reproducible run per claim,
// plus CSV/JSON result serialization and the key-value config file format.
#pragma once

#include "walsh/stats.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace walsh {

// User-facing configuration; unset fields fall back to per-experiment
// documented defaults. experiment_id is one of E1..E13 (E8 splits into E8a
// and E8b).
struct ExperimentConfig {
  std::string experiment_id;
  std::optional<int> n_rays;
  std::optional<std::vector<double>> probs;
  std::optional<double> t;
  std::optional<std::vector<double>> dt;   // several entries = mesh list
  std::optional<std::int64_t> n_paths;
  std::optional<std::vector<double>> r;    // several entries = r grid
  std::uint64_t master_seed = 20160704;
  std::optional<int> workers;
  std::string out_dir = "results";
};

struct ResultRecord {
  std::string experiment_id;
  std::string claim_ref;
  std::string statistic_name;
  double estimate = 0.0;
  double stderror = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::int64_t n_paths = 0;
  int n_rays = 0;
  std::string probs_repr;            // semicolon-joined probabilities
  double t = 0.0;
  double dt = 0.0;
  std::optional<double> r;
  std::uint64_t master_seed = 0;
  bool pass = false;
  double wallclock_s = 0.0;
  std::string config_hash;           // replay anchor, also in the JSON summary
  std::optional<TestOutcome> test;   // full detail when the record is a test
  std::optional<double> target;      // reference value, when the claim has one
  std::optional<double> tolerance;   // acceptance half-width for value records
};

struct ExperimentInfo {
  std::string id;
  std::string claim_ref;
  std::string description;
};

// Registered experiments in run order of `run all`.
const std::vector<ExperimentInfo>& experiment_registry();

// Runs one experiment (cfg.experiment_id must name a registry entry).
// Deterministic in (cfg, master_seed) for any worker count.
std::vector<ResultRecord> run_experiment(const ExperimentConfig& cfg);

// Runs every registry experiment with the same overrides.
std::vector<ResultRecord> run_all(ExperimentConfig cfg);

bool all_pass(const std::vector<ResultRecord>& records);

// Writes results.csv and summary.json into out_dir (created if needed).
// Throws std::runtime_error on I/O failure.
void emit_results(const std::vector<ResultRecord>& records,
                  const ExperimentConfig& cfg, const std::string& out_dir);

// Flat `key = value` config file; keys are the ExperimentConfig field names,
// vectors comma-separated. Unknown keys are configuration errors.
ExperimentConfig config_from_file(const std::string& path);

// Rebuilds the invocation config from a summary.json written by emit_results.
ExperimentConfig config_from_summary(const std::string& path);

// Deterministic static-chunked parallel map; results must be written to
// per-index slots so the reduction order never depends on scheduling.
void parallel_for(std::int64_t n, int workers,
                  const std::function<void(std::int64_t)>& body);

}  // namespace walsh
