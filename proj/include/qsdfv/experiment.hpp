#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qsdfv/chain_model.hpp"

namespace qsdfv {

inline const std::vector<std::string> kModes = {"solve-qsd",      "evolve",        "simulate", "stationary",
                                                "perfect-sample", "verify-bounds", "sweep"};

struct ExperimentConfig {
  std::string mode;
  std::string experiment_id;  // derived from mode, chain and seed when empty

  std::optional<std::string> chain_path;  // chain spec JSON; overrides the builder
  std::string builder = "two_state_example";
  double p = 0.3;          // asymmetric_walk
  std::size_t L = 20;      // asymmetric_walk
  double c = 1.0;          // symmetric_two_state absorption

  std::string mu = "uniform";  // "uniform" or "delta:<label>"
  std::vector<std::size_t> N_list = {100};
  double t = 1.0;
  std::size_t replicas = 1000;
  std::optional<Seed> seed;
  double tol = 1e-10;
  double burn_in = 100.0;
  double horizon = 1e4;
  std::size_t batches = 50;
  std::uint32_t k_max = 5;
  std::size_t repetitions = 5;  // sweep
  std::optional<std::string> out;
};

// JSON object with the fields above; errors carry the field path.
ExperimentConfig parse_config(std::string_view document);

struct ResultRow {
  std::string experiment_id;
  std::string mode;
  std::string chain_name;
  std::optional<std::size_t> N;
  std::optional<double> t;
  std::string state_label;
  double estimate = 0.0;
  double stderr = 0.0;
  std::optional<double> reference_value;
  std::string reference_source = "none";  // paper | semigroup-oracle | qsd-solver | none
  std::size_t replicas = 0;
  Seed seed = 0;
};

struct RunResult {
  std::vector<ResultRow> rows;
  int exit_code = 0;  // 0 ok, 2 bound violated
  std::vector<std::string> violations;
};

RateMatrix build_chain(const ExperimentConfig& config, std::string* name = nullptr);
Distribution initial_law(const ExperimentConfig& config, const RateMatrix& rates);

RunResult run(const ExperimentConfig& config);

std::string to_csv(const std::vector<ResultRow>& rows);
std::vector<ResultRow> parse_csv(std::string_view document);

struct CompareOptions {
  double tolerance = 1e-9;
  double sigma = 3.0;        // allowed |delta| is max(tolerance, sigma * combined stderr)
  bool state_only = false;   // join on state label alone
};

struct CompareRow {
  std::string state_label;
  std::optional<std::size_t> N;
  std::optional<double> t;
  double estimate_a = 0.0;
  double estimate_b = 0.0;
  double delta = 0.0;
  double allowed = 0.0;
  bool flagged = false;
};

struct CompareReport {
  std::vector<CompareRow> rows;
  std::vector<std::string> missing;  // keys present on one side only
  std::size_t flagged = 0;
  double max_abs_delta = 0.0;
};

CompareReport compare(const std::vector<ResultRow>& a, const std::vector<ResultRow>& b,
                      const CompareOptions& options = {});
std::string to_csv(const CompareReport& report);

}  // namespace qsdfv
