// qsdfv: command-line front end for the experiment harness.
//
//   qsdfv solve-qsd --builder two_state_example --seed 1
//   qsdfv simulate --builder two_state_example --mu delta:1 --N 10 100 --t 1 --replicas 10000 --seed 7
//   qsdfv compare a.csv b.csv --tol 1e-9

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "qsdfv/experiment.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw qsdfv::Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_output(const std::string& text, const std::optional<std::string>& path) {
  if (!path || *path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(*path, std::ios::binary);
  if (!out) throw qsdfv::Error("cannot write " + *path);
  out << text;
}

struct ModeCommand {
  CLI::App* app = nullptr;
  std::string mode;
  qsdfv::ExperimentConfig flags;
  std::string config_path;
  std::string chain_path;
  std::uint64_t seed = 0;
  std::string out;
  // options given on the command line override the config file
  std::vector<std::pair<CLI::Option*, std::function<void(qsdfv::ExperimentConfig&)>>> overrides;

  template <class T>
  void option(const std::string& name, T& target, const std::string& help,
              std::function<void(qsdfv::ExperimentConfig&)> apply) {
    overrides.emplace_back(app->add_option(name, target, help), std::move(apply));
  }

  void attach(CLI::App& root, const std::string& name, const std::string& description) {
    mode = name;
    app = root.add_subcommand(name, description);
    app->add_option("--config", config_path, "experiment config JSON; flags override its fields");
    auto& f = flags;
    option("--chain", chain_path, "chain spec JSON file", [this](auto& c) { c.chain_path = chain_path; });
    option("--builder", f.builder, "two_state_example | symmetric_two_state | asymmetric_walk",
           [&f](auto& c) { c.builder = f.builder; });
    option("--p", f.p, "asymmetric_walk step-right probability", [&f](auto& c) { c.p = f.p; });
    option("--L", f.L, "asymmetric_walk length", [&f](auto& c) { c.L = f.L; });
    option("--c", f.c, "symmetric_two_state absorption rate", [&f](auto& c) { c.c = f.c; });
    option("--mu", f.mu, "initial law: uniform | delta:<label>", [&f](auto& c) { c.mu = f.mu; });
    option("--N", f.N_list, "particle counts", [&f](auto& c) { c.N_list = f.N_list; });
    option("--t", f.t, "time", [&f](auto& c) { c.t = f.t; });
    option("--replicas", f.replicas, "independent replicas or samples", [&f](auto& c) { c.replicas = f.replicas; });
    option("--seed", seed, "master seed (required)", [this](auto& c) { c.seed = seed; });
    option("--tol", f.tol, "solver tolerance", [&f](auto& c) { c.tol = f.tol; });
    option("--burn-in", f.burn_in, "stationary burn-in time", [&f](auto& c) { c.burn_in = f.burn_in; });
    option("--horizon", f.horizon, "stationary averaging horizon", [&f](auto& c) { c.horizon = f.horizon; });
    option("--batches", f.batches, "batch-means batches", [&f](auto& c) { c.batches = f.batches; });
    option("--k-max", f.k_max, "largest type checked", [&f](auto& c) { c.k_max = f.k_max; });
    option("--repetitions", f.repetitions, "sweep repetitions", [&f](auto& c) { c.repetitions = f.repetitions; });
    option("--id", f.experiment_id, "experiment id", [&f](auto& c) { c.experiment_id = f.experiment_id; });
    option("--out", out, "output CSV path (stdout by default)", [this](auto& c) { c.out = out; });
  }

  int execute() const {
    qsdfv::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = qsdfv::parse_config(read_file(config_path));
    for (const auto& [opt, apply] : overrides) {
      if (opt->count() > 0) apply(cfg);
    }
    if (!cfg.mode.empty() && cfg.mode != mode) {
      throw qsdfv::Error("config: mode: file says '" + cfg.mode + "' but the subcommand is '" + mode + "'");
    }
    cfg.mode = mode;
    const auto result = qsdfv::run(cfg);
    write_output(qsdfv::to_csv(result.rows), cfg.out);
    for (const auto& v : result.violations) std::fprintf(stderr, "bound violated: %s\n", v.c_str());
    return result.exit_code;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quasi-stationary distributions and Fleming-Viot particle systems"};
  app.require_subcommand(1);

  const std::vector<std::pair<std::string, std::string>> modes = {
      {"solve-qsd", "QSD by power iteration, with a reference"},
      {"evolve", "law at time t conditioned on survival"},
      {"simulate", "Fleming-Viot profile at time t over replicas"},
      {"stationary", "time-averaged stationary profile, covariances and types"},
      {"perfect-sample", "exact stationary samples by coupling from the past"},
      {"verify-bounds", "covariance, intersection and type bounds (exit 2 on violation)"},
      {"sweep", "L2 error against the conditioned law across N, medians over repetitions"},
  };
  std::vector<ModeCommand> commands(modes.size());
  for (std::size_t k = 0; k < modes.size(); ++k) commands[k].attach(app, modes[k].first, modes[k].second);

  auto* cmp = app.add_subcommand("compare", "join two result CSVs on (state, N, t) and report deltas");
  std::string file_a;
  std::string file_b;
  std::string cmp_out;
  qsdfv::CompareOptions cmp_options;
  cmp->add_option("first", file_a, "first CSV")->required();
  cmp->add_option("second", file_b, "second CSV")->required();
  cmp->add_option("--tol", cmp_options.tolerance, "absolute tolerance");
  cmp->add_option("--sigma", cmp_options.sigma, "allowed standard errors");
  cmp->add_flag("--state-only", cmp_options.state_only, "join on the state label alone");
  cmp->add_option("--out", cmp_out, "output CSV path (stdout by default)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (cmp->parsed()) {
      const auto report =
          qsdfv::compare(qsdfv::parse_csv(read_file(file_a)), qsdfv::parse_csv(read_file(file_b)), cmp_options);
      write_output(qsdfv::to_csv(report), cmp_out.empty() ? std::nullopt : std::optional<std::string>(cmp_out));
      for (const auto& m : report.missing) std::fprintf(stderr, "key mismatch: %s\n", m.c_str());
      if (!report.missing.empty()) return 1;
      if (report.flagged) {
        std::fprintf(stderr, "%zu of %zu rows beyond tolerance (max |delta| %.3g)\n", report.flagged,
                     report.rows.size(), report.max_abs_delta);
        return 2;
      }
      return 0;
    }
    for (const auto& c : commands) {
      if (c.app->parsed()) return c.execute();
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
