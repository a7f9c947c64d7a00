#include "qsdfv/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "qsdfv/conditioned_evolution.hpp"
#include "qsdfv/fv_simulator.hpp"
#include "qsdfv/graphical_sampler.hpp"
#include "qsdfv/parallel.hpp"
#include "qsdfv/qsd_solver.hpp"

namespace qsdfv {

namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
  throw Error("config: " + path + ": " + what);
}

double get_number(const json& v, const std::string& path) {
  if (!v.is_number()) config_error(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) config_error(path, "must be finite");
  return d;
}

std::uint64_t get_count(const json& v, const std::string& path) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    config_error(path, "expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::string get_string(const json& v, const std::string& path) {
  if (!v.is_string()) config_error(path, "expected a string");
  return v.get<std::string>();
}

}  // namespace

ExperimentConfig parse_config(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw Error(std::string("config: malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error("config: top level must be an object");
  ExperimentConfig cfg;
  for (const auto& [key, v] : doc.items()) {
    if (key == "mode") {
      cfg.mode = get_string(v, key);
    } else if (key == "experiment_id") {
      cfg.experiment_id = get_string(v, key);
    } else if (key == "chain") {
      cfg.chain_path = get_string(v, key);
    } else if (key == "builder") {
      cfg.builder = get_string(v, key);
    } else if (key == "p") {
      cfg.p = get_number(v, key);
    } else if (key == "L") {
      cfg.L = get_count(v, key);
    } else if (key == "c") {
      cfg.c = get_number(v, key);
    } else if (key == "mu") {
      cfg.mu = get_string(v, key);
    } else if (key == "N" || key == "N_list") {
      cfg.N_list.clear();
      if (v.is_array()) {
        for (std::size_t k = 0; k < v.size(); ++k) cfg.N_list.push_back(get_count(v[k], "N[" + std::to_string(k) + "]"));
      } else {
        cfg.N_list.push_back(get_count(v, key));
      }
    } else if (key == "t") {
      cfg.t = get_number(v, key);
    } else if (key == "replicas") {
      cfg.replicas = get_count(v, key);
    } else if (key == "seed") {
      cfg.seed = get_count(v, key);
    } else if (key == "tol") {
      cfg.tol = get_number(v, key);
    } else if (key == "burn_in") {
      cfg.burn_in = get_number(v, key);
    } else if (key == "horizon") {
      cfg.horizon = get_number(v, key);
    } else if (key == "batches") {
      cfg.batches = get_count(v, key);
    } else if (key == "k_max") {
      cfg.k_max = static_cast<std::uint32_t>(get_count(v, key));
    } else if (key == "repetitions") {
      cfg.repetitions = get_count(v, key);
    } else if (key == "out") {
      cfg.out = get_string(v, key);
    } else {
      config_error(key, "unknown field");
    }
  }
  return cfg;
}

RateMatrix build_chain(const ExperimentConfig& config, std::string* name) {
  if (config.chain_path) {
    if (name) *name = std::filesystem::path(*config.chain_path).stem().string();
    return load_spec_file(*config.chain_path);
  }
  if (name) *name = config.builder;
  if (config.builder == "two_state_example") return two_state_example();
  if (config.builder == "symmetric_two_state") return symmetric_two_state(config.c);
  if (config.builder == "asymmetric_walk") return asymmetric_walk(config.p, config.L);
  config_error("builder", "unknown builder '" + config.builder +
                              "' (two_state_example, symmetric_two_state, asymmetric_walk)");
}

Distribution initial_law(const ExperimentConfig& config, const RateMatrix& rates) {
  if (config.mu == "uniform") return Distribution::uniform(rates.space_ptr());
  if (config.mu.rfind("delta:", 0) == 0) {
    const auto label = std::string_view(config.mu).substr(6);
    const auto x = rates.space().find(label);
    if (!x) config_error("mu", "unknown state '" + std::string(label) + "'");
    return Distribution::delta(rates.space_ptr(), *x);
  }
  config_error("mu", "expected 'uniform' or 'delta:<label>'");
}

namespace {

struct Context {
  const ExperimentConfig& cfg;
  const RateMatrix& rates;
  std::string chain_name;
  std::string id;
  Seed seed;
  bool builtin_example;  // the built-in two-state example
  RunResult result;

  ResultRow row(std::optional<std::size_t> N, std::optional<double> t, std::string label, double estimate,
                double stderr, std::size_t replicas) const {
    ResultRow r;
    r.experiment_id = id;
    r.mode = cfg.mode;
    r.chain_name = chain_name;
    r.N = N;
    r.t = t;
    r.state_label = std::move(label);
    r.estimate = estimate;
    r.stderr = stderr;
    r.replicas = replicas;
    r.seed = seed;
    return r;
  }

  void add(ResultRow r) { result.rows.push_back(std::move(r)); }

  void add_bound(ResultRow r, double bound, bool gated) {
    r.reference_value = bound;
    r.reference_source = "paper";
    if (gated && r.estimate > bound + kSigmaSlack * r.stderr) {
      char buf[256];
      std::snprintf(buf, sizeof buf, "%s N=%zu: %.6g > %.6g + 3 * %.3g", r.state_label.c_str(),
                    r.N.value_or(0), r.estimate, bound, r.stderr);
      result.violations.emplace_back(buf);
    }
    add(std::move(r));
  }

  const std::string& label(StateIndex x) const { return rates.space().label(x); }
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double spread_stderr(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

std::string config_label(const std::vector<std::uint32_t>& counts) {
  std::string s = "config";
  for (auto c : counts) s += ":" + std::to_string(c);
  return s;
}

std::uint64_t composition_count(std::size_t n, std::size_t particles) {
  // C(particles + n - 1, n - 1), saturating
  double c = 1.0;
  for (std::size_t k = 1; k < n; ++k) c = c * static_cast<double>(particles + k) / static_cast<double>(k);
  return c > 1e18 ? std::uint64_t{1} << 62 : static_cast<std::uint64_t>(std::llround(c));
}

constexpr std::uint64_t kExactConfigurationLimit = 400;

void solve_qsd_mode(Context& ctx) {
  validate_chain(ctx.rates);
  const auto q = qsd_power(ctx.rates, ctx.cfg.tol);
  if (!q.converged) throw Error("solve-qsd: power iteration did not converge");
  std::optional<QsdResult> other;
  if (!ctx.builtin_example) {
    other = qsd_via_yaglom(ctx.rates, ctx.cfg.tol);
  }
  const double root5 = std::sqrt(5.0);
  for (StateIndex x = 0; x < ctx.rates.size(); ++x) {
    auto r = ctx.row(std::nullopt, std::nullopt, ctx.label(x), q.nu[x], 0.0, 0);
    if (ctx.builtin_example) {
      r.reference_value = x == 0 ? (3.0 - root5) / 2.0 : (root5 - 1.0) / 2.0;
      r.reference_source = "paper";
    } else if (other->converged) {
      r.reference_value = other->nu[x];
      r.reference_source = "qsd-solver";
    }
    ctx.add(std::move(r));
  }
  auto r = ctx.row(std::nullopt, std::nullopt, "decay-rate", -q.eigenvalue, 0.0, 0);
  if (other && other->converged) {
    r.reference_value = -other->eigenvalue;
    r.reference_source = "qsd-solver";
  }
  ctx.add(std::move(r));
}

void evolve_mode(Context& ctx) {
  const auto mu = initial_law(ctx.cfg, ctx.rates);
  const auto phi = ctx.cfg.t == 0.0 ? mu : phi_semigroup(ctx.rates, mu, ctx.cfg.t);
  for (StateIndex x = 0; x < ctx.rates.size(); ++x) {
    ctx.add(ctx.row(std::nullopt, ctx.cfg.t, ctx.label(x), phi[x], 0.0, 0));
  }
}

void simulate_mode(Context& ctx) {
  const auto mu = initial_law(ctx.cfg, ctx.rates);
  const auto phi = ctx.cfg.t == 0.0 ? mu : phi_semigroup(ctx.rates, mu, ctx.cfg.t);
  const std::size_t n = ctx.rates.size();
  for (std::size_t N : ctx.cfg.N_list) {
    const auto est = estimate_profile(ctx.rates, mu, N, ctx.cfg.t, ctx.cfg.replicas, derive_seed(ctx.seed, N));
    const auto err = squared_error(est, phi.weights());
    for (StateIndex x = 0; x < n; ++x) {
      auto r = ctx.row(N, ctx.cfg.t, ctx.label(x), est.mean_profile[x], est.mean_stderr[x], est.replicas);
      r.reference_value = phi[x];
      r.reference_source = "semigroup-oracle";
      ctx.add(std::move(r));
    }
    for (StateIndex x = 0; x < n; ++x) {
      ctx.add(ctx.row(N, ctx.cfg.t, "mse:" + ctx.label(x), err.mse[x], err.stderr[x], est.replicas));
    }
    for (StateIndex x = 0; x < n; ++x) {
      for (StateIndex y = x; y < n; ++y) {
        ctx.add(ctx.row(N, ctx.cfg.t, "cov:" + ctx.label(x) + ":" + ctx.label(y), est.cov(x, y),
                        est.cov_stderr(x, y), est.replicas));
      }
    }
  }
}

StationaryOptions stationary_options(const ExperimentConfig& cfg) {
  StationaryOptions o;
  o.burn_in = cfg.burn_in;
  o.horizon = cfg.horizon;
  o.batches = cfg.batches;
  return o;
}

void stationary_mode(Context& ctx) {
  const std::size_t n = ctx.rates.size();
  const auto nu = qsd_power(ctx.rates, 1e-12);
  const auto a0_reference = regeneration_resolvent_profile(ctx.rates);
  for (std::size_t N : ctx.cfg.N_list) {
    auto options = stationary_options(ctx.cfg);
    const bool exact = composition_count(n, N) <= kExactConfigurationLimit;
    options.track_configurations = exact;
    const auto est = estimate_stationary(ctx.rates, N, options, derive_seed(ctx.seed, N));
    const std::size_t batches = est.moments.replicas;
    for (StateIndex x = 0; x < n; ++x) {
      auto r = ctx.row(N, std::nullopt, ctx.label(x), est.moments.mean_profile[x], est.moments.mean_stderr[x],
                       batches);
      if (nu.converged) {
        r.reference_value = nu.nu[x];
        r.reference_source = "qsd-solver";
      }
      ctx.add(std::move(r));
    }
    for (StateIndex x = 0; x < n; ++x) {
      for (StateIndex y = x; y < n; ++y) {
        ctx.add(ctx.row(N, std::nullopt, "cov:" + ctx.label(x) + ":" + ctx.label(y), est.moments.cov(x, y),
                        est.moments.cov_stderr(x, y), batches));
      }
    }
    for (StateIndex x = 0; x < n; ++x) {
      auto r = ctx.row(N, std::nullopt, "type0:" + ctx.label(x), est.types.mean[0][x], est.types.stderr[0][x],
                       batches);
      r.reference_value = a0_reference[x];
      r.reference_source = "paper";
      ctx.add(std::move(r));
    }
    if (exact) {
      const auto law = exact_stationary_configurations(ctx.rates, N);
      std::map<std::vector<std::uint32_t>, const ConfigurationWeight*> seen;
      for (const auto& c : est.configurations) seen[c.counts] = &c;
      for (const auto& c : law) {
        const auto it = seen.find(c.counts);
        auto r = ctx.row(N, std::nullopt, config_label(c.counts), it == seen.end() ? 0.0 : it->second->weight,
                         it == seen.end() ? 0.0 : it->second->stderr, batches);
        if (ctx.builtin_example && N == 2) {
          r.reference_value = c.weight;
          r.reference_source = "paper";
        }
        ctx.add(std::move(r));
      }
    }
  }
}

void perfect_sample_mode(Context& ctx) {
  const std::size_t n = ctx.rates.size();
  const std::size_t R = ctx.cfg.replicas;
  for (std::size_t N : ctx.cfg.N_list) {
    const Seed base = derive_seed(ctx.seed, N);
    std::vector<std::vector<std::uint32_t>> samples(R);
    std::vector<double> doublings(R);
    parallel_for(R, [&](std::size_t r) {
      const auto s = perfect_sample(ctx.rates, N, derive_seed(base, r));
      samples[r] = unlabeled(s.config, n);
      doublings[r] = s.doublings;
    });
    const double inv_n = 1.0 / static_cast<double>(N);
    for (StateIndex x = 0; x < n; ++x) {
      std::vector<double> frac(R);
      for (std::size_t r = 0; r < R; ++r) frac[r] = samples[r][x] * inv_n;
      const double mean = std::accumulate(frac.begin(), frac.end(), 0.0) / static_cast<double>(R);
      ctx.add(ctx.row(N, std::nullopt, ctx.label(x), mean, spread_stderr(frac), R));
    }
    const double mean_k = std::accumulate(doublings.begin(), doublings.end(), 0.0) / static_cast<double>(R);
    ctx.add(ctx.row(N, std::nullopt, "doublings", mean_k, spread_stderr(doublings), R));
    if (composition_count(n, N) > kExactConfigurationLimit) continue;
    const auto law = exact_stationary_configurations(ctx.rates, N);
    std::map<std::vector<std::uint32_t>, double> freq;
    for (const auto& s : samples) freq[s] += 1.0 / static_cast<double>(R);
    double tv = 0.0;
    double tv_var = 0.0;
    for (const auto& c : law) {
      const double f = freq.count(c.counts) ? freq[c.counts] : 0.0;
      tv += 0.5 * std::abs(f - c.weight);
      tv_var += 0.25 * f * (1.0 - f) / static_cast<double>(R);
      auto r = ctx.row(N, std::nullopt, config_label(c.counts), f, std::sqrt(f * (1.0 - f) / static_cast<double>(R)),
                       R);
      if (ctx.builtin_example && N == 2) {
        r.reference_value = c.weight;
        r.reference_source = "paper";
      }
      ctx.add(std::move(r));
    }
    ctx.add(ctx.row(N, std::nullopt, "tv-distance", tv, std::sqrt(tv_var), R));
  }
}

void verify_bounds_mode(Context& ctx) {
  const auto summary = validate_chain(ctx.rates);
  const auto mu = initial_law(ctx.cfg, ctx.rates);
  const std::size_t n = ctx.rates.size();
  const double t = ctx.cfg.t;
  const bool proven = summary.alpha > summary.C;
  for (std::size_t N : ctx.cfg.N_list) {
    const auto scale = static_cast<double>(N);
    const Seed base = derive_seed(ctx.seed, N);

    const auto est = estimate_profile(ctx.rates, mu, N, t, ctx.cfg.replicas, derive_seed(base, 0));
    const double transient_bound = std::exp(2.0 * summary.C * t);
    for (StateIndex x = 0; x < n; ++x) {
      for (StateIndex y = x; y < n; ++y) {
        ctx.add_bound(ctx.row(N, t, "cov-transient:" + ctx.label(x) + ":" + ctx.label(y),
                              std::abs(est.cov(x, y)) * scale, est.cov_stderr(x, y) * scale, est.replicas),
                      transient_bound, true);
      }
    }

    if (summary.alpha > 0.0) {
      const auto st = estimate_stationary(ctx.rates, N, stationary_options(ctx.cfg), derive_seed(base, 1));
      const double bound = proven ? summary.alpha / (summary.alpha - summary.C) : INFINITY;
      for (StateIndex x = 0; x < n; ++x) {
        for (StateIndex y = x; y < n; ++y) {
          auto r = ctx.row(N, std::nullopt, "cov-stationary:" + ctx.label(x) + ":" + ctx.label(y),
                           std::abs(st.moments.cov(x, y)) * scale, st.moments.cov_stderr(x, y) * scale,
                           st.moments.replicas);
          if (proven) {
            ctx.add_bound(std::move(r), bound, true);
          } else {
            ctx.add(std::move(r));
          }
        }
      }
    }

    const auto coupling = estimate_I_probability(ctx.rates, N, t, ctx.cfg.replicas, derive_seed(base, 2));
    ctx.add_bound(ctx.row(N, t, "intersection", coupling.probability, coupling.stderr, coupling.replicas),
                  coupling.bound, proven);

    const auto types = check_type_bound(ctx.rates, mu, N, t, ctx.cfg.replicas, ctx.cfg.k_max, derive_seed(base, 3));
    for (const auto& c : types.checks) {
      std::string label = c.name == "growth" ? "growth" : "type" + std::to_string(c.k);
      auto r = ctx.row(N, t, label + ":" + ctx.label(c.state), c.estimate, c.stderr, ctx.cfg.replicas);
      r.reference_value = c.bound;
      r.reference_source = "paper";
      if (c.violated) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%s N=%zu: %.6g vs %.6g (stderr %.3g)", r.state_label.c_str(), N,
                      c.estimate, c.bound, c.stderr);
        ctx.result.violations.emplace_back(buf);
      }
      ctx.add(std::move(r));
    }
  }
}

void sweep_mode(Context& ctx) {
  const auto mu = initial_law(ctx.cfg, ctx.rates);
  const auto phi = phi_semigroup(ctx.rates, mu, ctx.cfg.t);
  const std::size_t n = ctx.rates.size();
  const std::size_t reps = ctx.cfg.repetitions;
  if (reps == 0) config_error("repetitions", "must be >= 1");
  for (std::size_t N : ctx.cfg.N_list) {
    std::vector<double> max_err(reps);
    std::vector<std::vector<double>> mse(n, std::vector<double>(reps));
    for (std::size_t rep = 0; rep < reps; ++rep) {
      const auto est = estimate_profile(ctx.rates, mu, N, ctx.cfg.t, ctx.cfg.replicas,
                                        derive_seed(derive_seed(ctx.seed, rep), N));
      const auto err = squared_error(est, phi.weights());
      double worst = 0.0;
      for (StateIndex x = 0; x < n; ++x) {
        worst = std::max(worst, std::abs(est.mean_profile[x] - phi[x]));
        mse[x][rep] = err.mse[x];
      }
      max_err[rep] = worst;
    }
    ctx.add(ctx.row(N, ctx.cfg.t, "max-abs-error", median(max_err), spread_stderr(max_err), ctx.cfg.replicas));
    for (StateIndex x = 0; x < n; ++x) {
      ctx.add(ctx.row(N, ctx.cfg.t, "mse:" + ctx.label(x), median(mse[x]), spread_stderr(mse[x]), ctx.cfg.replicas));
    }
  }
}

void check_config(const ExperimentConfig& cfg) {
  if (std::find(kModes.begin(), kModes.end(), cfg.mode) == kModes.end()) {
    config_error("mode", "unknown mode '" + cfg.mode + "'");
  }
  if (!cfg.seed) config_error("seed", "required (runs are never seeded from the clock)");
  if (!(cfg.t >= 0.0)) config_error("t", "must be >= 0");
  if (!(cfg.tol > 0.0)) config_error("tol", "must be > 0");
  const bool deterministic = cfg.mode == "solve-qsd" || cfg.mode == "evolve";
  if (deterministic) return;
  if (cfg.N_list.empty()) config_error("N", "at least one particle count required");
  for (std::size_t k = 0; k < cfg.N_list.size(); ++k) {
    if (cfg.N_list[k] < 2) config_error("N[" + std::to_string(k) + "]", "must be >= 2");
  }
  if (cfg.mode != "stationary" && cfg.replicas < 2) config_error("replicas", "must be >= 2");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char ch = line[k];
    if (quoted) {
      if (ch == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        fields.back() += '"';
        ++k;
      } else if (ch == '"') {
        quoted = false;
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else {
      fields.back() += ch;
    }
  }
  if (quoted) throw Error("csv line " + std::to_string(line_no) + ": unterminated quote");
  return fields;
}

const char* kHeader =
    "experiment_id,mode,chain_name,N,t,state_label,estimate,stderr,reference_value,reference_source,replicas,seed";

double parse_double(const std::string& s, std::size_t line_no, const char* column) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) {
    throw Error("csv line " + std::to_string(line_no) + ": " + column + ": not a number: '" + s + "'");
  }
  return v;
}

std::uint64_t parse_unsigned(const std::string& s, std::size_t line_no, const char* column) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty() || s[0] == '-') {
    throw Error("csv line " + std::to_string(line_no) + ": " + column + ": not an unsigned integer: '" + s + "'");
  }
  return v;
}

}  // namespace

RunResult run(const ExperimentConfig& config) {
  check_config(config);
  std::string name;
  const RateMatrix rates = build_chain(config, &name);
  const Seed seed = *config.seed;
  std::string id = config.experiment_id;
  if (id.empty()) id = config.mode + "-" + name + "-s" + std::to_string(seed);
  Context ctx{config, rates, name, id, seed, !config.chain_path && config.builder == "two_state_example", {}};
  if (config.mode == "solve-qsd") {
    solve_qsd_mode(ctx);
  } else if (config.mode == "evolve") {
    evolve_mode(ctx);
  } else if (config.mode == "simulate") {
    simulate_mode(ctx);
  } else if (config.mode == "stationary") {
    stationary_mode(ctx);
  } else if (config.mode == "perfect-sample") {
    perfect_sample_mode(ctx);
  } else if (config.mode == "verify-bounds") {
    verify_bounds_mode(ctx);
  } else {
    sweep_mode(ctx);
  }
  ctx.result.exit_code = ctx.result.violations.empty() ? 0 : 2;
  return std::move(ctx.result);
}

std::string to_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << kHeader << '\n';
  for (const auto& r : rows) {
    os << csv_field(r.experiment_id) << ',' << csv_field(r.mode) << ',' << csv_field(r.chain_name) << ','
       << (r.N ? std::to_string(*r.N) : "") << ',' << (r.t ? format_double(*r.t) : "") << ','
       << csv_field(r.state_label) << ',' << format_double(r.estimate) << ',' << format_double(r.stderr) << ','
       << (r.reference_value ? format_double(*r.reference_value) : "") << ',' << r.reference_source << ','
       << r.replicas << ',' << r.seed << '\n';
  }
  return os.str();
}

std::vector<ResultRow> parse_csv(std::string_view document) {
  std::vector<ResultRow> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < document.size()) {
    std::size_t end = document.find('\n', pos);
    if (end == std::string_view::npos) end = document.size();
    std::string_view line = document.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kHeader) throw Error("csv line 1: unexpected header");
      header_seen = true;
      continue;
    }
    const auto f = split_csv_line(line, line_no);
    if (f.size() != 12) {
      throw Error("csv line " + std::to_string(line_no) + ": expected 12 fields, got " + std::to_string(f.size()));
    }
    ResultRow r;
    r.experiment_id = f[0];
    r.mode = f[1];
    r.chain_name = f[2];
    if (!f[3].empty()) r.N = parse_unsigned(f[3], line_no, "N");
    if (!f[4].empty()) r.t = parse_double(f[4], line_no, "t");
    r.state_label = f[5];
    r.estimate = parse_double(f[6], line_no, "estimate");
    r.stderr = parse_double(f[7], line_no, "stderr");
    if (!f[8].empty()) r.reference_value = parse_double(f[8], line_no, "reference_value");
    r.reference_source = f[9];
    r.replicas = parse_unsigned(f[10], line_no, "replicas");
    r.seed = parse_unsigned(f[11], line_no, "seed");
    rows.push_back(std::move(r));
  }
  if (!header_seen) throw Error("csv: empty document");
  return rows;
}

CompareReport compare(const std::vector<ResultRow>& a, const std::vector<ResultRow>& b,
                      const CompareOptions& options) {
  using Key = std::tuple<std::string, std::optional<std::size_t>, std::optional<double>>;
  auto key_of = [&](const ResultRow& r) -> Key {
    if (options.state_only) return {r.state_label, std::nullopt, std::nullopt};
    return {r.state_label, r.N, r.t};
  };
  auto describe = [](const Key& k) {
    std::string s = std::get<0>(k);
    if (std::get<1>(k)) s += " N=" + std::to_string(*std::get<1>(k));
    if (std::get<2>(k)) s += " t=" + format_double(*std::get<2>(k));
    return s;
  };
  std::map<Key, const ResultRow*> right;
  for (const auto& r : b) {
    if (!right.emplace(key_of(r), &r).second) throw Error("compare: duplicate key in second report: " + describe(key_of(r)));
  }
  std::map<Key, const ResultRow*> left;
  for (const auto& r : a) {
    if (!left.emplace(key_of(r), &r).second) throw Error("compare: duplicate key in first report: " + describe(key_of(r)));
  }
  CompareReport report;
  for (const auto& [key, ra] : left) {
    const auto it = right.find(key);
    if (it == right.end()) {
      report.missing.push_back("only in first: " + describe(key));
      continue;
    }
    const ResultRow* rb = it->second;
    CompareRow row;
    row.state_label = std::get<0>(key);
    row.N = ra->N;
    row.t = ra->t;
    row.estimate_a = ra->estimate;
    row.estimate_b = rb->estimate;
    row.delta = ra->estimate - rb->estimate;
    row.allowed = std::max(options.tolerance, options.sigma * std::hypot(ra->stderr, rb->stderr));
    row.flagged = std::abs(row.delta) > row.allowed;
    report.flagged += row.flagged ? 1 : 0;
    report.max_abs_delta = std::max(report.max_abs_delta, std::abs(row.delta));
    report.rows.push_back(std::move(row));
  }
  for (const auto& [key, rb] : right) {
    if (!left.count(key)) report.missing.push_back("only in second: " + describe(key));
  }
  return report;
}

std::string to_csv(const CompareReport& report) {
  std::ostringstream os;
  os << "state_label,N,t,estimate_a,estimate_b,delta,allowed,flagged\n";
  for (const auto& r : report.rows) {
    os << csv_field(r.state_label) << ',' << (r.N ? std::to_string(*r.N) : "") << ','
       << (r.t ? format_double(*r.t) : "") << ',' << format_double(r.estimate_a) << ','
       << format_double(r.estimate_b) << ',' << format_double(r.delta) << ',' << format_double(r.allowed) << ','
       << (r.flagged ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace qsdfv
