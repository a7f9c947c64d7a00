#include "qsdfv/fv_simulator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "qsdfv/marks.hpp"
#include "qsdfv/parallel.hpp"

namespace qsdfv {

std::vector<std::uint64_t> occupation(const ParticleConfiguration& config, std::size_t n_states) {
  std::vector<std::uint64_t> counts(n_states, 0);
  for (StateIndex x : config.states) ++counts.at(x);
  return counts;
}

std::size_t TypeLedger::overflow() const {
  return static_cast<std::size_t>(
      std::ranges::count_if(types, [this](std::uint32_t k) { return k > cap; }));
}

ParticleConfiguration fv_init(const Distribution& mu, std::size_t particles, Seed seed) {
  if (particles < 2) throw Error("Fleming-Viot needs at least 2 particles");
  std::vector<double> cumulative;
  double running = 0.0;
  for (double w : mu.weights()) cumulative.push_back(running += w);
  Rng rng(seed);
  ParticleConfiguration config;
  config.states.reserve(particles);
  for (std::size_t i = 0; i < particles; ++i) {
    const double u = rng.uniform() * running;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) it = std::lower_bound(cumulative.begin(), cumulative.end(), running);
    config.states.push_back(static_cast<StateIndex>(it - cumulative.begin()));
  }
  return config;
}

namespace {

void check_run_args(const ParticleConfiguration& config, double t_end, const TypeLedger* ledger) {
  if (config.size() < 2) throw Error("Fleming-Viot needs at least 2 particles");
  if (!(t_end >= config.clock)) throw Error("fv_run: t_end precedes the configuration clock");
  if (ledger && ledger->types.size() != config.size()) throw Error("fv_run: ledger size mismatch");
}

// The hot loop. Accepted events arrive at rate N q̄; one particle changes at most.
template <class OnEvent>
void run_thinning(const RateMatrix& rates, ParticleConfiguration& config, double t_end, TypeLedger* ledger,
                  Rng& rng, OnEvent&& on_event) {
  const std::size_t n = config.size();
  const double qbar = rates.qbar();
  if (qbar > 0.0) {
    const double total = static_cast<double>(n) * qbar;
    auto& states = config.states;
    double time = config.clock;
    for (;;) {
      time += rng.exponential(total);
      if (time > t_end) break;
      const auto i = static_cast<std::uint32_t>(rng.below(n));
      const double u = rng.uniform() * qbar;
      const StateIndex x = states[i];
      const double out = rates.out_rate(x);
      std::uint32_t donor = FvEvent::kNoDonor;
      if (u < out) {
        states[i] = rates.pick_transition(x, u);
      } else if (u - out < rates.absorption(x)) {
        donor = static_cast<std::uint32_t>(rng.other_than(i, n));
        states[i] = states[donor];
        if (ledger) ledger->types[i] = ledger->types[donor] + 1;
      }
      on_event(FvEvent{time, i, u, donor});
    }
  }
  config.clock = t_end;
}

// Marked-construction loop. on_change(time, i, old_state, old_type) fires
// after particle i changed state or type.
template <class OnChange>
void run_regenerative(const MarkLaw& law, ParticleConfiguration& config, double t_end, TypeLedger* ledger,
                      Rng& rng, OnChange&& on_change) {
  if (!(law.regeneration_rate() > 0.0)) {
    throw Error("regenerative scheme needs alpha > 0 (no regeneration marks otherwise)");
  }
  const std::size_t n = config.size();
  const double per_particle = law.per_particle_rate();
  const double alpha = law.regeneration_rate();
  const double internal = law.internal_rate();
  const double total = static_cast<double>(n) * per_particle;
  auto& states = config.states;
  double time = config.clock;
  for (;;) {
    time += rng.exponential(total);
    if (time > t_end) break;
    const auto i = static_cast<std::uint32_t>(rng.below(n));
    double u = rng.uniform() * per_particle;
    const StateIndex x = states[i];
    const std::uint32_t old_type = ledger ? ledger->types[i] : 0;
    if (u < alpha) {
      states[i] = law.regeneration_target(u);
      if (ledger) ledger->types[i] = 0;
    } else if ((u -= alpha) < internal) {
      states[i] = law.internal_target(x, u);
    } else if (law.voter_fires(x, u - internal)) {
      const auto donor = static_cast<std::uint32_t>(rng.other_than(i, n));
      states[i] = states[donor];
      if (ledger) ledger->types[i] = ledger->types[donor] + 1;
    }
    if (states[i] != x || (ledger && ledger->types[i] != old_type)) on_change(time, i, x, old_type);
  }
  config.clock = t_end;
}

struct NoOp {
  template <class... Args>
  void operator()(Args&&...) const {}
};

}  // namespace

void fv_run(const RateMatrix& rates, ParticleConfiguration& config, double t_end, TypeLedger* ledger,
            Seed seed, EventScheme scheme) {
  check_run_args(config, t_end, ledger);
  Rng rng(seed);
  if (scheme == EventScheme::kThinning) {
    run_thinning(rates, config, t_end, ledger, rng, NoOp{});
  } else {
    const MarkLaw law(rates);
    run_regenerative(law, config, t_end, ledger, rng, NoOp{});
  }
}

std::vector<FvEvent> fv_trace(const RateMatrix& rates, ParticleConfiguration& config, double t_end,
                              Seed seed) {
  check_run_args(config, t_end, nullptr);
  Rng rng(seed);
  std::vector<FvEvent> events;
  run_thinning(rates, config, t_end, nullptr, rng, [&](const FvEvent& e) { events.push_back(e); });
  return events;
}

void apply_fv_event(const RateMatrix& rates, ParticleConfiguration& config, const FvEvent& event,
                    TypeLedger* ledger) {
  auto& states = config.states;
  const StateIndex x = states.at(event.particle);
  const double out = rates.out_rate(x);
  if (event.u < out) {
    states[event.particle] = rates.pick_transition(x, event.u);
  } else if (event.u - out < rates.absorption(x)) {
    if (event.donor == FvEvent::kNoDonor || event.donor == event.particle) {
      throw Error("apply_fv_event: absorption event without a valid donor");
    }
    states[event.particle] = states.at(event.donor);
    if (ledger) ledger->types[event.particle] = ledger->types[event.donor] + 1;
  }
  config.clock = event.time;
}

namespace {

struct MeanStderr {
  double mean;
  double stderr;
};

MeanStderr summarize(const std::vector<double>& samples) {
  const auto count = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / count;
  double ss = 0.0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  const double var = samples.size() > 1 ? ss / (count - 1.0) : 0.0;
  return {mean, std::sqrt(var / count)};
}

// Replica-level moments from a row-major (replicas x n) sample table.
MomentEstimate moments_from_replicas(const std::vector<double>& table, std::size_t replicas, std::size_t n) {
  MomentEstimate est;
  est.replicas = replicas;
  est.mean_profile.assign(n, 0.0);
  est.mean_stderr.assign(n, 0.0);
  est.cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  est.cov_stderr = est.cov;
  std::vector<double> column(replicas);
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t r = 0; r < replicas; ++r) column[r] = table[r * n + x];
    const auto s = summarize(column);
    est.mean_profile[x] = s.mean;
    est.mean_stderr[x] = s.stderr;
  }
  const auto count = static_cast<double>(replicas);
  std::vector<double> products(replicas);
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t y = x; y < n; ++y) {
      for (std::size_t r = 0; r < replicas; ++r) {
        products[r] = (table[r * n + x] - est.mean_profile[x]) * (table[r * n + y] - est.mean_profile[y]);
      }
      const auto s = summarize(products);
      const double cov = s.mean * count / (count - 1.0);
      const auto ix = static_cast<Eigen::Index>(x);
      const auto iy = static_cast<Eigen::Index>(y);
      est.cov(ix, iy) = est.cov(iy, ix) = cov;
      est.cov_stderr(ix, iy) = est.cov_stderr(iy, ix) = s.stderr;
    }
  }
  return est;
}

}  // namespace

std::vector<double> mean_squared_error(const MomentEstimate& estimate, std::span<const double> reference) {
  const std::size_t n = estimate.mean_profile.size();
  if (reference.size() != n) throw Error("mean_squared_error: size mismatch");
  const auto r = static_cast<double>(estimate.replicas);
  std::vector<double> mse(n);
  for (std::size_t x = 0; x < n; ++x) {
    const auto i = static_cast<Eigen::Index>(x);
    const double bias = estimate.mean_profile[x] - reference[x];
    mse[x] = estimate.cov(i, i) * (r - 1.0) / r + bias * bias;
  }
  return mse;
}

ErrorEstimate squared_error(const MomentEstimate& estimate, std::span<const double> reference) {
  const std::size_t n = estimate.mean_profile.size();
  if (reference.size() != n) throw Error("squared_error: size mismatch");
  if (estimate.samples.size() != estimate.replicas * n) throw Error("squared_error: replica samples not kept");
  ErrorEstimate out{std::vector<double>(n), std::vector<double>(n)};
  std::vector<double> column(estimate.replicas);
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t r = 0; r < estimate.replicas; ++r) {
      const double d = estimate.samples[r * n + x] - reference[x];
      column[r] = d * d;
    }
    const auto s = summarize(column);
    out.mse[x] = s.mean;
    out.stderr[x] = s.stderr;
  }
  return out;
}

MomentEstimate estimate_profile(const RateMatrix& rates, const Distribution& mu, std::size_t particles,
                                double t, std::size_t replicas, Seed seed) {
  if (replicas < 2) throw Error("estimate_profile needs at least 2 replicas");
  if (particles < 2) throw Error("Fleming-Viot needs at least 2 particles");
  const std::size_t n = rates.size();
  std::vector<double> table(replicas * n, 0.0);
  const double inv = 1.0 / static_cast<double>(particles);
  parallel_for(replicas, [&](std::size_t r) {
    auto config = fv_init(mu, particles, derive_seed(seed, 2 * r));
    fv_run(rates, config, t, nullptr, derive_seed(seed, 2 * r + 1));
    for (StateIndex x : config.states) table[r * n + x] += inv;
  });
  auto est = moments_from_replicas(table, replicas, n);
  est.samples = std::move(table);
  return est;
}

namespace {

// Integrates piecewise-constant cell values over equal time batches of
// [start, start + batches * width).
class BatchIntegrator {
 public:
  BatchIntegrator(double start, double width, std::size_t batches)
      : start_(start), width_(width), batches_(batches) {}

  std::size_t add_cell(double value, double time) {
    values_.push_back(value);
    last_.push_back(std::max(time, start_));
    sums_.emplace_back(batches_, 0.0);
    return values_.size() - 1;
  }

  void set(std::size_t cell, double value, double time) {
    roll(time);
    if (batch_ < batches_ && time > last_[cell]) {
      sums_[cell][batch_] += values_[cell] * (time - last_[cell]);
      last_[cell] = time;
    }
    values_[cell] = value;
  }

  double value(std::size_t cell) const { return values_[cell]; }

  void roll(double time) {
    while (batch_ < batches_ && time >= boundary(batch_ + 1)) {
      const double edge = boundary(batch_ + 1);
      for (std::size_t c = 0; c < values_.size(); ++c) {
        sums_[c][batch_] += values_[c] * (edge - last_[c]);
        last_[c] = edge;
      }
      ++batch_;
    }
  }

  void finish() { roll(boundary(batches_)); }

  std::vector<double> batch_means(std::size_t cell, double scale) const {
    std::vector<double> out(batches_);
    for (std::size_t b = 0; b < batches_; ++b) out[b] = sums_[cell][b] / width_ * scale;
    return out;
  }

 private:
  double boundary(std::size_t b) const { return start_ + static_cast<double>(b) * width_; }

  double start_;
  double width_;
  std::size_t batches_;
  std::size_t batch_ = 0;
  std::vector<double> values_;
  std::vector<double> last_;
  std::vector<std::vector<double>> sums_;
};

}  // namespace

StationaryEstimate estimate_stationary(const RateMatrix& rates, std::size_t particles,
                                       const StationaryOptions& options, Seed seed) {
  const MarkLaw law(rates);
  const auto& summary = law.summary();
  if (!(summary.alpha > 0.0)) {
    throw Error("estimate_stationary: alpha = 0, no ergodicity guarantee for the particle system");
  }
  if (particles < 2) throw Error("Fleming-Viot needs at least 2 particles");
  if (options.batches < 2) throw Error("estimate_stationary: need at least 2 batches");
  if (!(options.horizon > 0.0) || !(options.burn_in >= 0.0)) {
    throw Error("estimate_stationary: horizon must be > 0 and burn_in >= 0");
  }

  const std::size_t n = rates.size();
  const std::size_t type_rows = options.type_cap + 2;  // 0..cap, then overflow
  auto config = fv_init(*summary.mu_alpha, particles, derive_seed(seed, 0));
  auto ledger = TypeLedger::fresh(particles, options.type_cap);
  auto eta = occupation(config, n);

  BatchIntegrator integ(options.burn_in, options.horizon / static_cast<double>(options.batches),
                        options.batches);
  // Cells: eta(x) | eta(x) eta(y) | count(type k, state x) | configurations.
  const std::size_t occ0 = 0;
  const std::size_t prod0 = n;
  const std::size_t type0 = n + n * n;
  for (std::size_t x = 0; x < n; ++x) integ.add_cell(static_cast<double>(eta[x]), 0.0);
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t y = 0; y < n; ++y) integ.add_cell(static_cast<double>(eta[x] * eta[y]), 0.0);
  }
  for (std::size_t k = 0; k < type_rows; ++k) {
    for (std::size_t x = 0; x < n; ++x) integ.add_cell(k == 0 ? static_cast<double>(eta[x]) : 0.0, 0.0);
  }
  std::map<std::vector<std::uint32_t>, std::size_t> config_cells;
  std::vector<std::uint32_t> config_key(eta.begin(), eta.end());
  std::size_t current_config = 0;
  if (options.track_configurations) current_config = config_cells[config_key] = integ.add_cell(1.0, 0.0);

  auto type_row = [&](std::uint32_t k) { return std::min<std::size_t>(k, options.type_cap + 1); };
  auto bump = [&](std::size_t cell, double delta, double time) {
    integ.set(cell, integ.value(cell) + delta, time);
  };
  auto set_state_cells = [&](std::size_t a, double time) {
    integ.set(occ0 + a, static_cast<double>(eta[a]), time);
    for (std::size_t y = 0; y < n; ++y) {
      integ.set(prod0 + a * n + y, static_cast<double>(eta[a] * eta[y]), time);
      integ.set(prod0 + y * n + a, static_cast<double>(eta[y] * eta[a]), time);
    }
  };

  Rng rng(derive_seed(seed, 1));
  const double t_end = options.burn_in + options.horizon;
  run_regenerative(law, config, t_end, &ledger, rng,
                   [&](double time, std::uint32_t i, StateIndex old_state, std::uint32_t old_type) {
                     const StateIndex new_state = config.states[i];
                     bump(type0 + type_row(old_type) * n + old_state, -1.0, time);
                     bump(type0 + type_row(ledger.types[i]) * n + new_state, 1.0, time);
                     if (new_state == old_state) return;
                     --eta[old_state];
                     ++eta[new_state];
                     set_state_cells(old_state, time);
                     set_state_cells(new_state, time);
                     if (options.track_configurations) {
                       integ.set(current_config, 0.0, time);
                       --config_key[old_state];
                       ++config_key[new_state];
                       auto [it, inserted] = config_cells.try_emplace(config_key, 0);
                       if (inserted) it->second = integ.add_cell(0.0, time);
                       current_config = it->second;
                       integ.set(current_config, 1.0, time);
                     }
                   });
  integ.finish();

  StationaryEstimate est;
  est.proven_regime = summary.unique_qsd_regime();
  const double inv_n = 1.0 / static_cast<double>(particles);
  const std::size_t batches = options.batches;
  auto& m = est.moments;
  m.replicas = batches;
  m.mean_profile.assign(n, 0.0);
  m.mean_stderr.assign(n, 0.0);
  const auto ni = static_cast<Eigen::Index>(n);
  m.cov = Eigen::MatrixXd::Zero(ni, ni);
  m.cov_stderr = Eigen::MatrixXd::Zero(ni, ni);
  std::vector<std::vector<double>> occ_batches(n);
  for (std::size_t x = 0; x < n; ++x) {
    occ_batches[x] = integ.batch_means(occ0 + x, inv_n);
    const auto s = summarize(occ_batches[x]);
    m.mean_profile[x] = s.mean;
    m.mean_stderr[x] = s.stderr;
  }
  std::vector<double> cov_b(batches);
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t y = 0; y < n; ++y) {
      const auto prod = integ.batch_means(prod0 + x * n + y, inv_n * inv_n);
      for (std::size_t b = 0; b < batches; ++b) cov_b[b] = prod[b] - occ_batches[x][b] * occ_batches[y][b];
      const double prod_mean = std::accumulate(prod.begin(), prod.end(), 0.0) / static_cast<double>(batches);
      const auto ix = static_cast<Eigen::Index>(x);
      const auto iy = static_cast<Eigen::Index>(y);
      m.cov(ix, iy) = prod_mean - m.mean_profile[x] * m.mean_profile[y];
      m.cov_stderr(ix, iy) = summarize(cov_b).stderr;
    }
  }
  est.types.mean.assign(type_rows, std::vector<double>(n, 0.0));
  est.types.stderr.assign(type_rows, std::vector<double>(n, 0.0));
  for (std::size_t k = 0; k < type_rows; ++k) {
    for (std::size_t x = 0; x < n; ++x) {
      const auto s = summarize(integ.batch_means(type0 + k * n + x, inv_n));
      est.types.mean[k][x] = s.mean;
      est.types.stderr[k][x] = s.stderr;
    }
  }
  for (const auto& [key, cell] : config_cells) {
    const auto s = summarize(integ.batch_means(cell, 1.0));
    est.configurations.push_back({key, s.mean, s.stderr});
  }
  return est;
}

TypeBoundReport check_type_bound(const RateMatrix& rates, const Distribution& mu, std::size_t particles,
                                 double t, std::size_t replicas, std::uint32_t k_max, Seed seed) {
  if (replicas < 2) throw Error("check_type_bound needs at least 2 replicas");
  if (particles < 2) throw Error("Fleming-Viot needs at least 2 particles");
  const std::size_t n = rates.size();
  const std::size_t rows = k_max + 2;  // types 0..k_max, then overflow
  const std::size_t width = rows * n;
  std::vector<double> table(replicas * width, 0.0);
  const double inv = 1.0 / static_cast<double>(particles);
  parallel_for(replicas, [&](std::size_t r) {
    auto config = fv_init(mu, particles, derive_seed(seed, 2 * r));
    auto ledger = TypeLedger::fresh(particles, k_max);
    fv_run(rates, config, t, &ledger, derive_seed(seed, 2 * r + 1));
    for (std::size_t i = 0; i < particles; ++i) {
      const std::size_t k = std::min<std::size_t>(ledger.types[i], k_max + 1);
      table[r * width + k * n + config.states[i]] += inv;
    }
  });

  const SubKernel kernel = semigroup(rates, t);
  const Eigen::Map<const Eigen::RowVectorXd> mu_row(mu.weights().data(), static_cast<Eigen::Index>(n));
  const Eigen::RowVectorXd evolved = mu_row * kernel.entries;
  const double C = summarize_chain(rates).C;

  TypeBoundReport report;
  std::vector<double> column(replicas);
  auto cell_stats = [&](auto&& value_of) {
    for (std::size_t r = 0; r < replicas; ++r) column[r] = value_of(r);
    return summarize(column);
  };
  auto push = [&](BoundCheck check) {
    if (check.equality) {
      check.violated = std::abs(check.estimate - check.bound) > kSigmaSlack * check.stderr + 1e-12;
    } else {
      check.violated = check.estimate > check.bound + kSigmaSlack * check.stderr + 1e-12;
    }
    report.violations += check.violated ? 1 : 0;
    report.checks.push_back(std::move(check));
  };

  double poisson_term = 1.0;  // (Ct)^k / k!
  for (std::uint32_t k = 0; k <= k_max; ++k) {
    if (k > 0) poisson_term *= C * t / k;
    for (StateIndex x = 0; x < n; ++x) {
      const auto s = cell_stats([&](std::size_t r) { return table[r * width + k * n + x]; });
      push({k == 0 ? "type0" : "typek", k, x, s.mean, s.stderr, poisson_term * evolved(x), k == 0, false});
    }
  }
  const double growth = std::exp(C * t);
  for (StateIndex x = 0; x < n; ++x) {
    const auto s = cell_stats([&](std::size_t r) {
      double total = 0.0;
      for (std::size_t k = 0; k < rows; ++k) total += table[r * width + k * n + x];
      return total;
    });
    push({"growth", 0, x, s.mean, s.stderr, growth * evolved(x), false, false});
  }
  for (StateIndex x = 0; x < n; ++x) {
    report.overflow_fraction += cell_stats([&](std::size_t r) { return table[r * width + (k_max + 1) * n + x]; }).mean;
  }
  return report;
}

namespace {

// All occupation vectors of `particles` over n states, lexicographic.
void compositions(std::size_t n, std::size_t particles, std::vector<std::uint32_t>& current, std::size_t x,
                  std::vector<std::vector<std::uint32_t>>& out, std::size_t limit) {
  if (out.size() > limit) return;
  if (x + 1 == n) {
    current[x] = static_cast<std::uint32_t>(particles);
    out.push_back(current);
    return;
  }
  for (std::size_t k = particles + 1; k-- > 0;) {
    current[x] = static_cast<std::uint32_t>(k);
    compositions(n, particles - k, current, x + 1, out, limit);
  }
}

}  // namespace

std::vector<ConfigurationWeight> exact_stationary_configurations(const RateMatrix& rates, std::size_t particles,
                                                                 std::size_t max_configurations) {
  if (particles < 2) throw Error("Fleming-Viot needs at least 2 particles");
  const std::size_t n = rates.size();
  std::vector<std::vector<std::uint32_t>> configs;
  std::vector<std::uint32_t> current(n, 0);
  compositions(n, particles, current, 0, configs, max_configurations);
  if (configs.size() > max_configurations) throw Error("exact_stationary_configurations: too many configurations");
  std::map<std::vector<std::uint32_t>, Eigen::Index> index;
  for (std::size_t c = 0; c < configs.size(); ++c) index[configs[c]] = static_cast<Eigen::Index>(c);

  const auto m = static_cast<Eigen::Index>(configs.size());
  Eigen::MatrixXd generator = Eigen::MatrixXd::Zero(m, m);
  const double others = static_cast<double>(particles - 1);
  for (Eigen::Index c = 0; c < m; ++c) {
    const auto& eta = configs[static_cast<std::size_t>(c)];
    for (StateIndex x = 0; x < n; ++x) {
      if (eta[x] == 0) continue;
      for (StateIndex y = 0; y < n; ++y) {
        if (y == x) continue;
        const double rate =
            eta[x] * (rates.rate(x, y) + rates.absorption(x) * static_cast<double>(eta[y]) / others);
        if (rate == 0.0) continue;
        auto next = eta;
        --next[x];
        ++next[y];
        const Eigen::Index d = index.at(next);
        generator(c, d) += rate;
        generator(c, c) -= rate;
      }
    }
  }
  // pi A = 0, sum pi = 1: replace one balance equation by the normalization.
  Eigen::MatrixXd system = generator.transpose();
  system.row(m - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  rhs(m - 1) = 1.0;
  const Eigen::VectorXd pi = system.fullPivLu().solve(rhs);
  std::vector<ConfigurationWeight> out;
  for (Eigen::Index c = 0; c < m; ++c) out.push_back({configs[static_cast<std::size_t>(c)], pi(c), 0.0});
  return out;
}

std::vector<double> stationary_type0_profile(const RateMatrix& rates) {
  const MarkLaw law(rates);
  const auto& summary = law.summary();
  if (!(summary.alpha > 0.0)) throw Error("stationary_type0_profile: needs alpha > 0");
  const std::size_t n = rates.size();
  const auto ni = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(ni, ni);
  for (StateIndex x = 0; x < n; ++x) {
    double leave = rates.absorption(x);
    for (const auto& tr : rates.row(x)) {
      const double w = tr.rate - summary.alpha_z[tr.to];
      m(x, tr.to) -= w;
      leave += w;
    }
    m(x, x) += summary.alpha + leave;
  }
  Eigen::RowVectorXd start(ni);
  for (StateIndex x = 0; x < n; ++x) start(x) = summary.alpha_z[x];
  const Eigen::RowVectorXd a0 = m.transpose().partialPivLu().solve(start.transpose()).transpose();
  return {a0.data(), a0.data() + ni};
}

std::vector<double> regeneration_resolvent_profile(const RateMatrix& rates) {
  const auto summary = summarize_chain(rates);
  if (!(summary.alpha > 0.0)) throw Error("regeneration_resolvent_profile: needs alpha > 0");
  const SubKernel r = resolvent(rates, summary.alpha);
  const auto w = summary.mu_alpha->weights();
  const Eigen::Map<const Eigen::RowVectorXd> mu(w.data(), static_cast<Eigen::Index>(w.size()));
  const Eigen::RowVectorXd out = mu * r.entries;
  return {out.data(), out.data() + out.size()};
}

}  // namespace qsdfv
