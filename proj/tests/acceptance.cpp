// Acceptance suite: one PASS/FAIL line per criterion, indented detail lines
// above it. Exit status 1 when any criterion fails.
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "qsdfv/conditioned_evolution.hpp"
#include "qsdfv/experiment.hpp"
#include "qsdfv/fv_simulator.hpp"
#include "qsdfv/graphical_sampler.hpp"
#include "qsdfv/qsd_solver.hpp"
#include "stats.hpp"

using namespace qsdfv;

namespace {

const double kRoot5 = std::sqrt(5.0);
const double kNu1 = (3.0 - kRoot5) / 2.0;

void detail(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
void detail(const char* fmt, ...) {
  std::printf("    ");
  va_list args;
  va_start(args, fmt);
  std::vprintf(fmt, args);
  va_end(args);
  std::printf("\n");
}

struct Criterion {
  int number;
  const char* title;
  double limit_seconds;
  std::function<bool()> body;
};

const std::map<std::vector<std::uint32_t>, double> kExactN2 = {{{0, 2}, 0.4}, {{1, 1}, 0.4}, {{2, 0}, 0.2}};

bool exact_qsd() {
  const auto q = qsd_power(two_state_example(), 1e-13);
  const double e1 = std::abs(q.nu[0] - kNu1);
  const double e2 = std::abs(q.nu[1] - (kRoot5 - 1.0) / 2.0);
  detail("nu = (%.12f, %.12f), errors %.2e %.2e (tol 1e-10)", q.nu[0], q.nu[1], e1, e2);
  return q.converged && e1 <= 1e-10 && e2 <= 1e-10;
}

bool exact_n2() {
  const auto b2 = two_state_example();
  const auto law = exact_stationary_configurations(b2, 2);
  bool ok = law.size() == 3;
  double rho1 = 0.0;
  for (std::size_t k = 0; k < law.size() && ok; ++k) {
    const auto it = kExactN2.find(law[k].counts);
    if (it == kExactN2.end()) return false;
    const double err = std::abs(law[k].weight - it->second);
    detail("exact weight of (%u,%u) = %.15f, error %.1e (tol 1e-12)", law[k].counts[0], law[k].counts[1],
           law[k].weight, err);
    ok = ok && err <= 1e-12;
    rho1 += law[k].weight * law[k].counts[0] / 2.0;
  }
  detail("rho^2 = (%.15f, %.15f)", rho1, 1.0 - rho1);
  ok = ok && std::abs(rho1 - 0.4) <= 1e-12;

  StationaryOptions o;
  o.burn_in = 100.0;
  o.horizon = 1e5;
  o.track_configurations = true;
  const auto est = estimate_stationary(b2, 2, o, 2002);
  for (const auto& c : est.configurations) {
    const auto it = kExactN2.find(c.counts);
    const bool hit = it != kExactN2.end() && std::abs(c.weight - it->second) <= 3 * c.stderr;
    detail("simulated weight of (%u,%u) = %.5f +- %.5f %s", c.counts[0], c.counts[1], c.weight, c.stderr,
           hit ? "ok" : "outside 3 sigma");
    ok = ok && hit;
  }
  ok = ok && est.configurations.size() == law.size();
  const double m = est.moments.mean_profile[0];
  const double s = est.moments.mean_stderr[0];
  detail("simulated rho^2(1) = %.5f +- %.5f", m, s);
  return ok && std::abs(m - 0.4) <= 3 * s;
}

bool nu_differs() {
  const auto b2 = two_state_example();
  const auto q = qsd_power(b2, 1e-13);
  const auto law = exact_stationary_configurations(b2, 2);
  double rho1 = 0.0;
  for (const auto& c : law) rho1 += c.weight * c.counts[0] / 2.0;
  const double gap = std::abs(rho1 - q.nu[0]);
  const double expect = 0.4 - kNu1;
  detail("|rho^2(1) - nu(1)| = %.12f, closed form 2/5 - (3 - sqrt 5)/2 = %.12f", gap, expect);
  return std::abs(gap - expect) <= 1e-10 && gap > 0.01;
}

bool law_of_large_numbers() {
  ExperimentConfig cfg;
  cfg.mode = "sweep";
  cfg.N_list = {10, 100, 1000};
  cfg.t = 1.0;
  cfg.mu = "delta:1";
  cfg.replicas = 10000;
  cfg.repetitions = 5;
  cfg.seed = 4004;
  const auto rows = run(cfg).rows;
  bool ok = true;
  for (const std::string x : {"1", "2"}) {
    std::vector<double> mse;
    for (const auto& r : rows) {
      if (r.state_label == "mse:" + x) mse.push_back(r.estimate);
    }
    detail("median L2 error at x=%s: N=10 %.3e, N=100 %.3e, N=1000 %.3e", x.c_str(), mse[0], mse[1], mse[2]);
    ok = ok && mse.size() == 3 && mse[0] > mse[1] && mse[1] > mse[2] && mse[2] <= 5e-3;
  }
  for (const auto& r : rows) {
    if (r.state_label == "max-abs-error") detail("N=%zu median max|estimate - phi| = %.3e", *r.N, r.estimate);
  }
  return ok;
}

bool transient_covariance() {
  const auto b2 = two_state_example();
  const auto mu = Distribution::delta(b2.space_ptr(), 0);
  const double bound = std::exp(2.0);
  bool ok = true;
  for (std::size_t N : {10, 50, 250}) {
    const auto est = estimate_profile(b2, mu, N, 1.0, 10000, derive_seed(5005, N));
    double worst = 0.0;
    for (int x = 0; x < 2; ++x) {
      for (int y = 0; y < 2; ++y) {
        const double v = std::abs(est.cov(x, y)) * N;
        const double s = est.cov_stderr(x, y) * N;
        worst = std::max(worst, v);
        ok = ok && v <= bound + 3 * s;
      }
    }
    detail("N=%zu: max |cov| N = %.4f, bound e^2 = %.4f", N, worst, bound);
  }
  return ok;
}

bool stationary_covariance() {
  const auto b2 = two_state_example();
  StationaryOptions o;
  o.burn_in = 100.0;
  o.horizon = 1e5;
  bool ok = true;
  for (std::size_t N : {10, 50}) {
    const auto est = estimate_stationary(b2, N, o, derive_seed(6006, N));
    double worst = 0.0;
    for (int x = 0; x < 2; ++x) {
      for (int y = 0; y < 2; ++y) {
        const double v = std::abs(est.moments.cov(x, y)) * N;
        const double s = est.moments.cov_stderr(x, y) * N;
        worst = std::max(worst, v);
        ok = ok && v <= 2.0 + 3 * s;
      }
    }
    detail("N=%zu: max |cov| N = %.4f, bound alpha/(alpha - C) = 2", N, worst);
  }
  return ok;
}

bool coupling_bound() {
  const auto b2 = two_state_example();
  bool ok = true;
  for (std::size_t N : {10, 50, 500}) {
    const auto rep = estimate_I_probability(b2, N, 1.0, 20000, derive_seed(7007, N));
    const double bound = (1.0 - std::exp(-2.0)) / static_cast<double>(N - 1);
    detail("N=%zu: P(I=1) = %.5f +- %.5f, bound %.5f", N, rep.probability, rep.stderr, bound);
    ok = ok && std::abs(rep.bound - bound) <= 1e-12 && rep.probability <= bound + 3 * rep.stderr;
  }
  return ok;
}

bool perfect_sampler() {
  const auto b2 = two_state_example();
  const auto law = exact_stationary_configurations(b2, 2);
  const int samples = 100000;
  std::map<std::vector<std::uint32_t>, double> freq;
  for (int r = 0; r < samples; ++r) {
    freq[unlabeled(perfect_sample(b2, 2, derive_seed(8008, r)).config, 2)] += 1.0 / samples;
  }
  const double tv = stats::tv_distance(freq, law);
  detail("TV distance over %d samples = %.5f (tol 0.01)", samples, tv);
  const std::vector<std::vector<StateIndex>> starts = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  int mismatches = 0;
  for (int r = 0; r < 10000; ++r) {
    const auto first = perfect_sample(b2, 2, derive_seed(8009, r), kMaxDoublings, &starts[0]).config.states;
    for (std::size_t s = 1; s < starts.size(); ++s) {
      if (perfect_sample(b2, 2, derive_seed(8009, r), kMaxDoublings, &starts[s]).config.states != first) {
        ++mismatches;
      }
    }
  }
  detail("initial-condition independence: %d mismatches over 1e4 windows", mismatches);
  return tv <= 0.01 && mismatches == 0;
}

bool ode_uniqueness() {
  bool ok = true;
  for (const auto& rates : {two_state_example(), asymmetric_walk(0.3, 20)}) {
    const auto mu = Distribution::delta(rates.space_ptr(), 0);
    const auto path = phi_ode(rates, mu, 2.0, 1e-3);
    double gap = 0.0;
    for (std::size_t k = 0; k < path.times.size(); ++k) {
      gap = std::max(gap, sup_distance(path.phis[k], phi_semigroup(rates, mu, path.times[k])));
    }
    detail("%zu states: sup gap over %zu grid points = %.2e (tol 1e-6)", rates.size(), path.times.size(), gap);
    ok = ok && gap <= 1e-6;
  }
  return ok;
}

bool tightness() {
  const auto b2 = two_state_example();
  const auto mu = Distribution::delta(b2.space_ptr(), 0);
  const auto report = check_type_bound(b2, mu, 100, 1.0, 10000, 5, 10010);
  for (const auto& c : report.checks) {
    if (c.name == "typek" && c.k > 2) continue;
    detail("%s k=%u x=%u: %.5f +- %.5f vs %.5f%s", c.name.c_str(), c.k, c.state + 1, c.estimate, c.stderr, c.bound,
           c.violated ? "  VIOLATED" : "");
  }
  detail("transient checks: %zu, violations %zu", report.checks.size(), report.violations);
  bool ok = report.violations == 0;

  StationaryOptions o;
  o.burn_in = 100.0;
  o.horizon = 2e4;
  const auto est = estimate_stationary(b2, 100, o, 10011);
  const auto claimed = regeneration_resolvent_profile(b2);
  const auto internal = stationary_type0_profile(b2);
  bool stationary_ok = true;
  for (StateIndex x = 0; x < 2; ++x) {
    const double m = est.types.mean[0][x];
    const double s = est.types.stderr[0][x];
    const bool hit = std::abs(m - claimed[x]) <= 3 * s;
    stationary_ok = stationary_ok && hit;
    detail("stationary type 0 at x=%u: %.5f +- %.5f vs mu_alpha R_alpha = %.5f %s", x + 1, m, s, claimed[x],
           hit ? "ok" : "outside 3 sigma");
    detail("  (regeneration-to-first-absorption profile: %.5f)", internal[x]);
  }
  return ok && stationary_ok;
}

bool properties() {
  bool ok = true;

  // exchangeability and occupation sums along replayed traces
  {
    const auto walk = asymmetric_walk(0.3, 8);
    const std::size_t N = 12;
    int bad = 0;
    std::size_t events_seen = 0;
    for (int run = 0; run < 200; ++run) {
      const auto start = fv_init(Distribution::uniform(walk.space_ptr()), N, derive_seed(11001, run));
      auto traced = start;
      const auto events = fv_trace(walk, traced, 10.0, derive_seed(11002, run));
      std::vector<std::uint32_t> perm(N);
      std::iota(perm.begin(), perm.end(), 0u);
      Rng rng(derive_seed(11003, run));
      for (std::size_t k = N - 1; k > 0; --k) std::swap(perm[k], perm[rng.below(k + 1)]);
      auto a = start;
      ParticleConfiguration b{std::vector<StateIndex>(N), 0.0};
      for (std::size_t i = 0; i < N; ++i) b.states[perm[i]] = start.states[i];
      for (const auto& e : events) {
        apply_fv_event(walk, a, e);
        FvEvent moved = e;
        moved.particle = perm[e.particle];
        if (e.donor != FvEvent::kNoDonor) moved.donor = perm[e.donor];
        apply_fv_event(walk, b, moved);
        const auto eta = occupation(a, walk.size());
        if (eta != occupation(b, walk.size()) || std::accumulate(eta.begin(), eta.end(), std::uint64_t{0}) != N) {
          ++bad;
        }
      }
      events_seen += events.size();
      if (a.states != traced.states) ++bad;
    }
    detail("exchangeability / occupation sums: %zu events, %d failures", events_seen, bad);
    ok = ok && bad == 0;
  }

  const auto law = std::make_shared<const MarkLaw>(two_state_example());

  // window reuse
  {
    int bad = 0;
    for (int s = 0; s < 1000; ++s) {
      PastWindow past(law, 5, derive_seed(11004, s));
      const auto big = past.window(6);
      for (std::uint32_t k = 0; k < 6; ++k) {
        PastWindow fresh(law, 5, derive_seed(11004, s));
        if (big.restricted(-std::ldexp(1.0, static_cast<int>(k)), 0.0).events != fresh.window(k).events) ++bad;
      }
    }
    detail("window reuse: %d mismatches over 6000 nested windows", bad);
    ok = ok && bad == 0;
  }

  // ancestry monotonicity
  {
    int bad = 0;
    for (int w = 0; w < 10000; ++w) {
      const std::size_t N = 2 + static_cast<std::size_t>(w % 7);
      PastWindow past(law, N, derive_seed(11005, w));
      const auto a = union_ancestry(past.window(1));
      if (!a.emptied_at()) continue;
      const double s = *a.emptied_at();
      const auto longer = union_ancestry(past.window(4));
      if (!longer.emptied_at() || *longer.emptied_at() != s || !longer.members_at(s).empty() ||
          !longer.members_at(-16.0).empty()) {
        ++bad;
      }
    }
    detail("ancestry monotonicity: %d failures over 1e4 windows", bad);
    ok = ok && bad == 0;
  }

  // coupled marginal
  for (auto rule : {CouplingRule::kFirstContact, CouplingRule::kLiteral}) {
    std::map<std::size_t, double> coupled;
    std::map<std::size_t, double> plain;
    for (int r = 0; r < 50000; ++r) {
      coupled[coupled_ancestry(law, 10, 0, 1, 0.0, 1.0, derive_seed(11006, r), rule).psi_j_hat.size()] += 1;
      plain[ancestry_backward(generate_window(law, 10, 0.0, 1.0, derive_seed(11007, r)), 1).size()] += 1;
    }
    const double p = stats::homogeneity_p_value(coupled, plain);
    detail("coupled marginal chi-squared (%s rule): p = %.4f", rule == CouplingRule::kLiteral ? "literal" : "first-contact",
           p);
    ok = ok && p > 0.001;
  }
  return ok;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "exact QSD of the two-state chain", 1.0, exact_qsd},
      {2, "exact N=2 stationary law", 60.0, exact_n2},
      {3, "nu differs from rho^2", 1.0, nu_differs},
      {4, "law of large numbers at desk scale", 600.0, law_of_large_numbers},
      {5, "transient covariance bound", 600.0, transient_covariance},
      {6, "stationary covariance bound", 600.0, stationary_covariance},
      {7, "coupling bound", 600.0, coupling_bound},
      {8, "perfect sampler exactness", 600.0, perfect_sampler},
      {9, "forward equation uniqueness", 60.0, ode_uniqueness},
      {10, "type tightness bounds", 600.0, tightness},
      {11, "property suites", 300.0, properties},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = false;
    try {
      pass = c.body();
    } catch (const std::exception& e) {
      detail("error: %s", e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.limit_seconds) {
      detail("runtime %.1f s exceeds %.0f s", secs, c.limit_seconds);
      pass = false;
    }
    failed += pass ? 0 : 1;
    std::printf("%s %2d  %s  (%.2f s)\n", pass ? "PASS" : "FAIL", c.number, c.title, secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
