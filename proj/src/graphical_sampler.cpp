#include "qsdfv/graphical_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <tuple>

#include "qsdfv/parallel.hpp"

namespace qsdfv {

bool event_before(const MarkedEvent& a, const MarkedEvent& b) {
  return std::tie(a.time, a.kind, a.particle, a.key) < std::tie(b.time, b.kind, b.particle, b.key);
}

StateIndex EventWindow::internal_mark(const MarkedEvent& e, StateIndex x) const {
  return law->internal_target(x, counter_uniform(e.key, 2 * std::uint64_t{x}) * law->internal_rate());
}

bool EventWindow::voter_mark(const MarkedEvent& e, StateIndex x) const {
  return law->voter_fires(x, counter_uniform(e.key, 2 * std::uint64_t{x} + 1) * law->voter_rate());
}

EventWindow EventWindow::restricted(double from, double to) const {
  EventWindow out{from, to, particles, law, {}};
  for (const auto& e : events) {
    if (e.time >= from && e.time < to) out.events.push_back(e);
  }
  return out;
}

namespace {

constexpr std::size_t kMaxWindowEvents = 50'000'000;

void append_events(const MarkLaw& law, std::size_t particles, double a, double b, Seed seed,
                   std::vector<MarkedEvent>& out) {
  const double per_particle = law.per_particle_rate();
  if (!(per_particle > 0.0)) return;
  const double alpha = law.regeneration_rate();
  const double internal = law.internal_rate();
  const double total = static_cast<double>(particles) * per_particle;
  Rng rng(seed);
  const std::size_t first = out.size();
  double time = a;
  for (;;) {
    time += rng.exponential(total);
    if (!(time < b)) break;
    const auto i = static_cast<std::uint32_t>(rng.below(particles));
    const double u = rng.uniform() * per_particle;
    MarkedEvent e{time, i, EventKind::kInternal, 0, i, 0};
    if (u < alpha) {
      e.kind = EventKind::kRegeneration;
      e.mark_a = law.regeneration_target(u);
    } else if (u - alpha >= internal) {
      e.kind = EventKind::kVoter;
      e.mark_c = static_cast<std::uint32_t>(rng.other_than(i, particles));
    }
    e.key = rng.next();
    out.push_back(e);
    if (out.size() > kMaxWindowEvents) throw Error("event window too large (more than 5e7 events)");
  }
  std::stable_sort(out.begin() + static_cast<std::ptrdiff_t>(first), out.end(), event_before);
}

void check_window_args(std::size_t particles, double s, double t) {
  if (particles < 2) throw Error("event windows need at least 2 particles");
  if (!(s < t)) throw Error("event window needs s < t");
}

}  // namespace

EventWindow sample_window(std::shared_ptr<const MarkLaw> law, std::size_t particles, double s, double t,
                          Seed seed) {
  check_window_args(particles, s, t);
  EventWindow w{s, t, particles, std::move(law), {}};
  append_events(*w.law, particles, s, t, seed, w.events);
  return w;
}

EventWindow generate_window(std::shared_ptr<const MarkLaw> law, std::size_t particles, double s, double t,
                            Seed seed) {
  if (!(law->regeneration_rate() > 0.0)) {
    throw Error("generate_window: alpha = 0, regeneration-free windows never empty the ancestry");
  }
  return sample_window(std::move(law), particles, s, t, seed);
}

EventWindow generate_window(const RateMatrix& rates, std::size_t particles, double s, double t, Seed seed) {
  return generate_window(std::make_shared<const MarkLaw>(rates), particles, s, t, seed);
}

ParticleConfiguration evolve_forward(const EventWindow& window, const ParticleConfiguration& initial) {
  if (initial.size() != window.particles) throw Error("evolve_forward: particle count mismatch");
  if (std::abs(initial.clock - window.start) > 1e-12 * std::max(1.0, std::abs(window.start))) {
    throw Error("evolve_forward: initial clock must equal the window start");
  }
  ParticleConfiguration config = initial;
  auto& states = config.states;
  for (const auto& e : window.events) {
    StateIndex& x = states[e.particle];
    switch (e.kind) {
      case EventKind::kRegeneration:
        x = e.mark_a;
        break;
      case EventKind::kInternal:
        x = window.internal_mark(e, x);
        break;
      case EventKind::kVoter:
        if (window.voter_mark(e, x)) x = states[e.mark_c];
        break;
    }
  }
  config.clock = window.end;
  return config;
}

AncestrySet::AncestrySet(std::size_t particles, std::vector<std::uint32_t> roots, double end)
    : member_(particles, 0), roots_(std::move(roots)), end_(end) {
  for (auto p : roots_) {
    if (p >= particles) throw Error("ancestry root out of range");
    if (!member_[p]) {
      member_[p] = 1;
      ++count_;
    }
  }
  if (count_ == 0) emptied_at_ = end;
}

std::vector<std::uint32_t> AncestrySet::members() const {
  std::vector<std::uint32_t> out;
  for (std::uint32_t p = 0; p < member_.size(); ++p) {
    if (member_[p]) out.push_back(p);
  }
  return out;
}

std::vector<std::uint32_t> AncestrySet::members_at(double r) const {
  std::vector<char> m(member_.size(), 0);
  for (auto p : roots_) m[p] = 1;
  for (const auto& c : changes_) {
    if (c.time < r) break;
    m[c.particle] = c.added ? 1 : 0;
  }
  std::vector<std::uint32_t> out;
  for (std::uint32_t p = 0; p < m.size(); ++p) {
    if (m[p]) out.push_back(p);
  }
  return out;
}

bool AncestrySet::insert(std::uint32_t p, double time) {
  if (member_[p]) return false;
  member_[p] = 1;
  ++count_;
  changes_.push_back({time, p, true});
  return true;
}

bool AncestrySet::erase(std::uint32_t p, double time) {
  if (!member_[p]) return false;
  member_[p] = 0;
  --count_;
  changes_.push_back({time, p, false});
  if (count_ == 0) emptied_at_ = time;
  return true;
}

bool AncestrySet::apply(const MarkedEvent& e) {
  if (count_ == 0) return false;
  switch (e.kind) {
    case EventKind::kRegeneration:
      return erase(e.particle, e.time);
    case EventKind::kVoter:
      return contains(e.particle) && insert(e.mark_c, e.time);
    case EventKind::kInternal:
      break;
  }
  return false;
}

namespace {

AncestrySet run_backward(const EventWindow& window, std::vector<std::uint32_t> roots) {
  AncestrySet set(window.particles, std::move(roots), window.end);
  for (auto it = window.events.rbegin(); it != window.events.rend() && !set.empty(); ++it) set.apply(*it);
  return set;
}

}  // namespace

AncestrySet ancestry_backward(const EventWindow& window, std::uint32_t particle) {
  return run_backward(window, {particle});
}

AncestrySet union_ancestry(const EventWindow& window) {
  std::vector<std::uint32_t> all(window.particles);
  for (std::uint32_t p = 0; p < all.size(); ++p) all[p] = p;
  return run_backward(window, std::move(all));
}

PastWindow::PastWindow(std::shared_ptr<const MarkLaw> law, std::size_t particles, Seed seed)
    : law_(std::move(law)), particles_(particles), seed_(seed) {
  if (particles < 2) throw Error("event windows need at least 2 particles");
}

void PastWindow::extend_to(std::uint32_t k) {
  while (segments_.size() <= k) {
    const auto level = static_cast<int>(segments_.size());
    const double lo = -std::ldexp(1.0, level);
    const double hi = level == 0 ? 0.0 : -std::ldexp(1.0, level - 1);
    std::vector<MarkedEvent> events;
    append_events(*law_, particles_, lo, hi, derive_seed(seed_, static_cast<std::uint64_t>(level)), events);
    segments_.push_back(std::move(events));
  }
}

EventWindow PastWindow::window(std::uint32_t k) {
  extend_to(k);
  EventWindow w{-std::ldexp(1.0, static_cast<int>(k)), 0.0, particles_, law_, {}};
  std::size_t total = 0;
  for (std::uint32_t level = 0; level <= k; ++level) total += segments_[level].size();
  if (total > kMaxWindowEvents) throw Error("event window too large (more than 5e7 events)");
  w.events.reserve(total);
  for (std::uint32_t level = k + 1; level-- > 0;) {
    w.events.insert(w.events.end(), segments_[level].begin(), segments_[level].end());
  }
  return w;
}

PerfectSample perfect_sample(const RateMatrix& rates, std::size_t particles, Seed seed,
                             std::uint32_t max_doublings, const std::vector<StateIndex>* initial) {
  auto law = std::make_shared<const MarkLaw>(rates);
  if (!(law->regeneration_rate() > 0.0)) throw Error("perfect_sample: needs alpha > 0");
  if (initial && initial->size() != particles) throw Error("perfect_sample: initial configuration size mismatch");
  PastWindow past(law, particles, seed);
  std::size_t remaining = particles;
  std::uint32_t k = 0;
  try {
    for (; k <= max_doublings; ++k) {
      const EventWindow w = past.window(k);
      const AncestrySet ancestry = union_ancestry(w);
      if (ancestry.empty()) {
        ParticleConfiguration start;
        start.states = initial ? *initial : std::vector<StateIndex>(particles, 0);
        start.clock = w.start;
        return {evolve_forward(w, start), k, *ancestry.emptied_at()};
      }
      remaining = ancestry.size();
    }
  } catch (const Error& e) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "perfect_sample: gave up at doubling %u (%s); ancestry size %zu of %zu", k,
                  e.what(), remaining, particles);
    throw Error(buf);
  }
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "perfect_sample: no coalescence within %u doublings; ancestry size %zu of %zu at -2^%u",
                max_doublings, remaining, particles, max_doublings);
  throw Error(buf);
}

std::vector<std::uint32_t> unlabeled(const ParticleConfiguration& config, std::size_t n_states) {
  std::vector<std::uint32_t> counts(n_states, 0);
  for (StateIndex x : config.states) ++counts.at(x);
  return counts;
}

CouplingState coupled_ancestry(std::shared_ptr<const MarkLaw> law, std::size_t particles, std::uint32_t i,
                               std::uint32_t j, double s, double t, Seed seed, CouplingRule rule) {
  if (i == j) throw Error("coupled_ancestry: i and j must differ");
  if (i >= particles || j >= particles) throw Error("coupled_ancestry: particle out of range");
  CouplingState st{sample_window(law, particles, s, t, derive_seed(seed, 0)),
                   sample_window(law, particles, s, t, derive_seed(seed, 1)),
                   AncestrySet(particles, {i}, t),
                   AncestrySet(particles, {j}, t),
                   AncestrySet(particles, {i}, t),
                   AncestrySet(particles, {j}, t),
                   false,
                   std::nullopt};

  const auto& green = st.green.events;
  const auto& red = st.red.events;
  auto g = green.rbegin();
  auto r = red.rbegin();
  while (g != green.rend() || r != red.rend()) {
    if (st.psi_i.empty() && st.psi_j.empty() && st.psi_j_hat.empty()) break;
    const bool take_green = r == red.rend() || (g != green.rend() && !event_before(*g, *r));
    const MarkedEvent& e = take_green ? *g++ : *r++;
    if (take_green) {
      st.psi_i.apply(e);
      st.psi_j.apply(e);
      st.psi_i_hat.apply(e);
      if (st.indicator) continue;
      // Sets are disjoint while I = 0, so only a voter event whose partner
      // lies in the other hatted set can make them meet.
      const bool meets =
          e.kind == EventKind::kVoter &&
          ((st.psi_i_hat.contains(e.particle) && st.psi_j_hat.contains(e.mark_c)) ||
           (st.psi_j_hat.contains(e.particle) && st.psi_i_hat.contains(e.mark_c)));
      if (rule == CouplingRule::kFirstContact || !meets) st.psi_j_hat.apply(e);
      if (meets) {
        st.indicator = true;
        st.flip_time = e.time;
      }
    } else if (st.indicator) {
      st.psi_j_hat.apply(e);
    } else if (rule == CouplingRule::kLiteral && e.kind == EventKind::kVoter &&
               st.psi_j_hat.contains(e.particle) && st.psi_i_hat.contains(e.mark_c)) {
      st.psi_j_hat.apply(e);
      st.indicator = true;
      st.flip_time = e.time;
    }
  }
  return st;
}

CouplingState coupled_ancestry(const RateMatrix& rates, std::size_t particles, std::uint32_t i, std::uint32_t j,
                               double s, double t, Seed seed, CouplingRule rule) {
  return coupled_ancestry(std::make_shared<const MarkLaw>(rates), particles, i, j, s, t, seed, rule);
}

double intersection_bound(double alpha, double C, std::size_t particles, double dt) {
  const double scale = 1.0 / static_cast<double>(particles - 1);
  const double gap = alpha - C;
  if (std::abs(gap) * dt < 1e-9) return scale * 2.0 * C * dt;
  return scale * C / gap * -std::expm1(-2.0 * gap * dt);
}

IntersectionReport estimate_I_probability(const RateMatrix& rates, std::size_t particles, double dt,
                                          std::size_t replicas, Seed seed, CouplingRule rule) {
  if (replicas < 2) throw Error("estimate_I_probability needs at least 2 replicas");
  if (!(dt > 0.0)) throw Error("estimate_I_probability needs t - s > 0");
  auto law = std::make_shared<const MarkLaw>(rates);
  std::vector<char> hits(replicas, 0);
  parallel_for(replicas, [&](std::size_t k) {
    hits[k] = coupled_ancestry(law, particles, 0, 1, 0.0, dt, derive_seed(seed, k), rule).indicator ? 1 : 0;
  });
  IntersectionReport report;
  report.particles = particles;
  report.dt = dt;
  report.replicas = replicas;
  const auto count = static_cast<double>(replicas);
  const double p = static_cast<double>(std::count(hits.begin(), hits.end(), 1)) / count;
  report.probability = p;
  report.stderr = std::sqrt(p * (1.0 - p) / (count - 1.0));
  report.bound = intersection_bound(law->regeneration_rate(), law->voter_rate(), particles, dt);
  report.violated = p > report.bound + kSigmaSlack * report.stderr;
  return report;
}

}  // namespace qsdfv
