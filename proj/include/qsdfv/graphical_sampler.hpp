#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "qsdfv/chain_model.hpp"
#include "qsdfv/fv_simulator.hpp"
#include "qsdfv/marks.hpp"

namespace qsdfv {

enum class EventKind : std::uint8_t { kRegeneration = 0, kInternal = 1, kVoter = 2 };

// One marked Poisson event. The regeneration target and the voter partner
// are drawn eagerly; B(x) and F(x) are counter-based functions of (key, x)
// evaluated on demand through EventWindow.
struct MarkedEvent {
  double time;
  std::uint32_t particle;
  EventKind kind;
  StateIndex mark_a;      // regeneration target
  std::uint32_t mark_c;   // voter partner, != particle
  std::uint64_t key;

  bool operator==(const MarkedEvent&) const = default;
};

// (time, kind, particle, key)
bool event_before(const MarkedEvent& a, const MarkedEvent& b);

struct EventWindow {
  double start = 0.0;
  double end = 0.0;
  std::size_t particles = 0;
  std::shared_ptr<const MarkLaw> law;
  std::vector<MarkedEvent> events;  // sorted by event_before

  StateIndex internal_mark(const MarkedEvent& e, StateIndex x) const;
  bool voter_mark(const MarkedEvent& e, StateIndex x) const;
  // Events with time in [from, to), same marks.
  EventWindow restricted(double from, double to) const;
};

// Superposition of the 3N Poisson processes on [s, t). No alpha check.
EventWindow sample_window(std::shared_ptr<const MarkLaw> law, std::size_t particles, double s, double t,
                          Seed seed);
// As sample_window; refuses alpha = 0.
EventWindow generate_window(std::shared_ptr<const MarkLaw> law, std::size_t particles, double s, double t,
                            Seed seed);
EventWindow generate_window(const RateMatrix& rates, std::size_t particles, double s, double t, Seed seed);

ParticleConfiguration evolve_forward(const EventWindow& window, const ParticleConfiguration& initial);

struct AncestryChange {
  double time;
  std::uint32_t particle;
  bool added;

  bool operator==(const AncestryChange&) const = default;
};

// Psi[r, t] as r runs backward from t. Changes are recorded in processing
// (decreasing time) order.
class AncestrySet {
 public:
  AncestrySet(std::size_t particles, std::vector<std::uint32_t> roots, double end);

  bool contains(std::uint32_t p) const { return member_[p] != 0; }
  std::size_t size() const noexcept { return count_; }
  bool empty() const noexcept { return count_ == 0; }
  double end() const noexcept { return end_; }
  const std::vector<std::uint32_t>& roots() const noexcept { return roots_; }
  const std::vector<AncestryChange>& changes() const noexcept { return changes_; }
  std::optional<double> emptied_at() const noexcept { return emptied_at_; }

  // Current support (at the earliest time processed so far).
  std::vector<std::uint32_t> members() const;
  // Support of Psi[r, t]: every change at time >= r applied.
  std::vector<std::uint32_t> members_at(double r) const;

  // Backward update: regeneration of a member removes it; a voter event of a
  // member adds its partner; internal events are ignored.
  bool apply(const MarkedEvent& e);
  bool insert(std::uint32_t p, double time);
  bool erase(std::uint32_t p, double time);

  bool operator==(const AncestrySet& other) const {
    return member_ == other.member_ && changes_ == other.changes_ && roots_ == other.roots_;
  }

 private:
  std::vector<char> member_;
  std::size_t count_ = 0;
  std::vector<std::uint32_t> roots_;
  double end_;
  std::vector<AncestryChange> changes_;
  std::optional<double> emptied_at_;
};

AncestrySet ancestry_backward(const EventWindow& window, std::uint32_t particle);
// Union of Psi^i over all particles; empty iff every Psi^i is.
AncestrySet union_ancestry(const EventWindow& window);

// Event windows on (-infinity, 0]. Segment 0 covers [-1, 0), segment k >= 1
// covers [-2^k, -2^(k-1)), each from its own position-keyed substream, so
// extending the past never changes events already generated.
class PastWindow {
 public:
  PastWindow(std::shared_ptr<const MarkLaw> law, std::size_t particles, Seed seed);

  // Events of [-2^k, 0).
  EventWindow window(std::uint32_t k);
  std::size_t generated_segments() const noexcept { return segments_.size(); }

 private:
  void extend_to(std::uint32_t k);

  std::shared_ptr<const MarkLaw> law_;
  std::size_t particles_;
  Seed seed_;
  std::vector<std::vector<MarkedEvent>> segments_;
};

inline constexpr std::uint32_t kMaxDoublings = 30;

struct PerfectSample {
  ParticleConfiguration config;  // clock 0
  std::uint32_t doublings = 0;   // window [-2^doublings, 0] sufficed
  double coalescence_time = 0.0; // time at which the union ancestry emptied
};

// Coupling from the past. `initial` (all particles at the first state when
// omitted) seeds the forward pass from -2^k; the output does not depend on it.
PerfectSample perfect_sample(const RateMatrix& rates, std::size_t particles, Seed seed,
                             std::uint32_t max_doublings = kMaxDoublings,
                             const std::vector<StateIndex>* initial = nullptr);

std::vector<std::uint32_t> unlabeled(const ParticleConfiguration& config, std::size_t n_states);

enum class CouplingRule {
  // Green events drive Psi^i, Psi^j and both hatted sets while I = 0; I
  // becomes 1 at the first intersection of the hatted sets, after which red
  // events alone drive hat Psi^j.
  kFirstContact,
  // The two case-by-case rules read word for word, in which red events can
  // also set I while I = 0. Marginals agree; I flips at rate 3C|.||.|/(N-1).
  kLiteral,
};

struct CouplingState {
  EventWindow green;
  EventWindow red;
  AncestrySet psi_i;
  AncestrySet psi_j;
  AncestrySet psi_i_hat;
  AncestrySet psi_j_hat;
  bool indicator = false;
  std::optional<double> flip_time;
};

CouplingState coupled_ancestry(const RateMatrix& rates, std::size_t particles, std::uint32_t i, std::uint32_t j,
                               double s, double t, Seed seed, CouplingRule rule = CouplingRule::kFirstContact);
CouplingState coupled_ancestry(std::shared_ptr<const MarkLaw> law, std::size_t particles, std::uint32_t i,
                               std::uint32_t j, double s, double t, Seed seed,
                               CouplingRule rule = CouplingRule::kFirstContact);

// (1/(N-1)) C/(alpha-C) (1 - e^{2(C-alpha) dt}), continuous at alpha = C.
double intersection_bound(double alpha, double C, std::size_t particles, double dt);

struct IntersectionReport {
  std::size_t particles = 0;
  double dt = 0.0;
  std::size_t replicas = 0;
  double probability = 0.0;
  double stderr = 0.0;
  double bound = 0.0;
  bool violated = false;  // probability > bound + 3 stderr
};

IntersectionReport estimate_I_probability(const RateMatrix& rates, std::size_t particles, double dt,
                                          std::size_t replicas, Seed seed,
                                          CouplingRule rule = CouplingRule::kFirstContact);

}  // namespace qsdfv
