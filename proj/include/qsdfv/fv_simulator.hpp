#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qsdfv/chain_model.hpp"

namespace qsdfv {

struct ParticleConfiguration {
  std::vector<StateIndex> states;
  double clock = 0.0;

  std::size_t size() const noexcept { return states.size(); }
};

// eta(x): number of particles at x. Always sums to N.
std::vector<std::uint64_t> occupation(const ParticleConfiguration& config, std::size_t n_states);

inline constexpr std::uint32_t kDefaultTypeCap = 16;

// tip(i,t): 0 until the particle's first absorption; an absorbed particle
// landing on a type-k particle becomes type k+1. In regenerative runs a
// regeneration mark resets it to 0.
struct TypeLedger {
  std::vector<std::uint32_t> types;
  std::uint32_t cap = kDefaultTypeCap;

  static TypeLedger fresh(std::size_t particles, std::uint32_t cap = kDefaultTypeCap) {
    return {std::vector<std::uint32_t>(particles, 0), cap};
  }
  // Particles whose type exceeds the tracked cap.
  std::size_t overflow() const;
};

enum class EventScheme {
  // Dominating rate N q̄: internal jump, FV absorption-and-jump or no-op.
  kThinning,
  // Dominating rate N (alpha + internal + C): regeneration, internal and
  // voter channels of the marked construction. Needs alpha > 0; the only
  // scheme in which types reset.
  kRegenerative,
};

// One accepted thinning event. `donor` is the particle copied on an
// absorption, or kNoDonor.
struct FvEvent {
  static constexpr std::uint32_t kNoDonor = 0xffffffffu;
  double time;
  std::uint32_t particle;
  double u;  // uniform on [0, q̄): picks the channel and the internal target
  std::uint32_t donor;
};

ParticleConfiguration fv_init(const Distribution& mu, std::size_t particles, Seed seed);

// Advances config to t_end. The ledger, when given, must have config.size() entries.
void fv_run(const RateMatrix& rates, ParticleConfiguration& config, double t_end, TypeLedger* ledger,
            Seed seed, EventScheme scheme = EventScheme::kThinning);

// Thinning run that also returns its event stream.
std::vector<FvEvent> fv_trace(const RateMatrix& rates, ParticleConfiguration& config, double t_end,
                              Seed seed);
// Applies one recorded thinning event.
void apply_fv_event(const RateMatrix& rates, ParticleConfiguration& config, const FvEvent& event,
                    TypeLedger* ledger = nullptr);

struct MomentEstimate {
  std::vector<double> mean_profile;  // E eta(x)/N
  std::vector<double> mean_stderr;
  Eigen::MatrixXd cov;               // E[eta(x)eta(y)]/N^2 - product of means
  Eigen::MatrixXd cov_stderr;
  std::size_t replicas = 0;          // independent replicas, or batches for time averages
  std::vector<double> samples;       // replicas x states, row-major; replica runs only
};

struct ErrorEstimate {
  std::vector<double> mse;
  std::vector<double> stderr;
};

// E(eta(x)/N - reference(x))^2 per state, from replica moments.
std::vector<double> mean_squared_error(const MomentEstimate& estimate, std::span<const double> reference);

// Same quantity with a standard error, from the per-replica samples.
ErrorEstimate squared_error(const MomentEstimate& estimate, std::span<const double> reference);

MomentEstimate estimate_profile(const RateMatrix& rates, const Distribution& mu, std::size_t particles,
                                double t, std::size_t replicas, Seed seed);

struct StationaryOptions {
  double burn_in = 100.0;
  double horizon = 1e4;
  std::size_t batches = 50;
  std::uint32_t type_cap = kDefaultTypeCap;
  bool track_configurations = false;
};

// Time-averaged fraction of particles at (state, type); the last row
// aggregates types above the cap.
struct TypeOccupancy {
  std::vector<std::vector<double>> mean;    // [k][x]
  std::vector<std::vector<double>> stderr;  // [k][x]
};

struct ConfigurationWeight {
  std::vector<std::uint32_t> counts;  // unlabeled configuration eta
  double weight;
  double stderr;
};

struct StationaryEstimate {
  MomentEstimate moments;  // mean_profile is rho^N
  TypeOccupancy types;
  std::vector<ConfigurationWeight> configurations;  // filled when tracked
  bool proven_regime = false;                       // alpha > C
};

StationaryEstimate estimate_stationary(const RateMatrix& rates, std::size_t particles,
                                       const StationaryOptions& options, Seed seed);

struct BoundCheck {
  std::string name;  // "type0", "typek", "growth"
  std::uint32_t k = 0;
  StateIndex state = 0;
  double estimate = 0.0;
  double stderr = 0.0;
  double bound = 0.0;
  bool equality = false;
  bool violated = false;
};

struct TypeBoundReport {
  std::vector<BoundCheck> checks;
  std::size_t violations = 0;
  double overflow_fraction = 0.0;  // mass above k_max
};

inline constexpr double kSigmaSlack = 3.0;

// Transient type frequencies against mu P_t (k = 0, equality) and
// (Ct)^k/k! mu P_t (k >= 1), and the profile against e^{Ct} mu P_t.
TypeBoundReport check_type_bound(const RateMatrix& rates, const Distribution& mu, std::size_t particles,
                                 double t, std::size_t replicas, std::uint32_t k_max, Seed seed);

// Exact stationary law of the unlabeled N-particle system (occupation
// vectors), by a dense linear solve. Refuses more than max_configurations.
std::vector<ConfigurationWeight> exact_stationary_configurations(const RateMatrix& rates, std::size_t particles,
                                                                 std::size_t max_configurations = 4000);

// Stationary fraction of type-0 particles per state in the regenerative
// construction: alpha mu_alpha (alpha I - Q_int)^{-1}, where Q_int moves at
// q(x,y) - alpha_y and kills at q(x,0).
std::vector<double> stationary_type0_profile(const RateMatrix& rates);

// mu_alpha R_alpha, for comparison with the above.
std::vector<double> regeneration_resolvent_profile(const RateMatrix& rates);

}  // namespace qsdfv
