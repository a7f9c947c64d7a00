#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qsdfv/rng.hpp"

namespace qsdfv {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using StateIndex = std::uint32_t;

// Marker for the absorbing state 0 in paths; never a member of the space.
inline constexpr StateIndex kAbsorbed = std::numeric_limits<StateIndex>::max();

// Finite working set of non-absorbed states. The absorbing state is implicit.
class StateSpace {
 public:
  explicit StateSpace(std::vector<std::string> labels);

  std::size_t size() const noexcept { return labels_.size(); }
  const std::string& label(StateIndex x) const { return labels_.at(x); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::optional<StateIndex> find(std::string_view label) const;
  StateIndex index_of(std::string_view label) const;

  bool operator==(const StateSpace& other) const { return labels_ == other.labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, StateIndex> index_;
};

using SpacePtr = std::shared_ptr<const StateSpace>;

struct Transition {
  StateIndex to;
  double rate;
};

// Sparse off-diagonal rates q(x,y) on the space plus absorption rates q(x,0).
// The diagonal is never stored; it is always -(out_rate + absorption).
class RateMatrix {
 public:
  struct Entry {
    StateIndex from;
    StateIndex to;
    double rate;
  };

  RateMatrix(SpacePtr space, std::vector<Entry> offdiag, std::vector<double> absorb);

  const StateSpace& space() const noexcept { return *space_; }
  const SpacePtr& space_ptr() const noexcept { return space_; }
  std::size_t size() const noexcept { return absorb_.size(); }

  std::span<const Transition> row(StateIndex x) const {
    return {transitions_.data() + row_start_[x], row_start_[x + 1] - row_start_[x]};
  }
  double rate(StateIndex x, StateIndex y) const;
  double absorption(StateIndex x) const { return absorb_[x]; }
  std::span<const double> absorption() const noexcept { return absorb_; }
  double out_rate(StateIndex x) const { return out_[x]; }
  double exit_rate(StateIndex x) const { return out_[x] + absorb_[x]; }
  double diagonal(StateIndex x) const { return -exit_rate(x); }
  // sup_x exit_rate(x)
  double qbar() const noexcept { return qbar_; }

  // Target of an internal jump from x, given u uniform on [0, out_rate(x)).
  StateIndex pick_transition(StateIndex x, double u) const;

  // Dense generator restricted to the space (diagonal included).
  Eigen::MatrixXd generator() const;
  std::vector<Entry> entries() const;
  RateMatrix scaled(double kappa) const;

  bool operator==(const RateMatrix& other) const;

 private:
  SpacePtr space_;
  std::vector<std::size_t> row_start_;
  std::vector<Transition> transitions_;
  std::vector<double> cumulative_;
  std::vector<double> absorb_;
  std::vector<double> out_;
  double qbar_ = 0.0;
};

// Probability vector on the space.
class Distribution {
 public:
  static constexpr double kSumTolerance = 1e-12;

  Distribution(SpacePtr space, std::vector<double> weights);

  static Distribution normalized(SpacePtr space, std::vector<double> weights);
  static Distribution delta(SpacePtr space, StateIndex x);
  static Distribution uniform(SpacePtr space);

  const StateSpace& space() const noexcept { return *space_; }
  const SpacePtr& space_ptr() const noexcept { return space_; }
  std::size_t size() const noexcept { return weights_.size(); }
  std::span<const double> weights() const noexcept { return weights_; }
  double operator[](StateIndex x) const { return weights_[x]; }

 private:
  SpacePtr space_;
  std::vector<double> weights_;
};

double sup_distance(std::span<const double> a, std::span<const double> b);
double sup_distance(const Distribution& a, const Distribution& b);

struct ChainSummary {
  double alpha = 0.0;            // sum_z alpha_z
  std::vector<double> alpha_z;   // inf_{x != z} q(x,z)
  double C = 0.0;                // sup_x q(x,0)
  double qbar = 0.0;
  std::optional<Distribution> mu_alpha;  // alpha_z / alpha, only when alpha > 0
  bool irreducible = true;       // off-diagonal graph strongly connected

  bool perfect_sampling_available() const { return alpha > 0.0; }
  bool unique_qsd_regime() const { return alpha > C; }
};

// Sub-Markov kernel on the space together with the mass sent to 0.
// Houses both P_t and R_lambda.
struct SubKernel {
  SpacePtr space;
  Eigen::MatrixXd entries;
  Eigen::VectorXd absorb_col;

  // max_z |sum_x entries(z,x) + absorb_col(z) - 1|
  double honesty_defect() const;
};

struct PathPoint {
  double time;
  StateIndex state;  // kAbsorbed once absorbed
};

struct AbsorptionSample {
  std::vector<PathPoint> path;  // starts with (0, start)
  std::optional<double> absorption_time;
};

// alpha, C, qbar and friends, without insisting on C > 0.
ChainSummary summarize_chain(const RateMatrix& rates);
// As summarize_chain, but rejects chains that never absorb.
ChainSummary validate_chain(const RateMatrix& rates);

inline constexpr double kSeriesTolerance = 1e-14;

// P_t by uniformization on the space plus the absorbing state.
SubKernel semigroup(const RateMatrix& rates, double t, double series_tol = kSeriesTolerance);
// R_lambda = lambda (lambda I - Q)^{-1} on the space.
SubKernel resolvent(const RateMatrix& rates, double lambda);

AbsorptionSample simulate_absorbing_chain(const RateMatrix& rates, StateIndex start,
                                          double horizon, Seed seed);

// Builders.
RateMatrix two_state_example();
RateMatrix symmetric_two_state(double absorption);
RateMatrix asymmetric_walk(double p, std::size_t length);

// Chain spec JSON documents.
RateMatrix load_spec(std::string_view document);
RateMatrix load_spec_file(const std::filesystem::path& path);
std::string to_spec_json(const RateMatrix& rates);

}  // namespace qsdfv
