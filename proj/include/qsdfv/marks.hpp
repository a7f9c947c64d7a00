#pragma once

#include <vector>

#include "qsdfv/chain_model.hpp"

namespace qsdfv {

// Per-particle Poisson rates and mark laws of the regeneration / internal /
// voter decomposition of the chain:
//   regeneration  rate alpha,       A  ~ alpha_z / alpha
//   internal      rate q̄ - alpha,   B(x) = y w.p. (q(x,y) - alpha_y)/(q̄ - alpha), else x
//   voter         rate C,           F(x) = 1 w.p. q(x,0)/C
// Each sampler takes a uniform already scaled to its channel's rate.
class MarkLaw {
 public:
  explicit MarkLaw(const RateMatrix& rates);

  const RateMatrix& rates() const noexcept { return rates_; }
  const ChainSummary& summary() const noexcept { return summary_; }
  double regeneration_rate() const noexcept { return summary_.alpha; }
  double internal_rate() const noexcept { return internal_rate_; }
  double voter_rate() const noexcept { return summary_.C; }
  double per_particle_rate() const noexcept { return summary_.alpha + internal_rate_ + summary_.C; }

  // u in [0, alpha)
  StateIndex regeneration_target(double u) const;
  // u in [0, q̄ - alpha); the self-loop complement returns x
  StateIndex internal_target(StateIndex x, double u) const;
  // u in [0, C)
  bool voter_fires(StateIndex x, double u) const { return u < rates_.absorption(x); }

 private:
  RateMatrix rates_;
  ChainSummary summary_;
  double internal_rate_;
  std::vector<double> regeneration_cumulative_;
  std::vector<std::size_t> internal_start_;
  std::vector<StateIndex> internal_to_;
  std::vector<double> internal_cumulative_;
};

}  // namespace qsdfv
