#include "qsdfv/marks.hpp"

#include <algorithm>

namespace qsdfv {

MarkLaw::MarkLaw(const RateMatrix& rates) : rates_(rates), summary_(summarize_chain(rates)) {
  const std::size_t n = rates_.size();
  const auto& alpha_z = summary_.alpha_z;

  // Internal events must cover every move q(x,y) - alpha_y out of every x.
  // That total is out(x) + alpha_x - alpha, which q̄ - alpha bounds on most
  // chains but not all (e.g. two states with q(1,2) = q(2,1) = 1 and small
  // absorption), so take the larger of the two.
  double dominating = rates_.qbar();
  for (StateIndex x = 0; x < n; ++x) dominating = std::max(dominating, rates_.out_rate(x) + alpha_z[x]);
  internal_rate_ = std::max(0.0, dominating - summary_.alpha);

  double running = 0.0;
  for (double a : alpha_z) regeneration_cumulative_.push_back(running += a);

  internal_start_.assign(n + 1, 0);
  for (StateIndex x = 0; x < n; ++x) {
    internal_start_[x] = internal_to_.size();
    running = 0.0;
    for (const auto& tr : rates_.row(x)) {
      const double w = tr.rate - alpha_z[tr.to];
      if (w <= 0.0) continue;
      internal_to_.push_back(tr.to);
      internal_cumulative_.push_back(running += w);
    }
  }
  internal_start_[n] = internal_to_.size();
}

StateIndex MarkLaw::regeneration_target(double u) const {
  auto it = std::upper_bound(regeneration_cumulative_.begin(), regeneration_cumulative_.end(), u);
  if (it == regeneration_cumulative_.end()) {
    // Rounding pushed u onto the total; take the last state with positive weight.
    it = std::lower_bound(regeneration_cumulative_.begin(), regeneration_cumulative_.end(),
                          regeneration_cumulative_.back());
  }
  return static_cast<StateIndex>(it - regeneration_cumulative_.begin());
}

StateIndex MarkLaw::internal_target(StateIndex x, double u) const {
  const auto begin = internal_cumulative_.begin() + static_cast<std::ptrdiff_t>(internal_start_[x]);
  const auto end = internal_cumulative_.begin() + static_cast<std::ptrdiff_t>(internal_start_[x + 1]);
  auto it = std::upper_bound(begin, end, u);
  if (it == end) return x;
  return internal_to_[static_cast<std::size_t>(it - internal_cumulative_.begin())];
}

}  // namespace qsdfv
