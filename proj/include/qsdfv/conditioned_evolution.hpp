#pragma once

#include <vector>

#include "qsdfv/chain_model.hpp"

namespace qsdfv {

struct ConditionedPath {
  std::vector<double> times;
  std::vector<Distribution> phis;
  // max over the grid of |sum_x phi(x) - 1| before renormalization
  double norm_drift = 0.0;
};

struct YaglomResult {
  Distribution limit;
  std::size_t iterations = 0;
  double final_delta = 0.0;
  double decay_rate = 0.0;  // sum_y limit(y) q(y,0)
  bool converged = false;
};

inline constexpr double kOdeNegativeTolerance = 1e-9;

// Right-hand side of the nonlinear forward equation:
//   sum_y phi(y) [q(y,x) + q(y,0) phi(x)]   for each x.
std::vector<double> conditioned_drift(const RateMatrix& rates, std::span<const double> phi);

// mu P / (mass of mu P on the space), for an already computed kernel.
Distribution condition_on_survival(const SubKernel& kernel, const Distribution& mu);

// Law at time t given survival, through the semigroup.
Distribution phi_semigroup(const RateMatrix& rates, const Distribution& mu, double t);

// Same law, by fixed-step RK4 on the forward equation.
ConditionedPath phi_ode(const RateMatrix& rates, const Distribution& mu, double t_end, double step);

// Iterates phi <- phi_block(phi) until the sup-norm change drops below tol.
YaglomResult yaglom_iterate(const RateMatrix& rates, const Distribution& mu, double block, double tol,
                            std::size_t max_blocks);

}  // namespace qsdfv
