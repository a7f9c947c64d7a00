#pragma once

#include "qsdfv/chain_model.hpp"

namespace qsdfv {

struct QsdResult {
  Distribution nu;
  double eigenvalue = 0.0;  // Perron eigenvalue of Q on the space, = -sum_y nu(y) q(y,0)
  double residual = 0.0;    // qsd_residual(rates, nu)
  std::size_t iterations = 0;
  bool converged = false;
  bool boundary = false;    // some nu(x) < kEigenFloor: likely a reducible chain
};

inline constexpr double kEigenFloor = 1e-13;

// sup_x | sum_y nu(y) [q(y,x) + q(y,0) nu(x)] |
double qsd_residual(const RateMatrix& rates, const Distribution& nu);

// Left power iteration on I + Q/q̄ restricted to the space, from the uniform law.
QsdResult qsd_power(const RateMatrix& rates, double tol, std::size_t max_iter = 10'000'000);

// Yaglom iteration with unit blocks, certified by the residual.
QsdResult qsd_via_yaglom(const RateMatrix& rates, double tol, std::size_t max_blocks = 1'000'000);
QsdResult qsd_via_yaglom(const RateMatrix& rates, const Distribution& start, double tol,
                         std::size_t max_blocks = 1'000'000);

}  // namespace qsdfv
