#include "qsdfv/qsd_solver.hpp"

#include <algorithm>
#include <cmath>

#include "qsdfv/conditioned_evolution.hpp"

namespace qsdfv {

double qsd_residual(const RateMatrix& rates, const Distribution& nu) {
  if (!(nu.space() == rates.space())) throw Error("qsd_residual: distribution lives on another space");
  const auto drift = conditioned_drift(rates, nu.weights());
  double r = 0.0;
  for (double v : drift) r = std::max(r, std::abs(v));
  return r;
}

namespace {

bool on_boundary(const Distribution& nu) {
  return std::ranges::any_of(nu.weights(), [](double w) { return w < kEigenFloor; });
}

}  // namespace

QsdResult qsd_power(const RateMatrix& rates, double tol, std::size_t max_iter) {
  if (!(tol > 0.0)) throw Error("qsd_power: tol must be > 0");
  const std::size_t n = rates.size();
  double qbar = rates.qbar();
  if (!(qbar > 0.0)) throw Error("qsd_power: chain has no transitions");

  std::vector<double> v(n, 1.0 / static_cast<double>(n));
  std::vector<double> next(n);
  QsdResult result{Distribution::uniform(rates.space_ptr())};
  double perron = 1.0;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    // next = v (I + Q/q̄)
    std::fill(next.begin(), next.end(), 0.0);
    for (StateIndex y = 0; y < n; ++y) {
      const double w = v[y];
      if (w == 0.0) continue;
      next[y] += w * (1.0 + rates.diagonal(y) / qbar);
      for (const auto& tr : rates.row(y)) next[tr.to] += w * tr.rate / qbar;
    }
    double mass = 0.0;
    for (double w : next) mass += w;
    if (!(mass > 0.0)) {
      // I + Q/q̄ is nilpotent on some reducible chains; a lazier kernel has
      // the same eigenvectors
      if (qbar > 2.0 * rates.qbar()) throw Error("qsd_power: iterate lost all mass");
      qbar *= 4.0;
      std::fill(v.begin(), v.end(), 1.0 / static_cast<double>(n));
      continue;
    }
    double delta = 0.0;
    for (std::size_t x = 0; x < n; ++x) {
      next[x] /= mass;
      delta = std::max(delta, std::abs(next[x] - v[x]));
    }
    perron = mass;
    v.swap(next);
    result.iterations = it;
    if (delta < tol) {
      auto candidate = Distribution::normalized(rates.space_ptr(), v);
      const double residual = qsd_residual(rates, candidate);
      if (residual <= tol) {
        result.nu = std::move(candidate);
        result.residual = residual;
        result.converged = true;
        break;
      }
    }
  }
  if (!result.converged) {
    result.nu = Distribution::normalized(rates.space_ptr(), v);
    result.residual = qsd_residual(rates, result.nu);
  }
  result.eigenvalue = qbar * (perron - 1.0);
  result.boundary = on_boundary(result.nu);
  return result;
}

QsdResult qsd_via_yaglom(const RateMatrix& rates, const Distribution& start, double tol,
                         std::size_t max_blocks) {
  // A small block-to-block change does not bound the residual by itself, so
  // tighten the stopping rule until the residual certifies the limit.
  auto y = yaglom_iterate(rates, start, 1.0, tol, max_blocks);
  std::size_t used = y.iterations;
  double residual = qsd_residual(rates, y.limit);
  for (double inner = tol / 10; y.converged && residual > tol && inner > 1e-300 && used < max_blocks;
       inner /= 10) {
    y = yaglom_iterate(rates, y.limit, 1.0, inner, max_blocks - used);
    used += y.iterations;
    residual = qsd_residual(rates, y.limit);
  }
  QsdResult result{y.limit};
  result.eigenvalue = -y.decay_rate;
  result.residual = residual;
  result.iterations = used;
  result.converged = y.converged && residual <= tol;
  result.boundary = on_boundary(y.limit);
  return result;
}

QsdResult qsd_via_yaglom(const RateMatrix& rates, double tol, std::size_t max_blocks) {
  return qsd_via_yaglom(rates, Distribution::uniform(rates.space_ptr()), tol, max_blocks);
}

}  // namespace qsdfv
