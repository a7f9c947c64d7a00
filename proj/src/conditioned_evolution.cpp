#include "qsdfv/conditioned_evolution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace qsdfv {

std::vector<double> conditioned_drift(const RateMatrix& rates, std::span<const double> phi) {
  const std::size_t n = rates.size();
  std::vector<double> out(n, 0.0);
  double killing = 0.0;
  for (StateIndex y = 0; y < n; ++y) {
    const double w = phi[y];
    if (w == 0.0) continue;
    killing += w * rates.absorption(y);
    out[y] += w * rates.diagonal(y);
    for (const auto& tr : rates.row(y)) out[tr.to] += w * tr.rate;
  }
  for (std::size_t x = 0; x < n; ++x) out[x] += killing * phi[x];
  return out;
}

Distribution condition_on_survival(const SubKernel& kernel, const Distribution& mu) {
  const Eigen::Map<const Eigen::RowVectorXd> row(mu.weights().data(),
                                                 static_cast<Eigen::Index>(mu.size()));
  const Eigen::RowVectorXd evolved = row * kernel.entries;
  std::vector<double> w(evolved.data(), evolved.data() + evolved.size());
  double survival = 0.0;
  for (auto& v : w) {
    v = std::max(v, 0.0);
    survival += v;
  }
  if (!(survival > std::numeric_limits<double>::epsilon())) {
    throw Error("conditioning event has vanishing probability");
  }
  return Distribution::normalized(mu.space_ptr(), std::move(w));
}

Distribution phi_semigroup(const RateMatrix& rates, const Distribution& mu, double t) {
  if (t == 0.0) return mu;
  return condition_on_survival(semigroup(rates, t), mu);
}

ConditionedPath phi_ode(const RateMatrix& rates, const Distribution& mu, double t_end, double step) {
  if (!(step > 0.0)) throw Error("phi_ode: step must be > 0");
  if (!(t_end >= 0.0)) throw Error("phi_ode: t_end must be >= 0");
  ConditionedPath path;
  path.times.push_back(0.0);
  path.phis.push_back(mu);
  if (t_end == 0.0) return path;

  const std::size_t n = rates.size();
  const auto steps = static_cast<std::size_t>(std::ceil(t_end / step - 1e-9));
  std::vector<double> phi(mu.weights().begin(), mu.weights().end());
  std::vector<double> stage(n);
  auto axpy = [&](const std::vector<double>& base, const std::vector<double>& dir, double h) {
    for (std::size_t x = 0; x < n; ++x) stage[x] = base[x] + h * dir[x];
    return std::span<const double>(stage);
  };

  for (std::size_t k = 1; k <= steps; ++k) {
    const double t_prev = path.times.back();
    const double t_next = k == steps ? t_end : static_cast<double>(k) * step;
    const double h = t_next - t_prev;
    const auto k1 = conditioned_drift(rates, phi);
    const auto k2 = conditioned_drift(rates, axpy(phi, k1, h / 2));
    const auto k3 = conditioned_drift(rates, axpy(phi, k2, h / 2));
    const auto k4 = conditioned_drift(rates, axpy(phi, k3, h));
    double total = 0.0;
    for (std::size_t x = 0; x < n; ++x) {
      phi[x] += h / 6 * (k1[x] + 2 * k2[x] + 2 * k3[x] + k4[x]);
      if (phi[x] < -kOdeNegativeTolerance) {
        throw Error("phi_ode: negative weight at t=" + std::to_string(t_next) +
                    "; reduce the step size");
      }
      total += phi[x];
    }
    path.norm_drift = std::max(path.norm_drift, std::abs(total - 1.0));
    for (auto& v : phi) v = std::max(v, 0.0);
    auto next = Distribution::normalized(mu.space_ptr(), phi);
    phi.assign(next.weights().begin(), next.weights().end());
    path.times.push_back(t_next);
    path.phis.push_back(std::move(next));
  }
  return path;
}

YaglomResult yaglom_iterate(const RateMatrix& rates, const Distribution& mu, double block, double tol,
                            std::size_t max_blocks) {
  if (!(block > 0.0)) throw Error("yaglom_iterate: block must be > 0");
  if (!(tol > 0.0)) throw Error("yaglom_iterate: tol must be > 0");
  const SubKernel kernel = semigroup(rates, block);
  YaglomResult result{mu, 0, std::numeric_limits<double>::infinity(), 0.0, false};
  while (result.iterations < max_blocks) {
    auto next = condition_on_survival(kernel, result.limit);
    result.final_delta = sup_distance(next, result.limit);
    result.limit = std::move(next);
    ++result.iterations;
    if (result.final_delta < tol) {
      result.converged = true;
      break;
    }
  }
  const auto w = result.limit.weights();
  for (StateIndex y = 0; y < w.size(); ++y) result.decay_rate += w[y] * rates.absorption(y);
  return result;
}

}  // namespace qsdfv
