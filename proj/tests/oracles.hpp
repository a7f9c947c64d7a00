#pragma once

// Independent reference computations for the tests. None of these go
// through the library's uniformization, resolvent solve or FV code paths.

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <vector>

#include "qsdfv/chain_model.hpp"

namespace oracle {

// Generator on the space plus the absorbing state, absorbing state last.
inline Eigen::MatrixXd honest_generator(const qsdfv::RateMatrix& rates) {
  const auto n = static_cast<Eigen::Index>(rates.size());
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n + 1, n + 1);
  for (qsdfv::StateIndex x = 0; x < rates.size(); ++x) {
    for (qsdfv::StateIndex y = 0; y < rates.size(); ++y) {
      if (x != y) q(x, y) = rates.rate(x, y);
    }
    q(x, n) = rates.absorption(x);
    q(x, x) = -(q.row(x).sum());
  }
  return q;
}

// exp(A) by scaling and squaring over a long Taylor series.
inline Eigen::MatrixXd expm(const Eigen::MatrixXd& a) {
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  while (norm / std::ldexp(1.0, squarings) > 0.25) ++squarings;
  const Eigen::MatrixXd scaled = a / std::ldexp(1.0, squarings);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  Eigen::MatrixXd sum = term;
  for (int k = 1; k <= 30; ++k) {
    term = term * scaled / k;
    sum += term;
  }
  for (int k = 0; k < squarings; ++k) sum = sum * sum;
  return sum;
}

inline Eigen::MatrixXd transition(const qsdfv::RateMatrix& rates, double t) {
  return expm(honest_generator(rates) * t);
}

// mu P_t on the space divided by survival.
inline std::vector<double> conditioned(const qsdfv::RateMatrix& rates, std::vector<double> mu, double t) {
  const auto p = transition(rates, t);
  const std::size_t n = rates.size();
  std::vector<double> out(n, 0.0);
  double survive = 0.0;
  for (std::size_t z = 0; z < n; ++z) {
    for (std::size_t x = 0; x < n; ++x) out[x] += mu[z] * p(z, x);
  }
  for (double v : out) survive += v;
  for (double& v : out) v /= survive;
  return out;
}

// Composite Simpson for the resolvent integral int_0^T lambda e^{-lambda s} P_s ds.
inline Eigen::MatrixXd resolvent_quadrature(const qsdfv::RateMatrix& rates, double lambda, double h, double horizon) {
  const auto n = static_cast<Eigen::Index>(rates.size());
  const int panels = static_cast<int>(std::llround(horizon / h));
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k <= panels; ++k) {
    const double s = k * h;
    const double w = (k == 0 || k == panels) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    sum += w * lambda * std::exp(-lambda * s) * qsdfv::semigroup(rates, s).entries;
  }
  return sum * h / 3.0;
}

// Stationary law of the labeled N-particle FV process, built from its
// definition particle by particle, then folded to occupation vectors.
inline std::map<std::vector<std::uint32_t>, double> fv_stationary_labeled(const qsdfv::RateMatrix& rates,
                                                                          std::size_t particles) {
  const std::size_t n = rates.size();
  std::size_t total = 1;
  for (std::size_t i = 0; i < particles; ++i) total *= n;
  auto decode = [&](std::size_t code) {
    std::vector<std::uint32_t> xi(particles);
    for (std::size_t i = 0; i < particles; ++i) {
      xi[i] = static_cast<std::uint32_t>(code % n);
      code /= n;
    }
    return xi;
  };
  auto encode = [&](const std::vector<std::uint32_t>& xi) {
    std::size_t code = 0;
    for (std::size_t i = particles; i-- > 0;) code = code * n + xi[i];
    return code;
  };
  const auto m = static_cast<Eigen::Index>(total);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t c = 0; c < total; ++c) {
    const auto xi = decode(c);
    for (std::size_t i = 0; i < particles; ++i) {
      for (std::uint32_t y = 0; y < n; ++y) {
        if (y == xi[i]) continue;
        auto next = xi;
        next[i] = y;
        const double r = rates.rate(xi[i], y);
        a(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(encode(next))) += r;
      }
      for (std::size_t j = 0; j < particles; ++j) {
        if (j == i) continue;
        auto next = xi;
        next[i] = xi[j];
        a(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(encode(next))) +=
            rates.absorption(xi[i]) / static_cast<double>(particles - 1);
      }
    }
  }
  for (Eigen::Index c = 0; c < m; ++c) {
    a(c, c) = 0.0;
    a(c, c) = -a.row(c).sum();
  }
  Eigen::MatrixXd system = a.transpose();
  system.row(m - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  rhs(m - 1) = 1.0;
  const Eigen::VectorXd pi = system.fullPivLu().solve(rhs);
  std::map<std::vector<std::uint32_t>, double> out;
  for (std::size_t c = 0; c < total; ++c) {
    std::vector<std::uint32_t> eta(n, 0);
    for (auto x : decode(c)) ++eta[x];
    out[eta] += pi(static_cast<Eigen::Index>(c));
  }
  return out;
}

// Two independent copies from iid mu, zero absorption: covariance matrix of
// the empirical profile eta/2 at time t.
inline Eigen::MatrixXd two_chain_profile_cov(const qsdfv::RateMatrix& rates, const std::vector<double>& mu, double t) {
  const auto p = transition(rates, t);
  const auto n = static_cast<Eigen::Index>(rates.size());
  Eigen::VectorXd law = Eigen::VectorXd::Zero(n);
  for (Eigen::Index z = 0; z < n; ++z) {
    for (Eigen::Index x = 0; x < n; ++x) law(x) += mu[static_cast<std::size_t>(z)] * p(z, x);
  }
  // eta(x)/2 = (1{X1=x} + 1{X2=x})/2 with X1, X2 iid ~ law.
  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index x = 0; x < n; ++x) {
    for (Eigen::Index y = 0; y < n; ++y) cov(x, y) = 0.5 * ((x == y ? law(x) : 0.0) - law(x) * law(y));
  }
  return cov;
}

}  // namespace oracle
