#include "qsdfv/chain_model.hpp"

#include <Eigen/LU>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace qsdfv {

StateSpace::StateSpace(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.empty()) throw Error("state space must contain at least one state");
  for (std::size_t k = 0; k < labels_.size(); ++k) {
    auto [it, inserted] = index_.emplace(labels_[k], static_cast<StateIndex>(k));
    if (!inserted) throw Error("duplicate state label '" + labels_[k] + "'");
  }
}

std::optional<StateIndex> StateSpace::find(std::string_view label) const {
  auto it = index_.find(std::string(label));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

StateIndex StateSpace::index_of(std::string_view label) const {
  auto found = find(label);
  if (!found) throw Error("unknown state label '" + std::string(label) + "'");
  return *found;
}

RateMatrix::RateMatrix(SpacePtr space, std::vector<Entry> offdiag, std::vector<double> absorb)
    : space_(std::move(space)), absorb_(std::move(absorb)) {
  if (!space_) throw Error("rate matrix needs a state space");
  const std::size_t n = space_->size();
  if (absorb_.size() != n) throw Error("absorption vector size does not match the state space");
  for (std::size_t x = 0; x < n; ++x) {
    if (!std::isfinite(absorb_[x]) || absorb_[x] < 0.0) {
      throw Error("absorption rate of state '" + space_->label(x) + "' must be finite and >= 0");
    }
  }
  std::erase_if(offdiag, [](const Entry& e) { return e.rate == 0.0; });
  for (const auto& e : offdiag) {
    if (e.from >= n || e.to >= n) throw Error("rate entry refers to a state outside the space");
    if (e.from == e.to) throw Error("diagonal rates are derived and may not be given ('" +
                                    space_->label(e.from) + "')");
    if (!std::isfinite(e.rate) || e.rate < 0.0) {
      throw Error("rate " + space_->label(e.from) + "->" + space_->label(e.to) +
                  " must be finite and >= 0");
    }
  }
  std::sort(offdiag.begin(), offdiag.end(), [](const Entry& a, const Entry& b) {
    return a.from != b.from ? a.from < b.from : a.to < b.to;
  });
  for (std::size_t k = 1; k < offdiag.size(); ++k) {
    if (offdiag[k].from == offdiag[k - 1].from && offdiag[k].to == offdiag[k - 1].to) {
      throw Error("duplicate rate " + space_->label(offdiag[k].from) + "->" +
                  space_->label(offdiag[k].to));
    }
  }

  row_start_.assign(n + 1, 0);
  out_.assign(n, 0.0);
  transitions_.reserve(offdiag.size());
  cumulative_.reserve(offdiag.size());
  std::size_t k = 0;
  for (std::size_t x = 0; x < n; ++x) {
    row_start_[x] = transitions_.size();
    double running = 0.0;
    for (; k < offdiag.size() && offdiag[k].from == x; ++k) {
      running += offdiag[k].rate;
      transitions_.push_back({offdiag[k].to, offdiag[k].rate});
      cumulative_.push_back(running);
    }
    out_[x] = running;
  }
  row_start_[n] = transitions_.size();
  for (std::size_t x = 0; x < n; ++x) qbar_ = std::max(qbar_, exit_rate(static_cast<StateIndex>(x)));
}

double RateMatrix::rate(StateIndex x, StateIndex y) const {
  if (x == y) return diagonal(x);
  for (const auto& tr : row(x)) {
    if (tr.to == y) return tr.rate;
  }
  return 0.0;
}

StateIndex RateMatrix::pick_transition(StateIndex x, double u) const {
  const auto begin = cumulative_.begin() + static_cast<std::ptrdiff_t>(row_start_[x]);
  const auto end = cumulative_.begin() + static_cast<std::ptrdiff_t>(row_start_[x + 1]);
  auto it = std::upper_bound(begin, end, u);
  // u can only reach the row total through rounding; fall back to the last entry.
  if (it == end) --it;
  return transitions_[static_cast<std::size_t>(it - cumulative_.begin())].to;
}

Eigen::MatrixXd RateMatrix::generator() const {
  const auto n = static_cast<Eigen::Index>(size());
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
  for (StateIndex x = 0; x < size(); ++x) {
    q(x, x) = diagonal(x);
    for (const auto& tr : row(x)) q(x, tr.to) = tr.rate;
  }
  return q;
}

std::vector<RateMatrix::Entry> RateMatrix::entries() const {
  std::vector<Entry> out;
  out.reserve(transitions_.size());
  for (StateIndex x = 0; x < size(); ++x) {
    for (const auto& tr : row(x)) out.push_back({x, tr.to, tr.rate});
  }
  return out;
}

RateMatrix RateMatrix::scaled(double kappa) const {
  if (!(kappa > 0.0)) throw Error("rate scale factor must be positive");
  auto e = entries();
  for (auto& entry : e) entry.rate *= kappa;
  auto a = absorb_;
  for (auto& v : a) v *= kappa;
  return RateMatrix(space_, std::move(e), std::move(a));
}

bool RateMatrix::operator==(const RateMatrix& other) const {
  if (!(space() == other.space())) return false;
  if (absorb_ != other.absorb_) return false;
  const auto a = entries();
  const auto b = other.entries();
  return std::equal(a.begin(), a.end(), b.begin(), b.end(), [](const Entry& l, const Entry& r) {
    return l.from == r.from && l.to == r.to && l.rate == r.rate;
  });
}

Distribution::Distribution(SpacePtr space, std::vector<double> weights)
    : space_(std::move(space)), weights_(std::move(weights)) {
  if (!space_) throw Error("distribution needs a state space");
  if (weights_.size() != space_->size()) throw Error("distribution size does not match the state space");
  double total = 0.0;
  for (double w : weights_) {
    if (!std::isfinite(w) || w < 0.0) throw Error("distribution weights must be finite and >= 0");
    total += w;
  }
  if (std::abs(total - 1.0) > kSumTolerance) {
    throw Error("distribution weights sum to " + std::to_string(total) + ", not 1");
  }
}

Distribution Distribution::normalized(SpacePtr space, std::vector<double> weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0) || !std::isfinite(total)) throw Error("cannot normalize a zero or non-finite measure");
  for (auto& w : weights) w /= total;
  return Distribution(std::move(space), std::move(weights));
}

Distribution Distribution::delta(SpacePtr space, StateIndex x) {
  std::vector<double> w(space->size(), 0.0);
  w.at(x) = 1.0;
  return Distribution(std::move(space), std::move(w));
}

Distribution Distribution::uniform(SpacePtr space) {
  const std::size_t n = space->size();
  return normalized(std::move(space), std::vector<double>(n, 1.0));
}

double sup_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("sup_distance: size mismatch");
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a[k] - b[k]));
  return d;
}

double sup_distance(const Distribution& a, const Distribution& b) {
  return sup_distance(a.weights(), b.weights());
}

double SubKernel::honesty_defect() const {
  const Eigen::VectorXd rows = entries.rowwise().sum() + absorb_col;
  return (rows.array() - 1.0).abs().maxCoeff();
}

namespace {

bool strongly_connected(const RateMatrix& rates) {
  const std::size_t n = rates.size();
  std::vector<std::vector<StateIndex>> reverse(n);
  for (StateIndex x = 0; x < n; ++x) {
    for (const auto& tr : rates.row(x)) reverse[tr.to].push_back(x);
  }
  auto reach_all = [n](auto&& neighbours) {
    std::vector<char> seen(n, 0);
    std::vector<StateIndex> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
      const StateIndex x = stack.back();
      stack.pop_back();
      neighbours(x, [&](StateIndex y) {
        if (!seen[y]) {
          seen[y] = 1;
          ++count;
          stack.push_back(y);
        }
      });
    }
    return count == n;
  };
  const bool forward = reach_all([&](StateIndex x, auto&& visit) {
    for (const auto& tr : rates.row(x)) visit(tr.to);
  });
  const bool backward = reach_all([&](StateIndex x, auto&& visit) {
    for (StateIndex y : reverse[x]) visit(y);
  });
  return forward && backward;
}

}  // namespace

ChainSummary summarize_chain(const RateMatrix& rates) {
  const std::size_t n = rates.size();
  ChainSummary s;
  s.qbar = rates.qbar();
  for (StateIndex x = 0; x < n; ++x) s.C = std::max(s.C, rates.absorption(x));

  // alpha(z) = min over x != z of q(x,z); entries that are not stored count as 0.
  // With a single state the infimum runs over an empty set; we take 0 (no
  // regeneration moves exist).
  s.alpha_z.assign(n, 0.0);
  if (n > 1) {
    std::vector<double> column_min(n, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> column_count(n, 0);
    for (StateIndex x = 0; x < n; ++x) {
      for (const auto& tr : rates.row(x)) {
        column_min[tr.to] = std::min(column_min[tr.to], tr.rate);
        ++column_count[tr.to];
      }
    }
    for (std::size_t z = 0; z < n; ++z) {
      s.alpha_z[z] = column_count[z] == n - 1 ? column_min[z] : 0.0;
    }
  }
  s.alpha = std::accumulate(s.alpha_z.begin(), s.alpha_z.end(), 0.0);
  if (s.alpha > 0.0) s.mu_alpha = Distribution::normalized(rates.space_ptr(), s.alpha_z);
  s.irreducible = strongly_connected(rates);
  return s;
}

ChainSummary validate_chain(const RateMatrix& rates) {
  auto s = summarize_chain(rates);
  if (!(s.C > 0.0)) throw Error("no absorption: every absorption rate is 0, so C = 0");
  return s;
}

namespace {

// P_h for q̄ h small enough that e^{-q̄ h} does not underflow.
SubKernel uniformized_step(const RateMatrix& rates, double h, double series_tol) {
  const auto n = static_cast<Eigen::Index>(rates.size());
  const double qbar = rates.qbar();
  const double lambda = qbar * h;

  // Jump kernel restricted to the space, and its absorption column.
  std::vector<Eigen::Triplet<double>> triplets;
  for (StateIndex x = 0; x < rates.size(); ++x) {
    triplets.emplace_back(x, x, 1.0 - rates.exit_rate(x) / qbar);
    for (const auto& tr : rates.row(x)) triplets.emplace_back(x, tr.to, tr.rate / qbar);
  }
  Eigen::SparseMatrix<double> jump(n, n);
  jump.setFromTriplets(triplets.begin(), triplets.end());
  Eigen::VectorXd jump_absorb(n);
  for (StateIndex x = 0; x < rates.size(); ++x) jump_absorb(x) = rates.absorption(x) / qbar;

  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd power_absorb = Eigen::VectorXd::Zero(n);
  double weight = std::exp(-lambda);
  double mass = weight;

  SubKernel k{rates.space_ptr(), weight * power, weight * power_absorb};
  constexpr int kMaxTerms = 2000;
  for (int term = 1; term < kMaxTerms && 1.0 - mass > series_tol; ++term) {
    power_absorb += power * jump_absorb;
    power = power * jump;
    weight *= lambda / term;
    mass += weight;
    k.entries += weight * power;
    k.absorb_col += weight * power_absorb;
  }
  return k;
}

SubKernel compose(const SubKernel& first, const SubKernel& second) {
  return {first.space, first.entries * second.entries,
          first.absorb_col + first.entries * second.absorb_col};
}

}  // namespace

SubKernel semigroup(const RateMatrix& rates, double t, double series_tol) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw Error("semigroup time must be finite and >= 0");
  const auto n = static_cast<Eigen::Index>(rates.size());
  const double qbar = rates.qbar();
  if (t == 0.0 || qbar == 0.0) {
    return {rates.space_ptr(), Eigen::MatrixXd::Identity(n, n), Eigen::VectorXd::Zero(n)};
  }
  constexpr double kMaxPoissonMean = 32.0;
  const auto pieces = static_cast<std::uint64_t>(std::max(1.0, std::ceil(qbar * t / kMaxPoissonMean)));
  SubKernel piece = uniformized_step(rates, t / static_cast<double>(pieces),
                                     series_tol / static_cast<double>(pieces));
  if (pieces == 1) return piece;

  std::optional<SubKernel> result;
  for (std::uint64_t remaining = pieces; remaining > 0; remaining >>= 1) {
    if (remaining & 1) result = result ? compose(*result, piece) : piece;
    if (remaining > 1) piece = compose(piece, piece);
  }
  return *result;
}

SubKernel resolvent(const RateMatrix& rates, double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw Error("resolvent rate must be finite and > 0");
  const auto n = static_cast<Eigen::Index>(rates.size());
  const Eigen::MatrixXd shifted = lambda * Eigen::MatrixXd::Identity(n, n) - rates.generator();
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(shifted);
  Eigen::MatrixXd entries = lambda * lu.solve(Eigen::MatrixXd::Identity(n, n));
  if (!entries.allFinite()) throw Error("internal error: singular resolvent solve");
  Eigen::VectorXd absorb = Eigen::VectorXd::Ones(n) - entries.rowwise().sum();
  return {rates.space_ptr(), std::move(entries), std::move(absorb)};
}

AbsorptionSample simulate_absorbing_chain(const RateMatrix& rates, StateIndex start,
                                          double horizon, Seed seed) {
  if (!(horizon > 0.0)) throw Error("horizon must be > 0");
  if (start >= rates.size()) throw Error("start state outside the space");
  Rng rng(seed);
  AbsorptionSample sample;
  sample.path.push_back({0.0, start});
  StateIndex state = start;
  double time = 0.0;
  for (;;) {
    const double exit = rates.exit_rate(state);
    if (exit == 0.0) break;
    time += rng.exponential(exit);
    if (time > horizon) break;
    const double u = rng.uniform() * exit;
    if (u < rates.out_rate(state)) {
      state = rates.pick_transition(state, u);
      sample.path.push_back({time, state});
    } else {
      sample.path.push_back({time, kAbsorbed});
      sample.absorption_time = time;
      break;
    }
  }
  return sample;
}

RateMatrix two_state_example() {
  auto space = std::make_shared<const StateSpace>(std::vector<std::string>{"1", "2"});
  return RateMatrix(space, {{0, 1, 1.0}, {1, 0, 1.0}}, {1.0, 0.0});
}

RateMatrix symmetric_two_state(double absorption) {
  auto space = std::make_shared<const StateSpace>(std::vector<std::string>{"1", "2"});
  return RateMatrix(space, {{0, 1, 1.0}, {1, 0, 1.0}}, {absorption, absorption});
}

RateMatrix asymmetric_walk(double p, std::size_t length) {
  if (!(p > 0.0 && p < 1.0)) throw Error("asymmetric_walk: p must lie in (0,1)");
  if (length < 2) throw Error("asymmetric_walk: truncation length must be >= 2");
  std::vector<std::string> labels;
  for (std::size_t i = 1; i <= length; ++i) labels.push_back(std::to_string(i));
  auto space = std::make_shared<const StateSpace>(std::move(labels));
  std::vector<RateMatrix::Entry> entries;
  for (StateIndex i = 0; i < length; ++i) {
    if (i + 1 < length) entries.push_back({i, i + 1, p});
    if (i > 0) entries.push_back({i, i - 1, 1.0 - p});
  }
  // Outward rate at the last state is dropped: no mass beyond the truncation.
  std::vector<double> absorb(length, 0.0);
  absorb[0] = 1.0 - p;
  return RateMatrix(space, std::move(entries), std::move(absorb));
}

}  // namespace qsdfv
