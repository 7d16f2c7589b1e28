#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "impobs/mdp.hpp"
#include "impobs/rng.hpp"

namespace impobs {

/// Inter-arrival law of the observation stream. Observation i arrives at step
/// i + d_i with d_0 = initial_delay and d_{i+1} = d_i + Delta_i, where
/// Delta_i ~ pmf(i, s_i, a_i). Support is capped at Delta_max = H; the mass
/// beyond the cap is folded into Delta = H, which never influences an episode.
class DelayModel {
 public:
  DelayModel() = default;

  /// State/action independent law. `pmf` may be longer than H + 1.
  static DelayModel independent(int horizon, std::span<const double> pmf, int initial_delay = 0) {
    DelayModel m(horizon, 1, 1, initial_delay);
    auto row = fold(horizon, pmf, "pmf");
    for (int h = 0; h < horizon; ++h) m.table_.insert(m.table_.end(), row.begin(), row.end());
    return m;
  }

  /// Full table indexed [h][s][a][Delta], flattened over (h, s, a).
  static DelayModel conditional(int horizon, int num_states, int num_actions,
                                const std::vector<std::vector<double>>& pmfs,
                                int initial_delay = 0) {
    if (pmfs.size() != static_cast<std::size_t>(horizon) * num_states * num_actions) {
      throw ValidationError("delay table needs H*S*A distributions");
    }
    DelayModel m(horizon, num_states, num_actions, initial_delay);
    m.table_.clear();
    for (std::size_t i = 0; i < pmfs.size(); ++i) {
      auto row = fold(horizon, pmfs[i], "pmf[" + std::to_string(i) + "]");
      m.table_.insert(m.table_.end(), row.begin(), row.end());
    }
    return m;
  }

  int horizon() const { return H_; }
  int max_delay() const { return H_; }
  int initial_delay() const { return d0_; }
  bool state_independent() const { return S_ == 1 && A_ == 1; }

  std::span<const double> pmf(int h, int s, int a) const {
    const std::size_t row = (static_cast<std::size_t>(h) * S_ + (S_ == 1 ? 0 : s)) * A_ +
                            (A_ == 1 ? 0 : a);
    return {table_.data() + row * (H_ + 1), static_cast<std::size_t>(H_ + 1)};
  }

  double mean(int h, int s, int a) const {
    auto p = pmf(h, s, a);
    double m = 0.0;
    for (std::size_t d = 0; d < p.size(); ++d) m += static_cast<double>(d) * p[d];
    return m;
  }

 private:
  DelayModel(int horizon, int S, int A, int initial_delay)
      : H_(horizon), S_(S), A_(A), d0_(initial_delay) {
    if (horizon <= 0) throw ValidationError("delay model horizon must be positive");
    if (initial_delay < 0 || initial_delay > horizon) {
      throw ValidationError("initial delay must lie in [0, H]");
    }
  }

  static std::vector<double> fold(int horizon, std::span<const double> pmf, const std::string& what) {
    if (pmf.empty()) throw ValidationError(what + " is empty");
    std::vector<double> out(horizon + 1, 0.0);
    for (std::size_t d = 0; d < pmf.size(); ++d) {
      out[std::min<std::size_t>(d, horizon)] += pmf[d];
    }
    detail::check_distribution(pmf, 1e-12, what);
    return out;
  }

  int H_ = 0;
  int S_ = 1;
  int A_ = 1;
  int d0_ = 0;
  std::vector<double> table_;
};

/// Bernoulli lossy channel: the step-h observation is delivered with
/// probability lambda[h], independently of everything else.
class MissingModel {
 public:
  MissingModel() = default;
  explicit MissingModel(std::vector<double> lambda) : lambda_(std::move(lambda)) {
    if (lambda_.empty()) throw ValidationError("observable rates are empty");
    for (std::size_t h = 0; h < lambda_.size(); ++h) {
      if (!(lambda_[h] > 0.0 && lambda_[h] <= 1.0)) {
        throw ValidationError("observable rate lambda[" + std::to_string(h) +
                              "] = " + detail::fmt_real(lambda_[h]) + " outside (0,1]");
      }
    }
  }

  static MissingModel constant(int horizon, double lambda) {
    return MissingModel(std::vector<double>(horizon, lambda));
  }

  int horizon() const { return static_cast<int>(lambda_.size()); }
  double rate(int h) const { return lambda_[h]; }
  const std::vector<double>& rates() const { return lambda_; }
  double floor() const { return *std::min_element(lambda_.begin(), lambda_.end()); }

 private:
  std::vector<double> lambda_;
};

/// Geometric inter-arrivals P(Delta = k) = p (1-p)^k, tail folded at H.
inline DelayModel geometric_delay(double p, int horizon) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw ValidationError("geometric parameter " + detail::fmt_real(p) + " outside (0,1]");
  }
  std::vector<double> pmf(horizon + 1, 0.0);
  double tail = 1.0;
  for (int k = 0; k < horizon; ++k) {
    pmf[k] = p * tail;
    tail *= 1.0 - p;
  }
  pmf[horizon] = tail;
  return DelayModel::independent(horizon, pmf);
}

/// Constant delay d: the first observation arrives d steps late and every
/// later one follows immediately, so the step-h visible index is h - d.
inline DelayModel constant_delay(int d, int horizon) {
  if (d < 0 || d >= horizon) {
    throw ValidationError("constant delay " + std::to_string(d) + " must lie in [0, H)");
  }
  const double point[] = {1.0};
  return DelayModel::independent(horizon, point, d);
}

struct ArrivalSchedule {
  std::vector<int> delay;          // d_h
  std::vector<int> inter_arrival;  // Delta_h
  std::vector<int> visible;        // t_h, -1 before the first arrival

  int arrival_step(int i) const { return i + delay[i]; }
  int horizon() const { return static_cast<int>(delay.size()); }
};

/// Index of the latest observation that has arrived by step h, or -1.
inline int visible_index(std::span<const int> delay, int h) {
  int t = -1;
  for (int i = 0; i <= h && i < static_cast<int>(delay.size()); ++i)
    if (i + delay[i] <= h) t = i;
  return t;
}

inline ArrivalSchedule sample_schedule(const DelayModel& model, std::span<const int> states,
                                       std::span<const int> actions, CounterRng& rng) {
  const int H = model.horizon();
  if (static_cast<int>(states.size()) != H || static_cast<int>(actions.size()) != H) {
    throw std::invalid_argument("sample_schedule: trajectory length must equal H");
  }
  ArrivalSchedule out;
  out.delay.resize(H);
  out.inter_arrival.resize(H);
  out.visible.resize(H);
  out.delay[0] = model.initial_delay();
  for (int h = 0; h < H; ++h) {
    out.inter_arrival[h] = sample_index(model.pmf(h, states[h], actions[h]), rng);
    if (h + 1 < H) out.delay[h + 1] = out.delay[h] + out.inter_arrival[h];
  }
  for (int h = 0; h < H; ++h) out.visible[h] = visible_index(out.delay, h);
  return out;
}

inline std::vector<bool> sample_mask(const MissingModel& model, CounterRng& rng) {
  std::vector<bool> mask(model.horizon());
  for (int h = 0; h < model.horizon(); ++h) mask[h] = rng.bernoulli(model.rate(h));
  return mask;
}

}  // namespace impobs
