#pragma once

#include <cmath>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace impobs {

/// Raised by validate() and the model constructors; the message names the
/// first violated invariant with its indices.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline std::string fmt_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

inline void check_distribution(std::span<const double> p, double tol, const std::string& where) {
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0)) {
      throw ValidationError("negative probability " + fmt_real(p[i]) + " at " + where + "[" +
                            std::to_string(i) + "]");
    }
    sum += p[i];
  }
  if (std::abs(sum - 1.0) > tol) {
    throw ValidationError("row sum " + fmt_real(sum) + " at " + where);
  }
}

}  // namespace detail

/// Episodic tabular MDP. Steps, states and actions are 0-based. The kernel
/// has H-1 step tables because nothing follows the last step.
class TabularMdp {
 public:
  TabularMdp() = default;
  TabularMdp(int num_states, int num_actions, int horizon)
      : S_(num_states), A_(num_actions), H_(horizon) {
    if (S_ <= 0 || A_ <= 0 || H_ <= 0) {
      throw ValidationError("S, A and H must be positive");
    }
    reward_.assign(static_cast<std::size_t>(H_) * S_ * A_, 0.0);
    kernel_.assign(static_cast<std::size_t>(H_ - 1) * S_ * A_ * S_, 0.0);
    initial_.assign(S_, 1.0 / S_);
  }

  int num_states() const { return S_; }
  int num_actions() const { return A_; }
  int horizon() const { return H_; }

  double reward(int h, int s, int a) const { return reward_[ridx(h, s, a)]; }
  double& reward(int h, int s, int a) { return reward_[ridx(h, s, a)]; }

  std::span<const double> kernel(int h, int s, int a) const {
    return {kernel_.data() + kidx(h, s, a), static_cast<std::size_t>(S_)};
  }
  std::span<double> kernel(int h, int s, int a) {
    return {kernel_.data() + kidx(h, s, a), static_cast<std::size_t>(S_)};
  }

  std::span<const double> initial_dist() const { return initial_; }
  std::span<double> initial_dist() { return initial_; }

  void set_kernel(int h, int s, int a, std::span<const double> row) {
    auto dst = kernel(h, s, a);
    if (row.size() != dst.size()) throw ValidationError("kernel row has wrong length");
    std::copy(row.begin(), row.end(), dst.begin());
  }

 private:
  std::size_t ridx(int h, int s, int a) const {
    return (static_cast<std::size_t>(h) * S_ + s) * A_ + a;
  }
  std::size_t kidx(int h, int s, int a) const {
    return ((static_cast<std::size_t>(h) * S_ + s) * A_ + a) * S_;
  }

  int S_ = 0;
  int A_ = 0;
  int H_ = 0;
  std::vector<double> reward_;
  std::vector<double> kernel_;
  std::vector<double> initial_;
};

/// Stochastic Markov policy: one action distribution per (step, state).
class MarkovPolicy {
 public:
  MarkovPolicy() = default;
  MarkovPolicy(int horizon, int num_states, int num_actions)
      : H_(horizon), S_(num_states), A_(num_actions),
        dist_(static_cast<std::size_t>(horizon) * num_states * num_actions, 0.0) {}

  static MarkovPolicy uniform(int horizon, int num_states, int num_actions) {
    MarkovPolicy pol(horizon, num_states, num_actions);
    for (double& x : pol.dist_) x = 1.0 / num_actions;
    return pol;
  }

  int horizon() const { return H_; }
  int num_states() const { return S_; }
  int num_actions() const { return A_; }

  std::span<const double> at(int h, int s) const {
    return {dist_.data() + idx(h, s), static_cast<std::size_t>(A_)};
  }
  std::span<double> at(int h, int s) {
    return {dist_.data() + idx(h, s), static_cast<std::size_t>(A_)};
  }

  void set_deterministic(int h, int s, int a) {
    auto row = at(h, s);
    std::fill(row.begin(), row.end(), 0.0);
    row[a] = 1.0;
  }

  /// Action with the largest probability, lowest index on ties.
  int mode(int h, int s) const {
    auto row = at(h, s);
    int best = 0;
    for (int a = 1; a < A_; ++a)
      if (row[a] > row[best]) best = a;
    return best;
  }

 private:
  std::size_t idx(int h, int s) const { return (static_cast<std::size_t>(h) * S_ + s) * A_; }

  int H_ = 0;
  int S_ = 0;
  int A_ = 0;
  std::vector<double> dist_;
};

/// v has H+1 step rows (the last is identically zero); q has H.
struct ValueTable {
  int horizon = 0;
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> v;
  std::vector<double> q;

  ValueTable() = default;
  ValueTable(int H, int S, int A)
      : horizon(H), num_states(S), num_actions(A),
        v(static_cast<std::size_t>(H + 1) * S, 0.0),
        q(static_cast<std::size_t>(H) * S * A, 0.0) {}

  double& V(int h, int s) { return v[static_cast<std::size_t>(h) * num_states + s]; }
  double V(int h, int s) const { return v[static_cast<std::size_t>(h) * num_states + s]; }
  double& Q(int h, int s, int a) {
    return q[(static_cast<std::size_t>(h) * num_states + s) * num_actions + a];
  }
  double Q(int h, int s, int a) const {
    return q[(static_cast<std::size_t>(h) * num_states + s) * num_actions + a];
  }

  /// Step-0 value averaged over a start distribution.
  double expected_start_value(std::span<const double> start) const {
    double acc = 0.0;
    for (int s = 0; s < num_states; ++s) acc += start[s] * V(0, s);
    return acc;
  }
};

/// Throws ValidationError describing the first violated invariant.
inline void validate(const TabularMdp& mdp, double tol = 1e-12) {
  const int S = mdp.num_states(), A = mdp.num_actions(), H = mdp.horizon();
  if (S <= 0 || A <= 0 || H <= 0) throw ValidationError("S, A and H must be positive");
  for (int h = 0; h < H; ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        const double r = mdp.reward(h, s, a);
        if (!(r >= 0.0 && r <= 1.0)) {
          throw ValidationError("reward out of [0,1]: " + detail::fmt_real(r) + " at (" +
                                std::to_string(h) + "," + std::to_string(s) + "," +
                                std::to_string(a) + ")");
        }
      }
  for (int h = 0; h + 1 < H; ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        detail::check_distribution(mdp.kernel(h, s, a), tol,
                                   "(" + std::to_string(h) + "," + std::to_string(s) + "," +
                                       std::to_string(a) + ")");
      }
  detail::check_distribution(mdp.initial_dist(), tol, "initial_dist");
}

inline void validate(const MarkovPolicy& pol, double tol = 1e-12) {
  for (int h = 0; h < pol.horizon(); ++h)
    for (int s = 0; s < pol.num_states(); ++s)
      detail::check_distribution(pol.at(h, s), tol,
                                 "policy(" + std::to_string(h) + "," + std::to_string(s) + ")");
}

/// Backward induction with a greedy deterministic policy (ties to the lowest
/// action index).
inline std::pair<MarkovPolicy, ValueTable> value_iteration(const TabularMdp& mdp) {
  const int S = mdp.num_states(), A = mdp.num_actions(), H = mdp.horizon();
  MarkovPolicy pol(H, S, A);
  ValueTable vt(H, S, A);
  for (int h = H - 1; h >= 0; --h) {
    for (int s = 0; s < S; ++s) {
      int best = 0;
      for (int a = 0; a < A; ++a) {
        double q = mdp.reward(h, s, a);
        if (h + 1 < H) {
          auto p = mdp.kernel(h, s, a);
          for (int sn = 0; sn < S; ++sn) q += p[sn] * vt.V(h + 1, sn);
        }
        vt.Q(h, s, a) = q;
        if (q > vt.Q(h, s, best)) best = a;
      }
      pol.set_deterministic(h, s, best);
      vt.V(h, s) = vt.Q(h, s, best);
    }
  }
  return {std::move(pol), std::move(vt)};
}

inline ValueTable evaluate_markov(const TabularMdp& mdp, const MarkovPolicy& pol) {
  const int S = mdp.num_states(), A = mdp.num_actions(), H = mdp.horizon();
  if (pol.horizon() != H || pol.num_states() != S || pol.num_actions() != A) {
    throw std::invalid_argument("evaluate_markov: policy dimensions do not match the MDP");
  }
  ValueTable vt(H, S, A);
  for (int h = H - 1; h >= 0; --h) {
    for (int s = 0; s < S; ++s) {
      double v = 0.0;
      auto pi = pol.at(h, s);
      for (int a = 0; a < A; ++a) {
        double q = mdp.reward(h, s, a);
        if (h + 1 < H) {
          auto p = mdp.kernel(h, s, a);
          for (int sn = 0; sn < S; ++sn) q += p[sn] * vt.V(h + 1, sn);
        }
        vt.Q(h, s, a) = q;
        v += pi[a] * q;
      }
      vt.V(h, s) = v;
    }
  }
  return vt;
}

/// Pushes a distribution over states at step h_from through the one-step
/// kernels along a fixed action sequence.
inline std::vector<double> push_forward(const TabularMdp& mdp, int h_from,
                                        std::span<const double> dist,
                                        std::span<const int> actions) {
  const int S = mdp.num_states();
  if (h_from < 0 || h_from + static_cast<int>(actions.size()) > mdp.horizon() - 1) {
    throw std::out_of_range("action sequence runs past the horizon");
  }
  std::vector<double> cur(dist.begin(), dist.end()), next(S);
  int h = h_from;
  for (int a : actions) {
    std::fill(next.begin(), next.end(), 0.0);
    for (int s = 0; s < S; ++s) {
      if (cur[s] == 0.0) continue;
      auto p = mdp.kernel(h, s, a);
      for (int sn = 0; sn < S; ++sn) next[sn] += cur[s] * p[sn];
    }
    cur.swap(next);
    ++h;
  }
  return cur;
}

/// Law of the state reached from (h_from, s) after applying `actions` at
/// steps h_from, h_from+1, ...
inline std::vector<double> multi_step_kernel(const TabularMdp& mdp, int h_from, int s,
                                             std::span<const int> actions) {
  std::vector<double> point(mdp.num_states(), 0.0);
  point.at(s) = 1.0;
  return push_forward(mdp, h_from, point, actions);
}

}  // namespace impobs
