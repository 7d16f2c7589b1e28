#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "impobs/aug.hpp"
#include "impobs/channels.hpp"
#include "impobs/mdp.hpp"
#include "impobs/protocol.hpp"
#include "impobs/rng.hpp"

namespace impobs {

struct BonusConfig {
  double c = 1.0;
  double gamma = 0.1;
  double iota = 1.0;  // log(S A K H / gamma)

  static BonusConfig make(int S, int A, int H, int K, double c = 1.0, double gamma = 0.1) {
    if (!(c > 0.0)) throw ValidationError("bonus constant c must be positive");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in (0,1)");
    if (K < 1) throw ValidationError("episode count must be at least 1");
    BonusConfig cfg{c, gamma, std::log(static_cast<double>(S) * A * K * H / gamma)};
    if (!(cfg.iota > 0.0)) throw ValidationError("log factor iota must be positive");
    return cfg;
  }
};

/// Visit, transition and inter-arrival counts of the original process, plus
/// the augmented counts of the lossy setting (indexed by a fixed topology).
class Counts {
 public:
  Counts() = default;
  Counts(int S, int A, int H) : S_(S), A_(A), H_(H) {
    n_.assign(static_cast<std::size_t>(H) * S * A, 0);
    next_.assign(static_cast<std::size_t>(H) * S * A * S, 0);
    delay_.assign(static_cast<std::size_t>(H) * S * A * (H + 1), 0);
    observed_.assign(H, 0);
  }

  int num_states() const { return S_; }
  int num_actions() const { return A_; }
  int horizon() const { return H_; }
  long episodes() const { return episodes_; }

  long n(int h, int s, int a) const { return n_[sa(h, s, a)]; }
  long next(int h, int s, int a, int sn) const { return next_[sa(h, s, a) * S_ + sn]; }
  long delay(int h, int s, int a, int d) const { return delay_[sa(h, s, a) * (H_ + 1) + d]; }
  long observed(int h) const { return observed_[h]; }
  long missing(int h) const { return episodes_ - observed_[h]; }

  void add_visit(int h, int s, int a) { ++n_[sa(h, s, a)]; }
  void add_transition(int h, int s, int a, int sn) { ++next_[sa(h, s, a) * S_ + sn]; }
  void add_delay(int h, int s, int a, int d) { ++delay_[sa(h, s, a) * (H_ + 1) + std::min(d, H_)]; }
  void add_observed(int h) { ++observed_[h]; }
  void end_episode() { ++episodes_; }

  // Augmented counts (missing setting); only updated when s_{h+1} is seen.
  void attach_topology(const AugTopology& topo) {
    aug_n_.resize(topo.horizon());
    aug_next_.resize(topo.horizon());
    for (int h = 0; h < topo.horizon(); ++h) {
      aug_n_[h].assign(topo.layers[h].size() * A_, 0);
      aug_next_[h].assign(topo.layers[h].size() * A_ * S_, 0);
    }
  }
  long aug_n(int h, std::size_t i, int a) const { return aug_n_[h][i * A_ + a]; }
  long aug_next(int h, std::size_t i, int a, int sn) const {
    return aug_next_[h][(i * A_ + a) * S_ + sn];
  }
  void add_aug(int h, std::size_t i, int a, int sn) {
    ++aug_n_[h][i * A_ + a];
    ++aug_next_[h][(i * A_ + a) * S_ + sn];
  }
  long aug_total(int h) const {
    return std::accumulate(aug_n_[h].begin(), aug_n_[h].end(), 0L);
  }

 private:
  std::size_t sa(int h, int s, int a) const {
    return (static_cast<std::size_t>(h) * S_ + s) * A_ + a;
  }

  int S_ = 0, A_ = 0, H_ = 0;
  long episodes_ = 0;
  std::vector<long> n_, next_, delay_, observed_;
  std::vector<std::vector<long>> aug_n_, aug_next_;
};

// ---------------------------------------------------------------------------
// Estimators

/// Empirical kernels (uniform rows where nothing was counted). Rewards and
/// the start law are copied from `known`.
inline TabularMdp estimate_kernel(const Counts& c, const TabularMdp& known) {
  TabularMdp out = known;
  const int S = c.num_states();
  for (int h = 0; h + 1 < c.horizon(); ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < c.num_actions(); ++a) {
        auto row = out.kernel(h, s, a);
        const long n = c.n(h, s, a);
        for (int sn = 0; sn < S; ++sn)
          row[sn] = n == 0 ? 1.0 / S : static_cast<double>(c.next(h, s, a, sn)) / n;
      }
  return out;
}

/// N(s,a,delta) / sum_{delta' >= delta} N(s,a,delta'); 1 without data.
inline double estimate_hazard(const Counts& c, int h, int s, int a, int delta) {
  long tail = 0;
  for (int d = delta; d <= c.horizon(); ++d) tail += c.delay(h, s, a, d);
  if (tail == 0) return 1.0;
  return static_cast<double>(c.delay(h, s, a, delta)) / tail;
}

/// Empirical inter-arrival laws (point mass at 0 where nothing was counted,
/// so the hazard is 1).
inline DelayModel estimate_delay_model(const Counts& c, int initial_delay) {
  const int S = c.num_states(), A = c.num_actions(), H = c.horizon();
  std::vector<std::vector<double>> pmfs;
  pmfs.reserve(static_cast<std::size_t>(H) * S * A);
  for (int h = 0; h < H; ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        std::vector<double> p(H + 1, 0.0);
        const long n = c.n(h, s, a);
        if (n == 0) {
          p[0] = 1.0;
        } else {
          for (int d = 0; d <= H; ++d) p[d] = static_cast<double>(c.delay(h, s, a, d)) / n;
        }
        pmfs.push_back(std::move(p));
      }
  return DelayModel::conditional(H, S, A, pmfs, initial_delay);
}

struct DelayEstimate {
  TabularMdp kernel;
  DelayModel delay;
};

inline DelayEstimate estimate_delayed(const Counts& c, const TabularMdp& known, int initial_delay) {
  return {estimate_kernel(c, known), estimate_delay_model(c, initial_delay)};
}

/// Fraction of episodes in which the step-h state was delivered; 1 before
/// any episode.
inline double estimate_rate(const Counts& c, int h) {
  if (c.episodes() == 0) return 1.0;
  return static_cast<double>(c.observed(h)) / c.episodes();
}

// ---------------------------------------------------------------------------
// Bonuses

namespace detail {

inline double root_term(double num, long n) {
  return n == 0 ? 1.0 : std::sqrt(num / static_cast<double>(n));
}

}  // namespace detail

/// Bonus of the 2H-layer delayed model at layer h. Zero where the row is
/// known exactly: before the first arrival and once the last state is seen.
/// In the settling steps only the kernel term remains.
inline double bonus_delayed(const Counts& c, const BonusConfig& cfg, int h, const AugState& tau,
                            int a) {
  const int H = c.horizon();
  if (!tau.observed()) return 0.0;
  const int t = std::min(h, H) - static_cast<int>(tau.window.size());
  if (t >= H - 1) return 0.0;
  const int at = tau.window.empty() ? a : tau.window.front();
  const double hi = H * cfg.iota;
  const double kernel_term = detail::root_term(hi, c.n(t, tau.last_seen, at));
  if (h >= H - 1) return cfg.c * H * kernel_term;
  const double delay_term = detail::root_term(hi, c.delay(t, tau.last_seen, at, std::min(tau.staleness, H)));
  return cfg.c * H * (delay_term + kernel_term);
}

/// cH(sqrt(H iota / N(tau,a)) + sqrt(iota / k)) for the transition rows of
/// the lossy model.
inline double bonus_missing(const Counts& c, const BonusConfig& cfg, int h, std::size_t i, int a) {
  const int H = c.horizon();
  if (h + 1 >= H) return 0.0;
  return cfg.c * H *
         (detail::root_term(H * cfg.iota, c.aug_n(h, i, a)) + detail::root_term(cfg.iota, c.episodes()));
}

/// L1 radius c sqrt(S iota / N) of the confidence ball around p_hat; 2 covers
/// the whole simplex.
inline double confidence_set_radius(const Counts& c, const BonusConfig& cfg, int h, int s, int a) {
  const long n = c.n(h, s, a);
  if (n == 0) return 2.0;
  return std::min(2.0, cfg.c * std::sqrt(c.num_states() * cfg.iota / static_cast<double>(n)));
}

/// max <q, v> over probability vectors q with ||q - p||_1 <= radius.
inline double ball_max(std::span<const double> p, std::span<const double> v, double radius) {
  const std::size_t n = p.size();
  std::vector<double> q(p.begin(), p.end());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return v[x] > v[y]; });
  const std::size_t best = order[0];
  double move = std::min(radius / 2.0, 1.0 - q[best]);
  q[best] += move;
  for (std::size_t k = n; k-- > 1 && move > 0.0;) {
    const std::size_t j = order[k];
    const double take = std::min(move, q[j]);
    q[j] -= take;
    move -= take;
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) acc += q[j] * v[j];
  return acc;
}

// ---------------------------------------------------------------------------
// Planning

/// Backward induction with Q = min{H, r + bonus + P V}, greedy with ties to
/// the lowest action index.
inline std::pair<ExecutablePolicy, AugValues> optimistic_vi(
    const AugMdp& aug, const std::vector<std::vector<double>>& bonus, double clip) {
  const int L = aug.horizon(), A = aug.num_actions();
  ExecutablePolicy pol(aug.topology);
  AugValues out;
  out.v.resize(L);
  out.q.resize(L);
  std::vector<double> empty;
  for (int h = L - 1; h >= 0; --h) {
    const AugLayer& layer = aug.topo().layers[h];
    out.v[h].assign(layer.size(), 0.0);
    out.q[h].assign(layer.size() * A, 0.0);
    const auto& vnext = h + 1 < L ? out.v[h + 1] : empty;
    for (std::size_t i = 0; i < layer.size(); ++i) {
      int best = 0;
      for (int a = 0; a < A; ++a) {
        const std::size_t r = i * A + a;
        double q = aug.reward[h][r] + bonus[h][r];
        if (h + 1 < L) q += detail::backup(aug, vnext, h, r);
        q = std::min(clip, q);
        out.q[h][r] = q;
        if (q > out.q[h][i * A + best]) best = a;
      }
      out.v[h][i] = out.q[h][i * A + best];
      pol.set_deterministic(h, static_cast<std::uint32_t>(i), best);
    }
  }
  detail::finish_start(aug, out);
  return {std::move(pol), std::move(out)};
}

// ---------------------------------------------------------------------------
// Regret traces

struct TraceRecord {
  int episode = 0;
  double increment = 0.0;
  double cumulative = 0.0;
  double optimistic_value = 0.0;
  double oracle_value = 0.0;
  bool optimistic = true;  // planned value >= optimum at every start state
};

struct RegretTrace {
  std::vector<TraceRecord> records;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;

  double final_regret() const { return records.empty() ? 0.0 : records.back().cumulative; }
  double cumulative_at(int k) const { return records.at(k - 1).cumulative; }

  /// Mean per-episode regret over episodes [from, to).
  double mean_increment(std::size_t from, std::size_t to) const {
    if (to <= from) return 0.0;
    double acc = 0.0;
    for (std::size_t k = from; k < to; ++k) acc += records[k].increment;
    return acc / static_cast<double>(to - from);
  }
  double slope_first_decile() const {
    return mean_increment(0, std::max<std::size_t>(1, records.size() / 10));
  }
  double slope_last_decile() const {
    const std::size_t n = records.size();
    return mean_increment(n - std::max<std::size_t>(1, n / 10), n);
  }
  double optimism_rate() const {
    if (records.empty()) return 1.0;
    std::size_t ok = 0;
    for (const auto& r : records) ok += r.optimistic ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(records.size());
  }
  /// True when the planned value was optimistic in every one of the first k episodes.
  bool optimistic_through(std::size_t k) const {
    for (std::size_t i = 0; i < k && i < records.size(); ++i)
      if (!records[i].optimistic) return false;
    return true;
  }
};

struct LearnerOptions {
  int episodes = 1000;
  std::uint64_t seed = 0;
  std::size_t cap = BuildOptions{}.cap;
  /// Called after the counts of episode k have been updated.
  std::function<void(int k, const Counts&)> observer;
};

namespace detail {

inline bool dominates(const AugValues& planned, const AugValues& truth, const AugMdp& aug) {
  for (std::size_t k = 0; k < planned.start.size(); ++k)
    if (aug.initial_weight[k] > 0.0 && planned.start[k] < truth.start[k] - 1e-9) return false;
  return true;
}

inline void record(RegretTrace& tr, int k, double vstar, double vpi, double vhat, bool optimistic) {
  TraceRecord r;
  r.episode = k;
  r.increment = vstar - vpi;
  r.cumulative = (tr.records.empty() ? 0.0 : tr.records.back().cumulative) + r.increment;
  r.optimistic_value = vhat;
  r.oracle_value = vstar;
  r.optimistic = optimistic;
  tr.records.push_back(r);
}

inline double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Bonus-driven optimistic planning on the 2H-layer delayed model. The
/// reward table, the start law and the initial delay are known; kernels and
/// inter-arrival laws are learned from the end-of-episode returns.
inline RegretTrace run_alg1(const TabularMdp& mdp, const DelayModel& model, const BonusConfig& cfg,
                            const LearnerOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const int H = mdp.horizon(), S = mdp.num_states(), A = mdp.num_actions();
  const AugMdp truth = build_aug(DelayedDynamics(mdp, model, true, true), {opt.cap, true});
  const auto& topo = truth.topology;
  const auto [star_pol, star] = optimal_aug(truth);
  const double vstar = star.start_value;

  Counts counts(S, A, H);
  RngStreams rng = RngStreams::for_run(opt.seed);
  RegretTrace tr;
  tr.seed = opt.seed;
  std::vector<std::vector<double>> bonus(topo->horizon());
  for (int k = 1; k <= opt.episodes; ++k) {
    const auto est = estimate_delayed(counts, mdp, model.initial_delay());
    const AugMdp hat = reweight_aug(topo, DelayedDynamics(est.kernel, est.delay, true, true));
    for (int h = 0; h < topo->horizon(); ++h) {
      const AugLayer& layer = topo->layers[h];
      bonus[h].assign(layer.size() * A, 0.0);
      for (std::size_t i = 0; i < layer.size(); ++i)
        for (int a = 0; a < A; ++a)
          bonus[h][i * A + a] = bonus_delayed(counts, cfg, h, layer.states[i], a);
    }
    auto [pol, planned] = optimistic_vi(hat, bonus, H);
    const double vpi = evaluate_aug(truth, pol).start_value;
    detail::record(tr, k, vstar, vpi, planned.start_value, detail::dominates(planned, star, truth));

    const DelayedEpisode ep = play_episode_delayed(mdp, model, pol, rng);
    // Rebuild the trajectory from what was delivered, in-episode or at the end.
    std::vector<int> states(H, -1);
    for (const auto& o : ep.seen) states[o.index] = o.state;
    for (const auto& o : ep.flushed) states[o.index] = o.state;
    for (int h = 0; h < H; ++h) {
      counts.add_visit(h, states[h], ep.actions[h]);
      counts.add_delay(h, states[h], ep.actions[h], ep.inter_arrival[h]);
      if (h + 1 < H) counts.add_transition(h, states[h], ep.actions[h], states[h + 1]);
    }
    counts.end_episode();
    if (opt.observer) opt.observer(k, counts);
  }
  tr.wall_seconds = detail::elapsed(t0);
  return tr;
}

/// Confidence-set planning for the lossy channel with known rates, solved by
/// extended value iteration: every row picks the most favourable kernel in
/// an L1 ball around the estimate. Beliefs after missed steps chain several
/// estimated kernels; their radii add up along the chain.
class ExtendedPlanner {
 public:
  ExtendedPlanner(std::shared_ptr<const AugTopology> topo, const TabularMdp& known,
                  const MissingModel& model)
      : topo_(std::move(topo)), known_(&known), model_(&model) {}

  std::pair<ExecutablePolicy, AugValues> plan(const Counts& counts, const BonusConfig& cfg) const {
    const TabularMdp phat = estimate_kernel(counts, *known_);
    const int L = topo_->horizon(), S = known_->num_states(), A = known_->num_actions();
    const int H = known_->horizon();

    // Forward pass: estimated belief and accumulated radius of every state.
    std::vector<std::vector<std::vector<double>>> b(L);
    std::vector<std::vector<double>> rad(L);
    for (int h = 0; h < L; ++h) {
      b[h].resize(topo_->layers[h].size());
      rad[h].assign(topo_->layers[h].size(), 0.0);
    }
    for (std::uint32_t i : topo_->initial) {
      const AugState& tau = topo_->layers[0].states[i];
      b[0][i] = tau.observed() ? point(S, tau.last_seen)
                               : std::vector<double>(known_->initial_dist().begin(),
                                                     known_->initial_dist().end());
    }
    std::vector<double> q(S);
    for (int h = 0; h + 1 < L; ++h) {
      const AugLayer& layer = topo_->layers[h];
      for (std::size_t i = 0; i < layer.size(); ++i) {
        if (b[h][i].empty()) continue;
        for (int a = 0; a < A; ++a) {
          const double r2 = next_law(phat, counts, cfg, h, b[h][i], rad[h][i], a, q);
          const std::size_t r = i * A + a;
          for (auto k = layer.row_begin[r]; k < layer.row_begin[r + 1]; ++k) {
            const auto& e = layer.edges[k];
            if (e.observed >= 0) {
              b[h + 1][e.next] = point(S, e.observed);
            } else {
              b[h + 1][e.next] = q;
              rad[h + 1][e.next] = r2;
            }
          }
        }
      }
    }

    // Backward pass.
    ExecutablePolicy pol(topo_);
    AugValues out;
    out.v.resize(L);
    out.q.resize(L);
    std::vector<double> rew(S), vobs(S);
    for (int h = L - 1; h >= 0; --h) {
      const AugLayer& layer = topo_->layers[h];
      out.v[h].assign(layer.size(), 0.0);
      out.q[h].assign(layer.size() * A, 0.0);
      for (std::size_t i = 0; i < layer.size(); ++i) {
        if (b[h][i].empty()) continue;
        int best = 0;
        for (int a = 0; a < A; ++a) {
          for (int s = 0; s < S; ++s) rew[s] = known_->reward(h, s, a);
          double val = ball_max(b[h][i], rew, rad[h][i]);
          if (h + 1 < L) {
            const double r2 = next_law(phat, counts, cfg, h, b[h][i], rad[h][i], a, q);
            const double lam = model_->rate(h + 1);
            double vmiss = 0.0;
            std::fill(vobs.begin(), vobs.end(), 0.0);
            const std::size_t r = i * A + a;
            for (auto k = layer.row_begin[r]; k < layer.row_begin[r + 1]; ++k) {
              const auto& e = layer.edges[k];
              if (e.observed >= 0) {
                vobs[e.observed] = out.v[h + 1][e.next];
              } else {
                vmiss = out.v[h + 1][e.next];
              }
            }
            val += lam * ball_max(q, vobs, r2) + (1.0 - lam) * vmiss;
          }
          val = std::min(static_cast<double>(H), val);
          out.q[h][i * A + a] = val;
          if (val > out.q[h][i * A + best]) best = a;
        }
        out.v[h][i] = out.q[h][i * A + best];
        pol.set_deterministic(h, static_cast<std::uint32_t>(i), best);
      }
    }
    out.start.resize(topo_->initial.size());
    for (std::size_t k = 0; k < out.start.size(); ++k) out.start[k] = out.v[0][topo_->initial[k]];
    return {std::move(pol), std::move(out)};
  }

 private:
  static std::vector<double> point(int S, int s) {
    std::vector<double> p(S, 0.0);
    p[s] = 1.0;
    return p;
  }

  double next_law(const TabularMdp& phat, const Counts& counts, const BonusConfig& cfg, int h,
                  const std::vector<double>& b, double radius, int a, std::vector<double>& q) const {
    const int S = known_->num_states();
    std::fill(q.begin(), q.end(), 0.0);
    double r = radius;
    for (int s = 0; s < S; ++s) {
      if (b[s] == 0.0) continue;
      auto p = phat.kernel(h, s, a);
      for (int sn = 0; sn < S; ++sn) q[sn] += b[s] * p[sn];
      r += b[s] * confidence_set_radius(counts, cfg, h, s, a);
    }
    return std::min(2.0, r);
  }

  std::shared_ptr<const AugTopology> topo_;
  const TabularMdp* known_;
  const MissingModel* model_;
};

inline RegretTrace run_alg2(const TabularMdp& mdp, const MissingModel& model, const BonusConfig& cfg,
                            const LearnerOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const int H = mdp.horizon(), S = mdp.num_states(), A = mdp.num_actions();
  const AugMdp truth = build_aug(MissingDynamics(mdp, model), {opt.cap, true});
  const auto [star_pol, star] = optimal_aug(truth);
  const ExtendedPlanner planner(truth.topology, mdp, model);

  Counts counts(S, A, H);
  RngStreams rng = RngStreams::for_run(opt.seed);
  RegretTrace tr;
  tr.seed = opt.seed;
  for (int k = 1; k <= opt.episodes; ++k) {
    auto [pol, planned] = planner.plan(counts, cfg);
    planned.start_value = 0.0;
    for (std::size_t j = 0; j < planned.start.size(); ++j)
      planned.start_value += truth.initial_weight[j] * planned.start[j];
    const double vpi = evaluate_aug(truth, pol).start_value;
    detail::record(tr, k, star.start_value, vpi, planned.start_value,
                   detail::dominates(planned, star, truth));

    const MissingEpisode ep = play_episode_missing(mdp, model, pol, rng);
    for (int h = 0; h < H; ++h) {
      if (ep.mask[h]) counts.add_observed(h);
      if (h + 1 < H && ep.mask[h] && ep.mask[h + 1]) {
        counts.add_visit(h, ep.states[h], ep.actions[h]);
        counts.add_transition(h, ep.states[h], ep.actions[h], ep.states[h + 1]);
      }
    }
    counts.end_episode();
    if (opt.observer) opt.observer(k, counts);
  }
  tr.wall_seconds = detail::elapsed(t0);
  return tr;
}

/// Estimated lossy-channel model on a fixed topology: augmented kernels from
/// the augmented counts, rates from observed fractions, beliefs after a
/// missed step from the estimated kernel of the parent row.
inline AugMdp estimate_missing_aug(std::shared_ptr<const AugTopology> topo, const Counts& counts,
                                   const TabularMdp& known) {
  const int L = topo->horizon(), S = known.num_states(), A = known.num_actions();
  AugMdp aug;
  aug.prob.resize(L);
  aug.reward.resize(L);
  std::vector<std::vector<std::vector<double>>> b(L);
  for (int h = 0; h < L; ++h) b[h].resize(topo->layers[h].size());
  const double lam0 = estimate_rate(counts, 0);
  aug.initial_weight.resize(topo->initial.size());
  for (std::size_t k = 0; k < topo->initial.size(); ++k) {
    const AugState& tau = topo->layers[0].states[topo->initial[k]];
    auto& bel = b[0][topo->initial[k]];
    if (tau.observed()) {
      bel.assign(S, 0.0);
      bel[tau.last_seen] = 1.0;
      aug.initial_weight[k] = lam0 * known.initial_dist()[tau.last_seen];
    } else {
      bel.assign(known.initial_dist().begin(), known.initial_dist().end());
      aug.initial_weight[k] = 1.0 - lam0;
    }
  }
  std::vector<double> phat(S);
  for (int h = 0; h < L; ++h) {
    const AugLayer& layer = topo->layers[h];
    aug.reward[h].assign(layer.size() * A, 0.0);
    aug.prob[h].assign(layer.edges.size(), 0.0);
    const double lam = h + 1 < L ? estimate_rate(counts, h + 1) : 1.0;
    for (std::size_t i = 0; i < layer.size(); ++i) {
      const auto& bel = b[h][i];
      if (bel.empty()) continue;
      for (int a = 0; a < A; ++a) {
        const std::size_t r = i * A + a;
        for (int s = 0; s < S; ++s) aug.reward[h][r] += bel[s] * known.reward(h, s, a);
        if (h + 1 == L) continue;
        const long n = counts.aug_n(h, i, a);
        for (int sn = 0; sn < S; ++sn)
          phat[sn] = n == 0 ? 1.0 / S : static_cast<double>(counts.aug_next(h, i, a, sn)) / n;
        for (auto k = layer.row_begin[r]; k < layer.row_begin[r + 1]; ++k) {
          const auto& e = layer.edges[k];
          if (e.observed >= 0) {
            aug.prob[h][k] = lam * phat[e.observed];
            b[h + 1][e.next].assign(S, 0.0);
            b[h + 1][e.next][e.observed] = 1.0;
          } else {
            aug.prob[h][k] = 1.0 - lam;
            b[h + 1][e.next] = phat;
          }
        }
      }
    }
  }
  aug.topology = std::move(topo);
  return aug;
}

inline RegretTrace run_alg3(const TabularMdp& mdp, const MissingModel& model, const BonusConfig& cfg,
                            const LearnerOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const int H = mdp.horizon(), S = mdp.num_states(), A = mdp.num_actions();
  const AugMdp truth = build_aug(MissingDynamics(mdp, model), {opt.cap, true});
  const auto& topo = truth.topology;
  const auto [star_pol, star] = optimal_aug(truth);

  Counts counts(S, A, H);
  counts.attach_topology(*topo);
  RngStreams rng = RngStreams::for_run(opt.seed);
  RegretTrace tr;
  tr.seed = opt.seed;
  std::vector<std::vector<double>> bonus(H);
  for (int k = 1; k <= opt.episodes; ++k) {
    const AugMdp hat = estimate_missing_aug(topo, counts, mdp);
    for (int h = 0; h < H; ++h) {
      bonus[h].assign(topo->layers[h].size() * A, 0.0);
      for (std::size_t i = 0; i < topo->layers[h].size(); ++i)
        for (int a = 0; a < A; ++a) bonus[h][i * A + a] = bonus_missing(counts, cfg, h, i, a);
    }
    auto [pol, planned] = optimistic_vi(hat, bonus, H);
    // Report the planned value under the true start law.
    double vhat = 0.0;
    for (std::size_t j = 0; j < planned.start.size(); ++j)
      vhat += truth.initial_weight[j] * planned.start[j];
    const double vpi = evaluate_aug(truth, pol).start_value;
    detail::record(tr, k, star.start_value, vpi, vhat, detail::dominates(planned, star, truth));

    const MissingEpisode ep = play_episode_missing(mdp, model, pol, rng);
    for (int h = 0; h < H; ++h) {
      if (ep.mask[h]) counts.add_observed(h);
      if (h + 1 < H && ep.mask[h + 1]) {
        const auto i = topo->layers[h].find(ep.taus[h]);
        counts.add_aug(h, *i, ep.actions[h], ep.states[h + 1]);
      }
    }
    counts.end_episode();
    if (opt.observer) opt.observer(k, counts);
  }
  tr.wall_seconds = detail::elapsed(t0);
  return tr;
}

}  // namespace impobs
