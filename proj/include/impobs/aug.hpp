#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "impobs/channels.hpp"
#include "impobs/mdp.hpp"
#include "impobs/rng.hpp"

namespace impobs {

/// Observable history: the last state seen, the actions taken since that
/// state's step, and the number of steps since it arrived. last_seen == -1
/// means no observation has arrived yet; the window then starts at step 0.
struct AugState {
  int last_seen = -1;
  int staleness = 0;
  std::vector<int> window;

  bool observed() const { return last_seen >= 0; }
  bool operator==(const AugState&) const = default;
};

struct AugStateHash {
  std::size_t operator()(const AugState& s) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::uint64_t x) {
      h ^= x + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    };
    feed(static_cast<std::uint64_t>(s.last_seen + 1));
    feed(static_cast<std::uint64_t>(s.staleness));
    feed(s.window.size());
    for (int a : s.window) feed(static_cast<std::uint64_t>(a));
    return static_cast<std::size_t>(h);
  }
};

enum class AugVariant { delayed_expected, delayed_past, missing };

inline const char* to_string(AugVariant v) {
  switch (v) {
    case AugVariant::delayed_expected: return "delayed-expected";
    case AugVariant::delayed_past: return "delayed-past";
    case AugVariant::missing: return "missing";
  }
  return "?";
}

/// Thrown when enumeration would exceed the configured state-action budget.
class AugCapExceeded : public std::runtime_error {
 public:
  AugCapExceeded(int layer, std::size_t size, std::size_t cap)
      : std::runtime_error("augmented MDP exceeds cap: layer " + std::to_string(layer) +
                           " reaches " + std::to_string(size) + " state-actions (cap " +
                           std::to_string(cap) + ")"),
        layer_(layer), size_(size) {}
  int layer() const { return layer_; }
  std::size_t size() const { return size_; }

 private:
  int layer_;
  std::size_t size_;
};

struct AugEdge {
  std::uint32_t next;
  std::int32_t observed;  // newly revealed state, -1 when nothing arrives
};

struct AugLayer {
  std::vector<AugState> states;
  std::unordered_map<AugState, std::uint32_t, AugStateHash> lookup;
  std::vector<std::uint32_t> row_begin;  // CSR over (state * A + action)
  std::vector<AugEdge> edges;

  std::optional<std::uint32_t> find(const AugState& s) const {
    auto it = lookup.find(s);
    if (it == lookup.end()) return std::nullopt;
    return it->second;
  }
  std::size_t size() const { return states.size(); }
};

/// Interned layers and sparse successor structure; shared by every weighting
/// of the same state space (truth, per-episode estimates).
struct AugTopology {
  AugVariant variant = AugVariant::delayed_expected;
  int num_states = 0;
  int num_actions = 0;
  int base_horizon = 0;
  std::vector<AugLayer> layers;
  std::vector<std::uint32_t> initial;  // layer-0 start states

  int horizon() const { return static_cast<int>(layers.size()); }
  std::size_t state_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.size();
    return n;
  }
  /// Index of the observation step of `tau` at augmented step h.
  int seen_step(int h, const AugState& tau) const {
    return std::min(h, base_horizon) - static_cast<int>(tau.window.size());
  }
};

struct AugMdp {
  std::shared_ptr<const AugTopology> topology;
  std::vector<std::vector<double>> prob;    // [layer][edge]
  std::vector<std::vector<double>> reward;  // [layer][state * A + a]
  std::vector<double> initial_weight;       // aligned with topology->initial

  const AugTopology& topo() const { return *topology; }
  int horizon() const { return topology->horizon(); }
  int num_actions() const { return topology->num_actions; }
  AugVariant variant() const { return topology->variant; }
};

struct BuildOptions {
  std::size_t cap = 2'000'000;  // total augmented state-actions
  /// Keep zero-probability successors so the structure covers every history
  /// that any model on the same (S, A, H) could reach.
  bool keep_zero = false;
};

struct Successor {
  int observed;
  double prob;
};

/// A provider of augmented dynamics: rows in a fixed canonical order
/// (arrivals by state index, then the no-arrival branch).
template <class D>
concept AugDynamics = requires(const D& d, int h, const AugState& tau, int a, int obs,
                               std::vector<Successor>& out) {
  { d.variant() } -> std::same_as<AugVariant>;
  { d.num_states() } -> std::convertible_to<int>;
  { d.num_actions() } -> std::convertible_to<int>;
  { d.base_horizon() } -> std::convertible_to<int>;
  { d.layer_count() } -> std::convertible_to<int>;
  { d.initial() } -> std::same_as<std::vector<std::pair<AugState, double>>>;
  d.row(h, tau, a, out);
  { d.successor(h, tau, a, obs) } -> std::same_as<AugState>;
  { d.reward(h, tau, a) } -> std::convertible_to<double>;
};

// ---------------------------------------------------------------------------
// Hazard rate and belief

/// P(Delta = delta | Delta >= delta) for the step-h law at (s, a).
inline double theta_delay(const DelayModel& model, int h, int s, int a, int delta) {
  auto p = model.pmf(h, s, a);
  if (delta < 0 || delta >= static_cast<int>(p.size())) {
    throw std::out_of_range("staleness unreachable: " + std::to_string(delta));
  }
  double tail = 0.0;
  for (std::size_t d = delta; d < p.size(); ++d) tail += p[d];
  if (tail <= 1e-15) throw std::domain_error("staleness unreachable: " + std::to_string(delta));
  return std::min(1.0, p[delta] / tail);
}

/// Like theta_delay, but an unreachable staleness reports certain arrival.
inline double theta_delay_or_one(const DelayModel& model, int h, int s, int a, int delta) {
  auto p = model.pmf(h, s, a);
  if (delta >= static_cast<int>(p.size())) return 1.0;
  double tail = 0.0;
  for (std::size_t d = delta; d < p.size(); ++d) tail += p[d];
  if (tail <= 1e-15) return 1.0;
  return std::min(1.0, p[delta] / tail);
}

/// Law of the latent state at step h given the observable history.
inline std::vector<double> belief(const TabularMdp& mdp, const AugState& tau, int h) {
  const int len = static_cast<int>(tau.window.size());
  if (len > h) throw std::invalid_argument("belief: window longer than elapsed steps");
  if (!tau.observed()) {
    if (len != h) throw std::invalid_argument("belief: unobserved history must span all steps");
    return push_forward(mdp, 0, mdp.initial_dist(), tau.window);
  }
  return multi_step_kernel(mdp, h - len, tau.last_seen, tau.window);
}

// ---------------------------------------------------------------------------
// Dynamics providers

/// Delayed observations; `past_reward` selects the 2H-horizon variant whose
/// reward is paid when the corresponding observation arrives.
class DelayedDynamics {
 public:
  DelayedDynamics(const TabularMdp& mdp, const DelayModel& model, bool past_reward,
                  bool lenient = false)
      : mdp_(&mdp), model_(&model), past_(past_reward), lenient_(lenient) {
    if (model.horizon() != mdp.horizon()) {
      throw std::invalid_argument("delay model horizon differs from MDP horizon");
    }
  }

  AugVariant variant() const {
    return past_ ? AugVariant::delayed_past : AugVariant::delayed_expected;
  }
  int num_states() const { return mdp_->num_states(); }
  int num_actions() const { return mdp_->num_actions(); }
  int base_horizon() const { return mdp_->horizon(); }
  int layer_count() const { return past_ ? 2 * mdp_->horizon() : mdp_->horizon(); }

  std::vector<std::pair<AugState, double>> initial() const {
    std::vector<std::pair<AugState, double>> out;
    if (model_->initial_delay() > 0) {
      out.push_back({AugState{-1, 0, {}}, 1.0});
    } else {
      auto mu = mdp_->initial_dist();
      for (int s = 0; s < num_states(); ++s) out.push_back({AugState{s, 0, {}}, mu[s]});
    }
    return out;
  }

  double hazard(int t, int s, int a, int delta) const {
    return lenient_ ? theta_delay_or_one(*model_, t, s, a, delta)
                    : theta_delay(*model_, t, s, a, delta);
  }

  void row(int h, const AugState& tau, int a, std::vector<Successor>& out) const {
    out.clear();
    const int S = num_states(), H = base_horizon();
    if (!tau.observed()) {
      // The first observation lands at step d_0; an initial delay of H defers
      // it to the settling steps of the past-reward variant.
      if (h + 1 == model_->initial_delay() || (past_ && h >= H - 1)) {
        auto mu = mdp_->initial_dist();
        for (int s = 0; s < S; ++s) out.push_back({s, mu[s]});
      } else {
        out.push_back({-1, 1.0});
      }
      return;
    }
    const int t = std::min(h, H) - static_cast<int>(tau.window.size());
    const int at = tau.window.empty() ? a : tau.window.front();
    if (h >= H - 1) {
      // After the last real step the pending observations arrive one per step.
      if (t < H - 1) {
        auto p = mdp_->kernel(t, tau.last_seen, at);
        for (int s = 0; s < S; ++s) out.push_back({s, p[s]});
      } else {
        out.push_back({-1, 1.0});
      }
      return;
    }
    const double theta = hazard(t, tau.last_seen, at, tau.staleness);
    auto p = mdp_->kernel(t, tau.last_seen, at);
    for (int s = 0; s < S; ++s) out.push_back({s, theta * p[s]});
    out.push_back({-1, 1.0 - theta});
  }

  AugState successor(int h, const AugState& tau, int a, int obs) const {
    std::vector<int> full = tau.window;
    if (h <= base_horizon() - 1) full.push_back(a);
    if (obs >= 0) {
      if (tau.observed()) full.erase(full.begin());
      return AugState{obs, 0, std::move(full)};
    }
    return AugState{tau.last_seen, tau.staleness + 1, std::move(full)};
  }

  double reward(int h, const AugState& tau, int a) const {
    if (past_) {
      if (!tau.observed() || tau.staleness != 0) return 0.0;
      const int t = std::min(h, base_horizon()) - static_cast<int>(tau.window.size());
      const int at = tau.window.empty() ? a : tau.window.front();
      return mdp_->reward(t, tau.last_seen, at);
    }
    auto b = belief(*mdp_, tau, h);
    double r = 0.0;
    for (int s = 0; s < num_states(); ++s) r += b[s] * mdp_->reward(h, s, a);
    return r;
  }

  const TabularMdp& mdp() const { return *mdp_; }
  const DelayModel& model() const { return *model_; }

 private:
  const TabularMdp* mdp_;
  const DelayModel* model_;
  bool past_;
  bool lenient_;
};

/// Missing observations: the step-(h+1) state is delivered with probability
/// lambda[h+1] and otherwise lost for good.
class MissingDynamics {
 public:
  MissingDynamics(const TabularMdp& mdp, const MissingModel& model) : mdp_(&mdp), model_(&model) {
    if (model.horizon() != mdp.horizon()) {
      throw std::invalid_argument("missing model horizon differs from MDP horizon");
    }
  }

  AugVariant variant() const { return AugVariant::missing; }
  int num_states() const { return mdp_->num_states(); }
  int num_actions() const { return mdp_->num_actions(); }
  int base_horizon() const { return mdp_->horizon(); }
  int layer_count() const { return mdp_->horizon(); }

  std::vector<std::pair<AugState, double>> initial() const {
    std::vector<std::pair<AugState, double>> out;
    const double lam = model_->rate(0);
    auto mu = mdp_->initial_dist();
    for (int s = 0; s < num_states(); ++s) out.push_back({AugState{s, 0, {}}, lam * mu[s]});
    out.push_back({AugState{-1, 0, {}}, 1.0 - lam});
    return out;
  }

  void row(int h, const AugState& tau, int a, std::vector<Successor>& out) const {
    out.clear();
    const double lam = model_->rate(h + 1);
    auto b = belief(*mdp_, tau, h);
    const int S = num_states();
    std::vector<double> next(S, 0.0);
    for (int s = 0; s < S; ++s) {
      if (b[s] == 0.0) continue;
      auto p = mdp_->kernel(h, s, a);
      for (int sn = 0; sn < S; ++sn) next[sn] += b[s] * p[sn];
    }
    for (int s = 0; s < S; ++s) out.push_back({s, lam * next[s]});
    out.push_back({-1, 1.0 - lam});
  }

  AugState successor(int /*h*/, const AugState& tau, int a, int obs) const {
    return missing_successor(tau, a, obs);
  }

  static AugState missing_successor(const AugState& tau, int a, int obs) {
    if (obs >= 0) return AugState{obs, 0, {}};
    std::vector<int> full = tau.window;
    full.push_back(a);
    const int len = static_cast<int>(full.size());
    return AugState{tau.last_seen, len, std::move(full)};
  }

  double reward(int h, const AugState& tau, int a) const {
    auto b = belief(*mdp_, tau, h);
    double r = 0.0;
    for (int s = 0; s < num_states(); ++s) r += b[s] * mdp_->reward(h, s, a);
    return r;
  }

 private:
  const TabularMdp* mdp_;
  const MissingModel* model_;
};

// ---------------------------------------------------------------------------
// Construction

namespace detail {

inline std::uint32_t intern(AugLayer& layer, const AugState& s) {
  auto [it, inserted] = layer.lookup.try_emplace(s, static_cast<std::uint32_t>(layer.states.size()));
  if (inserted) layer.states.push_back(s);
  return it->second;
}

// With A = 1 the windows collapse but staleness still varies, so 2^H stands in for A^H.
inline double aug_size_bound(int H, int S, int A) {
  return 2.0 * H * S * std::pow(static_cast<double>(std::max(A, 2)), H);
}

}  // namespace detail

/// Enumerates the augmented layers reachable from the start states and
/// weights them with `dyn`.
template <AugDynamics D>
AugMdp build_aug(const D& dyn, const BuildOptions& opts = {}) {
  auto topo = std::make_shared<AugTopology>();
  topo->variant = dyn.variant();
  topo->num_states = dyn.num_states();
  topo->num_actions = dyn.num_actions();
  topo->base_horizon = dyn.base_horizon();
  const int L = dyn.layer_count();
  const int A = dyn.num_actions();
  topo->layers.resize(L);

  AugMdp aug;
  aug.prob.resize(L);
  aug.reward.resize(L);

  for (const auto& [s, w] : dyn.initial()) {
    if (w <= 0.0 && !opts.keep_zero) continue;
    const auto before = topo->layers[0].size();
    const auto idx = detail::intern(topo->layers[0], s);
    if (topo->layers[0].size() > before) {
      topo->initial.push_back(idx);
      aug.initial_weight.push_back(w);
    }
  }

  std::size_t total = 0;
  std::vector<Successor> row;
  for (int h = 0; h < L; ++h) {
    AugLayer& layer = topo->layers[h];
    total += layer.size() * static_cast<std::size_t>(A);
    if (total > opts.cap) throw AugCapExceeded(h, layer.size() * static_cast<std::size_t>(A), opts.cap);
    auto& rew = aug.reward[h];
    rew.resize(layer.size() * A);
    layer.row_begin.assign(1, 0);
    if (h + 1 == L) {
      for (std::size_t i = 0; i < layer.size(); ++i)
        for (int a = 0; a < A; ++a) {
          rew[i * A + a] = dyn.reward(h, layer.states[i], a);
          layer.row_begin.push_back(0);
        }
      continue;
    }
    AugLayer& next = topo->layers[h + 1];
    auto& pr = aug.prob[h];
    for (std::size_t i = 0; i < layer.size(); ++i) {
      const AugState& tau = layer.states[i];
      for (int a = 0; a < A; ++a) {
        rew[i * A + a] = dyn.reward(h, tau, a);
        dyn.row(h, tau, a, row);
        for (const auto& succ : row) {
          if (succ.prob <= 0.0 && !opts.keep_zero) continue;
          const auto j = detail::intern(next, dyn.successor(h, tau, a, succ.observed));
          layer.edges.push_back({j, succ.observed});
          pr.push_back(succ.prob);
        }
        layer.row_begin.push_back(static_cast<std::uint32_t>(layer.edges.size()));
      }
    }
  }
  if (static_cast<double>(topo->state_count()) >
      detail::aug_size_bound(dyn.base_horizon(), dyn.num_states(), A) + 1.0) {
    throw std::logic_error("augmented state count exceeds 2HSA^H");
  }
  aug.topology = std::move(topo);
  return aug;
}

/// Reweights an existing topology with new dynamics. Every edge must be
/// produced by `dyn` (guaranteed when the topology was built with keep_zero).
template <AugDynamics D>
AugMdp reweight_aug(std::shared_ptr<const AugTopology> topo, const D& dyn) {
  AugMdp aug;
  const int L = topo->horizon(), A = topo->num_actions;
  aug.prob.resize(L);
  aug.reward.resize(L);
  std::vector<Successor> row;
  for (int h = 0; h < L; ++h) {
    const AugLayer& layer = topo->layers[h];
    auto& rew = aug.reward[h];
    rew.resize(layer.size() * A);
    auto& pr = aug.prob[h];
    pr.assign(layer.edges.size(), 0.0);
    for (std::size_t i = 0; i < layer.size(); ++i) {
      const AugState& tau = layer.states[i];
      for (int a = 0; a < A; ++a) {
        const std::size_t r = i * A + a;
        rew[r] = dyn.reward(h, tau, a);
        const auto b = layer.row_begin[r], e = layer.row_begin[r + 1];
        if (b == e) continue;
        dyn.row(h, tau, a, row);
        if (row.size() == e - b) {
          for (auto k = b; k < e; ++k) pr[k] = row[k - b].prob;
        } else {
          for (auto k = b; k < e; ++k)
            for (const auto& succ : row)
              if (succ.observed == layer.edges[k].observed) pr[k] = succ.prob;
        }
      }
    }
  }
  auto init = dyn.initial();
  aug.initial_weight.assign(topo->initial.size(), 0.0);
  for (std::size_t k = 0; k < topo->initial.size(); ++k) {
    const AugState& s = topo->layers[0].states[topo->initial[k]];
    for (const auto& [st, w] : init)
      if (st == s) aug.initial_weight[k] = w;
  }
  aug.topology = std::move(topo);
  return aug;
}

inline AugMdp build_delayed_aug(const TabularMdp& mdp, const DelayModel& model,
                                const BuildOptions& opts = {}) {
  return build_aug(DelayedDynamics(mdp, model, false, opts.keep_zero), opts);
}

inline AugMdp build_delayed_aug_past(const TabularMdp& mdp, const DelayModel& model,
                                     const BuildOptions& opts = {}) {
  return build_aug(DelayedDynamics(mdp, model, true, opts.keep_zero), opts);
}

inline AugMdp build_missing_aug(const TabularMdp& mdp, const MissingModel& model,
                                const BuildOptions& opts = {}) {
  return build_aug(MissingDynamics(mdp, model), opts);
}

// ---------------------------------------------------------------------------
// Executable policies and exact evaluation

/// Action distributions over the augmented states of a topology. Lookups by
/// AugState work across topologies that share the state encoding.
class ExecutablePolicy {
 public:
  ExecutablePolicy() = default;
  explicit ExecutablePolicy(std::shared_ptr<const AugTopology> domain)
      : domain_(std::move(domain)) {
    dist_.resize(domain_->horizon());
    const int A = domain_->num_actions;
    for (int h = 0; h < domain_->horizon(); ++h)
      dist_[h].assign(domain_->layers[h].size() * A, 1.0 / A);
  }

  const AugTopology& domain() const { return *domain_; }
  const std::shared_ptr<const AugTopology>& domain_ptr() const { return domain_; }
  int layer_count() const { return static_cast<int>(dist_.size()); }
  int num_actions() const { return domain_->num_actions; }

  std::span<const double> at(int h, std::uint32_t i) const {
    const auto A = static_cast<std::size_t>(num_actions());
    return {dist_[h].data() + i * A, A};
  }
  std::span<double> at(int h, std::uint32_t i) {
    const auto A = static_cast<std::size_t>(num_actions());
    return {dist_[h].data() + i * A, A};
  }

  void set_deterministic(int h, std::uint32_t i, int a) {
    auto row = at(h, i);
    std::fill(row.begin(), row.end(), 0.0);
    row[a] = 1.0;
  }

  std::optional<std::span<const double>> find(int h, const AugState& tau) const {
    if (h < 0 || h >= layer_count()) return std::nullopt;
    auto i = domain_->layers[h].find(tau);
    if (!i) return std::nullopt;
    return at(h, *i);
  }

  std::span<const double> lookup(int h, const AugState& tau) const {
    auto d = find(h, tau);
    if (!d) {
      throw std::out_of_range("executable policy undefined at step " + std::to_string(h) +
                              " for an observed history");
    }
    return *d;
  }

  /// Deterministic rows return their action without consuming randomness.
  int act(int h, const AugState& tau, CounterRng& rng) const {
    auto d = lookup(h, tau);
    for (std::size_t a = 0; a < d.size(); ++a)
      if (d[a] == 1.0) return static_cast<int>(a);
    return sample_index(d, rng);
  }

 private:
  std::shared_ptr<const AugTopology> domain_;
  std::vector<std::vector<double>> dist_;
};

struct AugValues {
  std::vector<std::vector<double>> v;  // [layer][state]
  std::vector<std::vector<double>> q;  // [layer][state * A + a]
  std::vector<double> start;           // aligned with topology->initial
  double start_value = 0.0;            // start values averaged over the start weights
};

namespace detail {

inline double backup(const AugMdp& aug, const std::vector<double>& vnext, int h, std::size_t r) {
  const AugLayer& layer = aug.topo().layers[h];
  double acc = 0.0;
  for (auto k = layer.row_begin[r]; k < layer.row_begin[r + 1]; ++k)
    acc += aug.prob[h][k] * vnext[layer.edges[k].next];
  return acc;
}

inline void finish_start(const AugMdp& aug, AugValues& out) {
  out.start.resize(aug.topo().initial.size());
  out.start_value = 0.0;
  for (std::size_t k = 0; k < out.start.size(); ++k) {
    out.start[k] = out.v[0][aug.topo().initial[k]];
    out.start_value += aug.initial_weight[k] * out.start[k];
  }
}

}  // namespace detail

/// Exact backward induction for a fixed executable policy. Layers beyond the
/// policy's own horizon play `beyond_action` (the past-reward variant's
/// steps after H, where actions are irrelevant).
inline AugValues evaluate_aug(const AugMdp& aug, const ExecutablePolicy& pol, int beyond_action = 0) {
  const int L = aug.horizon(), A = aug.num_actions();
  const bool same = pol.domain_ptr() == aug.topology;
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
      std::span<const double> pi;
      std::vector<double> dummy;
      if (h >= pol.layer_count()) {
        dummy.assign(A, 0.0);
        dummy[beyond_action] = 1.0;
        pi = dummy;
      } else if (same) {
        pi = pol.at(h, static_cast<std::uint32_t>(i));
      } else {
        pi = pol.lookup(h, layer.states[i]);
      }
      double v = 0.0;
      for (int a = 0; a < A; ++a) {
        const std::size_t r = i * A + a;
        double q = aug.reward[h][r];
        if (h + 1 < L) q += detail::backup(aug, vnext, h, r);
        out.q[h][r] = q;
        v += pi[a] * q;
      }
      out.v[h][i] = v;
    }
  }
  detail::finish_start(aug, out);
  return out;
}

/// Backward induction with a max over actions (ties to the lowest index).
inline std::pair<ExecutablePolicy, AugValues> optimal_aug(const AugMdp& aug) {
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
        double q = aug.reward[h][r];
        if (h + 1 < L) q += detail::backup(aug, vnext, h, r);
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

/// Lifts a Markov policy into the augmented space of a fully observed
/// process (every state has an empty window).
inline ExecutablePolicy lift_markov(const MarkovPolicy& mp, std::shared_ptr<const AugTopology> topo) {
  ExecutablePolicy pol(topo);
  for (int h = 0; h < topo->horizon() && h < mp.horizon(); ++h) {
    const AugLayer& layer = topo->layers[h];
    for (std::size_t i = 0; i < layer.size(); ++i) {
      const AugState& tau = layer.states[i];
      if (!tau.observed() || !tau.window.empty()) {
        throw std::invalid_argument("lift_markov: history is not a fully observed state");
      }
      auto src = mp.at(h, tau.last_seen);
      auto dst = pol.at(h, static_cast<std::uint32_t>(i));
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  return pol;
}

}  // namespace impobs
