#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "impobs/aug.hpp"
#include "impobs/channels.hpp"
#include "impobs/mdp.hpp"
#include "impobs/rng.hpp"

namespace impobs {

// ---------------------------------------------------------------------------
// Benchmark instances

/// Flat-Dirichlet draw on the probability simplex.
inline std::vector<double> random_simplex(int n, CounterRng& rng) {
  std::vector<double> x(n);
  double sum = 0.0;
  for (double& v : x) {
    v = -std::log(1.0 - rng.uniform());
    sum += v;
  }
  for (double& v : x) v /= sum;
  return x;
}

/// Kernels and the start law from the flat simplex, rewards uniform on [0,1].
inline TabularMdp random_mdp(int S, int A, int H, std::uint64_t seed) {
  CounterRng rng(seed, 0x5eed);
  TabularMdp mdp(S, A, H);
  for (int h = 0; h < H; ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) mdp.reward(h, s, a) = rng.uniform();
  for (int h = 0; h + 1 < H; ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) mdp.set_kernel(h, s, a, random_simplex(S, rng));
  auto mu = random_simplex(S, rng);
  std::copy(mu.begin(), mu.end(), mdp.initial_dist().begin());
  return mdp;
}

/// Every kernel row is a point mass; rewards uniform on [0,1].
inline TabularMdp random_deterministic_mdp(int S, int A, int H, std::uint64_t seed) {
  CounterRng rng(seed, 0xde7);
  TabularMdp mdp(S, A, H);
  for (int h = 0; h < H; ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) mdp.reward(h, s, a) = rng.uniform();
  for (int h = 0; h + 1 < H; ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        auto row = mdp.kernel(h, s, a);
        std::fill(row.begin(), row.end(), 0.0);
        row[static_cast<int>(rng.uniform() * S)] = 1.0;
      }
  auto mu = random_simplex(S, rng);
  std::copy(mu.begin(), mu.end(), mdp.initial_dist().begin());
  return mdp;
}

/// Random stochastic executable policy on every state of a topology.
inline ExecutablePolicy random_executable_policy(std::shared_ptr<const AugTopology> topo,
                                                 std::uint64_t seed) {
  CounterRng rng(seed, 0x9011c7);
  ExecutablePolicy pol(topo);
  for (int h = 0; h < topo->horizon(); ++h)
    for (std::uint32_t i = 0; i < topo->layers[h].size(); ++i) {
      auto d = random_simplex(topo->num_actions, rng);
      auto row = pol.at(h, i);
      std::copy(d.begin(), d.end(), row.begin());
    }
  return pol;
}

struct Fig2Instance {
  TabularMdp mdp;
  DelayModel delay_d;
  DelayModel delay_d_plus_1;
};

/// Two states, two actions. Transitions keep the state until step d, where
/// the next state is uniform whatever was played; the only reward is at step
/// d and pays 1 when the action index matches the state index.
inline Fig2Instance make_fig2_instance(int d, int H) {
  if (d <= 0 || d >= H) {
    throw ValidationError("fig2 instance needs 0 < d < H (d=" + std::to_string(d) +
                          ", H=" + std::to_string(H) + ")");
  }
  TabularMdp mdp(2, 2, H);
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a) mdp.reward(d, s, a) = (a == s) ? 1.0 : 0.0;
  for (int h = 0; h + 1 < H; ++h)
    for (int s = 0; s < 2; ++s)
      for (int a = 0; a < 2; ++a) {
        auto row = mdp.kernel(h, s, a);
        if (h == d) {
          row[0] = row[1] = 0.5;
        } else {
          row[0] = row[1] = 0.0;
          row[s] = 1.0;
        }
      }
  mdp.initial_dist()[0] = mdp.initial_dist()[1] = 0.5;
  const double point[] = {1.0};
  return {std::move(mdp), constant_delay(d, H), DelayModel::independent(H, point, d + 1)};
}

// ---------------------------------------------------------------------------
// Visitation measures

struct VisitationMeasure {
  std::vector<std::vector<double>> rho;  // [layer][state of the topology]

  double layer_mass(int h) const {
    double m = 0.0;
    for (double x : rho[h]) m += x;
    return m;
  }
};

/// Forward recursion of the state-occupancy law through the augmented chain.
inline VisitationMeasure visitation(const AugMdp& aug, const ExecutablePolicy& pol) {
  const int L = aug.horizon(), A = aug.num_actions();
  const bool same = pol.domain_ptr() == aug.topology;
  VisitationMeasure out;
  out.rho.resize(L);
  for (int h = 0; h < L; ++h) out.rho[h].assign(aug.topo().layers[h].size(), 0.0);
  for (std::size_t k = 0; k < aug.topo().initial.size(); ++k)
    out.rho[0][aug.topo().initial[k]] += aug.initial_weight[k];
  for (int h = 0; h + 1 < L; ++h) {
    const AugLayer& layer = aug.topo().layers[h];
    for (std::size_t i = 0; i < layer.size(); ++i) {
      const double m = out.rho[h][i];
      if (m == 0.0) continue;
      auto pi = same ? pol.at(h, static_cast<std::uint32_t>(i)) : pol.lookup(h, layer.states[i]);
      for (int a = 0; a < A; ++a) {
        if (pi[a] == 0.0) continue;
        const std::size_t r = i * A + a;
        for (auto k = layer.row_begin[r]; k < layer.row_begin[r + 1]; ++k)
          out.rho[h + 1][layer.edges[k].next] += m * pi[a] * aug.prob[h][k];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Latent-process enumeration (independent of the augmented construction)

namespace detail {

/// One latent world under delayed observations: the realised states and the
/// arrival step of each observation (capped at H, i.e. "after the episode").
struct DelayedWorld {
  double weight;
  std::vector<int> states;
  std::vector<int> arrival;
  std::vector<int> actions;
};

inline std::vector<DelayedWorld> initial_worlds(const TabularMdp& mdp, const DelayModel& model) {
  std::vector<DelayedWorld> out;
  const int H = mdp.horizon();
  for (int s = 0; s < mdp.num_states(); ++s) {
    const double w = mdp.initial_dist()[s];
    if (w <= 0.0) continue;
    out.push_back({w, {s}, {std::min(model.initial_delay(), H)}, {}});
  }
  return out;
}

/// Observation delivered at the current step (the last entry of arrival
/// refers to the current step), or -1.
inline int arriving(const DelayedWorld& w, int h) {
  for (std::size_t i = 0; i < w.arrival.size(); ++i)
    if (w.arrival[i] == h) return w.states[i];
  return -1;
}

inline void extend(const TabularMdp& mdp, const DelayModel& model, const DelayedWorld& w, int a,
                   double pa, std::vector<DelayedWorld>& out) {
  const int h = static_cast<int>(w.states.size()) - 1;
  const int H = mdp.horizon();
  const int s = w.states.back();
  auto kernel = mdp.kernel(h, s, a);
  auto pmf = model.pmf(h, s, a);
  for (int sn = 0; sn < mdp.num_states(); ++sn) {
    if (kernel[sn] <= 0.0) continue;
    for (std::size_t d = 0; d < pmf.size(); ++d) {
      if (pmf[d] <= 0.0) continue;
      DelayedWorld nw = w;
      nw.weight = w.weight * pa * kernel[sn] * pmf[d];
      nw.states.push_back(sn);
      nw.arrival.push_back(std::min(H, w.arrival.back() + 1 + static_cast<int>(d)));
      nw.actions.push_back(a);
      out.push_back(std::move(nw));
    }
  }
}

/// Observable history key of a world at step h (the last seen index, its
/// state, the actions since it, the steps since its arrival).
inline AugState observable(const DelayedWorld& w, int h) {
  int t = -1;
  for (int i = 0; i <= h; ++i)
    if (w.arrival[i] <= h) t = i;
  if (t < 0) return AugState{-1, h, std::vector<int>(w.actions.begin(), w.actions.begin() + h)};
  return AugState{w.states[t], h - w.arrival[t],
                  std::vector<int>(w.actions.begin() + t, w.actions.begin() + h)};
}

struct HistoryNode {
  std::vector<double> reward;              // per action, weighted by joint probability
  std::vector<std::vector<int>> children;  // per action
};

class HistoryTree {
 public:
  std::vector<HistoryNode> nodes;
  std::vector<int> roots;

  double expectimax() const {
    std::vector<double> memo(nodes.size(), -1.0);
    std::function<double(int)> value = [&](int n) {
      if (memo[n] >= 0.0) return memo[n];
      double best = -1.0;
      for (std::size_t a = 0; a < nodes[n].reward.size(); ++a) {
        double q = nodes[n].reward[a];
        for (int c : nodes[n].children[a]) q += value(c);
        best = std::max(best, q);
      }
      return memo[n] = best;
    };
    double v = 0.0;
    for (int r : roots) v += value(r);
    return v;
  }

  /// Literal enumeration of every deterministic assignment of actions to
  /// history nodes.
  double enumerate(int num_actions) const {
    const std::size_t n = nodes.size();
    std::vector<int> choice(n, 0);
    double best = -1.0;
    for (;;) {
      std::function<double(int)> value = [&](int k) {
        const int a = choice[k];
        double q = nodes[k].reward[a];
        for (int c : nodes[k].children[a]) q += value(c);
        return q;
      };
      double v = 0.0;
      for (int r : roots) v += value(r);
      best = std::max(best, v);
      std::size_t pos = 0;
      while (pos < n && ++choice[pos] == num_actions) choice[pos++] = 0;
      if (pos == n) break;
    }
    return best;
  }
};

}  // namespace detail

struct BruteForceOptions {
  std::size_t max_nodes = 1'000'000;
  std::size_t max_policies = 1'000'000;
};

struct BruteForceResult {
  double value = 0.0;
  std::size_t history_nodes = 0;
  bool enumerated = false;  // literal policy enumeration vs. expectimax over the same tree
};

namespace detail {

inline void check_tree(const HistoryTree& tree, const BruteForceOptions& opts) {
  if (tree.nodes.size() > opts.max_nodes) {
    throw std::length_error("instance too large for brute force: " +
                            std::to_string(tree.nodes.size()) + " history nodes");
  }
}

inline BruteForceResult solve_tree(const HistoryTree& tree, int A, const BruteForceOptions& opts) {
  BruteForceResult out;
  out.history_nodes = tree.nodes.size();
  const double count = std::pow(static_cast<double>(A), static_cast<double>(tree.nodes.size()));
  if (count <= static_cast<double>(opts.max_policies)) {
    out.value = tree.enumerate(A);
    out.enumerated = true;
  } else {
    out.value = tree.expectimax();
  }
  return out;
}

}  // namespace detail

/// Best history-dependent policy under delayed observations, found on the
/// tree of observable histories built from raw latent trajectories and
/// inter-arrival draws.
inline BruteForceResult brute_force_optimal_executable(const TabularMdp& mdp,
                                                       const DelayModel& model,
                                                       const BruteForceOptions& opts = {}) {
  using detail::DelayedWorld;
  const int H = mdp.horizon(), A = mdp.num_actions();
  detail::HistoryTree tree;
  std::function<int(std::vector<DelayedWorld>, int)> grow = [&](std::vector<DelayedWorld> worlds,
                                                                int h) -> int {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    detail::check_tree(tree, opts);
    std::vector<double> reward(A, 0.0);
    std::vector<std::vector<int>> children(A);
    for (int a = 0; a < A; ++a) {
      std::map<int, std::vector<DelayedWorld>> groups;
      for (const auto& w : worlds) {
        reward[a] += w.weight * mdp.reward(h, w.states.back(), a);
        if (h + 1 < H) {
          std::vector<DelayedWorld> next;
          detail::extend(mdp, model, w, a, 1.0, next);
          for (auto& nw : next) groups[detail::arriving(nw, h + 1)].push_back(std::move(nw));
        }
      }
      for (auto& [obs, g] : groups) children[a].push_back(grow(std::move(g), h + 1));
    }
    tree.nodes[id].reward = std::move(reward);
    tree.nodes[id].children = std::move(children);
    return id;
  };
  std::map<int, std::vector<DelayedWorld>> start;
  for (auto& w : detail::initial_worlds(mdp, model)) start[detail::arriving(w, 0)].push_back(w);
  for (auto& [obs, g] : start) tree.roots.push_back(grow(std::move(g), 0));
  return detail::solve_tree(tree, A, opts);
}

/// Same oracle for the lossy channel.
inline BruteForceResult brute_force_optimal_executable(const TabularMdp& mdp,
                                                       const MissingModel& model,
                                                       const BruteForceOptions& opts = {}) {
  const int H = mdp.horizon(), S = mdp.num_states(), A = mdp.num_actions();
  detail::HistoryTree tree;
  // Worlds at a node are summarised by the joint weight of each latent state.
  std::function<int(std::vector<double>, int)> grow = [&](std::vector<double> mass, int h) -> int {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    detail::check_tree(tree, opts);
    std::vector<double> reward(A, 0.0);
    std::vector<std::vector<int>> children(A);
    for (int a = 0; a < A; ++a) {
      std::vector<double> next(S, 0.0);
      for (int s = 0; s < S; ++s) {
        reward[a] += mass[s] * mdp.reward(h, s, a);
        if (h + 1 < H && mass[s] > 0.0) {
          auto p = mdp.kernel(h, s, a);
          for (int sn = 0; sn < S; ++sn) next[sn] += mass[s] * p[sn];
        }
      }
      if (h + 1 >= H) continue;
      const double lam = model.rate(h + 1);
      for (int sn = 0; sn < S; ++sn) {
        if (next[sn] * lam <= 0.0) continue;
        std::vector<double> seen(S, 0.0);
        seen[sn] = next[sn] * lam;
        children[a].push_back(grow(std::move(seen), h + 1));
      }
      if (lam < 1.0) {
        std::vector<double> lost = next;
        for (double& x : lost) x *= 1.0 - lam;
        children[a].push_back(grow(std::move(lost), h + 1));
      }
    }
    tree.nodes[id].reward = std::move(reward);
    tree.nodes[id].children = std::move(children);
    return id;
  };
  auto mu = mdp.initial_dist();
  const double lam0 = model.rate(0);
  for (int s = 0; s < S; ++s) {
    if (mu[s] * lam0 <= 0.0) continue;
    std::vector<double> seen(S, 0.0);
    seen[s] = mu[s] * lam0;
    tree.roots.push_back(grow(std::move(seen), 0));
  }
  if (lam0 < 1.0) {
    std::vector<double> lost(mu.begin(), mu.end());
    for (double& x : lost) x *= 1.0 - lam0;
    tree.roots.push_back(grow(std::move(lost), 0));
  }
  return detail::solve_tree(tree, A, opts);
}

/// Law of the observable history at every step when a Markov policy acts on
/// the latent state while observations arrive with delay.
inline std::vector<std::unordered_map<AugState, double, AugStateHash>> latent_visitation(
    const TabularMdp& mdp, const DelayModel& model, const MarkovPolicy& pol) {
  const int H = mdp.horizon(), A = mdp.num_actions();
  std::vector<std::unordered_map<AugState, double, AugStateHash>> rho(H);
  auto worlds = detail::initial_worlds(mdp, model);
  for (int h = 0; h < H; ++h) {
    for (const auto& w : worlds) rho[h][detail::observable(w, h)] += w.weight;
    if (h + 1 == H) break;
    std::vector<detail::DelayedWorld> next;
    for (const auto& w : worlds) {
      auto pi = pol.at(h, w.states.back());
      for (int a = 0; a < A; ++a)
        if (pi[a] > 0.0) detail::extend(mdp, model, w, a, pi[a], next);
    }
    worlds = std::move(next);
  }
  return rho;
}

// ---------------------------------------------------------------------------
// Performance gap of executable policies

struct GapReport {
  double exact_gap = 0.0;
  double bound = 0.0;
  std::vector<double> e1;  // per step
  std::vector<double> e2;  // per step, total variation of the visitation laws
  double v_nodelay = 0.0;
  double v_delay = 0.0;
};

/// Exact gap between the full-information optimum and the best executable
/// policy, with the per-step convexity term (e1) and visitation mismatch
/// (e2) whose sum sum_h e1 + 2 e2 bounds it. Start values are averaged over
/// the initial distribution.
inline GapReport gap_bound(const TabularMdp& mdp, const DelayModel& model,
                           const BuildOptions& opts = {}) {
  const int H = mdp.horizon(), S = mdp.num_states(), A = mdp.num_actions();
  auto [pi_nd, vt] = value_iteration(mdp);
  auto aug = build_delayed_aug(mdp, model, opts);
  auto [pi_d, vals] = optimal_aug(aug);

  GapReport rep;
  rep.v_nodelay = vt.expected_start_value(mdp.initial_dist());
  rep.v_delay = vals.start_value;
  rep.exact_gap = rep.v_nodelay - rep.v_delay;

  auto rho_d = visitation(aug, pi_d);
  auto rho_nd = latent_visitation(mdp, model, pi_nd);
  rep.e1.assign(H, 0.0);
  rep.e2.assign(H, 0.0);
  for (int h = 0; h < H; ++h) {
    const AugLayer& layer = aug.topo().layers[h];
    double l1 = 0.0;
    for (std::size_t i = 0; i < layer.size(); ++i) {
      const AugState& tau = layer.states[i];
      const double pd = rho_d.rho[h][i];
      auto it = rho_nd[h].find(tau);
      const double pn = it == rho_nd[h].end() ? 0.0 : it->second;
      l1 += std::abs(pd - pn);
      const double overlap = std::min(pd, pn);
      if (overlap <= 0.0) continue;
      auto b = belief(mdp, tau, h);
      double mean_of_max = 0.0;
      for (int s = 0; s < S; ++s) {
        double m = mdp.reward(h, s, 0);
        for (int a = 1; a < A; ++a) m = std::max(m, mdp.reward(h, s, a));
        mean_of_max += b[s] * m;
      }
      double max_of_mean = -1.0;
      for (int a = 0; a < A; ++a) {
        double m = 0.0;
        for (int s = 0; s < S; ++s) m += b[s] * mdp.reward(h, s, a);
        max_of_mean = std::max(max_of_mean, m);
      }
      rep.e1[h] += (mean_of_max - max_of_mean) * overlap;
    }
    for (const auto& [tau, pn] : rho_nd[h])
      if (!layer.find(tau)) l1 += pn;
    rep.e2[h] = 0.5 * l1;
    rep.bound += rep.e1[h] + 2.0 * rep.e2[h];
  }
  return rep;
}

}  // namespace impobs
