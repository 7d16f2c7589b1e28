#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <vector>

#include "impobs/aug.hpp"
#include "impobs/channels.hpp"
#include "impobs/mdp.hpp"
#include "impobs/rng.hpp"

namespace impobs {

/// A revealed (state, reward) pair of step `index`.
struct Observation {
  int index = -1;
  int state = -1;
  double reward = 0.0;

  bool operator==(const Observation&) const = default;
};

/// End-of-episode return of everything the agent has not seen, plus the
/// inter-arrival draws of the whole episode.
struct Flush {
  std::vector<Observation> pending;
  std::vector<int> inter_arrival;
};

/// Latent side of a delayed episode. The agent interacts only through
/// poll/step/flush; the trajectory accessors are for the harness.
class DelayedEnvironment {
 public:
  DelayedEnvironment(const TabularMdp& mdp, const DelayModel& model, RngStreams& rng)
      : mdp_(&mdp), model_(&model), rng_(&rng) {}

  int horizon() const { return mdp_->horizon(); }

  void reset() {
    const int H = horizon();
    states_.assign(1, sample_index(mdp_->initial_dist(), rng_->transitions));
    actions_.clear();
    rewards_.clear();
    inter_.clear();
    arrival_.assign(1, std::min(model_->initial_delay(), H));
    delivered_.assign(H, false);
    h_ = 0;
  }

  /// Observation arriving at the current step, if any (at most one per step).
  /// A state seen at its own step comes with reward -1: the reward is drawn
  /// only once the action is taken.
  std::optional<Observation> poll() {
    for (int i = 0; i < static_cast<int>(arrival_.size()); ++i) {
      if (arrival_[i] != h_ || delivered_[i]) continue;
      delivered_[i] = true;
      const double r = i < static_cast<int>(rewards_.size()) ? rewards_[i] : -1.0;
      return Observation{i, states_[i], r};
    }
    return std::nullopt;
  }

  void step(int a) {
    const int h = h_, H = horizon();
    if (h >= H) throw std::logic_error("step past the horizon");
    const int s = states_.back();
    actions_.push_back(a);
    rewards_.push_back(rng_->rewards.bernoulli(mdp_->reward(h, s, a)) ? 1.0 : 0.0);
    const int delta = sample_index(model_->pmf(h, s, a), rng_->delays);
    inter_.push_back(delta);
    if (h + 1 < H) {
      states_.push_back(sample_index(mdp_->kernel(h, s, a), rng_->transitions));
      arrival_.push_back(std::min(H, arrival_.back() + 1 + delta));
    }
    ++h_;
  }

  Flush flush() {
    Flush out;
    for (int i = 0; i < horizon(); ++i)
      if (!delivered_[i]) {
        out.pending.push_back({i, states_[i], rewards_[i]});
        delivered_[i] = true;
      }
    out.inter_arrival = inter_;
    return out;
  }

  const std::vector<int>& states() const { return states_; }
  const std::vector<int>& actions() const { return actions_; }
  const std::vector<double>& rewards() const { return rewards_; }
  const std::vector<int>& arrival_steps() const { return arrival_; }

 private:
  const TabularMdp* mdp_;
  const DelayModel* model_;
  RngStreams* rng_;
  std::vector<int> states_, actions_, inter_, arrival_;
  std::vector<double> rewards_;
  std::vector<bool> delivered_;
  int h_ = 0;
};

/// Lossy channel: at every step the agent either receives (s_h, r_h) or is
/// told that the observation is missing.
class MissingEnvironment {
 public:
  MissingEnvironment(const TabularMdp& mdp, const MissingModel& model, RngStreams& rng)
      : mdp_(&mdp), model_(&model), rng_(&rng) {}

  int horizon() const { return mdp_->horizon(); }

  void reset() {
    states_.assign(1, sample_index(mdp_->initial_dist(), rng_->transitions));
    actions_.clear();
    rewards_.clear();
    mask_.assign(1, rng_->masks.bernoulli(model_->rate(0)));
    h_ = 0;
  }

  std::optional<Observation> poll() {
    if (!mask_[h_]) return std::nullopt;
    return Observation{h_, states_[h_], -1.0};
  }

  void step(int a) {
    const int h = h_, H = horizon();
    if (h >= H) throw std::logic_error("step past the horizon");
    const int s = states_.back();
    actions_.push_back(a);
    rewards_.push_back(rng_->rewards.bernoulli(mdp_->reward(h, s, a)) ? 1.0 : 0.0);
    if (h + 1 < H) {
      states_.push_back(sample_index(mdp_->kernel(h, s, a), rng_->transitions));
      mask_.push_back(rng_->masks.bernoulli(model_->rate(h + 1)));
    }
    ++h_;
  }

  /// Nothing is ever resent; only the rewards of observed steps are filled in.
  std::vector<Observation> observed() const {
    std::vector<Observation> out;
    for (int i = 0; i < static_cast<int>(rewards_.size()); ++i)
      if (mask_[i]) out.push_back({i, states_[i], rewards_[i]});
    return out;
  }

  const std::vector<int>& states() const { return states_; }
  const std::vector<int>& actions() const { return actions_; }
  const std::vector<double>& rewards() const { return rewards_; }
  const std::vector<bool>& mask() const { return mask_; }

 private:
  const TabularMdp* mdp_;
  const MissingModel* model_;
  RngStreams* rng_;
  std::vector<int> states_, actions_;
  std::vector<double> rewards_;
  std::vector<bool> mask_;
  int h_ = 0;
};

// ---------------------------------------------------------------------------
// Agent side

/// What the agent knows: the observable history, updated from observations
/// only.
class DelayedAgentView {
 public:
  void begin(const std::optional<Observation>& first) {
    tau_ = first ? AugState{first->state, 0, {}} : AugState{-1, 0, {}};
  }

  void advance(int a, const std::optional<Observation>& obs) {
    tau_.window.push_back(a);
    if (obs) {
      if (tau_.observed()) tau_.window.erase(tau_.window.begin());
      tau_.last_seen = obs->state;
      tau_.staleness = 0;
    } else {
      ++tau_.staleness;
    }
  }

  const AugState& tau() const { return tau_; }

 private:
  AugState tau_;
};

class MissingAgentView {
 public:
  void begin(const std::optional<Observation>& first) {
    tau_ = first ? AugState{first->state, 0, {}} : AugState{-1, 0, {}};
  }
  void advance(int a, const std::optional<Observation>& obs) {
    tau_ = MissingDynamics::missing_successor(tau_, a, obs ? obs->state : -1);
  }
  const AugState& tau() const { return tau_; }

 private:
  AugState tau_;
};

struct DelayedEpisode {
  std::vector<int> states;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<int> inter_arrival;
  std::vector<AugState> taus;                 // agent view at each step
  std::vector<Observation> seen;              // in-episode arrivals, in order
  std::vector<int> seen_at;                   // arrival step of each entry of `seen`
  std::vector<Observation> flushed;
};

struct MissingEpisode {
  std::vector<int> states;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<bool> mask;
  std::vector<AugState> taus;
};

/// Protocol loop against any environment exposing poll/step/horizon. The
/// agent acts from its own view, so it cannot depend on unrevealed states.
template <class Env>
std::vector<AugState> drive_delayed(Env& env, const ExecutablePolicy& pol, CounterRng& policy_rng,
                                    std::vector<Observation>* seen = nullptr,
                                    std::vector<int>* seen_at = nullptr) {
  const int H = env.horizon();
  DelayedAgentView view;
  std::vector<AugState> taus;
  auto obs = env.poll();
  if (obs && seen) {
    seen->push_back(*obs);
    seen_at->push_back(0);
  }
  view.begin(obs);
  for (int h = 0; h < H; ++h) {
    taus.push_back(view.tau());
    const int a = pol.act(h, view.tau(), policy_rng);
    env.step(a);
    if (h + 1 == H) break;
    obs = env.poll();
    if (obs && seen) {
      seen->push_back(*obs);
      seen_at->push_back(h + 1);
    }
    view.advance(a, obs);
  }
  return taus;
}

template <class Env>
std::vector<AugState> drive_missing(Env& env, const ExecutablePolicy& pol, CounterRng& policy_rng) {
  const int H = env.horizon();
  MissingAgentView view;
  std::vector<AugState> taus;
  view.begin(env.poll());
  for (int h = 0; h < H; ++h) {
    taus.push_back(view.tau());
    const int a = pol.act(h, view.tau(), policy_rng);
    env.step(a);
    if (h + 1 == H) break;
    view.advance(a, env.poll());
  }
  return taus;
}

inline DelayedEpisode play_episode_delayed(const TabularMdp& mdp, const DelayModel& model,
                                           const ExecutablePolicy& pol, RngStreams& rng) {
  DelayedEnvironment env(mdp, model, rng);
  env.reset();
  DelayedEpisode ep;
  ep.taus = drive_delayed(env, pol, rng.policy, &ep.seen, &ep.seen_at);
  for (auto& o : ep.seen) o.reward = env.rewards()[o.index];
  auto fl = env.flush();
  ep.flushed = std::move(fl.pending);
  ep.inter_arrival = std::move(fl.inter_arrival);
  ep.states = env.states();
  ep.actions = env.actions();
  ep.rewards = env.rewards();
  return ep;
}

inline MissingEpisode play_episode_missing(const TabularMdp& mdp, const MissingModel& model,
                                           const ExecutablePolicy& pol, RngStreams& rng) {
  MissingEnvironment env(mdp, model, rng);
  env.reset();
  MissingEpisode ep;
  ep.taus = drive_missing(env, pol, rng.policy);
  ep.states = env.states();
  ep.actions = env.actions();
  ep.rewards = env.rewards();
  ep.mask = env.mask();
  return ep;
}

}  // namespace impobs
