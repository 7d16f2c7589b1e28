// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "impobs/experiment.hpp"

using namespace impobs;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kFig2Tol = 1e-9;
constexpr double kProp1Tol = 1e-9;
constexpr double kBruteTol = 1e-10;
constexpr double kBoundTol = 1e-9;
constexpr double kOptimismRate = 0.90;
constexpr double kSlopeRatio = 0.25;
constexpr double kDoublingRatio = 2.2;
constexpr double kReductionTol = 1e-10;

constexpr double kBudget1 = 1.0;
constexpr double kBudget2 = 30.0;
constexpr double kBudget3 = 120.0;
constexpr double kBudget4 = 120.0;
constexpr double kBudgetRegret = 600.0;

// Fixed instances.
constexpr std::uint64_t kOptimismInstanceSeed = 1;  // random_mdp(2, 2, 3, .)
constexpr std::uint64_t kRegretInstanceSeed = 1;    // random_mdp(3, 2, 4, .)
constexpr int kOptimismRuns = 200;
constexpr int kOptimismEpisodes = 500;
constexpr int kRegretSeeds = 20;
constexpr int kRegretEpisodes = 2000;

int failures = 0;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void parallel_for(int n, const std::function<void(int)>& body) {
  const unsigned threads = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(), n));
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i; (i = next++) < n;) body(i);
    });
  for (auto& t : pool) t.join();
}

LearnerOptions opts(int episodes, std::uint64_t seed) {
  LearnerOptions o;
  o.episodes = episodes;
  o.seed = seed;
  return o;
}

// ---------------------------------------------------------------------------

void criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst0 = 0.0, worst1 = 0.0;
  for (int d = 1; d <= 2; ++d) {
    const auto f = make_fig2_instance(d, d + 2);
    worst0 = std::max(worst0, std::abs(gap_bound(f.mdp, f.delay_d).exact_gap));
    worst1 = std::max(worst1, std::abs(gap_bound(f.mdp, f.delay_d_plus_1).exact_gap - 0.5));
  }
  const double t = seconds_since(t0);
  report(1, worst0 <= kFig2Tol && worst1 <= kFig2Tol && t < kBudget1,
         fmt("Fig. 2 d in {1,2}: max|gap_d| = %.3g, max|gap_{d+1} - 0.5| = %.3g (tol %.0e), %.3f s (budget %.0f s)",
             worst0, worst1, kFig2Tol, t, kBudget1));
}

void criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 50; ++k) {
    CounterRng g(k, 0xa1);
    const int S = 1 + static_cast<int>((g() % 3)), A = 1 + static_cast<int>((g() % 2));
    const int H = 2 + static_cast<int>((g() % 3));
    const TabularMdp m = random_mdp(S, A, H, 10'000 + k);
    const DelayModel d = geometric_delay(0.05 + 0.95 * g.uniform(), H);
    const AugMdp expected = build_delayed_aug(m, d);
    const AugMdp past = build_delayed_aug_past(m, d);
    const ExecutablePolicy pol = random_executable_policy(expected.topology, 20'000 + k);
    worst = std::max(worst, std::abs(evaluate_aug(expected, pol).start_value - evaluate_aug(past, pol).start_value));
  }
  const double t = seconds_since(t0);
  report(2, worst <= kProp1Tol && t < kBudget2,
         fmt("50 triples: max |V_expected - V_past| = %.3g (tol %.0e), %.2f s (budget %.0f s)", worst, kProp1Tol, t,
             kBudget2));
}

void criterion3() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_d = 0.0, worst_m = 0.0;
  for (std::uint64_t k = 0; k < 20; ++k) {
    CounterRng g(k, 0xb2);
    const int H = 2 + static_cast<int>(k % 2);
    const TabularMdp m = random_mdp(2, 2, H, 30'000 + k);
    const DelayModel d = geometric_delay(0.1 + 0.9 * g.uniform(), H);
    worst_d = std::max(worst_d, std::abs(optimal_aug(build_delayed_aug(m, d)).second.start_value -
                                         brute_force_optimal_executable(m, d).value));
    const MissingModel lam = MissingModel::constant(H, 0.1 + 0.9 * g.uniform());
    worst_m = std::max(worst_m, std::abs(optimal_aug(build_missing_aug(m, lam)).second.start_value -
                                         brute_force_optimal_executable(m, lam).value));
  }
  const double t = seconds_since(t0);
  report(3, worst_d <= kBruteTol && worst_m <= kBruteTol && t < kBudget3,
         fmt("20 instances: max deviation delayed %.3g, missing %.3g (tol %.0e), %.2f s (budget %.0f s)", worst_d,
             worst_m, kBruteTol, t, kBudget3));
}

void criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  int violations = 0;
  double min_slack = 1e300;
  for (std::uint64_t k = 0; k < 100; ++k) {
    CounterRng g(k, 0xc3);
    const int S = 2 + static_cast<int>((g() % 2)), A = 2, H = 2 + static_cast<int>((g() % 3));
    const TabularMdp m = random_mdp(S, A, H, 40'000 + k);
    const GapReport r = gap_bound(m, geometric_delay(0.05 + 0.9 * g.uniform(), H));
    min_slack = std::min(min_slack, r.bound - r.exact_gap);
    if (r.bound < r.exact_gap - kBoundTol) ++violations;
  }
  double worst_det = 0.0;
  for (std::uint64_t k = 0; k < 20; ++k) {
    CounterRng g(k, 0xc4);
    const int H = 2 + static_cast<int>((g() % 3));
    const TabularMdp m = random_deterministic_mdp(3, 2, H, 50'000 + k);
    worst_det = std::max(worst_det, std::abs(gap_bound(m, geometric_delay(0.05 + 0.9 * g.uniform(), H)).exact_gap));
  }
  const double t = seconds_since(t0);
  report(4, violations == 0 && worst_det <= kBoundTol && t < kBudget4,
         fmt("100 random: %d violations, min(bound - gap) = %.3g; 20 deterministic: max|gap| = %.3g (tol %.0e), "
             "%.2f s (budget %.0f s)",
             violations, min_slack, worst_det, kBoundTol, t, kBudget4));
}

void criterion5() {
  const auto t0 = std::chrono::steady_clock::now();
  const TabularMdp m = random_mdp(2, 2, 3, kOptimismInstanceSeed);
  const auto cfg = BonusConfig::make(2, 2, 3, kOptimismEpisodes, 1.0, 0.1);
  const DelayModel delay = geometric_delay(0.5, 3);
  const MissingModel lam = MissingModel::constant(3, 0.9);
  std::vector<char> ok1(kOptimismRuns), ok3(kOptimismRuns);
  parallel_for(kOptimismRuns, [&](int r) {
    const auto seed = static_cast<std::uint64_t>(r + 1);
    ok1[r] = run_alg1(m, delay, cfg, opts(kOptimismEpisodes, seed)).optimistic_through(kOptimismEpisodes);
    ok3[r] = run_alg3(m, lam, cfg, opts(kOptimismEpisodes, seed)).optimistic_through(kOptimismEpisodes);
  });
  const double f1 = std::accumulate(ok1.begin(), ok1.end(), 0.0) / kOptimismRuns;
  const double f3 = std::accumulate(ok3.begin(), ok3.end(), 0.0) / kOptimismRuns;
  report(5, f1 >= kOptimismRate && f3 >= kOptimismRate,
         fmt("optimistic for all k <= %d: Alg. 1 %.3f, Alg. 3 %.3f of %d runs (need >= %.2f), %.1f s",
             kOptimismEpisodes, f1, f3, kOptimismRuns, kOptimismRate, seconds_since(t0)));
}

struct SlopeStats {
  double first = 0.0, last = 0.0, r500 = 0.0, r2000 = 0.0;
  double ratio() const { return first > 0.0 ? last / first : 0.0; }
  double doubling() const { return r500 > 0.0 ? r2000 / r500 : 0.0; }
};

SlopeStats regret_stats(const std::function<RegretTrace(std::uint64_t)>& run) {
  std::vector<RegretTrace> traces(kRegretSeeds);
  parallel_for(kRegretSeeds, [&](int i) { traces[i] = run(static_cast<std::uint64_t>(i + 1)); });
  SlopeStats s;
  for (const auto& tr : traces) {
    s.first += tr.slope_first_decile() / kRegretSeeds;
    s.last += tr.slope_last_decile() / kRegretSeeds;
    s.r500 += tr.cumulative_at(500) / kRegretSeeds;
    s.r2000 += tr.cumulative_at(kRegretEpisodes) / kRegretSeeds;
  }
  return s;
}

bool slope_pass(const SlopeStats& s) { return s.ratio() <= kSlopeRatio && s.doubling() <= kDoublingRatio; }

std::string slope_text(const char* name, const SlopeStats& s) {
  return fmt("%s last/first decile %.3f (need <= %.2f), R(2000)/R(500) %.3f (need <= %.1f)", name, s.ratio(),
             kSlopeRatio, s.doubling(), kDoublingRatio);
}

void criterion6() {
  const auto t0 = std::chrono::steady_clock::now();
  const TabularMdp m = random_mdp(3, 2, 4, kRegretInstanceSeed);
  const auto cfg = BonusConfig::make(3, 2, 4, kRegretEpisodes, 1.0, 0.1);
  const DelayModel delay = geometric_delay(0.5, 4);
  const auto s = regret_stats([&](std::uint64_t seed) { return run_alg1(m, delay, cfg, opts(kRegretEpisodes, seed)); });
  const double t = seconds_since(t0);
  report(6, slope_pass(s) && t < kBudgetRegret,
         slope_text("Alg. 1:", s) + fmt(", %.1f s (budget %.0f s)", t, kBudgetRegret));
}

void criterion7() {
  const auto t0 = std::chrono::steady_clock::now();
  const TabularMdp m = random_mdp(3, 2, 4, kRegretInstanceSeed);
  const auto cfg = BonusConfig::make(3, 2, 4, kRegretEpisodes, 1.0, 0.1);
  const MissingModel lam2 = MissingModel::constant(4, 0.8), lam3 = MissingModel::constant(4, 0.9);
  const auto s2 = regret_stats([&](std::uint64_t seed) { return run_alg2(m, lam2, cfg, opts(kRegretEpisodes, seed)); });
  const auto s3 = regret_stats([&](std::uint64_t seed) { return run_alg3(m, lam3, cfg, opts(kRegretEpisodes, seed)); });
  const double t = seconds_since(t0);
  report(7, slope_pass(s2) && slope_pass(s3) && t < kBudgetRegret,
         slope_text("Alg. 2:", s2) + "; " + slope_text("Alg. 3:", s3) +
             fmt(", %.1f s (budget %.0f s)", t, kBudgetRegret));
}

void criterion8() {
  double worst_delay = 0.0, worst_missing = 0.0;
  bool env_ok = true;
  for (std::uint64_t k = 0; k < 10; ++k) {
    const TabularMdp m = random_mdp(3, 2, 4, 60'000 + k);
    auto [pol, vt] = value_iteration(m);
    const double v = vt.expected_start_value(m.initial_dist());
    const auto t1 = run_alg1(m, geometric_delay(1.0, 4), BonusConfig::make(3, 2, 4, 1), opts(1, k));
    const auto t3 = run_alg3(m, MissingModel::constant(4, 1.0), BonusConfig::make(3, 2, 4, 1), opts(1, k));
    worst_delay = std::max(worst_delay, std::abs(t1.records[0].oracle_value - v));
    worst_missing = std::max(worst_missing, std::abs(t3.records[0].oracle_value - v));

    // The environments reveal every state at its own step.
    const AugMdp aug = build_delayed_aug(m, geometric_delay(1.0, 4));
    RngStreams rng = RngStreams::for_run(k);
    const auto ep = play_episode_delayed(m, geometric_delay(1.0, 4), ExecutablePolicy(aug.topology), rng);
    for (int h = 0; h < 4; ++h) env_ok = env_ok && ep.taus[h] == AugState{ep.states[h], 0, {}};
    const auto em = play_episode_missing(m, MissingModel::constant(4, 1.0),
                                         ExecutablePolicy(build_missing_aug(m, MissingModel::constant(4, 1.0)).topology),
                                         rng);
    for (int h = 0; h < 4; ++h) env_ok = env_ok && em.taus[h] == AugState{em.states[h], 0, {}};
  }
  report(8, worst_delay <= kReductionTol && worst_missing <= kReductionTol && env_ok,
         fmt("10 instances: max |V*_delay - V*| = %.3g, max |V*_missing - V*| = %.3g (tol %.0e), "
             "environments fully observed: %s",
             worst_delay, worst_missing, kReductionTol, env_ok ? "yes" : "no"));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion9() {
  const fs::path root = fs::temp_directory_path() / "impobs_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  bool same = true;
  int compared = 0;
  const char* configs[] = {
      R"({"instance": {"builtin": "random", "S": 3, "A": 2, "H": 4, "seed": 1},
          "impairment": {"type": "geometric", "p": 0.5}, "algorithm": "alg1", "episodes": 300, "seed": 5})",
      R"({"instance": {"builtin": "random", "S": 3, "A": 2, "H": 4, "seed": 1},
          "impairment": {"type": "missing", "lambda": [0.8]}, "algorithm": "alg2", "episodes": 300, "seed": 5})",
      R"({"instance": {"builtin": "random", "S": 3, "A": 2, "H": 4, "seed": 1},
          "impairment": {"type": "missing", "lambda": [0.9]}, "algorithm": "alg3", "episodes": 300, "seed": 5})",
      R"({"instance": {"builtin": "fig2", "d": 1}, "impairment": {"type": "constant", "d": 1},
          "algorithm": "oracle"})"};
  int idx = 0;
  for (const char* text : configs) {
    const fs::path cfg = root / ("config" + std::to_string(idx++) + ".json");
    write_text(cfg.string(), text);
    std::vector<fs::path> outs;
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path out = root / (cfg.stem().string() + "_run" + std::to_string(rep));
      const std::string cmd = std::string(IMPOBS_CLI) + " run --config " + cfg.string() + " --out " + out.string() +
                              " > /dev/null 2>&1";
      if (std::system(cmd.c_str()) != 0) same = false;
      outs.push_back(out);
    }
    if (!fs::exists(outs[0])) {
      same = false;
      continue;
    }
    for (const auto& e : fs::directory_iterator(outs[0])) {
      const fs::path other = outs[1] / e.path().filename();
      same = same && fs::exists(other) && slurp(e.path()) == slurp(other);
      ++compared;
    }
  }
  report(9, same && compared >= 7,
         fmt("CLI run twice per config (alg1, alg2, alg3, oracle): %d output files compared, %s", compared,
             same ? "byte-identical" : "MISMATCH"));
}

}  // namespace

int main() {
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  criterion7();
  criterion8();
  criterion9();
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
