#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "impobs/io.hpp"
#include "impobs/learners.hpp"
#include "impobs/oracle.hpp"

namespace impobs {

struct ResolvedInstance {
  std::string name;
  TabularMdp mdp;
};

inline ResolvedInstance resolve_instance(const ExperimentConfig& cfg) {
  const InstanceSpec& s = cfg.instance;
  ResolvedInstance out;
  if (!s.file.empty()) {
    out.mdp = mdp_from_json(read_json_file(s.file));
    out.name = std::filesystem::path(s.file).stem().string();
  } else if (s.builtin == "fig2") {
    out.mdp = make_fig2_instance(s.d, s.H).mdp;
    out.name = "fig2";
  } else if (s.builtin == "random") {
    out.mdp = random_mdp(s.S, s.A, s.H, s.seed);
    out.name = "random";
  } else {
    out.mdp = random_deterministic_mdp(s.S, s.A, s.H, s.seed);
    out.name = "random-deterministic";
  }
  if (!cfg.name.empty()) out.name = cfg.name;
  return out;
}

struct RunOutput {
  std::uint64_t seed = 0;
  std::optional<RegretTrace> trace;  // empty for oracle-only runs
  ordered_json summary;
  std::string csv_path;
  std::string summary_path;
};

struct ExperimentResult {
  std::vector<RunOutput> runs;
  std::string aggregate_path;
};

namespace detail {

inline json oracle_report(const ExperimentConfig& cfg, const TabularMdp& mdp) {
  const BuildOptions bo{cfg.cap, false};
  if (cfg.impairment.is_delay()) {
    return gap_to_json(gap_bound(mdp, make_delay_model(cfg.impairment, mdp.horizon()), bo));
  }
  auto [pi, vt] = value_iteration(mdp);
  const auto aug = build_missing_aug(mdp, make_missing_model(cfg.impairment, mdp.horizon()), bo);
  const double vm = optimal_aug(aug).second.start_value;
  const double vn = vt.expected_start_value(mdp.initial_dist());
  return json{{"exact_gap", round12(vn - vm)}, {"v_nodelay", round12(vn)}, {"v_missing", round12(vm)}};
}

inline RunOutput run_single(const ExperimentConfig& cfg, const ResolvedInstance& inst, std::uint64_t seed) {
  RunOutput out;
  out.seed = seed;
  const TabularMdp& mdp = inst.mdp;
  const int H = mdp.horizon();
  ordered_json& sm = out.summary;
  if (cfg.algorithm == "oracle") {
    sm["final_regret"] = nullptr;
    sm["slope_first_decile"] = nullptr;
    sm["slope_last_decile"] = nullptr;
    sm["optimism_rate"] = nullptr;
    sm["gap"] = oracle_report(cfg, mdp);
    if (cfg.instance.builtin == "fig2") {
      const auto f = make_fig2_instance(cfg.instance.d, cfg.instance.H);
      const BuildOptions bo{cfg.cap, false};
      sm["gap_d"] = round12(gap_bound(f.mdp, f.delay_d, bo).exact_gap);
      sm["gap_d_plus_1"] = round12(gap_bound(f.mdp, f.delay_d_plus_1, bo).exact_gap);
    }
  } else {
    const auto bc = BonusConfig::make(mdp.num_states(), mdp.num_actions(), H, cfg.episodes, cfg.c, cfg.gamma);
    LearnerOptions lo;
    lo.episodes = cfg.episodes;
    lo.seed = seed;
    lo.cap = cfg.cap;
    RegretTrace tr;
    if (cfg.algorithm == "alg1") {
      tr = run_alg1(mdp, make_delay_model(cfg.impairment, H), bc, lo);
    } else if (cfg.algorithm == "alg2") {
      tr = run_alg2(mdp, make_missing_model(cfg.impairment, H), bc, lo);
    } else {
      tr = run_alg3(mdp, make_missing_model(cfg.impairment, H), bc, lo);
    }
    sm["final_regret"] = round12(tr.final_regret());
    sm["slope_first_decile"] = round12(tr.slope_first_decile());
    sm["slope_last_decile"] = round12(tr.slope_last_decile());
    sm["optimism_rate"] = round12(tr.optimism_rate());
    out.trace = std::move(tr);
  }
  sm["config_hash"] = config_hash(cfg);
  sm["seed"] = seed;

  const std::string stem = cfg.algorithm + "_" + inst.name + "_" + std::to_string(seed);
  const std::filesystem::path dir(cfg.out);
  if (out.trace) {
    out.csv_path = (dir / (stem + ".csv")).string();
    write_text(out.csv_path, trace_csv(*out.trace));
  }
  out.summary_path = (dir / (stem + ".summary.json")).string();
  write_text(out.summary_path, sm.dump(2) + "\n");
  return out;
}

/// Mean and 10/50/90% quantiles of the cumulative regret across runs.
inline std::string aggregate_csv(const std::vector<RunOutput>& runs) {
  std::string out = "episode,mean_cumulative_regret,q10,q50,q90\n";
  const std::size_t K = runs.front().trace->records.size();
  std::vector<double> col(runs.size());
  char buf[256];
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(col.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, col.size() - 1);
    return col[lo] + (pos - static_cast<double>(lo)) * (col[hi] - col[lo]);
  };
  for (std::size_t k = 0; k < K; ++k) {
    double mean = 0.0;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      col[r] = runs[r].trace->records[k].cumulative;
      mean += col[r];
    }
    mean /= static_cast<double>(runs.size());
    std::sort(col.begin(), col.end());
    std::snprintf(buf, sizeof buf, "%zu,%.12g,%.12g,%.12g,%.12g\n", k + 1, mean, quantile(0.1),
                  quantile(0.5), quantile(0.9));
    out += buf;
  }
  return out;
}

}  // namespace detail

/// Runs `replications` independent seeds (seed, seed+1, ...) in parallel and
/// writes one CSV trace and one summary per seed into cfg.out.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, unsigned threads = 0) {
  check_config(cfg);
  const ResolvedInstance inst = resolve_instance(cfg);
  if (cfg.impairment.is_delay()) {
    make_delay_model(cfg.impairment, inst.mdp.horizon());
  } else {
    make_missing_model(cfg.impairment, inst.mdp.horizon());
  }
  std::filesystem::create_directories(cfg.out);

  ExperimentResult res;
  res.runs.resize(cfg.replications);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(cfg.replications));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int r; (r = next++) < cfg.replications;) {
      try {
        res.runs[r] = detail::run_single(cfg, inst, cfg.seed + static_cast<std::uint64_t>(r));
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  if (cfg.replications > 1 && cfg.algorithm != "oracle") {
    res.aggregate_path =
        (std::filesystem::path(cfg.out) / (cfg.algorithm + "_" + inst.name + "_aggregate.csv")).string();
    write_text(res.aggregate_path, detail::aggregate_csv(res.runs));
  }
  return res;
}

}  // namespace impobs
