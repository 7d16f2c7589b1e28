// Command-line front end: run, gap, bench-prop3, dump-aug, validate.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "impobs/experiment.hpp"

using namespace impobs;

namespace {

enum Exit { kOk = 0, kConfigError = 1, kCapExceeded = 2 };

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> episodes;
  std::optional<std::string> out;
  std::optional<int> replications;
  std::optional<std::string> algorithm;
  std::optional<double> c;
  std::optional<double> gamma;
  std::optional<std::size_t> cap;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "experiment config (JSON)")->required();
  cmd->add_option("--seed", o.seed, "base seed");
  cmd->add_option("--episodes", o.episodes, "number of episodes K");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--replications", o.replications, "independent seeded runs");
  cmd->add_option("--algorithm", o.algorithm, "alg1 | alg2 | alg3 | oracle");
  cmd->add_option("--c", o.c, "bonus multiplier");
  cmd->add_option("--gamma", o.gamma, "failure probability");
  cmd->add_option("--cap", o.cap, "augmented state-action cap");
}

ExperimentConfig load_config(const Overrides& o) {
  json j = read_json_file(o.config);
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (o.seed) j["seed"] = *o.seed;
  if (o.episodes) j["episodes"] = *o.episodes;
  if (o.out) j["out"] = *o.out;
  if (o.replications) j["replications"] = *o.replications;
  if (o.algorithm) j["algorithm"] = *o.algorithm;
  if (o.c) j["c"] = *o.c;
  if (o.gamma) j["gamma"] = *o.gamma;
  if (o.cap) j["cap"] = *o.cap;
  return config_from_json(j);
}

int cmd_run(const Overrides& o) {
  const ExperimentConfig cfg = load_config(o);
  const auto res = run_experiment(cfg);
  for (const auto& r : res.runs) {
    if (!r.csv_path.empty()) std::cout << r.csv_path << "\n";
    std::cout << r.summary_path << "\n";
    if (r.trace) std::cerr << "seed " << r.seed << ": " << r.trace->wall_seconds << " s\n";
  }
  if (!res.aggregate_path.empty()) std::cout << res.aggregate_path << "\n";
  return kOk;
}

int cmd_gap(const Overrides& o) {
  const ExperimentConfig cfg = load_config(o);
  if (!cfg.impairment.is_delay()) throw ConfigError("gap needs a delay impairment");
  const auto inst = resolve_instance(cfg);
  const auto report = gap_bound(inst.mdp, make_delay_model(cfg.impairment, inst.mdp.horizon()),
                                BuildOptions{cfg.cap, false});
  const std::string text = gap_to_json(report).dump(2) + "\n";
  if (o.out) {
    write_text(*o.out, text);
  } else {
    std::cout << text;
  }
  return kOk;
}

int cmd_bench_prop3(int max_d) {
  std::printf("%2s %2s %12s %12s %12s %12s %12s\n", "d", "H", "gap_d", "gap_d+1", "bound_d+1",
              "brute_d", "brute_d+1");
  for (int d = 1; d <= max_d; ++d) {
    const int H = d + 2;
    const auto f = make_fig2_instance(d, H);
    const auto g0 = gap_bound(f.mdp, f.delay_d);
    const auto g1 = gap_bound(f.mdp, f.delay_d_plus_1);
    const auto b0 = brute_force_optimal_executable(f.mdp, f.delay_d);
    const auto b1 = brute_force_optimal_executable(f.mdp, f.delay_d_plus_1);
    std::printf("%2d %2d %12.9g %12.9g %12.9g %12.9g %12.9g\n", d, H, g0.exact_gap, g1.exact_gap,
                g1.bound, b0.value, b1.value);
  }
  return kOk;
}

int cmd_dump_aug(const Overrides& o, const std::string& variant) {
  const ExperimentConfig cfg = load_config(o);
  const auto inst = resolve_instance(cfg);
  const int H = inst.mdp.horizon();
  const BuildOptions bo{cfg.cap, false};
  AugMdp aug;
  if (cfg.impairment.is_delay()) {
    const DelayModel m = make_delay_model(cfg.impairment, H);
    if (variant == "past") {
      aug = build_delayed_aug_past(inst.mdp, m, bo);
    } else if (variant == "expected" || variant.empty()) {
      aug = build_delayed_aug(inst.mdp, m, bo);
    } else {
      throw ConfigError("variant must be expected or past for a delay impairment");
    }
  } else {
    if (!variant.empty() && variant != "missing") throw ConfigError("variant must be missing");
    aug = build_missing_aug(inst.mdp, make_missing_model(cfg.impairment, H), bo);
  }
  const std::string text = aug_to_json(aug).dump(2) + "\n";
  if (o.out) {
    write_text(*o.out, text);
  } else {
    std::cout << text;
  }
  return kOk;
}

int cmd_validate(const std::string& config, const std::string& instance) {
  if (config.empty() && instance.empty()) throw ConfigError("validate needs --config or --instance");
  if (!instance.empty()) mdp_from_json(read_json_file(instance));
  if (!config.empty()) {
    const ExperimentConfig cfg = config_from_json(read_json_file(config));
    const auto inst = resolve_instance(cfg);
    validate(inst.mdp);
    if (cfg.impairment.is_delay()) {
      make_delay_model(cfg.impairment, inst.mdp.horizon());
    } else {
      make_missing_model(cfg.impairment, inst.mdp.horizon());
    }
  }
  std::cout << "ok\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"impobs: tabular RL under delayed and missing observations"};
  app.require_subcommand(1);

  Overrides run_o, gap_o, dump_o;
  auto* run = app.add_subcommand("run", "run a learner or the oracle and write traces");
  add_overrides(run, run_o);
  auto* gap = app.add_subcommand("gap", "print the gap report of a delayed instance");
  add_overrides(gap, gap_o);
  int max_d = 3;
  auto* bench = app.add_subcommand("bench-prop3", "d versus d+1 delay table on the two-state instance");
  bench->add_option("--max-d", max_d, "largest d")->check(CLI::Range(1, 6));
  std::string variant;
  auto* dump = app.add_subcommand("dump-aug", "dump the augmented MDP as JSON");
  add_overrides(dump, dump_o);
  dump->add_option("--variant", variant, "expected | past | missing");
  std::string v_config, v_instance;
  auto* val = app.add_subcommand("validate", "check a config or an instance file");
  val->add_option("--config", v_config, "experiment config (JSON)");
  val->add_option("--instance", v_instance, "MDP instance (JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(run_o);
    if (*gap) return cmd_gap(gap_o);
    if (*bench) return cmd_bench_prop3(max_d);
    if (*dump) return cmd_dump_aug(dump_o, variant);
    if (*val) return cmd_validate(v_config, v_instance);
  } catch (const AugCapExceeded& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCapExceeded;
  } catch (const std::length_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCapExceeded;
  } catch (const std::invalid_argument& e) {
    // ConfigError and ValidationError
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return kOk;
}
