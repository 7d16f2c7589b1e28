#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "impobs/experiment.hpp"

using namespace impobs;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("impobs_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json base_config() {
  return json::parse(R"({
    "instance": {"builtin": "random", "S": 2, "A": 2, "H": 3, "seed": 4},
    "impairment": {"type": "geometric", "p": 0.5},
    "algorithm": "alg1",
    "episodes": 50,
    "seed": 7
  })");
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(IMPOBS_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

TEST(Config, Defaults) {
  const ExperimentConfig c = config_from_json(base_config());
  EXPECT_EQ(c.algorithm, "alg1");
  EXPECT_EQ(c.episodes, 50);
  EXPECT_DOUBLE_EQ(c.c, 1.0);
  EXPECT_DOUBLE_EQ(c.gamma, 0.1);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.replications, 1);
  EXPECT_EQ(c.instance.S, 2);
  EXPECT_DOUBLE_EQ(c.impairment.p, 0.5);
}

TEST(Config, Errors) {
  auto expect_error = [](json j, const std::string& needle) {
    try {
      config_from_json(j);
      ADD_FAILURE() << "accepted: " << j.dump();
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  json j = base_config();
  j.erase("instance");
  expect_error(j, "instance");
  j = base_config();
  j["impairment"] = {{"type", "poisson"}};
  expect_error(j, "unknown type");
  j = base_config();
  j["impairment"] = {{"type", "missing"}, {"lambda", {0.5}}};
  expect_error(j, "alg1 needs a delay impairment");
  j = base_config();
  j["algorithm"] = "alg2";
  expect_error(j, "needs a missing impairment");
  j = base_config();
  j["gamma"] = 1.5;
  expect_error(j, "gamma");
  j = base_config();
  j["episodes"] = "many";
  expect_error(j, "config");
  j = base_config();
  j["instance"] = {{"builtin", "fig2"}, {"d", 3}, {"H", 3}};
  expect_error(j, "0 < d < H");
}

TEST(Config, ImpairmentModels) {
  ImpairmentSpec s;
  s.type = "missing";
  s.lambda = {0.7};
  EXPECT_EQ(make_missing_model(s, 4).rates(), std::vector<double>(4, 0.7));
  s.lambda = {0.7, 0.8};
  EXPECT_THROW(make_missing_model(s, 4), ConfigError);
  s.lambda = {0.0};
  EXPECT_THROW(make_missing_model(s, 4), ConfigError);
  s.type = "constant";
  s.d = 4;
  EXPECT_THROW(make_delay_model(s, 4), ConfigError);
  s.type = "table";
  s.pmf = {0.5, 0.5};
  s.initial_delay = 1;
  EXPECT_EQ(make_delay_model(s, 4).initial_delay(), 1);
}

TEST(Config, HashIgnoresSeedAndOutput) {
  const ExperimentConfig a = config_from_json(base_config());
  ExperimentConfig b = a;
  b.seed = 99;
  b.out = "elsewhere";
  b.replications = 5;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.c = 0.5;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, RoundTrip) {
  const ExperimentConfig a = config_from_json(base_config());
  const ExperimentConfig b = config_from_json(config_to_json(a));
  EXPECT_EQ(config_to_json(a), config_to_json(b));
}

TEST(Config, MissingFile) { EXPECT_THROW(read_json_file("/nonexistent/impobs.json"), ConfigError); }

// ---------------------------------------------------------------------------
// Instance files

TEST(InstanceJson, RoundTrip) {
  const TabularMdp m = random_mdp(3, 2, 4, 6);
  const TabularMdp r = mdp_from_json(mdp_to_json(m));
  ASSERT_EQ(r.num_states(), 3);
  ASSERT_EQ(r.horizon(), 4);
  for (int h = 0; h < 4; ++h)
    for (int s = 0; s < 3; ++s)
      for (int a = 0; a < 2; ++a) {
        EXPECT_EQ(r.reward(h, s, a), m.reward(h, s, a));
        if (h + 1 < 4) {
          for (int sn = 0; sn < 3; ++sn) EXPECT_EQ(r.kernel(h, s, a)[sn], m.kernel(h, s, a)[sn]);
        }
      }
  for (int s = 0; s < 3; ++s) EXPECT_EQ(r.initial_dist()[s], m.initial_dist()[s]);
}

TEST(InstanceJson, ShippedExampleIsValid) {
  const TabularMdp m = mdp_from_json(read_json_file(std::string(IMPOBS_SOURCE_DIR) + "/configs/two_state.json"));
  EXPECT_EQ(m.num_states(), 2);
  EXPECT_EQ(m.horizon(), 3);
  EXPECT_DOUBLE_EQ(m.kernel(1, 0, 1)[1], 0.7);
}

TEST(InstanceJson, Rejections) {
  json j = mdp_to_json(random_mdp(2, 2, 3, 1));
  json wrong = j;
  wrong["kernel"].push_back(wrong["kernel"][0]);
  EXPECT_THROW(mdp_from_json(wrong), std::invalid_argument);
  wrong = j;
  wrong["kernel"][1][0][1] = {0.5, 0.6};
  try {
    mdp_from_json(wrong);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("row sum 1.1 at (1,0,1)"), std::string::npos) << e.what();
  }
  wrong = j;
  wrong.erase("reward");
  EXPECT_THROW(mdp_from_json(wrong), ConfigError);
}

// ---------------------------------------------------------------------------
// Runs and outputs

TEST(Run, OracleFig2Summary) {
  const fs::path dir = scratch("oracle");
  json j = json::parse(R"({"instance": {"builtin": "fig2", "d": 1}, "impairment": {"type": "constant", "d": 1},
                          "algorithm": "oracle"})");
  j["out"] = dir.string();
  const auto res = run_experiment(config_from_json(j));
  ASSERT_EQ(res.runs.size(), 1u);
  EXPECT_TRUE(res.runs[0].csv_path.empty());
  EXPECT_EQ(fs::path(res.runs[0].summary_path).filename(), "oracle_fig2_1.summary.json");
  const json sm = read_json_file(res.runs[0].summary_path);
  EXPECT_EQ(sm["gap_d"].get<double>(), 0.0);
  EXPECT_EQ(sm["gap_d_plus_1"].get<double>(), 0.5);
  EXPECT_EQ(sm["gap"]["exact_gap"].get<double>(), 0.0);
  EXPECT_TRUE(sm["final_regret"].is_null());
}

TEST(Run, Alg1TraceFormat) {
  const fs::path dir = scratch("alg1");
  json j = base_config();
  j["episodes"] = 2000;
  j["out"] = dir.string();
  const auto res = run_experiment(config_from_json(j));
  const auto& run = res.runs.at(0);
  EXPECT_EQ(fs::path(run.csv_path).filename(), "alg1_random_7.csv");
  std::ifstream in(run.csv_path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "episode,regret_increment,cumulative_regret,optimistic_value,oracle_value,seed");
  int rows = 0;
  double prev = -1.0;
  while (std::getline(in, line)) {
    ++rows;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    ASSERT_EQ(cells.size(), 6u);
    EXPECT_EQ(std::stoi(cells[0]), rows);
    EXPECT_EQ(cells[5], "7");
    const double cum = std::stod(cells[2]);
    EXPECT_GE(cum, prev - 1e-9);
    prev = cum;
  }
  EXPECT_EQ(rows, 2000);

  const ordered_json sm = ordered_json::parse(slurp(run.summary_path));
  std::vector<std::string> keys;
  for (const auto& [k, v] : sm.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"final_regret", "slope_first_decile", "slope_last_decile",
                                            "optimism_rate", "config_hash", "seed"}));
  EXPECT_NEAR(sm["final_regret"].get<double>(), prev, 1e-9);
}

TEST(Run, NumberFormat) {
  RegretTrace tr;
  tr.seed = 3;
  tr.records.push_back({1, 0.1, 0.1, 2.0 / 3.0, 1.0, true});
  const std::string csv = trace_csv(tr);
  EXPECT_EQ(csv.substr(csv.find('\n') + 1), "1,0.1,0.1,0.666666666667,1,3\n");
}

TEST(Run, ByteIdenticalReruns) {
  for (const char* alg : {"alg1", "alg2", "alg3"}) {
    json j = base_config();
    j["algorithm"] = alg;
    if (std::string(alg) != "alg1") j["impairment"] = {{"type", "missing"}, {"lambda", {0.8}}};
    const fs::path d1 = scratch(std::string("det1_") + alg), d2 = scratch(std::string("det2_") + alg);
    j["out"] = d1.string();
    const auto r1 = run_experiment(config_from_json(j));
    j["out"] = d2.string();
    const auto r2 = run_experiment(config_from_json(j));
    EXPECT_EQ(slurp(r1.runs[0].csv_path), slurp(r2.runs[0].csv_path)) << alg;
    EXPECT_EQ(slurp(r1.runs[0].summary_path), slurp(r2.runs[0].summary_path)) << alg;
  }
}

TEST(Run, ReplicationsAndAggregate) {
  const fs::path dir = scratch("reps");
  json j = base_config();
  j["replications"] = 4;
  j["out"] = dir.string();
  const auto res = run_experiment(config_from_json(j), 2);
  ASSERT_EQ(res.runs.size(), 4u);
  for (int r = 0; r < 4; ++r) {
    EXPECT_EQ(res.runs[r].seed, 7u + r);
    EXPECT_TRUE(fs::exists(dir / ("alg1_random_" + std::to_string(7 + r) + ".csv")));
  }
  EXPECT_EQ(fs::path(res.aggregate_path).filename(), "alg1_random_aggregate.csv");
  std::ifstream in(res.aggregate_path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "episode,mean_cumulative_regret,q10,q50,q90");
  // Threads do not change the per-seed output.
  const fs::path dir2 = scratch("reps_serial");
  j["out"] = dir2.string();
  const auto serial = run_experiment(config_from_json(j), 1);
  for (int r = 0; r < 4; ++r) EXPECT_EQ(slurp(res.runs[r].csv_path), slurp(serial.runs[r].csv_path));
}

TEST(Run, NamedFileInstance) {
  const fs::path dir = scratch("file");
  json j = base_config();
  j["instance"] = {{"file", std::string(IMPOBS_SOURCE_DIR) + "/configs/two_state.json"}};
  j["out"] = dir.string();
  const auto res = run_experiment(config_from_json(j));
  EXPECT_EQ(fs::path(res.runs[0].csv_path).filename(), "alg1_two_state_7.csv");
}

TEST(Run, CapExceeded) {
  json j = base_config();
  j["instance"] = {{"builtin", "random"}, {"S", 3}, {"A", 2}, {"H", 6}, {"seed", 1}};
  j["cap"] = 100;
  j["out"] = scratch("cap").string();
  EXPECT_THROW(run_experiment(config_from_json(j)), AugCapExceeded);
}

// ---------------------------------------------------------------------------
// Command line

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  const std::string cfg = (dir / "ok.json").string();
  json j = base_config();
  j["out"] = (dir / "out").string();
  write_text(cfg, j.dump());
  EXPECT_EQ(run_cli("validate --config " + cfg), 0);
  EXPECT_EQ(run_cli("run --config " + cfg + " --episodes 20 --seed 3"), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "alg1_random_3.csv"));
  EXPECT_EQ(run_cli("run --config " + cfg + " --episodes 20 --replications 2 --out " + (dir / "o2").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "o2" / "alg1_random_aggregate.csv"));
  EXPECT_EQ(run_cli("gap --config " + cfg + " --out " + (dir / "gap.json").string()), 0);
  EXPECT_EQ(run_cli("dump-aug --config " + cfg + " --variant past --out " + (dir / "aug.json").string()), 0);
  EXPECT_EQ(run_cli("bench-prop3 --max-d 2"), 0);

  const std::string bad = (dir / "bad.json").string();
  j["impairment"] = {{"type", "geometric"}, {"p", 2.0}};
  write_text(bad, j.dump());
  EXPECT_EQ(run_cli("run --config " + bad), 1);
  EXPECT_EQ(run_cli("validate --config " + bad), 1);
  EXPECT_EQ(run_cli("run --config /nonexistent.json"), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("run"), 1);

  const std::string big = (dir / "big.json").string();
  j = base_config();
  j["instance"] = {{"builtin", "random"}, {"S", 3}, {"A", 2}, {"H", 6}, {"seed", 1}};
  j["out"] = (dir / "out").string();
  write_text(big, j.dump());
  EXPECT_EQ(run_cli("run --config " + big + " --cap 100"), 2);
  EXPECT_EQ(run_cli("dump-aug --config " + big + " --cap 100"), 2);
}

TEST(Cli, DumpAugContents) {
  const fs::path dir = scratch("dump");
  const std::string cfg = (dir / "c.json").string();
  json j = json::parse(R"({"instance": {"builtin": "random", "S": 2, "A": 2, "H": 3, "seed": 4},
                          "impairment": {"type": "constant", "d": 1}})");
  write_text(cfg, j.dump());
  const std::string out = (dir / "aug.json").string();
  ASSERT_EQ(run_cli("dump-aug --config " + cfg + " --out " + out), 0);
  const json a = read_json_file(out);
  const AugMdp ref = build_delayed_aug(random_mdp(2, 2, 3, 4), constant_delay(1, 3));
  EXPECT_EQ(a, json::parse(aug_to_json(ref).dump()));
}
