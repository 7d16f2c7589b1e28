#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "impobs/aug.hpp"
#include "impobs/channels.hpp"
#include "impobs/learners.hpp"
#include "impobs/mdp.hpp"
#include "impobs/oracle.hpp"

namespace impobs {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

/// Bad or inconsistent configuration (CLI exit code 1).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Value rounded to 12 significant digits, so that JSON output carries the
/// same precision as the CSV traces.
inline double round12(double x) { return std::strtod(detail::fmt_real(x).c_str(), nullptr); }

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// MDP instances

namespace detail {

inline const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
  return j.at(key);
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return field(j, key, where).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": field '" + key + "' has the wrong type (" + e.what() + ")");
  }
}

}  // namespace detail

inline TabularMdp mdp_from_json(const json& j) {
  const std::string where = "instance";
  const int S = detail::get<int>(j, "S", where);
  const int A = detail::get<int>(j, "A", where);
  const int H = detail::get<int>(j, "H", where);
  if (S <= 0 || A <= 0 || H <= 0) throw ConfigError("instance: S, A and H must be positive");
  auto reward = detail::get<std::vector<std::vector<std::vector<double>>>>(j, "reward", where);
  auto kernel = detail::get<std::vector<std::vector<std::vector<std::vector<double>>>>>(j, "kernel", where);
  if (static_cast<int>(reward.size()) != H) throw ConfigError("instance: reward needs H step tables");
  if (static_cast<int>(kernel.size()) != H - 1) {
    throw ConfigError("instance: kernel needs H-1 step tables (got " + std::to_string(kernel.size()) + ")");
  }
  TabularMdp mdp(S, A, H);
  for (int h = 0; h < H; ++h) {
    if (static_cast<int>(reward[h].size()) != S) throw ConfigError("instance: reward[" + std::to_string(h) + "] needs S rows");
    for (int s = 0; s < S; ++s) {
      if (static_cast<int>(reward[h][s].size()) != A) {
        throw ConfigError("instance: reward[" + std::to_string(h) + "][" + std::to_string(s) + "] needs A entries");
      }
      for (int a = 0; a < A; ++a) mdp.reward(h, s, a) = reward[h][s][a];
    }
  }
  for (int h = 0; h + 1 < H; ++h) {
    if (static_cast<int>(kernel[h].size()) != S) throw ConfigError("instance: kernel[" + std::to_string(h) + "] needs S rows");
    for (int s = 0; s < S; ++s) {
      if (static_cast<int>(kernel[h][s].size()) != A) throw ConfigError("instance: kernel row count mismatch");
      for (int a = 0; a < A; ++a) {
        if (static_cast<int>(kernel[h][s][a].size()) != S) {
          throw ConfigError("instance: kernel[" + std::to_string(h) + "][" + std::to_string(s) + "][" +
                            std::to_string(a) + "] needs S entries");
        }
        mdp.set_kernel(h, s, a, kernel[h][s][a]);
      }
    }
  }
  if (j.contains("initial_dist")) {
    auto mu = detail::get<std::vector<double>>(j, "initial_dist", where);
    if (static_cast<int>(mu.size()) != S) throw ConfigError("instance: initial_dist needs S entries");
    std::copy(mu.begin(), mu.end(), mdp.initial_dist().begin());
  }
  validate(mdp);
  return mdp;
}

inline json mdp_to_json(const TabularMdp& mdp) {
  const int S = mdp.num_states(), A = mdp.num_actions(), H = mdp.horizon();
  json reward = json::array(), kernel = json::array();
  for (int h = 0; h < H; ++h) {
    json rh = json::array();
    for (int s = 0; s < S; ++s) {
      json rs = json::array();
      for (int a = 0; a < A; ++a) rs.push_back(mdp.reward(h, s, a));
      rh.push_back(rs);
    }
    reward.push_back(rh);
  }
  for (int h = 0; h + 1 < H; ++h) {
    json kh = json::array();
    for (int s = 0; s < S; ++s) {
      json ks = json::array();
      for (int a = 0; a < A; ++a) {
        auto row = mdp.kernel(h, s, a);
        ks.push_back(std::vector<double>(row.begin(), row.end()));
      }
      kh.push_back(ks);
    }
    kernel.push_back(kh);
  }
  auto mu = mdp.initial_dist();
  return json{{"S", S}, {"A", A}, {"H", H}, {"reward", reward}, {"kernel", kernel},
              {"initial_dist", std::vector<double>(mu.begin(), mu.end())}};
}

// ---------------------------------------------------------------------------
// Impairment blocks

struct ImpairmentSpec {
  std::string type;  // geometric | constant | table | missing
  double p = 0.5;
  int d = 0;
  int initial_delay = 0;
  std::vector<double> pmf;
  std::vector<double> lambda;

  bool is_delay() const { return type != "missing"; }
};

inline ImpairmentSpec impairment_from_json(const json& j) {
  const std::string where = "impairment";
  ImpairmentSpec out;
  out.type = detail::get<std::string>(j, "type", where);
  if (out.type == "geometric") {
    out.p = detail::get<double>(j, "p", where);
  } else if (out.type == "constant") {
    out.d = detail::get<int>(j, "d", where);
  } else if (out.type == "table") {
    out.pmf = detail::get<std::vector<double>>(j, "pmf", where);
    if (j.contains("initial_delay")) out.initial_delay = detail::get<int>(j, "initial_delay", where);
  } else if (out.type == "missing") {
    out.lambda = detail::get<std::vector<double>>(j, "lambda", where);
  } else {
    throw ConfigError("impairment: unknown type '" + out.type +
                      "' (expected geometric, constant, table or missing)");
  }
  return out;
}

inline json impairment_to_json(const ImpairmentSpec& s) {
  if (s.type == "geometric") return json{{"type", s.type}, {"p", s.p}};
  if (s.type == "constant") return json{{"type", s.type}, {"d", s.d}};
  if (s.type == "table") return json{{"type", s.type}, {"pmf", s.pmf}, {"initial_delay", s.initial_delay}};
  return json{{"type", s.type}, {"lambda", s.lambda}};
}

inline DelayModel make_delay_model(const ImpairmentSpec& s, int H) {
  try {
    if (s.type == "geometric") return geometric_delay(s.p, H);
    if (s.type == "constant") return constant_delay(s.d, H);
    if (s.type == "table") return DelayModel::independent(H, s.pmf, s.initial_delay);
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("impairment: ") + e.what());
  }
  throw ConfigError("impairment: '" + s.type + "' is not a delay model");
}

/// A single rate is broadcast over the horizon.
inline MissingModel make_missing_model(const ImpairmentSpec& s, int H) {
  if (s.type != "missing") throw ConfigError("impairment: '" + s.type + "' is not a missing model");
  std::vector<double> lam = s.lambda;
  if (lam.size() == 1) lam.assign(H, lam[0]);
  if (static_cast<int>(lam.size()) != H) {
    throw ConfigError("impairment: lambda needs 1 or H entries (got " + std::to_string(lam.size()) + ")");
  }
  try {
    return MissingModel(lam);
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("impairment: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct InstanceSpec {
  std::string builtin;  // fig2 | random | random-deterministic; empty for files
  std::string file;
  int S = 2, A = 2, H = 3;
  int d = 1;
  std::uint64_t seed = 1;
};

struct ExperimentConfig {
  InstanceSpec instance;
  ImpairmentSpec impairment;
  std::string algorithm = "alg1";  // alg1 | alg2 | alg3 | oracle
  std::string name;                // instance label used in file names
  int episodes = 1000;
  double gamma = 0.1;
  double c = 1.0;
  std::uint64_t seed = 1;
  std::string out = "out";
  std::size_t cap = BuildOptions{}.cap;
  int replications = 1;
};

inline InstanceSpec instance_from_json(const json& j) {
  InstanceSpec out;
  if (j.contains("file")) {
    out.file = detail::get<std::string>(j, "file", "instance");
    return out;
  }
  out.builtin = detail::get<std::string>(j, "builtin", "instance");
  if (out.builtin == "fig2") {
    out.d = j.value("d", 1);
    out.H = j.value("H", out.d + 2);
  } else if (out.builtin == "random" || out.builtin == "random-deterministic") {
    out.S = j.value("S", 2);
    out.A = j.value("A", 2);
    out.H = j.value("H", 3);
    out.seed = j.value("seed", std::uint64_t{1});
  } else {
    throw ConfigError("instance: unknown builtin '" + out.builtin +
                      "' (expected fig2, random or random-deterministic)");
  }
  return out;
}

inline json instance_to_json(const InstanceSpec& s) {
  if (!s.file.empty()) return json{{"file", s.file}};
  if (s.builtin == "fig2") return json{{"builtin", s.builtin}, {"d", s.d}, {"H", s.H}};
  return json{{"builtin", s.builtin}, {"S", s.S}, {"A", s.A}, {"H", s.H}, {"seed", s.seed}};
}

inline void check_config(const ExperimentConfig& c) {
  if (c.episodes < 1) throw ConfigError("episodes must be at least 1");
  if (!(c.gamma > 0.0 && c.gamma < 1.0)) throw ConfigError("gamma must lie in (0,1)");
  if (!(c.c > 0.0)) throw ConfigError("c must be positive");
  if (c.replications < 1) throw ConfigError("replications must be at least 1");
  if (c.cap == 0) throw ConfigError("cap must be positive");
  const bool delay = c.impairment.is_delay();
  if (c.algorithm == "alg1" && !delay) throw ConfigError("alg1 needs a delay impairment");
  if ((c.algorithm == "alg2" || c.algorithm == "alg3") && delay) {
    throw ConfigError(c.algorithm + " needs a missing impairment");
  }
  if (c.algorithm != "alg1" && c.algorithm != "alg2" && c.algorithm != "alg3" && c.algorithm != "oracle") {
    throw ConfigError("unknown algorithm '" + c.algorithm + "' (expected alg1, alg2, alg3 or oracle)");
  }
  if (c.instance.builtin == "fig2" && (c.instance.d <= 0 || c.instance.d >= c.instance.H)) {
    throw ConfigError("fig2 instance needs 0 < d < H");
  }
}

inline ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  c.instance = instance_from_json(detail::field(j, "instance", "config"));
  c.impairment = impairment_from_json(detail::field(j, "impairment", "config"));
  try {
    c.algorithm = j.value("algorithm", c.algorithm);
    c.name = j.value("name", c.name);
    c.episodes = j.value("episodes", c.episodes);
    c.gamma = j.value("gamma", c.gamma);
    c.c = j.value("c", c.c);
    c.seed = j.value("seed", c.seed);
    c.out = j.value("out", c.out);
    c.cap = j.value("cap", c.cap);
    c.replications = j.value("replications", c.replications);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  check_config(c);
  return c;
}

inline json config_to_json(const ExperimentConfig& c) {
  return json{{"instance", instance_to_json(c.instance)},
              {"impairment", impairment_to_json(c.impairment)},
              {"algorithm", c.algorithm},
              {"name", c.name},
              {"episodes", c.episodes},
              {"gamma", c.gamma},
              {"c", c.c},
              {"seed", c.seed},
              {"out", c.out},
              {"cap", c.cap},
              {"replications", c.replications}};
}

/// FNV-1a of the canonical config, leaving out the output directory, the
/// replication count and the seed.
inline std::string config_hash(const ExperimentConfig& c) {
  json j = config_to_json(c);
  j.erase("out");
  j.erase("replications");
  j.erase("seed");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Outputs

inline std::string trace_csv(const RegretTrace& tr) {
  std::string out = "episode,regret_increment,cumulative_regret,optimistic_value,oracle_value,seed\n";
  char buf[256];
  for (const auto& r : tr.records) {
    std::snprintf(buf, sizeof buf, "%d,%.12g,%.12g,%.12g,%.12g,%llu\n", r.episode, r.increment,
                  r.cumulative, r.optimistic_value, r.oracle_value,
                  static_cast<unsigned long long>(tr.seed));
    out += buf;
  }
  return out;
}

inline json gap_to_json(const GapReport& g) {
  json e1 = json::array(), e2 = json::array();
  for (double x : g.e1) e1.push_back(round12(x));
  for (double x : g.e2) e2.push_back(round12(x));
  return json{{"exact_gap", round12(g.exact_gap)}, {"bound", round12(g.bound)},
              {"e1", e1},
              {"e2", e2},
              {"v_nodelay", round12(g.v_nodelay)},
              {"v_delay", round12(g.v_delay)}};
}

inline json aug_state_to_json(const AugState& s) {
  return json{{"last_seen", s.last_seen}, {"staleness", s.staleness}, {"window", s.window}};
}

inline json aug_to_json(const AugMdp& aug) {
  const AugTopology& t = aug.topo();
  const int A = t.num_actions;
  json layers = json::array();
  for (int h = 0; h < t.horizon(); ++h) {
    const AugLayer& layer = t.layers[h];
    json states = json::array(), rows = json::array();
    for (std::size_t i = 0; i < layer.size(); ++i) {
      states.push_back(aug_state_to_json(layer.states[i]));
      for (int a = 0; a < A; ++a) {
        const std::size_t r = i * A + a;
        json succ = json::array();
        for (auto k = layer.row_begin[r]; k < layer.row_begin[r + 1]; ++k)
          succ.push_back(json{{"next", layer.edges[k].next},
                              {"observed", layer.edges[k].observed},
                              {"prob", round12(aug.prob[h][k])}});
        rows.push_back(json{{"state", i}, {"action", a}, {"reward", round12(aug.reward[h][r])},
                            {"successors", succ}});
      }
    }
    layers.push_back(json{{"step", h}, {"states", states}, {"rows", rows}});
  }
  json initial = json::array();
  for (std::size_t k = 0; k < t.initial.size(); ++k)
    initial.push_back(json{{"state", t.initial[k]}, {"weight", round12(aug.initial_weight[k])}});
  return json{{"variant", to_string(t.variant)}, {"S", t.num_states}, {"A", A},
              {"H", t.base_horizon}, {"initial", initial}, {"layers", layers}};
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

}  // namespace impobs
