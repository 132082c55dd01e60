#pragma once

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "swarm/exec.hpp"
#include "swarm/metrics.hpp"
#include "swarm/trainer.hpp"
#include "swarm/world.hpp"

namespace swarm {

struct Scenario {
  int id = 0;
  std::uint64_t seed = 0;
};

/// A pinned batch of initial conditions: every policy evaluated against
/// a set sees bit-identical initial worlds.
struct ScenarioSet {
  std::string scale = "small";
  WorldConfig config;
  std::vector<Scenario> scenarios;
};

inline ScenarioSet make_scenarios(const WorldConfig& config, int count,
                                  std::uint64_t base_seed,
                                  const std::string& scale) {
  if (count < 1) throw ConfigError("scenario count must be >= 1");
  config.validate();
  ScenarioSet set;
  set.scale = scale;
  set.config = config;
  set.scenarios.reserve(count);
  for (int k = 0; k < count; ++k)
    set.scenarios.push_back({k, Rng::mix(base_seed, 0x5CE00 + static_cast<std::uint64_t>(k))});
  return set;
}

namespace harness_detail {

inline nlohmann::json world_config_to_json(const WorldConfig& w) {
  return {{"n_robots", w.n_robots},
          {"n_tasks", w.n_tasks},
          {"arena_side_m", w.arena_side_m},
          {"tau_s", w.tau_s},
          {"robot_speed_min", w.robot_speed_min},
          {"robot_speed_max", w.robot_speed_max},
          {"task_speed_min", w.task_speed_min},
          {"task_speed_max", w.task_speed_max},
          {"d_bind_m", w.d_bind_m},
          {"alpha_max", w.alpha_max},
          {"max_steps", w.max_steps},
          {"phi1", w.phi1},
          {"phi2_mag", w.phi2_mag},
          {"phi3", w.phi3},
          {"seed", w.seed}};
}

inline WorldConfig world_config_from_json(const nlohmann::json& j) {
  WorldConfig w;
  w.n_robots = j.at("n_robots").get<int>();
  w.n_tasks = j.at("n_tasks").get<int>();
  w.arena_side_m = j.at("arena_side_m").get<double>();
  w.tau_s = j.at("tau_s").get<double>();
  w.robot_speed_min = j.at("robot_speed_min").get<double>();
  w.robot_speed_max = j.at("robot_speed_max").get<double>();
  w.task_speed_min = j.at("task_speed_min").get<double>();
  w.task_speed_max = j.at("task_speed_max").get<double>();
  w.d_bind_m = j.at("d_bind_m").get<double>();
  w.alpha_max = j.at("alpha_max").get<int>();
  w.max_steps = j.at("max_steps").get<int>();
  w.phi1 = j.at("phi1").get<double>();
  w.phi2_mag = j.at("phi2_mag").get<double>();
  w.phi3 = j.at("phi3").get<double>();
  w.seed = j.at("seed").get<std::uint64_t>();
  w.validate();
  return w;
}

/// Deterministic shortest-ish float formatting shared by all CSV output.
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace harness_detail

inline void save_scenarios(const std::string& path, const ScenarioSet& set) {
  nlohmann::json j;
  j["scale"] = set.scale;
  j["config"] = harness_detail::world_config_to_json(set.config);
  j["scenarios"] = nlohmann::json::array();
  for (const Scenario& s : set.scenarios)
    j["scenarios"].push_back({{"id", s.id}, {"seed", s.seed}});
  std::ofstream out(path);
  if (!out) throw DataError("cannot write scenario manifest: " + path);
  out << j.dump(2) << "\n";
}

inline ScenarioSet load_scenarios(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scenario manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed scenario manifest " + path + ": " + e.what());
  }
  try {
    ScenarioSet set;
    set.scale = j.at("scale").get<std::string>();
    set.config = harness_detail::world_config_from_json(j.at("config"));
    for (const auto& s : j.at("scenarios"))
      set.scenarios.push_back({s.at("id").get<int>(), s.at("seed").get<std::uint64_t>()});
    std::set<std::uint64_t> seen;
    for (const Scenario& s : set.scenarios) {
      if (!seen.insert(s.seed).second)
        throw DataError("scenario manifest has duplicate seeds: " + path);
    }
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("scenario manifest missing fields in " + path + ": " + e.what());
  }
}

struct ScenarioRow {
  int scenario_id = 0;
  std::string policy;
  double total_utility = 0.0;
  double natu_raw = 0.0;
  double natu = 0.0;
  double natc = 0.0;
  int winner = 0;
};

struct PolicySummary {
  double natu_mean = 0.0;
  double natu_std = 0.0;
  double natc_mean = 0.0;
  double natc_std = 0.0;
  double dr = 0.0;
};

struct MetricsReport {
  std::vector<ScenarioRow> rows;  // sorted by (scenario, policy order)
  std::vector<std::pair<std::string, PolicySummary>> summary;
};

/// Worker cap for scenario evaluation; SWARM_ALLOC_THREADS overrides the
/// hardware default.
inline int thread_cap() {
  if (const char* env = std::getenv("SWARM_ALLOC_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs every policy on every scenario from identical initial worlds.
/// Scenarios are independent and distributed over worker threads; rows
/// come back ordered by scenario id, so the report is deterministic.
inline MetricsReport evaluate(const ScenarioSet& set,
                              const std::vector<PolicyKind>& policies,
                              const NetworkParams* actor,
                              const ExecConfig& exec_cfg) {
  if (set.scenarios.empty()) throw ConfigError("evaluate: empty scenario set");
  if (policies.empty()) throw ConfigError("evaluate: no policies selected");
  for (PolicyKind kind : policies) {
    if (!is_learned(kind)) continue;
    if (!actor) throw ConfigError("evaluate: learned policy requires a checkpoint");
    const int obs_dim = ObsLayout{set.config.n_tasks, set.config.alpha_max}.dim();
    if (actor->spec.input_dim != obs_dim || actor->spec.output_dim != set.config.n_tasks)
      throw ConfigError(
          "evaluate: checkpoint was trained for a different task count or "
          "neighbor cap (observation width mismatch)");
  }

  const int n_scenarios = static_cast<int>(set.scenarios.size());
  std::vector<std::vector<ScenarioRow>> per_scenario(n_scenarios);
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::string error_message;
  std::mutex error_mutex;

  const auto worker = [&]() {
    ExecOptions opts;
    opts.dist_scale = exec_cfg.dist_scale;
    for (;;) {
      const int s = next.fetch_add(1);
      if (s >= n_scenarios || failed.load()) break;
      try {
        const Scenario& sc = set.scenarios[s];
        const WorldState world0 = init_world(set.config, sc.seed);
        std::vector<ScenarioRow> rows;
        double best = -std::numeric_limits<double>::infinity();
        int best_at = -1;
        bool tie = false;
        for (std::size_t p = 0; p < policies.size(); ++p) {
          const EpisodeResult episode =
              run_execution(init_world(set.config, sc.seed), policies[p], actor, opts);
          ScenarioRow row;
          row.scenario_id = sc.id;
          row.policy = policy_name(policies[p]);
          row.total_utility = episode.total_utility();
          const NatuResult nr = natu(episode, world0);
          row.natu_raw = nr.raw;
          row.natu = nr.reported;
          row.natc = natc(episode, set.config.max_steps);
          if (row.natu > 1.05) {
            // The greedy denominator should dominate every feasible
            // assignment; anything past 1.05 deserves eyes.
            std::fprintf(stderr,
                         "warning: natu %.6f above certified range "
                         "(scenario %d, %s)\n",
                         row.natu, sc.id, row.policy.c_str());
          }
          rows.push_back(std::move(row));
          if (rows.back().total_utility > best) {
            best = rows.back().total_utility;
            best_at = static_cast<int>(p);
            tie = false;
          } else if (rows.back().total_utility == best) {
            tie = true;
          }
        }
        if (best_at >= 0 && !tie) rows[best_at].winner = 1;
        per_scenario[s] = std::move(rows);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        error_message = e.what();
        failed.store(true);
      }
    }
  };

  const int n_threads = std::min(thread_cap(), n_scenarios);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failed.load()) throw std::runtime_error("evaluate: " + error_message);

  MetricsReport report;
  std::map<std::string, std::vector<double>> totals;
  std::map<std::string, std::vector<double>> natus;
  std::map<std::string, std::vector<double>> natcs;
  for (const auto& rows : per_scenario) {
    for (const ScenarioRow& row : rows) {
      totals[row.policy].push_back(row.total_utility);
      natus[row.policy].push_back(row.natu);
      natcs[row.policy].push_back(row.natc);
      report.rows.push_back(row);
    }
  }
  const std::map<std::string, double> dr = dominance_rate(totals);
  const auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  const auto std_of = [&](const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  };
  for (PolicyKind kind : policies) {
    const std::string name = policy_name(kind);
    PolicySummary ps;
    ps.natu_mean = mean_of(natus[name]);
    ps.natu_std = std_of(natus[name], ps.natu_mean);
    ps.natc_mean = mean_of(natcs[name]);
    ps.natc_std = std_of(natcs[name], ps.natc_mean);
    ps.dr = dr.at(name);
    report.summary.emplace_back(name, ps);
  }
  return report;
}

inline void write_metrics_csv(const std::string& path, const MetricsReport& report) {
  using harness_detail::fmt;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write metrics csv: " + path);
  out << "scenario_id,policy,total_utility,natu_raw,natu,natc,winner\n";
  for (const ScenarioRow& r : report.rows) {
    out << r.scenario_id << ',' << r.policy << ',' << fmt(r.total_utility) << ','
        << fmt(r.natu_raw) << ',' << fmt(r.natu) << ',' << fmt(r.natc) << ','
        << r.winner << '\n';
  }
}

inline void write_summary(const std::string& path, const MetricsReport& report,
                          const ScenarioSet& set) {
  using harness_detail::fmt;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write summary: " + path);
  out << "scenarios=" << set.scenarios.size() << " scale=" << set.scale
      << " n_robots=" << set.config.n_robots << " n_tasks=" << set.config.n_tasks
      << "\n";
  for (const auto& [name, ps] : report.summary) {
    out << name << ": natu=" << fmt(ps.natu_mean) << "+-" << fmt(ps.natu_std)
        << " natc=" << fmt(ps.natc_mean) << "+-" << fmt(ps.natc_std)
        << " dr=" << fmt(ps.dr) << "\n";
  }
}

inline void write_training_csv(const std::string& path,
                               const std::vector<TrainLogRow>& log) {
  using harness_detail::fmt;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write training csv: " + path);
  out << "episode,mean_utility,normalized_utility,critic_loss,epsilon,wall_ms\n";
  for (const TrainLogRow& row : log) {
    out << row.episode << ',' << fmt(row.mean_utility) << ','
        << fmt(row.normalized_utility) << ',' << fmt(row.critic_loss) << ','
        << fmt(row.epsilon) << ',' << row.wall_ms << '\n';
  }
}

/// Splits a training curve into one (episode, value) series file per
/// numeric column, ready for external plotting.
inline void write_plot_series(const std::string& curve_csv,
                              const std::string& out_dir) {
  std::ifstream in(curve_csv);
  if (!in) throw DataError("cannot open training csv: " + curve_csv);
  std::string header;
  if (!std::getline(in, header)) throw DataError("empty training csv: " + curve_csv);
  std::vector<std::string> cols;
  {
    std::stringstream ss(header);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  if (cols.size() < 2 || cols[0] != "episode")
    throw DataError("unexpected training csv header: " + header);
  std::vector<std::ofstream> outs;
  for (std::size_t c = 1; c < cols.size(); ++c) {
    outs.emplace_back(out_dir + "/curve_" + cols[c] + ".csv");
    if (!outs.back()) throw DataError("cannot write curve file in " + out_dir);
    outs.back() << "episode," << cols[c] << "\n";
  }
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> fields;
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != cols.size())
      throw DataError("ragged row in training csv: " + line);
    for (std::size_t c = 1; c < cols.size(); ++c)
      outs[c - 1] << fields[0] << ',' << fields[c] << '\n';
  }
}

/// JSON-lines trace sink: one record per step with time, task state,
/// robot state and per-robot rewards.
inline TraceSink jsonl_trace_sink(std::ostream& out) {
  return [&out](const WorldState& w, const std::vector<Action>& actions,
                const Eigen::VectorXd& rewards) {
    nlohmann::json rec;
    rec["t"] = w.t;
    auto tasks = nlohmann::json::array();
    for (const TaskState& task : w.tasks)
      tasks.push_back({{"x", task.position.x},
                       {"y", task.position.y},
                       {"h", task.bound_count}});
    rec["tasks"] = std::move(tasks);
    auto robots = nlohmann::json::array();
    for (std::size_t i = 0; i < w.robots.size(); ++i) {
      const RobotState& r = w.robots[i];
      robots.push_back({{"x", r.position.x},
                        {"y", r.position.y},
                        {"c", r.status},
                        {"g", r.target ? *r.target : -1}});
    }
    rec["robots"] = std::move(robots);
    auto rew = nlohmann::json::array();
    for (Eigen::Index i = 0; i < rewards.size(); ++i) rew.push_back(rewards[i]);
    rec["rewards"] = std::move(rew);
    (void)actions;
    out << rec.dump() << "\n";
  };
}

}  // namespace swarm
