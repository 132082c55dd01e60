#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "swarm/common.hpp"

namespace swarm {

/// Arena and reward parameters. Raw values carry physical units (meters,
/// seconds); the *_n accessors return the normalized arena-unit versions
/// the simulator works in.
struct WorldConfig {
  int n_robots = 30;
  int n_tasks = 5;
  double arena_side_m = 1000.0;
  double tau_s = 1.0;
  double robot_speed_min = 2.0;  // m/s
  double robot_speed_max = 5.0;
  double task_speed_min = 0.5;
  double task_speed_max = 1.0;
  double d_bind_m = 30.0;
  int alpha_max = 10;
  int max_steps = 150;
  double phi1 = 10.0;
  double phi2_mag = 0.001;  // per-step penalty magnitude
  double phi3 = 1.0;
  std::uint64_t seed = 1;

  double d_bind_n() const { return d_bind_m / arena_side_m; }
  double robot_speed_min_n() const { return robot_speed_min / arena_side_m; }
  double robot_speed_max_n() const { return robot_speed_max / arena_side_m; }
  double task_speed_min_n() const { return task_speed_min / arena_side_m; }
  double task_speed_max_n() const { return task_speed_max / arena_side_m; }
  int task_capacity() const {
    return (n_robots + n_tasks - 1) / n_tasks;  // ceil(N / M)
  }

  void validate() const {
    if (n_robots < 1) throw ConfigError("n_robots must be >= 1");
    if (n_tasks < 1) throw ConfigError("n_tasks must be >= 1");
    if (alpha_max < 0) throw ConfigError("alpha_max must be >= 0");
    if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
    if (arena_side_m <= 0) throw ConfigError("arena_side_m must be positive");
    if (tau_s <= 0) throw ConfigError("tau_s must be positive");
    if (robot_speed_min <= 0 || robot_speed_max < robot_speed_min)
      throw ConfigError("robot speed range must be positive and ordered");
    if (task_speed_min < 0 || task_speed_max < task_speed_min)
      throw ConfigError("task speed range must be non-negative and ordered");
    if (d_bind_m <= 0) throw ConfigError("d_bind_m must be positive");
    if (phi2_mag < 0) throw ConfigError("phi2_mag must be non-negative");
  }
};

/// Network shape switches shared by the policy and value nets.
struct NetConfig {
  std::vector<int> hidden = {128, 128};
  bool policy_residual = true;
  bool policy_batch_norm = false;
  bool critic_residual = false;
  bool critic_batch_norm = false;
};

struct TrainConfig {
  double gamma = 0.95;
  int batch_size = 64;
  double actor_lr = 0.001;
  double critic_lr = 0.002;
  double eta = 0.01;  // soft target update rate
  int episodes = 3000;
  int buffer_capacity = 5000;
  double epsilon_start = 1.0;
  double epsilon_final = 0.05;
  double epsilon_decay_frac = 0.5;  // fraction of episodes spent decaying
  double actor_entropy_reg = 1.0;   // softmax anti-saturation bonus
  int update_rounds = 1;            // per-robot update rounds per episode
  bool priority_replay = false;
  int checkpoint_every = 0;  // 0 = final checkpoint only
  double beta = -1.0;        // aggregation weight exponent
  NetConfig net;

  void validate() const {
    if (gamma <= 0.0 || gamma >= 1.0) throw ConfigError("gamma must be in (0,1)");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (actor_lr <= 0 || critic_lr <= 0) throw ConfigError("learning rates must be positive");
    if (eta < 0 || eta > 1) throw ConfigError("eta must be in [0,1]");
    if (episodes < 0) throw ConfigError("episodes must be >= 0");
    if (buffer_capacity < 1) throw ConfigError("buffer_capacity must be >= 1");
    if (epsilon_start < 0 || epsilon_start > 1 || epsilon_final < 0 ||
        epsilon_final > 1)
      throw ConfigError("epsilon bounds must be in [0,1]");
    if (epsilon_decay_frac < 0 || epsilon_decay_frac > 1)
      throw ConfigError("epsilon_decay_frac must be in [0,1]");
    if (actor_entropy_reg < 0) throw ConfigError("actor_entropy_reg must be >= 0");
    if (update_rounds < 0) throw ConfigError("update_rounds must be >= 0");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
    for (int h : net.hidden)
      if (h < 1) throw ConfigError("hidden layer widths must be >= 1");
  }
};

struct ExecConfig {
  double dist_scale = 10.0;  // distance weight in the fallback score
  double beta = -1.0;
};

struct Config {
  WorldConfig world;
  TrainConfig train;
  ExecConfig exec;
};

namespace detail {

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

}  // namespace detail

/// Parses "key = value" text. '#' starts a comment; blank lines ignored.
/// Unknown keys are rejected so typos fail loudly.
inline Config parse_config(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
      if (blank) continue;
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": empty key or value");

    try {
      auto& w = cfg.world;
      auto& t = cfg.train;
      if (key == "n_robots") w.n_robots = std::stoi(val);
      else if (key == "n_tasks") w.n_tasks = std::stoi(val);
      else if (key == "arena_side_m") w.arena_side_m = std::stod(val);
      else if (key == "tau_s") w.tau_s = std::stod(val);
      else if (key == "robot_speed_min") w.robot_speed_min = std::stod(val);
      else if (key == "robot_speed_max") w.robot_speed_max = std::stod(val);
      else if (key == "task_speed_min") w.task_speed_min = std::stod(val);
      else if (key == "task_speed_max") w.task_speed_max = std::stod(val);
      else if (key == "d_bind_m") w.d_bind_m = std::stod(val);
      else if (key == "alpha_max") w.alpha_max = std::stoi(val);
      else if (key == "max_steps") w.max_steps = std::stoi(val);
      else if (key == "phi1") w.phi1 = std::stod(val);
      else if (key == "phi2_mag") w.phi2_mag = std::stod(val);
      else if (key == "phi3") w.phi3 = std::stod(val);
      else if (key == "seed") w.seed = std::stoull(val);
      else if (key == "beta") t.beta = cfg.exec.beta = std::stod(val);
      else if (key == "gamma") t.gamma = std::stod(val);
      else if (key == "batch_size") t.batch_size = std::stoi(val);
      else if (key == "actor_lr") t.actor_lr = std::stod(val);
      else if (key == "critic_lr") t.critic_lr = std::stod(val);
      else if (key == "eta") t.eta = std::stod(val);
      else if (key == "episodes") t.episodes = std::stoi(val);
      else if (key == "buffer_capacity") t.buffer_capacity = std::stoi(val);
      else if (key == "epsilon_start") t.epsilon_start = std::stod(val);
      else if (key == "epsilon_final") t.epsilon_final = std::stod(val);
      else if (key == "epsilon_decay_frac") t.epsilon_decay_frac = std::stod(val);
      else if (key == "actor_entropy_reg") t.actor_entropy_reg = std::stod(val);
      else if (key == "update_rounds") t.update_rounds = std::stoi(val);
      else if (key == "priority_replay") t.priority_replay = std::stoi(val) != 0;
      else if (key == "checkpoint_every") t.checkpoint_every = std::stoi(val);
      else if (key == "hidden_dims") t.net.hidden = detail::parse_int_list(val);
      else if (key == "policy_residual") t.net.policy_residual = std::stoi(val) != 0;
      else if (key == "policy_batch_norm") t.net.policy_batch_norm = std::stoi(val) != 0;
      else if (key == "critic_residual") t.net.critic_residual = std::stoi(val) != 0;
      else if (key == "critic_batch_norm") t.net.critic_batch_norm = std::stoi(val) != 0;
      else if (key == "exec_dist_scale") cfg.exec.dist_scale = std::stod(val);
      else
        throw ConfigError("unknown config key '" + key + "' (line " +
                          std::to_string(line_no) + ")");
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": cannot parse value '" + val + "' for key '" + key +
                        "'");
    }
  }
  cfg.world.validate();
  cfg.train.validate();
  return cfg;
}

inline Config load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

}  // namespace swarm
