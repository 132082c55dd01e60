#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "swarm/config.hpp"
#include "swarm/perception.hpp"
#include "swarm/types.hpp"

namespace swarm {

/// Full simulator state. A world is mutated single-threaded; independent
/// worlds (different seeds) can run in parallel freely. All randomness
/// flows through the world's own stream, so a (config, seed) pair pins
/// the whole trajectory for a fixed action sequence.
struct WorldState {
  WorldConfig config;
  std::uint64_t seed = 0;
  int t = 0;  // completed steps
  std::vector<TaskState> tasks;
  std::vector<RobotState> robots;
  Eigen::MatrixXd reward_matrix;  // n_robots x n_tasks, entries in [0,1]
  Rng rng{0};

  int n_robots() const { return static_cast<int>(robots.size()); }
  int n_tasks() const { return static_cast<int>(tasks.size()); }
  ObsLayout obs_layout() const { return {n_tasks(), config.alpha_max}; }

  bool all_bound() const {
    for (const RobotState& r : robots)
      if (r.free()) return false;
    return true;
  }
  bool done() const { return all_bound() || t >= config.max_steps; }

  StepOutcome step(const std::vector<Action>& actions);
};

/// Reflects a coordinate into [0,1] (mirror folding at both walls).
inline double reflect_unit(double x) {
  x = std::fmod(x, 2.0);
  if (x < 0.0) x += 2.0;
  return x > 1.0 ? 2.0 - x : x;
}

/// Builds a fresh world. Sampling order is fixed and load-bearing for
/// reproducibility: per task (x, y, speed, heading), then per robot
/// (x, y, speed), then the reward matrix row-major.
inline WorldState init_world(const WorldConfig& config, std::uint64_t seed) {
  config.validate();
  WorldState w;
  w.config = config;
  w.seed = seed;
  w.rng = Rng(seed);
  w.t = 0;

  const int cap = config.task_capacity();
  w.tasks.resize(config.n_tasks);
  for (int j = 0; j < config.n_tasks; ++j) {
    TaskState& task = w.tasks[j];
    task.id = j;
    task.position = {w.rng.uniform01(), w.rng.uniform01()};
    task.speed = w.rng.uniform(config.task_speed_min_n(), config.task_speed_max_n());
    task.heading = w.rng.uniform(-kPi, kPi);
    task.capacity = cap;
    task.bound_count = 0;
  }
  w.robots.resize(config.n_robots);
  for (int i = 0; i < config.n_robots; ++i) {
    RobotState& robot = w.robots[i];
    robot.position = {w.rng.uniform01(), w.rng.uniform01()};
    robot.speed = w.rng.uniform(config.robot_speed_min_n(), config.robot_speed_max_n());
    robot.heading = 0.0;
    robot.status = 1;
    robot.accumulated_cost = 0.0;
  }
  w.reward_matrix.resize(config.n_robots, config.n_tasks);
  for (int i = 0; i < config.n_robots; ++i)
    for (int j = 0; j < config.n_tasks; ++j)
      w.reward_matrix(i, j) = w.rng.uniform01();
  return w;
}

/// Advances every task by speed * tau along its heading, reflects at the
/// arena walls, re-samples the heading uniformly in [-pi, pi), and snaps
/// bound robots back onto their tasks.
inline void step_tasks(WorldState& w) {
  const double tau = w.config.tau_s;
  for (TaskState& task : w.tasks) {
    task.position.x =
        reflect_unit(task.position.x + task.speed * tau * std::cos(task.heading));
    task.position.y =
        reflect_unit(task.position.y + task.speed * tau * std::sin(task.heading));
    task.heading = w.rng.uniform(-kPi, kPi);
  }
  for (RobotState& robot : w.robots) {
    if (!robot.free() && robot.target)
      robot.position = w.tasks[*robot.target].position;
  }
}

/// Applies the joint action: free robots adopt their chosen target, turn
/// toward its current position, advance by speed * tau and accrue that
/// cost. Bound robots ignore their action slot. A robot sitting on its
/// target (distance < 1e-12) keeps its previous heading.
inline void step_robots(WorldState& w, const std::vector<Action>& actions) {
  if (static_cast<int>(actions.size()) != w.n_robots())
    throw std::invalid_argument("step_robots: one action per robot required");
  const double tau = w.config.tau_s;
  for (int i = 0; i < w.n_robots(); ++i) {
    RobotState& robot = w.robots[i];
    if (!robot.free()) continue;
    const Action& a = actions[i];
    if (a.task_index < 0 || a.task_index >= w.n_tasks())
      throw std::invalid_argument("step_robots: action task index out of range");
    robot.target = a.task_index;
    const Vec2 to_task = w.tasks[a.task_index].position - robot.position;
    if (to_task.norm() >= 1e-12)
      robot.heading = std::atan2(to_task.y, to_task.x);
    const double move = robot.speed * tau;
    robot.position.x += move * std::cos(robot.heading);
    robot.position.y += move * std::sin(robot.heading);
    robot.accumulated_cost += move;
  }
}

/// Binds every free robot within d_bind of its target, in ascending
/// robot id. The reward slot check uses the bound count at the moment of
/// that robot's binding, so when several robots bind in one step the
/// lower ids take the remaining slots. Binding snaps the robot onto the
/// task and freezes it; bind time is the current (just completed) step.
inline std::vector<BindEvent> bind_robots(WorldState& w) {
  std::vector<BindEvent> events;
  for (int i = 0; i < w.n_robots(); ++i) {
    RobotState& robot = w.robots[i];
    if (!robot.free() || !robot.target) continue;
    TaskState& task = w.tasks[*robot.target];
    if (distance(robot.position, task.position) > w.config.d_bind_n()) continue;
    const bool slot_open = task.bound_count < task.capacity;
    task.bound_count += 1;
    robot.status = 0;
    robot.bind_time = w.t;
    robot.got_reward_slot = slot_open;
    robot.position = task.position;
    events.push_back({i, task.id, slot_open});
  }
  return events;
}

/// Per-step rewards for the robots that were free when the step began:
/// a constant penalty, the capacity-gap shaping term at the targeted
/// task, and the final reward for robots that bound into an open slot
/// this step. Robots bound in earlier steps receive exactly zero.
///
/// demand[j] is the task's occupancy measure for the shaping term. The
/// environment feeds the count of robots currently targeting j (bound
/// ones included): a task wanted by more robots than it can take shapes
/// everyone on it negatively at decision time, which is what steers the
/// swarm away from pile-ups before any binding happens. Feeding bound
/// counts instead leaves crowding invisible until robots commit, and a
/// trained policy then collects the positive gap stream forever by
/// never binding.
inline Eigen::VectorXd compute_step_rewards(
    const std::vector<std::uint8_t>& free_before,
    const std::vector<int>& targets, const std::vector<int>& demand,
    const std::vector<int>& capacities, const std::vector<BindEvent>& events,
    const Eigen::MatrixXd& reward_matrix, double phi1, double phi2_mag,
    double phi3) {
  const int n = static_cast<int>(free_before.size());
  Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (!free_before[i]) continue;
    const int j = targets[i];
    r[i] = -phi2_mag + phi3 * (capacities[j] - demand[j]);
  }
  for (const BindEvent& e : events) {
    if (e.got_final_reward) r[e.robot_id] += phi1 * reward_matrix(e.robot_id, e.task_id);
  }
  return r;
}

/// Fixed-width local view for one robot. neighbor_ids must already be
/// sorted ascending by distance and at most alpha_max long; padding
/// slots stay zero with a zero mask bit.
inline Eigen::VectorXd build_observation(const WorldState& w, int robot_id,
                                         std::span<const int> neighbor_ids) {
  const ObsLayout layout = w.obs_layout();
  Eigen::VectorXd o = Eigen::VectorXd::Zero(layout.dim());
  const RobotState& self = w.robots[robot_id];

  o[0] = self.position.x;
  o[1] = self.position.y;
  o[2] = self.speed;
  o[3] = self.heading;
  o[4] = static_cast<double>(self.status);

  for (int j = 0; j < w.n_tasks(); ++j) {
    const TaskState& task = w.tasks[j];
    const int at = layout.task_offset(j);
    o[at + 0] = task.position.x - self.position.x;
    o[at + 1] = task.position.y - self.position.y;
    o[at + 2] = task.speed - self.speed;
    o[at + 3] = wrap_angle(task.heading - self.heading);
    o[at + 4] = static_cast<double>(task.bound_count);
    o[at + 5] = w.reward_matrix(robot_id, j);  // kappa: normalized reward weight
  }

  const int n_neighbors =
      std::min<int>(layout.alpha_max, static_cast<int>(neighbor_ids.size()));
  for (int k = 0; k < n_neighbors; ++k) {
    const RobotState& other = w.robots[neighbor_ids[k]];
    const int at = layout.neighbor_offset(k);
    o[at + 0] = other.position.x - self.position.x;
    o[at + 1] = other.position.y - self.position.y;
    o[at + 2] = other.speed - self.speed;
    o[at + 3] = wrap_angle(other.heading - self.heading);
    // Previous-step target, normalized by the task count; 0 before any
    // choice has been made.
    o[at + 4] = other.target ? static_cast<double>(*other.target) / w.n_tasks() : 0.0;
    o[layout.mask_offset() + k] = 1.0;
  }
  return o;
}

inline std::vector<Vec2> robot_positions(const WorldState& w) {
  std::vector<Vec2> p(w.robots.size());
  for (std::size_t i = 0; i < w.robots.size(); ++i) p[i] = w.robots[i].position;
  return p;
}

inline std::vector<RelatedSet> neighbor_sets(const WorldState& w, int alpha_max) {
  return neighbor_sets(robot_positions(w), alpha_max);
}

inline std::vector<Eigen::VectorXd> observe_all(const WorldState& w) {
  const std::vector<RelatedSet> sets = neighbor_sets(w, w.config.alpha_max);
  std::vector<Eigen::VectorXd> out;
  out.reserve(w.robots.size());
  for (int i = 0; i < w.n_robots(); ++i)
    out.push_back(build_observation(w, i, sets[i].neighbors));
  return out;
}

/// Observations stacked as rows of a matrix (robot id = row).
inline Eigen::MatrixXd observation_matrix(const WorldState& w) {
  const std::vector<Eigen::VectorXd> obs = observe_all(w);
  Eigen::MatrixXd m(obs.size(), w.obs_layout().dim());
  for (std::size_t i = 0; i < obs.size(); ++i) m.row(i) = obs[i].transpose();
  return m;
}

/// Final per-robot utilities: the task reward if the robot bound into an
/// open slot, minus the accumulated movement cost. Robots that never
/// bound pay their full-horizon cost.
inline Eigen::VectorXd episode_utilities(const WorldState& w) {
  Eigen::VectorXd u(w.n_robots());
  for (int i = 0; i < w.n_robots(); ++i) {
    const RobotState& r = w.robots[i];
    u[i] = -r.accumulated_cost;
    if (!r.free() && r.got_reward_slot) u[i] += w.reward_matrix(i, *r.target);
  }
  return u;
}

/// Collects the episode outcome from a finished (or truncated) world.
inline EpisodeResult episode_result(const WorldState& w) {
  EpisodeResult res;
  res.utilities = episode_utilities(w);
  res.steps = w.t;
  res.bind_times.resize(w.n_robots());
  res.bound.resize(w.n_robots());
  res.got_final.resize(w.n_robots());
  for (int i = 0; i < w.n_robots(); ++i) {
    const RobotState& r = w.robots[i];
    res.bound[i] = r.free() ? 0 : 1;
    res.bind_times[i] = r.bind_time ? *r.bind_time : w.config.max_steps;
    res.got_final[i] = (!r.free() && r.got_reward_slot) ? 1 : 0;
  }
  return res;
}

/// One full environment transition: tasks move, robots move, bindings
/// resolve, rewards are computed against the pre-step bound counts, and
/// fresh observations are produced.
inline StepOutcome WorldState::step(const std::vector<Action>& actions) {
  if (done()) throw std::logic_error("step: episode already finished");
  std::vector<std::uint8_t> free_before(robots.size());
  std::vector<int> caps(tasks.size());
  for (std::size_t i = 0; i < robots.size(); ++i)
    free_before[i] = robots[i].free() ? 1 : 0;
  for (std::size_t j = 0; j < tasks.size(); ++j) caps[j] = tasks[j].capacity;

  step_tasks(*this);
  step_robots(*this, actions);
  ++t;
  StepOutcome out;
  out.newly_bound = bind_robots(*this);

  // Demand for the shaping term: robots targeting each task after this
  // step's choices, bound robots included.
  std::vector<int> targets(robots.size(), 0);
  std::vector<int> demand(tasks.size(), 0);
  for (std::size_t i = 0; i < robots.size(); ++i) {
    if (robots[i].target) {
      targets[i] = *robots[i].target;
      demand[targets[i]] += 1;
    }
  }
  out.rewards =
      compute_step_rewards(free_before, targets, demand, caps, out.newly_bound,
                           reward_matrix, config.phi1, config.phi2_mag, config.phi3);
  out.next_observations = observe_all(*this);
  out.done = done();
  return out;
}

}  // namespace swarm
