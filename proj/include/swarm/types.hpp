#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "swarm/common.hpp"

namespace swarm {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  double norm() const { return std::hypot(x, y); }
};

inline double distance(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

/// One movable task. Positions are in normalized arena units [0,1];
/// speeds are arena units per second.
struct TaskState {
  Vec2 position;
  double speed = 0.0;
  double heading = 0.0;   // radians in [-pi, pi)
  int capacity = 1;       // max robots the task rewards
  int bound_count = 0;    // robots bound so far (never decreases)
  int id = 0;
};

/// One robot. status == 1 means free to choose; 0 means bound forever.
struct RobotState {
  Vec2 position;
  double speed = 0.0;     // arena units per second, constant per episode
  double heading = 0.0;   // radians, direction of last movement
  int status = 1;
  std::optional<int> target;     // chosen task; fixed once bound
  std::optional<int> bind_time;  // step index of binding
  bool got_reward_slot = false;  // bound while the task still had capacity
  double accumulated_cost = 0.0; // sum of speed*tau while free

  bool free() const { return status == 1; }
};

/// Task-selection action: the hard index plus the policy's soft output.
/// The environment executes task_index; the distribution is what the
/// critic consumes and what gradients flow through.
struct Action {
  int task_index = 0;
  Eigen::VectorXd distribution;

  static Action one_hot(int task, int n_tasks) {
    Action a;
    a.task_index = task;
    a.distribution = Eigen::VectorXd::Zero(n_tasks);
    a.distribution[task] = 1.0;
    return a;
  }

  /// Builds an action from a simplex vector; the index is the argmax
  /// with ties broken toward the lowest index.
  static Action from_distribution(Eigen::VectorXd dist) {
    Action a;
    a.task_index = argmax(dist);
    a.distribution = std::move(dist);
    return a;
  }

  static int argmax(const Eigen::VectorXd& v) {
    int best = 0;
    for (int j = 1; j < v.size(); ++j) {
      if (v[j] > v[best]) best = j;
    }
    return best;
  }
};

/// Layout of the fixed-width per-robot observation vector:
///   [ self (5) | per-task groups (6 each) | per-neighbor groups (5 each)
///     | neighbor validity mask (alpha_max) ]
struct ObsLayout {
  int n_tasks = 0;
  int alpha_max = 0;

  static constexpr int kSelfWidth = 5;
  static constexpr int kTaskWidth = 6;
  static constexpr int kNeighborWidth = 5;

  int self_offset() const { return 0; }
  int task_offset(int j) const { return kSelfWidth + kTaskWidth * j; }
  int neighbor_offset(int k) const {
    return kSelfWidth + kTaskWidth * n_tasks + kNeighborWidth * k;
  }
  int mask_offset() const {
    return kSelfWidth + kTaskWidth * n_tasks + kNeighborWidth * alpha_max;
  }
  int dim() const { return mask_offset() + alpha_max; }
};

struct BindEvent {
  int robot_id = 0;
  int task_id = 0;
  bool got_final_reward = false;
};

/// Result of one environment step.
struct StepOutcome {
  Eigen::VectorXd rewards;                       // per robot
  std::vector<Eigen::VectorXd> next_observations;
  std::vector<BindEvent> newly_bound;
  bool done = false;
};

/// Per-robot outcome of a finished rollout plus what the metrics need.
struct EpisodeResult {
  Eigen::VectorXd utilities;       // r_(i,g_i) if rewarded, minus cost
  std::vector<int> bind_times;     // horizon length when never bound
  std::vector<std::uint8_t> bound;
  std::vector<std::uint8_t> got_final;
  int steps = 0;

  double total_utility() const { return utilities.sum(); }
};

}  // namespace swarm
