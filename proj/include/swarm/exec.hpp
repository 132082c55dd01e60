#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "swarm/config.hpp"
#include "swarm/nn.hpp"
#include "swarm/perception.hpp"
#include "swarm/world.hpp"

namespace swarm {

enum class PolicyKind { greedy, lia_maddpg, lia_maddpg_no_improve };

inline PolicyKind parse_policy(const std::string& name) {
  if (name == "greedy") return PolicyKind::greedy;
  if (name == "lia_maddpg") return PolicyKind::lia_maddpg;
  if (name == "lia_maddpg_no_improve") return PolicyKind::lia_maddpg_no_improve;
  throw ConfigError("unknown policy '" + name +
                    "' (expected greedy, lia_maddpg or lia_maddpg_no_improve)");
}

inline std::string policy_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::greedy: return "greedy";
    case PolicyKind::lia_maddpg: return "lia_maddpg";
    case PolicyKind::lia_maddpg_no_improve: return "lia_maddpg_no_improve";
  }
  return "?";
}

inline bool is_learned(PolicyKind kind) { return kind != PolicyKind::greedy; }

/// What one robot can see when deciding whether to deviate: how many
/// neighbors it observes, how many of them last chose the task it is
/// proposing, and the proposed task's capacity state.
struct ExecContext {
  int robot_id = 0;
  int alpha = 0;       // observed neighbor count
  int beta_count = 0;  // neighbors whose previous target equals the proposal
  int capacity = 0;    // h_bar of the proposed task
  int bound_count = 0; // h of the proposed task
};

/// Remaining open slots, clipped at zero once the task is full.
inline int capacity_gap(int h_bar, int h) { return h_bar > h ? h_bar - h : 0; }

/// Probability of abandoning the policy's proposal. Full tasks and full
/// neighbor agreement both drive the exponent to zero, i.e. certain
/// deviation toward the fallback rule.
inline double deviation_probability(const ExecContext& ctx) {
  const int gap = capacity_gap(ctx.capacity, ctx.bound_count);
  return std::exp(-static_cast<double>(gap) * (ctx.alpha - ctx.beta_count));
}

/// Deterministic policy output for a free robot: the argmax task of the
/// actor's softmax, ties toward the lowest index.
inline Action policy_output(const NetworkParams& actor,
                            const Eigen::VectorXd& observation) {
  const Eigen::MatrixXd out = forward_eval(actor, observation.transpose());
  return Action::from_distribution(out.row(0).transpose());
}

/// Score-based fallback: argmax_j phi1 * r_ij - dist_scale * d_ij over
/// all tasks. Distances are scaled to be commensurate with phi1-sized
/// rewards.
inline int fallback_task(const WorldState& w, int robot, double dist_scale) {
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < w.n_tasks(); ++j) {
    const double d = distance(w.robots[robot].position, w.tasks[j].position);
    const double score = w.config.phi1 * w.reward_matrix(robot, j) - dist_scale * d;
    if (score > best_score) {
      best_score = score;
      best = j;
    }
  }
  return best;
}

/// Policy improvement: with probability delta(ctx) the proposal is
/// replaced by the fallback task. xi is the uniform draw in [0,1).
inline Action improved_action(const WorldState& w, const ExecContext& ctx,
                              const Action& proposed, double xi,
                              double dist_scale) {
  if (xi < deviation_probability(ctx))
    return Action::one_hot(fallback_task(w, ctx.robot_id, dist_scale), w.n_tasks());
  return proposed;
}

/// Greedy baseline: best reward-minus-distance score among tasks that
/// still have capacity; over all tasks when everything is full. Uses no
/// neighbor information at all.
inline Action greedy_policy(const WorldState& w, int robot, double dist_scale) {
  int best = -1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int pass = 0; pass < 2 && best < 0; ++pass) {
    for (int j = 0; j < w.n_tasks(); ++j) {
      if (pass == 0 && w.tasks[j].bound_count >= w.tasks[j].capacity) continue;
      const double d = distance(w.robots[robot].position, w.tasks[j].position);
      const double score = w.config.phi1 * w.reward_matrix(robot, j) - dist_scale * d;
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
  }
  return Action::one_hot(best, w.n_tasks());
}

struct ExecOptions {
  double dist_scale = 10.0;
  /// Test hook replacing the per-robot uniform draws of the improvement
  /// step; takes (robot_id, step) and must return a value in [0,1).
  std::function<double(int, int)> draw_override;
};

/// Trace callback: invoked after every step with the stepped world, the
/// executed actions and the step rewards.
using TraceSink = std::function<void(const WorldState&, const std::vector<Action>&,
                                     const Eigen::VectorXd&)>;

/// One decision round. Each robot's choice depends only on its own
/// observation, its neighbors' previous targets, public task state and
/// its private random stream, so decisions commute across robots.
inline std::vector<Action> decide_actions(const WorldState& w, PolicyKind kind,
                                          const NetworkParams* actor,
                                          const ExecOptions& opts,
                                          std::vector<Rng>& robot_rngs) {
  const int m = w.n_tasks();
  const std::vector<RelatedSet> sets = neighbor_sets(w, w.config.alpha_max);
  std::vector<Action> actions;
  actions.reserve(w.robots.size());
  for (int i = 0; i < w.n_robots(); ++i) {
    const RobotState& robot = w.robots[i];
    if (!robot.free()) {
      actions.push_back(Action::one_hot(*robot.target, m));
      continue;
    }
    if (kind == PolicyKind::greedy) {
      actions.push_back(greedy_policy(w, i, opts.dist_scale));
      continue;
    }
    const Eigen::VectorXd obs = build_observation(w, i, sets[i].neighbors);
    Action proposal = policy_output(*actor, obs);
    if (kind == PolicyKind::lia_maddpg) {
      ExecContext ctx;
      ctx.robot_id = i;
      ctx.alpha = static_cast<int>(sets[i].neighbors.size());
      for (int nb : sets[i].neighbors) {
        const auto& t = w.robots[nb].target;
        if (t && *t == proposal.task_index) ctx.beta_count += 1;
      }
      ctx.capacity = w.tasks[proposal.task_index].capacity;
      ctx.bound_count = w.tasks[proposal.task_index].bound_count;
      const double xi = opts.draw_override ? opts.draw_override(i, w.t)
                                           : robot_rngs[i].uniform01();
      proposal = improved_action(w, ctx, proposal, xi, opts.dist_scale);
    }
    actions.push_back(std::move(proposal));
  }
  return actions;
}

/// Runs one episode to completion under the chosen decision rule and
/// returns the utilities, bind times and metric inputs. Learned policies
/// require trained actor parameters matching the world's observation
/// width.
inline EpisodeResult run_execution(WorldState world, PolicyKind kind,
                                   const NetworkParams* actor,
                                   const ExecOptions& opts = {},
                                   const TraceSink& trace = {}) {
  if (is_learned(kind)) {
    if (!actor) throw ConfigError("run_execution: learned policy needs actor parameters");
    if (actor->spec.input_dim != world.obs_layout().dim() ||
        actor->spec.output_dim != world.n_tasks())
      throw ConfigError(
          "run_execution: checkpoint shape does not match the scenario "
          "(task count or neighbor cap differ)");
  }
  std::vector<Rng> robot_rngs;
  robot_rngs.reserve(world.robots.size());
  for (int i = 0; i < world.n_robots(); ++i)
    robot_rngs.emplace_back(Rng::mix(world.seed, 0xE0 + static_cast<std::uint64_t>(i)));
  while (!world.done()) {
    const std::vector<Action> actions =
        decide_actions(world, kind, actor, opts, robot_rngs);
    const StepOutcome out = world.step(actions);
    if (trace) trace(world, actions, out.rewards);
  }
  return episode_result(world);
}

}  // namespace swarm
