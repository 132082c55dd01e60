#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "swarm/config.hpp"
#include "swarm/metrics.hpp"
#include "swarm/nn.hpp"
#include "swarm/perception.hpp"
#include "swarm/replay.hpp"
#include "swarm/world.hpp"

namespace swarm {

inline MlpSpec actor_spec(int obs_dim, int n_tasks, const NetConfig& net) {
  return {obs_dim, net.hidden, n_tasks, net.policy_residual,
          net.policy_batch_norm, Head::softmax};
}

/// The critic sees exactly the robot's own observation and action plus
/// the two aggregated vectors, concatenated. Nothing else reaches it, so
/// its input width is fixed no matter how many robots are related.
inline int critic_input_dim(int obs_dim, int n_tasks) {
  return 2 * (obs_dim + n_tasks);
}

inline MlpSpec critic_spec(int obs_dim, int n_tasks, const NetConfig& net) {
  return {critic_input_dim(obs_dim, n_tasks), net.hidden, 1, net.critic_residual,
          net.critic_batch_norm, Head::linear};
}

inline Eigen::MatrixXd assemble_critic_input(const Eigen::MatrixXd& obs,
                                             const Eigen::MatrixXd& act,
                                             const Eigen::MatrixXd& agg_obs,
                                             const Eigen::MatrixXd& agg_act) {
  Eigen::MatrixXd in(obs.rows(), obs.cols() + act.cols() + agg_obs.cols() +
                                     agg_act.cols());
  in << obs, act, agg_obs, agg_act;
  return in;
}

/// Generates one episode with the given policy and epsilon-greedy
/// exploration: with probability epsilon a free robot executes (and
/// stores) a uniformly random one-hot instead of its softmax output.
/// Bound robots repeat their binding one-hot. Every step's transition,
/// including the aggregated vectors and the next-step snapshot, lands in
/// the buffer when one is supplied.
inline EpisodeResult rollout_episode(WorldState& world,
                                     const NetworkParams& actor, double epsilon,
                                     double beta, Rng& explore_rng,
                                     ReplayBuffer* buffer) {
  const int n = world.n_robots();
  const int m = world.n_tasks();
  const int obs_dim = world.obs_layout().dim();
  if (actor.spec.input_dim != obs_dim || actor.spec.output_dim != m)
    throw ConfigError("rollout: actor spec does not match the world's observation width");

  Eigen::MatrixXd obs = observation_matrix(world);
  while (!world.done()) {
    const Eigen::MatrixXd policy_out = forward_eval(actor, obs);
    std::vector<Action> actions;
    actions.reserve(n);
    std::vector<std::uint8_t> was_free(n);
    for (int i = 0; i < n; ++i) {
      const RobotState& robot = world.robots[i];
      was_free[i] = robot.free() ? 1 : 0;
      if (!robot.free()) {
        actions.push_back(Action::one_hot(*robot.target, m));
      } else if (explore_rng.uniform01() < epsilon) {
        actions.push_back(Action::one_hot(explore_rng.uniform_int(m), m));
      } else {
        actions.push_back(Action::from_distribution(policy_out.row(i).transpose()));
      }
    }

    Eigen::MatrixXd act(n, m);
    for (int i = 0; i < n; ++i) act.row(i) = actions[i].distribution.transpose();
    const std::vector<Vec2> positions = robot_positions(world);
    const std::vector<RelatedSet> related = related_sets(
        positions, neighbor_sets(positions, world.config.alpha_max), actions);
    Eigen::MatrixXd agg_obs(n, obs_dim);
    Eigen::MatrixXd agg_act(n, m);
    for (int i = 0; i < n; ++i) {
      const AggregatedInfo info = aggregate(related[i], obs, act, beta);
      agg_obs.row(i) = info.obs.transpose();
      agg_act.row(i) = info.act.transpose();
    }

    const StepOutcome outcome = world.step(actions);

    if (buffer) {
      TransitionRecord rec;
      rec.obs = obs;
      rec.act = std::move(act);
      rec.agg_obs = std::move(agg_obs);
      rec.agg_act = std::move(agg_act);
      rec.rewards = outcome.rewards;
      rec.next_obs.resize(n, obs_dim);
      for (int i = 0; i < n; ++i)
        rec.next_obs.row(i) = outcome.next_observations[i].transpose();
      rec.next_positions.resize(n, 2);
      rec.next_target.resize(n);
      rec.active = was_free;
      rec.done.assign(n, 0);
      rec.next_free.resize(n);
      for (const BindEvent& e : outcome.newly_bound) rec.done[e.robot_id] = 1;
      for (int i = 0; i < n; ++i) {
        rec.next_positions(i, 0) = world.robots[i].position.x;
        rec.next_positions(i, 1) = world.robots[i].position.y;
        rec.next_target[i] = world.robots[i].target ? *world.robots[i].target : -1;
        rec.next_free[i] = world.robots[i].free() ? 1 : 0;
      }
      buffer->push(std::move(rec));
    }

    obs.resize(n, obs_dim);
    for (int i = 0; i < n; ++i) obs.row(i) = outcome.next_observations[i].transpose();
  }
  return episode_result(world);
}

/// The rows of one robot across a sampled minibatch, restricted to
/// records where that robot was still acting.
struct RobotBatch {
  std::vector<std::size_t> record_ids;
  Eigen::MatrixXd obs;
  Eigen::MatrixXd act;
  Eigen::MatrixXd agg_obs;
  Eigen::MatrixXd agg_act;
  Eigen::VectorXd reward;
  std::vector<std::uint8_t> done;

  Eigen::Index rows() const { return obs.rows(); }
};

inline std::optional<RobotBatch> assemble_robot_batch(
    const ReplayBuffer& buffer, const std::vector<std::size_t>& indices,
    int robot) {
  std::vector<std::size_t> keep;
  for (std::size_t idx : indices)
    if (buffer[idx].active[robot]) keep.push_back(idx);
  if (keep.empty()) return std::nullopt;
  const TransitionRecord& first = buffer[keep.front()];
  RobotBatch b;
  b.record_ids = keep;
  const auto rows = static_cast<Eigen::Index>(keep.size());
  b.obs.resize(rows, first.obs.cols());
  b.act.resize(rows, first.act.cols());
  b.agg_obs.resize(rows, first.agg_obs.cols());
  b.agg_act.resize(rows, first.agg_act.cols());
  b.reward.resize(rows);
  b.done.resize(keep.size());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const TransitionRecord& rec = buffer[keep[r]];
    b.obs.row(r) = rec.obs.row(robot);
    b.act.row(r) = rec.act.row(robot);
    b.agg_obs.row(r) = rec.agg_obs.row(robot);
    b.agg_act.row(r) = rec.agg_act.row(robot);
    b.reward[r] = rec.rewards[robot];
    b.done[r] = rec.done[robot];
  }
  return b;
}

/// TD targets y = r + gamma * q' for one robot's batch (y = r on the
/// binding transition). The next-step actions come from the target
/// policy for still-free robots and from the binding one-hot otherwise;
/// related sets and aggregated vectors are recomputed at t+1 from the
/// stored snapshot with those actions.
inline Eigen::VectorXd critic_target(const ReplayBuffer& buffer,
                                     const RobotBatch& batch, int robot,
                                     const NetworkParams& target_actor,
                                     const NetworkParams& target_critic,
                                     double gamma, double beta, int alpha_max) {
  const Eigen::Index rows = batch.rows();
  Eigen::VectorXd y = batch.reward;

  std::vector<Eigen::Index> boot_rows;
  for (Eigen::Index r = 0; r < rows; ++r)
    if (!batch.done[r]) boot_rows.push_back(r);
  if (boot_rows.empty() || gamma == 0.0) return y;

  const int n = static_cast<int>(buffer[batch.record_ids[0]].next_target.size());
  const int m = static_cast<int>(batch.act.cols());
  const int obs_dim = static_cast<int>(batch.obs.cols());

  // One stacked forward over every still-free robot of every
  // bootstrapped record.
  std::vector<std::pair<Eigen::Index, int>> free_rows;
  for (Eigen::Index r : boot_rows) {
    const TransitionRecord& rec = buffer[batch.record_ids[r]];
    for (int k = 0; k < n; ++k)
      if (rec.next_free[k]) free_rows.emplace_back(r, k);
  }
  Eigen::MatrixXd policy_in(static_cast<Eigen::Index>(free_rows.size()), obs_dim);
  for (std::size_t f = 0; f < free_rows.size(); ++f) {
    const auto& [r, k] = free_rows[f];
    policy_in.row(static_cast<Eigen::Index>(f)) =
        buffer[batch.record_ids[r]].next_obs.row(k);
  }
  Eigen::MatrixXd policy_out;
  if (policy_in.rows() > 0) policy_out = forward_eval(target_actor, policy_in);

  Eigen::MatrixXd critic_in(static_cast<Eigen::Index>(boot_rows.size()),
                            critic_input_dim(obs_dim, m));
  std::size_t cursor = 0;
  Eigen::MatrixXd next_act(n, m);
  std::vector<Action> next_actions(n);
  std::vector<Vec2> next_pos(n);
  for (std::size_t br = 0; br < boot_rows.size(); ++br) {
    const Eigen::Index r = boot_rows[br];
    const TransitionRecord& rec = buffer[batch.record_ids[r]];
    for (int k = 0; k < n; ++k) {
      if (rec.next_free[k]) {
        next_act.row(k) = policy_out.row(static_cast<Eigen::Index>(cursor));
        ++cursor;
        next_actions[k] = Action::from_distribution(next_act.row(k).transpose());
      } else {
        next_actions[k] = Action::one_hot(rec.next_target[k], m);
        next_act.row(k) = next_actions[k].distribution.transpose();
      }
      next_pos[k] = {rec.next_positions(k, 0), rec.next_positions(k, 1)};
    }
    const std::vector<RelatedSet> related =
        related_sets(next_pos, neighbor_sets(next_pos, alpha_max), next_actions);
    const AggregatedInfo info = aggregate(related[robot], rec.next_obs, next_act, beta);
    critic_in.row(static_cast<Eigen::Index>(br))
        << rec.next_obs.row(robot),
        next_act.row(robot), info.obs.transpose(), info.act.transpose();
  }
  const Eigen::MatrixXd q_next = forward_eval(target_critic, critic_in);
  for (std::size_t br = 0; br < boot_rows.size(); ++br)
    y[boot_rows[br]] += gamma * q_next(static_cast<Eigen::Index>(br), 0);
  return y;
}

struct CriticUpdateResult {
  double loss = 0.0;
  Eigen::VectorXd td_abs;  // per batch row, for priority refresh
};

/// One Adam step on the critic toward the TD targets (mean squared
/// error). A non-finite loss aborts before anything is touched.
inline CriticUpdateResult critic_update(RobotBatch& batch, NetworkParams& critic,
                                        AdamState& opt, const Eigen::VectorXd& y) {
  const Eigen::MatrixXd input =
      assemble_critic_input(batch.obs, batch.act, batch.agg_obs, batch.agg_act);
  ForwardResult fwd = forward(critic, input, Mode::train);
  const Eigen::VectorXd q = fwd.outputs.col(0);
  const Eigen::VectorXd err = q - y;
  CriticUpdateResult res;
  res.loss = err.squaredNorm() / static_cast<double>(err.size());
  if (!std::isfinite(res.loss))
    throw NumericalFault("critic_update: non-finite TD loss");
  res.td_abs = err.cwiseAbs();
  const Eigen::MatrixXd d_out =
      (2.0 / static_cast<double>(err.size())) * err;
  const BackwardResult back = backward(critic, fwd.tape, d_out);
  adam_step(critic, back.param_grads, opt);
  return res;
}

/// One gradient-ascent step on the actor: the critic (held fixed) is
/// differentiated through its action input back into the softmax head.
/// A small entropy bonus keeps the head from saturating; a hard one-hot
/// output kills its own gradient and freezes the policy on whichever
/// task the critic preferred first.
inline void actor_update(const RobotBatch& batch, NetworkParams& actor,
                         AdamState& opt, NetworkParams& critic,
                         double entropy_reg = 0.0) {
  const int obs_dim = static_cast<int>(batch.obs.cols());
  const int m = static_cast<int>(batch.act.cols());
  ForwardResult actor_fwd = forward(actor, batch.obs, Mode::train);
  const Eigen::MatrixXd input = assemble_critic_input(
      batch.obs, actor_fwd.outputs, batch.agg_obs, batch.agg_act);
  ForwardResult critic_fwd = forward(critic, input, Mode::train);
  const double inv_rows = 1.0 / static_cast<double>(input.rows());
  const Eigen::MatrixXd d_q = Eigen::MatrixXd::Constant(input.rows(), 1, inv_rows);
  const BackwardResult critic_back = backward(critic, critic_fwd.tape, d_q);
  Eigen::MatrixXd d_action = critic_back.input_grads.middleCols(obs_dim, m);
  if (entropy_reg > 0.0) {
    for (Eigen::Index r = 0; r < d_action.rows(); ++r) {
      for (Eigen::Index c = 0; c < d_action.cols(); ++c) {
        const double s = std::max(actor_fwd.outputs(r, c), 1e-12);
        d_action(r, c) -= entropy_reg * inv_rows * (std::log(s) + 1.0);
      }
    }
  }
  const BackwardResult actor_back = backward(actor, actor_fwd.tape, d_action);
  std::vector<double> ascent(actor_back.param_grads.size());
  for (std::size_t k = 0; k < ascent.size(); ++k)
    ascent[k] = -actor_back.param_grads[k];
  adam_step(actor, ascent, opt);
}

struct TrainLogRow {
  int episode = 0;
  double mean_utility = 0.0;
  double normalized_utility = 0.0;
  double critic_loss = 0.0;
  double epsilon = 0.0;
  // Reserved timing column; kept at zero so logs stay bit-reproducible.
  long long wall_ms = 0;
};

struct TrainResult {
  NetworkParams actor;
  NetworkParams critic;
  NetworkParams target_actor;
  NetworkParams target_critic;
  std::vector<TrainLogRow> log;
};

inline double epsilon_at(const TrainConfig& cfg, int episode) {
  const int decay = static_cast<int>(cfg.episodes * cfg.epsilon_decay_frac);
  if (episode >= decay || decay == 0) return cfg.epsilon_final;
  return cfg.epsilon_start +
         (cfg.epsilon_final - cfg.epsilon_start) *
             (static_cast<double>(episode) / static_cast<double>(decay));
}

/// Centralized training: episodes alternate a full rollout with one
/// sequential update round in which every robot samples its own
/// minibatch and applies shared-network critic and actor steps, followed
/// by a soft target refresh. Fully deterministic for a fixed seed while
/// prioritized replay is off.
inline TrainResult train(const Config& cfg, std::uint64_t seed,
                         const std::string& checkpoint_path = {},
                         const std::function<void(const TrainLogRow&)>& on_episode = {}) {
  cfg.world.validate();
  cfg.train.validate();
  const int n = cfg.world.n_robots;
  const int m = cfg.world.n_tasks;
  const int obs_dim = ObsLayout{m, cfg.world.alpha_max}.dim();

  Rng init_rng(Rng::mix(seed, 1));
  TrainResult result;
  result.actor = init_params(actor_spec(obs_dim, m, cfg.train.net), init_rng);
  result.critic = init_params(critic_spec(obs_dim, m, cfg.train.net), init_rng);
  NetworkParams& target_actor = result.target_actor;
  NetworkParams& target_critic = result.target_critic;
  target_actor = result.actor;
  target_critic = result.critic;
  AdamState actor_opt(result.actor.values.size(), cfg.train.actor_lr);
  AdamState critic_opt(result.critic.values.size(), cfg.train.critic_lr);

  Rng explore_rng(Rng::mix(seed, 2));
  Rng sample_rng(Rng::mix(seed, 3));
  ReplayBuffer buffer(cfg.train.buffer_capacity);

  const auto save_checkpoint = [&]() {
    if (!checkpoint_path.empty()) save_params(checkpoint_path, result.actor);
  };

  for (int ep = 0; ep < cfg.train.episodes; ++ep) {
    const double epsilon = epsilon_at(cfg.train, ep);
    WorldState world = init_world(cfg.world, Rng::mix(seed, 0x100000 + ep));
    const double u_max = natu_denominator(world);
    const EpisodeResult episode = rollout_episode(
        world, result.actor, epsilon, cfg.train.beta, explore_rng, &buffer);

    double loss_sum = 0.0;
    int loss_count = 0;
    // The anti-saturation bonus anneals with exploration: strong while
    // the buffer is noise, nearly gone once the policy exploits, so the
    // final rankings are the critic's rather than the regularizer's.
    const double entropy_reg = cfg.train.actor_entropy_reg * epsilon;
    for (int round = 0; round < cfg.train.update_rounds; ++round) {
      for (int robot = 0; robot < n; ++robot) {
        const auto indices =
            sample_batch(buffer, cfg.train.batch_size, cfg.train.priority_replay,
                         sample_rng);
        if (!indices) break;  // underfull buffer: skip this update round
        auto batch = assemble_robot_batch(buffer, *indices, robot);
        if (!batch) continue;  // robot already bound in every sampled record
        const Eigen::VectorXd y =
            critic_target(buffer, *batch, robot, target_actor, target_critic,
                          cfg.train.gamma, cfg.train.beta, cfg.world.alpha_max);
        const CriticUpdateResult cu =
            critic_update(*batch, result.critic, critic_opt, y);
        loss_sum += cu.loss;
        loss_count += 1;
        if (cfg.train.priority_replay) {
          for (Eigen::Index r = 0; r < cu.td_abs.size(); ++r)
            buffer.set_priority(batch->record_ids[r], cu.td_abs[r]);
        }
        actor_update(*batch, result.actor, actor_opt, result.critic, entropy_reg);
      }
    }
    soft_update(target_actor, result.actor, cfg.train.eta);
    soft_update(target_critic, result.critic, cfg.train.eta);

    TrainLogRow row;
    row.episode = ep;
    row.mean_utility = episode.utilities.mean();
    row.normalized_utility = std::max(0.0, episode.total_utility() / u_max);
    row.critic_loss = loss_count > 0 ? loss_sum / loss_count : 0.0;
    row.epsilon = epsilon;
    result.log.push_back(row);
    if (on_episode) on_episode(row);
    if (cfg.train.checkpoint_every > 0 && (ep + 1) % cfg.train.checkpoint_every == 0)
      save_checkpoint();
  }
  save_checkpoint();
  return result;
}

}  // namespace swarm
