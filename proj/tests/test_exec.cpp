#include <catch2/catch.hpp>

#include "swarm/exec.hpp"
#include "swarm/trainer.hpp"

using namespace swarm;

namespace {

WorldState static_world(int n, int m, double d_bind_m = 30.0) {
  WorldConfig cfg;
  cfg.n_robots = n;
  cfg.n_tasks = m;
  cfg.alpha_max = 2;
  cfg.max_steps = 200;
  cfg.d_bind_m = d_bind_m;
  WorldState w;
  w.config = cfg;
  w.seed = 7;
  w.rng = Rng(7);
  w.tasks.resize(m);
  for (int j = 0; j < m; ++j) {
    w.tasks[j].id = j;
    w.tasks[j].capacity = cfg.task_capacity();
    w.tasks[j].position = {0.5, 0.5};
    w.tasks[j].speed = 0.0;
  }
  w.robots.resize(n);
  for (auto& r : w.robots) {
    r.position = {0.2, 0.2};
    r.speed = 0.004;
  }
  w.reward_matrix = Eigen::MatrixXd::Constant(n, m, 0.5);
  return w;
}

NetworkParams zero_actor(int obs_dim, int m) {
  Rng rng(0);
  NetworkParams p = init_params({obs_dim, {}, m, false, false, Head::softmax}, rng);
  std::fill(p.values.begin(), p.values.end(), 0.0);
  return p;
}

/// Actor whose logits read the per-task reward weights, scaled hard so
/// the argmax is the robot's own best reward column.
NetworkParams kappa_actor(const ObsLayout& layout) {
  NetworkParams p = zero_actor(layout.dim(), layout.n_tasks);
  const int out = layout.n_tasks;
  for (int j = 0; j < layout.n_tasks; ++j) {
    const int col = layout.task_offset(j) + 5;  // kappa feature
    p.values[static_cast<std::size_t>(col) * out + j] = 40.0;
  }
  return p;
}

}  // namespace

TEST_CASE("capacity gap truth table") {
  REQUIRE(capacity_gap(3, 1) == 2);
  REQUIRE(capacity_gap(3, 3) == 0);
  REQUIRE(capacity_gap(3, 5) == 0);
}

TEST_CASE("deviation probability closes at full tasks and full agreement") {
  ExecContext ctx;
  ctx.alpha = 4;
  ctx.beta_count = 1;
  ctx.capacity = 3;
  ctx.bound_count = 3;  // gap 0
  REQUIRE(deviation_probability(ctx) == 1.0);

  ctx.bound_count = 1;  // gap 2
  ctx.beta_count = 4;   // alpha == beta
  REQUIRE(deviation_probability(ctx) == 1.0);

  ctx.beta_count = 2;  // gap 2, alpha - beta = 2
  REQUIRE(deviation_probability(ctx) == Approx(std::exp(-4.0)).margin(1e-12));
  REQUIRE(deviation_probability(ctx) > 0.0);
  REQUIRE(deviation_probability(ctx) <= 1.0);
}

TEST_CASE("policy output is the softmax argmax with low-index ties") {
  WorldState w = static_world(1, 3);
  const Eigen::VectorXd obs = build_observation(w, 0, {});
  NetworkParams uniform = zero_actor(w.obs_layout().dim(), 3);
  REQUIRE(policy_output(uniform, obs).task_index == 0);

  NetworkParams biased = uniform;
  // Head bias lives in the last `out` values; favor task 2.
  biased.values[biased.values.size() - 1] = 5.0;
  REQUIRE(policy_output(biased, obs).task_index == 2);
}

TEST_CASE("bound robots repeat their action without consulting the actor") {
  WorldState w = static_world(2, 2);
  w.robots[0].status = 0;
  w.robots[0].target = 1;
  w.robots[0].bind_time = 3;
  w.robots[0].position = w.tasks[1].position;
  NetworkParams actor = zero_actor(w.obs_layout().dim(), 2);  // argmax task 0
  std::vector<Rng> rngs;
  rngs.emplace_back(1);
  rngs.emplace_back(2);
  const auto actions =
      decide_actions(w, PolicyKind::lia_maddpg_no_improve, &actor, {}, rngs);
  REQUIRE(actions[0].task_index == 1);  // repeats the binding one-hot
  REQUIRE(actions[1].task_index == 0);
}

TEST_CASE("improvement always fires on a full task and never above delta") {
  WorldState w = static_world(1, 2);
  w.tasks[0].position = {0.25, 0.2};  // nearer than task 1
  w.tasks[1].position = {0.8, 0.8};
  w.reward_matrix(0, 0) = 0.9;
  w.reward_matrix(0, 1) = 0.2;
  ExecContext ctx;
  ctx.robot_id = 0;
  ctx.alpha = 0;
  ctx.beta_count = 0;
  ctx.capacity = 1;
  ctx.bound_count = 1;  // full: delta = 1
  const Action proposed = Action::one_hot(1, 2);
  // Even the largest draw stays below delta = 1.
  const Action out = improved_action(w, ctx, proposed, 0.999999, 10.0);
  REQUIRE(out.task_index == 0);

  ctx.bound_count = 0;  // gap 1, but alpha - beta = 0 keeps delta = 1
  REQUIRE(improved_action(w, ctx, proposed, 0.999999, 10.0).task_index == 0);

  ctx.alpha = 3;  // delta = e^-3; a large draw keeps the proposal
  REQUIRE(improved_action(w, ctx, proposed, 0.9, 10.0).task_index == 1);
}

TEST_CASE("fallback score weighs reward against scaled distance") {
  WorldState w = static_world(1, 2);
  w.robots[0].position = {0.0, 0.0};
  w.tasks[0].position = {0.05, 0.0};  // scaled distance 0.5
  w.tasks[1].position = {0.01, 0.0};  // scaled distance 0.1
  w.reward_matrix(0, 0) = 0.9;        // score 9 - 0.5 = 8.5
  w.reward_matrix(0, 1) = 0.2;        // score 2 - 0.1 = 1.9
  REQUIRE(fallback_task(w, 0, 10.0) == 0);
}

TEST_CASE("greedy takes the only task available") {
  WorldState w = static_world(1, 1);
  REQUIRE(greedy_policy(w, 0, 10.0).task_index == 0);
}

TEST_CASE("greedy prefers the nearer of two equal rewards") {
  WorldState w = static_world(1, 2);
  w.robots[0].position = {0.1, 0.1};
  w.tasks[0].position = {0.9, 0.9};
  w.tasks[1].position = {0.2, 0.2};
  w.reward_matrix(0, 0) = 0.7;
  w.reward_matrix(0, 1) = 0.7;
  REQUIRE(greedy_policy(w, 0, 10.0).task_index == 1);
}

TEST_CASE("greedy skips full tasks unless everything is full") {
  WorldState w = static_world(1, 2);
  w.tasks[0].position = {0.5, 0.5};
  w.tasks[1].position = {0.5, 0.5};
  w.reward_matrix(0, 0) = 1.0;
  w.reward_matrix(0, 1) = 0.95;
  w.tasks[0].capacity = 1;
  w.tasks[0].bound_count = 1;  // full
  REQUIRE(greedy_policy(w, 0, 10.0).task_index == 1);
  w.tasks[1].capacity = 1;
  w.tasks[1].bound_count = 1;  // now everything is full
  REQUIRE(greedy_policy(w, 0, 10.0).task_index == 0);
}

TEST_CASE("greedy with unlimited capacity is a plain score argmax") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    WorldState w = static_world(1, 3);
    for (auto& t : w.tasks) {
      t.position = {rng.uniform01(), rng.uniform01()};
      t.capacity = 1000000;
    }
    w.robots[0].position = {rng.uniform01(), rng.uniform01()};
    for (int j = 0; j < 3; ++j) w.reward_matrix(0, j) = rng.uniform01();
    int expect = 0;
    double best = -1e300;
    for (int j = 0; j < 3; ++j) {
      const double score = 10.0 * w.reward_matrix(0, j) -
                           10.0 * distance(w.robots[0].position, w.tasks[j].position);
      if (score > best) {
        best = score;
        expect = j;
      }
    }
    REQUIRE(greedy_policy(w, 0, 10.0).task_index == expect);
  }
}

TEST_CASE("greedy walks the straight line and binds at the first contact") {
  WorldState w = static_world(1, 1);
  w.robots[0].position = {0.2, 0.5};
  w.robots[0].speed = 0.004;
  w.tasks[0].position = {0.5, 0.5};
  // Distance 0.3; reaching <= 0.03 takes ceil((0.3 - 0.03) / 0.004) = 68 steps.
  const EpisodeResult res = run_execution(w, PolicyKind::greedy, nullptr);
  REQUIRE(res.bound[0] == 1);
  REQUIRE(res.bind_times[0] == 68);
  REQUIRE(res.utilities[0] == Approx(0.5 - 68 * 0.004).margin(1e-9));
}

TEST_CASE("execution under one seed and policy repeats exactly") {
  WorldConfig cfg;
  cfg.n_robots = 6;
  cfg.n_tasks = 2;
  cfg.alpha_max = 3;
  cfg.max_steps = 80;
  NetworkParams actor;
  {
    Rng rng(50);
    actor = init_params(
        {ObsLayout{cfg.n_tasks, cfg.alpha_max}.dim(), {8}, cfg.n_tasks, false,
         false, Head::softmax},
        rng);
  }
  const EpisodeResult a =
      run_execution(init_world(cfg, 31), PolicyKind::lia_maddpg, &actor);
  const EpisodeResult b =
      run_execution(init_world(cfg, 31), PolicyKind::lia_maddpg, &actor);
  REQUIRE(a.utilities == b.utilities);
  REQUIRE(a.bind_times == b.bind_times);
}

TEST_CASE("improvement reduces to the plain policy when draws exceed delta") {
  // Two robots with opposite reward preferences keep proposing different
  // tasks, so beta stays below alpha and the open capacities keep the
  // deviation probability strictly under one; a near-one draw then never
  // triggers the fallback.
  WorldConfig cfg;
  cfg.n_robots = 2;
  cfg.n_tasks = 2;
  cfg.alpha_max = 1;
  cfg.max_steps = 300;
  WorldState w0 = init_world(cfg, 55);
  // Robot 0 mildly prefers the far task 0 by reward; the distance-aware
  // fallback would pick the nearby task 1 instead.
  w0.reward_matrix << 0.55, 0.45, 0.1, 0.9;
  w0.tasks[0].position = {0.9, 0.9};
  w0.tasks[1].position = {0.2, 0.2};
  w0.robots[0].position = {0.25, 0.25};
  w0.robots[1].position = {0.3, 0.3};
  const NetworkParams actor = kappa_actor(w0.obs_layout());

  ExecOptions high_draw;
  high_draw.draw_override = [](int, int) { return 0.999999; };
  const EpisodeResult improved =
      run_execution(w0, PolicyKind::lia_maddpg, &actor, high_draw);
  const EpisodeResult plain =
      run_execution(w0, PolicyKind::lia_maddpg_no_improve, &actor, {});
  REQUIRE(improved.utilities == plain.utilities);
  REQUIRE(improved.bind_times == plain.bind_times);

  // Sanity: with draws of zero the fallback does fire and diverge.
  ExecOptions zero_draw;
  zero_draw.draw_override = [](int, int) { return 0.0; };
  const EpisodeResult forced =
      run_execution(w0, PolicyKind::lia_maddpg, &actor, zero_draw);
  REQUIRE((forced.bind_times != plain.bind_times || forced.utilities != plain.utilities));
}

TEST_CASE("decisions ignore the internals of unobserved robots") {
  WorldConfig cfg;
  cfg.n_robots = 7;
  cfg.n_tasks = 2;
  cfg.alpha_max = 2;
  WorldState w = init_world(cfg, 77);
  // Robot 0 sits far from robot 6, with 1 and 2 adjacent.
  for (int i = 0; i < 7; ++i) w.robots[i].position = {0.1 * i + 0.05, 0.5};
  NetworkParams actor;
  {
    Rng rng(60);
    actor = init_params(
        {w.obs_layout().dim(), {8}, 2, false, false, Head::softmax}, rng);
  }
  for (PolicyKind kind :
       {PolicyKind::greedy, PolicyKind::lia_maddpg, PolicyKind::lia_maddpg_no_improve}) {
    std::vector<Rng> rngs_a;
    std::vector<Rng> rngs_b;
    for (int i = 0; i < 7; ++i) {
      rngs_a.emplace_back(Rng::mix(1, i));
      rngs_b.emplace_back(Rng::mix(1, i));
    }
    WorldState perturbed = w;
    perturbed.robots[6].speed *= 3.0;
    perturbed.robots[6].accumulated_cost += 0.7;
    perturbed.robots[6].heading = 2.2;
    const auto base = decide_actions(w, kind, &actor, {}, rngs_a);
    const auto after = decide_actions(perturbed, kind, &actor, {}, rngs_b);
    REQUIRE(base[0].task_index == after[0].task_index);
  }
}

TEST_CASE("learned execution refuses a missing or mismatched checkpoint") {
  WorldConfig cfg;
  cfg.n_robots = 3;
  cfg.n_tasks = 2;
  cfg.alpha_max = 1;
  REQUIRE_THROWS_AS(run_execution(init_world(cfg, 1), PolicyKind::lia_maddpg, nullptr),
                    ConfigError);
  NetworkParams wrong = zero_actor(11, 3);  // wrong widths entirely
  REQUIRE_THROWS_AS(run_execution(init_world(cfg, 1), PolicyKind::lia_maddpg, &wrong),
                    ConfigError);
}
