#include <catch2/catch.hpp>

#include "swarm/perception.hpp"

using namespace swarm;

namespace {

std::vector<Action> one_hot_actions(const std::vector<int>& tasks, int m) {
  std::vector<Action> out;
  for (int t : tasks) out.push_back(Action::one_hot(t, m));
  return out;
}

}  // namespace

TEST_CASE("two robots are each other's only neighbor") {
  const std::vector<Vec2> pos = {{0.1, 0.1}, {0.9, 0.9}};
  const auto sets = neighbor_sets(pos, 5);
  REQUIRE(sets[0].neighbors == std::vector<int>{1});
  REQUIRE(sets[1].neighbors == std::vector<int>{0});
}

TEST_CASE("a zero neighbor cap empties every neighbor set") {
  const std::vector<Vec2> pos = {{0.1, 0.1}, {0.2, 0.2}, {0.3, 0.3}};
  for (const auto& s : neighbor_sets(pos, 0)) REQUIRE(s.neighbors.empty());
}

TEST_CASE("neighbors come back in ascending distance order") {
  // Robots on a line at x = 0, 1, 2, 3.
  const std::vector<Vec2> pos = {{0, 0}, {1, 0}, {2, 0}, {3, 0}};
  const auto sets = neighbor_sets(pos, 2);
  REQUIRE(sets[0].neighbors == std::vector<int>{1, 2});
  REQUIRE(sets[3].neighbors == std::vector<int>{2, 1});
  REQUIRE(sets[1].neighbors == std::vector<int>{0, 2});  // tie broken by id
}

TEST_CASE("uniform actions put everyone in each same-action set") {
  const std::vector<Vec2> pos = {{0, 0}, {0.5, 0}, {1, 0}};
  const auto sets =
      related_sets(pos, neighbor_sets(pos, 1), one_hot_actions({0, 0, 0}, 2));
  for (int i = 0; i < 3; ++i) {
    REQUIRE(sets[i].same_action.size() == 2);
    for (int k : sets[i].same_action) REQUIRE(k != i);
  }
}

TEST_CASE("distinct actions leave the related set equal to the neighbors") {
  const std::vector<Vec2> pos = {{0, 0}, {0.4, 0}, {0.8, 0}};
  const auto sets =
      related_sets(pos, neighbor_sets(pos, 1), one_hot_actions({0, 1, 2}, 3));
  for (int i = 0; i < 3; ++i) {
    REQUIRE(sets[i].same_action.empty());
    std::vector<int> sorted_neighbors = sets[i].neighbors;
    std::sort(sorted_neighbors.begin(), sorted_neighbors.end());
    REQUIRE(sets[i].members == sorted_neighbors);
  }
}

TEST_CASE("related set is the union of neighbors and same-action robots") {
  // Robot 2 is nearest to robot 0; robot 1 shares robot 0's action.
  const std::vector<Vec2> pos = {{0, 0}, {0.9, 0}, {0.1, 0}};
  const auto sets =
      related_sets(pos, neighbor_sets(pos, 1), one_hot_actions({0, 0, 1}, 2));
  REQUIRE(sets[0].neighbors == std::vector<int>{2});
  REQUIRE(sets[0].same_action == std::vector<int>{1});
  REQUIRE(sets[0].members == std::vector<int>{1, 2});
}

TEST_CASE("equal distances get equal weights") {
  const auto w = lia_weights({0.25, 0.25}, -1.0);
  REQUIRE(w[0] == Approx(0.5).margin(1e-12));
  REQUIRE(w[1] == Approx(0.5).margin(1e-12));
}

TEST_CASE("beta zero gives uniform weights") {
  const auto w = lia_weights({0.1, 0.5, 0.9}, 0.0);
  for (double x : w) REQUIRE(x == Approx(1.0 / 3.0).margin(1e-12));
}

TEST_CASE("negative beta favors the nearer robot") {
  const auto w = lia_weights({1.0, 2.0}, -1.0);
  REQUIRE(w[0] == Approx(2.0 / 3.0).margin(1e-12));
  REQUIRE(w[1] == Approx(1.0 / 3.0).margin(1e-12));
}

TEST_CASE("weights of an empty set are an error") {
  REQUIRE_THROWS_AS(lia_weights({}, -1.0), std::invalid_argument);
}

TEST_CASE("weights stay on the simplex and scale-invariant") {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + rng.uniform_int(12);
    const double beta = rng.uniform(-4.0, 4.0);
    std::vector<double> d(n);
    for (double& x : d) x = std::exp(rng.uniform(-8.0, 1.0));
    const auto w = lia_weights(d, beta);
    double sum = 0.0;
    for (double x : w) {
      REQUIRE(x >= 0.0);
      sum += x;
    }
    REQUIRE(sum == Approx(1.0).margin(1e-9));

    const double scale = std::exp(rng.uniform(-2.0, 2.0));
    std::vector<double> d2(d);
    for (double& x : d2) x *= scale;
    const auto w2 = lia_weights(d2, beta);
    for (int k = 0; k < n; ++k) REQUIRE(w[k] == Approx(w2[k]).margin(1e-9));
  }
}

TEST_CASE("aggregating a singleton returns that robot's rows exactly") {
  Eigen::MatrixXd obs(2, 4);
  obs << 1, 2, 3, 4, 5, 6, 7, 8;
  Eigen::MatrixXd act(2, 2);
  act << 1, 0, 0, 1;
  RelatedSet rs;
  rs.robot_id = 0;
  rs.members = {1};
  rs.member_distance = {0.3};
  const AggregatedInfo info = aggregate(rs, obs, act, -1.0);
  REQUIRE(info.obs.isApprox(obs.row(1).transpose()));
  REQUIRE(info.act.isApprox(act.row(1).transpose()));
}

TEST_CASE("two equidistant one-hot actions blend evenly") {
  Eigen::MatrixXd obs = Eigen::MatrixXd::Zero(3, 2);
  Eigen::MatrixXd act(3, 3);
  act << 1, 0, 0, 0, 1, 0, 0, 0, 1;
  RelatedSet rs;
  rs.robot_id = 2;
  rs.members = {0, 1};
  rs.member_distance = {0.2, 0.2};
  const AggregatedInfo info = aggregate(rs, obs, act, -1.0);
  REQUIRE(info.act[0] == Approx(0.5).margin(1e-12));
  REQUIRE(info.act[1] == Approx(0.5).margin(1e-12));
  REQUIRE(info.act[2] == 0.0);
}

TEST_CASE("weighted mean matches hand arithmetic") {
  // Weights [2/3, 1/3] over feature values (3, 6) average to 4.
  Eigen::MatrixXd obs(2, 1);
  obs << 3, 6;
  Eigen::MatrixXd act(2, 1);
  act << 3, 6;
  RelatedSet rs;
  rs.robot_id = 9;  // not a member
  rs.members = {0, 1};
  rs.member_distance = {1.0, 2.0};
  const AggregatedInfo info = aggregate(rs, obs, act, -1.0);
  REQUIRE(info.obs[0] == Approx(4.0).margin(1e-12));
}

TEST_CASE("an empty related set aggregates to zeros with fixed dims") {
  RelatedSet rs;
  rs.robot_id = 0;
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Random(4, 7);
  const Eigen::MatrixXd act = Eigen::MatrixXd::Random(4, 3);
  const AggregatedInfo info = aggregate(rs, obs, act, -1.0);
  REQUIRE(info.obs.size() == 7);
  REQUIRE(info.act.size() == 3);
  REQUIRE(info.obs.isZero(0.0));
  REQUIRE(info.act.isZero(0.0));
}

TEST_CASE("aggregation output width is independent of the member count") {
  Rng rng(77);
  const int obs_dim = 11;
  const int m = 4;
  for (int count : {0, 1, 5, 50}) {
    Eigen::MatrixXd obs(count + 1, obs_dim);
    Eigen::MatrixXd act(count + 1, m);
    for (Eigen::Index r = 0; r < obs.rows(); ++r) {
      for (int c = 0; c < obs_dim; ++c) obs(r, c) = rng.uniform(-1, 1);
      for (int c = 0; c < m; ++c) act(r, c) = rng.uniform01();
    }
    RelatedSet rs;
    rs.robot_id = count;
    for (int k = 0; k < count; ++k) {
      rs.members.push_back(k);
      rs.member_distance.push_back(rng.uniform(0.01, 1.0));
    }
    const AggregatedInfo info = aggregate(rs, obs, act, -1.0);
    REQUIRE(info.obs.size() == obs_dim);
    REQUIRE(info.act.size() == m);
  }
}

TEST_CASE("aggregation is invariant to member order") {
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Random(6, 9);
  const Eigen::MatrixXd act = Eigen::MatrixXd::Random(6, 3);
  RelatedSet sorted;
  sorted.robot_id = 5;
  sorted.members = {0, 1, 2, 3, 4};
  sorted.member_distance = {0.4, 0.1, 0.9, 0.2, 0.6};
  RelatedSet shuffled;
  shuffled.robot_id = 5;
  // Same (member, distance) pairs in a different order.
  shuffled.members = {3, 0, 4, 2, 1};
  shuffled.member_distance = {0.2, 0.4, 0.6, 0.9, 0.1};
  const AggregatedInfo a = aggregate(sorted, obs, act, -1.3);
  const AggregatedInfo b = aggregate(shuffled, obs, act, -1.3);
  REQUIRE(a.obs.isApprox(b.obs, 1e-14));
  REQUIRE(a.act.isApprox(b.act, 1e-14));
}

TEST_CASE("related sets built from positions keep members sorted by id") {
  Rng rng(31);
  std::vector<Vec2> pos(8);
  for (auto& p : pos) p = {rng.uniform01(), rng.uniform01()};
  std::vector<int> tasks;
  for (int i = 0; i < 8; ++i) tasks.push_back(rng.uniform_int(2));
  const auto sets = related_sets(pos, neighbor_sets(pos, 3), one_hot_actions(tasks, 2));
  for (const auto& rs : sets) {
    REQUIRE(std::is_sorted(rs.members.begin(), rs.members.end()));
    REQUIRE(rs.members.size() == rs.member_distance.size());
    REQUIRE(rs.neighbors.size() <= 3);
    for (int k : rs.members) REQUIRE(k != rs.robot_id);
    for (std::size_t q = 0; q < rs.members.size(); ++q) {
      const double d = distance(pos[rs.robot_id], pos[rs.members[q]]);
      REQUIRE(rs.member_distance[q] == Approx(std::max(d, kMinAggregationDistance)));
    }
  }
}

TEST_CASE("beta zero aggregation equals the arithmetic mean") {
  Rng rng(91);
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Random(5, 6);
  const Eigen::MatrixXd act = Eigen::MatrixXd::Random(5, 2);
  RelatedSet rs;
  rs.robot_id = 4;
  rs.members = {0, 1, 2, 3};
  for (int k = 0; k < 4; ++k) rs.member_distance.push_back(rng.uniform(0.05, 1.5));
  const AggregatedInfo info = aggregate(rs, obs, act, 0.0);
  const Eigen::VectorXd mean_obs = obs.topRows(4).colwise().mean().transpose();
  const Eigen::VectorXd mean_act = act.topRows(4).colwise().mean().transpose();
  REQUIRE((info.obs - mean_obs).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((info.act - mean_act).cwiseAbs().maxCoeff() < 1e-12);
}
