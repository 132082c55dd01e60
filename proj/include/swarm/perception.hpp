#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <vector>

#include "swarm/types.hpp"

namespace swarm {

/// Locally related robots of one robot: the k nearest neighbors, the
/// robots currently choosing the same task, and their union with world
/// distances. Members are kept sorted by id so downstream aggregation is
/// order-independent by construction.
struct RelatedSet {
  int robot_id = 0;
  std::vector<int> neighbors;    // ascending distance, ties by id
  std::vector<int> same_action;  // every other robot with equal task choice
  std::vector<int> members;      // neighbors + same_action, deduped, by id
  std::vector<double> member_distance;  // aligned with members, clamped

  bool empty() const { return members.empty(); }
};

struct AggregatedInfo {
  Eigen::VectorXd obs;
  Eigen::VectorXd act;
};

/// Minimum distance used in the weight formula; avoids log(0) for
/// coincident robots.
constexpr double kMinAggregationDistance = 1e-6;

/// The alpha_max nearest other robots for every robot, ascending by
/// Euclidean distance with ties broken by id. There is no perception
/// radius: the neighbor set is a k-nearest model.
inline std::vector<RelatedSet> neighbor_sets(const std::vector<Vec2>& positions,
                                             int alpha_max) {
  const int n = static_cast<int>(positions.size());
  std::vector<RelatedSet> out(n);
  std::vector<std::pair<double, int>> order;
  order.reserve(n);
  for (int i = 0; i < n; ++i) {
    out[i].robot_id = i;
    if (alpha_max <= 0) continue;
    order.clear();
    for (int k = 0; k < n; ++k) {
      if (k == i) continue;
      order.emplace_back(distance(positions[i], positions[k]), k);
    }
    const int take = std::min<int>(alpha_max, static_cast<int>(order.size()));
    std::partial_sort(order.begin(), order.begin() + take, order.end());
    out[i].neighbors.reserve(take);
    for (int k = 0; k < take; ++k) out[i].neighbors.push_back(order[k].second);
  }
  return out;
}

/// Fills the same-action sets and the member union. Same-action robots
/// are included regardless of distance; distances are plain world
/// distances for every member (centralized training has global access).
inline std::vector<RelatedSet> related_sets(const std::vector<Vec2>& positions,
                                            std::vector<RelatedSet> sets,
                                            const std::vector<Action>& actions) {
  const int n = static_cast<int>(positions.size());
  for (int i = 0; i < n; ++i) {
    RelatedSet& rs = sets[i];
    rs.same_action.clear();
    for (int k = 0; k < n; ++k) {
      if (k != i && actions[k].task_index == actions[i].task_index)
        rs.same_action.push_back(k);
    }
    rs.members = rs.neighbors;
    rs.members.insert(rs.members.end(), rs.same_action.begin(),
                      rs.same_action.end());
    std::sort(rs.members.begin(), rs.members.end());
    rs.members.erase(std::unique(rs.members.begin(), rs.members.end()),
                     rs.members.end());
    rs.member_distance.clear();
    rs.member_distance.reserve(rs.members.size());
    for (int k : rs.members) {
      rs.member_distance.push_back(std::max(
          distance(positions[i], positions[k]), kMinAggregationDistance));
    }
  }
  return sets;
}

/// Distance-dependent simplex weights w_k = d_k^beta / sum_m d_m^beta,
/// evaluated in log space for stability. beta < 0 favors nearer robots.
inline std::vector<double> lia_weights(const std::vector<double>& distances,
                                       double beta) {
  if (distances.empty())
    throw std::invalid_argument("lia_weights: empty related set");
  std::vector<double> logits(distances.size());
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < distances.size(); ++k) {
    const double d = std::max(distances[k], kMinAggregationDistance);
    logits[k] = beta * std::log(d);
    max_logit = std::max(max_logit, logits[k]);
  }
  double total = 0.0;
  for (double& l : logits) {
    l = std::exp(l - max_logit);
    total += l;
  }
  for (double& l : logits) l /= total;
  return logits;
}

/// Weighted mixtures of the members' observations and action
/// distributions. Output dimensions depend only on the observation and
/// action widths, never on the member count; an empty set yields zeros.
inline AggregatedInfo aggregate(const RelatedSet& related,
                                const Eigen::MatrixXd& observations,
                                const Eigen::MatrixXd& actions, double beta) {
  AggregatedInfo info;
  info.obs = Eigen::VectorXd::Zero(observations.cols());
  info.act = Eigen::VectorXd::Zero(actions.cols());
  if (related.empty()) return info;
  const std::vector<double> w = lia_weights(related.member_distance, beta);
  for (std::size_t m = 0; m < related.members.size(); ++m) {
    const int k = related.members[m];
    info.obs.noalias() += w[m] * observations.row(k).transpose();
    info.act.noalias() += w[m] * actions.row(k).transpose();
  }
  return info;
}

}  // namespace swarm
