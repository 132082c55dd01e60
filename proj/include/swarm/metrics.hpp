#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "swarm/world.hpp"

namespace swarm {

/// Policy-independent utility denominator: pairs sorted by reward
/// descending (ties by robot, then task id) are taken while any of the
/// N assignment slots and the task's capacity remain. Robot identity is
/// deliberately ignored, which makes the bound the optimum of a relaxed
/// problem and therefore an upper bound on every feasible assignment's
/// reward sum.
inline double natu_denominator(const WorldState& world0) {
  struct Pair {
    double r;
    int i, j;
  };
  std::vector<Pair> pairs;
  pairs.reserve(static_cast<std::size_t>(world0.n_robots()) * world0.n_tasks());
  for (int i = 0; i < world0.n_robots(); ++i)
    for (int j = 0; j < world0.n_tasks(); ++j)
      pairs.push_back({world0.reward_matrix(i, j), i, j});
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.r != b.r) return a.r > b.r;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });
  std::vector<int> remaining(world0.n_tasks());
  for (int j = 0; j < world0.n_tasks(); ++j) remaining[j] = world0.tasks[j].capacity;
  int slots = world0.n_robots();
  double total = 0.0;
  for (const Pair& p : pairs) {
    if (slots == 0) break;
    if (remaining[p.j] == 0) continue;
    total += p.r;
    remaining[p.j] -= 1;
    slots -= 1;
  }
  if (total <= 0.0)
    throw std::logic_error("natu_denominator: degenerate zero upper bound");
  return total;
}

struct NatuResult {
  double raw = 0.0;       // total utility / denominator, may be negative
  double reported = 0.0;  // clamped below at zero
};

/// Normalized average total utility of one episode against the initial
/// world's assignment upper bound. Movement costs push the raw value
/// below the bound, so the reported number sits in [0, 1].
inline NatuResult natu(const EpisodeResult& episode, const WorldState& world0) {
  NatuResult res;
  res.raw = episode.total_utility() / natu_denominator(world0);
  res.reported = std::max(0.0, res.raw);
  return res;
}

/// Normalized average time cost: mean bind time over robots divided by
/// the horizon, with robots that never bound charged the full horizon.
inline double natc(const EpisodeResult& episode, int max_steps) {
  if (episode.bind_times.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < episode.bind_times.size(); ++i) {
    const int t = episode.bound[i] ? episode.bind_times[i] : max_steps;
    sum += static_cast<double>(t);
  }
  return sum / (static_cast<double>(episode.bind_times.size()) * max_steps);
}

/// Fraction of scenarios each policy strictly wins on total utility.
/// Exact ties award no one, so the rates can sum below one.
inline std::map<std::string, double> dominance_rate(
    const std::map<std::string, std::vector<double>>& totals) {
  std::map<std::string, double> dr;
  if (totals.empty()) return dr;
  const std::size_t n = totals.begin()->second.size();
  for (const auto& [name, values] : totals) {
    if (values.size() != n)
      throw std::invalid_argument("dominance_rate: mismatched scenario counts");
    dr[name] = 0.0;
  }
  if (n == 0) return dr;
  for (std::size_t s = 0; s < n; ++s) {
    const std::string* best = nullptr;
    double best_value = -std::numeric_limits<double>::infinity();
    bool tie = false;
    for (const auto& [name, values] : totals) {
      if (values[s] > best_value) {
        best_value = values[s];
        best = &name;
        tie = false;
      } else if (values[s] == best_value) {
        tie = true;
      }
    }
    if (best && !tie) dr[*best] += 1.0;
  }
  for (auto& [name, wins] : dr) wins /= static_cast<double>(n);
  return dr;
}

}  // namespace swarm
