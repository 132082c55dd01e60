#pragma once

#include <Eigen/Dense>
#include <deque>
#include <optional>
#include <vector>

#include "swarm/common.hpp"

namespace swarm {

/// One stored transition of the whole swarm. Rows are robots. The
/// next-step snapshot (positions, statuses, targets) is enough to
/// recompute related sets and aggregated vectors at t+1 once the target
/// policy has produced the next actions.
struct TransitionRecord {
  Eigen::MatrixXd obs;       // N x obs_dim
  Eigen::MatrixXd act;       // N x M, simplex rows
  Eigen::MatrixXd agg_obs;   // N x obs_dim
  Eigen::MatrixXd agg_act;   // N x M
  Eigen::VectorXd rewards;   // N
  Eigen::MatrixXd next_obs;  // N x obs_dim
  Eigen::MatrixXd next_positions;     // N x 2
  std::vector<int> next_target;       // -1 when the robot has no target yet
  std::vector<std::uint8_t> active;   // free when the step began
  std::vector<std::uint8_t> done;     // bound during this step
  std::vector<std::uint8_t> next_free;
};

/// Fixed-capacity ring of transitions, oldest evicted first. Priorities
/// ride along for the prioritized sampling variant; fresh records enter
/// at the running maximum so they are seen at least once.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity) : capacity_(capacity) {
    if (capacity < 1) throw ConfigError("replay capacity must be >= 1");
  }

  void push(TransitionRecord rec) {
    if (static_cast<int>(records_.size()) == capacity_) {
      records_.pop_front();
      priorities_.pop_front();
    }
    records_.push_back(std::move(rec));
    priorities_.push_back(max_priority_);
  }

  std::size_t size() const { return records_.size(); }
  int capacity() const { return capacity_; }

  /// Chronological access: index 0 is the oldest retained record.
  const TransitionRecord& operator[](std::size_t i) const { return records_[i]; }

  double priority(std::size_t i) const { return priorities_[i]; }

  void set_priority(std::size_t i, double p) {
    priorities_[i] = std::max(p, 1e-6);
    max_priority_ = std::max(max_priority_, priorities_[i]);
  }

 private:
  int capacity_;
  std::deque<TransitionRecord> records_;
  std::deque<double> priorities_;
  double max_priority_ = 1.0;
};

/// Draws `delta` record indices, uniformly or proportionally to the
/// stored priorities. Returns nothing while the buffer is underfull so
/// the trainer can skip its update round.
inline std::optional<std::vector<std::size_t>> sample_batch(
    const ReplayBuffer& buffer, int delta, bool priority_flag, Rng& rng) {
  if (static_cast<int>(buffer.size()) < delta) return std::nullopt;
  std::vector<std::size_t> out(static_cast<std::size_t>(delta));
  if (!priority_flag) {
    for (auto& idx : out)
      idx = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(buffer.size())));
    return out;
  }
  std::vector<double> cumulative(buffer.size());
  double total = 0.0;
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    total += buffer.priority(i);
    cumulative[i] = total;
  }
  for (auto& idx : out) {
    const double u = rng.uniform01() * total;
    idx = static_cast<std::size_t>(
        std::lower_bound(cumulative.begin(), cumulative.end(), u) -
        cumulative.begin());
    if (idx >= buffer.size()) idx = buffer.size() - 1;
  }
  return out;
}

}  // namespace swarm
