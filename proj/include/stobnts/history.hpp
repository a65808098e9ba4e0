#pragma once

#include <optional>
#include <vector>

#include "stobnts/surrogate_net.hpp"

namespace stobnts {

/// One completed evaluation. Iteration 0 holds the initial design.
struct Observation {
  Vector raw;    // point in the user's coordinates
  Vector input;  // normalized network input
  double y = 0.0;
  int iteration = 0;
  int slot = 0;
  std::optional<Eigen::Index> domain_index;  // set for discrete domains
};

/// Training set handed to a posterior-sample draw.
struct TrainingData {
  Matrix inputs;   // one normalized input per column
  Vector targets;

  Eigen::Index size() const { return targets.size(); }
  static TrainingData empty(int input_dim) { return {Matrix(input_dim, 0), Vector(0)}; }
};

/// Ordered observation record D_{t-1}.
class History {
 public:
  const std::vector<Observation>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  /// Last iteration whose batch is fully observed (-1 before the initial design).
  int completed_through() const { return completed_through_; }

  /// Appends a full batch for `iteration`; iterations must be committed in order.
  void commit_batch(int iteration, std::vector<Observation> batch);

  /// Observations with iteration <= last_iteration, in commit order.
  TrainingData training_data(int last_iteration, int input_dim) const;

 private:
  std::vector<Observation> entries_;
  int completed_through_ = -1;
};

}  // namespace stobnts
