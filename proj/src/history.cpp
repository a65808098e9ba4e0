#include "stobnts/history.hpp"

#include <stdexcept>
#include <string>

namespace stobnts {

void History::commit_batch(int iteration, std::vector<Observation> batch) {
  if (iteration != completed_through_ + 1) {
    throw std::logic_error("history: iteration " + std::to_string(iteration) +
                           " committed out of order (completed through " +
                           std::to_string(completed_through_) + ")");
  }
  for (Observation& obs : batch) {
    if (obs.iteration != iteration) throw std::logic_error("history: batch iteration mismatch");
    entries_.push_back(std::move(obs));
  }
  completed_through_ = iteration;
}

TrainingData History::training_data(int last_iteration, int input_dim) const {
  std::size_t count = 0;
  for (const Observation& obs : entries_) {
    if (obs.iteration <= last_iteration) ++count;
  }
  TrainingData data{Matrix(input_dim, static_cast<Eigen::Index>(count)),
                    Vector(static_cast<Eigen::Index>(count))};
  Eigen::Index col = 0;
  for (const Observation& obs : entries_) {
    if (obs.iteration > last_iteration) continue;
    if (obs.input.size() != input_dim) throw std::invalid_argument("history: input dimension");
    data.inputs.col(col) = obs.input;
    data.targets[col] = obs.y;
    ++col;
  }
  return data;
}

}  // namespace stobnts
