#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

#include "stobnts/domain.hpp"

namespace stobnts {

/// Black-box function being maximized.
class Objective {
 public:
  virtual ~Objective() = default;

  /// Observed value at x. Synthetic objectives return the noise-free value
  /// and leave noise to the harness.
  virtual double observe(const Vector& x, std::optional<Eigen::Index> domain_index) = 0;

  /// Noise-free value, when known.
  virtual std::optional<double> truth(const Vector& x,
                                      std::optional<Eigen::Index> domain_index) const {
    (void)x;
    (void)domain_index;
    return std::nullopt;
  }

  /// max f over the domain, when known.
  virtual std::optional<double> optimum() const { return std::nullopt; }

  /// Whether the harness should add N(0, noise_var) to each observation.
  virtual bool wants_injected_noise() const { return false; }
};

/// f sampled once from a zero-mean GP with SE kernel on a uniform grid.
class SyntheticGpObjective final : public Objective {
 public:
  SyntheticGpObjective(Domain grid, double lengthscale, std::uint64_t seed);

  /// The usual benchmark: `points` evenly spaced values on [0, 1].
  static SyntheticGpObjective unit_interval(int points, double lengthscale, std::uint64_t seed);

  const Domain& domain() const { return grid_; }
  const Vector& values() const { return values_; }
  Eigen::Index argmax() const { return argmax_; }

  double observe(const Vector& x, std::optional<Eigen::Index> domain_index) override;
  std::optional<double> truth(const Vector& x,
                              std::optional<Eigen::Index> domain_index) const override;
  std::optional<double> optimum() const override { return values_[argmax_]; }
  bool wants_injected_noise() const override { return true; }

 private:
  Eigen::Index locate(const Vector& x, std::optional<Eigen::Index> domain_index) const;

  Domain grid_;
  Vector values_;
  Eigen::Index argmax_ = 0;
};

/// Wraps a callable; used by tests and library callers.
class FunctionObjective final : public Objective {
 public:
  using Function = std::function<double(const Vector&)>;

  FunctionObjective(Function f, std::optional<double> optimum = std::nullopt,
                    bool known_truth = true, bool inject_noise = false);

  double observe(const Vector& x, std::optional<Eigen::Index> domain_index) override;
  std::optional<double> truth(const Vector& x,
                              std::optional<Eigen::Index> domain_index) const override;
  std::optional<double> optimum() const override { return optimum_; }
  bool wants_injected_noise() const override { return inject_noise_; }

 private:
  Function f_;
  std::optional<double> optimum_;
  bool known_truth_;
  bool inject_noise_;
};

/// Raised when an objective cannot produce a value; names the input.
class ObjectiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string describe_point(const Vector& x);

}  // namespace stobnts
