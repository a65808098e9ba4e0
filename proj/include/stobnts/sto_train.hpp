#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stobnts/history.hpp"
#include "stobnts/surrogate_net.hpp"

namespace stobnts {

/// Jacobian of a model's predictions on its training inputs at fixed parameters.
class Linearization {
 public:
  virtual ~Linearization() = default;
  virtual const Vector& predictions() const = 0;
  virtual Vector apply(const Vector& v) const = 0;
  virtual Vector apply_transpose(const Vector& a) const = 0;
  virtual Matrix gram() const = 0;
};

/// A parametric family evaluated on a fixed set of training inputs.
class LeastSquaresModel {
 public:
  virtual ~LeastSquaresModel() = default;
  virtual Eigen::Index num_params() const = 0;
  virtual Eigen::Index num_points() const = 0;
  virtual bool is_linear() const = 0;
  virtual Vector predict(const ParamVector& theta) const = 0;
  virtual std::shared_ptr<const Linearization> linearize(const ParamVector& theta) const = 0;
};

/// f(x; theta) + offset(x) for a network, offset fixed per training input.
class NetworkModel final : public LeastSquaresModel {
 public:
  NetworkModel(NetworkSpec spec, Matrix inputs, Vector offset);
  NetworkModel(NetworkSpec spec, Matrix inputs);

  Eigen::Index num_params() const override { return spec_.param_count(); }
  Eigen::Index num_points() const override { return inputs_.cols(); }
  bool is_linear() const override { return false; }
  Vector predict(const ParamVector& theta) const override;
  std::shared_ptr<const Linearization> linearize(const ParamVector& theta) const override;

 private:
  NetworkSpec spec_;
  Matrix inputs_;
  Vector offset_;
};

/// <grad_theta f(x; feature_theta), theta>: linear in the tangent features.
class TangentLinearModel final : public LeastSquaresModel {
 public:
  TangentLinearModel(const NetworkSpec& spec, const ParamVector& feature_theta,
                     const Matrix& inputs);

  Eigen::Index num_params() const override { return params_; }
  Eigen::Index num_points() const override;
  bool is_linear() const override { return true; }
  Vector predict(const ParamVector& theta) const override;
  std::shared_ptr<const Linearization> linearize(const ParamVector& theta) const override;

 private:
  Eigen::Index params_;
  std::shared_ptr<const TangentBatch> batch_;
};

/// <phi(x), theta> with an explicit n x p feature matrix.
class DenseLinearModel final : public LeastSquaresModel {
 public:
  explicit DenseLinearModel(Matrix features);

  Eigen::Index num_params() const override { return features_->cols(); }
  Eigen::Index num_points() const override { return features_->rows(); }
  bool is_linear() const override { return true; }
  Vector predict(const ParamVector& theta) const override;
  std::shared_ptr<const Linearization> linearize(const ParamVector& theta) const override;

 private:
  std::shared_ptr<const Matrix> features_;
};

enum class Trainer { automatic, gradient_descent, gauss_newton, closed_form };

Trainer parse_trainer(const std::string& name);
std::string to_string(Trainer trainer);

inline constexpr long kDefaultGaussNewtonSteps = 50;

struct TrainConfig {
  Trainer method = Trainer::automatic;
  double step_size = 1.0;
  /// Gradient descent halves the step until Armijo decrease; when false a
  /// fixed step is taken and divergence (loss > 1e6 x initial) throws.
  bool line_search = true;
  /// Step limit; unset means 100000 for gradient descent and
  /// kDefaultGaussNewtonSteps for Gauss-Newton.
  std::optional<long> max_steps;
  /// Gauss-Newton also stops once ten accepted steps together lower the
  /// loss by less than this fraction.
  double stall_rtol = 1e-6;
  /// Absolute gradient-norm tolerance; unset means 1e-6 * (1 + ||y||).
  std::optional<double> grad_tol;
  double noise_var = 0.01;
  double beta = 1.0;
  /// Train on y + eps with eps ~ N(0, beta^2 noise_var) drawn per sample.
  bool perturb_targets = true;

  void validate() const;
  double ridge() const { return beta * beta * noise_var; }
  double tolerance_for(const Vector& targets) const;
  long step_limit(Trainer trainer) const;
};

struct TrainResult {
  ParamVector theta;
  double loss = 0.0;
  double grad_norm = 0.0;
  long steps = 0;
  bool converged = false;
  Trainer method = Trainer::gradient_descent;
  /// Loss after every accepted step (gradient descent only), starting at theta0.
  std::vector<double> loss_trace;
};

/// sum_i (y_i - f(x_i; theta))^2 + beta^2 s2 ||theta - theta0||^2
double sto_loss(const ParamVector& theta, const LeastSquaresModel& model, const Vector& targets,
                const ParamVector& theta0, double beta, double noise_var);

/// Gradient of sto_loss with respect to theta.
Vector sto_loss_gradient(const ParamVector& theta, const LeastSquaresModel& model,
                         const Vector& targets, const ParamVector& theta0, double beta,
                         double noise_var);

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Full-batch gradient descent from theta0 with Armijo backtracking.
TrainResult train_gd(const LeastSquaresModel& model, const Vector& targets,
                     const ParamVector& theta0, const TrainConfig& cfg);

/// Damped Gauss-Newton (Levenberg-Marquardt) from theta0, solved in the
/// n x n dual form. Same objective and stopping rule as train_gd.
TrainResult train_gauss_newton(const LeastSquaresModel& model, const Vector& targets,
                               const ParamVector& theta0, const TrainConfig& cfg);

/// theta0 + J^T (J J^T + ridge I)^{-1} (y - J theta0) for a linear model.
ParamVector ridge_closed_form(const LeastSquaresModel& linear_model, const Vector& targets,
                              const ParamVector& theta0, double ridge);
ParamVector ridge_closed_form(const Matrix& features, const Vector& targets,
                              const ParamVector& theta0, double ridge);

/// Dispatches on cfg.method (automatic: closed form for linear models,
/// Gauss-Newton otherwise).
TrainResult train(const LeastSquaresModel& model, const Vector& targets, const ParamVector& theta0,
                  const TrainConfig& cfg);

enum class AcquisitionKind { bnts, bnts_linear, deep_ensemble };

std::string to_string(AcquisitionKind kind);

struct SampleProvenance {
  std::uint64_t seed_theta0 = 0;
  std::optional<std::uint64_t> seed_theta0_prime;
  Trainer trainer = Trainer::automatic;
  long steps = 0;
  double grad_norm = 0.0;
  double loss = 0.0;
  bool converged = true;
};

/// A trained acquisition function f^i_t. Immutable once constructed.
class AcquisitionSample {
 public:
  using BatchEvaluator = std::function<Vector(const Matrix&)>;

  AcquisitionSample(AcquisitionKind kind, BatchEvaluator evaluator, SampleProvenance provenance,
                    ParamVector theta);

  AcquisitionKind kind() const { return kind_; }
  const SampleProvenance& provenance() const { return provenance_; }

  /// Values at column-stored normalized inputs.
  Vector evaluate(const Matrix& inputs) const { return (*evaluator_)(inputs); }
  double operator()(const Vector& x) const { return evaluate(x)(0); }

  /// Trained parameters (BNTS / deep ensemble: network weights; linear: theta*).
  const ParamVector& theta() const { return theta_; }

 private:
  AcquisitionKind kind_;
  std::shared_ptr<const BatchEvaluator> evaluator_;
  SampleProvenance provenance_;
  ParamVector theta_;
};

/// Targets actually trained on: y plus N(0, beta^2 s2) noise when enabled.
Vector training_targets(const Vector& y, const TrainConfig& cfg, std::uint64_t seed_theta0);

/// Posterior-sample draw: f(x; theta) + <grad f(x; theta0), theta0'> trained from theta0.
AcquisitionSample draw_acquisition_bnts(const TrainingData& data, const NetworkSpec& spec,
                                        const TrainConfig& cfg, std::uint64_t seed_theta0,
                                        std::uint64_t seed_theta0_prime);

/// Same with explicit initial parameters; theta0_prime is used as given.
AcquisitionSample draw_acquisition_bnts(const TrainingData& data, const NetworkSpec& spec,
                                        const TrainConfig& cfg, const ParamVector& theta0,
                                        const ParamVector& theta0_prime,
                                        std::uint64_t seed_theta0);

/// Linear variant: ridge regression in the tangent features at theta0'.
AcquisitionSample draw_acquisition_linear(const TrainingData& data, const NetworkSpec& spec,
                                          const TrainConfig& cfg, std::uint64_t seed_theta0_prime,
                                          std::uint64_t seed_theta0);

/// Network draw without the <grad f(x; theta0), theta0'> term.
AcquisitionSample draw_acquisition_deep_ensemble(const TrainingData& data,
                                                 const NetworkSpec& spec, const TrainConfig& cfg,
                                                 std::uint64_t seed_theta0);

}  // namespace stobnts
