#include "stobnts/sto_train.hpp"

#include <cmath>
#include <deque>
#include <random>
#include <stdexcept>

#include "stobnts/gp.hpp"
#include "stobnts/seeds.hpp"

namespace stobnts {

namespace {

class BatchLinearization final : public Linearization {
 public:
  BatchLinearization(std::shared_ptr<const TangentBatch> batch, Vector predictions)
      : batch_(std::move(batch)), predictions_(std::move(predictions)) {}

  const Vector& predictions() const override { return predictions_; }
  Vector apply(const Vector& v) const override { return batch_->apply(v); }
  Vector apply_transpose(const Vector& a) const override { return batch_->apply_transpose(a); }
  Matrix gram() const override { return batch_->gram(); }

 private:
  std::shared_ptr<const TangentBatch> batch_;
  Vector predictions_;
};

class DenseLinearization final : public Linearization {
 public:
  DenseLinearization(std::shared_ptr<const Matrix> features, Vector predictions)
      : features_(std::move(features)), predictions_(std::move(predictions)) {}

  const Vector& predictions() const override { return predictions_; }
  Vector apply(const Vector& v) const override { return *features_ * v; }
  Vector apply_transpose(const Vector& a) const override {
    return features_->transpose() * a;
  }
  Matrix gram() const override { return *features_ * features_->transpose(); }

 private:
  std::shared_ptr<const Matrix> features_;
  Vector predictions_;
};

void check_shapes(const LeastSquaresModel& model, const Vector& targets,
                  const ParamVector& theta0) {
  if (targets.size() != model.num_points()) {
    throw std::invalid_argument("training targets do not match the model's input count");
  }
  if (theta0.size() != model.num_params()) {
    throw std::invalid_argument("initial parameters have length " +
                                std::to_string(theta0.size()) + ", model expects " +
                                std::to_string(model.num_params()));
  }
  if (!targets.allFinite()) throw std::invalid_argument("training targets are not finite");
}

struct LossState {
  double loss;
  Vector gradient;
  std::shared_ptr<const Linearization> lin;
};

LossState evaluate_state(const LeastSquaresModel& model, const Vector& targets,
                         const ParamVector& theta, const ParamVector& theta0, double ridge) {
  auto lin = model.linearize(theta);
  const Vector residual = lin->predictions() - targets;
  const Vector offset = theta - theta0;
  LossState state{residual.squaredNorm() + ridge * offset.squaredNorm(), Vector(), lin};
  state.gradient = 2.0 * (lin->apply_transpose(residual) + ridge * offset);
  return state;
}

double loss_at(const LeastSquaresModel& model, const Vector& targets, const ParamVector& theta,
               const ParamVector& theta0, double ridge) {
  return (model.predict(theta) - targets).squaredNorm() + ridge * (theta - theta0).squaredNorm();
}

}  // namespace

NetworkModel::NetworkModel(NetworkSpec spec, Matrix inputs, Vector offset)
    : spec_(std::move(spec)), inputs_(std::move(inputs)), offset_(std::move(offset)) {
  spec_.validate();
  if (offset_.size() != inputs_.cols()) throw std::invalid_argument("offset length mismatch");
  if (inputs_.rows() != spec_.input_dim) throw std::invalid_argument("input dimension mismatch");
}

NetworkModel::NetworkModel(NetworkSpec spec, Matrix inputs)
    : NetworkModel(spec, inputs, Vector::Zero(inputs.cols())) {}

Vector NetworkModel::predict(const ParamVector& theta) const {
  if (inputs_.cols() == 0) return Vector(0);
  return forward_batch(spec_, theta, inputs_) + offset_;
}

std::shared_ptr<const Linearization> NetworkModel::linearize(const ParamVector& theta) const {
  auto batch = std::make_shared<const TangentBatch>(spec_, theta, inputs_);
  Vector preds = batch->outputs() + offset_;
  return std::make_shared<BatchLinearization>(std::move(batch), std::move(preds));
}

TangentLinearModel::TangentLinearModel(const NetworkSpec& spec, const ParamVector& feature_theta,
                                       const Matrix& inputs)
    : params_(spec.param_count()),
      batch_(std::make_shared<const TangentBatch>(spec, feature_theta, inputs)) {}

Eigen::Index TangentLinearModel::num_points() const { return batch_->rows(); }

Vector TangentLinearModel::predict(const ParamVector& theta) const { return batch_->apply(theta); }

std::shared_ptr<const Linearization> TangentLinearModel::linearize(
    const ParamVector& theta) const {
  return std::make_shared<BatchLinearization>(batch_, batch_->apply(theta));
}

DenseLinearModel::DenseLinearModel(Matrix features)
    : features_(std::make_shared<const Matrix>(std::move(features))) {}

Vector DenseLinearModel::predict(const ParamVector& theta) const { return *features_ * theta; }

std::shared_ptr<const Linearization> DenseLinearModel::linearize(const ParamVector& theta) const {
  return std::make_shared<DenseLinearization>(features_, *features_ * theta);
}

Trainer parse_trainer(const std::string& name) {
  if (name == "auto") return Trainer::automatic;
  if (name == "gd") return Trainer::gradient_descent;
  if (name == "gauss-newton") return Trainer::gauss_newton;
  if (name == "closed-form") return Trainer::closed_form;
  throw std::invalid_argument("unknown trainer '" + name + "'");
}

std::string to_string(Trainer trainer) {
  switch (trainer) {
    case Trainer::automatic:
      return "auto";
    case Trainer::gradient_descent:
      return "gd";
    case Trainer::gauss_newton:
      return "gauss-newton";
    case Trainer::closed_form:
      return "closed-form";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  if (!(step_size > 0.0)) throw std::invalid_argument("train: step_size must be > 0");
  if (max_steps && *max_steps < 1) throw std::invalid_argument("train: max_steps must be >= 1");
  if (!(stall_rtol >= 0.0)) throw std::invalid_argument("train: stall_rtol must be >= 0");
  if (grad_tol && !(*grad_tol > 0.0)) throw std::invalid_argument("train: grad_tol must be > 0");
  if (!(noise_var > 0.0)) throw std::invalid_argument("train: noise_var must be > 0");
  if (!(beta > 0.0)) throw std::invalid_argument("train: beta must be > 0");
}

long TrainConfig::step_limit(Trainer trainer) const {
  if (max_steps) return *max_steps;
  return trainer == Trainer::gauss_newton ? kDefaultGaussNewtonSteps : 100000;
}

double TrainConfig::tolerance_for(const Vector& targets) const {
  return grad_tol ? *grad_tol : 1e-6 * (1.0 + targets.norm());
}

double sto_loss(const ParamVector& theta, const LeastSquaresModel& model, const Vector& targets,
                const ParamVector& theta0, double beta, double noise_var) {
  check_shapes(model, targets, theta0);
  if (theta.size() != theta0.size()) throw std::invalid_argument("theta / theta0 length mismatch");
  return loss_at(model, targets, theta, theta0, beta * beta * noise_var);
}

Vector sto_loss_gradient(const ParamVector& theta, const LeastSquaresModel& model,
                         const Vector& targets, const ParamVector& theta0, double beta,
                         double noise_var) {
  check_shapes(model, targets, theta0);
  if (theta.size() != theta0.size()) throw std::invalid_argument("theta / theta0 length mismatch");
  return evaluate_state(model, targets, theta, theta0, beta * beta * noise_var).gradient;
}

TrainResult train_gd(const LeastSquaresModel& model, const Vector& targets,
                     const ParamVector& theta0, const TrainConfig& cfg) {
  cfg.validate();
  check_shapes(model, targets, theta0);
  const double ridge = cfg.ridge();
  const double tol = cfg.tolerance_for(targets);
  constexpr double kArmijo = 1e-4;

  TrainResult result;
  result.method = Trainer::gradient_descent;
  result.theta = theta0;
  LossState state = evaluate_state(model, targets, result.theta, theta0, ridge);
  const double initial_loss = state.loss;
  result.loss_trace.push_back(state.loss);
  double step = cfg.step_size;
  while (true) {
    result.loss = state.loss;
    result.grad_norm = state.gradient.norm();
    if (result.grad_norm <= tol) {
      result.converged = true;
      break;
    }
    if (result.steps >= cfg.step_limit(Trainer::gradient_descent)) break;

    const double g2 = state.gradient.squaredNorm();
    ParamVector trial;
    double trial_loss = 0.0;
    ++result.steps;
    if (cfg.line_search) {
      step = std::min(2.0 * step, cfg.step_size);
      bool accepted = false;
      for (int halvings = 0; halvings < 80; ++halvings) {
        trial = result.theta - step * state.gradient;
        trial_loss = loss_at(model, targets, trial, theta0, ridge);
        if (std::isfinite(trial_loss) && trial_loss <= state.loss - kArmijo * step * g2) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;  // no representable descent step remains
    } else {
      trial = result.theta - cfg.step_size * state.gradient;
      trial_loss = loss_at(model, targets, trial, theta0, ridge);
      if (!std::isfinite(trial_loss) || trial_loss > 1e6 * std::max(initial_loss, 1e-300)) {
        throw DivergenceError("gradient descent diverged at step " +
                              std::to_string(result.steps) +
                              " (loss exceeded 1e6 x initial); reduce step_size");
      }
    }
    result.theta = std::move(trial);
    state = evaluate_state(model, targets, result.theta, theta0, ridge);
    result.loss_trace.push_back(state.loss);
  }
  return result;
}

TrainResult train_gauss_newton(const LeastSquaresModel& model, const Vector& targets,
                               const ParamVector& theta0, const TrainConfig& cfg) {
  cfg.validate();
  check_shapes(model, targets, theta0);
  const double ridge = cfg.ridge();
  const double tol = cfg.tolerance_for(targets);
  const Eigen::Index n = model.num_points();

  TrainResult result;
  result.method = Trainer::gauss_newton;
  result.theta = theta0;
  LossState state = evaluate_state(model, targets, result.theta, theta0, ridge);
  // Levenberg-Marquardt damping with the gain-ratio update of Nielsen.
  double damping = 1e-3 * ridge;
  double growth = 2.0;
  std::deque<double> recent{state.loss};  // loss after each accepted step
  while (true) {
    result.loss = state.loss;
    result.grad_norm = state.gradient.norm();
    if (result.grad_norm <= tol) {
      result.converged = true;
      break;
    }
    if (result.steps >= cfg.step_limit(Trainer::gauss_newton)) break;
    ++result.steps;

    // Minimize the linearized loss plus damping * ||delta||^2:
    //   (J^T J + nu I) delta = -h,  h = J^T r + ridge e,  nu = ridge + damping
    // via delta = -(h - J^T (J J^T + nu I)^{-1} J h) / nu.
    const Linearization& lin = *state.lin;
    const Vector residual = lin.predictions() - targets;
    const Vector offset = result.theta - theta0;
    const Vector h = 0.5 * state.gradient;
    const Matrix gram = lin.gram();
    const Vector jh = gram * residual + ridge * lin.apply(offset);
    const double nu = ridge + damping;
    Matrix system = gram;
    system.diagonal().array() += nu;
    Eigen::LLT<Matrix> llt(system);
    if (llt.info() != Eigen::Success) {
      damping = std::max(4.0 * damping, 1e-8 * gram.trace() / std::max<Eigen::Index>(n, 1));
      continue;
    }
    const Vector z = llt.solve(jh);
    const Vector delta = -(h - lin.apply_transpose(z)) / nu;
    const ParamVector trial = result.theta + delta;
    const double trial_loss = loss_at(model, targets, trial, theta0, ridge);
    // decrease predicted by the quadratic model: -(2 h.delta + delta^T (J^T J + ridge I) delta)
    const Vector jd = -(jh - gram * z) / nu;
    const double predicted = -(2.0 * h.dot(delta) + jd.squaredNorm() + ridge * delta.squaredNorm());
    const double rho = predicted > 0.0 ? (state.loss - trial_loss) / predicted : -1.0;
    if (std::isfinite(trial_loss) && trial_loss < state.loss && rho > 0.0) {
      result.theta = trial;
      state = evaluate_state(model, targets, result.theta, theta0, ridge);
      const double c = 2.0 * rho - 1.0;
      damping *= std::max(1.0 / 3.0, 1.0 - c * c * c);
      growth = 2.0;
      recent.push_back(state.loss);
      if (recent.size() > 11) recent.pop_front();
      if (recent.size() == 11 && recent.front() - recent.back() <= cfg.stall_rtol * recent.front()) {
        result.loss = state.loss;
        result.grad_norm = state.gradient.norm();
        result.converged = result.grad_norm <= tol;
        break;
      }
    } else {
      damping *= growth;
      growth *= 2.0;
      if (damping > 1e20 * ridge) break;  // stalled at rounding level
    }
  }
  return result;
}

ParamVector ridge_closed_form(const LeastSquaresModel& linear_model, const Vector& targets,
                              const ParamVector& theta0, double ridge) {
  if (!linear_model.is_linear()) throw std::invalid_argument("closed form needs a linear model");
  if (!(ridge > 0.0)) throw std::invalid_argument("ridge must be > 0");
  check_shapes(linear_model, targets, theta0);
  if (targets.size() == 0) return theta0;
  const auto lin = linear_model.linearize(theta0);
  Matrix system = lin->gram();
  system.diagonal().array() += ridge;
  Eigen::LLT<Matrix> llt(system);
  if (llt.info() != Eigen::Success) {
    throw CholeskyError("ridge closed form: dual matrix is not positive definite");
  }
  return theta0 + lin->apply_transpose(llt.solve(targets - lin->predictions()));
}

ParamVector ridge_closed_form(const Matrix& features, const Vector& targets,
                              const ParamVector& theta0, double ridge) {
  return ridge_closed_form(DenseLinearModel(features), targets, theta0, ridge);
}

TrainResult train(const LeastSquaresModel& model, const Vector& targets, const ParamVector& theta0,
                  const TrainConfig& cfg) {
  Trainer method = cfg.method;
  if (method == Trainer::automatic) {
    method = model.is_linear() ? Trainer::closed_form : Trainer::gauss_newton;
  }
  switch (method) {
    case Trainer::gradient_descent:
      return train_gd(model, targets, theta0, cfg);
    case Trainer::gauss_newton:
      return train_gauss_newton(model, targets, theta0, cfg);
    case Trainer::closed_form: {
      cfg.validate();
      TrainResult result;
      result.method = Trainer::closed_form;
      result.theta = ridge_closed_form(model, targets, theta0, cfg.ridge());
      const LossState state = evaluate_state(model, targets, result.theta, theta0, cfg.ridge());
      result.loss = state.loss;
      result.grad_norm = state.gradient.norm();
      result.converged = true;
      return result;
    }
    case Trainer::automatic:
      break;
  }
  throw std::logic_error("unreachable trainer");
}

std::string to_string(AcquisitionKind kind) {
  switch (kind) {
    case AcquisitionKind::bnts:
      return "sto-bnts";
    case AcquisitionKind::bnts_linear:
      return "sto-bnts-linear";
    case AcquisitionKind::deep_ensemble:
      return "deep-ensemble";
  }
  return "unknown";
}

AcquisitionSample::AcquisitionSample(AcquisitionKind kind, BatchEvaluator evaluator,
                                     SampleProvenance provenance, ParamVector theta)
    : kind_(kind),
      evaluator_(std::make_shared<const BatchEvaluator>(std::move(evaluator))),
      provenance_(provenance),
      theta_(std::move(theta)) {}

Vector training_targets(const Vector& y, const TrainConfig& cfg, std::uint64_t seed_theta0) {
  if (!cfg.perturb_targets || y.size() == 0) return y;
  std::mt19937_64 gen(derive_seed(seed_theta0, "target-noise"));
  std::normal_distribution<double> normal(0.0, cfg.beta * std::sqrt(cfg.noise_var));
  Vector out = y;
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += normal(gen);
  return out;
}

namespace {

SampleProvenance provenance_of(const TrainResult& trained, std::uint64_t seed_theta0,
                               std::optional<std::uint64_t> seed_prime) {
  SampleProvenance prov;
  prov.seed_theta0 = seed_theta0;
  prov.seed_theta0_prime = seed_prime;
  prov.trainer = trained.method;
  prov.steps = trained.steps;
  prov.grad_norm = trained.grad_norm;
  prov.loss = trained.loss;
  prov.converged = trained.converged;
  return prov;
}

NetworkSpec checked_spec(const NetworkSpec& spec, const TrainingData& data,
                         const TrainConfig& cfg) {
  spec.validate();
  cfg.validate();
  if (data.inputs.cols() != data.targets.size()) {
    throw std::invalid_argument("training data: input / target count mismatch");
  }
  if (data.inputs.rows() != spec.input_dim && data.size() > 0) {
    throw std::invalid_argument("training data: input dimension mismatch");
  }
  return spec;
}

AcquisitionSample bnts_like(AcquisitionKind kind, const TrainingData& data,
                            const NetworkSpec& spec, const TrainConfig& cfg,
                            const ParamVector& theta0, const ParamVector* theta0_prime,
                            std::uint64_t seed_theta0, std::optional<std::uint64_t> seed_prime) {
  const Vector targets = training_targets(data.targets, cfg, seed_theta0);
  Vector offset = Vector::Zero(data.size());
  if (theta0_prime != nullptr && data.size() > 0) {
    offset = TangentBatch(spec, theta0, data.inputs).apply(*theta0_prime);
  }
  NetworkModel model(spec, data.size() > 0 ? data.inputs : Matrix(spec.input_dim, 0), offset);
  TrainResult trained = train(model, targets, theta0, cfg);

  auto trained_theta = std::make_shared<const ParamVector>(trained.theta);
  std::shared_ptr<const ParamVector> frozen;
  std::shared_ptr<const ParamVector> correction;
  if (theta0_prime != nullptr) {
    frozen = std::make_shared<const ParamVector>(theta0);
    correction = std::make_shared<const ParamVector>(*theta0_prime);
  }
  AcquisitionSample::BatchEvaluator evaluator = [spec, trained_theta, frozen,
                                                 correction](const Matrix& inputs) {
    Vector values = forward_batch(spec, *trained_theta, inputs);
    if (frozen) values += TangentBatch(spec, *frozen, inputs).apply(*correction);
    return values;
  };
  return AcquisitionSample(kind, std::move(evaluator),
                           provenance_of(trained, seed_theta0, seed_prime), trained.theta);
}

}  // namespace

AcquisitionSample draw_acquisition_bnts(const TrainingData& data, const NetworkSpec& spec,
                                        const TrainConfig& cfg, const ParamVector& theta0,
                                        const ParamVector& theta0_prime,
                                        std::uint64_t seed_theta0) {
  checked_spec(spec, data, cfg);
  if (theta0.size() != spec.param_count() || theta0_prime.size() != spec.param_count()) {
    throw std::invalid_argument("initial parameters do not match the network");
  }
  return bnts_like(AcquisitionKind::bnts, data, spec, cfg, theta0, &theta0_prime, seed_theta0,
                   std::nullopt);
}

AcquisitionSample draw_acquisition_bnts(const TrainingData& data, const NetworkSpec& spec,
                                        const TrainConfig& cfg, std::uint64_t seed_theta0,
                                        std::uint64_t seed_theta0_prime) {
  checked_spec(spec, data, cfg);
  const ParamVector theta0 = init_params(spec, seed_theta0);
  const ParamVector theta0_prime = zero_last_layer(init_params(spec, seed_theta0_prime), spec);
  return bnts_like(AcquisitionKind::bnts, data, spec, cfg, theta0, &theta0_prime, seed_theta0,
                   seed_theta0_prime);
}

AcquisitionSample draw_acquisition_deep_ensemble(const TrainingData& data,
                                                 const NetworkSpec& spec, const TrainConfig& cfg,
                                                 std::uint64_t seed_theta0) {
  checked_spec(spec, data, cfg);
  const ParamVector theta0 = init_params(spec, seed_theta0);
  return bnts_like(AcquisitionKind::deep_ensemble, data, spec, cfg, theta0, nullptr, seed_theta0,
                   std::nullopt);
}

AcquisitionSample draw_acquisition_linear(const TrainingData& data, const NetworkSpec& spec,
                                          const TrainConfig& cfg, std::uint64_t seed_theta0_prime,
                                          std::uint64_t seed_theta0) {
  checked_spec(spec, data, cfg);
  auto feature_theta = std::make_shared<const ParamVector>(init_params(spec, seed_theta0_prime));
  const ParamVector theta0 = init_params(spec, seed_theta0);
  const Vector targets = training_targets(data.targets, cfg, seed_theta0);

  TrainResult trained;
  if (data.size() == 0) {
    trained.theta = theta0;
    trained.method = cfg.method == Trainer::automatic ? Trainer::closed_form : cfg.method;
    trained.converged = true;
  } else {
    TangentLinearModel model(spec, *feature_theta, data.inputs);
    trained = train(model, targets, theta0, cfg);
  }
  auto solution = std::make_shared<const ParamVector>(trained.theta);
  AcquisitionSample::BatchEvaluator evaluator = [spec, feature_theta,
                                                 solution](const Matrix& inputs) {
    return TangentBatch(spec, *feature_theta, inputs).apply(*solution);
  };
  return AcquisitionSample(AcquisitionKind::bnts_linear, std::move(evaluator),
                           provenance_of(trained, seed_theta0, seed_theta0_prime), trained.theta);
}

}  // namespace stobnts
