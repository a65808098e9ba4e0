#include "stobnts/surrogate_net.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace stobnts {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMajorMatrix>;
using Weights = Eigen::Map<RowMajorMatrix>;

double activation_constant(Activation act) { return act == Activation::relu ? 2.0 : 1.0; }

void check_params(const NetworkSpec& spec, const ParamVector& theta) {
  if (theta.size() != spec.param_count()) {
    throw std::invalid_argument("parameter vector has length " + std::to_string(theta.size()) +
                                ", network expects " + std::to_string(spec.param_count()));
  }
}

void check_inputs(const NetworkSpec& spec, const Matrix& inputs) {
  if (inputs.rows() != spec.input_dim) {
    throw std::invalid_argument("input dimension " + std::to_string(inputs.rows()) +
                                " does not match network input_dim " +
                                std::to_string(spec.input_dim));
  }
  if (!inputs.allFinite()) throw std::invalid_argument("non-finite network input");
}

ConstWeights layer_weights(const NetworkSpec& spec, const ParamVector& theta, int layer) {
  return ConstWeights(theta.data() + spec.layer_offset(layer), spec.width, spec.fan_in(layer));
}

// Applies the activation in place and writes its derivative.
void activate(Activation act, Matrix& pre, Matrix& deriv) {
  deriv.resize(pre.rows(), pre.cols());
  if (act == Activation::relu) {
    // Subgradient 0 at exactly 0.
    deriv = (pre.array() > 0.0).cast<double>();
    pre = pre.cwiseMax(0.0);
  } else {
    const double k = 2.0 / std::sqrt(std::numbers::pi);
    deriv = pre.unaryExpr([k](double h) { return k * std::exp(-h * h); });
    pre = pre.unaryExpr([](double h) { return std::erf(h); });
  }
}

}  // namespace

Activation parse_activation(const std::string& name) {
  if (name == "relu" || name == "ReLU") return Activation::relu;
  if (name == "erf" || name == "ERF") return Activation::erf;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

std::string to_string(Activation act) { return act == Activation::relu ? "relu" : "erf"; }

void NetworkSpec::validate() const {
  if (depth < 1) throw std::invalid_argument("network depth must be >= 1");
  if (width < 1) throw std::invalid_argument("network width must be >= 1");
  if (input_dim < 1) throw std::invalid_argument("network input_dim must be >= 1");
  if (!(output_scale > 0.0) || !std::isfinite(output_scale)) {
    throw std::invalid_argument("network output_scale must be positive");
  }
}

Eigen::Index NetworkSpec::param_count() const {
  const Eigen::Index m = width;
  return input_dim * m + (depth - 1) * m * m + m;
}

Eigen::Index NetworkSpec::layer_offset(int layer) const {
  const Eigen::Index m = width;
  if (layer <= 1) return 0;
  return input_dim * m + (layer - 2) * m * m;
}

double NetworkSpec::layer_scale(int layer) const {
  if (layer == depth + 1) return std::sqrt(1.0 / width);
  return std::sqrt(activation_constant(activation) / fan_in(layer));
}

NetworkSpec NetworkSpec::with_width(int m) const {
  NetworkSpec s = *this;
  s.width = m;
  return s;
}

NetworkSpec NetworkSpec::with_output_scale(double beta) const {
  NetworkSpec s = *this;
  s.output_scale = beta;
  return s;
}

ParamVector init_params(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ParamVector theta(spec.param_count());
  for (Eigen::Index k = 0; k < theta.size(); ++k) theta[k] = normal(gen);
  return theta;
}

ParamVector zero_last_layer(const ParamVector& theta, const NetworkSpec& spec) {
  check_params(spec, theta);
  ParamVector out = theta;
  out.tail(spec.width).setZero();
  return out;
}

Vector forward_batch(const NetworkSpec& spec, const ParamVector& theta, const Matrix& inputs) {
  spec.validate();
  check_params(spec, theta);
  check_inputs(spec, inputs);
  Matrix act = inputs;
  Matrix deriv;
  for (int l = 1; l <= spec.depth; ++l) {
    Matrix pre = spec.layer_scale(l) * (layer_weights(spec, theta, l) * act);
    activate(spec.activation, pre, deriv);
    act = std::move(pre);
  }
  const auto w_out = theta.tail(spec.width);
  return spec.output_scale * spec.layer_scale(spec.depth + 1) * (act.transpose() * w_out);
}

double forward(const NetworkSpec& spec, const ParamVector& theta, const Vector& x) {
  return forward_batch(spec, theta, x)(0);
}

Vector param_gradient(const NetworkSpec& spec, const ParamVector& theta, const Vector& x) {
  return TangentBatch(spec, theta, x).jacobian().row(0).transpose();
}

TangentBatch::TangentBatch(const NetworkSpec& spec, const ParamVector& theta,
                           const Matrix& inputs)
    : spec_(spec) {
  spec_.validate();
  check_params(spec_, theta);
  check_inputs(spec_, inputs);
  const int depth = spec_.depth;
  activations_.reserve(depth + 1);
  activations_.push_back(inputs);
  std::vector<Matrix> derivs(depth);
  for (int l = 1; l <= depth; ++l) {
    Matrix pre = spec_.layer_scale(l) * (layer_weights(spec_, theta, l) * activations_.back());
    activate(spec_.activation, pre, derivs[l - 1]);
    activations_.push_back(std::move(pre));
  }
  const auto w_out = theta.tail(spec_.width);
  const double out_scale = spec_.output_scale * spec_.layer_scale(depth + 1);
  outputs_ = out_scale * (activations_.back().transpose() * w_out);

  sensitivities_.resize(depth);
  sensitivities_[depth - 1] = (out_scale * w_out).asDiagonal() * derivs[depth - 1];
  for (int l = depth; l >= 2; --l) {
    Matrix back = spec_.layer_scale(l) *
                  (layer_weights(spec_, theta, l).transpose() * sensitivities_[l - 1]);
    sensitivities_[l - 2] = back.cwiseProduct(derivs[l - 2]);
  }
}

Vector TangentBatch::apply(const Vector& v) const {
  if (v.size() != cols()) throw std::invalid_argument("direction has wrong length");
  const int depth = spec_.depth;
  const double out_scale = spec_.output_scale * spec_.layer_scale(depth + 1);
  Vector result = out_scale * (activations_.back().transpose() * v.tail(spec_.width));
  for (int l = 1; l <= depth; ++l) {
    const ConstWeights dir(v.data() + spec_.layer_offset(l), spec_.width, spec_.fan_in(l));
    const Matrix moved = dir * activations_[l - 1];
    result += spec_.layer_scale(l) *
              moved.cwiseProduct(sensitivities_[l - 1]).colwise().sum().transpose();
  }
  return result;
}

Vector TangentBatch::apply_transpose(const Vector& a) const {
  if (a.size() != rows()) throw std::invalid_argument("weight vector has wrong length");
  const int depth = spec_.depth;
  Vector grad(cols());
  for (int l = 1; l <= depth; ++l) {
    Weights block(grad.data() + spec_.layer_offset(l), spec_.width, spec_.fan_in(l));
    block.noalias() = spec_.layer_scale(l) *
                      (sensitivities_[l - 1] * a.asDiagonal() * activations_[l - 1].transpose());
  }
  const double out_scale = spec_.output_scale * spec_.layer_scale(depth + 1);
  grad.tail(spec_.width) = out_scale * (activations_.back() * a);
  return grad;
}

Matrix TangentBatch::gram() const {
  const int depth = spec_.depth;
  const double out_scale = spec_.output_scale * spec_.layer_scale(depth + 1);
  Matrix k = (out_scale * out_scale) * (activations_.back().transpose() * activations_.back());
  for (int l = 1; l <= depth; ++l) {
    const double s = spec_.layer_scale(l);
    const Matrix sens = sensitivities_[l - 1].transpose() * sensitivities_[l - 1];
    const Matrix acts = activations_[l - 1].transpose() * activations_[l - 1];
    k += (s * s) * sens.cwiseProduct(acts);
  }
  // Symmetrize away rounding differences between (i, j) and (j, i).
  return 0.5 * (k + k.transpose());
}

Matrix TangentBatch::jacobian() const {
  const int depth = spec_.depth;
  const Eigen::Index n = rows();
  Matrix jac(n, cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int l = 1; l <= depth; ++l) {
      const Eigen::Index off = spec_.layer_offset(l);
      const int fan = spec_.fan_in(l);
      const double s = spec_.layer_scale(l);
      for (int r = 0; r < spec_.width; ++r) {
        const double g = s * sensitivities_[l - 1](r, i);
        jac.row(i).segment(off + static_cast<Eigen::Index>(r) * fan, fan) =
            g * activations_[l - 1].col(i).transpose();
      }
    }
  }
  const double out_scale = spec_.output_scale * spec_.layer_scale(depth + 1);
  jac.rightCols(spec_.width) = out_scale * activations_.back().transpose();
  return jac;
}

}  // namespace stobnts
