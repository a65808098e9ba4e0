#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace stobnts {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Flat parameter vector. Layout is layer-major, row-major within a layer:
///   W_1 (m x d), W_2 .. W_L (m x m), w_out (m).
/// Bias terms are not used.
using ParamVector = Eigen::VectorXd;

enum class Activation { relu, erf };

Activation parse_activation(const std::string& name);
std::string to_string(Activation act);

/// Fully-connected scalar-output network with L hidden layers of width m.
/// Forward pass uses the NTK parameterization: every pre-activation is
/// scaled by sqrt(c_act / fan_in) with c_relu = 2, c_erf = 1, and the
/// output layer by sqrt(1 / m). The output is multiplied by output_scale.
struct NetworkSpec {
  int depth = 2;
  int width = 256;
  int input_dim = 1;
  Activation activation = Activation::relu;
  double output_scale = 1.0;

  void validate() const;

  Eigen::Index param_count() const;
  Eigen::Index layer_offset(int layer) const;  // layer in [1, depth + 1]
  Eigen::Index output_offset() const { return layer_offset(depth + 1); }
  int fan_in(int layer) const { return layer == 1 ? input_dim : width; }
  double layer_scale(int layer) const;  // layer in [1, depth + 1]

  NetworkSpec with_width(int m) const;
  NetworkSpec with_output_scale(double beta) const;
};

ParamVector init_params(const NetworkSpec& spec, std::uint64_t seed);

ParamVector zero_last_layer(const ParamVector& theta, const NetworkSpec& spec);

double forward(const NetworkSpec& spec, const ParamVector& theta, const Vector& x);

Vector param_gradient(const NetworkSpec& spec, const ParamVector& theta, const Vector& x);

/// Batched forward pass; `inputs` holds one input per column.
Vector forward_batch(const NetworkSpec& spec, const ParamVector& theta, const Matrix& inputs);

/// Cached forward/backward state of a batch of inputs at fixed parameters.
///
/// Row i of the Jacobian J (n x p) is param_gradient(spec, theta, x_i). J is
/// never materialized unless asked: products with it are formed from the
/// per-layer activations and back-propagated sensitivities.
class TangentBatch {
 public:
  TangentBatch(const NetworkSpec& spec, const ParamVector& theta, const Matrix& inputs);

  Eigen::Index rows() const { return outputs_.size(); }
  Eigen::Index cols() const { return spec_.param_count(); }
  const NetworkSpec& spec() const { return spec_; }

  /// Network outputs f(x_i; theta).
  const Vector& outputs() const { return outputs_; }

  /// J v: directional derivatives of every output along v.
  Vector apply(const Vector& v) const;

  /// J^T a: weighted sum of per-input gradients.
  Vector apply_transpose(const Vector& a) const;

  /// J J^T, the empirical NTK on the batch.
  Matrix gram() const;

  /// Materialized J (n x p).
  Matrix jacobian() const;

 private:
  NetworkSpec spec_;
  Vector outputs_;
  // activations_[0] = inputs, activations_[l] = A_l (m x n) for l = 1..L
  std::vector<Matrix> activations_;
  // sensitivities_[l - 1] = dOut/dH_l (m x n) for l = 1..L
  std::vector<Matrix> sensitivities_;
};

}  // namespace stobnts
