#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>

#include "stobnts/surrogate_net.hpp"
#include "stobnts/tangent_kernel.hpp"

namespace stobnts {

/// Observation-noise variance used when a configuration leaves it unset.
inline constexpr double kDefaultNoiseVar = 0.01;

class CholeskyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cholesky factorization of a symmetric matrix with diagonal jitter.
///
/// The first attempt adds 1e-10 * trace / n; on failure the jitter grows
/// by 10x up to 1e-4 * trace / n, after which CholeskyError is thrown.
struct JitteredCholesky {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;
};
JitteredCholesky jittered_cholesky(const Matrix& a);

double se_kernel(const Vector& x, const Vector& y, double lengthscale);

/// k(a_i, b_j) for column-stored inputs.
Matrix se_gram(const Matrix& a, const Matrix& b, double lengthscale);

struct PosteriorMoments {
  Vector mean;
  Matrix covariance;
  double noise_var = kDefaultNoiseVar;
  double beta = 1.0;

  Vector variance() const { return covariance.diagonal(); }
};

/// GP posterior at test inputs given prior kernel blocks.
///
///   mean(x)      = k(x)^T (K + s2 I)^{-1} y
///   cov(x, x')   = k(x, x') - k(x)^T (K + s2 I)^{-1} k(x')
///
/// With beta != 1 every kernel entry and the noise variance are multiplied
/// by beta^2 before solving: the mean is unchanged and the covariance
/// scales by beta^2.
PosteriorMoments gp_posterior(const Matrix& k_train, const Matrix& k_cross, const Matrix& k_test,
                              const Vector& y, double noise_var, double beta = 1.0);

/// Same, from a joint Gram matrix over (train inputs, then test inputs).
PosteriorMoments gp_posterior(const Matrix& joint_gram, Eigen::Index n_train, const Vector& y,
                              double noise_var, double beta = 1.0);

using KernelFunction = std::function<double(const Vector&, const Vector&)>;

PosteriorMoments gp_posterior(const KernelFunction& kernel, const Matrix& train_inputs,
                              const Vector& y, const Matrix& test_inputs, double noise_var,
                              double beta = 1.0);

/// Random Fourier features for the SE kernel: phi(x) = sqrt(2/M) cos(W x + b).
struct RFFBasis {
  Matrix frequencies;  // M x d, entries N(0, 1 / lengthscale^2)
  Vector phases;       // M, uniform on [0, 2 pi)
  double lengthscale = 0.1;

  Eigen::Index num_features() const { return phases.size(); }
  Eigen::Index input_dim() const { return frequencies.cols(); }
};

RFFBasis make_rff_basis(int input_dim, int num_features, double lengthscale, std::uint64_t seed);

Vector rff_features(const Vector& x, const RFFBasis& basis);

/// Features for column-stored inputs, one column per input (M x n).
Matrix rff_features_batch(const Matrix& inputs, const RFFBasis& basis);

/// Draws from N(mean, cov); factorizes once (jittered Cholesky).
class MvnSampler {
 public:
  MvnSampler(Vector mean, const Matrix& cov);
  /// Standard normals from mt19937_64(seed), mapped through the factor.
  Vector draw(std::uint64_t seed) const;
  Eigen::Index size() const { return mean_.size(); }

 private:
  Vector mean_;
  Matrix lower_;
};

/// One draw from N(mean, cov) via jittered Cholesky.
Vector sample_mvn(const Vector& mean, const Matrix& cov, std::uint64_t seed);

/// One draw from N(0, gram) over the inputs the Gram matrix was built on.
Vector sample_gp_prior(const GramMatrix& gram, std::uint64_t seed);

struct UncertaintySelection {
  std::vector<Eigen::Index> indices;
  /// Posterior variance of each pick at the time it was selected.
  std::vector<double> variances;
};

/// Sequential uncertainty sampling in feature (primal) space.
///
/// Each step picks the unselected candidate maximizing
/// s2 * phi(x)^T (Sigma + s2 I)^{-1} phi(x), where Sigma is the sum of
/// outer products of the features picked so far. Ties go to the lowest
/// index.
UncertaintySelection uncertainty_sampling(const FeatureMatrix& features, double noise_var,
                                          std::size_t budget);

/// Same selection rule computed from the candidates' Gram matrix.
UncertaintySelection uncertainty_sampling_kernel(const GramMatrix& gram, double noise_var,
                                                 std::size_t budget);

}  // namespace stobnts
