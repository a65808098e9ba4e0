#include "stobnts/gp.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <utility>

namespace stobnts {

JitteredCholesky jittered_cholesky(const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("cholesky: matrix is not square");
  const Eigen::Index n = a.rows();
  JitteredCholesky result;
  if (n == 0) {
    result.llt.compute(a);
    return result;
  }
  double scale = a.trace() / static_cast<double>(n);
  if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;
  for (double rel = 1e-10; rel <= 1e-4 * (1.0 + 1e-9); rel *= 10.0) {
    Matrix shifted = a;
    shifted.diagonal().array() += rel * scale;
    result.llt.compute(shifted);
    if (result.llt.info() == Eigen::Success) {
      result.jitter = rel * scale;
      return result;
    }
  }
  throw CholeskyError("Cholesky factorization failed after jitter escalation to 1e-4 * trace/n (n=" +
                      std::to_string(n) + "); Gram matrix is ill-conditioned");
}

double se_kernel(const Vector& x, const Vector& y, double lengthscale) {
  if (!(lengthscale > 0.0)) throw std::invalid_argument("SE lengthscale must be positive");
  if (x.size() != y.size()) throw std::invalid_argument("SE kernel: dimension mismatch");
  return std::exp(-(x - y).squaredNorm() / (2.0 * lengthscale * lengthscale));
}

Matrix se_gram(const Matrix& a, const Matrix& b, double lengthscale) {
  if (!(lengthscale > 0.0)) throw std::invalid_argument("SE lengthscale must be positive");
  if (a.rows() != b.rows()) throw std::invalid_argument("SE kernel: dimension mismatch");
  Matrix k(a.cols(), b.cols());
  const double inv = 1.0 / (2.0 * lengthscale * lengthscale);
  for (Eigen::Index j = 0; j < b.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.cols(); ++i) {
      k(i, j) = std::exp(-(a.col(i) - b.col(j)).squaredNorm() * inv);
    }
  }
  return k;
}

PosteriorMoments gp_posterior(const Matrix& k_train, const Matrix& k_cross, const Matrix& k_test,
                              const Vector& y, double noise_var, double beta) {
  const Eigen::Index n = k_train.rows();
  if (k_train.cols() != n || y.size() != n) {
    throw std::invalid_argument("gp_posterior: observation count mismatch");
  }
  if (k_cross.rows() != n || k_cross.cols() != k_test.rows() || k_test.rows() != k_test.cols()) {
    throw std::invalid_argument("gp_posterior: kernel block shapes are inconsistent");
  }
  if (!(noise_var > 0.0)) throw std::invalid_argument("gp_posterior: noise variance must be > 0");
  if (!(beta > 0.0)) throw std::invalid_argument("gp_posterior: beta must be > 0");

  const double b2 = beta * beta;
  PosteriorMoments post;
  post.noise_var = noise_var;
  post.beta = beta;
  if (n == 0) {
    post.mean = Vector::Zero(k_test.rows());
    post.covariance = b2 * k_test;
    return post;
  }
  Matrix system = b2 * k_train;
  system.diagonal().array() += b2 * noise_var;
  const JitteredCholesky chol = jittered_cholesky(system);
  const Matrix cross = b2 * k_cross;
  post.mean = cross.transpose() * chol.llt.solve(y);
  const Matrix half = chol.llt.matrixL().solve(cross);
  post.covariance = b2 * k_test - half.transpose() * half;
  post.covariance = 0.5 * (post.covariance + post.covariance.transpose());
  return post;
}

PosteriorMoments gp_posterior(const Matrix& joint_gram, Eigen::Index n_train, const Vector& y,
                              double noise_var, double beta) {
  const Eigen::Index total = joint_gram.rows();
  if (joint_gram.cols() != total || n_train > total || n_train < 0) {
    throw std::invalid_argument("gp_posterior: joint Gram has wrong shape");
  }
  const Eigen::Index m = total - n_train;
  return gp_posterior(joint_gram.topLeftCorner(n_train, n_train),
                      joint_gram.topRightCorner(n_train, m), joint_gram.bottomRightCorner(m, m), y,
                      noise_var, beta);
}

PosteriorMoments gp_posterior(const KernelFunction& kernel, const Matrix& train_inputs,
                              const Vector& y, const Matrix& test_inputs, double noise_var,
                              double beta) {
  const Eigen::Index n = train_inputs.cols();
  const Eigen::Index m = test_inputs.cols();
  Matrix kt(n, n);
  Matrix kc(n, m);
  Matrix ks(m, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) kt(i, j) = kernel(train_inputs.col(i), train_inputs.col(j));
    for (Eigen::Index j = 0; j < m; ++j) kc(i, j) = kernel(train_inputs.col(i), test_inputs.col(j));
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) ks(i, j) = kernel(test_inputs.col(i), test_inputs.col(j));
  }
  return gp_posterior(kt, kc, ks, y, noise_var, beta);
}

RFFBasis make_rff_basis(int input_dim, int num_features, double lengthscale, std::uint64_t seed) {
  if (input_dim < 1 || num_features < 1) throw std::invalid_argument("RFF basis: bad shape");
  if (!(lengthscale > 0.0)) throw std::invalid_argument("RFF basis: lengthscale must be > 0");
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / lengthscale);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  RFFBasis basis;
  basis.lengthscale = lengthscale;
  basis.frequencies.resize(num_features, input_dim);
  basis.phases.resize(num_features);
  for (int k = 0; k < num_features; ++k) {
    for (int j = 0; j < input_dim; ++j) basis.frequencies(k, j) = normal(gen);
    basis.phases[k] = phase(gen);
  }
  return basis;
}

Matrix rff_features_batch(const Matrix& inputs, const RFFBasis& basis) {
  if (inputs.rows() != basis.input_dim()) throw std::invalid_argument("RFF: dimension mismatch");
  const double amp = std::sqrt(2.0 / static_cast<double>(basis.num_features()));
  Matrix proj = basis.frequencies * inputs;
  proj.colwise() += basis.phases;
  return amp * proj.array().cos().matrix();
}

Vector rff_features(const Vector& x, const RFFBasis& basis) {
  return rff_features_batch(x, basis).col(0);
}

MvnSampler::MvnSampler(Vector mean, const Matrix& cov) : mean_(std::move(mean)) {
  if (cov.rows() != mean_.size() || cov.cols() != mean_.size()) {
    throw std::invalid_argument("sample_mvn: covariance shape mismatch");
  }
  lower_ = mean_.size() == 0 ? Matrix(0, 0) : Matrix(jittered_cholesky(cov).llt.matrixL());
}

Vector MvnSampler::draw(std::uint64_t seed) const {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(mean_.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(gen);
  if (z.size() == 0) return z;
  return mean_ + lower_.triangularView<Eigen::Lower>() * z;
}

Vector sample_mvn(const Vector& mean, const Matrix& cov, std::uint64_t seed) {
  return MvnSampler(mean, cov).draw(seed);
}

Vector sample_gp_prior(const GramMatrix& gram, std::uint64_t seed) {
  return sample_mvn(Vector::Zero(gram.size()), gram.values, seed);
}

namespace {

Eigen::Index pick_max(const Vector& scores, const std::vector<bool>& taken) {
  Eigen::Index best = -1;
  for (Eigen::Index j = 0; j < scores.size(); ++j) {
    if (taken[j]) continue;
    if (best < 0 || scores[j] > scores[best]) best = j;
  }
  return best;
}

void check_budget(Eigen::Index candidates, std::size_t budget, double noise_var) {
  if (candidates == 0) throw std::invalid_argument("uncertainty sampling: empty domain");
  if (budget > static_cast<std::size_t>(candidates)) {
    throw std::invalid_argument("uncertainty sampling: budget exceeds domain size");
  }
  if (!(noise_var > 0.0)) throw std::invalid_argument("uncertainty sampling: noise_var <= 0");
}

}  // namespace

UncertaintySelection uncertainty_sampling(const FeatureMatrix& features, double noise_var,
                                          std::size_t budget) {
  const Eigen::Index n = features.rows();
  check_budget(n, budget, noise_var);
  // Columns of `solved` hold (Sigma + s2 I)^{-1} phi_j, kept current with
  // Sherman-Morrison updates as picks are added.
  Matrix solved = features.values.transpose() / noise_var;
  Vector scores(n);
  for (Eigen::Index j = 0; j < n; ++j) scores[j] = features.values.row(j).dot(solved.col(j));

  UncertaintySelection sel;
  std::vector<bool> taken(n, false);
  for (std::size_t step = 0; step < budget; ++step) {
    const Eigen::Index s = pick_max(scores, taken);
    taken[s] = true;
    sel.indices.push_back(s);
    sel.variances.push_back(noise_var * scores[s]);

    const Vector pivot = solved.col(s);
    const double denom = 1.0 + scores[s];
    const Vector coupling = features.values * pivot;  // phi_j^T A^{-1} phi_s
    solved.noalias() -= pivot * (coupling.transpose() / denom);
    scores.array() -= coupling.array().square() / denom;
  }
  return sel;
}

UncertaintySelection uncertainty_sampling_kernel(const GramMatrix& gram, double noise_var,
                                                 std::size_t budget) {
  const Eigen::Index n = gram.size();
  check_budget(n, budget, noise_var);
  Vector variance = gram.values.diagonal();
  Matrix factors(n, static_cast<Eigen::Index>(budget));
  UncertaintySelection sel;
  std::vector<bool> taken(n, false);
  for (std::size_t step = 0; step < budget; ++step) {
    const Eigen::Index s = pick_max(variance, taken);
    taken[s] = true;
    sel.indices.push_back(s);
    sel.variances.push_back(variance[s]);
    const auto r = static_cast<Eigen::Index>(step);
    Vector cov_s = gram.values.col(s);
    if (r > 0) cov_s -= factors.leftCols(r) * factors.row(s).head(r).transpose();
    factors.col(r) = cov_s / std::sqrt(variance[s] + noise_var);
    variance.array() -= factors.col(r).array().square();
  }
  return sel;
}

}  // namespace stobnts
