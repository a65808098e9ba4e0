#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "stobnts/gp.hpp"

using namespace stobnts;

namespace {

Matrix random_psd(Eigen::Index n, Eigen::Index rank, std::mt19937_64& gen) {
  const Matrix a = oracle::random_matrix(n, rank, gen);
  return a * a.transpose();
}

// Dual GP variance at every candidate given picked indices, from a dense inverse.
Vector dual_variance(const Matrix& k, const std::vector<Eigen::Index>& picked, double s2) {
  const Eigen::Index n = k.rows();
  if (picked.empty()) return k.diagonal();
  const auto r = static_cast<Eigen::Index>(picked.size());
  Matrix kt(r, r), kc(r, n);
  for (Eigen::Index a = 0; a < r; ++a) {
    for (Eigen::Index b = 0; b < r; ++b) kt(a, b) = k(picked[a], picked[b]);
    kc.row(a) = k.row(picked[a]);
  }
  const Matrix inv = (kt + s2 * Matrix::Identity(r, r)).inverse();
  Vector v(n);
  for (Eigen::Index j = 0; j < n; ++j) v[j] = k(j, j) - kc.col(j).dot(inv * kc.col(j));
  return v;
}

Eigen::Index argmax_excluding(const Vector& v, const std::vector<Eigen::Index>& picked) {
  Eigen::Index best = -1;
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    if (std::find(picked.begin(), picked.end(), j) != picked.end()) continue;
    if (best < 0 || v[j] > v[best]) best = j;
  }
  return best;
}

}  // namespace

TEST_CASE("se_kernel") {
  Vector x(1), y(1);
  x << 0.0;
  y << 0.1;
  CHECK(se_kernel(x, x, 0.1) == 1.0);
  CHECK(se_kernel(x, y, 0.1) == doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
  CHECK(se_kernel(x, y, 0.1) == doctest::Approx(0.60653).epsilon(1e-5));
  Vector a(3), b(3);
  a << 0.1, 0.5, -0.2;
  b << 0.3, 0.1, 0.0;
  CHECK(se_kernel(a, b, 0.7) == se_kernel(b, a, 0.7));
  CHECK(se_kernel(a, b, 0.7) == doctest::Approx(oracle::se(a, b, 0.7)).epsilon(1e-14));
  CHECK_THROWS_AS(se_kernel(a, b, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(se_kernel(a, b, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(se_kernel(a, x, 1.0), std::invalid_argument);
  const Matrix g = se_gram(Matrix(a), Matrix(b), 0.7);
  CHECK(g(0, 0) == se_kernel(a, b, 0.7));
}

TEST_CASE("gp_posterior with no observations is the scaled prior") {
  std::mt19937_64 gen(1);
  const Matrix prior = random_psd(5, 5, gen);
  for (double beta : {1.0, 2.5}) {
    const PosteriorMoments pm = gp_posterior(Matrix(0, 0), Matrix(0, 5), prior, Vector(0), 0.1, beta);
    CHECK(pm.mean.isZero(0.0));
    CHECK(oracle::max_rel(pm.covariance, beta * beta * prior) < 1e-15);
  }
}

TEST_CASE("gp_posterior with one observation reduces to a scalar formula") {
  Vector x1(1), y(1);
  x1 << 0.3;
  y << 1.7;
  const double s2 = 0.05;
  Matrix tests(1, 4);
  tests << 0.0, 0.25, 0.3, 0.9;
  const KernelFunction k = [](const Vector& a, const Vector& b) { return oracle::se(a, b, 0.2); };
  const PosteriorMoments pm = gp_posterior(k, Matrix(x1), y, tests, s2);
  for (int j = 0; j < 4; ++j) {
    const double kx = oracle::se(tests.col(j), x1, 0.2);
    CHECK(pm.mean[j] == doctest::Approx(kx * 1.7 / (1.0 + s2)).epsilon(1e-9));
    CHECK(pm.covariance(j, j) == doctest::Approx(1.0 - kx * kx / (1.0 + s2)).epsilon(1e-9));
  }
}

TEST_CASE("gp_posterior matches a dense-inverse oracle (n <= 200)") {
  std::mt19937_64 gen(7);
  double worst = 0.0;
  for (int n : {1, 5, 40, 120, 200}) {
    const int m = 30;
    const Matrix x = oracle::random_matrix(2, n + m, gen);
    Matrix joint(n + m, n + m);
    for (int i = 0; i < n + m; ++i)
      for (int j = 0; j < n + m; ++j) joint(i, j) = oracle::se(x.col(i), x.col(j), 0.8);
    const Vector y = oracle::random_matrix(n, 1, gen).col(0);
    const double s2 = 0.1;
    Vector mean;
    Matrix cov;
    oracle::gp_dense(joint.topLeftCorner(n, n), joint.topRightCorner(n, m), joint.bottomRightCorner(m, m), y, s2,
                     mean, cov);
    const PosteriorMoments pm = gp_posterior(joint, n, y, s2);
    worst = std::max({worst, oracle::max_rel(pm.mean, mean), oracle::max_rel(pm.covariance, cov)});
    const PosteriorMoments blocks = gp_posterior(joint.topLeftCorner(n, n), joint.topRightCorner(n, m),
                                                 joint.bottomRightCorner(m, m), y, s2);
    CHECK(oracle::max_rel(blocks.mean, pm.mean) < 1e-14);
    CHECK((pm.covariance - pm.covariance.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(pm.variance().minCoeff() >= -1e-8);
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("beta scaling: mean unchanged, covariance times beta^2") {
  std::mt19937_64 gen(3);
  const Matrix joint = random_psd(30, 30, gen) + 1e-3 * Matrix::Identity(30, 30);
  const Vector y = oracle::random_matrix(20, 1, gen).col(0);
  const PosteriorMoments a = gp_posterior(joint, 20, y, 0.05, 1.0);
  const PosteriorMoments b = gp_posterior(joint, 20, y, 0.05, 3.0);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() <= 1e-8);
  const Matrix ratio = b.covariance.cwiseQuotient(a.covariance);
  CHECK(((ratio.array() - 9.0).abs() / 9.0).maxCoeff() <= 1e-8);
  CHECK(b.beta == 3.0);
}

TEST_CASE("near noise-free posterior interpolates the data") {
  Matrix x(1, 6);
  x << 0.0, 0.2, 0.4, 0.6, 0.8, 1.0;
  Vector y(6);
  y << 0.3, -1.0, 0.5, 0.9, -0.2, 0.1;
  const KernelFunction k = [](const Vector& a, const Vector& b) { return oracle::se(a, b, 0.15); };
  const PosteriorMoments pm = gp_posterior(k, x, y, x, 1e-8);
  CHECK((pm.mean - y).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("an extra observation never increases posterior variance") {
  std::mt19937_64 gen(12);
  const Matrix x = oracle::random_matrix(1, 40, gen);
  Matrix joint(40, 40);
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 40; ++j) joint(i, j) = oracle::se(x.col(i), x.col(j), 0.5);
  // first n are training, last 20 are test; compare n vs n + 1 training points
  for (int n = 0; n < 19; ++n) {
    Matrix k_small(n + 20, n + 20), k_big(n + 21, n + 21);
    std::vector<int> small_idx, big_idx;
    for (int i = 0; i < n; ++i) small_idx.push_back(i);
    big_idx = small_idx;
    big_idx.push_back(n);
    for (int i = 20; i < 40; ++i) {
      small_idx.push_back(i);
      big_idx.push_back(i);
    }
    for (int i = 0; i < n + 20; ++i)
      for (int j = 0; j < n + 20; ++j) k_small(i, j) = joint(small_idx[i], small_idx[j]);
    for (int i = 0; i < n + 21; ++i)
      for (int j = 0; j < n + 21; ++j) k_big(i, j) = joint(big_idx[i], big_idx[j]);
    const Vector v_small = gp_posterior(k_small, n, Vector::Zero(n), 0.01).variance();
    const Vector v_big = gp_posterior(k_big, n + 1, Vector::Zero(n + 1), 0.01).variance();
    CHECK((v_big - v_small).maxCoeff() <= 1e-8);
  }
}

TEST_CASE("gp_posterior errors") {
  const Matrix k = Matrix::Identity(2, 2);
  CHECK_THROWS_AS(gp_posterior(k, Matrix::Zero(2, 1), Matrix::Ones(1, 1), Vector::Zero(3), 0.1), std::invalid_argument);
  CHECK_THROWS_AS(gp_posterior(k, Matrix::Zero(2, 1), Matrix::Ones(1, 1), Vector::Zero(2), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(gp_posterior(k, Matrix::Zero(2, 1), Matrix::Ones(1, 1), Vector::Zero(2), 0.1, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(gp_posterior(k, Matrix::Zero(3, 1), Matrix::Ones(1, 1), Vector::Zero(2), 0.1), std::invalid_argument);
}

TEST_CASE("jittered Cholesky escalates and then fails") {
  std::mt19937_64 gen(5);
  const Matrix rank1 = random_psd(6, 1, gen);
  const JitteredCholesky ok = jittered_cholesky(rank1);
  CHECK(ok.jitter > 0.0);
  CHECK(ok.jitter <= 1e-4 * rank1.trace() / 6 * (1 + 1e-12));
  CHECK(ok.llt.info() == Eigen::Success);
  const JitteredCholesky clean = jittered_cholesky(Matrix::Identity(3, 3));
  CHECK(clean.jitter == doctest::Approx(1e-10));
  Matrix indefinite(2, 2);
  indefinite << 1.0, 0.0, 0.0, -1.0;
  CHECK_THROWS_AS(jittered_cholesky(indefinite), CholeskyError);
}

TEST_CASE("random Fourier features") {
  const RFFBasis basis = make_rff_basis(1, 1000, 0.1, 42);
  CHECK(basis.num_features() == 1000);
  const RFFBasis again = make_rff_basis(1, 1000, 0.1, 42);
  CHECK(basis.frequencies == again.frequencies);
  CHECK(basis.phases == again.phases);
  CHECK(basis.phases.minCoeff() >= 0.0);
  CHECK(basis.phases.maxCoeff() < 2 * std::numbers::pi);

  Matrix grid(1, 20);
  for (int j = 0; j < 20; ++j) grid(0, j) = j / 19.0;
  int good = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const RFFBasis b = make_rff_basis(1, 1000, 0.1, seed);
    const Matrix phi = rff_features_batch(grid, b);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      CHECK(phi.col(i).squaredNorm() <= 2.0);
      CHECK(phi.col(i) == rff_features(grid.col(i), b));
      for (int j = 0; j < 20; ++j) {
        worst = std::max(worst, std::abs(phi.col(i).dot(phi.col(j)) - oracle::se(grid.col(i), grid.col(j), 0.1)));
      }
    }
    good += worst <= 0.1;
  }
  CHECK(good >= 9);
  CHECK_THROWS_AS(make_rff_basis(1, 10, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(rff_features(Vector::Zero(2), basis), std::invalid_argument);
}

TEST_CASE("sample_gp_prior on the 1000-point grid") {
  Matrix grid(1, 1000);
  for (int j = 0; j < 1000; ++j) grid(0, j) = j / 999.0;
  const GramMatrix gram{se_gram(grid, grid, 0.1), KernelTag::squared_exponential};
  const Vector f = sample_gp_prior(gram, 9);
  CHECK(f.size() == 1000);
  CHECK(sample_gp_prior(gram, 9) == f);
  CHECK(sample_gp_prior(gram, 10) != f);

  // 200-seed moment check on a coarser grid
  Matrix coarse(1, 50);
  for (int j = 0; j < 50; ++j) coarse(0, j) = j / 49.0;
  const GramMatrix g50{se_gram(coarse, coarse, 0.1), KernelTag::squared_exponential};
  Matrix draws(50, 200);
  for (int s = 0; s < 200; ++s) draws.col(s) = sample_gp_prior(g50, 1000 + static_cast<std::uint64_t>(s));
  int outside = 0;
  for (int j = 0; j < 50; ++j) {
    const double mean = draws.row(j).mean();
    const double sd = std::sqrt((draws.row(j).array() - mean).square().sum() / 199.0);
    outside += std::abs(mean) > 3.0 * sd / std::sqrt(200.0);
    // prior variance is 1
    CHECK(sd == doctest::Approx(1.0).epsilon(0.25));
  }
  // 3-sigma per point; a couple of the 50 correlated points may stray
  CHECK(outside <= 2);
}

TEST_CASE("uncertainty sampling: first pick is the largest feature norm") {
  std::mt19937_64 gen(8);
  FeatureMatrix f{oracle::random_matrix(12, 30, gen), {}, {}};
  Eigen::Index best = 0;
  f.values.rowwise().squaredNorm().maxCoeff(&best);
  const UncertaintySelection sel = uncertainty_sampling(f, 0.1, 1);
  CHECK(sel.indices.front() == best);
}

TEST_CASE("uncertainty sampling: primal/dual identity and argmax agreement") {
  std::mt19937_64 gen(31);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const int n = std::uniform_int_distribution<int>(5, 50)(gen);
    const int p = std::uniform_int_distribution<int>(3, 200)(gen);
    const double s2 = std::uniform_real_distribution<double>(0.01, 1.0)(gen);
    FeatureMatrix f{oracle::random_matrix(n, p, gen), {}, {}};
    const Matrix k = f.values * f.values.transpose();
    const std::size_t budget = static_cast<std::size_t>(std::min(n, 10));
    const UncertaintySelection primal = uncertainty_sampling(f, s2, budget);
    const UncertaintySelection dual = uncertainty_sampling_kernel(GramMatrix{k, KernelTag::empirical_ntk}, s2, budget);
    CHECK(primal.indices == dual.indices);

    std::vector<Eigen::Index> picked;
    for (std::size_t step = 0; step < budget; ++step) {
      // oracle: dense primal variance s2 phi^T (Phi_S^T Phi_S + s2 I)^{-1} phi
      Matrix sigma = s2 * Matrix::Identity(p, p);
      for (Eigen::Index j : picked) sigma += f.values.row(j).transpose() * f.values.row(j);
      const Matrix inv = sigma.inverse();
      Vector primal_var(n);
      for (int j = 0; j < n; ++j) primal_var[j] = s2 * f.values.row(j).dot(inv * f.values.row(j).transpose());
      const Vector dual_var = dual_variance(k, picked, s2);
      worst = std::max(worst, oracle::max_rel(primal_var, dual_var));
      const Eigen::Index expect = argmax_excluding(dual_var, picked);
      CHECK(primal.indices[step] == expect);
      CHECK(primal.variances[step] == doctest::Approx(dual_var[expect]).epsilon(1e-8));
      picked.push_back(primal.indices[step]);
    }
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("uncertainty sampling: full budget is a permutation; errors") {
  std::mt19937_64 gen(4);
  FeatureMatrix f{oracle::random_matrix(9, 4, gen), {}, {}};
  UncertaintySelection sel = uncertainty_sampling(f, 0.2, 9);
  std::vector<Eigen::Index> idx = sel.indices;
  std::sort(idx.begin(), idx.end());
  std::vector<Eigen::Index> all(9);
  std::iota(all.begin(), all.end(), 0);
  CHECK(idx == all);
  CHECK_THROWS_AS(uncertainty_sampling(FeatureMatrix{Matrix(0, 4), {}, {}}, 0.1, 0), std::invalid_argument);
  CHECK_THROWS_AS(uncertainty_sampling(f, 0.1, 10), std::invalid_argument);
  CHECK_THROWS_AS(uncertainty_sampling_kernel(GramMatrix{Matrix(0, 0), KernelTag::empirical_ntk}, 0.1, 1),
                  std::invalid_argument);
}

TEST_CASE("uncertainty sampling ties go to the lowest index") {
  // identical rows: every score ties
  FeatureMatrix f{Matrix::Ones(4, 3), {}, {}};
  const UncertaintySelection sel = uncertainty_sampling(f, 0.1, 2);
  CHECK(sel.indices.front() == 0);
  const UncertaintySelection dual = uncertainty_sampling_kernel(GramMatrix{Matrix::Constant(4, 4, 3.0), KernelTag::empirical_ntk}, 0.1, 1);
  CHECK(dual.indices.front() == 0);
}
