#include "stobnts/engine.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <future>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

#include "stobnts/gp.hpp"
#include "stobnts/number_format.hpp"
#include "stobnts/seeds.hpp"
#include "stobnts/tangent_kernel.hpp"

namespace stobnts {

Algorithm parse_algorithm(const std::string& name) {
  if (name == "sto-bnts") return Algorithm::sto_bnts;
  if (name == "sto-bnts-linear") return Algorithm::sto_bnts_linear;
  if (name == "deep-ensemble") return Algorithm::deep_ensemble;
  if (name == "gp-ts") return Algorithm::gp_ts;
  if (name == "gp-ucb") return Algorithm::gp_ucb;
  if (name == "random-search") return Algorithm::random_search;
  throw std::invalid_argument("unknown algorithm '" + name + "'");
}

std::string to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::sto_bnts:
      return "sto-bnts";
    case Algorithm::sto_bnts_linear:
      return "sto-bnts-linear";
    case Algorithm::deep_ensemble:
      return "deep-ensemble";
    case Algorithm::gp_ts:
      return "gp-ts";
    case Algorithm::gp_ucb:
      return "gp-ucb";
    case Algorithm::random_search:
      return "random-search";
  }
  return "unknown";
}

BetaMode parse_beta_mode(const std::string& name) {
  if (name == "t1") return BetaMode::theoretical_t1;
  if (name == "t2") return BetaMode::theoretical_t2;
  if (name == "practical") return BetaMode::practical_one;
  throw std::invalid_argument("unknown beta mode '" + name + "'");
}

std::string to_string(BetaMode mode) {
  switch (mode) {
    case BetaMode::theoretical_t1:
      return "t1";
    case BetaMode::theoretical_t2:
      return "t2";
    case BetaMode::practical_one:
      return "practical";
  }
  return "unknown";
}

InitMode parse_init_mode(const std::string& name) {
  if (name == "random") return InitMode::random;
  if (name == "uncertainty") return InitMode::uncertainty;
  throw std::invalid_argument("unknown init mode '" + name + "'");
}

std::string to_string(InitMode mode) {
  return mode == InitMode::random ? "random" : "uncertainty";
}

GpSampler parse_gp_sampler(const std::string& name) {
  if (name == "auto") return GpSampler::automatic;
  if (name == "exact") return GpSampler::exact;
  if (name == "rff") return GpSampler::rff;
  throw std::invalid_argument("unknown GP sampler '" + name + "'");
}

std::string to_string(GpSampler sampler) {
  switch (sampler) {
    case GpSampler::automatic:
      return "auto";
    case GpSampler::exact:
      return "exact";
    case GpSampler::rff:
      return "rff";
  }
  return "unknown";
}

double beta_schedule(int t, double domain_card, double delta, BetaMode mode) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("beta schedule: delta must be in (0, 1)");
  if (t < 1) throw std::invalid_argument("beta schedule: t must be >= 1");
  if (!(domain_card >= 1.0)) throw std::invalid_argument("beta schedule: |X| must be >= 1");
  const double pi2 = std::numbers::pi * std::numbers::pi;
  const double tt = static_cast<double>(t) * static_cast<double>(t);
  switch (mode) {
    case BetaMode::practical_one:
      return 1.0;
    case BetaMode::theoretical_t1:
      return 2.0 * std::log(pi2 * tt * domain_card / (3.0 * delta));
    case BetaMode::theoretical_t2:
      return 2.0 * std::log(2.0 * pi2 * tt * domain_card / (3.0 * delta));
  }
  return 1.0;
}

void EngineConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (horizon % batch_size != 0) {
    throw std::invalid_argument("horizon (" + std::to_string(horizon) +
                                ") must be a multiple of batch_size (" +
                                std::to_string(batch_size) + ")");
  }
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0, 1)");
  if (init.budget < 1) throw std::invalid_argument("init.budget must be >= 1");
  if (init.candidates < init.budget) throw std::invalid_argument("init.candidates must be >= budget");
  if (!(noise_var > 0.0)) throw std::invalid_argument("noise_var must be > 0");
  if (search.probes < 1) throw std::invalid_argument("search.probes must be >= 1");
  if (search.restarts < 0 || search.restarts > search.probes) {
    throw std::invalid_argument("search.restarts must be in [0, probes]");
  }
  if (search.max_iters < 0) throw std::invalid_argument("search.max_iters must be >= 0");
  if (!(search.fd_step > 0.0 && search.fd_step < 0.1)) {
    throw std::invalid_argument("search.fd_step must be in (0, 0.1)");
  }
  if (!(gp.lengthscale > 0.0)) throw std::invalid_argument("gp.lengthscale must be > 0");
  if (gp.rff_features < 1) throw std::invalid_argument("gp.rff_features must be >= 1");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  NetworkSpec probe = network;
  probe.input_dim = std::max(probe.input_dim, 1);
  probe.output_scale = 1.0;
  probe.validate();
  TrainConfig tc = train;
  tc.noise_var = noise_var;
  tc.beta = 1.0;
  tc.validate();
}

double effective_cardinality(const Domain& domain, int horizon) {
  if (domain.kind() == DomainKind::discrete) return static_cast<double>(domain.cardinality());
  return std::pow(static_cast<double>(horizon), 0.5 * domain.dim());
}

namespace {

constexpr Eigen::Index kChunk = 4096;

Vector evaluate_chunked(const BatchFunction& f, const Matrix& points) {
  Vector values(points.cols());
  for (Eigen::Index start = 0; start < points.cols(); start += kChunk) {
    const Eigen::Index len = std::min(kChunk, points.cols() - start);
    const Vector part = f(points.middleCols(start, len));
    if (part.size() != len) throw std::runtime_error("acquisition returned the wrong number of values");
    values.segment(start, len) = part;
  }
  for (Eigen::Index j = 0; j < values.size(); ++j) {
    if (!std::isfinite(values[j])) {
      throw std::runtime_error("acquisition returned a non-finite value at " +
                               describe_point(points.col(j)));
    }
  }
  return values;
}

Eigen::Index argmax_lowest(const Vector& values) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < values.size(); ++j) {
    if (values[j] > values[best]) best = j;
  }
  return best;
}

Matrix uniform_box(const Domain& domain, Eigen::Index count, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix points(domain.dim(), count);
  for (Eigen::Index k = 0; k < count; ++k) {
    for (int j = 0; j < domain.dim(); ++j) {
      points(j, k) = domain.lower()[j] + unif(gen) * (domain.upper()[j] - domain.lower()[j]);
    }
  }
  return points;
}

struct Probe {
  Vector x;
  double value;
};

// Minimizes -f over the box with projected L-BFGS; gradients by finite
// differences (central inside the box, one-sided at a bound).
class BoxRefiner {
 public:
  BoxRefiner(const BatchFunction& f, const Domain& domain, const SearchConfig& search)
      : f_(f), lo_(domain.lower()), hi_(domain.upper()), search_(search) {}

  Probe run(Probe start) const {
    const Eigen::Index d = lo_.size();
    Vector x = start.x;
    double fx = -start.value;
    Vector g = gradient(x, fx);
    std::deque<std::pair<Vector, Vector>> memory;
    constexpr std::size_t kMemory = 8;
    for (int iter = 0; iter < search_.max_iters; ++iter) {
      Vector pg = g;
      for (Eigen::Index j = 0; j < d; ++j) {
        if ((x[j] <= lo_[j] && g[j] > 0.0) || (x[j] >= hi_[j] && g[j] < 0.0)) pg[j] = 0.0;
      }
      if (pg.lpNorm<Eigen::Infinity>() <= 1e-12 * (1.0 + std::abs(fx))) break;

      Vector dir = -two_loop(pg, memory);
      for (Eigen::Index j = 0; j < d; ++j) {
        if (pg[j] == 0.0) dir[j] = 0.0;
      }
      if (dir.dot(pg) >= 0.0) {
        memory.clear();
        dir = -pg;
      }
      double step = 1.0;
      if (memory.empty()) {
        // first step moves at most a tenth of the box diagonal
        step = std::min(1.0, 0.1 * (hi_ - lo_).norm() / std::max(dir.norm(), 1e-300));
      }
      bool moved = false;
      Vector x_new;
      double f_new = fx;
      for (int half = 0; half < 40; ++half) {
        x_new = (x + step * dir).cwiseMax(lo_).cwiseMin(hi_);
        f_new = -value_at(x_new);
        if (f_new <= fx + 1e-4 * g.dot(x_new - x) && f_new < fx) {
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
      const Vector g_new = gradient(x_new, f_new);
      const Vector s = x_new - x;
      const Vector yv = g_new - g;
      if (s.dot(yv) > 1e-12 * s.norm() * yv.norm()) {
        memory.emplace_back(s, yv);
        if (memory.size() > kMemory) memory.pop_front();
      }
      const double decrease = fx - f_new;
      x = x_new;
      fx = f_new;
      g = g_new;
      if (decrease <= 1e-14 * (1.0 + std::abs(fx))) break;
    }
    return {x, -fx};
  }

 private:
  double value_at(const Vector& x) const {
    const double v = f_(x)(0);
    if (!std::isfinite(v)) {
      throw std::runtime_error("acquisition returned a non-finite value at " + describe_point(x));
    }
    return v;
  }

  // Gradient of -f.
  Vector gradient(const Vector& x, double fx) const {
    const Eigen::Index d = x.size();
    Matrix pts(d, 2 * d);
    Vector h(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      h[j] = search_.fd_step * std::max(hi_[j] - lo_[j], 1e-12);
      pts.col(2 * j) = x;
      pts.col(2 * j + 1) = x;
      pts(j, 2 * j) = std::min(x[j] + h[j], hi_[j]);
      pts(j, 2 * j + 1) = std::max(x[j] - h[j], lo_[j]);
    }
    const Vector vals = f_(pts);
    Vector g(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      const double up = pts(j, 2 * j);
      const double down = pts(j, 2 * j + 1);
      double fu = -vals[2 * j];
      double fd = -vals[2 * j + 1];
      if (!std::isfinite(fu) || !std::isfinite(fd)) {
        throw std::runtime_error("acquisition returned a non-finite value near " +
                                 describe_point(x));
      }
      if (up == x[j]) fu = fx;
      if (down == x[j]) fd = fx;
      g[j] = up > down ? (fu - fd) / (up - down) : 0.0;
    }
    return g;
  }

  static Vector two_loop(const Vector& q0, const std::deque<std::pair<Vector, Vector>>& memory) {
    Vector q = q0;
    std::vector<double> alphas(memory.size());
    for (std::size_t k = memory.size(); k-- > 0;) {
      const auto& [s, y] = memory[k];
      alphas[k] = s.dot(q) / y.dot(s);
      q -= alphas[k] * y;
    }
    if (!memory.empty()) {
      const auto& [s, y] = memory.back();
      q *= s.dot(y) / y.squaredNorm();
    }
    for (std::size_t k = 0; k < memory.size(); ++k) {
      const auto& [s, y] = memory[k];
      const double b = y.dot(q) / y.dot(s);
      q += (alphas[k] - b) * s;
    }
    return q;
  }

  const BatchFunction& f_;
  Vector lo_;
  Vector hi_;
  SearchConfig search_;
};

}  // namespace

MaximizerResult maximize_acquisition(const BatchFunction& f, const Domain& domain,
                                     const SearchConfig& search, std::uint64_t seed) {
  MaximizerResult result;
  if (domain.kind() == DomainKind::discrete) {
    const Vector values = evaluate_chunked(f, domain.points());
    const Eigen::Index best = argmax_lowest(values);
    result.query = {domain.point(best), best};
    result.value = values[best];
    result.best_probe = values[best];
    return result;
  }

  std::mt19937_64 gen(seed);
  const Matrix probes = uniform_box(domain, search.probes, gen);
  const Vector values = evaluate_chunked(f, probes);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return values[a] > values[b]; });
  Probe best{probes.col(order[0]), values[order[0]]};
  result.best_probe = best.value;
  BoxRefiner refiner(f, domain, search);
  for (int r = 0; r < search.restarts; ++r) {
    const Eigen::Index idx = order[static_cast<std::size_t>(r)];
    const Probe refined = refiner.run({probes.col(idx), values[idx]});
    if (refined.value > best.value) best = refined;
  }
  result.query = {best.x, std::nullopt};
  result.value = best.value;
  return result;
}

NetworkSpec network_for(const EngineConfig& cfg, const Domain& domain, double beta) {
  NetworkSpec spec = cfg.network;
  spec.input_dim = domain.network_input_dim();
  spec.output_scale = beta;
  return spec;
}

namespace {

using SlotProposer = std::function<Query(int)>;

struct Observed {
  Matrix raw;
  Vector y;
};

Observed observed_through(const History& history, const Domain& domain, int last_iteration) {
  std::vector<const Observation*> kept;
  for (const Observation& obs : history.entries()) {
    if (obs.iteration <= last_iteration) kept.push_back(&obs);
  }
  Observed out{Matrix(domain.dim(), static_cast<Eigen::Index>(kept.size())),
               Vector(static_cast<Eigen::Index>(kept.size()))};
  for (std::size_t k = 0; k < kept.size(); ++k) {
    out.raw.col(static_cast<Eigen::Index>(k)) = kept[k]->raw;
    out.y[static_cast<Eigen::Index>(k)] = kept[k]->y;
  }
  return out;
}

void check_isolation(const History& history, int t) {
  if (t < 1) throw std::invalid_argument("select_batch: iteration must be >= 1");
  if (history.completed_through() < t - 1) {
    throw std::logic_error("select_batch: iteration " + std::to_string(t - 1) +
                           " is not fully observed");
  }
}

double iteration_beta(const Domain& domain, const EngineConfig& cfg, int t) {
  return beta_schedule(t, effective_cardinality(domain, cfg.horizon), cfg.delta, cfg.beta_mode);
}

Vector standard_normals(Eigen::Index n, std::mt19937_64& gen) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(n);
  for (Eigen::Index j = 0; j < n; ++j) z[j] = normal(gen);
  return z;
}

SlotProposer network_proposer(const History& history, const Domain& domain,
                              const EngineConfig& cfg, int t) {
  const double beta = iteration_beta(domain, cfg, t);
  auto data = std::make_shared<const TrainingData>(
      history.training_data(t - 1, domain.network_input_dim()));
  const NetworkSpec spec = network_for(cfg, domain, beta);
  TrainConfig tc = cfg.train;
  tc.noise_var = cfg.noise_var;
  tc.beta = beta;
  return [data, spec, tc, &domain, &cfg, t](int slot) {
    const auto s = static_cast<std::uint64_t>(slot);
    const std::uint64_t seed0 = derive_seed(cfg.seed, "theta0", t, s);
    const std::uint64_t seed0p = derive_seed(cfg.seed, "theta0-prime", t, s);
    std::optional<AcquisitionSample> sample;
    switch (cfg.algorithm) {
      case Algorithm::sto_bnts:
        sample = draw_acquisition_bnts(*data, spec, tc, seed0, seed0p);
        break;
      case Algorithm::sto_bnts_linear:
        sample = draw_acquisition_linear(*data, spec, tc, seed0p, seed0);
        break;
      default:
        sample = draw_acquisition_deep_ensemble(*data, spec, tc, seed0);
        break;
    }
    const BatchFunction f = [&](const Matrix& raw) { return sample->evaluate(domain.normalize(raw)); };
    return maximize_acquisition(f, domain, cfg.search, derive_seed(cfg.seed, "search", t, s)).query;
  };
}

// Shared GP state for one iteration: SE kernel on unit-box coordinates.
struct GpState {
  Matrix unit_train;
  Vector y;
  double beta = 1.0;
  std::optional<JitteredCholesky> chol;  // of K + s2 I (unscaled)
  Vector alpha;                          // (K + s2 I)^{-1} y
};

std::shared_ptr<GpState> gp_state(const History& history, const Domain& domain,
                                  const EngineConfig& cfg, int t, double beta) {
  auto st = std::make_shared<GpState>();
  const Observed obs = observed_through(history, domain, t - 1);
  st->unit_train = domain.unit_coordinates(obs.raw);
  st->y = obs.y;
  st->beta = beta;
  if (obs.y.size() > 0) {
    Matrix system = se_gram(st->unit_train, st->unit_train, cfg.gp.lengthscale);
    system.diagonal().array() += cfg.noise_var;
    st->chol = jittered_cholesky(system);
    st->alpha = st->chol->llt.solve(st->y);
  }
  return st;
}

bool use_exact_sampler(const Domain& domain, const EngineConfig& cfg) {
  switch (cfg.gp.sampler) {
    case GpSampler::exact:
      if (domain.kind() != DomainKind::discrete) {
        throw std::invalid_argument("exact GP-TS sampling needs a discrete domain; use the rff sampler");
      }
      return true;
    case GpSampler::rff:
      return false;
    case GpSampler::automatic:
      return domain.kind() == DomainKind::discrete && domain.cardinality() <= 5000;
  }
  return false;
}

SlotProposer gp_ts_proposer(const History& history, const Domain& domain, const EngineConfig& cfg,
                            int t) {
  const double beta = iteration_beta(domain, cfg, t);
  auto st = gp_state(history, domain, cfg, t, beta);
  if (use_exact_sampler(domain, cfg)) {
    const Matrix unit = domain.unit_coordinates(domain.points());
    const Matrix k_test = se_gram(unit, unit, cfg.gp.lengthscale);
    const Matrix k_cross = se_gram(st->unit_train, unit, cfg.gp.lengthscale);
    const Matrix k_train = se_gram(st->unit_train, st->unit_train, cfg.gp.lengthscale);
    const PosteriorMoments post = gp_posterior(k_train, k_cross, k_test, st->y, cfg.noise_var, beta);
    auto sampler = std::make_shared<const MvnSampler>(post.mean, post.covariance);
    return [sampler, &domain, &cfg, t](int slot) {
      const auto s = static_cast<std::uint64_t>(slot);
      const Vector sample = sampler->draw(derive_seed(cfg.seed, "gp-sample", t, s));
      const Eigen::Index best = argmax_lowest(sample);
      return Query{domain.point(best), best};
    };
  }
  return [st, &domain, &cfg, t](int slot) {
    const auto s = static_cast<std::uint64_t>(slot);
    const std::uint64_t seed = derive_seed(cfg.seed, "gp-sample", t, s);
    const RFFBasis basis = make_rff_basis(domain.dim(), cfg.gp.rff_features, cfg.gp.lengthscale,
                                          derive_seed(seed, "basis"));
    std::mt19937_64 gen(seed);
    // Pathwise update of a prior weight draw: w = w0 + Phi^T (Phi Phi^T + s2 I)^{-1}
    // (y - Phi w0 - eps) is an exact draw from the weight-space posterior.
    Vector w = st->beta * standard_normals(basis.num_features(), gen);
    const Eigen::Index n = st->y.size();
    if (n > 0) {
      const Vector eps = st->beta * std::sqrt(cfg.noise_var) * standard_normals(n, gen);
      const Matrix phi = rff_features_batch(st->unit_train, basis).transpose();  // n x M
      Matrix system = phi * phi.transpose();
      system.diagonal().array() += cfg.noise_var;
      const JitteredCholesky chol = jittered_cholesky(system);
      w += phi.transpose() * chol.llt.solve(st->y - phi * w - eps);
    }
    const BatchFunction f = [&](const Matrix& raw) -> Vector {
      return rff_features_batch(domain.unit_coordinates(raw), basis).transpose() * w;
    };
    return maximize_acquisition(f, domain, cfg.search, derive_seed(cfg.seed, "search", t, s)).query;
  };
}

SlotProposer gp_ucb_proposer(const History& history, const Domain& domain,
                             const EngineConfig& cfg, int t) {
  const double beta = iteration_beta(domain, cfg, t);
  auto st = gp_state(history, domain, cfg, t, 1.0);
  const double root_beta = std::sqrt(beta);
  const BatchFunction f = [st, root_beta, &domain, &cfg](const Matrix& raw) -> Vector {
    const Matrix unit = domain.unit_coordinates(raw);
    Vector mean = Vector::Zero(raw.cols());
    Vector var = Vector::Ones(raw.cols());
    if (st->chol) {
      const Matrix kc = se_gram(st->unit_train, unit, cfg.gp.lengthscale);
      mean = kc.transpose() * st->alpha;
      const Matrix half = st->chol->llt.matrixL().solve(kc);
      var -= half.colwise().squaredNorm().transpose();
    }
    return mean.array() + root_beta * var.array().max(0.0).sqrt();
  };
  return [f, &domain, &cfg, t](int slot) {
    const auto s = static_cast<std::uint64_t>(slot);
    return maximize_acquisition(f, domain, cfg.search, derive_seed(cfg.seed, "search", t, s)).query;
  };
}

SlotProposer random_proposer(const Domain& domain, const EngineConfig& cfg, int t) {
  return [&domain, &cfg, t](int slot) {
    std::mt19937_64 gen(derive_seed(cfg.seed, "search", t, static_cast<std::uint64_t>(slot)));
    if (domain.kind() == DomainKind::discrete) {
      std::uniform_int_distribution<Eigen::Index> pick(0, domain.cardinality() - 1);
      const Eigen::Index idx = pick(gen);
      return Query{domain.point(idx), idx};
    }
    return Query{uniform_box(domain, 1, gen).col(0), std::nullopt};
  };
}

SlotProposer make_proposer(const History& history, const Domain& domain, const EngineConfig& cfg,
                           int t) {
  check_isolation(history, t);
  switch (cfg.algorithm) {
    case Algorithm::sto_bnts:
    case Algorithm::sto_bnts_linear:
    case Algorithm::deep_ensemble:
      return network_proposer(history, domain, cfg, t);
    case Algorithm::gp_ts:
      return gp_ts_proposer(history, domain, cfg, t);
    case Algorithm::gp_ucb:
      return gp_ucb_proposer(history, domain, cfg, t);
    case Algorithm::random_search:
      return random_proposer(domain, cfg, t);
  }
  throw std::logic_error("unknown algorithm");
}

}  // namespace

std::vector<Query> select_batch(const History& history, const Domain& domain,
                                const EngineConfig& cfg, int t) {
  const SlotProposer propose = make_proposer(history, domain, cfg, t);
  std::vector<Query> batch(static_cast<std::size_t>(cfg.batch_size));
  if (cfg.threads <= 1 || cfg.batch_size == 1) {
    for (int i = 0; i < cfg.batch_size; ++i) batch[static_cast<std::size_t>(i)] = propose(i);
    return batch;
  }
  for (int start = 0; start < cfg.batch_size; start += cfg.threads) {
    const int stop = std::min(cfg.batch_size, start + cfg.threads);
    std::vector<std::future<Query>> jobs;
    for (int i = start; i < stop; ++i) jobs.push_back(std::async(std::launch::async, propose, i));
    for (int i = start; i < stop; ++i) {
      batch[static_cast<std::size_t>(i)] = jobs[static_cast<std::size_t>(i - start)].get();
    }
  }
  return batch;
}

Query gp_ts_step(const History& history, const Domain& domain, const EngineConfig& cfg, int t,
                 int slot) {
  check_isolation(history, t);
  return gp_ts_proposer(history, domain, cfg, t)(slot);
}

Query gp_ucb_step(const History& history, const Domain& domain, const EngineConfig& cfg, int t,
                  int slot) {
  check_isolation(history, t);
  return gp_ucb_proposer(history, domain, cfg, t)(slot);
}

std::vector<Query> init_stage(const Domain& domain, const EngineConfig& cfg) {
  const int budget = cfg.init.budget;
  if (budget < 1) throw std::invalid_argument("init: budget must be >= 1");
  const bool discrete = domain.kind() == DomainKind::discrete;
  if (discrete && budget > domain.cardinality()) {
    throw std::invalid_argument("init: budget " + std::to_string(budget) +
                                " exceeds the domain size " + std::to_string(domain.cardinality()));
  }
  std::mt19937_64 gen(derive_seed(cfg.seed, "init"));
  std::vector<Query> queries;
  if (cfg.init.mode == InitMode::random) {
    if (discrete) {
      // partial Fisher-Yates: distinct points
      std::vector<Eigen::Index> idx(static_cast<std::size_t>(domain.cardinality()));
      std::iota(idx.begin(), idx.end(), 0);
      for (int k = 0; k < budget; ++k) {
        std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), idx.size() - 1);
        std::swap(idx[static_cast<std::size_t>(k)], idx[pick(gen)]);
        const Eigen::Index j = idx[static_cast<std::size_t>(k)];
        queries.push_back({domain.point(j), j});
      }
    } else {
      const Matrix pts = uniform_box(domain, budget, gen);
      for (int k = 0; k < budget; ++k) queries.push_back({pts.col(k), std::nullopt});
    }
    return queries;
  }

  const Matrix candidates = discrete ? domain.points() : uniform_box(domain, cfg.init.candidates, gen);
  const NetworkSpec spec = network_for(cfg, domain, 1.0);
  const ParamVector theta0 = init_params(spec, derive_seed(cfg.seed, "init-theta0"));
  const Matrix inputs = domain.normalize(candidates);
  const double cells = static_cast<double>(inputs.cols()) * static_cast<double>(spec.param_count());
  UncertaintySelection sel;
  if (cells <= 2e7) {
    sel = uncertainty_sampling(tangent_features(spec, theta0, inputs), cfg.noise_var,
                               static_cast<std::size_t>(budget));
  } else {
    sel = uncertainty_sampling_kernel(empirical_ntk(spec, theta0, inputs), cfg.noise_var,
                                      static_cast<std::size_t>(budget));
  }
  for (Eigen::Index j : sel.indices) {
    queries.push_back({candidates.col(j), discrete ? std::optional<Eigen::Index>(j) : std::nullopt});
  }
  return queries;
}

RegretSeries regret_metrics(const std::vector<double>& instantaneous) {
  RegretSeries out;
  double total = 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (double r : instantaneous) {
    total += r;
    best = std::min(best, r);
    out.cumulative.push_back(total);
    out.simple.push_back(best);
  }
  return out;
}

RegretSeries regret_metrics(const std::vector<TraceRow>& rows, double f_star) {
  std::vector<double> inst;
  inst.reserve(rows.size());
  for (const TraceRow& row : rows) {
    if (!row.f) {
      throw std::invalid_argument("regret: evaluation (t=" + std::to_string(row.t) +
                                  ", i=" + std::to_string(row.slot) + ") has no true value");
    }
    inst.push_back(f_star - *row.f);
  }
  return regret_metrics(inst);
}

Campaign::Campaign(Domain domain, EngineConfig cfg) : domain_(std::move(domain)), cfg_(std::move(cfg)) {
  cfg_.validate();
  if (cfg_.init.budget > domain_.cardinality() && domain_.kind() == DomainKind::discrete) {
    throw std::invalid_argument("init.budget exceeds the domain size");
  }
}

const PendingBatch& Campaign::pending() {
  if (finished()) throw std::logic_error("campaign is finished");
  if (!pending_) {
    const int t = next_iteration();
    PendingBatch batch;
    batch.iteration = t;
    batch.queries = t == 0 ? init_stage(domain_, cfg_) : select_batch(history_, domain_, cfg_, t);
    pending_ = std::move(batch);
  }
  return *pending_;
}

void Campaign::commit(const std::vector<double>& ys, const std::vector<std::optional<double>>& truths) {
  const PendingBatch& batch = pending();
  if (ys.size() != batch.queries.size()) {
    throw std::invalid_argument("commit: expected " + std::to_string(batch.queries.size()) +
                                " observations, got " + std::to_string(ys.size()));
  }
  if (!truths.empty() && truths.size() != ys.size()) {
    throw std::invalid_argument("commit: true-value count mismatch");
  }
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    if (!std::isfinite(ys[i])) {
      throw std::invalid_argument("commit: non-finite observation at " +
                                  describe_point(batch.queries[i].x));
    }
    Observation o;
    o.raw = batch.queries[i].x;
    o.input = domain_.normalize_point(o.raw);
    o.y = ys[i];
    o.iteration = batch.iteration;
    o.slot = static_cast<int>(i);
    o.domain_index = batch.queries[i].domain_index;
    obs.push_back(std::move(o));
  }
  if (batch.iteration > 0) {
    for (std::size_t i = 0; i < ys.size(); ++i) {
      trace_.push_back({batch.iteration, static_cast<int>(i), batch.queries[i].x, ys[i],
                        truths.empty() ? std::nullopt : truths[i]});
    }
  }
  history_.commit_batch(batch.iteration, std::move(obs));
  pending_.reset();
}

std::uint64_t Campaign::init_hash() const {
  std::uint64_t hash = fnv1a("");
  for (const Observation& o : history_.entries()) {
    if (o.iteration != 0) continue;
    for (Eigen::Index j = 0; j < o.raw.size(); ++j) hash = fnv1a(format_double(o.raw[j]) + ",", hash);
    hash = fnv1a(";", hash);
  }
  return hash;
}

RegretTrace Campaign::regret_trace(std::optional<double> f_star) const {
  RegretTrace out;
  out.rows = trace_;
  out.f_star = f_star;
  const bool known = std::all_of(trace_.begin(), trace_.end(), [](const TraceRow& r) { return r.f.has_value(); });
  if (f_star && known) out.regret = regret_metrics(trace_, *f_star);
  return out;
}

double injected_noise(const EngineConfig& cfg, int t, int slot) {
  std::mt19937_64 gen(derive_seed(cfg.seed, "noise", static_cast<std::uint64_t>(t),
                                  static_cast<std::uint64_t>(slot)));
  std::normal_distribution<double> normal(0.0, std::sqrt(cfg.noise_var));
  return normal(gen);
}

RegretTrace run_campaign(Objective& objective, Campaign& campaign, const RunHooks& hooks) {
  while (!campaign.finished()) {
    const PendingBatch& batch = campaign.pending();
    std::vector<double> ys;
    std::vector<std::optional<double>> truths;
    for (std::size_t i = 0; i < batch.queries.size(); ++i) {
      const Query& q = batch.queries[i];
      double y = 0.0;
      try {
        y = objective.observe(q.x, q.domain_index);
        truths.push_back(objective.truth(q.x, q.domain_index));
      } catch (const ObjectiveError&) {
        throw;
      } catch (const std::exception& e) {
        throw ObjectiveError("objective failed at " + describe_point(q.x) + ": " + e.what());
      }
      if (!std::isfinite(y)) {
        throw ObjectiveError("objective returned a non-finite value at " + describe_point(q.x));
      }
      if (objective.wants_injected_noise()) {
        y += injected_noise(campaign.config(), batch.iteration, static_cast<int>(i));
      }
      ys.push_back(y);
    }
    campaign.commit(ys, truths);
    if (hooks.after_commit) hooks.after_commit(campaign);
  }
  return campaign.regret_trace(objective.optimum());
}

RegretTrace run_campaign(Objective& objective, const Domain& domain, const EngineConfig& cfg) {
  Campaign campaign(domain, cfg);
  return run_campaign(objective, campaign);
}

}  // namespace stobnts
