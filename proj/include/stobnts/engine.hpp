#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stobnts/domain.hpp"
#include "stobnts/history.hpp"
#include "stobnts/objective.hpp"
#include "stobnts/sto_train.hpp"

namespace stobnts {

enum class Algorithm { sto_bnts, sto_bnts_linear, deep_ensemble, gp_ts, gp_ucb, random_search };

Algorithm parse_algorithm(const std::string& name);
std::string to_string(Algorithm algorithm);

enum class BetaMode { theoretical_t1, theoretical_t2, practical_one };

BetaMode parse_beta_mode(const std::string& name);
std::string to_string(BetaMode mode);

/// t1: 2 ln(pi^2 t^2 |X| / (3 delta))
/// t2: 2 ln(2 pi^2 t^2 |X| / (3 delta))
/// practical: 1
double beta_schedule(int t, double domain_card, double delta, BetaMode mode);

enum class InitMode { random, uncertainty };

InitMode parse_init_mode(const std::string& name);
std::string to_string(InitMode mode);

struct InitConfig {
  InitMode mode = InitMode::random;
  int budget = 5;
  /// Candidate pool drawn from a box domain for uncertainty sampling.
  int candidates = 1000;
};

struct SearchConfig {
  int probes = 10000;
  int restarts = 100;
  int max_iters = 50;
  /// Relative finite-difference step for box refinement.
  double fd_step = 1e-6;
};

enum class GpSampler { automatic, exact, rff };

GpSampler parse_gp_sampler(const std::string& name);
std::string to_string(GpSampler sampler);

struct GpConfig {
  double lengthscale = 0.1;  // SE lengthscale on unit-box coordinates
  GpSampler sampler = GpSampler::automatic;
  int rff_features = 1000;
};

struct EngineConfig {
  Algorithm algorithm = Algorithm::sto_bnts;
  int batch_size = 1;
  int horizon = 100;
  double delta = 0.1;
  BetaMode beta_mode = BetaMode::practical_one;
  InitConfig init;
  /// input_dim and output_scale are filled in by the engine.
  NetworkSpec network;
  double noise_var = 0.01;
  TrainConfig train;
  SearchConfig search;
  GpConfig gp;
  std::uint64_t seed = 0;
  int threads = 1;

  int iterations() const { return horizon / batch_size; }
  void validate() const;
};

/// |X| used by the beta schedule: the grid size for discrete domains and
/// horizon^(d/2) (the size of a 1/sqrt(T) grid) for boxes.
double effective_cardinality(const Domain& domain, int horizon);

/// Acquisition values at raw points (one per column).
using BatchFunction = std::function<Vector(const Matrix&)>;

struct Query {
  Vector x;
  std::optional<Eigen::Index> domain_index;
};

struct MaximizerResult {
  Query query;
  double value = 0.0;
  double best_probe = 0.0;
};

/// Discrete: exact argmax, lowest index on ties. Box: uniform probes, then
/// projected L-BFGS with finite-difference gradients from the best probes.
MaximizerResult maximize_acquisition(const BatchFunction& f, const Domain& domain,
                                     const SearchConfig& search, std::uint64_t seed);

/// Network spec actually used at iteration t (input dim and beta filled in).
NetworkSpec network_for(const EngineConfig& cfg, const Domain& domain, double beta);

/// Batch for iteration t >= 1 from observations of iterations <= t - 1.
std::vector<Query> select_batch(const History& history, const Domain& domain,
                                const EngineConfig& cfg, int t);

Query gp_ts_step(const History& history, const Domain& domain, const EngineConfig& cfg, int t,
                 int slot);
Query gp_ucb_step(const History& history, const Domain& domain, const EngineConfig& cfg, int t,
                  int slot);

/// Initial design, recorded as iteration 0.
std::vector<Query> init_stage(const Domain& domain, const EngineConfig& cfg);

struct TraceRow {
  int t = 0;
  int slot = 0;
  Vector x;
  double y = 0.0;
  std::optional<double> f;
};

struct RegretSeries {
  std::vector<double> cumulative;
  std::vector<double> simple;
};

RegretSeries regret_metrics(const std::vector<double>& instantaneous);
/// Throws when any row lacks a true value.
RegretSeries regret_metrics(const std::vector<TraceRow>& rows, double f_star);

struct RegretTrace {
  std::vector<TraceRow> rows;
  std::optional<double> f_star;
  RegretSeries regret;  // empty without ground truth
};

struct PendingBatch {
  int iteration = 0;
  std::vector<Query> queries;
};

/// Ask/tell driver: pending() yields the next batch, commit() records it.
class Campaign {
 public:
  Campaign(Domain domain, EngineConfig cfg);

  const Domain& domain() const { return domain_; }
  const EngineConfig& config() const { return cfg_; }
  const History& history() const { return history_; }
  const std::vector<TraceRow>& trace() const { return trace_; }

  bool finished() const { return history_.completed_through() >= cfg_.iterations(); }
  int next_iteration() const { return history_.completed_through() + 1; }

  const PendingBatch& pending();

  /// Records the observations of the pending batch, in slot order.
  void commit(const std::vector<double>& ys, const std::vector<std::optional<double>>& truths = {});

  /// FNV-1a over the initial design's coordinates.
  std::uint64_t init_hash() const;

  RegretTrace regret_trace(std::optional<double> f_star) const;

 private:
  friend class CampaignState;

  Domain domain_;
  EngineConfig cfg_;
  History history_;
  std::vector<TraceRow> trace_;
  std::optional<PendingBatch> pending_;
};

struct RunHooks {
  std::function<void(const Campaign&)> after_commit;
};

/// Drives a campaign to completion against an in-process objective. When
/// the objective asks for it, N(0, noise_var) is added from the
/// noise(t, i) stream.
RegretTrace run_campaign(Objective& objective, Campaign& campaign, const RunHooks& hooks = {});
RegretTrace run_campaign(Objective& objective, const Domain& domain, const EngineConfig& cfg);

/// Observation noise for (t, slot), deterministic per master seed.
double injected_noise(const EngineConfig& cfg, int t, int slot);

}  // namespace stobnts
