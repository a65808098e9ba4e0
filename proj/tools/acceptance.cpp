// stobnts_acceptance: runs the acceptance criteria and prints one verdict per line.

#include <sys/resource.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "oracles.hpp"
#include "stobnts/ask_tell.hpp"
#include "stobnts/bench.hpp"
#include "stobnts/checkpoint.hpp"
#include "stobnts/config.hpp"
#include "stobnts/gp.hpp"
#include "stobnts/number_format.hpp"
#include "stobnts/sto_train.hpp"
#include "stobnts/tangent_kernel.hpp"
#include "stobnts/trace_io.hpp"

namespace fs = std::filesystem;
using namespace stobnts;
using nlohmann::json;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double cpu_seconds() {
  rusage u{};
  ::getrusage(RUSAGE_SELF, &u);
  const auto secs = [](const timeval& tv) { return static_cast<double>(tv.tv_sec) + tv.tv_usec * 1e-6; };
  return secs(u.ru_utime) + secs(u.ru_stime);
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

NetworkSpec spec(int L, int m, int d, Activation a = Activation::relu, double beta = 1.0) {
  NetworkSpec s;
  s.depth = L;
  s.width = m;
  s.input_dim = d;
  s.activation = a;
  s.output_scale = beta;
  return s;
}

void moments(const Matrix& draws, Vector& mean, Vector& var) {
  const double n = static_cast<double>(draws.cols());
  mean = draws.rowwise().mean();
  var = ((draws.colwise() - mean).array().square().rowwise().sum() / (n - 1)).matrix();
}

// ---- criteria 1 and 10: synthetic regret study -------------------------------

struct StudyOptions {
  int seeds = 10;
  int jobs = 1;
  std::string output_dir;
};

struct Study {
  BenchReport report;
  double cpu = 0.0;
  double wall = 0.0;
};

Study run_study(const StudyOptions& opts) {
  BenchSuite suite = parse_bench_suite(json{
      {"base", {{"objective", {{"type", "synthetic-gp"}}}, {"horizon", 100}, {"batch_size", 1}}},
      {"algorithms",
       {"sto-bnts", "deep-ensemble", "random-search",
        {{"name", "sto-bnts-b4"}, {"overrides", {{"algorithm", "sto-bnts"}, {"batch_size", 4}}}}}},
      {"seeds", opts.seeds},
      {"output_dir", opts.output_dir},
      {"jobs", opts.jobs}});
  Study study;
  const double cpu0 = cpu_seconds();
  const auto wall0 = std::chrono::steady_clock::now();
  study.report = run_bench(suite, !opts.output_dir.empty(), [](const std::string& line) { std::cerr << line << "\n"; });
  study.cpu = cpu_seconds() - cpu0;
  study.wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return study;
}

// Per-seed values of `pick(trace)` for one algorithm.
std::vector<double> per_seed(const Study& study, const std::string& algorithm,
                             const std::function<double(const RegretTrace&)>& pick) {
  std::vector<double> out;
  for (const BenchCellResult& cell : study.report.cells) {
    if (cell.algorithm == algorithm && cell.trace) out.push_back(pick(*cell.trace));
  }
  return out;
}

double simple_at(const RegretTrace& tr, std::size_t evaluations) { return tr.regret.simple.at(evaluations - 1); }

Verdict criterion_1(const Study& study) {
  if (!study.report.ok()) {
    std::string all;
    for (const std::string& p : study.report.problems) all += p + "; ";
    return {false, "benchmark problems: " + all};
  }
  const auto final_simple = [](const RegretTrace& tr) { return tr.regret.simple.back(); };
  const double bnts = oracle::median(per_seed(study, "sto-bnts", final_simple));
  const double de = oracle::median(per_seed(study, "deep-ensemble", final_simple));
  const double rs = oracle::median(per_seed(study, "random-search", final_simple));
  // iteration 25: evaluation 25 with B=1, evaluation 100 with B=4
  const double b1 = oracle::median(per_seed(study, "sto-bnts", [](const RegretTrace& tr) { return simple_at(tr, 25); }));
  const double b4 = oracle::median(per_seed(study, "sto-bnts-b4", [](const RegretTrace& tr) { return simple_at(tr, 100); }));
  const bool a = bnts < de, b = bnts < rs, c = b4 <= b1, time_ok = study.cpu <= 1800.0;
  std::ostringstream d;
  d << "median S_100: sto-bnts " << fmt(bnts) << " < deep-ensemble " << fmt(de) << " [" << (a ? "ok" : "FAIL")
    << "], < random-search " << fmt(rs) << " [" << (b ? "ok" : "FAIL") << "]; iteration 25: B=4 " << fmt(b4)
    << " <= B=1 " << fmt(b1) << " [" << (c ? "ok" : "FAIL") << "]; cpu " << fmt(study.cpu / 60.0) << " min (wall "
    << fmt(study.wall / 60.0) << " min) [" << (time_ok ? "ok" : "FAIL") << "]";
  return {a && b && c && time_ok, d.str()};
}

Verdict criterion_10(const Study& study) {
  if (!study.report.ok()) return {false, "benchmark incomplete"};
  const auto avg = [](std::size_t t) {
    return [t](const RegretTrace& tr) { return tr.regret.cumulative.at(t - 1) / static_cast<double>(t); };
  };
  const double r25 = oracle::median(per_seed(study, "sto-bnts", avg(25)));
  const double r100 = oracle::median(per_seed(study, "sto-bnts", avg(100)));
  return {r100 < r25, "sto-bnts median R_t/t: t=25 " + fmt(r25) + ", t=100 " + fmt(r100)};
}

// ---- criteria 2 to 8: estimator properties ------------------------------------

Verdict criterion_2() {
  const double cpu0 = cpu_seconds();
  std::mt19937_64 gen(2);
  const NetworkSpec s = spec(1, 32, 2);
  const TrainingData data{oracle::random_inputs(2, 5, gen), oracle::random_matrix(5, 1, gen).col(0)};
  const Matrix tests = oracle::random_inputs(2, 10, gen);
  TrainConfig cfg;
  cfg.noise_var = 0.1;
  const std::uint64_t prime = 4242;
  const int n = 2000;
  Matrix draws(10, n);
  for (int k = 0; k < n; ++k) {
    draws.col(k) = draw_acquisition_linear(data, s, cfg, prime, 10000 + static_cast<std::uint64_t>(k)).evaluate(tests);
  }
  Vector mean, var;
  moments(draws, mean, var);
  Matrix all(2, 15);
  all << data.inputs, tests;
  const Matrix joint = empirical_ntk(s, init_params(s, prime), all).values;
  Vector mu;
  Matrix cov;
  oracle::gp_dense(joint.topLeftCorner(5, 5), joint.topRightCorner(5, 10), joint.bottomRightCorner(10, 10),
                   data.targets, 0.1, mu, cov);
  double worst_mean = 0.0, worst_var = 0.0;
  for (int j = 0; j < 10; ++j) {
    worst_mean = std::max(worst_mean, std::abs(mean[j] - mu[j]) / (std::sqrt(cov(j, j)) / std::sqrt(double(n))));
    worst_var = std::max(worst_var, std::abs(var[j] - cov(j, j)) / (cov(j, j) * std::sqrt(2.0 / (n - 1))));
  }
  const double cpu = cpu_seconds() - cpu0;
  const bool pass = worst_mean <= 3.0 && worst_var <= 3.0 && cpu <= 300.0;
  return {pass, "2000 linear draws vs GP posterior at 10 points: worst mean " + fmt(worst_mean) +
                    " SE, worst variance " + fmt(worst_var) + " SE (limit 3); cpu " + fmt(cpu) + " s"};
}

Verdict criterion_3() {
  std::mt19937_64 gen(3);
  double worst = 0.0, worst_oracle = 0.0;
  int converged = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const int n = std::uniform_int_distribution<int>(1, 20)(gen);
    const int p = std::uniform_int_distribution<int>(n, 500)(gen);
    const double s2 = std::uniform_real_distribution<double>(0.05, 0.5)(gen);
    const Matrix phi = oracle::random_matrix(n, p, gen) / std::sqrt(static_cast<double>(p));
    const Vector y = oracle::random_matrix(n, 1, gen).col(0);
    const Vector theta0 = oracle::random_matrix(p, 1, gen).col(0);
    TrainConfig cfg;
    cfg.noise_var = s2;
    cfg.perturb_targets = false;
    cfg.method = Trainer::gradient_descent;
    const TrainResult gd = train_gd(DenseLinearModel(phi), y, theta0, cfg);
    const ParamVector exact = ridge_closed_form(phi, y, theta0, s2);
    // independent primal normal-equation solve
    const Matrix a = phi.transpose() * phi + s2 * Matrix::Identity(p, p);
    const Vector primal = a.ldlt().solve(phi.transpose() * y + s2 * theta0);
    converged += gd.converged;
    worst = std::max(worst, (gd.theta - exact).norm() / exact.norm());
    worst_oracle = std::max(worst_oracle, (exact - primal).norm() / primal.norm());
  }
  return {worst <= 1e-4 && worst_oracle <= 1e-8 && converged == 50,
          "50 instances: worst relative parameter error vs closed form " + fmt(worst) + " (limit 1e-4), " +
              std::to_string(converged) + "/50 converged; closed form vs primal solve " + fmt(worst_oracle)};
}

Verdict criterion_4() {
  std::mt19937_64 gen(4);
  const Matrix a = oracle::random_matrix(30, 30, gen);
  const Matrix joint = a * a.transpose() + 1e-3 * Matrix::Identity(30, 30);
  const Vector y = oracle::random_matrix(20, 1, gen).col(0);
  const PosteriorMoments p1 = gp_posterior(joint, 20, y, 0.05, 1.0);
  const PosteriorMoments p3 = gp_posterior(joint, 20, y, 0.05, 3.0);
  const double mean_diff = (p1.mean - p3.mean).cwiseAbs().maxCoeff();
  const double ratio_dev = ((p3.covariance.cwiseQuotient(p1.covariance).array() - 9.0).abs() / 9.0).maxCoeff();

  // Monte Carlo on linear draws: beta=3 vs beta=1
  const TrainingData data{oracle::random_inputs(2, 5, gen), oracle::random_matrix(5, 1, gen).col(0)};
  const Matrix tests = oracle::random_inputs(2, 6, gen);
  const int n = 2000;
  Vector mean[2], var[2];
  const double betas[2] = {1.0, 3.0};
  for (int b = 0; b < 2; ++b) {
    TrainConfig cfg;
    cfg.noise_var = 0.1;
    cfg.beta = betas[b];
    Matrix draws(6, n);
    for (int k = 0; k < n; ++k) {
      draws.col(k) = draw_acquisition_linear(data, spec(1, 32, 2, Activation::relu, betas[b]), cfg, 31,
                                             500000 * (b + 1) + static_cast<std::uint64_t>(k))
                         .evaluate(tests);
    }
    moments(draws, mean[b], var[b]);
  }
  double worst_mean = 0.0, worst_ratio = 0.0;
  for (int j = 0; j < 6; ++j) {
    worst_mean = std::max(worst_mean, std::abs(mean[1][j] - mean[0][j]) / std::sqrt((var[0][j] + var[1][j]) / n));
    worst_ratio = std::max(worst_ratio, std::abs(std::log(var[1][j] / var[0][j]) - std::log(9.0)) /
                                            std::sqrt(4.0 / (n - 1)));
  }
  const bool pass = mean_diff <= 1e-8 && ratio_dev <= 1e-8 && worst_mean <= 3.0 && worst_ratio <= 3.0;
  return {pass, "posterior: mean diff " + fmt(mean_diff) + ", covariance ratio deviation " + fmt(ratio_dev) +
                    " (limit 1e-8); Monte Carlo: worst mean " + fmt(worst_mean) + " SE, worst log variance ratio " +
                    fmt(worst_ratio) + " SE (limit 3)"};
}

Verdict criterion_5() {
  std::mt19937_64 gen(5);
  double worst = 0.0;
  int steps = 0, agree = 0;
  for (int inst = 0; inst < 20; ++inst) {
    const int n = std::uniform_int_distribution<int>(5, 50)(gen);
    const int p = std::uniform_int_distribution<int>(3, 200)(gen);
    const double s2 = std::uniform_real_distribution<double>(0.01, 1.0)(gen);
    const FeatureMatrix f{oracle::random_matrix(n, p, gen), {}, {}};
    const Matrix k = f.values * f.values.transpose();
    const std::size_t budget = static_cast<std::size_t>(std::min(n, 10));
    const UncertaintySelection sel = uncertainty_sampling(f, s2, budget);
    std::vector<Eigen::Index> picked;
    for (std::size_t step = 0; step < budget; ++step) {
      Matrix sigma = s2 * Matrix::Identity(p, p);
      for (Eigen::Index j : picked) sigma += f.values.row(j).transpose() * f.values.row(j);
      const Matrix sigma_inv = sigma.inverse();
      Vector primal(n), dual(n);
      const auto r = static_cast<Eigen::Index>(picked.size());
      Matrix kt(r, r), kc(r, n);
      for (Eigen::Index a = 0; a < r; ++a) {
        for (Eigen::Index b = 0; b < r; ++b) kt(a, b) = k(picked[a], picked[b]);
        kc.row(a) = k.row(picked[a]);
      }
      const Matrix kt_inv = r ? Matrix((kt + s2 * Matrix::Identity(r, r)).inverse()) : Matrix();
      for (int j = 0; j < n; ++j) {
        primal[j] = s2 * f.values.row(j).dot(sigma_inv * f.values.row(j).transpose());
        dual[j] = k(j, j) - (r ? kc.col(j).dot(kt_inv * kc.col(j)) : 0.0);
      }
      worst = std::max(worst, oracle::max_rel(primal, dual));
      Eigen::Index best = -1;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (std::find(picked.begin(), picked.end(), j) != picked.end()) continue;
        if (best < 0 || dual[j] > dual[best]) best = j;
      }
      ++steps;
      agree += sel.indices[step] == best;
      picked.push_back(sel.indices[step]);
    }
  }
  return {worst <= 1e-8 && agree == steps, "20 instances: worst primal/dual deviation " + fmt(worst) +
                                               " (limit 1e-8); argmax agreement " + std::to_string(agree) + "/" +
                                               std::to_string(steps) + " steps"};
}

Verdict criterion_6() {
  std::mt19937_64 gen(6);
  std::uniform_int_distribution<int> depth(1, 3), width(1, 8), dim(1, 4), act(0, 1);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const NetworkSpec s = spec(depth(gen), width(gen), dim(gen), act(gen) ? Activation::erf : Activation::relu,
                               std::uniform_real_distribution<double>(0.5, 2.0)(gen));
    const ParamVector theta = init_params(s, gen());
    const Vector x = oracle::random_inputs(s.input_dim, 1, gen).col(0);
    const Vector g = param_gradient(s, theta, x);
    const Vector fd = oracle::fd_gradient(s, theta, x);
    worst = std::max(worst, (g - fd).cwiseAbs().maxCoeff() / std::max(1e-8, fd.cwiseAbs().maxCoeff()));
  }
  return {worst <= 1e-4, "100 networks: worst relative error " + fmt(worst) + " (limit 1e-4)"};
}

Verdict criterion_7() {
  const double cpu0 = cpu_seconds();
  bool pass = true;
  std::ostringstream d;
  for (Activation a : {Activation::relu, Activation::erf}) {
    // robust invariant: median across-seed spread of the empirical kernel shrinks with width
    std::mt19937_64 gen(77);
    const Matrix xs = oracle::random_inputs(2, 8, gen);
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t k = 0; k < 8; ++k) seeds.push_back(7000 + k);
    double spread[3];
    const int widths[3] = {16, 64, 256};
    for (int w = 0; w < 3; ++w) {
      const Matrix sd = empirical_ntk_seed_spread(spec(2, widths[w], 2, a), xs, seeds);
      spread[w] = oracle::median(std::vector<double>(sd.data(), sd.data() + sd.size()));
    }
    const bool spread_ok = spread[1] < spread[0] && spread[2] < spread[1];
    // max-entry settling of 8-seed reference kernels, over independent replications
    const int reps = 40;
    int holds = 0;
    for (int rep = 0; rep < reps; ++rep) {
      std::mt19937_64 g(1000 + static_cast<std::uint64_t>(rep));
      const Matrix x = oracle::random_inputs(2, 8, g);
      std::vector<std::uint64_t> s8;
      for (std::uint64_t k = 0; k < 8; ++k) s8.push_back(90000 + 100 * static_cast<std::uint64_t>(rep) + k);
      const NetworkSpec s = spec(2, 16, 2, a);
      const ReferenceKernelOptions opts{8, 1};
      const Matrix r16 = reference_kernel(s, 16, x, s8, opts).values;
      const Matrix r64 = reference_kernel(s, 64, x, s8, opts).values;
      const Matrix r256 = reference_kernel(s, 256, x, s8, opts).values;
      holds += (r256 - r64).cwiseAbs().maxCoeff() < (r64 - r16).cwiseAbs().maxCoeff();
    }
    const bool trend_ok = holds > reps / 2;
    pass = pass && spread_ok && trend_ok;
    d << to_string(a) << ": median seed spread " << fmt(spread[0]) << " > " << fmt(spread[1]) << " > "
      << fmt(spread[2]) << " [" << (spread_ok ? "ok" : "FAIL") << "], settling trend " << holds << "/" << reps
      << " [" << (trend_ok ? "ok" : "FAIL") << "]; ";
  }
  const double cpu = cpu_seconds() - cpu0;
  pass = pass && cpu <= 600.0;
  d << "cpu " << fmt(cpu) << " s";
  return {pass, d.str()};
}

Verdict criterion_8() {
  std::mt19937_64 gen(8);
  double worst = 0.0;
  for (int n : {1, 10, 50, 100, 150, 200}) {
    const int m = 25;
    const Matrix x = oracle::random_matrix(3, n + m, gen);
    Matrix joint(n + m, n + m);
    for (int i = 0; i < n + m; ++i)
      for (int j = 0; j < n + m; ++j) joint(i, j) = oracle::se(x.col(i), x.col(j), 0.9);
    const Vector y = oracle::random_matrix(n, 1, gen).col(0);
    Vector mean;
    Matrix cov;
    oracle::gp_dense(joint.topLeftCorner(n, n), joint.topRightCorner(n, m), joint.bottomRightCorner(m, m), y, 0.1,
                     mean, cov);
    const PosteriorMoments pm = gp_posterior(joint, n, y, 0.1);
    worst = std::max({worst, oracle::max_rel(pm.mean, mean), oracle::max_rel(pm.covariance, cov)});
  }
  return {worst <= 1e-8, "n in {1..200}: worst relative deviation " + fmt(worst) + " (limit 1e-8)"};
}

// ---- criterion 9: determinism and resume ----------------------------------------

struct Interrupted {};

RunConfig determinism_config(int threads) {
  return parse_run_config(json{{"run_id", "det"},
                               {"algorithm", "sto-bnts"},
                               {"batch_size", 3},
                               {"horizon", 24},
                               {"seed", 9},
                               {"threads", threads},
                               {"network", {{"depth", 2}, {"width", 32}}},
                               {"objective", {{"type", "synthetic-gp"}, {"points", 300}}}});
}

// Answers every ask with the synthetic value plus the engine's own noise draw.
class SyntheticResponder {
 public:
  SyntheticResponder(const RunConfig& cfg) : cfg_(cfg), objective_(build_synthetic_objective(cfg)) {}

  void run(LineChannel& ch) {
    try {
      while (auto line = ch.receive(std::chrono::milliseconds(30000))) {
        const json msg = json::parse(*line);
        if (msg["type"] != "ask") return;
        const Vector x = Eigen::Map<const Vector>(msg["x"].get<std::vector<double>>().data(),
                                                  static_cast<Eigen::Index>(msg["x"].size()));
        std::optional<Eigen::Index> index;
        if (msg.contains("index")) index = msg["index"].get<Eigen::Index>();
        const int t = msg["t"], i = msg["i"];
        const double y = objective_->observe(x, index) + injected_noise(cfg_.engine, t, i);
        ch.send(tell_message(msg["run"], t, i, y).dump());
      }
    } catch (const ProtocolError&) {
      // engine side closed
    }
  }

 private:
  RunConfig cfg_;
  std::unique_ptr<SyntheticGpObjective> objective_;
};

// Serves `campaign` over a pipe pair to a responder thread.
RegretTrace serve_over_pipes(const RunConfig& cfg, Campaign& campaign, const std::function<void(const Campaign&)>& hook) {
  int to_engine[2], to_peer[2];
  if (::pipe(to_engine) != 0 || ::pipe(to_peer) != 0) throw std::runtime_error("pipe failed");
  FdChannel engine(to_engine[0], to_peer[1]);
  FdChannel peer(to_peer[0], to_engine[1]);
  SyntheticResponder responder(cfg);
  std::thread th([&] { responder.run(peer); });
  auto objective = build_synthetic_objective(cfg);
  ServeOptions opts;
  opts.run_id = cfg.run_id;
  opts.after_commit = hook;
  opts.truth = [&objective](const Query& q) { return objective->truth(q.x, q.domain_index); };
  const auto cleanup = [&] {
    ::close(to_peer[1]);
    th.join();
    ::close(to_engine[0]);
    ::close(to_engine[1]);
    ::close(to_peer[0]);
  };
  try {
    serve_campaign(campaign, engine, opts);
  } catch (...) {
    cleanup();
    throw;
  }
  cleanup();
  return campaign.regret_trace(objective->optimum());
}

Verdict criterion_9() {
  const RunConfig cfg = determinism_config(1);
  const Domain domain = build_domain(cfg);
  const auto run_once = [&](const RunConfig& c) {
    auto obj = build_synthetic_objective(c);
    Campaign campaign(domain, c.engine);
    const RegretTrace tr = run_campaign(*obj, campaign);
    return std::make_pair(trace_csv(tr, 1), summary_json(c, campaign, tr).dump());
  };
  const auto [csv, summary] = run_once(cfg);
  const auto again = run_once(cfg);
  const auto threaded = run_once(determinism_config(3));
  const bool rerun_ok = again.first == csv && again.second == summary;
  const bool threads_ok = threaded.first == csv;

  // in-process interruption after iteration 4, resumed from the serialized checkpoint
  std::string saved;
  const auto crash_after = [&saved](int iteration) {
    return [&saved, iteration](const Campaign& c) {
      saved = checkpoint_json(c).dump();
      if (c.history().completed_through() == iteration) throw Interrupted{};
    };
  };
  bool resume_ok = false;
  {
    auto obj = build_synthetic_objective(cfg);
    Campaign part(domain, cfg.engine);
    try {
      run_campaign(*obj, part, {crash_after(4)});
    } catch (const Interrupted&) {
    }
    Campaign resumed = restore_campaign(domain, cfg.engine, json::parse(saved));
    resume_ok = resumed.next_iteration() == 5 && trace_csv(run_campaign(*obj, resumed), 1) == csv;
  }

  // same through the ask/tell transport: uninterrupted, then killed after iteration 3 and resumed
  Campaign served(domain, cfg.engine);
  const bool serve_ok = trace_csv(serve_over_pipes(cfg, served, {}), 1) == csv;
  bool serve_resume_ok = false;
  {
    Campaign part(domain, cfg.engine);
    try {
      serve_over_pipes(cfg, part, crash_after(3));
    } catch (const Interrupted&) {
    }
    Campaign resumed = restore_campaign(domain, cfg.engine, json::parse(saved));
    serve_resume_ok = resumed.next_iteration() == 4 && trace_csv(serve_over_pipes(cfg, resumed, {}), 1) == csv;
  }
  const auto mark = [](bool ok) { return ok ? "ok" : "FAIL"; };
  std::ostringstream d;
  d << "rerun byte-identical [" << mark(rerun_ok) << "], 3 threads identical [" << mark(threads_ok)
    << "], checkpoint resume [" << mark(resume_ok) << "], ask/tell equals in-process [" << mark(serve_ok)
    << "], ask/tell resume [" << mark(serve_resume_ok) << "]";
  return {rerun_ok && threads_ok && resume_ok && serve_ok && serve_resume_ok, d.str()};
}

std::set<int> parse_selection(const std::string& text) {
  std::set<int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const int k = std::stoi(item);
    if (k < 1 || k > 10) throw std::invalid_argument("criteria are numbered 1 to 10");
    out.insert(k);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string only = "1,2,3,4,5,6,7,8,9,10";
  StudyOptions study_opts;
  study_opts.jobs = std::max(1u, std::thread::hardware_concurrency());
  study_opts.output_dir = "acceptance-out";
  app.add_option("--only", only, "Comma-separated criteria to run");
  app.add_option("--seeds", study_opts.seeds, "Seeds in the regret study")->check(CLI::PositiveNumber);
  app.add_option("-j,--jobs", study_opts.jobs, "Benchmark cells run in parallel")->check(CLI::PositiveNumber);
  app.add_option("-o,--output-dir", study_opts.output_dir, "Regret-study traces (empty: keep in memory)");
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  try {
    selected = parse_selection(only);
  } catch (const std::exception& e) {
    std::cerr << "error: --only: " << e.what() << "\n";
    return 2;
  }

  std::optional<Study> study;
  if (selected.count(1) || selected.count(10)) study = run_study(study_opts);

  const std::map<int, std::function<Verdict()>> criteria{
      {1, [&] { return criterion_1(*study); }},
      {2, criterion_2},
      {3, criterion_3},
      {4, criterion_4},
      {5, criterion_5},
      {6, criterion_6},
      {7, criterion_7},
      {8, criterion_8},
      {9, criterion_9},
      {10, [&] { return criterion_10(*study); }},
  };
  int failed = 0;
  for (int k : selected) {
    Verdict v;
    try {
      v = criteria.at(k)();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("criterion %2d  %s  %s\n", k, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
