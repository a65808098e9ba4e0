// stobnts: run | bench | serve | replay

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "stobnts/ask_tell.hpp"
#include "stobnts/bench.hpp"
#include "stobnts/checkpoint.hpp"
#include "stobnts/config.hpp"
#include "stobnts/number_format.hpp"
#include "stobnts/trace_io.hpp"

namespace fs = std::filesystem;
using namespace stobnts;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitPartial = 3;

struct OutputPaths {
  fs::path trace;
  fs::path summary;
  fs::path checkpoint;
};

OutputPaths output_paths(const RunConfig& cfg, bool need_checkpoint) {
  OutputPaths p;
  p.trace = cfg.output.trace.empty() ? cfg.run_id + ".trace.csv" : cfg.output.trace;
  p.summary = cfg.output.summary.empty() ? cfg.run_id + ".summary.json" : cfg.output.summary;
  if (!cfg.output.checkpoint.empty()) {
    p.checkpoint = cfg.output.checkpoint;
  } else if (need_checkpoint) {
    p.checkpoint = cfg.run_id + ".checkpoint.json";
  }
  return p;
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void write_results(const RunConfig& cfg, const Campaign& campaign, const RegretTrace& trace,
                   const OutputPaths& paths) {
  ensure_parent(paths.trace);
  ensure_parent(paths.summary);
  write_file_atomic(paths.trace, trace_csv(trace, campaign.domain().dim()));
  write_file_atomic(paths.summary, summary_json(cfg, campaign, trace).dump(2) + "\n");
}

Campaign open_campaign(const Domain& domain, const RunConfig& cfg, const OutputPaths& paths, bool resume,
                       bool quiet) {
  if (resume) {
    if (paths.checkpoint.empty()) throw ConfigError("config: --resume needs 'output.checkpoint'");
    if (fs::exists(paths.checkpoint)) {
      Campaign c = load_checkpoint(paths.checkpoint, domain, cfg.engine);
      if (!quiet) {
        std::cerr << "resuming " << cfg.run_id << " at iteration " << c.next_iteration() << " from "
                  << paths.checkpoint.string() << "\n";
      }
      return c;
    }
    if (!quiet) std::cerr << "no checkpoint at " << paths.checkpoint.string() << ", starting fresh\n";
  }
  return Campaign(domain, cfg.engine);
}

std::function<void(const Campaign&)> progress_hook(const OutputPaths& paths, bool quiet) {
  return [paths, quiet](const Campaign& c) {
    if (!paths.checkpoint.empty()) {
      ensure_parent(paths.checkpoint);
      write_checkpoint(paths.checkpoint, c);
    }
    if (quiet) return;
    const int t = c.history().completed_through();
    double best = -std::numeric_limits<double>::infinity();
    for (const Observation& o : c.history().entries()) best = std::max(best, o.y);
    std::cerr << "iteration " << t << "/" << c.config().iterations() << "  best y " << format_double(best)
              << "\n";
  };
}

void print_final(const RegretTrace& trace) {
  if (trace.regret.simple.empty()) {
    std::cout << "evaluations " << trace.rows.size() << "\n";
    return;
  }
  const double n = static_cast<double>(trace.rows.size());
  std::cout << "evaluations " << trace.rows.size() << "  simple regret " << format_double(trace.regret.simple.back())
            << "  average regret " << format_double(trace.regret.cumulative.back() / n) << "\n";
}

int cmd_run(const std::string& config_path, bool resume, bool quiet) {
  const RunConfig cfg = load_run_config(config_path);
  const Domain domain = build_domain(cfg);
  const OutputPaths paths = output_paths(cfg, false);
  Campaign campaign = open_campaign(domain, cfg, paths, resume, quiet);

  RegretTrace trace;
  if (cfg.objective.kind == ObjectiveKind::synthetic_gp) {
    auto objective = build_synthetic_objective(cfg);
    trace = run_campaign(*objective, campaign, {progress_hook(paths, quiet)});
  } else {
    if (cfg.objective.command.empty()) {
      throw ConfigError("config: 'objective.command' is required to run an external objective");
    }
    ProcessChannel channel(cfg.objective.command);
    ServeOptions opts;
    opts.run_id = cfg.run_id;
    opts.timeout = std::chrono::milliseconds(static_cast<long long>(cfg.objective.timeout * 1000.0));
    opts.after_commit = progress_hook(paths, quiet);
    serve_campaign(campaign, channel, opts);
    trace = campaign.regret_trace(std::nullopt);
  }
  write_results(cfg, campaign, trace, paths);
  if (!quiet) print_final(trace);
  return 0;
}

int cmd_serve(const std::string& config_path, const std::string& transport, const std::string& ask_file,
              const std::string& tell_file, bool resume, std::optional<double> timeout) {
  const RunConfig cfg = load_run_config(config_path);
  const Domain domain = build_domain(cfg);
  const OutputPaths paths = output_paths(cfg, true);
  Campaign campaign = open_campaign(domain, cfg, paths, resume, false);

  std::unique_ptr<SyntheticGpObjective> synthetic = build_synthetic_objective(cfg);
  ServeOptions opts;
  opts.run_id = cfg.run_id;
  opts.timeout = std::chrono::milliseconds(static_cast<long long>(timeout.value_or(cfg.objective.timeout) * 1000.0));
  opts.after_commit = progress_hook(paths, false);
  if (synthetic) {
    opts.truth = [&synthetic](const Query& q) { return synthetic->truth(q.x, q.domain_index); };
  }

  std::unique_ptr<LineChannel> channel;
  if (transport == "stdio") {
    channel = std::make_unique<FdChannel>(0, 1);
  } else {
    if (ask_file.empty() || tell_file.empty()) {
      throw ConfigError("serve: the files transport needs --ask-file and --tell-file");
    }
    channel = std::make_unique<FileChannel>(ask_file, tell_file);
  }
  serve_campaign(campaign, *channel, opts);
  const RegretTrace trace = campaign.regret_trace(synthetic ? synthetic->optimum() : std::nullopt);
  write_results(cfg, campaign, trace, paths);
  return 0;
}

int cmd_bench(const std::string& suite_path, std::optional<int> jobs, const std::string& output_dir) {
  BenchSuite suite = load_bench_suite(suite_path);
  if (jobs) suite.jobs = *jobs;
  if (!output_dir.empty()) suite.output_dir = output_dir;
  const BenchReport report = run_bench(suite, true, [](const std::string& line) { std::cerr << line << "\n"; });

  std::cout << "algorithm,evaluations,median_simple_regret,q25,q75\n";
  for (const BenchAlgorithm& alg : suite.algorithms) {
    const AggregateRow* last = nullptr;
    for (const AggregateRow& row : report.aggregate) {
      if (row.algorithm == alg.name) last = &row;
    }
    if (last) {
      std::cout << alg.name << ',' << last->evaluation << ',' << format_double(last->median) << ','
                << format_double(last->q25) << ',' << format_double(last->q75) << "\n";
    }
  }
  std::cerr << "wrote " << (fs::path(suite.output_dir) / "aggregate.csv").string() << "\n";
  if (!report.ok()) {
    std::cerr << report.problems.size() << " problem(s):\n";
    for (const std::string& p : report.problems) std::cerr << "  " << p << "\n";
    return kExitPartial;
  }
  return 0;
}

int cmd_replay(const std::string& trace_path, std::optional<double> f_star, const std::string& summary_path,
               const std::string& output_path) {
  const ParsedTrace parsed = read_trace(trace_path);
  if (!f_star && !summary_path.empty()) {
    std::ifstream in(summary_path);
    if (!in) throw TraceError("replay: cannot open '" + summary_path + "'");
    const nlohmann::json summary = nlohmann::json::parse(in);
    if (summary.contains("f_star") && summary["f_star"].is_number()) f_star = summary["f_star"].get<double>();
  }
  if (!f_star) throw TraceError("replay: the optimum is unknown; pass --f-star or a --summary that records it");

  RegretTrace trace;
  trace.rows = parsed.rows;
  trace.f_star = f_star;
  trace.regret = regret_metrics(parsed.rows, *f_star);

  int status = 0;
  if (!parsed.stored.cumulative.empty()) {
    for (std::size_t k = 0; k < parsed.rows.size(); ++k) {
      if (parsed.stored.cumulative[k] != trace.regret.cumulative[k] ||
          parsed.stored.simple[k] != trace.regret.simple[k]) {
        std::cerr << "replay: stored regret differs from the recomputed value at row " << k + 1 << " (t="
                  << parsed.rows[k].t << ", i=" << parsed.rows[k].slot << ")\n";
        status = kExitFailure;
        break;
      }
    }
  }
  const std::string csv = trace_csv(trace, parsed.dim);
  if (output_path.empty() || output_path == "-") {
    std::cout << csv;
  } else {
    write_file_atomic(output_path, csv);
  }
  const double n = static_cast<double>(trace.rows.size());
  if (!trace.rows.empty()) {
    std::cerr << "evaluations " << trace.rows.size() << "  cumulative regret "
              << format_double(trace.regret.cumulative.back()) << "  average regret "
              << format_double(trace.regret.cumulative.back() / n) << "  simple regret "
              << format_double(trace.regret.simple.back()) << "\n";
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGPIPE, SIG_IGN);
  CLI::App app{"Batch neural-tangent Thompson sampling"};
  app.require_subcommand(1);

  std::string config_path;
  bool resume = false;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run a campaign against the configured objective");
  run->add_option("-c,--config", config_path, "Run configuration (JSON)")->required();
  run->add_flag("--resume", resume, "Continue from output.checkpoint if it exists");
  run->add_flag("-q,--quiet", quiet, "No progress output");

  std::string suite_path;
  std::optional<int> jobs;
  std::string output_dir;
  auto* bench = app.add_subcommand("bench", "Run an algorithms x seeds benchmark suite");
  bench->add_option("-s,--suite", suite_path, "Suite description (JSON)")->required();
  bench->add_option("-j,--jobs", jobs, "Cells run in parallel")->check(CLI::PositiveNumber);
  bench->add_option("-o,--output-dir", output_dir, "Overrides the suite's output_dir");

  std::string transport = "stdio";
  std::string ask_file;
  std::string tell_file;
  std::optional<double> timeout;
  auto* serve = app.add_subcommand("serve", "Ask/tell service: emit queries, wait for observations");
  serve->add_option("-c,--config", config_path, "Run configuration (JSON)")->required();
  serve->add_option("-t,--transport", transport, "stdio or files")->check(CLI::IsMember({"stdio", "files"}));
  serve->add_option("--ask-file", ask_file, "Ask records are appended here (files transport)");
  serve->add_option("--tell-file", tell_file, "Tell records are read from here (files transport)");
  serve->add_flag("--resume", resume, "Continue from the checkpoint if it exists");
  serve->add_option("--timeout", timeout, "Seconds to wait for each tell")->check(CLI::PositiveNumber);

  std::string trace_path;
  std::optional<double> f_star;
  std::string summary_path;
  std::string output_path;
  auto* replay = app.add_subcommand("replay", "Recompute regret columns from a trace");
  replay->add_option("--trace", trace_path, "Trace file")->required();
  replay->add_option("--f-star", f_star, "Optimal value");
  replay->add_option("--summary", summary_path, "Summary file holding f_star");
  replay->add_option("-o,--output", output_path, "Write the recomputed trace here (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, resume, quiet);
    if (bench->parsed()) return cmd_bench(suite_path, jobs, output_dir);
    if (serve->parsed()) return cmd_serve(config_path, transport, ask_file, tell_file, resume, timeout);
    if (replay->parsed()) return cmd_replay(trace_path, f_star, summary_path, output_path);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
