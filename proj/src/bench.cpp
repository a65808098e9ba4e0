#include "stobnts/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "stobnts/number_format.hpp"
#include "stobnts/trace_io.hpp"

namespace stobnts {

using nlohmann::json;

namespace {

[[noreturn]] void suite_error(const std::string& message) { throw ConfigError("suite: " + message); }

}  // namespace

BenchSuite parse_bench_suite(const json& doc) {
  if (!doc.is_object()) suite_error("document must be an object");
  for (const auto& item : doc.items()) {
    const std::string& key = item.key();
    if (key != "base" && key != "algorithms" && key != "seeds" && key != "output_dir" && key != "jobs") {
      suite_error("unknown key '" + key + "'");
    }
  }
  BenchSuite suite;
  if (doc.contains("base")) {
    suite.base = doc["base"];
    if (!suite.base.is_object()) suite_error("'base' must be an object");
    if (suite.base.contains("output")) suite_error("'base.output' is not allowed; outputs go to output_dir");
    if (suite.base.contains("seed")) suite_error("'base.seed' is not allowed; use 'seeds'");
  }

  if (!doc.contains("algorithms") || !doc["algorithms"].is_array() || doc["algorithms"].empty()) {
    suite_error("'algorithms' must be a non-empty array");
  }
  for (const json& entry : doc["algorithms"]) {
    BenchAlgorithm alg;
    if (entry.is_string()) {
      alg.name = entry.get<std::string>();
    } else if (entry.is_object()) {
      for (const auto& item : entry.items()) {
        if (item.key() != "name" && item.key() != "overrides") {
          suite_error("unknown key 'algorithms[]." + item.key() + "'");
        }
      }
      if (!entry.contains("name") || !entry["name"].is_string()) suite_error("algorithm entry without a name");
      alg.name = entry["name"].get<std::string>();
      if (entry.contains("overrides")) {
        alg.overrides = entry["overrides"];
        if (!alg.overrides.is_object()) suite_error("'overrides' of '" + alg.name + "' must be an object");
      }
    } else {
      suite_error("algorithm entries must be names or objects");
    }
    if (alg.name.empty() || alg.name.find_first_of("/\\ ") != std::string::npos) {
      suite_error("algorithm name '" + alg.name + "' is not usable as a directory name");
    }
    for (const BenchAlgorithm& other : suite.algorithms) {
      if (other.name == alg.name) suite_error("duplicate algorithm name '" + alg.name + "'");
    }
    if (!alg.overrides.contains("algorithm")) alg.overrides["algorithm"] = alg.name;
    suite.algorithms.push_back(std::move(alg));
  }

  if (!doc.contains("seeds")) suite_error("'seeds' is required");
  const json& seeds = doc["seeds"];
  if (seeds.is_number_integer()) {
    const long n = seeds.get<long>();
    if (n < 1) suite_error("'seeds' count must be >= 1");
    for (long k = 0; k < n; ++k) suite.seeds.push_back(static_cast<std::uint64_t>(k));
  } else if (seeds.is_array() && !seeds.empty()) {
    for (const json& s : seeds) {
      if (!s.is_number_integer() || s.get<long long>() < 0) suite_error("seeds must be non-negative integers");
      suite.seeds.push_back(s.get<std::uint64_t>());
    }
  } else {
    suite_error("'seeds' must be a count or a non-empty array");
  }

  if (doc.contains("output_dir")) {
    if (!doc["output_dir"].is_string()) suite_error("'output_dir' must be a string");
    suite.output_dir = doc["output_dir"].get<std::string>();
  }
  if (doc.contains("jobs")) {
    if (!doc["jobs"].is_number_integer() || doc["jobs"].get<int>() < 1) suite_error("'jobs' must be >= 1");
    suite.jobs = doc["jobs"].get<int>();
  }

  // fail early on bad cell configs
  for (const BenchAlgorithm& alg : suite.algorithms) {
    const RunConfig cfg = bench_cell_config(suite, alg, suite.seeds.front());
    if (cfg.objective.kind != ObjectiveKind::synthetic_gp) {
      suite_error("benchmarks need a synthetic-gp objective with known optimum");
    }
  }
  return suite;
}

BenchSuite load_bench_suite(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) suite_error("cannot open '" + path.string() + "'");
  try {
    return parse_bench_suite(json::parse(in));
  } catch (const json::parse_error& e) {
    suite_error("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

RunConfig bench_cell_config(const BenchSuite& suite, const BenchAlgorithm& algorithm, std::uint64_t seed) {
  json doc = suite.base;
  doc.merge_patch(algorithm.overrides);
  doc["seed"] = seed;
  doc["run_id"] = algorithm.name + "-seed" + std::to_string(seed);
  try {
    return parse_run_config(doc);
  } catch (const ConfigError& e) {
    throw ConfigError("suite: algorithm '" + algorithm.name + "': " + e.what());
  }
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile: no values");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<AggregateRow> aggregate_simple_regret(const std::vector<BenchCellResult>& cells) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RegretTrace*>> groups;
  for (const BenchCellResult& cell : cells) {
    if (!cell.trace || cell.trace->regret.simple.empty()) continue;
    if (!groups.count(cell.algorithm)) order.push_back(cell.algorithm);
    groups[cell.algorithm].push_back(&*cell.trace);
  }
  std::vector<AggregateRow> rows;
  for (const std::string& name : order) {
    const auto& traces = groups[name];
    std::size_t len = traces.front()->regret.simple.size();
    for (const RegretTrace* tr : traces) len = std::min(len, tr->regret.simple.size());
    for (std::size_t k = 0; k < len; ++k) {
      std::vector<double> values;
      for (const RegretTrace* tr : traces) values.push_back(tr->regret.simple[k]);
      rows.push_back({name, static_cast<int>(k + 1), traces.front()->rows[k].t, quantile(values, 0.5),
                      quantile(values, 0.25), quantile(values, 0.75)});
    }
  }
  return rows;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::ostringstream out;
  out << "algorithm,evaluation,iteration,median,q25,q75\n";
  for (const AggregateRow& r : rows) {
    out << r.algorithm << ',' << r.evaluation << ',' << r.iteration << ',' << format_double(r.median) << ','
        << format_double(r.q25) << ',' << format_double(r.q75) << '\n';
  }
  return out.str();
}

BenchReport run_bench(const BenchSuite& suite, bool write_files,
                      const std::function<void(const std::string&)>& log) {
  namespace fs = std::filesystem;
  BenchReport report;
  for (const BenchAlgorithm& alg : suite.algorithms) {
    for (std::uint64_t seed : suite.seeds) report.cells.push_back({alg.name, seed, {}, 0, {}, {}, 0.0});
  }
  if (write_files) {
    for (const BenchAlgorithm& alg : suite.algorithms) fs::create_directories(fs::path(suite.output_dir) / alg.name);
  }

  std::mutex log_mutex;
  auto say = [&](const std::string& line) {
    if (!log) return;
    std::lock_guard<std::mutex> lock(log_mutex);
    log(line);
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t k = next.fetch_add(1);
      if (k >= report.cells.size()) return;
      BenchCellResult& cell = report.cells[k];
      const BenchAlgorithm& alg = suite.algorithms[k / suite.seeds.size()];
      const auto start = std::chrono::steady_clock::now();
      try {
        const RunConfig cfg = bench_cell_config(suite, alg, cell.seed);
        auto objective = build_synthetic_objective(cfg);
        Campaign campaign(objective->domain(), cfg.engine);
        RegretTrace trace = run_campaign(*objective, campaign);
        cell.init_hash = campaign.init_hash();
        if (write_files) {
          const fs::path path = fs::path(suite.output_dir) / alg.name / ("seed" + std::to_string(cell.seed) + ".csv");
          write_file_atomic(path, trace_csv(trace, campaign.domain().dim()));
          cell.trace_path = path.string();
        }
        cell.trace = std::move(trace);
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (cell.error.empty()) {
        say(alg.name + " seed " + std::to_string(cell.seed) + ": simple regret " +
            format_double(cell.trace->regret.simple.back()) + " (" + format_double(std::round(cell.seconds * 10) / 10) +
            " s)");
      } else {
        say(alg.name + " seed " + std::to_string(cell.seed) + ": FAILED: " + cell.error);
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(suite.jobs, static_cast<int>(report.cells.size())));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (std::thread& th : pool) th.join();

  for (const BenchCellResult& cell : report.cells) {
    if (!cell.error.empty()) {
      report.problems.push_back("cell " + cell.algorithm + "/seed" + std::to_string(cell.seed) + " failed: " + cell.error);
    }
  }
  for (std::uint64_t seed : suite.seeds) {
    std::optional<std::uint64_t> first;
    std::string first_name;
    for (const BenchCellResult& cell : report.cells) {
      if (cell.seed != seed || !cell.error.empty()) continue;
      if (!first) {
        first = cell.init_hash;
        first_name = cell.algorithm;
      } else if (*first != cell.init_hash) {
        report.problems.push_back("seed " + std::to_string(seed) + ": initial design of " + cell.algorithm +
                                  " differs from " + first_name);
      }
    }
  }
  report.aggregate = aggregate_simple_regret(report.cells);

  if (write_files) {
    const fs::path dir(suite.output_dir);
    write_file_atomic(dir / "aggregate.csv", aggregate_csv(report.aggregate));
    json cells = json::array();
    for (const BenchCellResult& cell : report.cells) {
      json c = {{"algorithm", cell.algorithm}, {"seed", cell.seed}, {"seconds", cell.seconds}};
      if (cell.error.empty()) {
        c["status"] = "ok";
        c["trace"] = cell.trace_path;
        c["init_hash"] = hex64(cell.init_hash);
        c["simple_regret"] = cell.trace->regret.simple.back();
        c["cumulative_regret"] = cell.trace->regret.cumulative.back();
      } else {
        c["status"] = "failed";
        c["error"] = cell.error;
      }
      cells.push_back(c);
    }
    const json doc = {{"cells", cells}, {"problems", report.problems}};
    write_file_atomic(dir / "report.json", doc.dump(2) + "\n");
  }
  return report;
}

}  // namespace stobnts
