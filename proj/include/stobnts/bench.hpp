#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stobnts/config.hpp"
#include "stobnts/engine.hpp"

namespace stobnts {

struct BenchAlgorithm {
  std::string name;
  nlohmann::json overrides = nlohmann::json::object();  // merge patch over the base config
};

/// {"base": {...}, "algorithms": [...], "seeds": [...] | n, "output_dir": "...", "jobs": k}
/// An algorithm entry is either a name or {"name": ..., "overrides": {...}};
/// without an "algorithm" override the name itself selects the algorithm.
struct BenchSuite {
  nlohmann::json base = nlohmann::json::object();
  std::vector<BenchAlgorithm> algorithms;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "bench-out";
  int jobs = 1;
};

BenchSuite parse_bench_suite(const nlohmann::json& doc);
BenchSuite load_bench_suite(const std::filesystem::path& path);

/// Run config of one (algorithm, seed) cell.
RunConfig bench_cell_config(const BenchSuite& suite, const BenchAlgorithm& algorithm, std::uint64_t seed);

struct BenchCellResult {
  std::string algorithm;
  std::uint64_t seed = 0;
  std::optional<RegretTrace> trace;
  std::uint64_t init_hash = 0;
  std::string trace_path;
  std::string error;  // empty on success
  double seconds = 0.0;
};

struct AggregateRow {
  std::string algorithm;
  int evaluation = 0;  // 1-based
  int iteration = 0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

struct BenchReport {
  std::vector<BenchCellResult> cells;  // algorithm-major, seeds in suite order
  std::vector<AggregateRow> aggregate;
  /// Failed cells and seeds whose initial designs differ across algorithms.
  std::vector<std::string> problems;

  bool ok() const { return problems.empty(); }
};

/// Linear interpolation between order statistics (q in [0, 1]).
double quantile(std::vector<double> values, double q);

/// Per-evaluation median and quartiles of simple regret over seeds.
std::vector<AggregateRow> aggregate_simple_regret(const std::vector<BenchCellResult>& cells);

/// Runs every cell, writing <output_dir>/<algorithm>/seed<k>.csv,
/// <output_dir>/aggregate.csv and <output_dir>/report.json. When
/// `write_files` is false nothing touches the disk.
BenchReport run_bench(const BenchSuite& suite, bool write_files = true,
                      const std::function<void(const std::string&)>& log = {});

std::string aggregate_csv(const std::vector<AggregateRow>& rows);

}  // namespace stobnts
