#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stobnts/config.hpp"
#include "stobnts/engine.hpp"

namespace stobnts {

class TraceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Comma-separated, one row per main-loop evaluation:
///   t,i,x0,...,x{d-1},y,f,regret_cum,regret_simple
/// f and the regret columns are empty when the true value is unknown.
/// Numbers use the shortest round-trip decimal form.
void write_trace(std::ostream& out, const RegretTrace& trace, int dim);
std::string trace_csv(const RegretTrace& trace, int dim);

struct ParsedTrace {
  int dim = 0;
  std::vector<TraceRow> rows;
  /// Regret columns as stored; empty when the file has none.
  RegretSeries stored;
};

ParsedTrace parse_trace(std::istream& in);
ParsedTrace read_trace(const std::filesystem::path& path);

/// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

/// Run summary: resolved config, init hash, f*, final regret figures.
nlohmann::json summary_json(const RunConfig& cfg, const Campaign& campaign, const RegretTrace& trace);

}  // namespace stobnts
