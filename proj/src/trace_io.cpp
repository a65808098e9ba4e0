#include "stobnts/trace_io.hpp"

#include <fstream>
#include <limits>
#include <sstream>

#include "stobnts/number_format.hpp"

namespace stobnts {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::optional<double> optional_field(const std::string& text) {
  if (text.empty()) return std::nullopt;
  return parse_double(text);
}

}  // namespace

void write_trace(std::ostream& out, const RegretTrace& trace, int dim) {
  out << "t,i";
  for (int j = 0; j < dim; ++j) out << ",x" << j;
  out << ",y,f,regret_cum,regret_simple\n";
  const bool regret = trace.regret.cumulative.size() == trace.rows.size();
  for (std::size_t k = 0; k < trace.rows.size(); ++k) {
    const TraceRow& row = trace.rows[k];
    if (row.x.size() != dim) throw TraceError("trace: row dimension mismatch");
    out << row.t << ',' << row.slot;
    for (int j = 0; j < dim; ++j) out << ',' << format_double(row.x[j]);
    out << ',' << format_double(row.y) << ',';
    if (row.f) out << format_double(*row.f);
    out << ',';
    if (regret) out << format_double(trace.regret.cumulative[k]);
    out << ',';
    if (regret) out << format_double(trace.regret.simple[k]);
    out << '\n';
  }
}

std::string trace_csv(const RegretTrace& trace, int dim) {
  std::ostringstream out;
  write_trace(out, trace, dim);
  return out.str();
}

ParsedTrace parse_trace(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw TraceError("trace: empty file");
  const std::vector<std::string> header = split(line);
  const int dim = static_cast<int>(header.size()) - 6;
  if (dim < 1 || header[0] != "t" || header[1] != "i") throw TraceError("trace: bad header");
  for (int j = 0; j < dim; ++j) {
    if (header[static_cast<std::size_t>(2 + j)] != "x" + std::to_string(j)) {
      throw TraceError("trace: bad header column '" + header[static_cast<std::size_t>(2 + j)] + "'");
    }
  }
  const std::size_t base = static_cast<std::size_t>(2 + dim);
  if (header[base] != "y" || header[base + 1] != "f" || header[base + 2] != "regret_cum" ||
      header[base + 3] != "regret_simple") {
    throw TraceError("trace: bad header");
  }

  ParsedTrace parsed;
  parsed.dim = dim;
  bool any_regret = false;
  bool all_regret = true;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split(line);
    if (fields.size() != header.size()) {
      throw TraceError("trace: line " + std::to_string(lineno) + " has " +
                       std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(header.size()));
    }
    try {
      TraceRow row;
      row.t = std::stoi(fields[0]);
      row.slot = std::stoi(fields[1]);
      row.x.resize(dim);
      for (int j = 0; j < dim; ++j) row.x[j] = parse_double(fields[static_cast<std::size_t>(2 + j)]);
      row.y = parse_double(fields[base]);
      row.f = optional_field(fields[base + 1]);
      const auto cum = optional_field(fields[base + 2]);
      const auto simple = optional_field(fields[base + 3]);
      if (cum && simple) {
        any_regret = true;
        parsed.stored.cumulative.push_back(*cum);
        parsed.stored.simple.push_back(*simple);
      } else {
        all_regret = false;
      }
      parsed.rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      throw TraceError("trace: line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (any_regret && !all_regret) throw TraceError("trace: regret columns are only partly filled");
  return parsed;
}

ParsedTrace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TraceError("trace: cannot open '" + path.string() + "'");
  return parse_trace(in);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

nlohmann::json summary_json(const RunConfig& cfg, const Campaign& campaign, const RegretTrace& trace) {
  nlohmann::json doc;
  doc["run_id"] = cfg.run_id;
  doc["config"] = to_json(cfg);
  doc["config_digest"] = hex64(config_digest(campaign.config(), campaign.domain()));
  doc["init_hash"] = hex64(campaign.init_hash());
  doc["iterations"] = campaign.history().completed_through();
  doc["evaluations"] = trace.rows.size();
  doc["f_star"] = trace.f_star ? nlohmann::json(*trace.f_star) : nlohmann::json(nullptr);
  double best_y = -std::numeric_limits<double>::infinity();
  for (const TraceRow& r : trace.rows) best_y = std::max(best_y, r.y);
  doc["best_y"] = trace.rows.empty() ? nlohmann::json(nullptr) : nlohmann::json(best_y);
  if (!trace.regret.simple.empty()) {
    const double n = static_cast<double>(trace.regret.cumulative.size());
    doc["cumulative_regret"] = trace.regret.cumulative.back();
    doc["average_regret"] = trace.regret.cumulative.back() / n;
    doc["simple_regret"] = trace.regret.simple.back();
  } else {
    doc["cumulative_regret"] = nullptr;
    doc["average_regret"] = nullptr;
    doc["simple_regret"] = nullptr;
  }
  return doc;
}

}  // namespace stobnts
