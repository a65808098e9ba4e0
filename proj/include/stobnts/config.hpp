#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "stobnts/domain.hpp"
#include "stobnts/engine.hpp"
#include "stobnts/objective.hpp"

namespace stobnts {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ObjectiveKind { synthetic_gp, external };

struct ObjectiveConfig {
  ObjectiveKind kind = ObjectiveKind::synthetic_gp;
  // synthetic-gp
  Vector lower = Vector::Zero(1);
  Vector upper = Vector::Ones(1);
  int points = 1000;  // per dimension
  double lengthscale = 0.1;
  std::optional<std::uint64_t> seed;  // default: derived from the master seed
  // external; `run` needs a command, `serve` ignores it
  std::string command;
  double timeout = 60.0;  // seconds per reply
};

enum class DomainSource { from_objective, box, grid, points };

struct DomainConfig {
  DomainSource source = DomainSource::from_objective;
  Vector lower;
  Vector upper;
  Matrix points;  // one point per column
  Eigen::Index max_points = 1000000;
};

struct OutputConfig {
  std::string trace;
  std::string summary;
  std::string checkpoint;
};

struct RunConfig {
  std::string run_id = "run";
  EngineConfig engine;
  DomainConfig domain;
  ObjectiveConfig objective;
  OutputConfig output;
};

/// Parses a run configuration. Unknown keys and wrongly typed values throw
/// ConfigError naming the dotted key path.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

/// Fully resolved configuration, every default spelled out.
nlohmann::json to_json(const RunConfig& cfg);
nlohmann::json engine_to_json(const EngineConfig& cfg);

Domain build_domain(const RunConfig& cfg);

/// In-process objective for synthetic configs; null for external ones.
std::unique_ptr<SyntheticGpObjective> build_synthetic_objective(const RunConfig& cfg);

/// FNV-1a over the resolved engine configuration and the domain.
std::uint64_t config_digest(const EngineConfig& cfg, const Domain& domain);

std::string hex64(std::uint64_t value);

}  // namespace stobnts
