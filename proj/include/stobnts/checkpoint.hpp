#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "stobnts/engine.hpp"

namespace stobnts {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Campaign state as a versioned, checksummed document:
///   {"format": "stobnts-checkpoint", "version": 1,
///    "checksum": hex FNV-1a of payload.dump(), "payload": {...}}
/// The payload holds the config digest, master seed, next iteration and
/// every committed observation. Generator state is not stored: every
/// random stream is a pure function of (master seed, t, slot).
nlohmann::json checkpoint_json(const Campaign& campaign);

/// Rebuilds a campaign; throws CheckpointError on a bad checksum, a
/// version or format mismatch, or a config/domain digest mismatch.
Campaign restore_campaign(const Domain& domain, const EngineConfig& cfg, const nlohmann::json& doc);

/// Atomic write (temp file + rename).
void write_checkpoint(const std::filesystem::path& path, const Campaign& campaign);
Campaign load_checkpoint(const std::filesystem::path& path, const Domain& domain,
                         const EngineConfig& cfg);

/// Grants checkpoint code access to campaign internals.
class CampaignState {
 public:
  static History& history(Campaign& c) { return c.history_; }
  static std::vector<TraceRow>& trace(Campaign& c) { return c.trace_; }
};

}  // namespace stobnts
