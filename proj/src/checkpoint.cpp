#include "stobnts/checkpoint.hpp"

#include <fstream>

#include "stobnts/config.hpp"
#include "stobnts/seeds.hpp"

namespace stobnts {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "stobnts-checkpoint";
constexpr int kVersion = 1;

json vector_json(const Vector& v) {
  json arr = json::array();
  for (Eigen::Index j = 0; j < v.size(); ++j) arr.push_back(v[j]);
  return arr;
}

Vector json_vector(const json& arr) {
  Vector v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t j = 0; j < arr.size(); ++j) v[static_cast<Eigen::Index>(j)] = arr[j].get<double>();
  return v;
}

}  // namespace

json checkpoint_json(const Campaign& campaign) {
  json payload;
  payload["config_digest"] = hex64(config_digest(campaign.config(), campaign.domain()));
  payload["seed"] = campaign.config().seed;
  payload["next_iteration"] = campaign.next_iteration();
  json obs = json::array();
  std::size_t row = 0;
  for (const Observation& o : campaign.history().entries()) {
    json entry = {{"t", o.iteration}, {"i", o.slot}, {"x", vector_json(o.raw)}, {"y", o.y}};
    if (o.domain_index) entry["index"] = *o.domain_index;
    if (o.iteration > 0) {
      const TraceRow& tr = campaign.trace().at(row++);
      entry["f"] = tr.f ? json(*tr.f) : json(nullptr);
    }
    obs.push_back(entry);
  }
  payload["observations"] = obs;
  return {{"format", kFormat},
          {"version", kVersion},
          {"checksum", hex64(fnv1a(payload.dump()))},
          {"payload", payload}};
}

Campaign restore_campaign(const Domain& domain, const EngineConfig& cfg, const json& doc) {
  try {
    if (!doc.is_object() || doc.value("format", "") != kFormat) {
      throw CheckpointError("checkpoint: not a stobnts checkpoint");
    }
    if (doc.at("version").get<int>() != kVersion) {
      throw CheckpointError("checkpoint: unsupported version " + doc.at("version").dump());
    }
    const json& payload = doc.at("payload");
    if (doc.at("checksum").get<std::string>() != hex64(fnv1a(payload.dump()))) {
      throw CheckpointError("checkpoint: checksum mismatch (file is corrupt)");
    }
    if (payload.at("config_digest").get<std::string>() != hex64(config_digest(cfg, domain))) {
      throw CheckpointError("checkpoint: written for a different configuration or domain");
    }
    Campaign campaign(domain, cfg);
    std::vector<Observation> batch;
    int current = 0;
    auto flush = [&]() {
      if (!batch.empty()) CampaignState::history(campaign).commit_batch(current, std::move(batch));
      batch.clear();
    };
    for (const json& entry : payload.at("observations")) {
      Observation o;
      o.iteration = entry.at("t").get<int>();
      o.slot = entry.at("i").get<int>();
      o.raw = json_vector(entry.at("x"));
      o.input = domain.normalize_point(o.raw);
      o.y = entry.at("y").get<double>();
      if (entry.contains("index")) o.domain_index = entry.at("index").get<Eigen::Index>();
      if (o.iteration != current) {
        flush();
        current = o.iteration;
      }
      if (o.iteration > 0) {
        std::optional<double> f;
        if (!entry.at("f").is_null()) f = entry.at("f").get<double>();
        CampaignState::trace(campaign).push_back({o.iteration, o.slot, o.raw, o.y, f});
      }
      batch.push_back(std::move(o));
    }
    flush();
    if (campaign.next_iteration() != payload.at("next_iteration").get<int>()) {
      throw CheckpointError("checkpoint: iteration count is inconsistent");
    }
    return campaign;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed document: ") + e.what());
  } catch (const std::logic_error& e) {
    throw CheckpointError(std::string("checkpoint: inconsistent history: ") + e.what());
  }
}

void write_checkpoint(const std::filesystem::path& path, const Campaign& campaign) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint: cannot write '" + tmp.string() + "'");
    out << checkpoint_json(campaign).dump() << '\n';
    if (!out) throw CheckpointError("checkpoint: write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Campaign load_checkpoint(const std::filesystem::path& path, const Domain& domain,
                         const EngineConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("checkpoint: cannot open '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw CheckpointError("checkpoint: '" + path.string() + "' is not valid JSON (corrupt?)");
  }
  return restore_campaign(domain, cfg, doc);
}

}  // namespace stobnts
