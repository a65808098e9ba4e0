#include "stobnts/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "stobnts/number_format.hpp"
#include "stobnts/seeds.hpp"

namespace stobnts {

using nlohmann::json;

namespace {

// Reads one JSON object, remembering which keys were consumed so that the
// rest can be reported as unknown.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError("config: '" + label() + "' must be an object");
  }

  bool has(const std::string& key) {
    if (!obj_.contains(key)) return false;
    seen_.insert(key);
    return true;
  }

  Section sub(const std::string& key) {
    seen_.insert(key);
    return Section(obj_.at(key), join(key));
  }

  void read(const std::string& key, int& out) {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_number_integer()) fail(key, "an integer");
    const auto value = v.get<long long>();
    if (value < std::numeric_limits<int>::min() || value > std::numeric_limits<int>::max()) {
      fail(key, "an integer in range");
    }
    out = static_cast<int>(value);
  }

  void read(const std::string& key, long& out) {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_number_integer()) fail(key, "an integer");
    out = v.get<long>();
  }

  void read(const std::string& key, std::uint64_t& out) {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (v.is_number_unsigned()) {
      out = v.get<std::uint64_t>();
    } else if (v.is_number_integer() && v.get<long long>() >= 0) {
      out = static_cast<std::uint64_t>(v.get<long long>());
    } else {
      fail(key, "a non-negative integer");
    }
  }

  void read(const std::string& key, double& out) {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_number()) fail(key, "a number");
    out = v.get<double>();
  }

  void read(const std::string& key, bool& out) {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_boolean()) fail(key, "true or false");
    out = v.get<bool>();
  }

  void read(const std::string& key, std::string& out) {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_string()) fail(key, "a string");
    out = v.get<std::string>();
  }

  void read(const std::string& key, Vector& out) {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_array() || v.empty()) fail(key, "a non-empty array of numbers");
    out.resize(static_cast<Eigen::Index>(v.size()));
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (!v[j].is_number()) fail(key, "a non-empty array of numbers");
      out[static_cast<Eigen::Index>(j)] = v[j].get<double>();
    }
  }

  template <typename Enum, typename Parse>
  void read_enum(const std::string& key, Enum& out, Parse parse) {
    std::string name;
    read(key, name);
    if (!obj_.contains(key)) return;
    try {
      out = parse(name);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("config: '" + join(key) + "': " + e.what());
    }
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  [[noreturn]] void fail(const std::string& key, const std::string& expected) const {
    throw ConfigError("config: '" + join(key) + "' must be " + expected);
  }

  void finish() const {
    for (const auto& item : obj_.items()) {
      if (!seen_.count(item.key())) {
        throw ConfigError("config: unknown key '" + join(item.key()) + "'");
      }
    }
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string label() const { return path_.empty() ? "<root>" : path_; }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

json vector_json(const Vector& v) {
  json arr = json::array();
  for (Eigen::Index j = 0; j < v.size(); ++j) arr.push_back(v[j]);
  return arr;
}

ObjectiveKind parse_objective_kind(const std::string& name) {
  if (name == "synthetic-gp") return ObjectiveKind::synthetic_gp;
  if (name == "external") return ObjectiveKind::external;
  throw std::invalid_argument("unknown objective type '" + name + "'");
}

DomainSource parse_domain_source(const std::string& name) {
  if (name == "box") return DomainSource::box;
  if (name == "grid") return DomainSource::grid;
  if (name == "points") return DomainSource::points;
  throw std::invalid_argument("unknown domain type '" + name + "'");
}

std::string to_string(DomainSource source) {
  switch (source) {
    case DomainSource::box:
      return "box";
    case DomainSource::grid:
      return "grid";
    case DomainSource::points:
      return "points";
    case DomainSource::from_objective:
      break;
  }
  return "objective";
}

void check(bool ok, const std::string& message) {
  if (!ok) throw ConfigError("config: " + message);
}

}  // namespace

RunConfig parse_run_config(const json& doc) {
  RunConfig cfg;
  Section root(doc, "");
  root.read("run_id", cfg.run_id);
  check(!cfg.run_id.empty(), "'run_id' must not be empty");

  // objective first: it decides the network defaults
  if (root.has("objective")) {
    Section obj = root.sub("objective");
    obj.read_enum("type", cfg.objective.kind, parse_objective_kind);
    if (cfg.objective.kind == ObjectiveKind::synthetic_gp) {
      obj.read("lower", cfg.objective.lower);
      obj.read("upper", cfg.objective.upper);
      obj.read("points", cfg.objective.points);
      obj.read("lengthscale", cfg.objective.lengthscale);
      if (obj.has("seed")) {
        std::uint64_t seed = 0;
        obj.read("seed", seed);
        cfg.objective.seed = seed;
      }
      check(cfg.objective.lower.size() == cfg.objective.upper.size(),
            "'objective.lower' and 'objective.upper' differ in length");
      check(cfg.objective.points >= 2, "'objective.points' must be >= 2");
      check(cfg.objective.lengthscale > 0.0, "'objective.lengthscale' must be > 0");
    } else {
      obj.read("command", cfg.objective.command);
      obj.read("timeout", cfg.objective.timeout);
      check(cfg.objective.timeout > 0.0, "'objective.timeout' must be > 0");
    }
    obj.finish();
  }

  EngineConfig& e = cfg.engine;
  if (cfg.objective.kind == ObjectiveKind::synthetic_gp) {
    e.network.depth = 8;
    e.network.width = 64;
    e.network.activation = Activation::erf;
  } else {
    e.network.depth = 2;
    e.network.width = 256;
    e.network.activation = Activation::relu;
  }

  root.read_enum("algorithm", e.algorithm, parse_algorithm);
  root.read("batch_size", e.batch_size);
  root.read("horizon", e.horizon);
  root.read("seed", e.seed);
  root.read("delta", e.delta);
  root.read_enum("beta_mode", e.beta_mode, parse_beta_mode);
  root.read("noise_var", e.noise_var);
  root.read("threads", e.threads);

  if (root.has("init")) {
    Section s = root.sub("init");
    s.read_enum("mode", e.init.mode, parse_init_mode);
    s.read("budget", e.init.budget);
    s.read("candidates", e.init.candidates);
    s.finish();
  }
  if (root.has("network")) {
    Section s = root.sub("network");
    s.read("depth", e.network.depth);
    s.read("width", e.network.width);
    s.read_enum("activation", e.network.activation, parse_activation);
    s.finish();
  }
  if (root.has("train")) {
    Section s = root.sub("train");
    s.read_enum("method", e.train.method, parse_trainer);
    s.read("step_size", e.train.step_size);
    s.read("line_search", e.train.line_search);
    if (s.has("max_steps") && !s.raw("max_steps").is_null()) {
      long steps = 0;
      s.read("max_steps", steps);
      e.train.max_steps = steps;
    }
    s.read("stall_rtol", e.train.stall_rtol);
    if (s.has("grad_tol") && !s.raw("grad_tol").is_null()) {
      double tol = 0.0;
      s.read("grad_tol", tol);
      e.train.grad_tol = tol;
    }
    s.read("perturb_targets", e.train.perturb_targets);
    s.finish();
  }
  if (root.has("search")) {
    Section s = root.sub("search");
    s.read("probes", e.search.probes);
    s.read("restarts", e.search.restarts);
    s.read("max_iters", e.search.max_iters);
    s.read("fd_step", e.search.fd_step);
    s.finish();
  }
  if (root.has("gp")) {
    Section s = root.sub("gp");
    s.read("lengthscale", e.gp.lengthscale);
    s.read_enum("sampler", e.gp.sampler, parse_gp_sampler);
    s.read("rff_features", e.gp.rff_features);
    s.finish();
  }

  if (root.has("domain")) {
    check(cfg.objective.kind == ObjectiveKind::external,
          "'domain' must be omitted for synthetic-gp objectives (the grid comes from 'objective')");
    Section s = root.sub("domain");
    std::string type;
    s.read("type", type);
    check(!type.empty(), "'domain.type' is required");
    s.read_enum("type", cfg.domain.source, parse_domain_source);
    if (cfg.domain.source == DomainSource::points) {
      const json& pts = s.raw("points");
      check(pts.is_array() && !pts.empty(), "'domain.points' must be a non-empty array of points");
      const std::size_t d = pts[0].is_array() ? pts[0].size() : 0;
      check(d > 0, "'domain.points' entries must be non-empty arrays");
      cfg.domain.points.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(pts.size()));
      for (std::size_t k = 0; k < pts.size(); ++k) {
        check(pts[k].is_array() && pts[k].size() == d, "'domain.points' entries differ in length");
        for (std::size_t j = 0; j < d; ++j) {
          check(pts[k][j].is_number(), "'domain.points' entries must be numbers");
          cfg.domain.points(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) =
              pts[k][j].get<double>();
        }
      }
    } else {
      s.read("lower", cfg.domain.lower);
      s.read("upper", cfg.domain.upper);
      check(cfg.domain.lower.size() > 0 && cfg.domain.lower.size() == cfg.domain.upper.size(),
            "'domain.lower' and 'domain.upper' are required and must have equal length");
      if (cfg.domain.source == DomainSource::grid) {
        long cap = static_cast<long>(cfg.domain.max_points);
        s.read("max_points", cap);
        cfg.domain.max_points = cap;
      }
    }
    s.finish();
  } else {
    check(cfg.objective.kind == ObjectiveKind::synthetic_gp,
          "'domain' is required for external objectives");
  }

  if (root.has("output")) {
    Section s = root.sub("output");
    s.read("trace", cfg.output.trace);
    s.read("summary", cfg.output.summary);
    s.read("checkpoint", cfg.output.checkpoint);
    s.finish();
  }
  root.finish();

  try {
    e.validate();
  } catch (const std::invalid_argument& err) {
    throw ConfigError(std::string("config: ") + err.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(doc);
}

json engine_to_json(const EngineConfig& e) {
  json doc;
  doc["algorithm"] = to_string(e.algorithm);
  doc["batch_size"] = e.batch_size;
  doc["horizon"] = e.horizon;
  doc["seed"] = e.seed;
  doc["delta"] = e.delta;
  doc["beta_mode"] = to_string(e.beta_mode);
  doc["noise_var"] = e.noise_var;
  doc["threads"] = e.threads;
  doc["init"] = {{"mode", to_string(e.init.mode)},
                 {"budget", e.init.budget},
                 {"candidates", e.init.candidates}};
  doc["network"] = {{"depth", e.network.depth},
                    {"width", e.network.width},
                    {"activation", to_string(e.network.activation)}};
  doc["train"] = {{"method", to_string(e.train.method)},
                  {"step_size", e.train.step_size},
                  {"line_search", e.train.line_search},
                  {"max_steps", e.train.max_steps ? json(*e.train.max_steps) : json(nullptr)},
                  {"stall_rtol", e.train.stall_rtol},
                  {"grad_tol", e.train.grad_tol ? json(*e.train.grad_tol) : json(nullptr)},
                  {"perturb_targets", e.train.perturb_targets}};
  doc["search"] = {{"probes", e.search.probes},
                   {"restarts", e.search.restarts},
                   {"max_iters", e.search.max_iters},
                   {"fd_step", e.search.fd_step}};
  doc["gp"] = {{"lengthscale", e.gp.lengthscale},
               {"sampler", to_string(e.gp.sampler)},
               {"rff_features", e.gp.rff_features}};
  return doc;
}

json to_json(const RunConfig& cfg) {
  json doc = engine_to_json(cfg.engine);
  doc["run_id"] = cfg.run_id;
  if (cfg.objective.kind == ObjectiveKind::synthetic_gp) {
    json obj = {{"type", "synthetic-gp"},
                {"lower", vector_json(cfg.objective.lower)},
                {"upper", vector_json(cfg.objective.upper)},
                {"points", cfg.objective.points},
                {"lengthscale", cfg.objective.lengthscale}};
    if (cfg.objective.seed) obj["seed"] = *cfg.objective.seed;
    doc["objective"] = obj;
  } else {
    doc["objective"] = {{"type", "external"},
                        {"command", cfg.objective.command},
                        {"timeout", cfg.objective.timeout}};
    json dom = {{"type", to_string(cfg.domain.source)}};
    if (cfg.domain.source == DomainSource::points) {
      json pts = json::array();
      for (Eigen::Index k = 0; k < cfg.domain.points.cols(); ++k) {
        pts.push_back(vector_json(cfg.domain.points.col(k)));
      }
      dom["points"] = pts;
    } else {
      dom["lower"] = vector_json(cfg.domain.lower);
      dom["upper"] = vector_json(cfg.domain.upper);
      if (cfg.domain.source == DomainSource::grid) dom["max_points"] = cfg.domain.max_points;
    }
    doc["domain"] = dom;
  }
  json out = json::object();
  if (!cfg.output.trace.empty()) out["trace"] = cfg.output.trace;
  if (!cfg.output.summary.empty()) out["summary"] = cfg.output.summary;
  if (!cfg.output.checkpoint.empty()) out["checkpoint"] = cfg.output.checkpoint;
  doc["output"] = out;
  return doc;
}

Domain build_domain(const RunConfig& cfg) {
  try {
    switch (cfg.domain.source) {
      case DomainSource::from_objective: {
        const ObjectiveConfig& o = cfg.objective;
        const double total = std::pow(static_cast<double>(o.points),
                                      static_cast<double>(o.lower.size()));
        if (total > 20000.0) {
          throw ConfigError("config: synthetic grid of " + format_double(total) +
                            " points is too large (limit 20000)");
        }
        return uniform_grid(o.lower, o.upper, o.points);
      }
      case DomainSource::box:
        return Domain::box(cfg.domain.lower, cfg.domain.upper);
      case DomainSource::grid:
        return discretize_domain(cfg.domain.lower, cfg.domain.upper, cfg.engine.horizon,
                                 cfg.domain.max_points);
      case DomainSource::points:
        return Domain::discrete(cfg.domain.points);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  throw ConfigError("config: unknown domain");
}

std::unique_ptr<SyntheticGpObjective> build_synthetic_objective(const RunConfig& cfg) {
  if (cfg.objective.kind != ObjectiveKind::synthetic_gp) return nullptr;
  const std::uint64_t seed =
      cfg.objective.seed ? *cfg.objective.seed : derive_seed(cfg.engine.seed, "objective");
  return std::make_unique<SyntheticGpObjective>(build_domain(cfg), cfg.objective.lengthscale, seed);
}

std::uint64_t config_digest(const EngineConfig& cfg, const Domain& domain) {
  json engine = engine_to_json(cfg);
  engine.erase("threads");  // results do not depend on it
  std::uint64_t hash = fnv1a(engine.dump());
  hash = fnv1a(domain.kind() == DomainKind::discrete ? "discrete" : "box", hash);
  auto add = [&hash](const Vector& v) {
    for (Eigen::Index j = 0; j < v.size(); ++j) hash = fnv1a(format_double(v[j]) + ",", hash);
  };
  add(domain.lower());
  add(domain.upper());
  for (Eigen::Index k = 0; k < domain.cardinality(); ++k) add(domain.point(k));
  return hash;
}

std::string hex64(std::uint64_t value) {
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << value;
  return out.str();
}

}  // namespace stobnts
