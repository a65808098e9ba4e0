#include <doctest.h>

#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "stobnts/ask_tell.hpp"
#include "stobnts/bench.hpp"
#include "stobnts/checkpoint.hpp"
#include "stobnts/config.hpp"
#include "stobnts/trace_io.hpp"

using namespace stobnts;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("stobnts-test-" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

json small_doc(const std::string& algorithm = "random-search") {
  return {{"run_id", "t"},
          {"algorithm", algorithm},
          {"batch_size", 2},
          {"horizon", 8},
          {"seed", 11},
          {"init", {{"budget", 3}}},
          {"network", {{"depth", 1}, {"width", 16}}},
          {"objective", {{"type", "synthetic-gp"}, {"points", 100}}}};
}

std::string error_of(const json& doc) {
  try {
    parse_run_config(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

void check_same_trace(const std::vector<TraceRow>& a, const std::vector<TraceRow>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].t == b[k].t);
    CHECK(a[k].slot == b[k].slot);
    CHECK(a[k].x == b[k].x);
    CHECK(a[k].y == b[k].y);
  }
}

// Two pipes: the engine end and the responder end of one conversation.
struct PipePair {
  int to_engine[2];
  int to_peer[2];
  PipePair() {
    REQUIRE(::pipe(to_engine) == 0);
    REQUIRE(::pipe(to_peer) == 0);
  }
  ~PipePair() {
    for (int fd : {to_engine[0], to_engine[1], to_peer[0], to_peer[1]}) {
      if (fd >= 0) ::close(fd);
    }
  }
  FdChannel engine() { return FdChannel(to_engine[0], to_peer[1]); }
  FdChannel peer() { return FdChannel(to_peer[0], to_engine[1]); }
  void close_peer() {
    ::close(to_engine[1]);
    to_engine[1] = -1;
  }
};

struct Responder {
  // y = first coordinate; may reorder tells within a batch or inject faults
  int batch = 1;
  bool reverse = false;
  std::function<std::optional<std::string>(const json& ask, int count)> fault;
  int stop_after = -1;  // stop answering after this many asks
  std::vector<json> received;

  void run(LineChannel& ch) {
    try {
      loop(ch);
    } catch (const ProtocolError&) {
      // engine side went away
    }
  }

  void loop(LineChannel& ch) {
    std::vector<json> pending;
    int count = 0;
    while (true) {
      std::optional<std::string> line;
      try {
        line = ch.receive(std::chrono::milliseconds(5000));
      } catch (const ProtocolError&) {
        return;
      }
      if (!line) return;
      const json msg = json::parse(*line);
      received.push_back(msg);
      if (msg["type"] != "ask") return;
      ++count;
      if (stop_after >= 0 && count > stop_after) return;
      pending.push_back(msg);
      const int t = msg["t"];
      const bool init = t == 0;
      const std::size_t want = init ? 1 : static_cast<std::size_t>(batch);
      if (!init && pending.size() < want) continue;
      if (reverse) std::reverse(pending.begin(), pending.end());
      for (const json& ask : pending) {
        if (fault) {
          if (auto custom = fault(ask, count)) {
            ch.send(*custom);
            continue;
          }
        }
        ch.send(tell_message(ask["run"], ask["t"], ask["i"], ask["x"][0].get<double>()).dump());
      }
      pending.clear();
    }
  }
};

EngineConfig serve_config(int batch = 2) {
  EngineConfig cfg;
  cfg.algorithm = Algorithm::gp_ucb;
  cfg.batch_size = batch;
  cfg.horizon = 4 * batch;
  cfg.init.budget = 3;
  cfg.seed = 4;
  return cfg;
}

Domain serve_domain() { return Domain::discrete(Eigen::RowVectorXd::LinSpaced(40, -1.0, 1.0)); }

// Uninterrupted in-process reference for the echo responder.
RegretTrace echo_reference(const EngineConfig& cfg) {
  FunctionObjective echo([](const Vector& x) { return x[0]; });
  return run_campaign(echo, serve_domain(), cfg);
}

std::string serve_error(Responder responder, std::chrono::milliseconds timeout = std::chrono::milliseconds(5000)) {
  PipePair pipes;
  FdChannel engine = pipes.engine();
  FdChannel peer = pipes.peer();
  Campaign campaign(serve_domain(), serve_config());
  std::thread th([&] { responder.run(peer); });
  std::string error;
  try {
    ServeOptions opts;
    opts.run_id = "r1";
    opts.timeout = timeout;
    serve_campaign(campaign, engine, opts);
  } catch (const ProtocolError& e) {
    error = e.what();
  }
  th.join();
  if (responder.stop_after < 0) {
    REQUIRE_FALSE(responder.received.empty());
    CHECK(responder.received.back()["type"] == "abort");
    CHECK(responder.received.back()["run"] == "r1");
    CHECK(responder.received.back().contains("reason"));
  }
  return error;
}

}  // namespace

TEST_CASE("config defaults and round trip") {
  const RunConfig cfg = parse_run_config(json::object());
  CHECK(cfg.objective.kind == ObjectiveKind::synthetic_gp);
  CHECK(cfg.engine.network.depth == 8);
  CHECK(cfg.engine.network.width == 64);
  CHECK(cfg.engine.network.activation == Activation::erf);
  CHECK(cfg.engine.beta_mode == BetaMode::practical_one);
  CHECK(cfg.engine.init.budget == 5);
  const json resolved = to_json(cfg);
  CHECK(to_json(parse_run_config(resolved)) == resolved);

  const json ext = {{"objective", {{"type", "external"}, {"command", "true"}}},
                    {"domain", {{"type", "box"}, {"lower", {0, 0}}, {"upper", {1, 2}}}}};
  const RunConfig e = parse_run_config(ext);
  CHECK(e.engine.network.depth == 2);
  CHECK(e.engine.network.width == 256);
  CHECK(e.engine.network.activation == Activation::relu);
  CHECK(build_domain(e).kind() == DomainKind::box);
  CHECK(build_synthetic_objective(e) == nullptr);
  CHECK(to_json(parse_run_config(to_json(e))) == to_json(e));

  const RunConfig s = parse_run_config(small_doc());
  CHECK(build_domain(s).cardinality() == 100);
  const auto obj = build_synthetic_objective(s);
  REQUIRE(obj != nullptr);
  CHECK(obj->values().size() == 100);
}

TEST_CASE("config errors name the offending key") {
  json doc = small_doc();
  doc["horizn"] = 5;
  CHECK(error_of(doc).find("horizn") != std::string::npos);
  doc = small_doc();
  doc["train"] = {{"stepsize", 0.1}};
  CHECK(error_of(doc).find("train.stepsize") != std::string::npos);
  doc = small_doc();
  doc["horizon"] = "ten";
  CHECK(error_of(doc).find("horizon") != std::string::npos);
  doc = small_doc();
  doc["horizon"] = 9;  // not a multiple of batch_size
  CHECK(error_of(doc).find("multiple") != std::string::npos);
  doc = small_doc();
  doc["algorithm"] = "neural-ucb";
  CHECK(error_of(doc).find("algorithm") != std::string::npos);
  CHECK_FALSE(error_of({{"objective", {{"type", "external"}}}}).empty());  // domain required
  CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("config digest") {
  const RunConfig base = parse_run_config(small_doc());
  const Domain dom = build_domain(base);
  const std::uint64_t d0 = config_digest(base.engine, dom);
  EngineConfig threads = base.engine;
  threads.threads = 8;
  CHECK(config_digest(threads, dom) == d0);
  EngineConfig seed = base.engine;
  seed.seed = 12;
  CHECK(config_digest(seed, dom) != d0);
  CHECK(config_digest(base.engine, Domain::discrete(Eigen::RowVectorXd::LinSpaced(100, 0.0, 2.0))) != d0);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("checkpoint after iteration 3 resumes to the uninterrupted trace") {
  for (const char* alg : {"sto-bnts", "gp-ts", "random-search"}) {
    INFO(alg);
    const RunConfig cfg = parse_run_config(small_doc(alg));
    const Domain dom = build_domain(cfg);
    auto obj = build_synthetic_objective(cfg);
    Campaign full(dom, cfg.engine);
    const RegretTrace whole = run_campaign(*obj, full);

    Campaign part(dom, cfg.engine);
    std::optional<json> saved;
    RunHooks hooks;
    hooks.after_commit = [&](const Campaign& c) {
      if (c.history().completed_through() == 3) {
        saved = checkpoint_json(c);
        throw std::runtime_error("interrupted");
      }
    };
    CHECK_THROWS_WITH(run_campaign(*obj, part, hooks), "interrupted");
    REQUIRE(saved.has_value());
    // serialization survives text form
    Campaign resumed = restore_campaign(dom, cfg.engine, json::parse(saved->dump()));
    CHECK(resumed.next_iteration() == 4);
    CHECK(resumed.init_hash() == full.init_hash());
    const RegretTrace rest = run_campaign(*obj, resumed);
    check_same_trace(rest.rows, whole.rows);
    CHECK(rest.regret.cumulative == whole.regret.cumulative);
    CHECK(trace_csv(rest, 1) == trace_csv(whole, 1));
  }
}

TEST_CASE("checkpoint corruption and mismatch are detected") {
  const RunConfig cfg = parse_run_config(small_doc());
  const Domain dom = build_domain(cfg);
  auto obj = build_synthetic_objective(cfg);
  Campaign c(dom, cfg.engine);
  run_campaign(*obj, c);
  const json good = checkpoint_json(c);
  CHECK(good["format"] == "stobnts-checkpoint");
  CHECK(good["version"] == 1);
  CHECK_NOTHROW(restore_campaign(dom, cfg.engine, good));

  json tampered = good;
  tampered["payload"]["observations"][2]["y"] = 123.0;
  CHECK_THROWS_AS(restore_campaign(dom, cfg.engine, tampered), CheckpointError);
  json version = good;
  version["version"] = 2;
  CHECK_THROWS_AS(restore_campaign(dom, cfg.engine, version), CheckpointError);
  CHECK_THROWS_AS(restore_campaign(dom, cfg.engine, json{{"format", "other"}}), CheckpointError);
  EngineConfig other = cfg.engine;
  other.seed = 99;
  CHECK_THROWS_AS(restore_campaign(dom, other, good), CheckpointError);
  EngineConfig threads = cfg.engine;
  threads.threads = 4;
  CHECK_NOTHROW(restore_campaign(dom, threads, good));

  const fs::path dir = scratch_dir("ckpt");
  write_checkpoint(dir / "c.json", c);
  CHECK_FALSE(fs::exists(dir / "c.json.tmp"));
  const Campaign loaded = load_checkpoint(dir / "c.json", dom, cfg.engine);
  check_same_trace(loaded.trace(), c.trace());
  std::ofstream(dir / "bad.json") << "{not json";
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.json", dom, cfg.engine), CheckpointError);
}

TEST_CASE("trace files round-trip without loss") {
  const RunConfig cfg = parse_run_config(small_doc("gp-ucb"));
  const Domain dom = build_domain(cfg);
  auto obj = build_synthetic_objective(cfg);
  Campaign c(dom, cfg.engine);
  const RegretTrace tr = run_campaign(*obj, c);
  const std::string text = trace_csv(tr, 1);
  CHECK(text.rfind("t,i,x0,y,f,regret_cum,regret_simple\n", 0) == 0);
  std::istringstream in(text);
  const ParsedTrace back = parse_trace(in);
  CHECK(back.dim == 1);
  REQUIRE(back.rows.size() == tr.rows.size());
  for (std::size_t k = 0; k < tr.rows.size(); ++k) {
    CHECK(back.rows[k].t == tr.rows[k].t);
    CHECK(back.rows[k].slot == tr.rows[k].slot);
    CHECK(back.rows[k].x == tr.rows[k].x);
    CHECK(back.rows[k].y == tr.rows[k].y);
    CHECK(back.rows[k].f == tr.rows[k].f);
  }
  CHECK(back.stored.cumulative == tr.regret.cumulative);
  CHECK(back.stored.simple == tr.regret.simple);

  // unknown truth: empty fields
  RegretTrace blind = tr;
  for (TraceRow& r : blind.rows) r.f.reset();
  blind.regret = {};
  blind.f_star.reset();
  std::istringstream in2(trace_csv(blind, 1));
  const ParsedTrace b2 = parse_trace(in2);
  CHECK_FALSE(b2.rows[0].f.has_value());
  CHECK(b2.stored.cumulative.empty());

  std::istringstream partial("t,i,x0,y,f,regret_cum,regret_simple\n1,0,0.5,1,1,0,0\n1,1,0.5,1,1,,\n");
  CHECK_THROWS_AS(parse_trace(partial), TraceError);
  std::istringstream header("t,i,y\n");
  CHECK_THROWS_AS(parse_trace(header), TraceError);
  std::istringstream short_row("t,i,x0,y,f,regret_cum,regret_simple\n1,0,0.5\n");
  CHECK_THROWS_AS(parse_trace(short_row), TraceError);

  const json summary = summary_json(cfg, c, tr);
  CHECK(summary["evaluations"] == 8);
  CHECK(summary["iterations"] == 4);
  CHECK(summary["simple_regret"].get<double>() == tr.regret.simple.back());
  CHECK(summary["f_star"].get<double>() == *obj->optimum());
  CHECK(summary["init_hash"] == hex64(c.init_hash()));

  const fs::path dir = scratch_dir("trace");
  write_file_atomic(dir / "t.csv", text);
  CHECK(read_trace(dir / "t.csv").rows.size() == 8);
  CHECK_FALSE(fs::exists(dir / "t.csv.tmp"));
}

TEST_CASE("quantiles and aggregation") {
  CHECK(quantile({3.0, 1.0, 2.0}, 0.5) == 2.0);
  CHECK(quantile({1.0, 2.0, 3.0, 4.0}, 0.5) == 2.5);
  CHECK(quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.25) == 2.0);
  CHECK(quantile({1.0, 2.0}, 0.25) == 1.25);
  CHECK(quantile({7.0}, 0.75) == 7.0);
  CHECK_THROWS(quantile({}, 0.5));

  std::vector<BenchCellResult> cells;
  for (int s = 0; s < 3; ++s) {
    BenchCellResult c;
    c.algorithm = "a";
    c.seed = static_cast<std::uint64_t>(s);
    RegretTrace tr;
    for (int k = 0; k < 2; ++k) tr.rows.push_back({k + 1, 0, Vector::Zero(1), 0.0, 0.0});
    tr.regret = regret_metrics(std::vector<double>{static_cast<double>(s + 1), 0.5 * s});
    c.trace = tr;
    cells.push_back(c);
  }
  const std::vector<AggregateRow> rows = aggregate_simple_regret(cells);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].median == 2.0);  // S_1 = 1, 2, 3
  CHECK(rows[0].q25 == 1.5);
  CHECK(rows[0].q75 == 2.5);
  CHECK(rows[1].median == 0.5);  // S_2 = min(1, 0), min(2, .5), min(3, 1)
  CHECK(rows[1].evaluation == 2);
  CHECK(rows[1].iteration == 2);
  CHECK(aggregate_csv(rows).rfind("algorithm,evaluation,iteration,median,q25,q75\n", 0) == 0);
}

TEST_CASE("bench: two algorithms x five seeds") {
  const fs::path dir = scratch_dir("bench");
  json base = small_doc();
  base.erase("seed");
  base.erase("algorithm");
  base.erase("run_id");
  const json doc = {{"base", base}, {"algorithms", {"sto-bnts", "random-search"}}, {"seeds", 5},
                    {"output_dir", dir.string()}, {"jobs", 3}};
  const BenchSuite suite = parse_bench_suite(doc);
  CHECK(suite.seeds.size() == 5);
  const BenchReport rep = run_bench(suite);
  CHECK(rep.ok());
  REQUIRE(rep.cells.size() == 10);
  int traces = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) traces += entry.path().extension() == ".csv";
  CHECK(traces == 11);  // 10 traces + aggregate
  CHECK(fs::exists(dir / "aggregate.csv"));
  CHECK(fs::exists(dir / "report.json"));
  CHECK(fs::exists(dir / "sto-bnts" / "seed0.csv"));
  for (std::size_t s = 0; s < 5; ++s) CHECK(rep.cells[s].init_hash == rep.cells[5 + s].init_hash);
  CHECK(rep.cells[0].init_hash != rep.cells[1].init_hash);
  CHECK(rep.aggregate.size() == 2 * 8);

  // a cell equals the standalone run of its config
  const RunConfig cell = bench_cell_config(suite, suite.algorithms[0], suite.seeds[2]);
  CHECK(cell.run_id == "sto-bnts-seed2");
  auto obj = build_synthetic_objective(cell);
  const RegretTrace alone = run_campaign(*obj, build_domain(cell), cell.engine);
  check_same_trace(alone.rows, rep.cells[2].trace->rows);

  // reruns are identical regardless of job count
  BenchSuite serial = suite;
  serial.jobs = 1;
  const BenchReport again = run_bench(serial, false);
  for (std::size_t k = 0; k < 10; ++k) check_same_trace(again.cells[k].trace->rows, rep.cells[k].trace->rows);
}

TEST_CASE("bench: failed cells are reported by name") {
  json base = small_doc();
  base.erase("seed");
  base.erase("algorithm");
  base.erase("run_id");
  const json doc = {{"base", base},
                    {"algorithms", {"random-search", {{"name", "broken"}, {"overrides", {{"algorithm", "random-search"}, {"init", {{"budget", 500}}}}}}}},
                    {"seeds", {1, 2}}};
  const BenchReport rep = run_bench(parse_bench_suite(doc), false);
  CHECK_FALSE(rep.ok());
  bool named = false;
  for (const std::string& p : rep.problems) named = named || p.find("broken/seed") != std::string::npos;
  CHECK(named);
  CHECK(rep.cells[0].error.empty());

  CHECK_THROWS_AS(parse_bench_suite(json{{"base", base}, {"algorithms", {"x"}}, {"seeds", 1}, {"extra", 1}}), ConfigError);
  json seeded = base;
  seeded["seed"] = 3;
  CHECK_THROWS_AS(parse_bench_suite(json{{"base", seeded}, {"algorithms", {"random-search"}}, {"seeds", 1}}), ConfigError);
}

TEST_CASE("ask/tell: echo responder matches the in-process run") {
  for (int batch : {1, 3}) {
    for (bool reverse : {false, true}) {
      INFO("B=", batch, " reverse=", reverse);
      PipePair pipes;
      FdChannel engine = pipes.engine();
      FdChannel peer = pipes.peer();
      Responder r;
      r.batch = batch;
      r.reverse = reverse;
      std::thread th([&] { r.run(peer); });
      Campaign campaign(serve_domain(), serve_config(batch));
      ServeOptions opts;
      opts.run_id = "echo";
      int commits = 0;
      opts.after_commit = [&](const Campaign&) { ++commits; };
      serve_campaign(campaign, engine, opts);
      th.join();
      CHECK(commits == 5);
      REQUIRE_FALSE(r.received.empty());
      CHECK(r.received.back()["type"] == "done");
      CHECK(r.received.back()["run"] == "echo");
      CHECK(r.received.front()["t"] == 0);
      check_same_trace(campaign.trace(), echo_reference(serve_config(batch)).rows);
    }
  }
}

TEST_CASE("ask/tell protocol violations abort") {
  Responder mismatch;
  mismatch.fault = [](const json& ask, int) -> std::optional<std::string> {
    if (ask["t"] == 2) return tell_message(ask["run"], 3, ask["i"], 0.0).dump();
    return std::nullopt;
  };
  CHECK(serve_error(mismatch).find("does not match") != std::string::npos);

  Responder wrong_run;
  wrong_run.fault = [](const json& ask, int) -> std::optional<std::string> {
    return tell_message("other", ask["t"], ask["i"], 0.0).dump();
  };
  CHECK_FALSE(serve_error(wrong_run).empty());

  Responder duplicate;
  duplicate.batch = 2;
  duplicate.fault = [](const json& ask, int) -> std::optional<std::string> {
    if (ask["t"] == 1) return tell_message(ask["run"], 1, 0, 0.0).dump();
    return std::nullopt;
  };
  CHECK(serve_error(duplicate).find("duplicate") != std::string::npos);

  Responder garbage;
  garbage.fault = [](const json&, int) -> std::optional<std::string> { return std::string("{\"type\": \"tell\", "); };
  CHECK_FALSE(serve_error(garbage).empty());

  Responder no_y;
  no_y.fault = [](const json& ask, int) -> std::optional<std::string> {
    return json{{"type", "tell"}, {"run", ask["run"]}, {"t", ask["t"]}, {"i", ask["i"]}}.dump();
  };
  CHECK_FALSE(serve_error(no_y).empty());

  Responder silent;
  silent.stop_after = 2;
  CHECK(serve_error(silent, std::chrono::milliseconds(200)).find("timed out") != std::string::npos);
}

TEST_CASE("ask/tell: counterpart dies mid-run, resume from checkpoint gives the same trace") {
  const EngineConfig cfg = serve_config(2);
  std::optional<json> saved;
  {
    PipePair pipes;
    FdChannel engine = pipes.engine();
    FdChannel peer = pipes.peer();
    Responder r;
    r.batch = 2;
    r.stop_after = 3 + 2 * 2 + 1;  // init, two iterations, then half of iteration 3
    std::thread th([&] {
      r.run(peer);
      pipes.close_peer();
    });
    Campaign campaign(serve_domain(), cfg);
    ServeOptions opts;
    opts.run_id = "k";
    opts.after_commit = [&](const Campaign& c) { saved = checkpoint_json(c); };
    CHECK_THROWS_AS(serve_campaign(campaign, engine, opts), ProtocolError);
    th.join();
  }
  REQUIRE(saved.has_value());
  Campaign resumed = restore_campaign(serve_domain(), cfg, *saved);
  CHECK(resumed.next_iteration() == 3);
  PipePair pipes;
  FdChannel engine = pipes.engine();
  FdChannel peer = pipes.peer();
  Responder r;
  r.batch = 2;
  std::thread th([&] { r.run(peer); });
  ServeOptions opts;
  opts.run_id = "k";
  serve_campaign(resumed, engine, opts);
  th.join();
  CHECK(r.received.front()["t"] == 3);
  check_same_trace(resumed.trace(), echo_reference(cfg).rows);
}

TEST_CASE("ask/tell over a file pair") {
  const fs::path dir = scratch_dir("files");
  std::ofstream(dir / "tells.jsonl") << "stale\n";
  FileChannel engine(dir / "asks.jsonl", dir / "tells.jsonl");
  CHECK(fs::file_size(dir / "tells.jsonl") == 0);
  std::atomic<bool> stop{false};
  std::thread peer([&] {
    std::size_t consumed = 0;
    while (!stop) {
      std::ifstream in(dir / "asks.jsonl");
      std::string line;
      std::vector<std::string> lines;
      while (std::getline(in, line)) lines.push_back(line);
      for (; consumed < lines.size(); ++consumed) {
        if (lines[consumed].empty() || lines[consumed].back() != '}') break;  // partial write
        const json msg = json::parse(lines[consumed]);
        if (msg["type"] != "ask") {
          stop = true;
          break;
        }
        std::ofstream(dir / "tells.jsonl", std::ios::app)
            << tell_message(msg["run"], msg["t"], msg["i"], msg["x"][0].get<double>()).dump() << '\n';
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  });
  Campaign campaign(serve_domain(), serve_config(2));
  ServeOptions opts;
  opts.run_id = "files";
  serve_campaign(campaign, engine, opts);
  peer.join();
  check_same_trace(campaign.trace(), echo_reference(serve_config(2)).rows);
}

TEST_CASE("ask/tell with a subprocess counterpart") {
  if (std::system("command -v python3 >/dev/null 2>&1") != 0) return;
  const fs::path dir = scratch_dir("proc");
  std::ofstream(dir / "echo.py") << "import json, sys\n"
                                    "for line in sys.stdin:\n"
                                    "    m = json.loads(line)\n"
                                    "    if m['type'] != 'ask':\n"
                                    "        break\n"
                                    "    print(json.dumps({'type': 'tell', 'run': m['run'], 't': m['t'], 'i': m['i'], "
                                    "'y': m['x'][0]}), flush=True)\n";
  ProcessChannel channel("python3 " + (dir / "echo.py").string());
  Campaign campaign(serve_domain(), serve_config(2));
  ServeOptions opts;
  opts.run_id = "proc";
  serve_campaign(campaign, channel, opts);
  check_same_trace(campaign.trace(), echo_reference(serve_config(2)).rows);

  ProcessChannel quitter("exit 0");
  Campaign c2(serve_domain(), serve_config(2));
  CHECK_THROWS_AS(serve_campaign(c2, quitter, opts), ProtocolError);
}

TEST_CASE("ask messages") {
  Query q{Vector::Constant(2, 0.25), 7};
  const json a = ask_message("r", 3, 1, q);
  CHECK(a["type"] == "ask");
  CHECK(a["run"] == "r");
  CHECK(a["t"] == 3);
  CHECK(a["i"] == 1);
  CHECK(a["x"] == json::array({0.25, 0.25}));
  CHECK(a["index"] == 7);
  CHECK_FALSE(ask_message("r", 1, 0, Query{Vector::Zero(1), std::nullopt}).contains("index"));
  CHECK(tell_message("r", 1, 0, 2.5) == json{{"type", "tell"}, {"run", "r"}, {"t", 1}, {"i", 0}, {"y", 2.5}});
}
