#!/usr/bin/env python3
"""End-to-end checks of the stobnts command line: run, replay, bench and ask/tell serve."""

import json
import os
import signal
import subprocess
import sys
import tempfile
import unittest

BINARY = None


def objective(x):
    # smooth bump on the 1-d grid used by the serve configs
    return 1.0 - (x[0] - 0.3) ** 2


def responder_main():
    """Peer used as objective.command: answer every ask until done/abort."""
    for line in sys.stdin:
        msg = json.loads(line)
        if msg["type"] != "ask":
            return 0
        tell = {"type": "tell", "run": msg["run"], "t": msg["t"], "i": msg["i"], "y": objective(msg["x"])}
        sys.stdout.write(json.dumps(tell) + "\n")
        sys.stdout.flush()
    return 0


def write_json(path, doc):
    with open(path, "w") as f:
        json.dump(doc, f)


def read(path):
    with open(path, "rb") as f:
        return f.read()


def synthetic_config(tmp, name, **extra):
    doc = {
        "run_id": name,
        "algorithm": "gp-ucb",
        "batch_size": 2,
        "horizon": 20,
        "seed": 7,
        "objective": {"type": "synthetic-gp", "lower": [0, 0], "upper": [1, 1], "points": 8, "lengthscale": 0.2},
        "output": {
            "trace": os.path.join(tmp, name + ".csv"),
            "summary": os.path.join(tmp, name + ".json"),
        },
    }
    doc.update(extra)
    path = os.path.join(tmp, name + ".cfg.json")
    write_json(path, doc)
    return path, doc


def external_config(tmp, name, command=""):
    doc = {
        "run_id": name,
        "algorithm": "gp-ucb",
        "batch_size": 3,
        "horizon": 24,
        "seed": 11,
        "objective": {"type": "external", "command": command, "timeout": 20},
        "domain": {"type": "grid", "lower": [-1], "upper": [1], "max_points": 41},
        "output": {
            "trace": os.path.join(tmp, name + ".csv"),
            "summary": os.path.join(tmp, name + ".json"),
            "checkpoint": os.path.join(tmp, name + ".ckpt"),
        },
    }
    path = os.path.join(tmp, name + ".cfg.json")
    write_json(path, doc)
    return path, doc


def cli(*args, **kw):
    return subprocess.run([BINARY, *args], capture_output=True, text=True, timeout=300, **kw)


class Serve:
    """Drives `stobnts serve` over stdio, answering asks with `objective`."""

    def __init__(self, cfg, *extra):
        self.proc = subprocess.Popen([BINARY, "serve", "-c", cfg, *extra], stdin=subprocess.PIPE,
                                     stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True, bufsize=1)
        self.asks = []

    def next_message(self):
        line = self.proc.stdout.readline()
        return json.loads(line) if line else None

    def next_non_ask(self):
        msg = self.next_message()
        while msg is not None and msg["type"] == "ask":
            msg = self.next_message()
        return msg

    def tell(self, ask, **override):
        msg = {"type": "tell", "run": ask["run"], "t": ask["t"], "i": ask["i"], "y": objective(ask["x"])}
        msg.update(override)
        self.proc.stdin.write(json.dumps(msg) + "\n")
        self.proc.stdin.flush()

    def drive(self, stop_at_iteration=None):
        """Answer asks iteration by iteration (tells in reverse slot order).
        Returns the final record, or None once an ask for stop_at_iteration arrives."""
        pending = []
        while True:
            msg = self.next_message()
            if msg is None or msg["type"] != "ask":
                return msg
            self.asks.append(msg)
            if stop_at_iteration is not None and msg["t"] >= stop_at_iteration:
                return None
            pending.append(msg)
            if len(pending) == self.expected_batch(msg):
                for ask in reversed(pending):
                    self.tell(ask)
                pending = []

    batch = 3
    init_budget = 5

    def expected_batch(self, ask):
        return self.init_budget if ask["t"] == 0 else self.batch

    def finish(self):
        self.proc.stdin.close()
        rc = self.proc.wait(timeout=120)
        err = self.proc.stderr.read()
        self.proc.stdout.close()
        self.proc.stderr.close()
        return rc, err


class CliTests(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = self._tmp.name

    def tearDown(self):
        self._tmp.cleanup()

    def test_run_rows_and_byte_identical_rerun(self):
        cfg, doc = synthetic_config(self.tmp, "a")
        r = cli("run", "-q", "-c", cfg)
        self.assertEqual(r.returncode, 0, r.stderr)
        first_trace, first_summary = read(doc["output"]["trace"]), read(doc["output"]["summary"])
        lines = first_trace.decode().splitlines()
        self.assertEqual(lines[0], "t,i,x0,x1,y,f,regret_cum,regret_simple")
        self.assertEqual(len(lines) - 1, 20)
        r = cli("run", "-q", "-c", cfg)
        self.assertEqual(r.returncode, 0, r.stderr)
        self.assertEqual(read(doc["output"]["trace"]), first_trace)
        self.assertEqual(read(doc["output"]["summary"]), first_summary)

    def test_replay_reproduces_the_regret_columns(self):
        cfg, doc = synthetic_config(self.tmp, "b", algorithm="random-search")
        self.assertEqual(cli("run", "-q", "-c", cfg).returncode, 0)
        r = cli("replay", "--trace", doc["output"]["trace"], "--summary", doc["output"]["summary"])
        self.assertEqual(r.returncode, 0, r.stderr)
        self.assertEqual(r.stdout.encode(), read(doc["output"]["trace"]))
        wrong = cli("replay", "--trace", doc["output"]["trace"], "--f-star", "123")
        self.assertEqual(wrong.returncode, 1)
        self.assertIn("differs", wrong.stderr)
        self.assertEqual(cli("replay", "--trace", doc["output"]["trace"]).returncode, 1)

    def test_config_errors_exit_2_and_name_the_key(self):
        cfg, _ = synthetic_config(self.tmp, "c", horizn=20)
        r = cli("run", "-c", cfg)
        self.assertEqual(r.returncode, 2)
        self.assertIn("horizn", r.stderr)
        cfg, _ = synthetic_config(self.tmp, "d", batch_size=0)
        r = cli("run", "-c", cfg)
        self.assertEqual(r.returncode, 2)
        self.assertIn("batch_size", r.stderr)

    def test_bench_writes_aggregate_and_reports_failed_cells(self):
        _, doc = synthetic_config(self.tmp, "unused")
        base = {k: v for k, v in doc.items() if k not in ("run_id", "seed", "output", "algorithm")}
        suite = {"base": base, "algorithms": ["gp-ucb", "random-search"], "seeds": 3,
                 "output_dir": os.path.join(self.tmp, "bench")}
        path = os.path.join(self.tmp, "suite.json")
        write_json(path, suite)
        r = cli("bench", "-s", path, "-j", "2")
        self.assertEqual(r.returncode, 0, r.stderr)
        self.assertTrue(r.stdout.startswith("algorithm,evaluations,median_simple_regret"))
        self.assertTrue(os.path.exists(os.path.join(suite["output_dir"], "aggregate.csv")))
        suite["algorithms"].append({"name": "broken", "overrides": {"algorithm": "random-search",
                                                                    "init": {"budget": 500}}})
        write_json(path, suite)
        r = cli("bench", "-s", path, "-j", "2")
        self.assertEqual(r.returncode, 3)
        self.assertIn("broken", r.stderr)

    def test_serve_matches_run_with_the_same_peer(self):
        command = f"{sys.executable} {os.path.abspath(__file__)} --responder"
        cfg, doc = external_config(self.tmp, "ext", command)
        r = cli("run", "-q", "-c", cfg)
        self.assertEqual(r.returncode, 0, r.stderr)
        reference = read(doc["output"]["trace"])
        self.assertEqual(len(reference.decode().splitlines()) - 1, 24)

        cfg, doc = external_config(self.tmp, "srv")
        s = Serve(cfg)
        last = s.drive()
        rc, err = s.finish()
        self.assertEqual(rc, 0, err)
        self.assertEqual(last, {"type": "done", "run": "srv"})
        self.assertEqual(s.asks[0]["t"], 0)
        self.assertEqual(read(doc["output"]["trace"]), reference)

    def test_killed_serve_resumes_to_the_same_trace(self):
        cfg, doc = external_config(self.tmp, "full")
        s = Serve(cfg)
        s.drive()
        self.assertEqual(s.finish()[0], 0)
        reference = read(doc["output"]["trace"])

        cfg, doc = external_config(self.tmp, "killed")
        s = Serve(cfg, "--resume")
        self.assertIsNone(s.drive(stop_at_iteration=4))
        s.proc.send_signal(signal.SIGKILL)
        s.finish()
        self.assertTrue(os.path.exists(doc["output"]["checkpoint"]))
        self.assertFalse(os.path.exists(doc["output"]["trace"]))

        s = Serve(cfg, "--resume")
        last = s.drive()
        rc, err = s.finish()
        self.assertEqual(rc, 0, err)
        self.assertEqual(last["type"], "done")
        self.assertIn("resuming", err)
        self.assertGreaterEqual(s.asks[0]["t"], 1)
        self.assertEqual(read(doc["output"]["trace"]), reference)

    def test_mismatched_tell_aborts_with_nonzero_exit(self):
        cfg, _ = external_config(self.tmp, "bad")
        s = Serve(cfg)
        ask = s.next_message()
        s.tell(ask, i=ask["i"] + 99)
        abort = s.next_non_ask()
        rc, err = s.finish()
        self.assertNotEqual(rc, 0)
        self.assertEqual(abort["type"], "abort")
        self.assertEqual(abort["run"], "bad")
        self.assertIn("reason", abort)
        self.assertIn("error", err)

    def test_garbage_tell_aborts_with_nonzero_exit(self):
        cfg, _ = external_config(self.tmp, "junk")
        s = Serve(cfg)
        s.next_message()
        s.proc.stdin.write("not json\n")
        s.proc.stdin.flush()
        abort = s.next_non_ask()
        rc, _ = s.finish()
        self.assertNotEqual(rc, 0)
        self.assertEqual(abort["type"], "abort")


if __name__ == "__main__":
    if "--responder" in sys.argv:
        sys.exit(responder_main())
    if len(sys.argv) < 2:
        sys.exit("usage: cli_integration.py <path-to-stobnts> [unittest args]")
    BINARY = os.path.abspath(sys.argv.pop(1))
    unittest.main()
