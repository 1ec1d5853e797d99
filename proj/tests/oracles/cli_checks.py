#!/usr/bin/env python3
"""End-to-end checks of the codetrail command line.

usage: cli_checks.py <codetrail> <fixtures_dir> <work_dir>
"""
import csv
import io
import json
import shutil
import signal
import socket
import subprocess
import sys
import urllib.request
from pathlib import Path

CLI, FIXTURES, WORK = sys.argv[1], Path(sys.argv[2]), Path(sys.argv[3])
FAILURES = []


def run(*args, timeout=60):
    return subprocess.run([CLI, *map(str, args)], capture_output=True, text=True, timeout=timeout)


def check(cond, what):
    print(("ok   " if cond else "FAIL ") + what)
    if not cond:
        FAILURES.append(what)


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def main():
    shutil.rmtree(WORK, ignore_errors=True)
    WORK.mkdir(parents=True)
    logs = sorted(p for p in FIXTURES.iterdir() if p.is_file() and p.suffix in (".json", ".ndjson"))

    # analyze, JSON
    r = run("analyze", FIXTURES / "gradebook.json")
    check(r.returncode == 0, "analyze json exits 0")
    single = json.loads(r.stdout)
    check(single["session_id"] == "gradebook-p07", "analyze json names the session")
    check(abs(sum(single["event_proportions"].values()) - 1.0) < 1e-9, "event proportions sum to 1")

    r = run("analyze", FIXTURES, "--out", WORK / "all.json")
    check(r.returncode == 0 and len(json.loads((WORK / "all.json").read_text())) == len(logs),
          "analyze over a directory writes one object per log")

    r = run("analyze", FIXTURES, "--aggregate")
    agg = json.loads(r.stdout)
    check(r.returncode == 0 and agg["sessions"] == len(logs), "analyze --aggregate counts sessions")

    # analyze, CSV
    r = run("analyze", FIXTURES, "--format", "csv")
    rows = list(csv.reader(io.StringIO(r.stdout)))
    check(r.returncode == 0 and len(rows) == len(logs) + 1, "csv has header plus one row per log")
    check(len(rows[0]) == 23 and rows[0][0] == "session_id" and rows[0][-1] == "ai_reliance",
          "csv header is the frozen 23-column layout")
    check(all(len(row) == 23 for row in rows), "every csv row has 23 cells")

    # theta override and bad values
    check(run("analyze", FIXTURES / "tiny.json", "--theta", "0.95").returncode == 0, "--theta accepted")
    check(run("analyze", FIXTURES / "tiny.json", "--theta", "1.5").returncode == 1, "--theta out of range exits 1")
    bad_cfg = WORK / "bad.json"
    bad_cfg.write_text('{"similarity_threshold": 3}')
    check(run("analyze", FIXTURES / "tiny.json", "--config", bad_cfg).returncode == 1, "bad config exits 1")

    # validate
    r = run("validate", FIXTURES)
    check(r.returncode == 0 and r.stdout.count(": ok") == len(logs), "validate accepts every fixture")
    for bad in sorted((FIXTURES / "invalid").iterdir()):
        r = run("validate", bad)
        check(r.returncode == 1 and "error:" in r.stderr, f"validate rejects {bad.name}")
    r = run("validate", FIXTURES / "invalid" / "removed_mismatch.json")
    check("RemovedTextMismatch" in r.stderr, "validate names the error code")
    check(run("analyze", WORK / "missing.json").returncode == 1, "missing input exits 1")

    # export-timeline
    out = WORK / "timeline.json"
    r = run("export-timeline", FIXTURES / "gradebook.json", "--out", out,
            "--first-visible-line", 10, "--visible-lines", 20)
    tl = json.loads(out.read_text()) if r.returncode == 0 else {}
    check(tl.get("file_path") == "gradebook.py" and tl.get("schema_version") == 1, "export-timeline writes the model")
    check(tl.get("projection") == {"first_visible_line": 10, "last_visible_line": 29}, "projection honoured")
    r = run("export-timeline", FIXTURES / "scheduler.ndjson", "--file", "scheduler.py",
            "--first-visible-line", 10, "--visible-lines", 20)
    tl = json.loads(r.stdout)
    check(tl["projection"]["last_visible_line"] == tl["max_line"], "projection clamps to the tallest line")
    check(run("export-timeline", FIXTURES / "tiny.json", "--file", "nope.py").returncode == 1,
          "export-timeline unknown file exits 1")

    # serve + replay, then compare the live metrics with offline analysis
    port = free_port()
    server = subprocess.Popen([CLI, "serve", "--port", str(port), "--journal-dir", str(WORK / "journal")],
                              stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
    try:
        banner = server.stdout.readline()
        check(f":{port}" in banner, "serve prints its listening port")
        for log in logs:
            r = run("replay", log, "--server", f"127.0.0.1:{port}", "--speed", 0)
            check(r.returncode == 0, f"replay {log.name} exits 0")
            offline = json.loads(run("analyze", log).stdout)
            url = f"http://127.0.0.1:{port}/sessions/{offline['session_id']}/metrics"
            with urllib.request.urlopen(url, timeout=10) as resp:
                live = json.loads(resp.read())
            check(live == offline, f"live metrics equal offline for {log.name}")
        journals = sorted(p.name for p in (WORK / "journal").iterdir())
        check(len(journals) == len(logs), "one journal per replayed session")
        r = run("validate", WORK / "journal")
        check(r.returncode == 0, "journals are valid session logs")
    finally:
        server.send_signal(signal.SIGTERM)
        try:
            code = server.wait(timeout=10)
        except subprocess.TimeoutExpired:
            server.kill()
            code = None
    check(code == 0, "serve exits 0 on SIGTERM")

    # runtime failures map to exit code 2
    r = run("replay", FIXTURES / "tiny.json", "--server", f"127.0.0.1:{free_port()}")
    check(r.returncode == 2 and "ConnectionFailed" in r.stderr, "replay to a closed port exits 2")
    check(run("replay", FIXTURES / "tiny.json", "--server", "host:notaport").returncode == 1,
          "malformed endpoint exits 1")
    check(run().returncode == 1, "no subcommand exits 1")

    print(f"{len(FAILURES)} failures")
    return 1 if FAILURES else 0


if __name__ == "__main__":
    sys.exit(main())
