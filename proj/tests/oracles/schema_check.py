#!/usr/bin/env python3
"""Validates fixtures, exported timelines and a full frame transcript
against the published JSON schemas.

usage: schema_check.py <codetrail> <frame_transcript> <fixtures_dir> <schemas_dir> <work_dir>
"""
import json
import shutil
import subprocess
import sys
from pathlib import Path

from jsonschema import Draft202012Validator
from referencing import Registry, Resource

CLI, TRANSCRIPT = sys.argv[1], sys.argv[2]
FIXTURES, SCHEMAS, WORK = Path(sys.argv[3]), Path(sys.argv[4]), Path(sys.argv[5])
BASE = "https://codetrail.dev/schemas/"


def main():
    shutil.rmtree(WORK, ignore_errors=True)
    WORK.mkdir(parents=True)
    docs = {p.name: json.loads(p.read_text()) for p in SCHEMAS.glob("*.schema.json")}
    registry = Registry().with_resources(
        (BASE + name, Resource.from_contents(doc)) for name, doc in docs.items())
    for doc in docs.values():
        Draft202012Validator.check_schema(doc)

    def validator(name, pointer=""):
        return Draft202012Validator({"$ref": BASE + name + pointer}, registry=registry)

    log_v = validator("session-log.schema.json")
    header_v = validator("session-log.schema.json", "#/$defs/header")
    event_v = validator("session-log.schema.json", "#/$defs/event")
    timeline_v = validator("timeline.schema.json")
    frame_v = validator("frame.schema.json")

    failures = []

    def expect_valid(v, instance, what):
        errors = sorted(v.iter_errors(instance), key=lambda e: list(e.absolute_path))
        if errors:
            failures.append(what)
            print(f"FAIL {what}: {errors[0].message} at {list(errors[0].absolute_path)}")

    logs = sorted(p for p in FIXTURES.iterdir() if p.suffix in (".json", ".ndjson"))
    for log in logs:
        if log.suffix == ".ndjson":
            lines = [json.loads(l) for l in log.read_text().splitlines() if l.strip()]
            expect_valid(header_v, lines[0], f"{log.name} header")
            for i, rec in enumerate(lines[1:], start=2):
                expect_valid(event_v, rec, f"{log.name} line {i}")
            header, events = lines[0], lines[1:]
        else:
            header = json.loads(log.read_text())
            expect_valid(log_v, header, log.name)
            events = header["events"]

        files = set(header.get("starter", {})) | {e["file_path"] for e in events if e["type"] == "edit"}
        for name in sorted(files):
            out = subprocess.run([CLI, "export-timeline", log, "--file", name],
                                 capture_output=True, text=True, check=True).stdout
            expect_valid(timeline_v, json.loads(out), f"timeline of {log.name}:{name}")

        frames = subprocess.run([TRANSCRIPT, log], capture_output=True, text=True, check=True).stdout
        kinds = set()
        for n, line in enumerate(frames.splitlines(), start=1):
            frame = json.loads(line)
            kinds.add(frame["frame_type"])
            expect_valid(frame_v, frame, f"{log.name} frame {n} ({frame['frame_type']})")
        print(f"ok   {log.name}: {len(frames.splitlines())} frames, types {sorted(kinds)}")

    # The schema must also reject what the engine rejects structurally.
    bad = {"frame_type": "edit", "session_id": "s", "frame_seq": 1, "payload": {"type": "edit"}}
    if frame_v.is_valid(bad):
        failures.append("frame schema accepts an edit without fields")
        print("FAIL frame schema accepts an edit without fields")

    print(f"{len(failures)} failures")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
