#!/usr/bin/env python3
# Runs the CLI on a fixed set of command lines and validates every JSON
# document it prints or writes against the shipped schemas.
#   usage: check_schemas.py <primegap binary> <schemas dir>

import json
import pathlib
import subprocess
import sys
import tempfile

from jsonschema import Draft202012Validator
from referencing import Registry, Resource


def load_registry(schema_dir):
    schemas = {}
    for path in sorted(pathlib.Path(schema_dir).glob("*.schema.json")):
        doc = json.loads(path.read_text())
        Draft202012Validator.check_schema(doc)
        schemas[path.name.removesuffix(".schema.json")] = doc
    registry = Registry().with_resources(
        (doc["$id"], Resource.from_contents(doc)) for doc in schemas.values()
    )
    return schemas, registry


def main():
    binary, schema_dir = sys.argv[1], sys.argv[2]
    schemas, registry = load_registry(schema_dir)
    used = set()
    failures = []

    def validate(name, doc, label):
        used.add(name)
        errors = list(Draft202012Validator(schemas[name], registry=registry).iter_errors(doc))
        if errors:
            failures.append(f"{label}: {errors[0].message} at {list(errors[0].absolute_path)}")

    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)

        def run(args, expect=0):
            proc = subprocess.run([binary, *args], cwd=tmp, capture_output=True, text=True)
            if proc.returncode != expect:
                failures.append(f"{' '.join(args)}: exit {proc.returncode}, stderr {proc.stderr.strip()}")
                return None
            return json.loads(proc.stdout) if proc.stdout.strip() else None

        def check(name, args, expect=0):
            doc = run(args, expect)
            if doc is not None:
                validate(name, doc, " ".join(args))

        def check_file(name, path):
            validate(name, json.loads((tmp / path).read_text()), path)

        check("gaps", ["gaps", "--limit", "100"])
        check("gaps", ["gaps", "--limit", "1000", "--records", "--merits"])
        check("jacobsthal", ["jacobsthal", "--primorial", "13"])
        check("jacobsthal", ["jacobsthal", "--n", "1000"])
        check("ycover", ["ycover", "--x", "13", "--emit", "a.json"])
        check("ycover", ["ycover", "--x", "19", "--mode", "greedy", "--order", "decreasing"])
        check_file("assignment", "a.json")
        check("certificate", ["assemble", "--assignment", "a.json", "--out", "c.json"])
        check_file("certificate", "c.json")
        check("check", ["check", "--cert", "c.json"])

        bad = json.loads((tmp / "c.json").read_text())
        bad["m"] = str(int(bad["m"]) + 1)
        (tmp / "bad.json").write_text(json.dumps(bad))
        check("check", ["check", "--cert", "bad.json"], expect=1)

        check("construct_report", ["construct", "--r", "2", "--x", "30", "--y", "20", "--z", "4", "--seed", "7",
                                   "--report", "report.json", "--emit", "final.json"])
        check_file("construct_report", "report.json")
        check_file("assignment", "final.json")
        check("construct_report", ["construct", "--x", "2000"])
        check("construct_report", ["construct", "--r", "3", "--x", "400", "--y", "3000", "--z", "12"])

        check("stats_alpha", ["stats", "alpha", "--r", "2", "--cutoff", "1000"])
        check("stats_alpha", ["stats", "alpha", "--r", "1", "--cutoff", "50"])
        for kind in ["progression_pair_d3", "progression_d2", "shifted_d3", "shifted_d2"]:
            check("stats_beta", ["stats", "beta", "--kind", kind, "--r", "3", "--p", "5", "--i", "1", "--m", "2", "--x", "10"])
        check("stats_degrees", ["stats", "degrees", "--r", "2", "--x", "1000", "--y", "8000", "--side", "p"])
        check("stats_degrees", ["stats", "degrees", "--r", "3", "--x", "1000", "--y", "8000", "--side", "q",
                                "--i", "1", "--relation", "primed", "--per-vertex"])
        for target in ["survivor_count", "pair_survival", "ap_survival"]:
            check("stats_montecarlo", ["stats", "montecarlo", "--target", target, "--trials", "40", "--seed", "3",
                                       "--x", "1000", "--y", "10000", "--z", "30"])
        check("stats_montecarlo", ["stats", "montecarlo", "--trials", "20", "--x", "1000", "--y", "10000",
                                   "--s2", "7,11,13"])
        check("stats_smooth", ["stats", "smooth", "--y", "10000", "--z", "100"])

        config = {"runs": [
            {"command": "construct", "r": 2, "x": 30, "y": 20, "z": 4, "seed": 1},
            {"command": "construct", "r": 2, "x": 30, "y": 20, "z": 4, "seed": 1},
            {"command": "gaps", "limit": 100, "records": True},
            {"command": "stats smooth", "y": 1000, "z": 10},
            {"command": "check", "cert": "bad.json"},
            {"command": "gaps", "limit": 1},
        ]}
        validate("batch_config", config, "batch config")
        for k, run_cfg in enumerate(config["runs"]):
            validate("run_config", run_cfg, f"run config {k}")
        (tmp / "batch.json").write_text(json.dumps(config))
        report = run(["batch", "--config", "batch.json", "--workers", "2"])
        if report is not None:
            validate("batch_report", report, "batch report")
            results = {"construct": "construct_report", "gaps": "gaps", "stats smooth": "stats_smooth", "check": "check"}
            for entry in report["runs"]:
                if "result" in entry:
                    validate(results[entry["config"]["command"]], entry["result"], f"batch run {entry['index']}")

    missing = set(schemas) - used
    if missing:
        failures.append(f"schemas never exercised: {sorted(missing)}")
    for line in failures:
        print("FAIL", line)
    print(f"{len(schemas)} schemas, {len(failures)} failures")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
