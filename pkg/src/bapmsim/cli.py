"""Command-line entry point: ``advise``, ``simulate``, ``calibrate`` and ``reproduce``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from . import experiments as ex
from .advisor import recommend
from .calibrate import (
    GROUPS,
    CalibrationParams,
    Context,
    calibrate_all,
    default_calibration,
    goodness_of_fit,
    load_targets,
    residual_table,
)
from .domain import ApplicationProfile, ClusterSpec, StorageTarget, WorkflowSpec, default_config
from .errors import (
    AllocationConflict,
    CyclicWorkflow,
    InsufficientCapacity,
    InvalidSpec,
    NoConvergence,
    OutOfMemory,
    OverCommit,
    PatternRequired,
    Unidentifiable,
)
from .scenarios import SCENARIO_IDS, ScenarioResult, run_scenario
from .sim import JobRun, Simulation, SimReport, summarize_results
from .sim.report import format_summary
from .sim.workflow import WorkflowPolicy, schedule_workflow
from .units import parse_bytes

EXIT_OK, EXIT_INPUT, EXIT_MODEL, EXIT_REPRO = 0, 1, 2, 3

INPUT_ERRORS = (InvalidSpec, CyclicWorkflow, OverCommit, PatternRequired, json.JSONDecodeError,
                FileNotFoundError, IsADirectoryError, KeyError, TypeError, ValueError)
MODEL_ERRORS = (OutOfMemory, AllocationConflict, InsufficientCapacity, Unidentifiable, NoConvergence)


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _csv(rows: Sequence[dict[str, Any]]) -> str:
    if not rows:
        return ""
    cols: list[str] = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (json.dumps(v) if isinstance(v, (dict, list, tuple)) else v)
                    for k, v in r.items()})
    return buf.getvalue()


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=str)


def _load_calibration(path: str | None) -> CalibrationParams:
    if path:
        return CalibrationParams.load(path)
    bundled = ex.data_path("calibration.json")
    if bundled.exists():
        return CalibrationParams.load(bundled)
    _warn("no calibration found; using uncalibrated defaults, which cannot reproduce the "
          "published timings")
    return default_calibration()


def _read_doc(path: str) -> Any:
    text = Path(path).read_text()
    if not text.strip():
        raise InvalidSpec([f"{path}: file is empty"])
    return json.loads(text)


# --- advise --------------------------------------------------------------------

def cmd_advise(args) -> int:
    src = args.profile
    p = Path(src)
    if not p.exists() and not p.suffix and ex.data_path("profiles", f"{src}.json").exists():
        p = ex.data_path("profiles", f"{src}.json")
    profile = ApplicationProfile.from_dict(_read_doc(str(p)))
    rec = recommend(profile)
    if args.format == "json":
        print(_dump({"profile": profile.name, **rec.to_dict()}))
    elif args.format == "csv":
        print(_csv([{"step": i, "question": q, "answer": a}
                    for i, (q, a) in enumerate(rec.rationale, 1)]), end="")
    else:
        print(f"{profile.name}: {rec.label}")
        for q, a in rec.rationale:
            print(f"  {q} -> {a}")
    return EXIT_OK


# --- simulate ------------------------------------------------------------------

def _write_outputs(out: str | None, name: str, rows, payload: dict, reports: dict[str, SimReport]):
    if not out:
        return
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    (d / f"{name}.csv").write_text(_csv(rows))
    (d / f"{name}.json").write_text(_dump(payload) + "\n")
    for key, rep in sorted(reports.items()):
        if rep.io:
            (d / f"{name}_{key}_io.csv").write_text(rep.io_csv())


def _emit(fmt: str, text: str, rows, payload) -> None:
    if fmt == "json":
        print(_dump(payload))
    elif fmt == "csv":
        print(_csv(rows), end="")
    else:
        print(text)


def _scenario_payload(res: ScenarioResult, seed: int) -> dict:
    return {"scenario": res.id, "description": res.description, "seed": seed, "passed": res.passed,
            "checks": [c.__dict__ for c in res.checks], "rows": res.rows,
            "reports": {k: r.to_dict() for k, r in sorted(res.reports.items())}}


def _spec_cluster(doc: dict, cal: CalibrationParams) -> ClusterSpec:
    c = doc.get("cluster", "nextgenio")
    if isinstance(c, dict):
        base = ClusterSpec.from_dict(c)
    elif Path(c).suffix:
        base = ex.load_cluster(c)
    else:
        base = ex.load_cluster(ex.data_path("fixtures", f"{c}.json"))
    return cal.cluster(base)


def _spec_profile(p, cal: CalibrationParams) -> ApplicationProfile:
    prof = ApplicationProfile.from_dict(p) if isinstance(p, dict) else ex.load_profile(p)
    return cal.profile(prof)


def run_spec(doc: dict, cal: CalibrationParams, seed: int) -> tuple[str, list, dict, dict]:
    """Run a declarative scenario document; returns (text, rows, payload, reports)."""
    if not isinstance(doc, dict):
        raise InvalidSpec(["scenario document must be a JSON object"])
    cluster = _spec_cluster(doc, cal)
    mp = cal.model_params()
    seed = int(doc.get("seed", seed))
    if "workflow" in doc:
        wf_doc = doc["workflow"]
        wf = WorkflowSpec.from_dict(wf_doc)
        policy = WorkflowPolicy(colocate=bool(doc.get("colocate", True)))
        sched, rep = schedule_workflow(cluster, wf, policy, mp, seed)
        rows = [{"start_s": round(a, 3), "end_s": round(b, 3), "kind": k, "label": lab}
                for a, b, k, lab in sched.timeline()]
        text = "\n".join(f"{r['start_s']:>10.1f}{r['end_s']:>10.1f}  {r['kind']:<10}{r['label']}"
                         for r in rows)
        return text, rows, {"seed": seed, "timeline": rows, "report": rep.to_dict()}, {"workflow": rep}
    configs = {}
    cfg_doc = doc.get("configs", {})
    default = cfg_doc.get("default")
    for n in range(cluster.node_count):
        c = cfg_doc.get(str(n), default)
        if c is not None:
            ms = c.get("memory_space")
            configs[n] = default_config(cluster, c.get("mode", "AppDirect"),
                                        None if ms is None else parse_bytes(ms))
    runs = []
    for j in doc.get("jobs", []):
        runs.append(JobRun(str(j["id"]), _spec_profile(j["profile"], cal), tuple(j["nodes"]),
                           StorageTarget(j.get("storage", "ParallelFs")), float(j.get("start", 0.0))))
    if not runs:
        raise InvalidSpec(["scenario document lists no jobs"])
    rep = Simulation(cluster, tuple(runs), configs or None, seed, mp).run()
    summary = summarize_results(rep)
    return format_summary(summary), summary["jobs"], {"summary": summary, "report": rep.to_dict()}, {"jobs": rep}


def cmd_simulate(args) -> int:
    cal = _load_calibration(args.calibration)
    target = args.scenario
    if target in SCENARIO_IDS:
        res = run_scenario(target, cal, args.seed, Context.bundled(args.seed))
        payload = _scenario_payload(res, args.seed)
        _emit(args.format, res.text, res.rows, payload)
        _write_outputs(args.out, target, res.rows, payload, res.reports)
        return EXIT_OK
    if not Path(target).exists():
        _err(f"unknown scenario {target!r}; valid ids: {', '.join(SCENARIO_IDS)} (or a spec path)")
        return EXIT_INPUT
    text, rows, payload, reports = run_spec(_read_doc(target), cal, args.seed)
    _emit(args.format, text, rows, payload)
    _write_outputs(args.out, Path(target).stem, rows, payload, reports)
    return EXIT_OK


# --- calibrate -----------------------------------------------------------------

def cmd_calibrate(args) -> int:
    targets = load_targets(args.targets)
    if args.check_only:
        cal = _load_calibration(args.calibration)
        res = goodness_of_fit(cal, targets)
    else:
        present = {t.group for t in targets}
        groups = [g for g in GROUPS if g.name in present]
        skipped = [g.name for g in GROUPS if g.name not in present]
        if skipped:
            _warn(f"no targets for group(s) {', '.join(skipped)}; their values are kept")
        base = CalibrationParams.load(args.calibration) if args.calibration else None
        cal = calibrate_all(targets, base=base, groups=groups,
                            log=lambda m: print(m, file=sys.stderr))
        res = list(cal.residuals)
        out = Path(args.out or ".")
        path = out if out.suffix == ".json" else out / "calibration.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        cal.save(path)
        print(f"wrote {path}", file=sys.stderr)
    rows = [r.__dict__ for r in res]
    _emit(args.format, residual_table(res), rows, {"residuals": rows})
    if not all(r.passed for r in res):
        _err("some targets are outside their tolerance")
        return EXIT_MODEL
    return EXIT_OK


# --- reproduce -----------------------------------------------------------------

def cmd_reproduce(args) -> int:
    ids = list(SCENARIO_IDS) if args.scenario == "all" else [args.scenario]
    bad = [i for i in ids if i not in SCENARIO_IDS]
    if bad:
        _err(f"unknown scenario {bad[0]!r}; valid ids: all, {', '.join(SCENARIO_IDS)}")
        return EXIT_INPUT
    cal = _load_calibration(args.calibration)
    ctx = Context.bundled(args.seed)
    results = [run_scenario(i, cal, args.seed, ctx) for i in ids]
    rows = []
    for res in results:
        for c in res.checks:
            rows.append({"scenario": res.id, "check": c.name, "expected": c.expected,
                         "actual": c.actual, "passed": c.passed, "source": c.source})
    lines = [f"{'scenario':<16}{'result':<8}checks"]
    for res in results:
        n_ok = sum(c.passed for c in res.checks)
        lines.append(f"{res.id:<16}{'PASS' if res.passed else 'FAIL':<8}{n_ok}/{len(res.checks)}")
        for c in res.checks:
            if not c.passed:
                lines.append(f"{'':<16}  FAIL {c.name}: expected {c.expected}, got {c.actual} [{c.source}]")
    lines.append("")
    lines += [f"{r['scenario']:<16}{'ok ' if r['passed'] else 'NO '} {r['check']} "
              f"(expected {r['expected']}, got {r['actual']}; {r['source']})" for r in rows]
    payload = {"seed": args.seed, "passed": all(r.passed for r in results),
               "scenarios": [_scenario_payload(r, args.seed) for r in results]}
    _emit(args.format, "\n".join(lines), rows, payload)
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        (d / "reproduce.csv").write_text(_csv(rows))
        (d / "reproduce.json").write_text(_dump(payload) + "\n")
    return EXIT_OK if payload["passed"] else EXIT_REPRO


# --- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bapmsim", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--out", default=None, help="output directory (calibrate: file or directory)")
    common.add_argument("--format", choices=("json", "text", "csv"), default="text")
    common.add_argument("--calibration", default=None, help="calibration JSON (default: bundled)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("advise", parents=[common], help="recommend a B-APM configuration")
    p.add_argument("profile", help="profile JSON path or bundled profile name")
    p.set_defaults(func=cmd_advise)

    p = sub.add_parser("simulate", parents=[common], help="run a scenario id or a spec file")
    p.add_argument("scenario", help=f"one of {', '.join(SCENARIO_IDS)} or a scenario JSON path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", parents=[common], help="fit model constants to targets")
    p.add_argument("--targets", default=None, help="targets JSON (default: bundled)")
    p.add_argument("--check-only", action="store_true", help="score an existing calibration; no writes")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("reproduce", parents=[common], help="run scenarios against expectations")
    p.add_argument("scenario", help="'all' or a scenario id")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse signals usage errors with 2, which is reserved for model errors here
        return EXIT_INPUT if exc.code == 2 else int(exc.code or 0)
    try:
        return args.func(args)
    except MODEL_ERRORS as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_MODEL
    except INPUT_ERRORS as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
