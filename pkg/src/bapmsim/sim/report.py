"""Simulation reports and summary statistics."""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import asdict, dataclass, field
from typing import Any

IO_CSV_COLUMNS = ("job_id", "step", "path", "bytes", "files", "start_s", "end_s")


@dataclass
class IoRecord:
    job_id: str
    step: int
    path: str
    bytes: int
    files: int
    start_s: float
    end_s: float
    # which term finished last on the shared file system: "data" or "metadata"
    binding: str = ""


@dataclass
class ResidencyEvent:
    time: float
    item: str
    location: str
    event: str


@dataclass
class JobResult:
    id: str
    nodes: tuple[int, ...]
    cores_per_node: int
    start: float = 0.0
    end: float = 0.0
    step_times: list[float] = field(default_factory=list)
    restarts: int = 0
    recomputed_steps: int = 0
    mode: str = ""
    storage: str = ""

    @property
    def wallclock(self) -> float:
        return self.end - self.start

    @property
    def node_seconds(self) -> float:
        return len(self.nodes) * self.wallclock

    @property
    def core_seconds(self) -> float:
        return self.node_seconds * self.cores_per_node

    @property
    def mean_step(self) -> float:
        return statistics.fmean(self.step_times) if self.step_times else 0.0


@dataclass
class DatasetLedger:
    id: str
    size: int
    produced: int = 0
    staged_in: int = 0
    staged_out: int = 0
    discarded: int = 0
    persisted: int = 0

    @property
    def balance(self) -> int:
        """Bytes still resident on compute nodes (stage-out copies, it does not move)."""
        return self.produced + self.staged_in - self.discarded


@dataclass
class SimReport:
    seed: int
    jobs: dict[str, JobResult] = field(default_factory=dict)
    io: list[IoRecord] = field(default_factory=list)
    residency: list[ResidencyEvent] = field(default_factory=list)
    datasets: dict[str, DatasetLedger] = field(default_factory=dict)
    utilization: dict[str, float] = field(default_factory=dict)
    pfs_ledger: list[tuple[float, float, float]] = field(default_factory=list)
    events: list[tuple[float, int, str, str | None]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def makespan(self) -> float:
        if not self.jobs:
            return 0.0
        return max(j.end for j in self.jobs.values()) - min(j.start for j in self.jobs.values())

    def lost_items(self) -> set[str]:
        return {r.item for r in self.residency if r.event == "lost"}

    def io_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(IO_CSV_COLUMNS)
        for r in self.io:
            w.writerow([r.job_id, r.step, r.path, r.bytes, r.files,
                        f"{r.start_s:.6f}", f"{r.end_s:.6f}"])
        return buf.getvalue()

    def to_dict(self) -> dict[str, Any]:
        jobs = {}
        for k, j in self.jobs.items():
            d = asdict(j)
            d.update(wallclock=j.wallclock, node_seconds=j.node_seconds,
                     core_seconds=j.core_seconds)
            jobs[k] = d
        return {
            "seed": self.seed,
            "makespan": self.makespan,
            "jobs": jobs,
            "datasets": {k: asdict(v) for k, v in self.datasets.items()},
            "utilization": self.utilization,
            "residency": [asdict(r) for r in self.residency],
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def spread_stats(values: list[float]) -> dict[str, float]:
    """Variability of an ensemble under the candidate definitions."""
    if not values:
        return {"n": 0, "mean": 0.0, "min": 0.0, "max": 0.0,
                "range_over_mean": 0.0, "max_over_mean": 0.0, "half_range_over_mean": 0.0}
    mean = statistics.fmean(values)
    lo, hi = min(values), max(values)
    return {
        "n": len(values),
        "mean": mean,
        "min": lo,
        "max": hi,
        "range_over_mean": (hi - lo) / mean if mean else 0.0,
        "max_over_mean": (hi - mean) / mean if mean else 0.0,
        "half_range_over_mean": (hi - lo) / (2 * mean) if mean else 0.0,
    }


def summarize_results(report: SimReport) -> dict[str, Any]:
    """Per-job step statistics, resource usage and ensemble spread."""
    rows = []
    for jid in sorted(report.jobs):
        j = report.jobs[jid]
        steps = j.step_times or [0.0]
        rows.append({
            "job_id": jid,
            "nodes": len(j.nodes),
            "wallclock_s": j.wallclock,
            "mean_step_s": statistics.fmean(steps),
            "min_step_s": min(steps),
            "max_step_s": max(steps),
            "node_seconds": j.node_seconds,
            "core_seconds": j.core_seconds,
            "restarts": j.restarts,
            "recomputed_steps": j.recomputed_steps,
        })
    bandwidth: dict[str, float] = {}
    for path in sorted({r.path for r in report.io}):
        recs = [r for r in report.io if r.path == path]
        t0 = min(r.start_s for r in recs)
        t1 = max(r.end_s for r in recs)
        total = sum(r.bytes for r in recs)
        bandwidth[path] = total / (t1 - t0) if t1 > t0 else 0.0
    binding: dict[str, int] = {}
    for r in report.io:
        if r.binding:
            binding[r.binding] = binding.get(r.binding, 0) + 1
    return {
        "jobs": rows,
        "spread": spread_stats([j.wallclock for j in report.jobs.values()]),
        "node_seconds": sum(j.node_seconds for j in report.jobs.values()),
        "core_seconds": sum(j.core_seconds for j in report.jobs.values()),
        "aggregate_bandwidth": bandwidth,
        "pfs_binding_term": binding,
        "utilization": dict(report.utilization),
        "makespan": report.makespan,
    }


def format_summary(summary: dict[str, Any]) -> str:
    lines = [f"{'job':<16}{'nodes':>6}{'wall(s)':>12}{'mean step':>12}"
             f"{'min step':>11}{'max step':>11}{'node-s':>12}"]
    for r in summary["jobs"]:
        lines.append(f"{r['job_id']:<16}{r['nodes']:>6}{r['wallclock_s']:>12.2f}"
                     f"{r['mean_step_s']:>12.3f}{r['min_step_s']:>11.3f}"
                     f"{r['max_step_s']:>11.3f}{r['node_seconds']:>12.1f}")
    s = summary["spread"]
    lines.append(f"spread: (max-min)/mean={s['range_over_mean']:.3f} "
                 f"(max-mean)/mean={s['max_over_mean']:.3f} "
                 f"(max-min)/2mean={s['half_range_over_mean']:.3f}")
    lines.append(f"node-seconds={summary['node_seconds']:.1f} core-seconds={summary['core_seconds']:.1f}")
    if summary["pfs_binding_term"]:
        lines.append("parallel FS binding term: " + ", ".join(
            f"{k}={v}" for k, v in sorted(summary["pfs_binding_term"].items())))
    return "\n".join(lines)
