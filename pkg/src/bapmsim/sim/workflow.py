"""List scheduler for workflows whose components hand data to each other.

Jobs run in dependency order. A consumer prefers the nodes that already hold its
input in AppDirect space (zero-cost handoff); otherwise inputs are staged out to the
parallel file system and back in on the consumer's nodes. Nodes whose platform
configuration must change reboot as soon as they fall idle, and AppDirect data
survives the reboot when it still fits in the new AppDirect space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..domain import ClusterSpec, DatasetHome, JobSpec, PlatformMode, StorageTarget, WorkflowSpec, default_config
from ..errors import InsufficientCapacity
from ..iomodel import (
    IorAccess,
    ephemeralfs_throughput,
    fsdax_job_write_time,
    objectstore_write_throughput,
    parallelfs_service,
)
from ..memmodel import step_compute_time
from ..params import ModelParams
from .events import EventKind, EventQueue
from .report import DatasetLedger, JobResult, ResidencyEvent, SimReport


@dataclass(frozen=True)
class WorkflowPolicy:
    # False forces every handoff through the parallel file system
    colocate: bool = True
    initial_mode: PlatformMode = PlatformMode.APP_DIRECT
    initial_memory_space: int | None = None


@dataclass
class ScheduledJob:
    id: str
    nodes: tuple[int, ...]
    start: float
    end: float
    stage_in_s: float = 0.0
    rebooted: tuple[int, ...] = ()


@dataclass
class StageOp:
    dataset: str
    direction: str          # "out" (nodes -> parallel FS) or "in"
    nodes: tuple[int, ...]
    start: float
    end: float
    bytes: int


@dataclass
class Schedule:
    jobs: dict[str, ScheduledJob] = field(default_factory=dict)
    staging: list[StageOp] = field(default_factory=list)
    reboots: list[tuple[int, float, float]] = field(default_factory=list)   # node, start, end

    @property
    def makespan(self) -> float:
        ends = [j.end for j in self.jobs.values()] + [s.end for s in self.staging]
        return max(ends, default=0.0)

    def reboot_count(self, node: int | None = None) -> int:
        return sum(1 for n, _, _ in self.reboots if node is None or n == node)

    def timeline(self) -> list[tuple[float, float, str, str]]:
        """(start, end, kind, label) rows sorted by start time."""
        rows = [(j.start, j.end, "job", f"{j.id} on {list(j.nodes)}") for j in self.jobs.values()]
        rows += [(s.start, s.end, f"stage-{s.direction}", s.dataset) for s in self.staging]
        rows += [(a, b, "reboot", f"node{n}") for n, a, b in self.reboots]
        return sorted(rows, key=lambda r: (r[0], r[1], r[2], r[3]))


class _Node:
    def __init__(self, config):
        self.config = config
        self.free_at = 0.0
        self.used = 0.0          # AppDirect bytes held by datasets


def _config_key(cfg) -> tuple:
    return cfg.mode, cfg.memory_space


def job_duration(job: JobSpec, cluster: ClusterSpec, config, params: ModelParams) -> float:
    """Wallclock of a job running alone: compute steps plus its own write phases."""
    prof = job.profile
    step = step_compute_time(prof, config, job.nodes, params.memory,
                             sockets=cluster.sockets_per_node)
    total = step * prof.steps
    for i, _ in enumerate(prof.write_steps()):
        nbytes, files = prof.write_bytes(i), prof.write_files()
        if job.storage is StorageTarget.FSDAX:
            total += fsdax_job_write_time(nbytes, files, job.nodes, config.devices(), params.fsdax)
        elif job.storage is StorageTarget.PARALLEL_FS:
            cap = min(job.nodes * cluster.network_bw,
                      prof.processes * cluster.parallel_fs.client_stream_bw)
            total += parallelfs_service([(nbytes, files, 0.0)], cluster.parallel_fs, [cap])[0]
        elif job.storage is StorageTarget.EPHEMERAL_FS:
            access = IorAccess.HARD_WRITE if prof.shared_file else IorAccess.EASY_WRITE
            total += nbytes / ephemeralfs_throughput(job.nodes, job.nodes, access, params.ephemeral)
        else:
            servers = job.nodes * cluster.sockets_per_node
            total += nbytes / objectstore_write_throughput(servers, params.objectstore)
    return total


class _Scheduler:
    def __init__(self, cluster: ClusterSpec, wf: WorkflowSpec, policy: WorkflowPolicy,
                 params: ModelParams, seed: int):
        self.cluster, self.wf, self.policy, self.p = cluster, wf, policy, params
        init = default_config(cluster, policy.initial_mode, policy.initial_memory_space)
        self.nodes = [_Node(init) for _ in range(cluster.node_count)]
        self.schedule = Schedule()
        self.report = SimReport(seed=seed)
        self.q = EventQueue()
        self.pfs_free = 0.0                      # staging is serialized on one channel
        # dataset id -> nodes holding a copy in AppDirect space
        self.copies: dict[str, dict[tuple[int, ...], float]] = {}
        self.on_pfs: dict[str, float] = {}       # dataset id -> time it became available there

    # -- helpers -------------------------------------------------------------

    def _stage_bw(self, n_nodes: int) -> float:
        return min(self.cluster.network_bw * n_nodes, self.cluster.parallel_fs.aggregate_bw)

    def _residency(self, t: float, item: str, location: str, event: str) -> None:
        self.report.residency.append(ResidencyEvent(t, item, location, event))

    def _loc(self, nodes: tuple[int, ...]) -> str:
        return "nodes" + ",".join(map(str, nodes)) + ":appdirect"

    def _stage(self, ds: str, direction: str, nodes: tuple[int, ...], ready: float) -> float:
        size = self.wf.dataset(ds).size
        start = max(ready, self.pfs_free)
        end = start + size / self._stage_bw(len(nodes))
        self.pfs_free = end
        self.schedule.staging.append(StageOp(ds, direction, nodes, start, end, size))
        self.q.push(end, EventKind.STAGE_COMPLETE, ds, direction=direction, nodes=nodes)
        led = self.report.datasets[ds]
        if direction == "out":
            led.staged_out += size
            self.on_pfs[ds] = end
            self._residency(end, ds, "parallel_fs", "staged_out")
        else:
            led.staged_in += size
            self._place(ds, nodes, end)
            self._residency(end, ds, self._loc(nodes), "staged_in")
        return end

    def _place(self, ds: str, nodes: tuple[int, ...], t: float) -> None:
        size = self.wf.dataset(ds).size
        share = size / len(nodes)
        for n in nodes:
            node = self.nodes[n]
            if node.used + share > node.config.appdirect_space:
                raise InsufficientCapacity(
                    f"dataset {ds!r} ({size} bytes) does not fit in the AppDirect space of node {n}")
            node.used += share
        self.copies.setdefault(ds, {})[nodes] = t

    def _drop(self, ds: str, nodes: tuple[int, ...], t: float) -> None:
        size = self.wf.dataset(ds).size
        for n in nodes:
            self.nodes[n].used -= size / len(nodes)
        del self.copies[ds][nodes]
        self.report.datasets[ds].discarded += size
        self._residency(t, ds, self._loc(nodes), "discarded")

    def _ensure_on_pfs(self, ds: str, ready: float) -> float:
        if ds in self.on_pfs:
            return self.on_pfs[ds]
        holders = sorted(self.copies.get(ds, {}).items(), key=lambda kv: (kv[1], kv[0]))
        nodes, t = holders[0]
        return self._stage(ds, "out", nodes, max(ready, t))

    def _pick_nodes(self, job: JobSpec) -> tuple[int, ...]:
        if job.nodes > self.cluster.node_count:
            raise InsufficientCapacity(f"job {job.id!r} needs {job.nodes} nodes")
        chosen: list[int] = []
        if self.policy.colocate:
            inputs = sorted(self.wf.inputs(job.id),
                            key=lambda d: (-self.wf.dataset(d).size, d))
            for ds in inputs:
                for holders in sorted(self.copies.get(ds, {})):
                    for n in holders:
                        if n not in chosen and len(chosen) < job.nodes:
                            chosen.append(n)
        rest = sorted((i for i in range(len(self.nodes)) if i not in chosen),
                      key=lambda i: (self.nodes[i].free_at, i))
        chosen += rest[:job.nodes - len(chosen)]
        return tuple(sorted(chosen))

    # -- main ----------------------------------------------------------------

    def run(self) -> tuple[Schedule, SimReport]:
        wf = self.wf
        for d in wf.datasets:
            self.report.datasets[d.id] = DatasetLedger(d.id, d.size)
        remaining_consumers = {d.id: set(wf.consumers(d.id)) for d in wf.datasets}
        for jid in wf.topological_order():
            job = wf.job(jid)
            nodes = self._pick_nodes(job)
            target = default_config(self.cluster, job.mode, job.memory_space)
            ready = max(self.nodes[n].free_at for n in nodes)
            for ds in wf.inputs(jid):
                prod = self.schedule.jobs[wf.producer(ds)]
                ready = max(ready, prod.end)

            # reconfigure nodes eagerly once they fall idle
            rebooted = []
            for n in nodes:
                node = self.nodes[n]
                if _config_key(node.config) == _config_key(target):
                    continue
                t0 = node.free_at
                # data that would not fit in the new AppDirect space leaves first
                for ds, holders in list(self.copies.items()):
                    for hn in list(holders):
                        if n in hn and target.appdirect_space < node.used:
                            t0 = max(t0, self._ensure_on_pfs(ds, t0))
                            self._drop(ds, hn, t0)
                t1 = t0 + self.cluster.reboot_seconds
                node.config = target
                node.free_at = t1
                self.schedule.reboots.append((n, t0, t1))
                self.q.push(t1, EventKind.REBOOT_COMPLETE, f"node{n}")
                rebooted.append(n)
                ready = max(ready, t1)

            # bring inputs onto the chosen nodes
            stage_in = 0.0
            for ds in wf.inputs(jid):
                local = any(set(h) <= set(nodes) for h in self.copies.get(ds, {}))
                if self.policy.colocate and local:
                    continue
                avail = self._ensure_on_pfs(ds, self.schedule.jobs[wf.producer(ds)].end)
                t0 = max(avail, ready)
                end = self._stage(ds, "in", nodes, t0)
                stage_in += end - t0
                ready = max(ready, end)

            start = ready
            end = start + job_duration(job, self.cluster, target, self.p)
            for n in nodes:
                self.nodes[n].free_at = end
            self.schedule.jobs[jid] = ScheduledJob(jid, nodes, start, end, stage_in, tuple(rebooted))
            self.q.push(start, EventKind.JOB_START, jid)
            self.q.push(end, EventKind.JOB_END, jid)
            res = JobResult(jid, nodes, self.cluster.cores_per_node, start=start, end=end,
                            mode=target.mode.value, storage=job.storage.value)
            self.report.jobs[jid] = res

            # outputs land in the job's AppDirect space
            for ds in wf.outputs(jid):
                self.report.datasets[ds].produced += wf.dataset(ds).size
                self._place(ds, nodes, end)
                self._residency(end, ds, self._loc(nodes), "created")
                if wf.dataset(ds).home is DatasetHome.PARALLEL_FS:
                    # asynchronous stage-out to the dataset's home
                    self._ensure_on_pfs(ds, end)
            # inputs no longer needed by anyone are released from this job's nodes
            for ds in wf.inputs(jid):
                remaining_consumers[ds].discard(jid)
            for ds in wf.inputs(jid):
                if not remaining_consumers[ds] and not wf.keep.get(ds, False):
                    for hn in sorted(self.copies.get(ds, {})):
                        self._drop(ds, hn, end)

        # workflow end: keep-flagged and shared-FS-homed data is persisted, the rest is freed
        t_end = max((j.end for j in self.schedule.jobs.values()), default=0.0)
        for d in sorted(wf.datasets, key=lambda d: d.id):
            if wf.keep.get(d.id, False) or d.home is DatasetHome.PARALLEL_FS:
                self._ensure_on_pfs(d.id, t_end)
                self.report.datasets[d.id].persisted = d.size
                self._residency(self.on_pfs[d.id], d.id, "parallel_fs", "persisted")
            for hn in sorted(self.copies.get(d.id, {})):
                self._drop(d.id, hn, max(t_end, self.on_pfs.get(d.id, 0.0)))

        while len(self.q):
            ev = self.q.pop()
            self.report.events.append((ev.time, ev.seq, ev.kind.value, ev.subject))
        busy = sum(j.end - j.start for j in self.report.jobs.values()
                   for _ in j.nodes)
        span = self.schedule.makespan
        if span > 0:
            self.report.utilization["nodes"] = busy / (span * self.cluster.node_count)
            self.report.utilization["parallel_fs"] = sum(
                s.end - s.start for s in self.schedule.staging) / span
        return self.schedule, self.report


def schedule_workflow(cluster: ClusterSpec, workflow: WorkflowSpec,
                      policy: WorkflowPolicy | None = None, params: ModelParams | None = None,
                      seed: int = 42) -> tuple[Schedule, SimReport]:
    workflow.validate()
    workflow.topological_order()
    return _Scheduler(cluster, workflow, policy or WorkflowPolicy(), params or ModelParams(),
                      seed).run()
