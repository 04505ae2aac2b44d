"""Discrete-event execution of concurrent jobs on a configured cluster."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np

from ..domain import (
    ApplicationProfile,
    ClusterSpec,
    NodeConfiguration,
    PlatformMode,
    StorageTarget,
    default_config,
)
from ..errors import AllocationConflict, InsufficientCapacity, OutOfMemory
from ..iomodel import (
    IorAccess,
    ParallelFsServer,
    ephemeralfs_throughput,
    fsdax_job_write_time,
    objectstore_write_throughput,
)
from ..memmodel import step_compute_time
from ..params import ModelParams
from .events import EventKind, EventQueue
from .report import IoRecord, JobResult, ResidencyEvent, SimReport


@dataclass(frozen=True)
class JobRun:
    id: str
    profile: ApplicationProfile
    nodes: tuple[int, ...]
    storage: StorageTarget = StorageTarget.PARALLEL_FS
    start: float = 0.0


@dataclass(frozen=True)
class PowerLoss:
    time: float
    nodes: frozenset[int]


@dataclass(frozen=True)
class Simulation:
    """Immutable description of one simulation run; call :meth:`run`."""
    cluster: ClusterSpec
    jobs: tuple[JobRun, ...]
    configs: Mapping[int, NodeConfiguration] | NodeConfiguration | None = None
    seed: int = 42
    params: ModelParams = field(default_factory=ModelParams)
    power_losses: tuple[PowerLoss, ...] = ()
    horizon: float = math.inf

    def config(self, node: int) -> NodeConfiguration:
        if isinstance(self.configs, NodeConfiguration):
            return self.configs
        if self.configs and node in self.configs:
            return self.configs[node]
        return default_config(self.cluster)

    def run(self) -> SimReport:
        return _Runner(self).run()


def run_simulation(cluster: ClusterSpec, configs, jobs: Iterable[JobRun], seed: int = 42,
                   params: ModelParams | None = None) -> SimReport:
    return Simulation(cluster, tuple(jobs), configs, seed, params or ModelParams()).run()


def inject_power_loss(sim: Simulation, time: float, nodes: Iterable[int]) -> Simulation:
    """Return a copy of ``sim`` with a power failure on ``nodes`` at ``time``."""
    if time < 0 or time > sim.horizon:
        raise ValueError("power loss must fall inside the simulation horizon")
    loss = PowerLoss(float(time), frozenset(nodes))
    return replace(sim, power_losses=sim.power_losses + (loss,))


def job_rng(seed: int, job_id: str) -> np.random.Generator:
    # one independent stream per job so adding a job never perturbs the others' draws
    return np.random.default_rng([seed, zlib.crc32(job_id.encode())])


class JitterModel:
    """Lognormal multiplier on one job's shared-FS data volume.

    With scope ``"job"`` a single draw is kept for the whole job (a persistently
    slow or fast network path); with ``"request"`` every write draws afresh.
    Node-local paths never consult this.
    """

    def __init__(self, sigma: float, rng: np.random.Generator, scope: str = "job"):
        self.sigma = sigma
        self.rng = rng
        self.scope = scope
        self._fixed: float | None = None

    def multiplier(self) -> float:
        if self.sigma <= 0:
            return 1.0
        if self.scope == "job":
            if self._fixed is None:
                self._fixed = float(self.rng.lognormal(0.0, self.sigma))
            return self._fixed
        return float(self.rng.lognormal(0.0, self.sigma))


class _JobState:
    def __init__(self, run: JobRun, result: JobResult, step_time: float, jitter: JitterModel):
        self.run = run
        self.result = result
        self.step_time = step_time
        self.jitter = jitter
        self.epoch = 0
        self.step = 0
        self.step_start = 0.0
        self.started = False
        self.running = False
        self.done = False
        self.in_flight = None        # (rid, step, index) of the write being served
        self.pending_write = None    # (step, index) waiting for the in-flight one
        self.blocked = False
        self.finishing = False
        self.last_ckpt = 0
        self.write_index = {s: i for i, s in enumerate(run.profile.write_steps())}


class _Runner:
    def __init__(self, sim: Simulation):
        self.sim = sim
        self.cluster = sim.cluster
        self.p = sim.params
        self.q = EventQueue()
        self.server = ParallelFsServer(sim.cluster.parallel_fs)
        self.report = SimReport(seed=sim.seed)
        self.jobs: dict[str, _JobState] = {}
        self.requests: dict[tuple, tuple[str, IoRecord]] = {}
        self._created: set[str] = set()
        self._validate_and_prepare()

    # -- setup ---------------------------------------------------------------

    def _validate_and_prepare(self) -> None:
        seen: dict[int, str] = {}
        fs = self.cluster.parallel_fs
        for run in self.sim.jobs:
            if run.id in self.jobs:
                raise AllocationConflict(f"duplicate job id {run.id!r}")
            if not run.nodes:
                raise AllocationConflict(f"job {run.id!r} has no nodes")
            for n in run.nodes:
                if not 0 <= n < self.cluster.node_count:
                    raise AllocationConflict(f"job {run.id!r}: node {n} outside the cluster")
                if n in seen:
                    raise AllocationConflict(
                        f"node {n} assigned to both {seen[n]!r} and {run.id!r}")
                seen[n] = run.id
            configs = [self.sim.config(n) for n in run.nodes]
            cfg = min(configs, key=lambda c: c.main_memory)
            step_time = step_compute_time(run.profile, cfg, len(run.nodes), self.p.memory,
                                          sockets=self.cluster.sockets_per_node)
            if run.storage is StorageTarget.FSDAX and run.profile.does_io:
                written = sum(run.profile.write_bytes(i)
                              for i in range(len(run.profile.write_steps())))
                for c in configs:
                    if c.appdirect_space <= 0 or not c.namespaces:
                        raise InsufficientCapacity(
                            f"job {run.id!r} writes to fsdax but its nodes have no AppDirect namespace")
                    if written / len(run.nodes) > c.appdirect_space:
                        raise InsufficientCapacity(
                            f"job {run.id!r} writes {written} bytes, more than the AppDirect space")
            result = JobResult(run.id, tuple(run.nodes), self.cluster.cores_per_node,
                               mode=cfg.mode.value, storage=run.storage.value)
            self.jobs[run.id] = _JobState(run, result, step_time, JitterModel(
                fs.jitter_sigma, job_rng(self.sim.seed, run.id), fs.jitter_scope))
            self.q.push(run.start, EventKind.JOB_START, run.id, epoch=0)
        for loss in self.sim.power_losses:
            self.q.push(loss.time, EventKind.POWER_LOSS, None, nodes=tuple(sorted(loss.nodes)))
        if any(c.asymmetric for c in (self.sim.config(n) for n in seen)):
            self.report.notes.append("asymmetric namespace layout across sockets")

    # -- main loop -------------------------------------------------------------

    def run(self) -> SimReport:
        while True:
            te = self.q.peek_time()
            ts = self.server.next_event_time()
            if te is None and math.isinf(ts):
                break
            if te is None or ts <= te:
                for rid in self.server.step():
                    job_id, _ = self.requests[rid]
                    self.q.push(self.server.now, EventKind.WRITE_COMPLETE, job_id, rid=rid)
                continue
            ev = self.q.pop()
            self.server.advance_to(ev.time)
            getattr(self, "_on_" + ev.kind.name.lower())(ev)
        self._finalize()
        return self.report

    def _finalize(self) -> None:
        r = self.report
        for st in self.jobs.values():
            r.jobs[st.run.id] = st.result
        r.events = [(e.time, e.seq, e.kind.value, e.subject) for e in self.q.dispatched]
        r.pfs_ledger = list(self.server.ledger)
        span = r.makespan
        if span > 0:
            moved = sum((t1 - t0) * bw for t0, t1, bw in self.server.ledger)
            r.utilization["parallel_fs"] = moved / (self.cluster.parallel_fs.aggregate_bw * span)
            busy = sum(j.node_seconds for j in r.jobs.values())
            r.utilization["nodes"] = busy / (self.cluster.node_count * span)
        r.io.sort(key=lambda x: (x.start_s, x.job_id, x.step))

    # -- helpers ---------------------------------------------------------------

    def _location(self, node: int, persistent: bool) -> str:
        if persistent:
            return f"node{node}:appdirect"
        cfg = self.sim.config(node)
        return f"node{node}:{'memory' if cfg.mode is PlatformMode.MEMORY else 'dram'}"

    def _residency(self, t: float, item: str, location: str, event: str) -> None:
        self.report.residency.append(ResidencyEvent(t, item, location, event))

    def _start_step(self, st: _JobState, t: float) -> None:
        st.step_start = t
        self.q.push(t + st.step_time, EventKind.STEP_COMPLETE, st.run.id,
                    epoch=st.epoch, step=st.step + 1)

    def _issue_write(self, st: _JobState, t: float, step: int, index: int) -> None:
        run, prof = st.run, st.run.profile
        nbytes, files = prof.write_bytes(index), prof.write_files()
        rec = IoRecord(run.id, step, run.storage.value, nbytes, files, t, t)
        rid = (run.id, index, st.epoch)
        self.requests[rid] = (run.id, rec)
        st.in_flight = (rid, step, index)
        nodes = len(run.nodes)
        if run.storage is StorageTarget.PARALLEL_FS:
            fs = self.cluster.parallel_fs
            mult = st.jitter.multiplier()
            cap = min(nodes * self.cluster.network_bw, prof.processes * fs.client_stream_bw)
            self.server.submit(rid, nbytes * mult, files, cap=cap)
            return
        if run.storage is StorageTarget.FSDAX:
            cfg = self.sim.config(run.nodes[0])
            cross = any(ns.numa_penalty for ns in cfg.namespaces)
            dur = fsdax_job_write_time(nbytes, files, nodes, cfg.devices(), self.p.fsdax, cross)
        elif run.storage is StorageTarget.EPHEMERAL_FS:
            access = IorAccess.HARD_WRITE if prof.shared_file else IorAccess.EASY_WRITE
            dur = nbytes / ephemeralfs_throughput(nodes, nodes, access, self.p.ephemeral)
        else:
            servers = nodes * self.cluster.sockets_per_node
            dur = nbytes / objectstore_write_throughput(servers, self.p.objectstore)
        self.q.push(t + dur, EventKind.WRITE_COMPLETE, run.id, rid=rid)

    def _advance(self, st: _JobState, t: float) -> None:
        """The current step is finished (including any blocking write)."""
        st.result.step_times.append(t - st.step_start)
        st.blocked = False
        if st.step >= st.run.profile.steps:
            if st.in_flight is not None:
                st.finishing = True
            else:
                self._end(st, t)
        else:
            self._start_step(st, t)

    def _end(self, st: _JobState, t: float) -> None:
        st.done, st.running = True, False
        st.result.end = t
        for n in st.run.nodes:
            self._residency(t, f"{st.run.id}:state", self._location(n, False), "released")
        self.q.push(t, EventKind.JOB_END, st.run.id)

    # -- handlers --------------------------------------------------------------

    def _on_job_start(self, ev) -> None:
        st = self.jobs[ev.subject]
        if ev.data["epoch"] != st.epoch or st.done:
            return
        if not st.started:
            st.started = True
            st.result.start = ev.time
        st.running = True
        for n in st.run.nodes:
            self._residency(ev.time, f"{st.run.id}:state", self._location(n, False), "created")
        if st.run.profile.steps == 0:
            self._end(st, ev.time)
            return
        self._start_step(st, ev.time)

    def _on_step_complete(self, ev) -> None:
        st = self.jobs[ev.subject]
        if ev.data["epoch"] != st.epoch:
            return
        st.step = ev.data["step"]
        index = st.write_index.get(st.step)
        if index is None:
            self._advance(st, ev.time)
            return
        if not st.run.profile.async_io_servers:
            st.blocked = True
            self._issue_write(st, ev.time, st.step, index)
        elif st.in_flight is not None:
            st.blocked = True
            st.pending_write = (st.step, index)
        else:
            self._issue_write(st, ev.time, st.step, index)
            self._advance(st, ev.time)

    def _on_write_complete(self, ev) -> None:
        rid = ev.data["rid"]
        job_id, rec = self.requests.pop(rid)
        st = self.jobs[job_id]
        if rid[2] != st.epoch:
            return
        rec.end_s = ev.time
        if st.run.storage is StorageTarget.PARALLEL_FS:
            rec.binding = self.server.binding_term(rid)
        self.report.io.append(rec)
        _, step, index = st.in_flight
        st.in_flight = None
        item = f"{job_id}:ckpt" if st.run.profile.checkpoint else f"{job_id}:out"
        if item not in self._created:
            self._created.add(item)
            locs = (["parallel_fs"] if st.run.storage is StorageTarget.PARALLEL_FS
                    else [self._location(n, True) for n in st.run.nodes])
            for loc in locs:
                self._residency(ev.time, item, loc, "created")
        if st.run.profile.checkpoint:
            st.last_ckpt = max(st.last_ckpt, step)
        if not st.run.profile.async_io_servers:
            self._advance(st, ev.time)
            return
        if st.pending_write is not None:
            pstep, pindex = st.pending_write
            st.pending_write = None
            self._issue_write(st, ev.time, pstep, pindex)
            self._advance(st, ev.time)
        elif st.finishing:
            st.finishing = False
            self._end(st, ev.time)

    def _on_power_loss(self, ev) -> None:
        t = ev.time
        lost = set(ev.data["nodes"])
        reboot = self.cluster.reboot_seconds
        for st in self.jobs.values():
            if not lost.intersection(st.run.nodes) or st.done:
                continue
            if not st.running:
                # not started yet: its nodes are down until the reboot completes
                if st.run.start < t + reboot:
                    st.epoch += 1
                    self.q.push(t + reboot, EventKind.JOB_START, st.run.id, epoch=st.epoch)
                continue
            st.epoch += 1
            if st.in_flight is not None:
                rid = st.in_flight[0]
                self.server.cancel(rid)
                self.requests.pop(rid, None)
            st.in_flight = st.pending_write = None
            st.blocked = st.finishing = st.running = False
            resume = st.last_ckpt if st.run.profile.checkpoint else 0
            st.result.recomputed_steps += st.step - resume
            st.result.restarts += 1
            # the interrupted step's partial time is charged to the lost work
            st.step = resume
            for n in st.run.nodes:
                self._residency(t, f"{st.run.id}:state", self._location(n, False), "lost")
            self.q.push(t + reboot, EventKind.JOB_START, st.run.id, epoch=st.epoch)
        for n in sorted(lost):
            self.q.push(t + reboot, EventKind.REBOOT_COMPLETE, f"node{n}")

    def _on_reboot_complete(self, ev) -> None:
        pass

    def _on_job_end(self, ev) -> None:
        pass

    def _on_stage_complete(self, ev) -> None:
        pass
