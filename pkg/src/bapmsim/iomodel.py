"""Service-time models for node-local fsdax, the shared parallel file system,
an ephemeral distributed file system and a direct-access object store."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, fields
from enum import Enum
from typing import Any, Hashable, Iterable, Mapping, Sequence

from .domain import ParallelFsSpec
from .errors import InvalidSpec


def _from_dict(cls, d: Mapping[str, Any]):
    names = {f.name for f in fields(cls)}
    return cls(**{k: v for k, v in d.items() if k in names})


@dataclass(frozen=True)
class FsdaxParams:
    bw_per_device: float
    meta_cost_per_file: float = 0.0
    numa_cross_penalty: float = 1.0

    def __post_init__(self):
        v = []
        if self.bw_per_device <= 0:
            v.append("bw_per_device must be > 0")
        if self.meta_cost_per_file < 0:
            v.append("meta_cost_per_file must be >= 0")
        if self.numa_cross_penalty < 1:
            v.append("numa_cross_penalty must be >= 1")
        if v:
            raise InvalidSpec(v)

    from_dict = classmethod(_from_dict)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class EphemeralFsParams:
    chunk_size: int
    per_node_read_bw: float
    per_node_write_bw: float
    network_cap: float
    shared_file_serialization: float = 1.0
    hard_read_factor: float = 1.0

    def __post_init__(self):
        v = []
        if self.chunk_size <= 0:
            v.append("chunk_size must be > 0")
        for f in ("per_node_read_bw", "per_node_write_bw", "network_cap"):
            if getattr(self, f) <= 0:
                v.append(f"{f} must be > 0")
        for f in ("shared_file_serialization", "hard_read_factor"):
            if not 0 < getattr(self, f) <= 1:
                v.append(f"{f} must be in (0, 1]")
        if v:
            raise InvalidSpec(v)

    from_dict = classmethod(_from_dict)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ObjectStoreParams:
    per_server_bw: float
    scaling_efficiency: float = 1.0

    def __post_init__(self):
        v = []
        if self.per_server_bw <= 0:
            v.append("per_server_bw must be > 0")
        if not 0 < self.scaling_efficiency <= 1:
            v.append("scaling_efficiency must be in (0, 1]")
        if v:
            raise InvalidSpec(v)

    from_dict = classmethod(_from_dict)

    def to_dict(self):
        return asdict(self)


# --- node-local fsdax -------------------------------------------------------

def fsdax_write_time(bytes_per_device: float, files: int, cross_numa: bool,
                     p: FsdaxParams) -> float:
    penalty = p.numa_cross_penalty if cross_numa else 1.0
    return bytes_per_device / (p.bw_per_device / penalty) + files * p.meta_cost_per_file


def fsdax_job_write_time(total_bytes: float, total_files: int, nodes: int, devices_per_node: int,
                         p: FsdaxParams, cross_numa: bool = False) -> float:
    """All devices of all nodes are written in parallel; data and files split evenly."""
    devices = nodes * max(1, devices_per_node)
    return fsdax_write_time(total_bytes / devices, math.ceil(total_files / devices), cross_numa, p)


# --- shared parallel file system --------------------------------------------

def contention_factor(n: int, beta: float) -> float:
    """Aggregate throughput degradation with ``n`` concurrent writers."""
    return 1.0 / (1.0 + beta * max(0, n - 1))


class ParallelFsServer:
    """Fluid model of the shared file system.

    Data transfers share ``aggregate_bw * d(n)`` equally (each capped by its client
    network limit). Metadata operations queue FIFO; the head is served at
    ``metadata_ops_per_second * d(q)`` with ``q`` the queue depth. A request
    completes once both its data and its metadata are done.
    """

    _EPS = 1e-12

    def __init__(self, fs: ParallelFsSpec):
        self.fs = fs
        self.now = 0.0
        self._data: dict[Hashable, list[float]] = {}   # id -> [remaining bytes, cap]
        self._meta: deque[list] = deque()               # [id, remaining ops]
        self._open: dict[Hashable, float] = {}          # id -> submit time
        # piecewise-constant aggregate delivered bandwidth: (t0, t1, bytes/s)
        self.ledger: list[tuple[float, float, float]] = []
        self.peak_writers = 0
        self.data_done: dict[Hashable, float] = {}
        self.meta_done: dict[Hashable, float] = {}

    def __len__(self) -> int:
        return len(self._open)

    def active_writers(self) -> int:
        return sum(1 for rem, _ in self._data.values() if rem > 0)

    def _data_rates(self) -> dict[Hashable, float]:
        active = [k for k, (rem, _) in self._data.items() if rem > 0]
        n = len(active)
        if n == 0:
            return {}
        share = self.fs.aggregate_bw * contention_factor(n, self.fs.contention_beta) / n
        return {k: min(share, self._data[k][1]) for k in active}

    def _meta_rate(self) -> float:
        q = len(self._meta)
        return self.fs.metadata_ops_per_second * contention_factor(q, self.fs.contention_beta)

    def submit(self, rid: Hashable, nbytes: float, ops: float, cap: float = math.inf) -> None:
        if rid in self._open:
            raise ValueError(f"duplicate request id {rid!r}")
        self._open[rid] = self.now
        self._data[rid] = [float(nbytes), float(cap)]
        if nbytes <= 0:
            self.data_done[rid] = self.now
        if ops > 0:
            self._meta.append([rid, float(ops)])
        self.peak_writers = max(self.peak_writers, self.active_writers())

    def next_event_time(self) -> float:
        """Time of the next data or metadata completion, ``inf`` if idle."""
        t = math.inf
        for k, r in self._data_rates().items():
            t = min(t, self.now + self._data[k][0] / r)
        if self._meta:
            t = min(t, self.now + self._meta[0][1] / self._meta_rate())
        if math.isinf(t) and self._open:
            # requests with nothing left to do complete immediately
            t = self.now
        return t

    def advance_to(self, t: float) -> None:
        """Move time forward; the caller guarantees ``t <= next_event_time()``."""
        dt = t - self.now
        if dt < 0:
            raise ValueError("time cannot move backwards")
        if dt > 0:
            rates = self._data_rates()
            mrate = self._meta_rate()
            total = sum(rates.values())
            if total > 0:
                self.ledger.append((self.now, t, total))
            for k, r in rates.items():
                self._data[k][0] = max(0.0, self._data[k][0] - r * dt)
            if self._meta:
                self._meta[0][1] = max(0.0, self._meta[0][1] - mrate * dt)
        self.now = t

    def step(self) -> list[Hashable]:
        """Advance to the next internal event; return ids of requests completed there."""
        t = self.next_event_time()
        if math.isinf(t):
            return []
        rates = self._data_rates()
        finishing_data = [k for k, r in rates.items() if self.now + self._data[k][0] / r <= t]
        finishing_meta = bool(self._meta) and (
            self.now + self._meta[0][1] / self._meta_rate() <= t)
        self.advance_to(t)
        for k in finishing_data:
            self._data[k][0] = 0.0
            self.data_done[k] = t
        if finishing_meta:
            self._meta[0][1] = 0.0
        while self._meta and self._meta[0][1] <= self._EPS:
            self.meta_done[self._meta.popleft()[0]] = t
        in_meta = {m[0] for m in self._meta}
        done = [k for k in self._open if self._data[k][0] <= 0 and k not in in_meta]
        for k in done:
            del self._open[k]
            del self._data[k]
        return done

    def cancel(self, rid: Hashable) -> None:
        """Drop an in-flight request (its client went away)."""
        self._open.pop(rid, None)
        self._data.pop(rid, None)
        self._meta = deque(m for m in self._meta if m[0] != rid)

    def binding_term(self, rid: Hashable) -> str:
        d = self.data_done.get(rid, self._open.get(rid, 0.0))
        m = self.meta_done.get(rid)
        return "metadata" if m is not None and m > d else "data"

    def drain(self) -> dict[Hashable, float]:
        """Run until idle; return completion time of every open request."""
        out = {}
        while self._open:
            for k in self.step():
                out[k] = self.now
        return out


def parallelfs_service(requests: Sequence[tuple[float, int, float]], fs: ParallelFsSpec,
                       caps: Sequence[float] | None = None,
                       multipliers: Sequence[float] | None = None) -> list[float]:
    """Completion seconds (measured from each request's start) for a static batch.

    ``requests`` holds ``(bytes, files, start_time)``; each file costs one metadata op.
    ``multipliers`` scale each request's service demand (jitter).
    """
    n = len(requests)
    caps = list(caps) if caps is not None else [math.inf] * n
    mult = list(multipliers) if multipliers is not None else [1.0] * n
    order = sorted(range(n), key=lambda i: (requests[i][2], i))
    server = ParallelFsServer(fs)
    finish: dict[int, float] = {}
    for i in order:
        start = requests[i][2]
        while server.next_event_time() <= start:
            for k in server.step():
                finish[k] = server.now
            if not len(server):
                break
        server.advance_to(max(start, server.now))
        b, files, _ = requests[i]
        server.submit(i, b * mult[i], files * mult[i], caps[i])
    finish.update(server.drain())
    return [finish[i] - requests[i][2] for i in range(n)]


# --- ephemeral distributed file system --------------------------------------

class IorAccess(str, Enum):
    EASY_READ = "EasyRead"
    EASY_WRITE = "EasyWrite"
    HARD_READ = "HardRead"
    HARD_WRITE = "HardWrite"


def ephemeralfs_layout(file_size: int, node_count: int, p: EphemeralFsParams) -> tuple[int, ...]:
    """Owner node of every chunk; chunks are placed round-robin."""
    if node_count < 1:
        raise ValueError("node_count must be >= 1")
    chunks = math.ceil(file_size / p.chunk_size)
    return tuple(i % node_count for i in range(chunks))


def ephemeralfs_throughput(clients: int, nodes: int, access: IorAccess | str,
                           p: EphemeralFsParams) -> float:
    if nodes < 1:
        raise ValueError("nodes must be >= 1")
    access = IorAccess(access)
    read = access in (IorAccess.EASY_READ, IorAccess.HARD_READ)
    per_node = p.per_node_read_bw if read else p.per_node_write_bw
    base = min(nodes * per_node, clients * p.network_cap)
    if access is IorAccess.HARD_WRITE:
        return base * p.shared_file_serialization
    if access is IorAccess.HARD_READ:
        return base * p.hard_read_factor
    return base


# --- direct-access object store ---------------------------------------------

def objectstore_write_throughput(server_processes: int, p: ObjectStoreParams) -> float:
    if server_processes < 1:
        raise ValueError("server_processes must be >= 1")
    return (p.per_server_bw * server_processes
            * p.scaling_efficiency ** math.log2(server_processes))


def chunk_loads(layout: Iterable[int], node_count: int) -> list[int]:
    loads = [0] * node_count
    for owner in layout:
        loads[owner] += 1
    return loads
