"""Core data types: clusters, node configurations, application profiles and workflows."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Mapping

from .errors import (
    CyclicWorkflow,
    InvalidSpec,
    MemorySpaceUnusable,
    OverCommit,
)
from .units import parse_bytes, parse_rate


class PlatformMode(str, Enum):
    APP_DIRECT = "AppDirect"
    MEMORY = "Memory"


class IoPattern(str, Enum):
    NONE = "None"
    LOCAL = "Local"
    GLOBAL = "Global"
    MIXED = "Mixed"


class Modifiable(str, Enum):
    YES = "Yes"
    UNDESIRABLE = "Undesirable"
    NO = "No"


class Reuse(str, Enum):
    STREAMING = "Streaming"
    RESIDENT = "Resident"
    # repeated linear sweeps over the working set (STREAM-like)
    SWEEP = "Sweep"


class StorageTarget(str, Enum):
    PARALLEL_FS = "ParallelFs"
    FSDAX = "Fsdax"
    EPHEMERAL_FS = "EphemeralFs"
    OBJECT_STORE = "ObjectStore"


class DatasetHome(str, Enum):
    PARALLEL_FS = "ParallelFs"
    NODE_LOCAL = "NodeLocal"


def _enum(cls, value):
    if isinstance(value, cls):
        return value
    for member in cls:
        if value in (member.value, member.name) or str(value).lower() == member.value.lower():
            return member
    raise InvalidSpec([f"{value!r} is not a valid {cls.__name__}"])


@dataclass(frozen=True)
class ParallelFsSpec:
    capacity: int
    aggregate_bw: float
    metadata_ops_per_second: float
    contention_beta: float = 0.0
    jitter_sigma: float = 0.0
    # single-stream client throughput per writing process (inf: unlimited)
    client_stream_bw: float = math.inf
    # "job": one jitter draw per job (persistent path quality); "request": per write
    jitter_scope: str = "job"

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ParallelFsSpec:
        return cls(
            capacity=parse_bytes(d["capacity"]),
            aggregate_bw=parse_rate(d["aggregate_bw"]),
            metadata_ops_per_second=float(d["metadata_ops_per_second"]),
            contention_beta=float(d.get("contention_beta", 0.0)),
            jitter_sigma=float(d.get("jitter_sigma", 0.0)),
            client_stream_bw=(parse_rate(d["client_stream_bw"])
                              if d.get("client_stream_bw") is not None else math.inf),
            jitter_scope=str(d.get("jitter_scope", "job")),
        )

    def violations(self) -> list[str]:
        out = []
        if self.capacity <= 0:
            out.append("parallel_fs.capacity must be > 0")
        if self.aggregate_bw <= 0:
            out.append("parallel_fs.aggregate_bw must be > 0")
        if self.metadata_ops_per_second <= 0:
            out.append("parallel_fs.metadata_ops_per_second must be > 0")
        if self.contention_beta < 0:
            out.append("parallel_fs.contention_beta must be >= 0")
        if self.jitter_sigma < 0:
            out.append("parallel_fs.jitter_sigma must be >= 0")
        if self.client_stream_bw <= 0:
            out.append("parallel_fs.client_stream_bw must be > 0")
        if self.jitter_scope not in ("job", "request"):
            out.append("parallel_fs.jitter_scope must be 'job' or 'request'")
        return out


@dataclass(frozen=True)
class ClusterSpec:
    node_count: int
    sockets_per_node: int
    cores_per_socket: int
    dram_per_node: int
    bapm_per_node: int
    parallel_fs: ParallelFsSpec
    network_bw: float
    reboot_seconds: float = 0.0
    name: str = "cluster"

    @property
    def cores_per_node(self) -> int:
        return self.sockets_per_node * self.cores_per_socket

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ClusterSpec:
        try:
            return cls(
                name=d.get("name", "cluster"),
                node_count=int(d["node_count"]),
                sockets_per_node=int(d["sockets_per_node"]),
                cores_per_socket=int(d["cores_per_socket"]),
                dram_per_node=parse_bytes(d["dram_per_node"]),
                bapm_per_node=parse_bytes(d["bapm_per_node"]),
                parallel_fs=ParallelFsSpec.from_dict(d["parallel_fs"]),
                network_bw=parse_rate(d["network_bw"]),
                reboot_seconds=float(d.get("reboot_seconds", 0.0)),
            )
        except KeyError as exc:
            raise InvalidSpec([f"missing field {exc.args[0]!r}"]) from None

    def with_parallel_fs(self, **changes) -> ClusterSpec:
        return replace(self, parallel_fs=replace(self.parallel_fs, **changes))


def validate_cluster_spec(spec: ClusterSpec) -> ClusterSpec:
    """Return ``spec`` unchanged, or raise InvalidSpec listing every violation."""
    v = []
    for name in ("node_count", "sockets_per_node", "cores_per_socket"):
        if getattr(spec, name) < 1:
            v.append(f"{name} must be >= 1")
    for name in ("dram_per_node", "bapm_per_node"):
        if getattr(spec, name) <= 0:
            v.append(f"{name} must be > 0")
    if spec.network_bw <= 0:
        v.append("network_bw must be > 0")
    if spec.reboot_seconds < 0:
        v.append("reboot_seconds must be >= 0")
    v.extend(spec.parallel_fs.violations())
    if v:
        raise InvalidSpec(v)
    return spec


@dataclass(frozen=True)
class Namespace:
    id: str
    size: int
    # socket index, or "concatenated" for the linearly mapped whole-node device
    socket_affinity: int | str = 0

    @property
    def concatenated(self) -> bool:
        return self.socket_affinity == "concatenated"

    @property
    def numa_penalty(self) -> bool:
        # the concatenated device spans both sockets; locality is lost
        return self.concatenated

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Namespace:
        aff = d.get("socket_affinity", 0)
        if aff != "concatenated":
            aff = int(aff)
        return cls(id=str(d["id"]), size=parse_bytes(d["size"]), socket_affinity=aff)


@dataclass(frozen=True)
class NodeConfiguration:
    mode: PlatformMode
    memory_space: int
    appdirect_space: int
    namespaces: tuple[Namespace, ...] = ()
    dram: int = 0

    @property
    def main_memory(self) -> int:
        return self.memory_space if self.mode is PlatformMode.MEMORY else self.dram

    @property
    def asymmetric(self) -> bool:
        """True when per-socket namespaces differ in size."""
        sizes = {}
        for ns in self.namespaces:
            if not ns.concatenated:
                sizes[ns.socket_affinity] = sizes.get(ns.socket_affinity, 0) + ns.size
        return len(set(sizes.values())) > 1

    def devices(self) -> int:
        return max(1, len(self.namespaces))


def partition_bapm(spec: ClusterSpec, mode: PlatformMode | str, memory_space: int,
                   namespaces: Iterable[Namespace] = ()) -> NodeConfiguration:
    """Split a node's B-APM into Memory and AppDirect space.

    AppDirect space is whatever is left after ``memory_space``. Raises OverCommit if
    the requested memory space plus namespaces do not fit. Reserving memory space
    under AppDirect mode is allowed but emits MemorySpaceUnusable.
    """
    mode = _enum(PlatformMode, mode)
    namespaces = tuple(namespaces)
    memory_space = parse_bytes(memory_space)
    ns_total = sum(ns.size for ns in namespaces)
    if memory_space + ns_total > spec.bapm_per_node:
        raise OverCommit(
            f"memory space {memory_space} + namespaces {ns_total} exceeds "
            f"B-APM capacity {spec.bapm_per_node}")
    bad = [ns.id for ns in namespaces if ns.size <= 0 or (
        not ns.concatenated and not 0 <= ns.socket_affinity < spec.sockets_per_node)]
    if bad:
        raise InvalidSpec([f"namespace {i!r} has invalid size or socket" for i in bad])
    if mode is PlatformMode.APP_DIRECT and memory_space > 0:
        warnings.warn(
            f"{memory_space} bytes of Memory space are inaccessible in AppDirect mode",
            MemorySpaceUnusable, stacklevel=2)
    return NodeConfiguration(
        mode=mode,
        memory_space=memory_space,
        appdirect_space=spec.bapm_per_node - memory_space,
        namespaces=namespaces,
        dram=spec.dram_per_node,
    )


def per_socket_namespaces(spec: ClusterSpec, total: int, prefix: str = "pmem_fsdax") -> list[Namespace]:
    """One fsdax namespace per socket, splitting ``total`` evenly."""
    n = spec.sockets_per_node
    size = total // n
    return [Namespace(f"{prefix}{s}", size, s) for s in range(n)] if size > 0 else []


def default_config(spec: ClusterSpec, mode: PlatformMode | str = PlatformMode.APP_DIRECT,
                   memory_space: int | None = None) -> NodeConfiguration:
    """Pure AppDirect (all B-APM as per-socket namespaces) or pure Memory mode.

    With an explicit ``memory_space`` the remainder becomes per-socket namespaces.
    """
    mode = _enum(PlatformMode, mode)
    if memory_space is None:
        memory_space = spec.bapm_per_node if mode is PlatformMode.MEMORY else 0
    ns = per_socket_namespaces(spec, spec.bapm_per_node - memory_space)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MemorySpaceUnusable)
        return partition_bapm(spec, mode, memory_space, ns)


def effective_main_memory(config: NodeConfiguration, spec: ClusterSpec) -> int:
    if config.mode is PlatformMode.MEMORY:
        return config.memory_space
    return spec.dram_per_node


@dataclass(frozen=True)
class ApplicationProfile:
    name: str
    processes: int = 1
    mem_footprint_per_process: int = 0
    mem_traffic_per_step: int = 0
    compute_seconds_per_step: float = 0.0
    steps: int = 1
    write_interval: int = 1
    write_bytes_per_process: int = 0
    files_per_write_per_process: int = 0
    io_pattern: IoPattern = IoPattern.NONE
    shared_file: bool = False
    modifiable: Modifiable = Modifiable.NO
    io_perf_critical: bool = False
    memory_intensive: bool = False
    io_intensive: bool = False
    # model knobs beyond the classification columns
    reuse: Reuse = Reuse.STREAMING
    aliasing_pathology: bool = False
    async_io_servers: bool = False
    checkpoint: bool = False
    write_growth_per_process: int = 0

    def __post_init__(self):
        v = []
        if self.processes < 1:
            v.append("processes must be >= 1")
        if self.steps < 0:
            v.append("steps must be >= 0")
        if self.io_pattern is not IoPattern.NONE and self.write_interval < 1:
            v.append("write_interval must be >= 1 when io_pattern is not None")
        for name in ("mem_footprint_per_process", "mem_traffic_per_step",
                     "compute_seconds_per_step", "write_bytes_per_process",
                     "files_per_write_per_process", "write_growth_per_process"):
            if getattr(self, name) < 0:
                v.append(f"{name} must be >= 0")
        if v:
            raise InvalidSpec([f"{self.name}: {m}" for m in v])

    @property
    def footprint(self) -> int:
        return self.mem_footprint_per_process * self.processes

    @property
    def does_io(self) -> bool:
        return self.write_interval >= 1 and (self.write_bytes_per_process > 0
                                             or self.files_per_write_per_process > 0)

    def write_steps(self) -> list[int]:
        """1-based step numbers after which a write phase happens."""
        if not self.does_io:
            return []
        return list(range(self.write_interval, self.steps + 1, self.write_interval))

    def write_bytes(self, index: int) -> int:
        """Total bytes of the ``index``-th (0-based) write across all processes."""
        per_proc = self.write_bytes_per_process + index * self.write_growth_per_process
        return per_proc * self.processes

    def write_files(self) -> int:
        return self.files_per_write_per_process * self.processes

    def with_(self, **changes) -> ApplicationProfile:
        return replace(self, **changes)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ApplicationProfile:
        if not isinstance(d, Mapping):
            raise InvalidSpec(["profile must be a JSON object"])
        if "name" not in d:
            raise InvalidSpec(["missing field 'name'"])
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise InvalidSpec([f"unknown profile field {k!r}" for k in unknown])
        kw: dict[str, Any] = dict(d)
        for name in ("mem_footprint_per_process", "mem_traffic_per_step",
                     "write_bytes_per_process", "write_growth_per_process"):
            if name in kw:
                kw[name] = parse_bytes(kw[name])
        for name, enum in (("io_pattern", IoPattern), ("modifiable", Modifiable), ("reuse", Reuse)):
            if name in kw:
                kw[name] = _enum(enum, kw[name])
        for name in ("processes", "steps", "write_interval", "files_per_write_per_process"):
            if name in kw:
                kw[name] = int(kw[name])
        return cls(**kw)

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for k in self.__dataclass_fields__:
            v = getattr(self, k)
            out[k] = v.value if isinstance(v, Enum) else v
        return out


@dataclass(frozen=True)
class DatasetSpec:
    id: str
    size: int
    home: DatasetHome = DatasetHome.NODE_LOCAL

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> DatasetSpec:
        return cls(id=str(d["id"]), size=parse_bytes(d["size"]),
                   home=_enum(DatasetHome, d.get("home", "NodeLocal")))


@dataclass(frozen=True)
class JobSpec:
    """A workflow component: a profile run on ``nodes`` nodes in a platform mode."""
    id: str
    profile: ApplicationProfile
    nodes: int = 1
    mode: PlatformMode = PlatformMode.APP_DIRECT
    memory_space: int | None = None
    storage: StorageTarget = StorageTarget.FSDAX

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> JobSpec:
        ms = d.get("memory_space")
        return cls(
            id=str(d["id"]),
            profile=ApplicationProfile.from_dict(d["profile"]),
            nodes=int(d.get("nodes", 1)),
            mode=_enum(PlatformMode, d.get("mode", "AppDirect")),
            memory_space=None if ms is None else parse_bytes(ms),
            storage=_enum(StorageTarget, d.get("storage", "Fsdax")),
        )


@dataclass(frozen=True)
class WorkflowSpec:
    jobs: tuple[JobSpec, ...]
    datasets: tuple[DatasetSpec, ...]
    # (producer job, dataset, consumer job or None for a sink dataset)
    edges: tuple[tuple[str, str, str | None], ...]
    keep: Mapping[str, bool] = field(default_factory=dict)

    def job(self, job_id: str) -> JobSpec:
        for j in self.jobs:
            if j.id == job_id:
                return j
        raise KeyError(job_id)

    def dataset(self, ds_id: str) -> DatasetSpec:
        for d in self.datasets:
            if d.id == ds_id:
                return d
        raise KeyError(ds_id)

    def producer(self, ds_id: str) -> str:
        return next(p for p, d, _ in self.edges if d == ds_id)

    def inputs(self, job_id: str) -> list[str]:
        return sorted({d for _, d, c in self.edges if c == job_id})

    def outputs(self, job_id: str) -> list[str]:
        return sorted({d for p, d, _ in self.edges if p == job_id})

    def consumers(self, ds_id: str) -> list[str]:
        return sorted({c for _, d, c in self.edges if d == ds_id and c is not None})

    def topological_order(self) -> list[str]:
        """Kahn's algorithm with lexicographic tie-breaking."""
        ids = [j.id for j in self.jobs]
        preds: dict[str, set[str]] = {i: set() for i in ids}
        for p, _, c in self.edges:
            if c is not None:
                preds[c].add(p)
        order: list[str] = []
        ready = sorted(i for i in ids if not preds[i])
        remaining = {i: set(s) for i, s in preds.items()}
        while ready:
            cur = ready.pop(0)
            order.append(cur)
            for i in ids:
                if cur in remaining[i]:
                    remaining[i].discard(cur)
                    if not remaining[i] and i not in order and i not in ready:
                        ready.append(i)
            ready.sort()
        if len(order) != len(ids):
            stuck = sorted(set(ids) - set(order))
            raise CyclicWorkflow(f"workflow has a dependency cycle through {stuck}")
        return order

    def validate(self) -> WorkflowSpec:
        v = []
        job_ids = [j.id for j in self.jobs]
        if len(set(job_ids)) != len(job_ids):
            v.append("duplicate job ids")
        ds_ids = {d.id for d in self.datasets}
        for d in self.datasets:
            if d.size < 0:
                v.append(f"dataset {d.id!r} has negative size")
        for p, d, c in self.edges:
            if p not in job_ids:
                v.append(f"edge producer {p!r} is not a job")
            if c is not None and c not in job_ids:
                v.append(f"edge consumer {c!r} is not a job")
            if d not in ds_ids:
                v.append(f"edge dataset {d!r} is not declared")
        for d in ds_ids:
            producers = {p for p, dd, _ in self.edges if dd == d}
            if len(producers) != 1:
                v.append(f"dataset {d!r} has {len(producers)} producers, expected 1")
        if v:
            raise InvalidSpec(v)
        self.topological_order()
        return self

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> WorkflowSpec:
        edges = tuple((e[0], e[1], e[2] if len(e) > 2 else None) for e in d["edges"])
        return cls(
            jobs=tuple(JobSpec.from_dict(j) for j in d["jobs"]),
            datasets=tuple(DatasetSpec.from_dict(x) for x in d["datasets"]),
            edges=edges,
            keep={k: bool(v) for k, v in d.get("keep", {}).items()},
        ).validate()
