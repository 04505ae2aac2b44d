"""Latency and bandwidth model for DRAM, Memory mode and AppDirect access.

In Memory mode all DRAM acts as a direct-mapped cache in front of B-APM. Bandwidth
is a hit-weighted mixture of the cached rate and the raw media rate.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from enum import Enum
from typing import Any, Mapping

from .domain import ApplicationProfile, NodeConfiguration, PlatformMode, Reuse
from .errors import InvalidSpec, OutOfMemory
from .units import GB


class Medium(str, Enum):
    DRAM = "Dram"
    MEMORY_MODE_CACHED = "MemoryModeCached"
    MEMORY_MODE_UNCACHED = "MemoryModeUncached"
    APP_DIRECT = "AppDirect"


class Op(str, Enum):
    READ = "Read"
    WRITE = "Write"


class Numa(str, Enum):
    LOCAL = "Local"
    REMOTE = "Remote"


class BandwidthMode(str, Enum):
    DRAM = "Dram"
    MEMORY_MODE = "MemoryMode"
    APP_DIRECT = "AppDirect"


@dataclass(frozen=True)
class AccessKind:
    medium: Medium
    op: Op = Op.READ
    numa: Numa = Numa.LOCAL


@dataclass(frozen=True)
class MemoryParams:
    lat_dram_local: float = 80.0
    lat_dram_remote: float = 130.0
    mm_latency_factor: float = 1.10
    ad_latency_local: float = 300.0
    ad_latency_remote: float = 400.0
    bw_dram_read: float = 105.0 * GB
    bw_dram_write: float = 70.0 * GB
    ad_read_ratio: float = 0.5
    ad_write_ratio: float = 0.1
    mm_cached_bw_factor: float = 0.97
    # None: raw media rate equals the AppDirect rate
    media_read_bw: float | None = None
    media_write_bw: float | None = None
    numa_bw_penalty: float = 1.25
    allow_latency_override: bool = False

    def __post_init__(self):
        v = []
        for f in ("lat_dram_local", "lat_dram_remote", "ad_latency_local", "ad_latency_remote"):
            if getattr(self, f) <= 0:
                v.append(f"{f} must be > 0")
        for f in ("ad_read_ratio", "ad_write_ratio", "mm_cached_bw_factor"):
            if not 0 < getattr(self, f) <= 1:
                v.append(f"{f} must be in (0, 1]")
        if self.mm_latency_factor <= 0:
            v.append("mm_latency_factor must be > 0")
        for f in ("bw_dram_read", "bw_dram_write"):
            if getattr(self, f) <= 0:
                v.append(f"{f} must be > 0")
        for f in ("media_read_bw", "media_write_bw"):
            val = getattr(self, f)
            if val is not None and val <= 0:
                v.append(f"{f} must be > 0")
        if not self.allow_latency_override and not 100 <= self.ad_latency_local <= 300:
            v.append("ad_latency_local must lie in [100, 300] ns unless overridden")
        if v:
            raise InvalidSpec(v)

    def dram_bw(self, op: Op) -> float:
        return self.bw_dram_read if op is Op.READ else self.bw_dram_write

    def appdirect_bw(self, op: Op) -> float:
        if op is Op.READ:
            return self.bw_dram_read * self.ad_read_ratio
        return self.bw_dram_write * self.ad_write_ratio

    def media_bw(self, op: Op) -> float:
        explicit = self.media_read_bw if op is Op.READ else self.media_write_bw
        return self.appdirect_bw(op) if explicit is None else explicit

    def cached_bw(self, op: Op) -> float:
        return self.dram_bw(op) * self.mm_cached_bw_factor

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> MemoryParams:
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def idle_latency(kind: AccessKind, p: MemoryParams) -> float:
    """Idle load latency in ns."""
    local = kind.numa is Numa.LOCAL
    dram = p.lat_dram_local if local else p.lat_dram_remote
    ad = p.ad_latency_local if local else p.ad_latency_remote
    if kind.medium is Medium.DRAM:
        return dram
    if kind.medium is Medium.MEMORY_MODE_CACHED:
        return dram * p.mm_latency_factor
    if kind.medium is Medium.APP_DIRECT:
        return ad
    # a miss reads the media and fills the DRAM cache line
    return ad + dram


def dram_cache_hit_fraction(working_set: float, dram_cache: float,
                            reuse: Reuse | str = Reuse.STREAMING) -> float:
    """Fraction of accesses served by the DRAM cache in Memory mode.

    ``Sweep`` models repeated linear passes over the working set: in a direct-mapped
    cache only lines whose index has a single aliasing address survive a pass, so
    the hit rate is (2C - W) / W between C and 2C and zero beyond.
    """
    if dram_cache <= 0:
        raise ValueError("dram_cache must be > 0")
    reuse = Reuse(reuse)
    if working_set <= 0 or working_set <= dram_cache:
        return 1.0
    if reuse is Reuse.SWEEP:
        return max(0.0, (2.0 * dram_cache - working_set) / working_set)
    return min(1.0, dram_cache / working_set)


def effective_bandwidth(mode: BandwidthMode | str, op: Op | str, working_set: float,
                        config: NodeConfiguration, p: MemoryParams, *, sockets: int = 2,
                        reuse: Reuse | str = Reuse.STREAMING,
                        aliasing_pathology: bool = False) -> float:
    """Sustained bandwidth per node in bytes/s."""
    mode, op = BandwidthMode(mode), Op(op)
    if mode is BandwidthMode.DRAM:
        per_socket = p.dram_bw(op)
    elif mode is BandwidthMode.APP_DIRECT:
        per_socket = p.appdirect_bw(op)
    else:
        h = 0.0 if aliasing_pathology else dram_cache_hit_fraction(working_set, config.dram, reuse)
        per_socket = h * p.cached_bw(op) + (1.0 - h) * p.media_bw(op)
    return per_socket * sockets


def main_memory_mode(config: NodeConfiguration) -> BandwidthMode:
    return BandwidthMode.MEMORY_MODE if config.mode is PlatformMode.MEMORY else BandwidthMode.DRAM


def step_compute_time(profile: ApplicationProfile, config: NodeConfiguration, nodes: int,
                      p: MemoryParams, *, sockets: int = 2) -> float:
    """Seconds for one timestep: pure compute plus memory traffic at the node's bandwidth."""
    if nodes < 1:
        raise ValueError("nodes must be >= 1")
    working_set = profile.footprint / nodes
    if working_set > config.main_memory:
        raise OutOfMemory(
            f"{profile.name}: {working_set / GB:.1f} GB per node exceeds "
            f"{config.main_memory / GB:.1f} GB main memory ({config.mode.value} mode)")
    traffic = profile.mem_traffic_per_step * profile.processes / nodes
    if traffic == 0:
        return profile.compute_seconds_per_step
    bw = effective_bandwidth(main_memory_mode(config), Op.READ, working_set, config, p,
                             sockets=sockets, reuse=profile.reuse,
                             aliasing_pathology=profile.aliasing_pathology)
    return profile.compute_seconds_per_step + traffic / bw
