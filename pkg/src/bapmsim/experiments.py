"""Builders for the published experiments, shared by calibration and the scenario library."""

from __future__ import annotations

import json
import statistics
from importlib import resources
from pathlib import Path
from typing import Any

from .domain import ApplicationProfile, ClusterSpec, PlatformMode, StorageTarget, default_config
from .iomodel import IorAccess, ephemeralfs_throughput, objectstore_write_throughput
from .memmodel import BandwidthMode, Op, effective_bandwidth, step_compute_time
from .params import ModelParams
from .sim import JobRun, Simulation, SimReport, spread_stats
from .units import GB

PROFILE_NAMES = ("castep", "fdb5", "io500", "monc", "simplefoam", "snappyhexmesh", "stream")


def data_path(*parts: str) -> Path:
    return Path(str(resources.files("bapmsim").joinpath("data", *parts)))


def read_json(path: str | Path) -> Any:
    with open(path) as fh:
        return json.load(fh)


def load_cluster(path: str | Path | None = None) -> ClusterSpec:
    return ClusterSpec.from_dict(read_json(path or data_path("fixtures", "nextgenio.json")))


def load_profile(name_or_path: str | Path) -> ApplicationProfile:
    p = Path(name_or_path)
    if not p.suffix:
        p = data_path("profiles", f"{name_or_path}.json")
    return ApplicationProfile.from_dict(read_json(p))


def bundled_profiles() -> dict[str, ApplicationProfile]:
    return {n: load_profile(n) for n in PROFILE_NAMES}


# --- OpenFOAM write-interval grid ----------------------------------

GRID_INTERVALS = (100, 10, 1)
GRID_JOBS = (1, 5)
GRID_NODES = 4


def table1_report(cluster: ClusterSpec, mp: ModelParams, profile: ApplicationProfile,
                  interval: int, jobs: int, target: StorageTarget | str, seed: int = 42) -> SimReport:
    target = StorageTarget(target)
    prof = profile.with_(write_interval=interval)
    runs = tuple(JobRun(f"foam{k}", prof, tuple(range(GRID_NODES * k, GRID_NODES * (k + 1))), target)
                 for k in range(jobs))
    return Simulation(cluster, runs, default_config(cluster), seed, mp).run()


def table1_step(cluster: ClusterSpec, mp: ModelParams, profile: ApplicationProfile,
                interval: int, jobs: int, target: StorageTarget | str, seed: int = 42) -> float:
    """Mean seconds per timestep across the concurrent jobs."""
    rep = table1_report(cluster, mp, profile, interval, jobs, target, seed)
    return statistics.fmean(j.wallclock / profile.steps for j in rep.jobs.values())


# --- MONC ensemble ------------------------------------------------------------

MONC_JOBS = 10


def monc_report(cluster: ClusterSpec, mp: ModelParams, profile: ApplicationProfile,
                target: StorageTarget | str, seed: int = 42, jobs: int = MONC_JOBS) -> SimReport:
    target = StorageTarget(target)
    runs = tuple(JobRun(f"monc{k:02d}", profile, (k,), target) for k in range(jobs))
    return Simulation(cluster, runs, default_config(cluster), seed, mp).run()


def monc_stats(cluster: ClusterSpec, mp: ModelParams, profile: ApplicationProfile,
               target: StorageTarget | str, seed: int = 42) -> dict[str, float]:
    rep = monc_report(cluster, mp, profile, target, seed)
    return spread_stats([j.wallclock for j in rep.jobs.values()])


# --- snappyHexMesh ------------------------------------------------------------

def snappy_config(cluster: ClusterSpec, mode: PlatformMode | str):
    mode = PlatformMode(mode)
    if mode is PlatformMode.MEMORY:
        return default_config(cluster, PlatformMode.MEMORY, cluster.bapm_per_node)
    return default_config(cluster, PlatformMode.APP_DIRECT)


def snappy_runtime(cluster: ClusterSpec, mp: ModelParams, profile: ApplicationProfile,
                   nodes: int, mode: PlatformMode | str) -> float:
    """Wallclock seconds; raises OutOfMemory when the mesh does not fit."""
    cfg = snappy_config(cluster, mode)
    return profile.steps * step_compute_time(profile, cfg, nodes, mp.memory,
                                             sockets=cluster.sockets_per_node)


# --- STREAM in Memory mode ----------------------------------------------------

STREAM_SIZES = tuple(int(x * GB) for x in (
    1.8, 4, 8, 16, 32, 64, 96, 128, 160, 192, 256, 320, 384, 512, 768, 1024, 1536, 2048, 2816))


def stream_curve(cluster: ClusterSpec, mp: ModelParams, profile: ApplicationProfile,
                 sizes=STREAM_SIZES) -> list[tuple[int, float]]:
    """(working set bytes, bytes/s per node) for a Memory-mode node."""
    cfg = default_config(cluster, PlatformMode.MEMORY, cluster.bapm_per_node)
    return [(w, effective_bandwidth(BandwidthMode.MEMORY_MODE, Op.READ, w, cfg, mp.memory,
                                    sockets=cluster.sockets_per_node, reuse=profile.reuse,
                                    aliasing_pathology=profile.aliasing_pathology))
            for w in sizes]


def dram_cached_level(cluster: ClusterSpec, mp: ModelParams) -> float:
    return mp.memory.cached_bw(Op.READ) * cluster.sockets_per_node


# --- IOR on the ephemeral FS and the object store ---------------------------------------------

def ior_throughput(mp: ModelParams, access: IorAccess | str, nodes: int = 10,
                   clients: int = 10) -> float:
    return ephemeralfs_throughput(clients, nodes, access, mp.ephemeral)


def objectstore_throughput(mp: ModelParams, servers: int = 32) -> float:
    return objectstore_write_throughput(servers, mp.objectstore)


def fsdax_node_bw(mp: ModelParams, devices: int = 2) -> float:
    return mp.fsdax.bw_per_device * devices

