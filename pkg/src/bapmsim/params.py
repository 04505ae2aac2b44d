"""Bundle of model constants consumed by the simulator."""

from __future__ import annotations

from dataclasses import dataclass, field

from .iomodel import EphemeralFsParams, FsdaxParams, ObjectStoreParams
from .memmodel import MemoryParams
from .units import GB, MB


@dataclass(frozen=True)
class ModelParams:
    memory: MemoryParams = field(default_factory=MemoryParams)
    fsdax: FsdaxParams = field(default_factory=lambda: FsdaxParams(
        bw_per_device=4.75 * GB, meta_cost_per_file=0.0, numa_cross_penalty=1.25))
    ephemeral: EphemeralFsParams = field(default_factory=lambda: EphemeralFsParams(
        chunk_size=512 * 1024, per_node_read_bw=7.0 * GB, per_node_write_bw=6.0 * GB,
        network_cap=12.5e9, shared_file_serialization=0.05, hard_read_factor=0.35))
    objectstore: ObjectStoreParams = field(default_factory=lambda: ObjectStoreParams(
        per_server_bw=2.5 * GB, scaling_efficiency=0.95))
    # staging copies are chunked; only used for reporting granularity
    staging_chunk: int = 64 * MB
