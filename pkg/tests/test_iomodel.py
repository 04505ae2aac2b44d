from __future__ import annotations

import math

import pytest

from bapmsim.domain import ParallelFsSpec
from bapmsim.iomodel import (
    EphemeralFsParams,
    FsdaxParams,
    IorAccess,
    ObjectStoreParams,
    ParallelFsServer,
    chunk_loads,
    contention_factor,
    ephemeralfs_layout,
    ephemeralfs_throughput,
    fsdax_job_write_time,
    fsdax_write_time,
    objectstore_write_throughput,
    parallelfs_service,
)
from bapmsim.units import GB, MB, TB

GIB = GB


@pytest.fixture
def fs():
    return ParallelFsSpec(capacity=TB, aggregate_bw=10 * GB, metadata_ops_per_second=1000.0,
                          contention_beta=0.2)


# --- fsdax -------------------------------------------------------------------

def test_fsdax_empty_write_is_free():
    assert fsdax_write_time(0, 0, False, FsdaxParams(5 * GB, 0.01)) == 0


def test_fsdax_cross_numa_penalty():
    p = FsdaxParams(4 * GB, 0.0, numa_cross_penalty=1.5)
    assert fsdax_write_time(4 * GB, 0, True, p) == pytest.approx(1.5)
    assert fsdax_write_time(4 * GB, 0, False, p) == pytest.approx(1.0)


def test_fsdax_write_phase_matches_interval_one_delta(calibrated, profiles):
    """Per-step fsdax write phase for the single 4-node job: 9.50 - 7.70 = 1.80 s."""
    _, mp, prof = calibrated
    foam = prof["simplefoam"]
    t = fsdax_job_write_time(foam.write_bytes(0), foam.write_files(), 4, 2, mp.fsdax)
    assert t == pytest.approx(1.80, rel=0.2)


def test_fsdax_interval_ten_delta(calibrated):
    _, mp, prof = calibrated
    foam = prof["simplefoam"]
    t = fsdax_job_write_time(foam.write_bytes(0), foam.write_files(), 4, 2, mp.fsdax)
    assert t == pytest.approx((7.87 - 7.70) * 10, rel=0.2)


def test_fsdax_node_ceiling_near_10gb(calibrated):
    _, mp, _ = calibrated
    node_bw = 2 * mp.fsdax.bw_per_device
    assert 10e9 / 2.5 <= node_bw <= 10e9 * 2.5


# --- parallel FS -------------------------------------------------------------

def test_contention_factor():
    assert contention_factor(1, 0.7) == 1.0
    assert contention_factor(5, 0.25) == pytest.approx(0.5)


def test_single_writer_gets_full_bandwidth(fs):
    (t,) = parallelfs_service([(10 * GB, 0, 0.0)], fs)
    assert t == pytest.approx(1.0)


def test_concurrent_writers_share_degraded_bandwidth(fs):
    ts = parallelfs_service([(10 * GB, 0, 0.0)] * 2, fs)
    # 2 writers share 10 GB/s * 1/1.2
    assert ts == pytest.approx([2 * 1.2] * 2)


def test_metadata_queue_is_fifo(fs):
    ts = parallelfs_service([(0, 1000, 0.0), (0, 1000, 0.0)], fs)
    assert ts[0] < ts[1]


def test_completion_is_max_of_data_and_metadata(fs):
    (t,) = parallelfs_service([(10 * GB, 5000, 0.0)], fs)
    assert t == pytest.approx(5.0)


def test_client_cap_limits_a_lone_writer(fs):
    (t,) = parallelfs_service([(10 * GB, 0, 0.0)], fs, caps=[GB])
    assert t == pytest.approx(10.0)


def test_multiplier_scales_demand(fs):
    (t,) = parallelfs_service([(10 * GB, 0, 0.0)], fs, multipliers=[2.0])
    assert t == pytest.approx(2.0)


def test_staggered_starts(fs):
    ts = parallelfs_service([(10 * GB, 0, 0.0), (10 * GB, 0, 5.0)], fs)
    assert ts == pytest.approx([1.0, 1.0])


def test_ledger_never_exceeds_aggregate(fs):
    srv = ParallelFsServer(fs)
    for i in range(6):
        srv.submit(i, (i + 1) * GB, 10 * i)
    srv.drain()
    assert srv.ledger and all(bw <= fs.aggregate_bw * (1 + 1e-12) for _, _, bw in srv.ledger)
    delivered = sum((b - a) * bw for a, b, bw in srv.ledger)
    assert delivered == pytest.approx(sum((i + 1) * GB for i in range(6)))


def test_more_writers_never_finish_sooner(fs):
    base = parallelfs_service([(GB, 50, 0.0)], fs)[0]
    prev = base
    for n in range(2, 8):
        t = parallelfs_service([(GB, 50, 0.0)] * n, fs)[0]
        assert t >= prev - 1e-12
        prev = t


def test_empty_request_completes_immediately(fs):
    assert parallelfs_service([(0, 0, 3.0)], fs) == [0.0]


def test_cancel_drops_request(fs):
    srv = ParallelFsServer(fs)
    srv.submit("a", GB, 10)
    srv.cancel("a")
    assert len(srv) == 0 and math.isinf(srv.next_event_time())


def test_binding_term(fs):
    srv = ParallelFsServer(fs)
    srv.submit("meta", GB, 10_000)
    srv.submit("data", 100 * GB, 0)
    srv.drain()
    assert srv.binding_term("meta") == "metadata"
    assert srv.binding_term("data") == "data"


# --- ephemeral FS ------------------------------------------------------------

@pytest.fixture
def eph():
    return EphemeralFsParams(chunk_size=MB, per_node_read_bw=8 * GB, per_node_write_bw=6 * GB,
                             network_cap=12.5e9, shared_file_serialization=0.05, hard_read_factor=0.35)


def test_layout_perfect_balance(eph):
    assert chunk_loads(ephemeralfs_layout(10 * MB, 10, eph), 10) == [1] * 10


def test_layout_pigeonhole(eph):
    assert chunk_loads(ephemeralfs_layout(12 * MB, 10, eph), 10) == [2, 2] + [1] * 8


def test_layout_is_round_robin(eph):
    assert ephemeralfs_layout(5 * MB, 3, eph) == (0, 1, 2, 0, 1)


def test_single_node_easy_write_is_per_node_rate(eph):
    assert ephemeralfs_throughput(1, 1, IorAccess.EASY_WRITE, eph) == 6 * GB


def test_hard_write_serialized(eph):
    easy = ephemeralfs_throughput(10, 10, "EasyWrite", eph)
    assert ephemeralfs_throughput(10, 10, "HardWrite", eph) == pytest.approx(0.05 * easy)


def test_network_cap_binds(eph):
    p = EphemeralFsParams(MB, 100 * GB, 100 * GB, network_cap=GB)
    assert ephemeralfs_throughput(3, 10, "EasyRead", p) == 3 * GB


@pytest.mark.parametrize("access, gib", [("EasyRead", 71.968), ("EasyWrite", 63.305),
                                         ("HardRead", 25.546), ("HardWrite", 3.310)])
def test_fitted_ior_within_5_percent(calibrated, access, gib):
    _, mp, _ = calibrated
    got = ephemeralfs_throughput(10, 10, access, mp.ephemeral) / GIB
    assert got == pytest.approx(gib, rel=0.05)


# --- object store ------------------------------------------------------------

def test_one_server_identity():
    assert objectstore_write_throughput(1, ObjectStoreParams(3 * GB, 0.9)) == 3 * GB


def test_fitted_objectstore_is_72gib_at_32_processes(calibrated):
    _, mp, _ = calibrated
    assert objectstore_write_throughput(32, mp.objectstore) / GIB == pytest.approx(72.0, rel=1e-6)


@pytest.mark.parametrize("eff", [0.5, 0.75, 0.95, 1.0])
def test_doubling_servers_never_hurts(eff):
    p = ObjectStoreParams(GB, eff)
    for n in range(1, 65):
        one, two = objectstore_write_throughput(n, p), objectstore_write_throughput(2 * n, p)
        assert two >= one * (1 - 1e-12)
