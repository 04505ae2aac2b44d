from __future__ import annotations

import dataclasses
import random

import numpy as np
import pytest

from bapmsim import experiments as ex
from bapmsim.domain import ApplicationProfile, PlatformMode, StorageTarget, default_config
from bapmsim.errors import AllocationConflict, InsufficientCapacity, OutOfMemory
from bapmsim.params import ModelParams
from bapmsim.sim import (
    EventKind,
    EventQueue,
    JitterModel,
    JobRun,
    Simulation,
    inject_power_loss,
    run_simulation,
    spread_stats,
    summarize_results,
)
from bapmsim.sim.report import format_summary
from bapmsim.units import GB, MB, TB


def _io_profile(name="w", steps=6, interval=2, nbytes=256 * MB, files=4, procs=8, compute=1.0, **kw):
    return ApplicationProfile(name, processes=procs, compute_seconds_per_step=compute, steps=steps,
                              write_interval=interval, write_bytes_per_process=nbytes,
                              files_per_write_per_process=files, io_pattern="Local", **kw)


# --- event queue -------------------------------------------------------------

def test_queue_orders_by_time_then_insertion():
    q = EventQueue()
    q.push(2.0, EventKind.JOB_END, "a")
    q.push(1.0, EventKind.JOB_START, "b")
    q.push(1.0, EventKind.STEP_COMPLETE, "c")
    assert [q.pop().subject for _ in range(3)] == ["b", "c", "a"]


def test_queue_rejects_past_events():
    q = EventQueue()
    q.push(5.0, EventKind.JOB_START)
    q.pop()
    with pytest.raises(ValueError):
        q.push(1.0, EventKind.JOB_END)


@pytest.mark.parametrize("seed", range(50))
def test_queue_matches_brute_force_sort(seed):
    rnd = random.Random(seed)
    q = EventQueue()
    n = rnd.randint(1, 20)
    for _ in range(n):
        q.push(float(rnd.randint(0, 5)), rnd.choice(list(EventKind)), str(rnd.random()))
    popped = [q.pop() for _ in range(n)]
    assert popped == sorted(q.pushed, key=lambda e: (e.time, e.seq))
    assert len({e.seq for e in popped}) == n


# --- job runs ----------------------------------------------------------------

def test_zero_io_job_runs_steps_times_compute(cluster):
    p = ApplicationProfile("c", processes=4, compute_seconds_per_step=2.5, steps=7)
    rep = run_simulation(cluster, default_config(cluster), [JobRun("c", p, (0,))])
    assert rep.jobs["c"].wallclock == pytest.approx(17.5)
    assert rep.jobs["c"].step_times == pytest.approx([2.5] * 7)


def test_overlapping_allocation_rejected(cluster):
    p = ApplicationProfile("c", steps=1)
    with pytest.raises(AllocationConflict):
        run_simulation(cluster, None, [JobRun("a", p, (0, 1)), JobRun("b", p, (1, 2))])


def test_node_outside_cluster_rejected(cluster):
    with pytest.raises(AllocationConflict):
        run_simulation(cluster, None, [JobRun("a", ApplicationProfile("c"), (99,))])


def test_out_of_memory_propagates(cluster, profiles):
    with pytest.raises(OutOfMemory):
        run_simulation(cluster, None, [JobRun("s", profiles["snappyhexmesh"], (0,))])


def test_fsdax_needs_appdirect_space(cluster):
    cfg = default_config(cluster, PlatformMode.MEMORY, cluster.bapm_per_node)
    with pytest.raises(InsufficientCapacity):
        run_simulation(cluster, cfg, [JobRun("w", _io_profile(), (0,), StorageTarget.FSDAX)])


def test_node_seconds_is_nodes_times_duration(cluster):
    rep = run_simulation(cluster, None, [JobRun("w", _io_profile(), (0, 1, 2), StorageTarget.FSDAX)])
    j = rep.jobs["w"]
    assert j.node_seconds == pytest.approx(3 * j.wallclock)
    assert j.core_seconds == pytest.approx(48 * j.node_seconds)


def test_blocking_write_inflates_the_step(cluster):
    rep = run_simulation(cluster, None, [JobRun("w", _io_profile(), (0,), StorageTarget.FSDAX)])
    steps = rep.jobs["w"].step_times
    assert steps[0] == pytest.approx(1.0) and steps[1] > 1.0


def test_async_io_overlaps_with_compute(cluster):
    sync = _io_profile(compute=5.0)
    asyn = sync.with_(async_io_servers=True)
    t_sync = run_simulation(cluster, None, [JobRun("w", sync, (0,))]).jobs["w"].wallclock
    t_async = run_simulation(cluster, None, [JobRun("w", asyn, (0,))]).jobs["w"].wallclock
    assert t_async < t_sync


def test_same_seed_gives_identical_bytes(cluster):
    jittery = cluster.with_parallel_fs(jitter_sigma=0.5)
    runs = [JobRun(f"j{k}", _io_profile(), (k,)) for k in range(4)]
    a = run_simulation(jittery, None, runs, seed=7)
    b = run_simulation(jittery, None, runs, seed=7)
    assert a.to_json() == b.to_json() and a.io_csv() == b.io_csv()


def test_different_seed_changes_jittered_runs(cluster):
    jittery = cluster.with_parallel_fs(jitter_sigma=0.5)
    runs = [JobRun("j", _io_profile(), (0,))]
    assert (run_simulation(jittery, None, runs, seed=1).jobs["j"].wallclock
            != run_simulation(jittery, None, runs, seed=2).jobs["j"].wallclock)


def test_jitter_never_touches_node_local_paths(cluster):
    jittery = cluster.with_parallel_fs(jitter_sigma=1.0)
    runs = [JobRun("j", _io_profile(), (0,), StorageTarget.FSDAX)]
    walls = {run_simulation(jittery, None, runs, seed=s).jobs["j"].wallclock for s in range(5)}
    assert len(walls) == 1


def test_jitter_model():
    rng = np.random.default_rng(0)
    job = JitterModel(0.5, rng, "job")
    assert job.multiplier() == job.multiplier() > 0
    req = JitterModel(0.5, np.random.default_rng(0), "request")
    assert req.multiplier() != req.multiplier()
    assert JitterModel(0.0, rng).multiplier() == 1.0


def test_events_dispatch_in_time_seq_order(cluster):
    runs = [JobRun(f"j{k}", _io_profile(steps=4), (k,)) for k in range(3)]
    rep = run_simulation(cluster.with_parallel_fs(jitter_sigma=0.3), None, runs)
    keys = [(t, s) for t, s, _, _ in rep.events]
    assert keys == sorted(keys) and len({s for _, s in keys}) == len(keys)


def test_parallel_fs_never_exceeds_aggregate(cluster):
    runs = [JobRun(f"j{k}", _io_profile(nbytes=GB), (k,)) for k in range(8)]
    rep = run_simulation(cluster, None, runs)
    agg = cluster.parallel_fs.aggregate_bw
    assert rep.pfs_ledger and all(bw <= agg * (1 + 1e-9) for _, _, bw in rep.pfs_ledger)


@pytest.mark.parametrize("sigma", [0.0, 0.4])
def test_adding_a_concurrent_job_never_speeds_others_up(cluster, sigma):
    c = cluster.with_parallel_fs(jitter_sigma=sigma)
    runs = [JobRun(f"j{k}", _io_profile(nbytes=GB, files=200), (k,)) for k in range(5)]
    before = None
    for n in range(1, 6):
        rep = run_simulation(c, None, runs[:n])
        if before is not None:
            for jid, end in before.items():
                assert rep.jobs[jid].end >= end - 1e-9
        before = {jid: j.end for jid, j in rep.jobs.items()}


def test_io_csv_columns(cluster):
    rep = run_simulation(cluster, None, [JobRun("w", _io_profile(), (0,))])
    head, *rows = rep.io_csv().splitlines()
    assert head == "job_id,step,path,bytes,files,start_s,end_s"
    assert len(rows) == 3


# --- power loss --------------------------------------------------------------

def _ckpt_sim(cluster, mode=PlatformMode.MEMORY, memory_space=TB, checkpoint=True):
    prof = ApplicationProfile("ck", processes=48, mem_footprint_per_process=4 * GB,
                              compute_seconds_per_step=10.0, steps=40, write_interval=10,
                              write_bytes_per_process=10 * MB, files_per_write_per_process=1,
                              io_pattern="Local", checkpoint=checkpoint)
    cfg = default_config(cluster, mode, memory_space)
    return Simulation(cluster, (JobRun("ck", prof, (0,), StorageTarget.FSDAX),), {0: cfg})


def test_power_loss_recomputes_steps_since_checkpoint(cluster):
    sim = _ckpt_sim(cluster)
    clean = sim.run()
    t_loss = sum(clean.jobs["ck"].step_times[:25]) + 5.0    # inside step 26
    rep = inject_power_loss(sim, t_loss, {0}).run()
    assert rep.jobs["ck"].recomputed_steps == 25 - 20
    assert rep.jobs["ck"].restarts == 1
    assert len(rep.jobs["ck"].step_times) == 40 + 5


def test_power_loss_without_checkpoint_restarts_from_zero(cluster):
    sim = _ckpt_sim(cluster, checkpoint=False)
    clean = sim.run()
    t_loss = sum(clean.jobs["ck"].step_times[:25]) + 5.0
    rep = inject_power_loss(sim, t_loss, {0}).run()
    assert rep.jobs["ck"].recomputed_steps == 25


def test_power_loss_adds_reboot_delay(cluster):
    sim = _ckpt_sim(cluster)
    clean = sim.run()
    t_loss = sum(clean.jobs["ck"].step_times[:20]) + 1.0
    rep = inject_power_loss(sim, t_loss, {0}).run()
    assert rep.jobs["ck"].end >= clean.jobs["ck"].end + cluster.reboot_seconds


def test_appdirect_data_survives_memory_state_does_not(cluster):
    sim = _ckpt_sim(cluster)
    rep = inject_power_loss(sim, 250.0, {0}).run()
    lost = rep.lost_items()
    assert "ck:state" in lost and "ck:ckpt" not in lost


def test_power_loss_elsewhere_is_harmless(cluster):
    sim = _ckpt_sim(cluster)
    clean = sim.run()
    rep = inject_power_loss(sim, 100.0, {5}).run()
    assert rep.jobs["ck"].wallclock == clean.jobs["ck"].wallclock
    assert not rep.lost_items()


def test_power_loss_outside_horizon_rejected(cluster):
    sim = dataclasses.replace(_ckpt_sim(cluster), horizon=100.0)
    with pytest.raises(ValueError):
        inject_power_loss(sim, 500.0, {0})


# --- summaries ---------------------------------------------------------------

def test_spread_reports_all_candidate_definitions():
    s = spread_stats([547.0, 626.0, 710.0])
    assert s["range_over_mean"] == pytest.approx(163 / 627.667, rel=1e-4)
    assert s["max_over_mean"] == pytest.approx((710 - 627.667) / 627.667, rel=1e-4)
    assert s["half_range_over_mean"] == pytest.approx(s["range_over_mean"] / 2)


def test_summary_prints_both_spread_definitions(cluster):
    runs = [JobRun(f"j{k}", _io_profile(), (k,)) for k in range(3)]
    rep = run_simulation(cluster.with_parallel_fs(jitter_sigma=0.5), None, runs)
    text = format_summary(summarize_results(rep))
    assert "(max-min)/mean=" in text and "(max-mean)/mean=" in text


def test_single_job_spread_is_zero(cluster):
    rep = run_simulation(cluster, None, [JobRun("c", ApplicationProfile("c", steps=3,
                                                                          compute_seconds_per_step=1.0), (0,))])
    s = summarize_results(rep)
    assert s["spread"]["range_over_mean"] == 0.0 and s["spread"]["max_over_mean"] == 0.0


def test_snappy_node_seconds_comparison(calibrated):
    cluster, mp, prof = calibrated
    snappy = prof["snappyhexmesh"]
    two = ex.snappy_runtime(cluster, mp, snappy, 2, "AppDirect")
    one = ex.snappy_runtime(cluster, mp, snappy, 1, "Memory")
    assert 2 * two == pytest.approx(13132, rel=0.1)
    assert one == pytest.approx(11637, rel=0.1)
    assert one < 2 * two
    assert 1 - one / (2 * two) == pytest.approx(0.114, abs=0.02)


def test_summary_reports_node_and_core_seconds(cluster):
    rep = run_simulation(cluster, None, [JobRun("w", _io_profile(), (0, 1))])
    s = summarize_results(rep)
    assert s["node_seconds"] == pytest.approx(2 * rep.jobs["w"].wallclock)
    assert s["core_seconds"] == pytest.approx(48 * s["node_seconds"])
    assert set(s["pfs_binding_term"]) <= {"data", "metadata"}


def test_default_model_params_are_usable(cluster):
    rep = Simulation(cluster, (JobRun("w", _io_profile(), (0,)),), None, 42, ModelParams()).run()
    assert rep.jobs["w"].wallclock > 0
