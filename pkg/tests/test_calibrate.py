from __future__ import annotations

import json
import random

import pytest

from bapmsim.calibrate import (
    GROUPS,
    CalibrationParams,
    Context,
    FitTarget,
    calibrate_all,
    default_calibration,
    fit,
    goodness_of_fit,
    load_targets,
    predict,
)
from bapmsim.errors import InvalidSpec, NoConvergence, Unidentifiable

GROUP = {g.name: g for g in GROUPS}


@pytest.fixture(scope="module")
def targets():
    return load_targets()


def _group_targets(targets, name):
    return [t for t in targets if t.group == name]


def test_zero_free_params_is_identity(ctx, cal, targets):
    r = fit(_group_targets(targets, "objectstore"), [], {}, cal, ctx=ctx)
    assert r.params == cal


def test_more_params_than_targets_is_unidentifiable(ctx, targets):
    g = GROUP["ephemeral"]
    with pytest.raises(Unidentifiable) as e:
        fit(_group_targets(targets, "ephemeral")[:3], g.params, g.bounds, group="ephemeral", ctx=ctx)
    assert "ephemeral" in str(e.value)


def test_unreachable_target_does_not_converge(ctx):
    t = FitTarget("x", 1e6 * 1024 ** 3, "B/s", "objectstore_throughput", {"servers": 32}, 0.01)
    g = GROUP["objectstore"]
    with pytest.raises(NoConvergence):
        fit([t], g.params, g.bounds, ctx=ctx)


def test_stated_ratios_are_fixed(ctx, cal, targets):
    base = default_calibration(ctx.cluster, ctx.profiles)
    for name in ("memory.mm_latency_factor", "memory.ad_read_ratio", "memory.ad_write_ratio"):
        assert cal.info[name].provenance == "paper-ratio"
        assert cal[name] == base[name]
        with pytest.raises(ValueError):
            fit(_group_targets(targets, "objectstore"), [name], {name: (0.0, 1.0)}, cal, ctx=ctx)


def test_stated_ratio_values():
    base = default_calibration()
    assert base["memory.mm_latency_factor"] == pytest.approx(1.1)
    assert base["memory.ad_read_ratio"] == pytest.approx(0.5)
    assert base["memory.ad_write_ratio"] == pytest.approx(0.1)


def test_residuals_invariant_to_target_order(ctx, cal, targets):
    analytic = [t for t in targets if t.group in ("ephemeral", "objectstore")]
    shuffled = list(analytic)
    random.Random(3).shuffle(shuffled)
    assert goodness_of_fit(cal, analytic, ctx) == goodness_of_fit(cal, shuffled, ctx)


def test_fit_invariant_to_target_order(ctx, targets):
    g = GROUP["ephemeral"]
    tg = _group_targets(targets, "ephemeral")
    a = fit(tg, g.params, g.bounds, ctx=ctx, group="ephemeral")
    b = fit(tg[::-1], g.params, g.bounds, ctx=ctx, group="ephemeral")
    assert a.params.values == b.params.values


def _synthetic(truth, targets, ctx):
    return [FitTarget(t.id, predict(truth, t, ctx), t.units, t.model, t.args, t.tolerance, group=t.group)
            for t in targets]


@pytest.mark.parametrize("name", ["objectstore", "ephemeral", "snappy"])
def test_round_trip_recovers_parameters(ctx, cal, targets, name):
    """Fitting targets generated from known parameters recovers them within 1%."""
    g = GROUP[name]
    synth = _synthetic(cal, _group_targets(targets, name), ctx)
    start = default_calibration(ctx.cluster, ctx.profiles)
    start = start.updated({k: v for k, v in cal.values.items() if k not in g.params})
    r = fit(synth, g.params, g.bounds, start, group=name, ctx=ctx, grid=g.grid)
    for p in g.params:
        assert r.params[p] == pytest.approx(cal[p], rel=0.01), p
    assert all(abs(x.rel_error) < 1e-3 for x in r.residuals)


def test_round_trip_fsdax(ctx, cal, targets):
    g = GROUP["fsdax"]
    synth = _synthetic(cal, _group_targets(targets, "fsdax"), ctx)
    start = cal.updated({"fsdax.bw_per_device": 8 * 1024 ** 3, "fsdax.meta_cost_per_file": 0.01,
                         "profiles.simplefoam.compute_seconds_per_step": 7.5})
    r = fit(synth, g.params, g.bounds, start, group="fsdax", ctx=ctx, grid=3)
    for p in g.params:
        assert r.params[p] == pytest.approx(cal[p], rel=0.01), p


def test_fitted_params_record_provenance(ctx, targets):
    g = GROUP["objectstore"]
    r = fit(_group_targets(targets, "objectstore"), g.params, g.bounds, ctx=ctx, group="objectstore")
    info = r.params.info["objectstore.per_server_bw"]
    assert info.provenance == "fitted" and info.targets == ("fdb5.write",)


def test_calibrate_all_runs_groups_in_order(ctx, targets):
    groups = [GROUP["objectstore"], GROUP["ephemeral"]]
    logs = []
    tg = [t for t in targets if t.group in ("objectstore", "ephemeral")]
    out = calibrate_all(tg, ctx=ctx, groups=groups, log=logs.append)
    assert [line.split("]")[0][1:] for line in logs] == ["objectstore", "ephemeral"]
    assert len(out.residuals) == len(tg) and all(r.passed for r in out.residuals)


def test_save_load_round_trip(tmp_path, cal):
    path = tmp_path / "cal.json"
    cal.save(path)
    back = CalibrationParams.load(path)
    assert back.values == cal.values
    assert back.info == cal.info
    assert back.residuals == cal.residuals
    assert back.jitter_scope == cal.jitter_scope


def test_unknown_parameter_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"params": {"nope": {"value": 1}}}))
    with pytest.raises(InvalidSpec):
        CalibrationParams.load(path)


def test_bad_target_rejected():
    with pytest.raises(InvalidSpec):
        FitTarget("t", 1.0, "s", "no_such_model")
    with pytest.raises(InvalidSpec):
        FitTarget("t", 1.0, "s", "objectstore_throughput", tolerance=0)


def test_bundled_calibration_meets_every_target(cal, targets):
    res = goodness_of_fit(cal, targets, Context.bundled())
    bad = [r.id for r in res if not r.passed]
    assert not bad, bad
