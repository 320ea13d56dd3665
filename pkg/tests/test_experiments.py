import json
import random

import numpy as np
import pytest

from ftmesh.experiments import (
    Band,
    EmptySelection,
    ExperimentPlan,
    ExperimentRecord,
    Family,
    PhaseReduction,
    aggregate_histogram,
    clamped_log10,
    compare_campaigns,
    empty_histogram,
    ft_layers_for,
    read_records,
    reduction_pins,
    render_histogram_svg,
    run_plan,
    summarize,
    verify_record,
    write_histograms_csv,
    write_summary_csv,
)
from ftmesh.interferometer import MeshConfig
from ftmesh.optimize import OptimSettings
from ftmesh.sampling import SeedSpec


def fake(infid, dim=3, ft_layers=4, i=0):
    log10, clamped = clamped_log10(infid)
    return ExperimentRecord(dim, ft_layers, i, "haar-unitary", infid, log10, clamped, 1, 10, 1.0, {})


def small_plan(**kw):
    base = dict(name="t", family=Family.HAAR_UNITARY, dims=(3,), ft_layer_rule="d+1", n_samples=4, master_seed=3,
                optim=OptimSettings(n_starts=5))
    base.update(kw)
    return ExperimentPlan(**base)


def test_layer_rules():
    assert [ft_layers_for(r, 5) for r in ("d", "d+1", "d+2", "3")] == [5, 6, 7, 3]
    with pytest.raises(ValueError):
        ft_layers_for("2d", 3)


@pytest.mark.parametrize(
    "kw",
    [
        dict(family=Family.HAAR_STATE, ft_layer_rule="d+1"),
        dict(family=Family.HAAR_UNITARY, ft_layer_rule="3"),
        dict(family=Family.HAAR_STATE, ft_layer_rule="5"),
        dict(ft_layer_rule="d", phase_reduction=PhaseReduction.PIN_LAST),
        dict(family=Family.HAAR_STATE, ft_layer_rule="3", phase_reduction=PhaseReduction.DROP_RANDOM),
        dict(n_samples=-1),
        dict(dims=(1,)),
    ],
)
def test_invalid_plans(kw):
    with pytest.raises(ValueError):
        small_plan(**kw)


def test_plan_roundtrip():
    plan = small_plan(phase_reduction="pin-inner")
    again = ExperimentPlan.from_dict(json.loads(json.dumps(plan.to_dict())))
    assert again == plan and again.fingerprint == plan.fingerprint


def test_reduction_pins():
    config = MeshConfig(3, 4)  # 5 phase layers, 10 phases
    seed = SeedSpec(1)
    assert reduction_pins(config, "none", seed) == ()
    (i,) = reduction_pins(config, "drop-random", seed)
    assert 0 <= i < 10
    inner = reduction_pins(config, "pin-inner", seed)
    assert len(inner) == 2 and inner[0] % 2 == 0 and 2 <= inner[0] <= 6
    assert reduction_pins(config, "pin-last", seed) == (8, 9)
    layers = {reduction_pins(config, "pin-inner", SeedSpec(s))[0] // 2 for s in range(60)}
    assert layers == {1, 2, 3}


def test_empty_plan():
    assert run_plan(small_plan(n_samples=0)) == []


def test_run_plan_records_reverify():
    plan = small_plan(n_samples=3)
    records = run_plan(plan)
    assert [r.sample_index for r in records] == [0, 1, 2]
    for r in records:
        assert r.ft_layers == 4 and r.target_kind == "haar-unitary"
        assert r.best_infidelity <= 1e-12
        assert abs(verify_record(plan, r) - r.best_infidelity) <= 1e-13
        assert r.log10_infidelity == max(np.log10(r.best_infidelity), -16.0) if r.best_infidelity > 0 else r.clamped


def test_rules_share_targets():
    a = small_plan(ft_layer_rule="d", n_samples=2)
    b = small_plan(ft_layer_rule="d+1", n_samples=2, phase_reduction="pin-last")
    assert a.sample_seed(3, 1) == b.sample_seed(3, 1)


def test_resume_matches_uninterrupted(tmp_path):
    plan = small_plan(dims=(3, 4), n_samples=3)
    full = run_plan(plan, tmp_path / "full.jsonl")
    path = tmp_path / "part.jsonl"
    run_plan(plan, path)
    lines = path.read_text().splitlines()
    # keep header + 2 records + a torn line
    path.write_text("\n".join(lines[:3]) + "\n" + lines[3][:20])
    resumed = run_plan(plan, path)
    assert [r.comparable() for r in resumed] == [r.comparable() for r in full]
    header, on_disk = read_records(path)
    assert header["plan_fingerprint"] == plan.fingerprint
    assert header["generator_name"].startswith("numpy.random.PCG64")
    assert sorted((r.dim, r.sample_index) for r in on_disk) == sorted((r.dim, r.sample_index) for r in full)


def test_resume_rejects_other_plan(tmp_path):
    path = tmp_path / "r.jsonl"
    run_plan(small_plan(n_samples=1), path)
    with pytest.raises(ValueError):
        run_plan(small_plan(n_samples=2), path)


def test_parallel_matches_serial():
    plan = small_plan(n_samples=4)
    a = run_plan(plan, jobs=1)
    b = run_plan(plan, jobs=2)
    assert [r.comparable() for r in a] == [r.comparable() for r in b]


def test_histogram_point_mass():
    h = aggregate_histogram([fake(1e-14, i=i) for i in range(100)], 3, 4)
    (nz,) = np.nonzero(h.counts)
    assert h.counts[nz[0]] == 100
    assert h.bin_edges[nz[0]] == -14.0 and h.bin_edges[nz[0] + 1] == -13.5
    assert len(h.counts) == 32 and h.bin_edges[0] == -16 and h.bin_edges[-1] == 0


def test_histogram_two_values_and_clamp():
    h = aggregate_histogram([fake(1e-2), fake(1e-15), fake(0.0), fake(1.0)], 3, 4)
    assert h.total == 4
    assert h.counts[0] == 1  # clamped zero
    assert h.counts[-1] == 1  # log10(1) = 0 lands in the last bin
    assert np.count_nonzero(h.counts) == 4


def test_histogram_empty_selection():
    with pytest.raises(EmptySelection):
        aggregate_histogram([fake(1e-3)], 4, 4)


def test_histogram_permutation_invariant():
    recs = [fake(10.0 ** random.Random(i).uniform(-17, 0)) for i in range(50)]
    h1 = aggregate_histogram(recs, 3, 4)
    random.Random(0).shuffle(recs)
    assert np.array_equal(h1.counts, aggregate_histogram(recs, 3, 4).counts)
    assert h1.total == 50


def test_summarize_fractions():
    rows = summarize([fake(1e-14) for _ in range(10)], thresholds=(1e-4,))
    assert rows[0].fractions[1e-4] == 0 and rows[0].passed is None
    recs = [fake(1e-2, i=i) for i in range(5)] + [fake(1e-14, i=i) for i in range(5, 100)]
    (row,) = summarize(recs, thresholds=(1e-4,), bands=[Band(1e-4, 0.01, 0.20)])
    assert row.fractions[1e-4] == pytest.approx(0.05)
    assert row.passed is True
    (row,) = summarize(recs, bands=[Band(1e-4, 0.0, 0.0)])
    assert row.passed is False and row.failed_bands
    (row,) = summarize(recs, bands=[Band(1e-4, 0.0, 0.0, dims=(4,))])
    assert row.passed is None


def test_compare_campaigns():
    d_rule = [fake(1e-6, ft_layers=3)]
    dp1 = [fake(1e-15)]
    checks = compare_campaigns(Family.BLOCK_DIAGONAL, {("d", PhaseReduction.NONE): d_rule,
                                                       ("d+1", PhaseReduction.NONE): dp1})
    assert len(checks) == 1 and checks[0].passed and checks[0].value == pytest.approx(9.0)
    checks = compare_campaigns(Family.HAAR_UNITARY, {("d+1", PhaseReduction.NONE): dp1,
                                                     ("d+1", PhaseReduction.PIN_LAST): [fake(1e-16)]})
    assert not checks[0].passed  # both clamp to -16


def test_svg_outputs(tmp_path):
    h = aggregate_histogram([fake(1e-14) for _ in range(7)], 3, 4)
    render_histogram_svg(h, tmp_path / "a.svg")
    render_histogram_svg(h, tmp_path / "b.svg")
    a = (tmp_path / "a.svg").read_bytes()
    assert a == (tmp_path / "b.svg").read_bytes()
    text = a.decode()
    assert text.startswith("<svg") and "log10 infidelity" in text and "count" in text
    assert "href" not in text
    heights = [float(x.split('"')[0]) for x in text.split('height="')[3:35]]
    assert sum(hh > 0 for hh in heights) == 1
    render_histogram_svg(empty_histogram(3, 4), tmp_path / "e.svg")
    text = (tmp_path / "e.svg").read_text()
    assert 'height="0.00"' in text


def test_csv_outputs(tmp_path):
    recs = [fake(1e-14), fake(1e-3)]
    h = aggregate_histogram(recs, 3, 4)
    write_histograms_csv(tmp_path / "h.csv", [({"family": "haar-unitary"}, h)])
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "family,dim,ft_layers,bin_lo,bin_hi,count"
    assert len(lines) == 33 and sum(int(ln.split(",")[-1]) for ln in lines[1:]) == 2
    write_summary_csv(tmp_path / "s.csv", [({"rule": "d+1"}, r) for r in summarize(recs)])
    header = (tmp_path / "s.csv").read_text().splitlines()[0]
    assert header.startswith("rule,dim,ft_layers,n,median_log10,max_infidelity,frac_ge_1e-12")
