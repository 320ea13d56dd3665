import numpy as np
import pytest

from ftmesh.interferometer import MeshConfig, Mode, evaluate, fourier_matrix, objective
from ftmesh.metrics import raw_state_infidelity, raw_unitary_infidelity
from ftmesh.optimize import (
    ABORTED,
    TARGET,
    AllStartsFailed,
    OptimSettings,
    local_minimize,
    multi_start,
)
from ftmesh.sampling import SeedSpec, TargetKind, TargetSpec, haar_state, haar_unitary, planted_target


def reevaluate(config, phases, target):
    out = evaluate(config, phases)
    if config.mode is Mode.UNITARY:
        return raw_unitary_infidelity(target.payload, out)[0]
    return raw_state_infidelity(out, target.payload)[0]


def test_settings_validation():
    with pytest.raises(ValueError):
        OptimSettings(n_starts=0)
    with pytest.raises(ValueError):
        OptimSettings(grad_tolerance=0)
    with pytest.raises(ValueError):
        OptimSettings(infidelity_target=-1)
    assert OptimSettings.for_mode(Mode.UNITARY).n_starts == 30
    assert OptimSettings.for_mode(Mode.STATE).n_starts == 20


def test_start_at_planted_solution():
    config = MeshConfig(4, 5)
    target, phases = planted_target(config, SeedSpec(3))
    res = local_minimize(config, target, phases, OptimSettings())
    assert res.iterations <= 2
    assert res.infidelity <= 1e-14
    assert res.status == TARGET


def test_f2_from_zero_phases_is_stationary():
    # zeros give V = F_2^2 = I, orthogonal to F_2 in the trace inner product
    config = MeshConfig(2, 2)
    f2 = fourier_matrix(2)
    f, g = objective(config, np.zeros(3), f2)
    assert f == pytest.approx(1.0) and np.linalg.norm(g) <= 1e-15


def test_f2_reachable_from_perturbed_zeros():
    config = MeshConfig(2, 2)
    f2 = fourier_matrix(2)
    res = local_minimize(config, f2, np.full(3, 0.1), OptimSettings())
    assert res.infidelity <= 1e-12


def test_monotone_descent():
    config = MeshConfig(4, 4)
    target = haar_unitary(4, SeedSpec(11))
    init = np.random.default_rng(0).uniform(0, 2 * np.pi, config.n_phases)
    res = local_minimize(config, target, init, OptimSettings())
    assert res.infidelity <= res.initial_infidelity
    assert len(res.trace) == res.iterations > 0
    assert all(b <= a for a, b in zip(res.trace, res.trace[1:]))


def test_non_finite_start_is_aborted():
    config = MeshConfig(3, 3)
    init = np.full(config.n_phases, np.nan)
    res = local_minimize(config, haar_unitary(3, SeedSpec(1)), init, OptimSettings())
    assert res.status == ABORTED and not res.converged


def test_all_starts_failed(monkeypatch):
    import ftmesh.optimize as opt

    monkeypatch.setattr(opt, "start_phases", lambda config, seed, k: np.full(config.n_phases, np.inf))
    with pytest.raises(AllStartsFailed) as exc:
        multi_start(MeshConfig(3, 3), haar_unitary(3, SeedSpec(1)), OptimSettings(n_starts=3), SeedSpec(2))
    assert len(exc.value.per_start) == 3
    assert all(s.status == ABORTED for s in exc.value.per_start)


def test_mode_mismatch():
    with pytest.raises(ValueError):
        local_minimize(MeshConfig(3, 3), haar_state(3, SeedSpec(1)), np.zeros(8), OptimSettings())
    with pytest.raises(ValueError):
        multi_start(MeshConfig(3, 3, Mode.STATE), haar_unitary(3, SeedSpec(1)), OptimSettings(), SeedSpec(0))
    with pytest.raises(ValueError):
        multi_start(MeshConfig(4, 3), haar_unitary(3, SeedSpec(1)), OptimSettings(), SeedSpec(0))


def test_planted_recovery_d3_n4():
    config = MeshConfig(3, 4)
    target, _ = planted_target(config, SeedSpec(77))
    res = multi_start(config, target, OptimSettings(n_starts=30), SeedSpec(78))
    assert res.best_infidelity <= 1e-12


def test_result_invariants():
    config = MeshConfig(3, 3)
    target = TargetSpec(TargetKind.HAAR_UNITARY, haar_unitary(3, SeedSpec(2)))
    settings = OptimSettings(n_starts=5, stop_at_target=False)
    res = multi_start(config, target, settings, SeedSpec(3))
    assert len(res.per_start) == 5
    assert res.best_infidelity == min(s.final_infidelity for s in res.per_start)
    assert abs(reevaluate(config, res.best_phases, target) - res.best_infidelity) <= 1e-13
    for s in res.per_start:
        if s.converged and s.status != TARGET:
            _, g = objective(config, res.best_phases, target.payload)
            assert np.linalg.norm(g) <= settings.grad_tolerance


def test_converged_points_are_stationary():
    config = MeshConfig(3, 3)
    target = haar_unitary(3, SeedSpec(2))
    settings = OptimSettings(n_starts=1)
    from ftmesh.optimize import start_phases

    for k in range(8):
        res = local_minimize(config, target, start_phases(config, SeedSpec(4), k), settings)
        assert abs(reevaluate(config, res.phases, TargetSpec(TargetKind.HAAR_UNITARY, target)) - res.infidelity) <= 1e-13
        if res.converged:
            _, g = objective(config, res.phases, target)
            assert res.infidelity <= settings.infidelity_target or np.linalg.norm(g) <= settings.grad_tolerance


def test_substream_determinism():
    config = MeshConfig(3, 3)
    target = haar_unitary(3, SeedSpec(5))
    seed = SeedSpec(6)
    one = multi_start(config, target, OptimSettings(n_starts=1), seed)
    many = multi_start(config, target, OptimSettings(n_starts=30, stop_at_target=False), seed)
    assert one.per_start[0] == many.per_start[0]
    if many.best_start == 0:
        assert np.array_equal(one.best_phases, many.best_phases)


def test_nested_starts_non_increasing():
    config = MeshConfig(3, 3)
    target = haar_unitary(3, SeedSpec(21))
    seed = SeedSpec(22)
    bests = [multi_start(config, target, OptimSettings(n_starts=k), seed).best_infidelity for k in (1, 2, 4, 8)]
    assert all(b <= a for a, b in zip(bests, bests[1:]))


def test_worker_count_does_not_change_result():
    config = MeshConfig(3, 3, )
    target = haar_unitary(3, SeedSpec(40))
    settings = OptimSettings(n_starts=6)
    a = multi_start(config, target, settings, SeedSpec(41), jobs=1)
    b = multi_start(config, target, settings, SeedSpec(41), jobs=3)
    assert a.per_start == b.per_start
    assert np.array_equal(a.best_phases, b.best_phases)
    assert a.best_infidelity == b.best_infidelity


def test_d_layer_scheme_has_failures_at_d3():
    # a nonzero fraction of Haar targets stay above 1e-4 with N = d at d = 3
    config = MeshConfig(3, 3)
    bad = 0
    for i in range(40):
        res = multi_start(config, haar_unitary(3, SeedSpec(500, (i,))), OptimSettings(n_starts=30), SeedSpec(501, (i,)))
        bad += res.best_infidelity >= 1e-4
    assert bad > 0


def test_state_mode_prepares_haar_state():
    config = MeshConfig(5, 3, Mode.STATE)
    target = haar_state(5, SeedSpec(9))
    res = multi_start(config, target, OptimSettings.for_mode(Mode.STATE), SeedSpec(10))
    assert res.best_infidelity <= 1e-12


def test_pinned_phases_stay_zero():
    config = MeshConfig(3, 4, Mode.UNITARY, pinned=(2, 3))
    res = multi_start(config, haar_unitary(3, SeedSpec(1)), OptimSettings(n_starts=3), SeedSpec(2))
    assert res.best_phases[2] == 0 and res.best_phases[3] == 0
