"""Multi-start BFGS minimization of mesh infidelity over the phase vector."""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ftmesh.interferometer import MeshConfig, Mode, objective
from ftmesh.sampling import SeedSpec, TargetSpec, random_phases

# local-run termination reasons
TARGET = "target"  # infidelity reached settings.infidelity_target
GRADIENT = "gradient"  # gradient norm below settings.grad_tolerance
MAX_ITERATIONS = "max_iterations"
STALLED = "stalled"  # line search could not make progress (precision loss)
ABORTED = "aborted"  # non-finite objective

CONVERGED_STATUSES = (TARGET, GRADIENT)


@dataclass(frozen=True)
class OptimSettings:
    n_starts: int = 30
    max_iterations: int = 10_000
    grad_tolerance: float = 1e-12
    infidelity_target: float = 1e-15
    init_distribution: str = "uniform-2pi"
    # stop launching new starts once one reaches infidelity_target
    stop_at_target: bool = True

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if not (self.grad_tolerance > 0 and self.infidelity_target > 0):
            raise ValueError("tolerances must be strictly positive")
        if self.init_distribution != "uniform-2pi":
            raise ValueError(f"unknown init distribution {self.init_distribution!r}")

    @classmethod
    def for_mode(cls, mode: Mode, **overrides) -> OptimSettings:
        """Defaults with 30 starts for unitary targets and 20 for states."""
        n_starts = 30 if Mode(mode) is Mode.UNITARY else 20
        return cls(**{"n_starts": n_starts, **overrides})

    def to_dict(self) -> dict:
        return {
            "n_starts": self.n_starts,
            "max_iterations": self.max_iterations,
            "grad_tolerance": self.grad_tolerance,
            "infidelity_target": self.infidelity_target,
            "init_distribution": self.init_distribution,
            "stop_at_target": self.stop_at_target,
        }


@dataclass
class LocalResult:
    phases: np.ndarray
    infidelity: float
    iterations: int
    status: str
    initial_infidelity: float
    # best-so-far infidelity after each iteration
    trace: list[float] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status in CONVERGED_STATUSES


@dataclass(frozen=True)
class StartRecord:
    start_index: int
    final_infidelity: float
    iterations: int
    converged: bool
    status: str

    def to_dict(self) -> dict:
        return {
            "start_index": self.start_index,
            "final_infidelity": self.final_infidelity,
            "iterations": self.iterations,
            "converged": self.converged,
            "status": self.status,
        }


@dataclass
class OptimResult:
    best_phases: np.ndarray
    best_infidelity: float
    best_start: int
    per_start: list[StartRecord]
    wall_time_ms: float
    seed: SeedSpec

    @property
    def iterations_total(self) -> int:
        return sum(s.iterations for s in self.per_start)

    def to_dict(self) -> dict:
        return {
            "best_phases": self.best_phases.tolist(),
            "best_infidelity": self.best_infidelity,
            "best_start": self.best_start,
            "per_start": [s.to_dict() for s in self.per_start],
            "wall_time_ms": self.wall_time_ms,
            "seed": self.seed.to_dict(),
        }


class AllStartsFailed(RuntimeError):
    """Every start of a multi-start run aborted."""

    def __init__(self, per_start: list[StartRecord]):
        super().__init__(f"all {len(per_start)} starts aborted")
        self.per_start = per_start


class _NonFinite(Exception):
    pass


def _target_payload(config: MeshConfig, target) -> np.ndarray:
    payload = np.asarray(target.payload if isinstance(target, TargetSpec) else target, dtype=complex)
    want = 2 if config.mode is Mode.UNITARY else 1
    if payload.ndim != want:
        kind = "matrix" if want == 2 else "vector"
        raise ValueError(f"{config.mode.value}-mode mesh needs a target {kind}, got shape {payload.shape}")
    if payload.shape[0] != config.dim or (want == 2 and payload.shape[1] != config.dim):
        raise ValueError(f"target shape {payload.shape} does not match dim {config.dim}")
    return payload


def local_minimize(config: MeshConfig, target, init, settings: OptimSettings) -> LocalResult:
    """BFGS (strong-Wolfe line search, analytic gradient) from ``init``.

    Pinned phases are held at 0. The returned phases are the best point
    evaluated, so the result never exceeds the initial infidelity.
    """
    payload = _target_payload(config, target)
    mask = config.free_mask
    base = np.array(init, dtype=float)
    if base.shape != (config.n_phases,):
        raise ValueError(f"expected {config.n_phases} initial phases, got shape {base.shape}")
    base[~mask] = 0.0

    best = {"f": np.inf, "x": base.copy()}

    def fun(y):
        x = base.copy()
        x[mask] = y
        with np.errstate(invalid="ignore", over="ignore"):
            f, g = objective(config, x, payload)
        if not (np.isfinite(f) and np.all(np.isfinite(g))):
            raise _NonFinite
        if f < best["f"]:
            best["f"], best["x"] = f, x
        return f, g[mask]

    try:
        f0, _ = fun(base[mask])
    except _NonFinite:
        return LocalResult(base, np.nan, 0, ABORTED, np.nan)
    if f0 <= settings.infidelity_target or settings.max_iterations == 0:
        status = TARGET if f0 <= settings.infidelity_target else MAX_ITERATIONS
        return LocalResult(best["x"], f0, 0, status, f0)

    trace: list[float] = []

    def callback(intermediate_result):
        trace.append(best["f"])
        if best["f"] <= settings.infidelity_target:
            raise StopIteration

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = minimize(
                fun,
                base[mask],
                jac=True,
                method="BFGS",
                callback=callback,
                options={"gtol": settings.grad_tolerance, "maxiter": settings.max_iterations, "norm": 2},
            )
    except _NonFinite:
        return LocalResult(best["x"], best["f"], len(trace), ABORTED, f0, trace)

    x = best["x"]
    f, g = objective(config, x, payload)
    if f <= settings.infidelity_target:
        status = TARGET
    elif np.linalg.norm(g[mask]) <= settings.grad_tolerance:
        status = GRADIENT
    elif res.status == 1:
        status = MAX_ITERATIONS
    else:
        status = STALLED
    return LocalResult(x, f, len(trace), status, f0, trace)


def start_phases(config: MeshConfig, seed: SeedSpec, start_index: int) -> np.ndarray:
    """Initial phases of start ``start_index``, drawn on its own substream."""
    return random_phases(config, seed.child(start_index).rng())


def _run_start(config, payload, seed, k, settings) -> LocalResult:
    res = local_minimize(config, payload, start_phases(config, seed, k), settings)
    res.trace = []  # not needed across process boundaries
    return res


def multi_start(
    config: MeshConfig,
    target,
    settings: OptimSettings,
    seed: SeedSpec,
    jobs: int = 1,
) -> OptimResult:
    """Run ``settings.n_starts`` local minimizations and keep the best.

    Start ``k`` draws its initial phases from ``seed.child(k)``. With
    ``stop_at_target`` the run ends at the first start (in index order) that
    reaches the infidelity target; later starts computed by parallel workers
    are discarded, so the result does not depend on ``jobs``.

    Raises:
        AllStartsFailed: if every start aborted on a non-finite objective.
    """
    payload = _target_payload(config, target)
    t0 = time.perf_counter()
    results: list[LocalResult] = []

    def done() -> bool:
        return settings.stop_at_target and any(r.infidelity <= settings.infidelity_target for r in results)

    if jobs <= 1:
        for k in range(settings.n_starts):
            results.append(_run_start(config, payload, seed, k, settings))
            if done():
                break
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            k = 0
            while k < settings.n_starts and not done():
                batch = range(k, min(k + jobs, settings.n_starts))
                results.extend(pool.map(_run_start, *zip(*[(config, payload, seed, i, settings) for i in batch])))
                k = batch.stop
        if settings.stop_at_target:
            for i, r in enumerate(results):
                if r.infidelity <= settings.infidelity_target:
                    results = results[: i + 1]
                    break

    per_start = [
        StartRecord(k, float(r.infidelity), r.iterations, r.converged, r.status) for k, r in enumerate(results)
    ]
    ok = [k for k, r in enumerate(results) if r.status != ABORTED]
    if not ok:
        raise AllStartsFailed(per_start)
    best = min(ok, key=lambda k: (results[k].infidelity, k))
    return OptimResult(
        best_phases=results[best].phases,
        best_infidelity=float(results[best].infidelity),
        best_start=best,
        per_start=per_start,
        wall_time_ms=(time.perf_counter() - t0) * 1e3,
        seed=seed,
    )
