"""Monte Carlo campaigns over random targets, with persisted records, histograms and summaries."""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ftmesh.interferometer import MeshConfig, Mode, evaluate
from ftmesh.metrics import raw_state_infidelity, raw_unitary_infidelity
from ftmesh.optimize import AllStartsFailed, OptimSettings, multi_start
from ftmesh.sampling import GENERATOR_NAME, SeedSpec, TargetKind, haar_target

SCHEMA_VERSION = 1
LOG10_FLOOR = -16.0
BIN_WIDTH = 0.5


class Family(str, enum.Enum):
    HAAR_UNITARY = "haar-unitary"
    BLOCK_DIAGONAL = "block-diagonal"
    HAAR_STATE = "state"

    @property
    def target_kind(self) -> TargetKind:
        return {
            Family.HAAR_UNITARY: TargetKind.HAAR_UNITARY,
            Family.BLOCK_DIAGONAL: TargetKind.BLOCK_DIAGONAL,
            Family.HAAR_STATE: TargetKind.HAAR_STATE,
        }[self]

    @property
    def mode(self) -> Mode:
        return Mode.STATE if self is Family.HAAR_STATE else Mode.UNITARY

    @property
    def code(self) -> int:
        # first element of every sample's seed stream path
        return list(Family).index(self)


class PhaseReduction(str, enum.Enum):
    NONE = "none"
    DROP_RANDOM = "drop-random"
    PIN_INNER = "pin-inner"
    PIN_LAST = "pin-last"


UNITARY_RULES = ("d", "d+1", "d+2")
STATE_RULES = ("2", "3", "4")


def ft_layers_for(rule: str, d: int) -> int:
    """Number of Fourier layers a rule prescribes in dimension ``d``."""
    if rule in UNITARY_RULES:
        return d + UNITARY_RULES.index(rule)
    if rule.isdigit():
        return int(rule)
    raise ValueError(f"unknown layer rule {rule!r}")


@dataclass(frozen=True)
class ExperimentPlan:
    """One campaign: a target family, a layer rule and a list of dimensions.

    ``optim`` defaults to 30 starts for unitary families and 20 for states.
    """

    name: str
    family: Family
    dims: tuple[int, ...]
    ft_layer_rule: str
    n_samples: int
    master_seed: int = 0
    phase_reduction: PhaseReduction = PhaseReduction.NONE
    optim: OptimSettings | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "phase_reduction", PhaseReduction(self.phase_reduction))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.optim is None:
            object.__setattr__(self, "optim", OptimSettings.for_mode(self.family.mode))
        self.validate()

    def validate(self):
        if self.family is Family.HAAR_STATE:
            if self.ft_layer_rule not in STATE_RULES:
                raise ValueError(f"state campaigns take a fixed layer count in {STATE_RULES}")
        elif self.ft_layer_rule not in UNITARY_RULES:
            raise ValueError(f"unitary campaigns take a layer rule in {UNITARY_RULES}")
        if self.phase_reduction is not PhaseReduction.NONE:
            if self.family is Family.HAAR_STATE or self.ft_layer_rule != "d+1":
                raise ValueError("phase reduction is only defined for unitary campaigns with rule d+1")
        if self.n_samples < 0:
            raise ValueError("n_samples must be >= 0")
        if any(d < 2 for d in self.dims):
            raise ValueError("dimensions must be >= 2")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "family": self.family.value,
            "dims": list(self.dims),
            "ft_layer_rule": self.ft_layer_rule,
            "n_samples": self.n_samples,
            "master_seed": self.master_seed,
            "phase_reduction": self.phase_reduction.value,
            "optim": self.optim.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentPlan:
        data = dict(data)
        data["optim"] = OptimSettings(**data["optim"])
        data["dims"] = tuple(data["dims"])
        return cls(**data)

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def sample_seed(self, d: int, sample_index: int) -> SeedSpec:
        """Seed of one sample. Depends on family, d and index only, so different
        rules and reductions see identical targets."""
        return SeedSpec(self.master_seed, (self.family.code, d, sample_index))

    def mesh_config(self, d: int, sample_seed: SeedSpec) -> MeshConfig:
        n = ft_layers_for(self.ft_layer_rule, d)
        config = MeshConfig(d, n, self.family.mode)
        return MeshConfig(d, n, self.family.mode, reduction_pins(config, self.phase_reduction, sample_seed.child(2)))


def reduction_pins(config: MeshConfig, reduction: PhaseReduction, seed: SeedSpec) -> tuple[int, ...]:
    """Phase indices a reduction strategy holds at zero.

    drop-random pins one uniformly chosen free phase; pin-inner pins the
    d-1 phases of one uniformly chosen layer strictly between the first and
    last; pin-last pins the output layer.
    """
    reduction = PhaseReduction(reduction)
    if reduction is PhaseReduction.NONE:
        return ()
    rng = seed.rng()
    last = config.n_phase_layers - 1
    if reduction is PhaseReduction.DROP_RANDOM:
        return (int(rng.integers(config.n_phases)),)
    if reduction is PhaseReduction.PIN_INNER:
        if last < 2:
            raise ValueError("pin-inner needs at least one inner phase layer")
        layer = int(rng.integers(1, last))
    else:
        layer = last
    sl = config.layer_slice(layer)
    return tuple(range(sl.start, sl.stop))


@dataclass
class ExperimentRecord:
    dim: int
    ft_layers: int
    sample_index: int
    target_kind: str
    best_infidelity: float
    log10_infidelity: float
    clamped: bool
    n_starts_used: int
    iterations_total: int
    wall_time_ms: float
    seed: dict
    best_phases: list[float] = field(default_factory=list)
    pinned: list[int] = field(default_factory=list)
    failed: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> ExperimentRecord:
        return cls(**json.loads(line))

    def comparable(self) -> dict:
        """Record content minus timing, for reproducibility checks."""
        out = asdict(self)
        out.pop("wall_time_ms")
        return out


def clamped_log10(x: float) -> tuple[float, bool]:
    if x > 0 and math.log10(x) >= LOG10_FLOOR:
        return math.log10(x), False
    return LOG10_FLOOR, True


def run_sample(plan: ExperimentPlan, d: int, sample_index: int) -> ExperimentRecord:
    seed = plan.sample_seed(d, sample_index)
    target = haar_target(plan.family.target_kind, d, seed.child(0))
    config = plan.mesh_config(d, seed)
    try:
        res = multi_start(config, target, plan.optim, seed.child(1))
        best, phases = res.best_infidelity, res.best_phases.tolist()
        n_used, iters, wall, failed = len(res.per_start), res.iterations_total, res.wall_time_ms, False
    except AllStartsFailed as exc:
        best, phases = 1.0, []
        n_used, iters, wall, failed = len(exc.per_start), sum(s.iterations for s in exc.per_start), 0.0, True
    log10, clamped = clamped_log10(best)
    return ExperimentRecord(
        dim=d,
        ft_layers=config.ft_layers,
        sample_index=sample_index,
        target_kind=target.kind.value,
        best_infidelity=best,
        log10_infidelity=log10,
        clamped=clamped,
        n_starts_used=n_used,
        iterations_total=iters,
        wall_time_ms=wall,
        seed=seed.to_dict(),
        best_phases=phases,
        pinned=list(config.pinned),
        failed=failed,
    )


def _run_task(args) -> ExperimentRecord:
    return run_sample(*args)


def _header(plan: ExperimentPlan) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "master_seed": plan.master_seed,
        "generator_name": GENERATOR_NAME,
        "plan_fingerprint": plan.fingerprint,
        "plan": plan.to_dict(),
    }


def read_records(path) -> tuple[dict, list[ExperimentRecord]]:
    """Load a record file. A truncated trailing line (interrupted write) is ignored."""
    with open(path) as fh:
        lines = fh.read().split("\n")
    header = json.loads(lines[0])
    if header.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported record schema {header.get('schema_version')!r}")
    records = []
    for line in lines[1:]:
        if not line.strip():
            continue
        try:
            records.append(ExperimentRecord.from_json(line))
        except (json.JSONDecodeError, TypeError):
            break
    return header, records


def _open_for_append(path: Path, plan: ExperimentPlan) -> tuple[list[ExperimentRecord], object]:
    if path.exists() and path.stat().st_size > 0:
        header, done = read_records(path)
        if header["plan_fingerprint"] != plan.fingerprint:
            raise ValueError(f"{path} was written by a different plan ({header['plan_fingerprint']})")
        # rewrite without any partial trailing line before appending
        with open(path, "w") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for r in done:
                fh.write(r.to_json() + "\n")
        return done, open(path, "a")
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(path, "w")
    fh.write(json.dumps(_header(plan), sort_keys=True) + "\n")
    fh.flush()
    return [], fh


def run_plan(plan: ExperimentPlan, records_path=None, jobs: int = 1, progress=None) -> list[ExperimentRecord]:
    """Run every (dim, sample) of ``plan`` and return records sorted by (dim, sample).

    With ``records_path`` the records are appended to a line-delimited JSON
    file as they finish; samples already present in that file are not rerun.
    ``progress``, if given, is called with each new record.
    """
    plan.validate()
    done: list[ExperimentRecord] = []
    fh = None
    if records_path is not None:
        done, fh = _open_for_append(Path(records_path), plan)
    have = {(r.dim, r.sample_index) for r in done}
    tasks = [(plan, d, i) for d in plan.dims for i in range(plan.n_samples) if (d, i) not in have]

    new: list[ExperimentRecord] = []
    try:
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * jobs)))
                for rec in results:
                    new.append(_emit(rec, fh, progress))
        else:
            for task in tasks:
                new.append(_emit(_run_task(task), fh, progress))
    finally:
        if fh is not None:
            fh.close()
    return sorted(done + new, key=lambda r: (plan.dims.index(r.dim), r.sample_index))


def _emit(rec: ExperimentRecord, fh, progress) -> ExperimentRecord:
    if fh is not None:
        fh.write(rec.to_json() + "\n")
        fh.flush()
    if progress is not None:
        progress(rec)
    return rec


def verify_record(plan: ExperimentPlan, rec: ExperimentRecord) -> float:
    """Regenerate the record's target from its seed and re-evaluate its stored phases."""
    seed = SeedSpec.from_dict(rec.seed)
    target = haar_target(plan.family.target_kind, rec.dim, seed.child(0))
    config = MeshConfig(rec.dim, rec.ft_layers, plan.family.mode)
    out = evaluate(config, np.asarray(rec.best_phases))
    if config.mode is Mode.UNITARY:
        return raw_unitary_infidelity(target.payload, out)[0]
    return raw_state_infidelity(out, target.payload)[0]


# --- histograms -----------------------------------------------------------


@dataclass
class Histogram:
    dim: int
    ft_layers: int
    bin_edges: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def histogram_edges() -> np.ndarray:
    n_bins = int(round(-LOG10_FLOOR / BIN_WIDTH))
    return LOG10_FLOOR + BIN_WIDTH * np.arange(n_bins + 1)


class EmptySelection(ValueError):
    pass


def aggregate_histogram(records: Iterable[ExperimentRecord], dim: int, ft_layers: int) -> Histogram:
    """Counts of clamped log10 infidelity in 0.5-wide bins over [-16, 0].

    Bins are closed on the left; the last bin also holds 0.

    Raises:
        EmptySelection: if no record matches ``(dim, ft_layers)``.
    """
    values = [r.log10_infidelity for r in records if r.dim == dim and r.ft_layers == ft_layers]
    if not values:
        raise EmptySelection(f"no records with dim={dim}, ft_layers={ft_layers}")
    edges = histogram_edges()
    idx = np.floor((np.clip(values, LOG10_FLOOR, 0.0) - LOG10_FLOOR) / BIN_WIDTH).astype(int)
    idx = np.minimum(idx, len(edges) - 2)
    counts = np.bincount(idx, minlength=len(edges) - 1)
    return Histogram(dim, ft_layers, edges, counts)


def empty_histogram(dim: int, ft_layers: int) -> Histogram:
    edges = histogram_edges()
    return Histogram(dim, ft_layers, edges, np.zeros(len(edges) - 1, dtype=int))


def write_histograms_csv(path, rows: Sequence[tuple[dict, Histogram]]):
    """One CSV row per bin; ``rows`` pairs label columns with a histogram."""
    label_keys = list(rows[0][0]) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(label_keys + ["dim", "ft_layers", "bin_lo", "bin_hi", "count"])
        for labels, h in rows:
            for lo, hi, c in zip(h.bin_edges[:-1], h.bin_edges[1:], h.counts):
                w.writerow([labels[k] for k in label_keys] + [h.dim, h.ft_layers, f"{lo:g}", f"{hi:g}", int(c)])


def render_histogram_svg(h: Histogram, path, title: str | None = None):
    """Write a standalone SVG bar chart of ``h`` (log10 infidelity vs count).

    Output depends only on the histogram and title, byte for byte.
    """
    width, height = 520, 340
    left, right, top, bottom = 60, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom
    lo, hi = float(h.bin_edges[0]), float(h.bin_edges[-1])
    ymax = _nice_ceiling(int(h.counts.max()) if len(h.counts) else 0)

    def sx(x):
        return left + (x - lo) / (hi - lo) * pw

    def sy(y):
        return top + ph - y / ymax * ph

    title = title if title is not None else f"d = {h.dim}, {h.ft_layers} Fourier layers (n = {h.total})"
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="13">{_escape(title)}</text>',
    ]
    for a, b, c in zip(h.bin_edges[:-1], h.bin_edges[1:], h.counts):
        x0, x1 = sx(a), sx(b)
        y = sy(int(c))
        out.append(
            f'<rect x="{x0 + 0.5:.2f}" y="{y:.2f}" width="{x1 - x0 - 1:.2f}" '
            f'height="{top + ph - y:.2f}" fill="#4477aa"/>'
        )
    # axes
    out.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>')
    for tick in range(int(lo), int(hi) + 1, 2):
        x = sx(tick)
        out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 16}" text-anchor="middle">{tick}</text>')
    step = ymax // 5 if ymax >= 5 else 1
    for yt in range(0, ymax + 1, step):
        y = sy(yt)
        out.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 7}" y="{y + 4:.2f}" text-anchor="end">{yt}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">log10 infidelity</text>')
    out.append(
        f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + ph / 2:.1f})">count</text>'
    )
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


def _nice_ceiling(n: int) -> int:
    if n <= 5:
        return 5
    mag = 10 ** int(math.floor(math.log10(n)))
    for m in (1, 2, 5, 10):
        if m * mag >= n:
            return m * mag
    return 10 * mag


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


# --- summaries ------------------------------------------------------------


@dataclass(frozen=True)
class Band:
    """Acceptance band on the fraction of records with infidelity >= threshold."""

    threshold: float
    min_fraction: float = 0.0
    max_fraction: float = 1.0
    dims: tuple[int, ...] | None = None

    def applies(self, d: int) -> bool:
        return self.dims is None or d in self.dims

    def describe(self) -> str:
        return f"frac(I >= {self.threshold:g}) in [{self.min_fraction:g}, {self.max_fraction:g}]"


@dataclass
class SummaryRow:
    dim: int
    ft_layers: int
    n: int
    median_log10: float
    max_infidelity: float
    fractions: dict[float, float]
    passed: bool | None
    failed_bands: list[str] = field(default_factory=list)


DEFAULT_THRESHOLDS = (1e-12, 1e-8, 1e-4)


def fraction_at_or_above(records: Sequence[ExperimentRecord], threshold: float) -> float:
    if not records:
        return 0.0
    return sum(r.best_infidelity >= threshold for r in records) / len(records)


def median_log10(records: Sequence[ExperimentRecord], floor: float = LOG10_FLOOR) -> float:
    """Median clamped log10 infidelity; values below ``floor`` count as ``floor``."""
    return float(np.median([max(r.log10_infidelity, floor) for r in records]))


def summarize(
    records: Sequence[ExperimentRecord],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    bands: Sequence[Band] = (),
) -> list[SummaryRow]:
    """Per (dim, ft_layers): median clamped log10 infidelity, max infidelity,
    fraction at or above each threshold, and pass/fail over the applicable bands
    (``None`` when no band applies)."""
    groups: dict[tuple[int, int], list[ExperimentRecord]] = {}
    for r in records:
        groups.setdefault((r.dim, r.ft_layers), []).append(r)
    rows = []
    for (d, n), recs in groups.items():
        applicable = [b for b in bands if b.applies(d)]
        failed = []
        for b in applicable:
            frac = fraction_at_or_above(recs, b.threshold)
            if not b.min_fraction <= frac <= b.max_fraction:
                failed.append(f"{b.describe()}: got {frac:g}")
        rows.append(
            SummaryRow(
                dim=d,
                ft_layers=n,
                n=len(recs),
                median_log10=median_log10(recs),
                max_infidelity=max(r.best_infidelity for r in recs),
                fractions={t: fraction_at_or_above(recs, t) for t in thresholds},
                passed=(not failed) if applicable else None,
                failed_bands=failed,
            )
        )
    return rows


def default_bands(family: Family, rule: str, reduction: PhaseReduction = PhaseReduction.NONE) -> list[Band]:
    """Single-campaign acceptance bands at desk scale."""
    family = Family(family)
    if PhaseReduction(reduction) is not PhaseReduction.NONE:
        return []
    if family is Family.HAAR_UNITARY:
        if rule == "d":
            return [Band(1e-4, 0.01, 0.20, dims=(3,))]
        return [Band(1e-12, 0.0, 0.0)]
    if family is Family.BLOCK_DIAGONAL:
        return [Band(1e-12, 0.0, 0.05)] if rule == "d+1" else []
    if rule == "2":
        return [Band(1e-8, 0.02, 0.60)]
    return [Band(1e-12, 0.0, 0.0)]


@dataclass
class Comparison:
    name: str
    dim: int
    value: float
    requirement: str
    passed: bool


def _by_dim(records):
    out: dict[int, list[ExperimentRecord]] = {}
    for r in records:
        out.setdefault(r.dim, []).append(r)
    return out


def compare_campaigns(
    family: Family,
    campaigns: dict[tuple[str, PhaseReduction], Sequence[ExperimentRecord]],
    resolution: float = LOG10_FLOOR,
) -> list[Comparison]:
    """Cross-campaign checks on log10 medians, per dimension.

    ``campaigns`` maps (rule, reduction) to records drawn on identical targets.
    Infidelities below ``10**resolution`` are treated as equal; pass the
    log10 of the early-stop target, below which final values are arbitrary.
    """
    family = Family(family)
    checks: list[Comparison] = []
    none = PhaseReduction.NONE

    def pairwise(a_key, b_key, name, requirement, test):
        if a_key not in campaigns or b_key not in campaigns:
            return
        a, b = _by_dim(campaigns[a_key]), _by_dim(campaigns[b_key])
        for d in sorted(set(a) & set(b)):
            gap = median_log10(a[d], resolution) - median_log10(b[d], resolution)
            checks.append(Comparison(name, d, gap, requirement, bool(test(gap))))

    if family is Family.BLOCK_DIAGONAL:
        pairwise(("d", none), ("d+1", none), "median gap d vs d+1", ">= 2 decades", lambda g: g >= 2.0)
    elif family is Family.HAAR_UNITARY:
        pairwise(("d+2", none), ("d+1", none), "median gap d+2 vs d+1", "within 1 decade", lambda g: abs(g) <= 1.0)
        for red in list(PhaseReduction)[1:]:
            pairwise(("d+1", red), ("d+1", none), f"median gap {red.value} vs none", "> 0", lambda g: g > 0.0)
    else:
        pairwise(("4", none), ("3", none), "median gap 4 vs 3 layers", ">= -1 decade", lambda g: g >= -1.0)
    return checks


def write_summary_csv(path, rows: Sequence[tuple[dict, SummaryRow]], thresholds=DEFAULT_THRESHOLDS):
    label_keys = list(rows[0][0]) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            label_keys
            + ["dim", "ft_layers", "n", "median_log10", "max_infidelity"]
            + [f"frac_ge_{t:g}" for t in thresholds]
            + ["passed", "failed_bands"]
        )
        for labels, s in rows:
            w.writerow(
                [labels[k] for k in label_keys]
                + [s.dim, s.ft_layers, s.n, f"{s.median_log10:.3f}", f"{s.max_infidelity:.3e}"]
                + [f"{s.fractions[t]:.4f}" for t in thresholds]
                + ["n/a" if s.passed is None else str(s.passed).lower(), "; ".join(s.failed_bands)]
            )


def write_comparisons_csv(path, checks: Sequence[Comparison]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["check", "dim", "value", "requirement", "passed"])
        for c in checks:
            w.writerow([c.name, c.dim, f"{c.value:.3f}", c.requirement, str(c.passed).lower()])


def default_jobs() -> int:
    return os.cpu_count() or 1
