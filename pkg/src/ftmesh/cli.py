"""Command-line interface: ``ftmesh decompose-unitary | prepare-state | experiment``.

Exit codes: 0 success, 1 result above the acceptance threshold (or a failed
band), 2 I/O error, 3 validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ftmesh import textio
from ftmesh.experiments import (
    ExperimentPlan,
    Family,
    PhaseReduction,
    STATE_RULES,
    UNITARY_RULES,
    aggregate_histogram,
    compare_campaigns,
    default_bands,
    default_jobs,
    render_histogram_svg,
    run_plan,
    summarize,
    write_comparisons_csv,
    write_histograms_csv,
    write_summary_csv,
)
from ftmesh.interferometer import MeshConfig, Mode
from ftmesh.metrics import VALIDATION_TOL, unitarity_error
from ftmesh.optimize import AllStartsFailed, OptimSettings, multi_start
from ftmesh.sampling import (
    GENERATOR_NAME,
    SeedSpec,
    TargetKind,
    TargetSpec,
    block_diagonal_unitary,
    haar_state,
    haar_unitary,
    planted_target,
)

log = logging.getLogger("ftmesh")

EXIT_OK, EXIT_THRESHOLD, EXIT_IO, EXIT_VALIDATION = 0, 1, 2, 3

# seed stream roots for single-target commands
TARGET_STREAM, START_STREAM = 0, 1


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_VALIDATION, f"{self.prog}: {message}")


def _int_list(text: str) -> list[int]:
    """``"3..6"`` or ``"3,4,6"``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return out


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def _add_optim_flags(p: argparse.ArgumentParser, starts_default: int):
    p.add_argument("--starts", type=int, default=starts_default, help="random starts per target")
    p.add_argument("--max-iterations", type=int, default=10_000)
    p.add_argument("--grad-tol", type=float, default=1e-12)
    p.add_argument("--infidelity-target", type=float, default=1e-15, help="early-stop level")
    p.add_argument("--all-starts", action="store_true", help="run every start even after one hits the target")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: all CPUs)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ftmesh", description="Fourier/phase-shifter mesh synthesis")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("decompose-unitary", help="fit mesh phases to a target unitary")
    p.add_argument("--dim", type=int, help="dimension (inferred from a target file if omitted)")
    layers = p.add_mutually_exclusive_group()
    layers.add_argument("--ft-layers", type=int)
    layers.add_argument("--rule", choices=UNITARY_RULES, help="Fourier layers relative to d (default d+1)")
    p.add_argument("--target", default="haar", help="haar | block | planted | path to a matrix file")
    p.add_argument("--out", help="result file (JSON); stdout if omitted")
    p.add_argument("--accept", type=float, default=1e-10, help="infidelity threshold for exit 0")
    _add_optim_flags(p, 30)

    p = sub.add_parser("prepare-state", help="fit state-mode mesh phases to a target state")
    p.add_argument("--dim", type=int)
    p.add_argument("--ft-layers", type=int, default=3)
    p.add_argument("--target", default="haar", help="haar | planted | path to a vector file")
    p.add_argument("--out")
    p.add_argument("--accept", type=float, default=1e-10)
    _add_optim_flags(p, 20)

    p = sub.add_parser("experiment", help="run a Monte Carlo campaign")
    p.add_argument("--family", choices=[f.value for f in Family], required=True)
    p.add_argument("--dims", default="3..6", help="e.g. 3..6 or 3,4")
    p.add_argument("--rules", help=f"unitary families: comma list of {','.join(UNITARY_RULES)}")
    p.add_argument("--layers", help=f"state family: comma list of {','.join(STATE_RULES)}")
    p.add_argument("--samples", type=int, help="targets per dimension (default 100 unitary, 500 state)")
    p.add_argument(
        "--reduce-phases",
        help="comma list of drop-random, pin-inner, pin-last; runs rule d+1 with and without each",
    )
    p.add_argument("--out-dir", required=True)
    _add_optim_flags(p, 0)
    return parser


def _settings(args) -> OptimSettings:
    return OptimSettings(
        n_starts=args.starts,
        max_iterations=args.max_iterations,
        grad_tolerance=args.grad_tol,
        infidelity_target=args.infidelity_target,
        stop_at_target=not args.all_starts,
    )


def _load_target_file(path: str) -> np.ndarray:
    try:
        return textio.load(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read target {path}: {exc}") from None
    except ValueError as exc:
        raise CliError(EXIT_VALIDATION, f"bad target file {path}: {exc}") from None


def _resolve_target(args, mode: Mode) -> tuple[MeshConfig, TargetSpec, dict]:
    seed = SeedSpec(args.seed, (TARGET_STREAM,))
    named = ("haar", "block", "planted") if mode is Mode.UNITARY else ("haar", "planted")
    payload = None
    if args.target not in named:
        payload = _load_target_file(args.target)
        if args.dim is None:
            args.dim = payload.shape[0]
    if args.dim is None:
        raise CliError(EXIT_VALIDATION, "--dim is required unless the target is a file")
    if mode is Mode.UNITARY:
        if args.ft_layers is None:
            args.rule = args.rule or "d+1"
            args.ft_layers = args.dim + UNITARY_RULES.index(args.rule)
    try:
        config = MeshConfig(args.dim, args.ft_layers, mode)
    except ValueError as exc:
        raise CliError(EXIT_VALIDATION, str(exc)) from None

    info = {"source": args.target}
    if payload is not None:
        if mode is Mode.UNITARY:
            if payload.ndim != 2 or payload.shape != (args.dim, args.dim):
                raise CliError(EXIT_VALIDATION, f"target matrix has shape {payload.shape}, expected d={args.dim}")
            err = unitarity_error(payload)
            if err > VALIDATION_TOL:
                raise CliError(EXIT_VALIDATION, f"target is not unitary (max|U^H U - I| = {err:.2e})")
        else:
            if payload.ndim != 1 or payload.shape[0] != args.dim:
                raise CliError(EXIT_VALIDATION, f"target vector has shape {payload.shape}, expected d={args.dim}")
            err = abs(np.vdot(payload, payload).real - 1.0)
            if err > VALIDATION_TOL:
                raise CliError(EXIT_VALIDATION, f"target is not normalized (| <v|v> - 1 | = {err:.2e})")
        target = TargetSpec(TargetKind.EXTERNAL, payload)
    elif args.target == "planted":
        target, phases = planted_target(config, seed)
        info["planted_phases"] = phases.tolist()
    elif args.target == "block":
        target = block_diagonal_unitary(args.dim, seed)
        info["block_dims"] = list(target.block_dims)
    elif mode is Mode.UNITARY:
        target = TargetSpec(TargetKind.HAAR_UNITARY, haar_unitary(args.dim, seed), seed)
    else:
        target = TargetSpec(TargetKind.HAAR_STATE, haar_state(args.dim, seed), seed)
    info["kind"] = target.kind.value
    info["seed"] = seed.to_dict() if target.provenance is not None else None
    return config, target, info


def _resolved_argv(args, command: str) -> list[str]:
    argv = [command, "--dim", str(args.dim), "--ft-layers", str(args.ft_layers), "--target", args.target]
    argv += ["--starts", str(args.starts), "--max-iterations", str(args.max_iterations)]
    argv += ["--grad-tol", repr(args.grad_tol), "--infidelity-target", repr(args.infidelity_target)]
    argv += ["--seed", str(args.seed), "--accept", repr(args.accept)]
    if args.all_starts:
        argv.append("--all-starts")
    return argv


def _write_json(path, data: dict):
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc}") from None


def _fit(args, mode: Mode, command: str) -> int:
    config, target, info = _resolve_target(args, mode)
    try:
        settings = _settings(args)
    except ValueError as exc:
        raise CliError(EXIT_VALIDATION, str(exc)) from None
    jobs = args.jobs or default_jobs()
    log.info("fitting %s mesh d=%d N=%d (%d phases)", mode.value, config.dim, config.ft_layers, config.n_phases)
    try:
        result = multi_start(config, target, settings, SeedSpec(args.seed, (START_STREAM,)), jobs=jobs)
        best = result.best_infidelity
        result_dict = result.to_dict()
    except AllStartsFailed as exc:
        best = float("nan")
        result_dict = {"error": str(exc), "per_start": [s.to_dict() for s in exc.per_start]}
    accepted = bool(best <= args.accept)
    _write_json(
        args.out,
        {
            "command": command,
            "argv": _resolved_argv(args, command),
            "config": {"dim": config.dim, "ft_layers": config.ft_layers, "mode": mode.value,
                       "n_phases": config.n_phases},
            "settings": settings.to_dict(),
            "seed": args.seed,
            "generator_name": GENERATOR_NAME,
            "target": info,
            "result": result_dict,
            "accept": args.accept,
            "accepted": accepted,
        },
    )
    log.info("best infidelity %.3e (%s)", best, "accepted" if accepted else "rejected")
    return EXIT_OK if accepted else EXIT_THRESHOLD


def _experiment(args) -> int:
    family = Family(args.family)
    try:
        dims = _int_list(args.dims)
        reductions = [PhaseReduction(r) for r in _int_list_str(args.reduce_phases or "")]
    except ValueError as exc:
        raise CliError(EXIT_VALIDATION, str(exc)) from None
    if family is Family.HAAR_STATE:
        if args.rules:
            raise CliError(EXIT_VALIDATION, "state campaigns use --layers, not --rules")
        rules = _int_list_str(args.layers or ",".join(STATE_RULES))
    else:
        if args.layers:
            raise CliError(EXIT_VALIDATION, "unitary campaigns use --rules, not --layers")
        rules = _int_list_str(args.rules or ("d+1" if reductions else ",".join(UNITARY_RULES)))
    samples = args.samples if args.samples is not None else (500 if family is Family.HAAR_STATE else 100)
    starts = args.starts or (20 if family is Family.HAAR_STATE else 30)
    args.starts = starts
    try:
        settings = _settings(args)
        campaigns = [(rule, PhaseReduction.NONE) for rule in rules] + [("d+1", r) for r in reductions]
        if reductions and ("d+1", PhaseReduction.NONE) not in campaigns:
            campaigns.insert(0, ("d+1", PhaseReduction.NONE))
        plans = {
            key: ExperimentPlan(
                name=_campaign_name(family, *key),
                family=family,
                dims=tuple(dims),
                ft_layer_rule=key[0],
                n_samples=samples,
                master_seed=args.seed,
                phase_reduction=key[1],
                optim=settings,
            )
            for key in campaigns
        }
    except ValueError as exc:
        raise CliError(EXIT_VALIDATION, str(exc)) from None

    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot create {out_dir}: {exc}") from None
    jobs = args.jobs or default_jobs()

    results = {}
    for key, plan in plans.items():
        log.info("campaign %s: %d dims x %d samples", plan.name, len(dims), samples)
        try:
            results[key] = run_plan(plan, out_dir / f"records_{plan.name}.jsonl", jobs=jobs)
        except OSError as exc:
            raise CliError(EXIT_IO, str(exc)) from None

    hist_rows, summary_rows = [], []
    all_pass = True
    for key, records in results.items():
        plan = plans[key]
        labels = {"family": family.value, "rule": key[0], "reduction": key[1].value}
        for row in summarize(records, bands=default_bands(family, key[0], key[1])):
            summary_rows.append((labels, row))
            all_pass &= row.passed is not False
            h = aggregate_histogram(records, row.dim, row.ft_layers)
            hist_rows.append((labels, h))
            render_histogram_svg(
                h,
                out_dir / f"hist_{plan.name}_d{row.dim}.svg",
                title=f"{family.value}, rule {key[0]}, {key[1].value}: d = {row.dim}, N = {row.ft_layers}",
            )
    checks = compare_campaigns(family, results, resolution=float(np.log10(settings.infidelity_target)))
    all_pass &= all(c.passed for c in checks)

    write_histograms_csv(out_dir / "histograms.csv", hist_rows)
    write_summary_csv(out_dir / "summary.csv", summary_rows)
    write_comparisons_csv(out_dir / "comparisons.csv", checks)
    _write_json(
        out_dir / "run.json",
        {
            "command": "experiment",
            "argv": _experiment_argv(args, dims, rules, samples, reductions),
            "generator_name": GENERATOR_NAME,
            "plans": [p.to_dict() for p in plans.values()],
            "passed": all_pass,
        },
    )
    for labels, row in summary_rows:
        log.info(
            "%s %s %s d=%d N=%d n=%d median log10 %.2f max %.2e %s",
            labels["family"], labels["rule"], labels["reduction"], row.dim, row.ft_layers, row.n,
            row.median_log10, row.max_infidelity, "n/a" if row.passed is None else ("pass" if row.passed else "FAIL"),
        )
    for c in checks:
        log.info("%s d=%d: %.2f (%s) %s", c.name, c.dim, c.value, c.requirement, "pass" if c.passed else "FAIL")
    return EXIT_OK if all_pass else EXIT_THRESHOLD


def _int_list_str(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _campaign_name(family: Family, rule: str, reduction: PhaseReduction) -> str:
    name = f"{family.value}_{rule.replace('+', 'p')}"
    if reduction is not PhaseReduction.NONE:
        name += f"_{reduction.value}"
    return name


def _experiment_argv(args, dims, rules, samples, reductions) -> list[str]:
    argv = ["experiment", "--family", args.family, "--dims", ",".join(map(str, dims))]
    argv += ["--layers" if args.family == Family.HAAR_STATE.value else "--rules", ",".join(rules)]
    argv += ["--samples", str(samples), "--starts", str(args.starts), "--max-iterations", str(args.max_iterations)]
    argv += ["--grad-tol", repr(args.grad_tol), "--infidelity-target", repr(args.infidelity_target)]
    argv += ["--seed", str(args.seed), "--out-dir", str(args.out_dir)]
    if reductions:
        argv += ["--reduce-phases", ",".join(r.value for r in reductions)]
    if args.all_starts:
        argv.append("--all-starts")
    return argv


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.WARNING - 10 * min(args.verbose, 2),
            format="%(levelname)s %(message)s",
            stream=sys.stderr,
        )
        if args.command == "decompose-unitary":
            return _fit(args, Mode.UNITARY, args.command)
        if args.command == "prepare-state":
            return _fit(args, Mode.STATE, args.command)
        return _experiment(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
