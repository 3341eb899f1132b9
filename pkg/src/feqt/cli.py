"""Command line interface.

Modes: ``tost`` (bootstrap equivalence test), ``bayes`` (posterior engine),
``simulate`` (size/power studies), ``bands`` (emit equivalence band curves),
``report`` (re-render saved TOST JSON as SVG/CSV).

Exit codes: 0 success (and, for decision modes, nonequivalence rejected);
2 ran fine but failed to reject; 1 any error. The seed falls back to the
``FEQT_SEED`` environment variable when no --seed flag is given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .fdata import BandKind, BandPair, Grid, make_cosine_bands
from .tost import BootstrapConfig, Design, Metric, TostDecision, run_tost
from . import curvefile, report as report_mod
from .bayes import (
    GPBandPrior,
    PriorSpec,
    calibrate_prior_scale,
    posterior_equivalence_prob,
    run_mwg,
    simultaneous_bands,
)
from .simlab import (
    boundary_violation_scenarios,
    default_truth,
    interior_scenarios,
    run_study,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAIL_TO_REJECT = 2

_DESIGNS = {
    "independent": Design.INDEPENDENT_IID,
    "matched": Design.MATCHED_PAIRS,
    "grouped": Design.RANDOM_EFFECTS_MATCHED,
}


class CliError(Exception):
    """User-facing CLI failure with a stable error code string."""

    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _read_config_file(path):
    """Key-value config: one ``key = value`` per line, ``#`` comments."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError("config-parse", f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _apply_config(args, parser):
    if not getattr(args, "config", None):
        return args
    values = _read_config_file(args.config)
    for key, value in values.items():
        if not hasattr(args, key):
            raise CliError("config-key", f"unknown config key {key!r}")
        current = getattr(args, key)
        if isinstance(current, bool):
            value = value.lower() in ("1", "true", "yes")
        elif isinstance(current, int):
            value = int(value)
        elif isinstance(current, float):
            value = float(value)
        setattr(args, key, value)
    return args


def _resolve_seed(args):
    if args.seed is not None:
        return int(args.seed)
    env = os.environ.get("FEQT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CliError("bad-seed", f"FEQT_SEED must be an integer, got {env!r}") from None
    return 0


def _emit_flags(args):
    flags = {f.strip() for f in args.emit.split(",") if f.strip()}
    bad = flags - {"csv", "json", "svg"}
    if bad:
        raise CliError("bad-emit", f"unknown emit flags: {sorted(bad)}")
    return flags


def _write(outdir, name, text):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / name
    path.write_text(text, encoding="utf-8")
    return path


def _eq_bands(grid, include_psi=True):
    add = make_cosine_bands(grid, BandKind.ADDITIVE)
    mult = make_cosine_bands(grid, BandKind.MULTIPLICATIVE)
    bands = {Metric.THETA: add, Metric.LAMBDA: mult}
    if include_psi:
        bands[Metric.PSI] = mult
    return bands


def _load_sample(args, need="any"):
    try:
        sample = curvefile.read_curves(args.input, kind=getattr(args, "kind", None))
    except FileNotFoundError:
        raise CliError("missing-input", f"input file not found: {args.input}") from None
    except curvefile.CurveFileError as exc:
        raise CliError("curve-parse", str(exc)) from exc
    return sample


# ----- mode implementations ----------------------------------------------


def _mode_tost(args):
    seed = _resolve_seed(args)
    sample = _load_sample(args)
    design = _DESIGNS[args.design]
    cfg = BootstrapConfig(args.replicates, args.alpha, seed, design)
    from .fdata import GroupedPairedSample, PairedFunctionalSample

    if design is Design.RANDOM_EFFECTS_MATCHED and not isinstance(sample, GroupedPairedSample):
        raise CliError("design-mismatch", "grouped design requires a multi-group curve file")
    if design is Design.MATCHED_PAIRS and not isinstance(sample, PairedFunctionalSample):
        raise CliError("design-mismatch", "matched design requires a single-group paired file")
    include_psi = design is Design.RANDOM_EFFECTS_MATCHED
    bands = _eq_bands(sample.grid, include_psi=include_psi)
    rep = run_tost(sample, cfg, bands)
    flags = _emit_flags(args)
    if "json" in flags:
        _write(args.out, "tost_report.json", report_mod.tost_report_json(rep))
    if "csv" in flags:
        _write(args.out, "tost_report.csv", report_mod.tost_report_csv(rep))
    if "svg" in flags:
        _write(args.out, "tost_report.svg", report_mod.tost_report_svg(rep))
    print(f"decision: {rep.decision.value}")
    if rep.lambda_noninferiority is not None:
        print(f"lambda noninferiority: {rep.lambda_noninferiority.value}")
    return (
        EXIT_OK if rep.decision is TostDecision.REJECT_NONEQUIVALENCE else EXIT_FAIL_TO_REJECT
    )


def _mode_bayes(args):
    seed = _resolve_seed(args)
    sample = _load_sample(args)
    from .fdata import GroupedPairedSample

    if not isinstance(sample, GroupedPairedSample):
        raise CliError("design-mismatch", "bayes mode requires a multi-group curve file")
    grid = sample.grid
    add = make_cosine_bands(grid, BandKind.ADDITIVE)
    mult = make_cosine_bands(grid, BandKind.MULTIPLICATIVE)
    if args.scale is not None:
        s2 = args.scale
    else:
        s2 = calibrate_prior_scale(args.range_a, add, grid, args.calibrate_target, seed=seed)
    prior = PriorSpec(
        mean_prior=GPBandPrior(args.range_a, s2, add),
        error_var_prior=GPBandPrior(args.range_a, s2, mult),
        reffect_var_prior=GPBandPrior(args.range_a, s2, mult),
        gamma=args.gamma,
    )
    draws = run_mwg(
        sample, prior, chains=args.chains, iters=args.iters,
        burnin=args.burnin, thin=args.thin, seed=seed,
    )
    eq = {Metric.THETA: add, Metric.LAMBDA: mult, Metric.PSI: mult}
    probs = posterior_equivalence_prob(draws, eq)
    flags = _emit_flags(args)
    if "json" in flags:
        _write(args.out, "posterior_summary.json",
               report_mod.posterior_summary_json(draws, probs, args.gamma))
    if "svg" in flags:
        sim = {m: simultaneous_bands(draws.metric(m), args.gamma) for m in eq}
        _write(args.out, "posterior_bands.svg",
               report_mod.posterior_bands_svg(draws, sim, eq))
    for key in sorted(probs):
        print(f"P[equivalence | data] {key}: {probs[key]:.4f}")
    if draws.rhat_warning:
        print("warning: split R-hat above 1.1; treat results as unconverged", file=sys.stderr)
    decided = all(
        probs[m.value] >= args.gamma for m in (Metric.THETA, Metric.LAMBDA, Metric.PSI)
    )
    return EXIT_OK if decided else EXIT_FAIL_TO_REJECT


_SCENARIO_KINDS = {
    "size-theta": (boundary_violation_scenarios, Metric.THETA),
    "power-theta": (interior_scenarios, Metric.THETA),
    "size-lambda": (boundary_violation_scenarios, Metric.LAMBDA),
    "power-lambda": (interior_scenarios, Metric.LAMBDA),
}


def _mode_simulate(args):
    seed = _resolve_seed(args)
    builder, metric = _SCENARIO_KINDS[args.scenarios]
    from .fdata import equispaced_grid

    grid = equispaced_grid(args.grid_size)
    truth = default_truth(grid, args.groups, args.group_size)
    kind = BandKind.ADDITIVE if metric is Metric.THETA else BandKind.MULTIPLICATIVE
    bands = make_cosine_bands(grid, kind)
    seq = builder(truth, bands, metric)
    cfg = BootstrapConfig(args.replicates_bootstrap, args.alpha, 0, Design.RANDOM_EFFECTS_MATCHED)
    result = run_study(seq, args.replicates, cfg, {metric: bands}, seed=seed)
    flags = _emit_flags(args)
    if "csv" in flags:
        _write(args.out, "study_result.csv", result.to_csv_text())
    if "json" in flags:
        _write(args.out, "study_result.json", result.to_json_text())
    for i in range(result.scenarios.size):
        print(
            f"scenario {result.scenarios[i]}: rate "
            f"{result.rates[i]:.4f} (se {result.standard_errors[i]:.4f})"
        )
    return EXIT_OK


def _mode_bands(args):
    from .fdata import equispaced_grid

    grid = equispaced_grid(args.grid_size)
    bands = _eq_bands(grid)
    flags = _emit_flags(args)
    text = report_mod.bands_csv(bands)
    if "csv" in flags:
        _write(args.out, "bands.csv", text)
    if "json" in flags:
        payload = {
            m.value: {
                "lower": [float(x) for x in b.lower],
                "upper": [float(x) for x in b.upper],
            }
            for m, b in bands.items()
        }
        payload["grid"] = [float(x) for x in grid.points]
        _write(args.out, "bands.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"emitted bands for a {args.grid_size}-point grid")
    return EXIT_OK


def _mode_report(args):
    try:
        payload = json.loads(Path(args.input).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CliError("missing-input", f"input file not found: {args.input}") from None
    except json.JSONDecodeError as exc:
        raise CliError("report-parse", f"bad report JSON: {exc}") from exc
    rep = _report_from_json(payload)
    flags = _emit_flags(args)
    if "svg" in flags:
        _write(args.out, "tost_report.svg", report_mod.tost_report_svg(rep))
    if "csv" in flags:
        _write(args.out, "tost_report.csv", report_mod.tost_report_csv(rep))
    print(f"re-rendered report ({rep.decision.value})")
    return EXIT_OK


def _report_from_json(payload):
    from .tost import MetricResult, OneSidedBands, TostReport

    try:
        grid = Grid(payload["grid"])
        results = {}
        for name, m in payload["metrics"].items():
            metric = Metric(name)
            kind = BandKind.ADDITIVE if metric is Metric.THETA else BandKind.MULTIPLICATIVE
            results[metric] = MetricResult(
                metric=metric,
                estimate=np.asarray(m["estimate"], dtype=float),
                bands=OneSidedBands(
                    metric=metric,
                    lower_of_upper_ci=np.asarray(m["overlap_upper"], dtype=float),
                    upper_of_lower_ci=np.asarray(m["overlap_lower"], dtype=float),
                ),
                eq_band=BandPair(grid, m["band_lower"], m["band_upper"], kind),
                violations=np.asarray(m["violations"], dtype=int),
                reject=bool(m["reject"]),
            )
        noninf = payload.get("lambda_noninferiority")
        return TostReport(
            grid=grid,
            results=results,
            decision=TostDecision(payload["decision"]),
            lambda_noninferiority=TostDecision(noninf) if noninf else None,
            alpha=float(payload.get("alpha", 0.05)),
            replicates=int(payload.get("bootstrap_replicates", 0)),
        )
    except (KeyError, ValueError) as exc:
        raise CliError("report-schema", f"report JSON missing or bad field: {exc}") from exc


# ----- argument parsing ---------------------------------------------------


def _add_common(p):
    p.add_argument("--config", help="key = value config file applied before flags")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default: FEQT_SEED or 0)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--emit", default="csv,json,svg", help="comma list of csv,json,svg")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="feqt", description="Equivalence testing for functional data"
    )
    sub = parser.add_subparsers(dest="mode", required=True)

    p = sub.add_parser("tost", help="bootstrap TOST equivalence test")
    p.add_argument("--input", required=True, help="curve file")
    p.add_argument("--design", choices=sorted(_DESIGNS), default="grouped")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--replicates", "-B", type=int, default=10000)
    _add_common(p)

    p = sub.add_parser("bayes", help="Bayesian posterior equivalence analysis")
    p.add_argument("--input", required=True, help="curve file (grouped)")
    p.add_argument("--gamma", type=float, default=0.95)
    p.add_argument("--chains", type=int, default=3)
    p.add_argument("--iters", type=int, default=10500)
    p.add_argument("--burnin", type=int, default=500)
    p.add_argument("--thin", type=int, default=10)
    p.add_argument("--range-a", type=float, default=0.3, dest="range_a")
    p.add_argument("--scale", type=float, default=None,
                   help="prior scale s2 (default: calibrate)")
    p.add_argument("--calibrate-target", type=float, default=0.01, dest="calibrate_target")
    _add_common(p)

    p = sub.add_parser("simulate", help="size/power simulation study")
    p.add_argument("--scenarios", choices=sorted(_SCENARIO_KINDS), required=True)
    p.add_argument("--replicates", type=int, default=200)
    p.add_argument("--replicates-bootstrap", type=int, default=1000, dest="replicates_bootstrap")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--groups", type=int, default=20)
    p.add_argument("--group-size", type=int, default=20, dest="group_size")
    p.add_argument("--grid-size", type=int, default=25, dest="grid_size")
    _add_common(p)

    p = sub.add_parser("bands", help="emit the cosine equivalence band curves")
    p.add_argument("--grid-size", type=int, default=25, dest="grid_size")
    _add_common(p)

    p = sub.add_parser("report", help="re-render a saved TOST JSON report")
    p.add_argument("--input", required=True, help="tost_report.json")
    _add_common(p)
    return parser


_MODES = {
    "tost": _mode_tost,
    "bayes": _mode_bayes,
    "simulate": _mode_simulate,
    "bands": _mode_bands,
    "report": _mode_report,
}


def run_cli(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config(args, parser)
        return _MODES[args.mode](args)
    except CliError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 - surface engine failures as exit 1
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run_cli())
