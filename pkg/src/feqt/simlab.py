"""Synthetic data generation and the size/power simulation harness.

Data are drawn from the two-level hierarchy the estimators target: per-group
matched random-effect curve pairs around the channel means, then per-curve
error pairs. Along-domain correlation is deliberately present (the analysis
model factorizes over grid points), so studies run here also probe robustness
to that simplification.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .fdata import (
    BandKind,
    BandPair,
    Grid,
    GroupedPairedSample,
    PairedFunctionalSample,
    band_contains,
)
from .tost import BootstrapConfig, Metric, TostDecision, run_tost
from .bayes.kernels import MaternKernel, matern_corr, corr_cholesky


@dataclass(frozen=True)
class TruthSpec:
    """Ground truth for one simulated population.

    ``mu``, ``s2_eps``, ``s2_alpha`` are (2, T) channel curves; ``rho_eps``
    and ``rho_alpha`` are the pointwise cross-channel correlations; the
    along-domain correlation of both levels is ``within_corr`` (T x T).
    """

    grid: Grid
    mu: np.ndarray
    s2_eps: np.ndarray
    s2_alpha: np.ndarray
    rho_eps: np.ndarray
    rho_alpha: np.ndarray
    within_corr: np.ndarray
    group_sizes: np.ndarray

    def __post_init__(self):
        T = len(self.grid)
        for name in ("mu", "s2_eps", "s2_alpha"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (2, T):
                raise ValueError(f"{name} must have shape (2, {T})")
            object.__setattr__(self, name, arr)
        for name in ("rho_eps", "rho_alpha"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (T,):
                raise ValueError(f"{name} must have shape ({T},)")
            if np.any(np.abs(arr) >= 1.0):
                raise ValueError(f"{name} must lie strictly inside (-1, 1)")
            object.__setattr__(self, name, arr)
        if np.any(self.s2_eps < 0.0) or np.any(self.s2_alpha < 0.0):
            raise ValueError("variance curves must be nonnegative")
        corr = np.asarray(self.within_corr, dtype=float)
        if corr.shape != (T, T):
            raise ValueError(f"within_corr must be {T} x {T}")
        try:
            np.linalg.cholesky(corr + 1e-10 * np.eye(T))
        except np.linalg.LinAlgError:
            raise ValueError("within_corr is not positive semidefinite") from None
        object.__setattr__(self, "within_corr", corr)
        sizes = np.asarray(self.group_sizes, dtype=int)
        if sizes.ndim != 1 or sizes.size < 2 or np.any(sizes < 1):
            raise ValueError("need at least 2 groups with positive sizes")
        object.__setattr__(self, "group_sizes", sizes)

    @property
    def n_groups(self) -> int:
        return self.group_sizes.size

    def theta(self) -> np.ndarray:
        return self.mu[0] - self.mu[1]

    def lam(self) -> np.ndarray:
        return self.s2_eps[0] / self.s2_eps[1]

    def psi(self) -> np.ndarray:
        return self.s2_alpha[0] / self.s2_alpha[1]


@dataclass(frozen=True)
class ScenarioSequence:
    """Ordered truth variants moving one metric along a placement sequence."""

    metric: Metric
    truths: tuple
    target_curves: np.ndarray  # (count, T) true metric curves, scenario order
    boundary: bool

    def __post_init__(self):
        if len(self.truths) < 1:
            raise ValueError("sequence must contain at least one scenario")

    @property
    def count(self) -> int:
        return len(self.truths)


@dataclass(frozen=True)
class StudyResult:
    """Per-scenario rejection tallies for one method."""

    method: str
    metric: str
    scenarios: np.ndarray  # 1-based indices
    replicates: np.ndarray
    rejections: np.ndarray
    errors: tuple = ()

    def __post_init__(self):
        if np.any(self.rejections > self.replicates):
            raise ValueError("more rejections than replicates")

    @property
    def rates(self) -> np.ndarray:
        return self.rejections / np.maximum(self.replicates, 1)

    @property
    def standard_errors(self) -> np.ndarray:
        r = self.rates
        return np.sqrt(r * (1.0 - r) / np.maximum(self.replicates, 1))

    def to_csv_text(self) -> str:
        lines = ["scenario,replicates,rejections,rate,se"]
        for i in range(self.scenarios.size):
            lines.append(
                "%d,%d,%d,%s,%s"
                % (
                    self.scenarios[i],
                    self.replicates[i],
                    self.rejections[i],
                    repr(float(self.rates[i])),
                    repr(float(self.standard_errors[i])),
                )
            )
        return "\n".join(lines) + "\n"

    def to_json_text(self) -> str:
        payload = {
            "method": self.method,
            "metric": self.metric,
            "scenarios": self.scenarios.tolist(),
            "replicates": self.replicates.tolist(),
            "rejections": self.rejections.tolist(),
            "rates": [float(x) for x in self.rates],
            "standard_errors": [float(x) for x in self.standard_errors],
            "errors": list(self.errors),
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def default_truth(grid: Grid, n_groups: int = 20, group_size: int = 20) -> TruthSpec:
    """Versioned default truth profile ("v1"): smooth common mean, equal
    channel variances, moderate cross-channel correlation, Matern along-domain
    correlation with range 0.1."""
    t = grid.points
    mu = 1.5 + 0.4 * np.sin(2.0 * np.pi * t) + 0.2 * t
    T = len(grid)
    return TruthSpec(
        grid=grid,
        mu=np.stack([mu, mu]),
        # levels chosen so the pointwise sampling sd of the mean difference is
        # small against the band half-width at the reference designs
        s2_eps=np.full((2, T), 0.05),
        s2_alpha=np.full((2, T), 0.004),
        rho_eps=np.full(T, 0.3),
        rho_alpha=np.full(T, 0.5),
        within_corr=matern_corr(MaternKernel(0.1), grid),
        group_sizes=np.full(n_groups, group_size, dtype=int),
    )


def mixed_outcome_truth(grid: Grid, n_groups: int = 60, group_size: int = 8) -> TruthSpec:
    """Truth profile producing a split decision across the three metrics.

    Channel means agree (the location test rejects nonequivalence), channel 1
    is strictly less noisy (the error-variance ratio fails the two-sided test
    on the low side but passes noninferiority), and the random-effect variance
    ratio sits above the upper band (its test fails). Because the error
    variance is estimated from spread around the overall mean, the channel-2
    error level compensates for the random-effect imbalance so the estimated
    total-variance ratio lands near 0.45.
    """
    base = default_truth(grid, n_groups, group_size)
    T = len(grid)
    a1, a2 = 0.05, 0.05 / 2.2
    e1 = 0.02
    e2 = (e1 + a1) / 0.45 - a2
    return replace(
        base,
        s2_eps=np.stack([np.full(T, e1), np.full(T, e2)]),
        s2_alpha=np.stack([np.full(T, a1), np.full(T, a2)]),
    )


def _correlated_pair(rng, rho, chol, shape):
    """Draw ``shape + (2, T)`` zero-mean unit-variance curve pairs.

    Each pair shares a common along-domain process weighted by sqrt(|rho(t)|),
    so the pointwise cross-channel correlation is exactly rho(t) and the
    construction stays positive semidefinite for any rho curve.
    """
    T = chol.shape[0]
    w, u1, u2 = (rng.standard_normal(shape + (T,)) @ chol.T for _ in range(3))
    sr = np.sqrt(np.abs(rho))
    si = np.sqrt(1.0 - np.abs(rho))
    sign = np.where(rho >= 0.0, 1.0, -1.0)
    out = np.empty(shape + (2, T))
    out[..., 0, :] = sr * w + si * u1
    out[..., 1, :] = sign * sr * w + si * u2
    return out


def generate_dataset(truth: TruthSpec, seed) -> GroupedPairedSample:
    """Simulate a grouped matched-pair dataset from ``truth``.

    ``seed`` may be an int or a ``numpy.random.SeedSequence``; the draw is
    deterministic in it.
    """
    rng = np.random.default_rng(seed)
    chol = corr_cholesky(truth.within_corr)
    sd_alpha = np.sqrt(truth.s2_alpha)
    sd_eps = np.sqrt(truth.s2_eps)
    groups = []
    for n in truth.group_sizes:
        z = _correlated_pair(rng, truth.rho_alpha, chol, ())
        alpha = truth.mu + sd_alpha * z
        e = _correlated_pair(rng, truth.rho_eps, chol, (int(n),))
        y = alpha[None] + sd_eps[None] * e
        groups.append(PairedFunctionalSample(truth.grid, y[:, 0], y[:, 1]))
    return GroupedPairedSample(truth.grid, tuple(groups))


def _apply_metric_curve(base: TruthSpec, metric: Metric, target: np.ndarray) -> TruthSpec:
    """Return a copy of ``base`` whose ``metric`` curve equals ``target``,
    adjusting only channel 2."""
    if metric is Metric.THETA:
        mu = base.mu.copy()
        mu[1] = mu[0] - target
        return replace(base, mu=mu)
    if metric is Metric.LAMBDA:
        s2 = base.s2_eps.copy()
        s2[1] = s2[0] / target
        return replace(base, s2_eps=s2)
    if metric is Metric.PSI:
        s2 = base.s2_alpha.copy()
        s2[1] = s2[0] / target
        return replace(base, s2_alpha=s2)
    raise ValueError(f"unknown metric {metric}")


def _band_interp(bands: BandPair, weight: np.ndarray) -> np.ndarray:
    """Curve at fraction ``weight`` of the way from the band midline to the
    upper band (log scale for multiplicative bands)."""
    if bands.kind is BandKind.MULTIPLICATIVE:
        mid = np.log(bands.midline)
        return np.exp(mid + weight * (np.log(bands.upper) - mid))
    return bands.midline + weight * (bands.upper - bands.midline)


def boundary_violation_scenarios(
    base: TruthSpec,
    bands: BandPair,
    metric: Metric,
    count: int = 9,
    pin_index: int = 0,
) -> ScenarioSequence:
    """Scenarios violating equivalence at exactly one grid point.

    Scenario 1 sits on the upper band everywhere; scenario k contracts the
    rest of the curve toward the band midline by (k - 1) / (count - 1) while
    the value at ``pin_index`` stays pinned to the band. Every scenario fails
    the (strict) band containment, so rejection rates estimate test size.
    """
    if count < 2:
        raise ValueError("count must be at least 2")
    T = len(base.grid)
    if not 0 <= pin_index < T:
        raise ValueError("pin_index outside the grid")
    targets = np.empty((count, T))
    for k in range(1, count + 1):
        weight = np.full(T, 1.0 - (k - 1) / (count - 1))
        weight[pin_index] = 1.0
        targets[k - 1] = _band_interp(bands, weight)
    truths = tuple(_apply_metric_curve(base, metric, c) for c in targets)
    for c in targets:
        assert not band_contains(bands, c)
    return ScenarioSequence(metric=metric, truths=truths, target_curves=targets, boundary=True)


def interior_scenarios(
    base: TruthSpec,
    bands: BandPair,
    metric: Metric,
    count: int = 9,
    start: float = 0.95,
) -> ScenarioSequence:
    """Scenarios strictly inside the bands, approaching the midline.

    Scenario 1 runs at ``start`` of the half-width from the midline; scenario
    ``count`` is the midline itself. Rejection rates estimate power.
    """
    if count < 2:
        raise ValueError("count must be at least 2")
    if not 0.0 <= start < 1.0:
        raise ValueError("start must lie in [0, 1)")
    T = len(base.grid)
    targets = np.empty((count, T))
    for k in range(1, count + 1):
        weight = np.full(T, start * (count - k) / (count - 1))
        targets[k - 1] = _band_interp(bands, weight)
    truths = tuple(_apply_metric_curve(base, metric, c) for c in targets)
    for c in targets:
        assert band_contains(bands, c)
    return ScenarioSequence(metric=metric, truths=truths, target_curves=targets, boundary=False)


def _frequentist_reject(data, cfg: BootstrapConfig, eq_bands: dict, metric: Metric) -> bool:
    report = run_tost(data, cfg, eq_bands)
    return report.results[metric].reject


def run_study(
    seq: ScenarioSequence,
    replicates: int,
    cfg: BootstrapConfig,
    eq_bands: dict,
    seed: int = 0,
    method: str = "frequentist",
    bayes_runner=None,
) -> StudyResult:
    """Monte Carlo rejection-rate study over a scenario sequence.

    Only the varied metric's rejection is tallied: the other metrics sit at
    their null values and would dilute size/power estimates. Per-replicate
    randomness is keyed by (seed, scenario, replicate), so any subset of the
    study can be reproduced in isolation. Engine failures are recorded and
    excluded from the denominator rather than aborting the study.

    For ``method="bayesian"`` supply ``bayes_runner(data) -> bool`` deciding
    rejection (typically posterior equivalence probability >= gamma).
    """
    if replicates < 50:
        raise ValueError("need at least 50 replicates")
    if method not in ("frequentist", "bayesian"):
        raise ValueError(f"unknown method {method!r}")
    if method == "bayesian" and bayes_runner is None:
        raise ValueError("bayesian method requires bayes_runner")
    metric = seq.metric
    counts = np.zeros(seq.count, dtype=int)
    done = np.zeros(seq.count, dtype=int)
    errors = []
    for s, truth in enumerate(seq.truths, start=1):
        for r in range(replicates):
            ss = np.random.SeedSequence(entropy=seed, spawn_key=(s, r))
            data = generate_dataset(truth, ss)
            try:
                if method == "frequentist":
                    rep_seed = int(ss.generate_state(1)[0] >> 1)
                    rep_cfg = BootstrapConfig(cfg.replicates, cfg.alpha, rep_seed, cfg.design)
                    reject = _frequentist_reject(data, rep_cfg, eq_bands, metric)
                else:
                    reject = bool(bayes_runner(data))
            except Exception as exc:  # noqa: BLE001 - recorded, never fatal
                errors.append((s, r, f"{type(exc).__name__}: {exc}"))
                continue
            done[s - 1] += 1
            counts[s - 1] += int(reject)
    return StudyResult(
        method=method,
        metric=metric.value,
        scenarios=np.arange(1, seq.count + 1),
        replicates=done,
        rejections=counts,
        errors=tuple(errors),
    )
