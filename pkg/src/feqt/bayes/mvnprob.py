"""Multivariate normal rectangle probabilities and prior-scale calibration.

The rectangle probability uses randomized quasi-Monte Carlo with the
sequential-conditioning (separation-of-variables) reparameterization: the
integrand is a product of conditional one-dimensional normal probabilities
driven by a scrambled Sobol sequence. Because the estimate is a product of
conditional probabilities, tiny probabilities retain good relative accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm, qmc

from ..fdata import BandKind, BandPair, Grid
from .kernels import MaternKernel, matern_corr, JITTER

_PHI_EPS = 1e-15


class AccuracyError(RuntimeError):
    """Requested accuracy was not reached within the iteration cap."""


@dataclass(frozen=True)
class RectangleProb:
    estimate: float
    error: float  # estimated standard error


def _ordered_cholesky(cov: np.ndarray, lower: np.ndarray, upper: np.ndarray):
    """Variable-reordered Cholesky factorization (Genz ordering).

    At each stage the variable with the smallest conditional rectangle
    probability is pivoted to the front, which concentrates the product's
    variation in the early (well-sampled) QMC coordinates.
    """
    d = cov.shape[0]
    c = cov.copy() + JITTER * np.eye(d)
    a = lower.copy()
    b = upper.copy()
    L = np.zeros((d, d))
    y = np.zeros(d)
    order = np.arange(d)
    for i in range(d):
        denom = np.sqrt(np.maximum(np.diag(c)[i:] - np.sum(L[i:, :i] ** 2, axis=1), 1e-300))
        ta = (a[i:] - L[i:, :i] @ y[:i]) / denom
        tb = (b[i:] - L[i:, :i] @ y[:i]) / denom
        p = norm.cdf(tb) - norm.cdf(ta)
        k = i + int(np.argmin(p))
        if k != i:
            for arr in (a, b, y):
                arr[[i, k]] = arr[[k, i]]
            order[[i, k]] = order[[k, i]]
            c[[i, k], :] = c[[k, i], :]
            c[:, [i, k]] = c[:, [k, i]]
            L[[i, k], :] = L[[k, i], :]
        L[i, i] = np.sqrt(max(c[i, i] - np.sum(L[i, :i] ** 2), 1e-300))
        if i + 1 < d:
            L[i + 1 :, i] = (c[i + 1 :, i] - L[i + 1 :, :i] @ L[i, :i]) / L[i, i]
        # midpoint surrogate for the conditional expectation used in ordering
        ai = (a[i] - L[i, :i] @ y[:i]) / L[i, i]
        bi = (b[i] - L[i, :i] @ y[:i]) / L[i, i]
        pa, pb = norm.cdf(ai), norm.cdf(bi)
        y[i] = norm.ppf(np.clip(0.5 * (pa + pb), _PHI_EPS, 1.0 - _PHI_EPS))
    return L, a, b


def _genz_batch(L, a, b, u):
    """Evaluate the sequential-conditioning integrand at QMC points ``u``.

    ``u`` has shape (n, d-1); returns n probability estimates.
    """
    n = u.shape[0]
    d = a.size
    y = np.zeros((n, d))
    partial = np.zeros(n)
    lo = norm.cdf(a[0] / L[0, 0])
    hi = norm.cdf(b[0] / L[0, 0])
    p = np.full(n, hi - lo)
    lo_i = np.full(n, lo)
    hi_i = np.full(n, hi)
    for i in range(1, d):
        z = lo_i + u[:, i - 1] * (hi_i - lo_i)
        y[:, i - 1] = norm.ppf(np.clip(z, _PHI_EPS, 1.0 - _PHI_EPS))
        partial = y[:, :i] @ L[i, :i]
        lo_i = norm.cdf((a[i] - partial) / L[i, i])
        hi_i = norm.cdf((b[i] - partial) / L[i, i])
        p *= np.maximum(hi_i - lo_i, 0.0)
    return p


def mvn_rectangle_prob(
    mean,
    cov,
    lower,
    upper,
    accuracy: float = 1e-3,
    *,
    rel_accuracy: float = None,
    seed: int = 0,
    n_randomizations: int = 12,
    max_points_per_rand: int = 1 << 17,
) -> RectangleProb:
    """P{lower < X < upper} for X ~ MVN(mean, cov), with a standard error.

    Runs ``n_randomizations`` independently scrambled Sobol streams and doubles
    the per-stream sample until the standard error of the stream means falls
    below ``accuracy``. When ``rel_accuracy`` is given, a standard error below
    ``rel_accuracy * estimate`` also stops; use that form for tail
    probabilities where an absolute tolerance is meaningless.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    a = np.asarray(lower, dtype=float) - mean
    b = np.asarray(upper, dtype=float) - mean
    if np.any(a >= b):
        raise ValueError("lower must be strictly below upper")
    d = a.size
    if d == 1:
        s = np.sqrt(cov[0, 0])
        return RectangleProb(float(norm.cdf(b[0] / s) - norm.cdf(a[0] / s)), 0.0)

    L, a, b = _ordered_cholesky(cov, a, b)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    engines = [
        qmc.Sobol(d - 1, scramble=True, seed=rng.integers(2**63))
        for _ in range(n_randomizations)
    ]
    sums = np.zeros(n_randomizations)
    counts = 0
    n = 1 << 10
    while True:
        for k, eng in enumerate(engines):
            u = eng.random(n)
            sums[k] += _genz_batch(L, a, b, u).sum()
        counts += n
        means = sums / counts
        est = float(means.mean())
        se = float(means.std(ddof=1) / np.sqrt(n_randomizations))
        tol = accuracy
        if rel_accuracy is not None:
            tol = max(tol, abs(est) * rel_accuracy)
        if se <= tol:
            return RectangleProb(est, se)
        if counts >= max_points_per_rand:
            raise AccuracyError(
                f"standard error {se:.3g} above requested accuracy {accuracy:.3g} "
                f"after {counts} points per randomization"
            )
        n = counts  # double the total


def _band_rectangle(bands: BandPair):
    """Rectangle and mixture component offsets for a band pair.

    Additive bands are used as-is; multiplicative bands are mapped to the log
    scale. Returns (lower, upper, component_means) where component_means are
    the two mixture centers (the band curves themselves, on the working scale).
    """
    if bands.kind is BandKind.MULTIPLICATIVE:
        lo, hi = np.log(bands.lower), np.log(bands.upper)
    else:
        lo, hi = bands.lower, bands.upper
    return lo, hi, (lo, hi)


def prior_equivalence_prob(
    range_a: float,
    s2: float,
    bands: BandPair,
    grid: Grid,
    accuracy: float = 1e-3,
    *,
    rel_accuracy: float = None,
    seed: int = 0,
) -> RectangleProb:
    """Prior probability that the metric curve falls entirely inside the bands.

    The difference-of-curves prior implied by the band-centred construction is
    a 50/50 mixture of GPs with means at the lower and upper band and
    covariance ``2 * s2 * Matern(range_a)``; multiplicative metrics are
    handled on the log scale.
    """
    lo, hi, centers = _band_rectangle(bands)
    cov = 2.0 * s2 * matern_corr(MaternKernel(range_a), grid)
    parts = [
        mvn_rectangle_prob(m, cov, lo, hi, accuracy, rel_accuracy=rel_accuracy, seed=seed + i)
        for i, m in enumerate(centers)
    ]
    est = 0.5 * (parts[0].estimate + parts[1].estimate)
    se = 0.5 * np.hypot(parts[0].error, parts[1].error)
    return RectangleProb(float(est), float(se))


def calibrate_prior_scale(
    range_a: float,
    bands: BandPair,
    grid: Grid,
    target: float,
    *,
    rel_tol: float = 1e-3,
    seed: int = 0,
    log_s2_bracket=(-12.0, 8.0),
) -> float:
    """Solve for the prior scale s2 placing ``target`` mass in the band region.

    Root-finds on log(s2): larger scales push the mixture mass away from the
    rectangle, so the probability is monotone decreasing in s2.
    """
    if not 0.0 < target < 1.0:
        raise ValueError("target probability must lie in (0, 1)")

    def f(log_s2):
        p = prior_equivalence_prob(
            range_a, float(np.exp(log_s2)), bands, grid, rel_tol * target,
            rel_accuracy=rel_tol, seed=seed,
        )
        return np.log(p.estimate) - np.log(target)

    lo, hi = log_s2_bracket
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0.0:
        raise ValueError("target probability not attainable on the bracket")
    root = brentq(f, lo, hi, xtol=1e-4)
    return float(np.exp(root))
