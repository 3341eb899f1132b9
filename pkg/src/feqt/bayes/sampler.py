"""Metropolis-within-Gibbs sampler for the hierarchical heteroscedastic model.

The pointwise-factorized correlation makes the mean curves, random effects,
hyper-means, and mixture indicators conjugate; only the log-variance curves
(blocked random-walk Metropolis with prior-correlation-shaped proposals) and
the cross-correlations (per-point Metropolis on the Fisher-z scale) need
Metropolis steps. Proposal scales adapt toward 20-40% acceptance during
burn-in and are frozen afterwards, preserving detailed balance for every
retained draw.

Chain c draws only from a substream keyed by (seed, c), so multi-chain output
is independent of execution order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from ..fdata import GroupedPairedSample
from .kernels import matern_corr, corr_cholesky
from .model import PriorSpec
from .posterior import PosteriorDraws

_LOG_2PI = float(np.log(2.0 * np.pi))
_TARGET_ACCEPT = 0.3


class SamplerDivergenceError(RuntimeError):
    """Non-finite log-posterior; carries a dump of the offending state."""

    def __init__(self, message, state):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class MwgOptions:
    """Tuning knobs with defaults that match the reference run schedule."""

    chains: int = 3
    iters: int = 10500
    burnin: int = 500
    thin: int = 10
    target_accept: float = _TARGET_ACCEPT
    rhat_threshold: float = 1.1


def _chain_rng(seed: int, chain: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, 0x6D77670000 + chain], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _inv2x2(a, b, c):
    """Inverse entries of symmetric 2x2 [[a, b], [b, c]] (elementwise arrays)."""
    det = a * c - b * b
    return c / det, -b / det, a / det


def _chol2x2(a, b, c):
    """Cholesky entries (l11, l21, l22) of symmetric 2x2 covariance arrays."""
    l11 = np.sqrt(a)
    l21 = b / l11
    l22 = np.sqrt(np.maximum(c - l21 * l21, 1e-300))
    return l11, l21, l22


def _pair_loglik_terms(l1, l2, rho, s11, s22, s12, count):
    """Per-gridpoint log-likelihood of `count` paired observations with
    log-variances (l1, l2), cross-correlation rho, and residual cross-products
    (s11, s22, s12)."""
    omr2 = 1.0 - rho * rho
    e1 = np.exp(-l1)
    e2 = np.exp(-l2)
    e12 = np.exp(-0.5 * (l1 + l2))
    quad = s11 * e1 - 2.0 * rho * s12 * e12 + s22 * e2
    return (
        -count * _LOG_2PI
        - 0.5 * count * (l1 + l2 + np.log(omr2))
        - 0.5 * quad / omr2
    )


class MwgSampler:
    """One-chain sampler core; :func:`run_mwg` orchestrates multiple chains.

    The class also exposes prior simulation and data regeneration so the
    Geweke-style successive-conditional check can reuse the exact conditional
    updates it validates.
    """

    def __init__(self, data: GroupedPairedSample, prior: PriorSpec):
        self.grid = data.grid
        self.T = len(data.grid)
        self.A = data.n_groups
        self.sizes = data.group_sizes
        self.N = data.n_total
        self.labels = data.group_labels()
        self.y = data.stacked()  # (N, 2, T)
        self.ybar_group = np.stack(
            [self.y[self.labels == i].mean(axis=0) for i in range(self.A)]
        )  # (A, 2, T)
        self.prior = prior

        eye = np.eye(self.T)

        def family(p):
            corr = matern_corr(p.kernel(), self.grid)
            lcorr = corr_cholesky(corr)
            cov = p.scale_s2 * corr
            lcov = np.sqrt(p.scale_s2) * lcorr
            prec = cho_solve((np.linalg.cholesky(cov + 1e-10 * eye), True), eye)
            return lcorr, lcov, prec

        self.Lmu_corr, self.Lmu_cov, self.Pmu = family(prior.mean_prior)
        self.Le_corr, self.Le_cov, self.Pe = family(prior.error_var_prior)
        self.La_corr, self.La_cov, self.Pa = family(prior.reffect_var_prior)
        self.mu_offsets = prior.mean_prior.offsets()
        self.e_offsets = prior.error_var_prior.offsets()
        self.a_offsets = prior.reffect_var_prior.offsets()

        # Metropolis proposal scales; adapted during burn-in only
        self.steps = {
            "leps_1": 0.1, "leps_2": 0.1, "lalp_1": 0.3, "lalp_2": 0.3,
            "rho_e": 0.5, "rho_a": 0.8,
        }
        self.accept_counts = {k: 0 for k in self.steps}
        self.proposal_counts = {k: 0 for k in self.steps}
        self.inner_repeats = 5
        self.fixed_hypers = False  # Geweke mode: skip improper-prior updates

    # ----- initialization -------------------------------------------------

    def init_from_data(self, rng: np.random.Generator, spread: float = 0.0) -> dict:
        """Moment-based initial state; ``spread`` adds overdispersion for
        distinct chain starting points."""
        within = self.y - self.ybar_group[self.labels]
        v_eps = np.maximum((within**2).sum(axis=0) / max(self.N - self.A, 1), 1e-8)
        mu = self.ybar_group.mean(axis=0)
        dev_a = self.ybar_group - mu
        v_alp = np.maximum(dev_a.var(axis=0, ddof=1), 1e-8)
        with np.errstate(invalid="ignore", divide="ignore"):
            r_e = (within[:, 0, :] * within[:, 1, :]).sum(axis=0) / (
                np.sqrt((within[:, 0, :] ** 2).sum(axis=0) * (within[:, 1, :] ** 2).sum(axis=0))
            )
            r_a = (dev_a[:, 0, :] * dev_a[:, 1, :]).sum(axis=0) / (
                np.sqrt((dev_a[:, 0, :] ** 2).sum(axis=0) * (dev_a[:, 1, :] ** 2).sum(axis=0))
            )
        r_e = np.clip(np.nan_to_num(r_e), -0.9, 0.9)
        r_a = np.clip(np.nan_to_num(r_a), -0.9, 0.9)
        jit = lambda shape: spread * rng.standard_normal(shape)
        state = {
            "mu": mu + jit((2, self.T)) * 0.05,
            "alpha": self.ybar_group.copy(),
            "leps": np.log(v_eps) + jit((2, self.T)) * 0.3,
            "lalp": np.log(v_alp) + jit((2, self.T)) * 0.3,
            "rho_e": r_e,
            "rho_a": r_a,
            "mu0": mu.mean(axis=0),
            "tau_e": np.log(v_eps).mean(axis=0),
            "tau_a": np.log(v_alp).mean(axis=0),
            "d_mu": int(rng.integers(2)),
            "d_e": int(rng.integers(2)),
            "d_a": int(rng.integers(2)),
        }
        return state

    def init_from_prior(self, rng: np.random.Generator, mu0, tau_e, tau_a) -> dict:
        """Draw every parameter from its prior with the hyper-means fixed.

        The flat hyper-mean priors are improper, so prior simulation (needed by
        the Geweke check) conditions on supplied values and the corresponding
        Gibbs updates are skipped while ``fixed_hypers`` is set.
        """
        mu0 = np.asarray(mu0, float)
        tau_e = np.asarray(tau_e, float)
        tau_a = np.asarray(tau_a, float)
        d_mu, d_e, d_a = (int(rng.integers(2)) for _ in range(3))
        z = lambda: rng.standard_normal(self.T)
        mu1 = mu0 + self.Lmu_cov @ z()
        mu2 = mu0 - self.mu_offsets[d_mu] + self.Lmu_cov @ z()
        leps1 = tau_e + self.Le_cov @ z()
        leps2 = tau_e - self.e_offsets[d_e] + self.Le_cov @ z()
        lalp1 = tau_a + self.La_cov @ z()
        lalp2 = tau_a - self.a_offsets[d_a] + self.La_cov @ z()
        state = {
            "mu": np.stack([mu1, mu2]),
            "alpha": np.zeros((self.A, 2, self.T)),
            "leps": np.stack([leps1, leps2]),
            "lalp": np.stack([lalp1, lalp2]),
            "rho_e": rng.uniform(-1.0, 1.0, self.T),
            "rho_a": rng.uniform(-1.0, 1.0, self.T),
            "mu0": mu0, "tau_e": tau_e, "tau_a": tau_a,
            "d_mu": d_mu, "d_e": d_e, "d_a": d_a,
        }
        state["alpha"] = self._draw_alpha_prior(state, rng)
        return state

    def _draw_alpha_prior(self, state, rng):
        sa1, sa2 = np.exp(0.5 * state["lalp"])
        rho = state["rho_a"]
        a = sa1**2
        b = rho * sa1 * sa2
        c = sa2**2
        l11, l21, l22 = _chol2x2(a, b, c)
        z = rng.standard_normal((self.A, 2, self.T))
        out = np.empty((self.A, 2, self.T))
        out[:, 0, :] = state["mu"][0] + l11 * z[:, 0, :]
        out[:, 1, :] = state["mu"][1] + l21 * z[:, 0, :] + l22 * z[:, 1, :]
        return out

    def simulate_data(self, state, rng) -> None:
        """Replace the observed curves by draws from the likelihood at
        ``state`` (used by the successive-conditional Geweke check)."""
        se1, se2 = np.exp(0.5 * state["leps"])
        rho = state["rho_e"]
        l11, l21, l22 = _chol2x2(se1**2, rho * se1 * se2, se2**2)
        z = rng.standard_normal((self.N, 2, self.T))
        mean = state["alpha"][self.labels]
        y = np.empty_like(z)
        y[:, 0, :] = mean[:, 0, :] + l11 * z[:, 0, :]
        y[:, 1, :] = mean[:, 1, :] + l21 * z[:, 0, :] + l22 * z[:, 1, :]
        self.y = y
        self.ybar_group = np.stack(
            [y[self.labels == i].mean(axis=0) for i in range(self.A)]
        )

    # ----- conjugate updates ---------------------------------------------

    def _update_alpha(self, state, rng):
        v1, v2 = np.exp(state["leps"])
        s12 = state["rho_e"] * np.sqrt(v1 * v2)
        pe11, pe12, pe22 = _inv2x2(v1, s12, v2)  # (T,)
        w1, w2 = np.exp(state["lalp"])
        t12 = state["rho_a"] * np.sqrt(w1 * w2)
        pa11, pa12, pa22 = _inv2x2(w1, t12, w2)
        n = self.sizes[:, None].astype(float)  # (A, 1)
        q11 = n * pe11 + pa11  # (A, T)
        q12 = n * pe12 + pa12
        q22 = n * pe22 + pa22
        yb1 = self.ybar_group[:, 0, :]
        yb2 = self.ybar_group[:, 1, :]
        mu1, mu2 = state["mu"]
        h1 = n * (pe11 * yb1 + pe12 * yb2) + pa11 * mu1 + pa12 * mu2
        h2 = n * (pe12 * yb1 + pe22 * yb2) + pa12 * mu1 + pa22 * mu2
        c11, c12, c22 = _inv2x2(q11, q12, q22)  # posterior covariance entries
        m1 = c11 * h1 + c12 * h2
        m2 = c12 * h1 + c22 * h2
        l11, l21, l22 = _chol2x2(c11, c12, c22)
        z = rng.standard_normal((self.A, 2, self.T))
        state["alpha"][:, 0, :] = m1 + l11 * z[:, 0, :]
        state["alpha"][:, 1, :] = m2 + l21 * z[:, 0, :] + l22 * z[:, 1, :]

    def _update_mu(self, state, rng):
        T = self.T
        w1, w2 = np.exp(state["lalp"])
        t12 = state["rho_a"] * np.sqrt(w1 * w2)
        pa11, pa12, pa22 = _inv2x2(w1, t12, w2)
        abar = state["alpha"].mean(axis=0)  # (2, T)
        P = np.zeros((2 * T, 2 * T))
        P[:T, :T] = self.Pmu + np.diag(self.A * pa11)
        P[T:, T:] = self.Pmu + np.diag(self.A * pa22)
        od = np.diag(self.A * pa12)
        P[:T, T:] = od
        P[T:, :T] = od
        h = np.empty(2 * T)
        prior2 = state["mu0"] - self.mu_offsets[state["d_mu"]]
        h[:T] = self.Pmu @ state["mu0"] + self.A * (pa11 * abar[0] + pa12 * abar[1])
        h[T:] = self.Pmu @ prior2 + self.A * (pa12 * abar[0] + pa22 * abar[1])
        L = np.linalg.cholesky(P)
        mean = cho_solve((L, True), h)
        draw = mean + solve_triangular(L.T, rng.standard_normal(2 * T), lower=False)
        state["mu"] = draw.reshape(2, T)

    def _update_hyper(self, x1, x2, offset, lcov, rng):
        """Flat-prior hyper-mean draw given the two channel curves."""
        mean = 0.5 * (x1 + x2 + offset)
        return mean + (lcov / np.sqrt(2.0)) @ rng.standard_normal(self.T)

    def _update_indicator(self, x2, hyper, offsets, prec, rng):
        logw = []
        for o in offsets:
            dev = x2 - (hyper - o)
            logw.append(-0.5 * dev @ prec @ dev)
        logw = np.array(logw)
        p1 = 1.0 / (1.0 + np.exp(logw[0] - logw[1]))
        return int(rng.random() < p1)

    # ----- Metropolis updates --------------------------------------------

    def _adapt(self, key, accepted, cycle, adapting):
        self.proposal_counts[key] += 1
        if accepted:
            self.accept_counts[key] += 1
        if adapting:
            rate = 1.0 if accepted else 0.0
            gain = 2.0 / (10.0 + cycle) ** 0.6
            self.steps[key] = float(
                np.exp(np.log(self.steps[key]) + gain * (rate - self.prior_target))
            )

    @property
    def prior_target(self):
        return _TARGET_ACCEPT

    def _resid_sums_eps(self, state):
        dev = self.y - state["alpha"][self.labels]
        s11 = (dev[:, 0, :] ** 2).sum(axis=0)
        s22 = (dev[:, 1, :] ** 2).sum(axis=0)
        s12 = (dev[:, 0, :] * dev[:, 1, :]).sum(axis=0)
        return s11, s22, s12

    def _resid_sums_alp(self, state):
        dev = state["alpha"] - state["mu"]
        s11 = (dev[:, 0, :] ** 2).sum(axis=0)
        s22 = (dev[:, 1, :] ** 2).sum(axis=0)
        s12 = (dev[:, 0, :] * dev[:, 1, :]).sum(axis=0)
        return s11, s22, s12

    def _update_logvar_channel(
        self, state, key, which, j, sums, count, rho_key, hyper, offset,
        prec, lcorr, rng, cycle, adapting,
    ):
        l = state[which]
        s11, s22, s12 = sums
        rho = state[rho_key]
        cur = _pair_loglik_terms(l[0], l[1], rho, s11, s22, s12, count).sum()
        dev = l[j] - (hyper - offset)
        cur += -0.5 * dev @ prec @ dev
        prop_j = l[j] + self.steps[key] * (lcorr @ rng.standard_normal(self.T))
        lp = l.copy()
        lp[j] = prop_j
        new = _pair_loglik_terms(lp[0], lp[1], rho, s11, s22, s12, count).sum()
        devp = prop_j - (hyper - offset)
        new += -0.5 * devp @ prec @ devp
        if not np.isfinite(cur):
            raise SamplerDivergenceError("non-finite log-posterior", dict(state))
        accepted = np.log(rng.random()) < new - cur
        if accepted:
            state[which] = lp
        self._adapt(key, bool(accepted), cycle, adapting)

    def _update_rho(self, state, key, rho_key, sums, count, l, rng, cycle, adapting):
        rho = state[rho_key]
        s11, s22, s12 = sums
        z = np.arctanh(rho)
        zp = z + self.steps[key] * rng.standard_normal(self.T)
        rp = np.tanh(zp)
        cur = _pair_loglik_terms(l[0], l[1], rho, s11, s22, s12, count)
        cur = cur + np.log1p(-rho * rho)  # Fisher-z Jacobian of the flat prior
        new = _pair_loglik_terms(l[0], l[1], rp, s11, s22, s12, count)
        new = new + np.log1p(-rp * rp)
        acc = np.log(rng.random(self.T)) < new - cur
        state[rho_key] = np.where(acc, rp, rho)
        self.proposal_counts[key] += self.T
        self.accept_counts[key] += int(acc.sum())
        # per-point proposals share one scale, adapted on the mean rate
        if adapting:
            gain = 2.0 / (10.0 + cycle) ** 0.6
            self.steps[key] = float(
                np.exp(np.log(self.steps[key]) + gain * (acc.mean() - self.prior_target))
            )

    # ----- one sweep ------------------------------------------------------

    def sweep(self, state, rng, cycle=0, adapting=False):
        self._update_alpha(state, rng)
        self._update_mu(state, rng)
        if not self.fixed_hypers:
            state["mu0"] = self._update_hyper(
                state["mu"][0], state["mu"][1], self.mu_offsets[state["d_mu"]],
                self.Lmu_cov, rng,
            )
        state["d_mu"] = self._update_indicator(
            state["mu"][1], state["mu0"], self.mu_offsets, self.Pmu, rng
        )

        # repeating the cheap Metropolis updates sharpens mixing of the
        # log-variance curves, the sampler's slowest block
        sums_e = self._resid_sums_eps(state)
        for _ in range(self.inner_repeats):
            for j, key in ((0, "leps_1"), (1, "leps_2")):
                offset = 0.0 if j == 0 else self.e_offsets[state["d_e"]]
                self._update_logvar_channel(
                    state, key, "leps", j, sums_e, float(self.N), "rho_e",
                    state["tau_e"], offset, self.Pe, self.Le_corr, rng, cycle, adapting,
                )
        if not self.fixed_hypers:
            state["tau_e"] = self._update_hyper(
                state["leps"][0], state["leps"][1], self.e_offsets[state["d_e"]],
                self.Le_cov, rng,
            )
        state["d_e"] = self._update_indicator(
            state["leps"][1], state["tau_e"], self.e_offsets, self.Pe, rng
        )
        for _ in range(self.inner_repeats):
            self._update_rho(
                state, "rho_e", "rho_e", sums_e, float(self.N), state["leps"],
                rng, cycle, adapting,
            )

        sums_a = self._resid_sums_alp(state)
        for _ in range(self.inner_repeats):
            for j, key in ((0, "lalp_1"), (1, "lalp_2")):
                offset = 0.0 if j == 0 else self.a_offsets[state["d_a"]]
                self._update_logvar_channel(
                    state, key, "lalp", j, sums_a, float(self.A), "rho_a",
                    state["tau_a"], offset, self.Pa, self.La_corr, rng, cycle, adapting,
                )
        if not self.fixed_hypers:
            state["tau_a"] = self._update_hyper(
                state["lalp"][0], state["lalp"][1], self.a_offsets[state["d_a"]],
                self.La_cov, rng,
            )
        state["d_a"] = self._update_indicator(
            state["lalp"][1], state["tau_a"], self.a_offsets, self.Pa, rng
        )
        for _ in range(self.inner_repeats):
            self._update_rho(
                state, "rho_a", "rho_a", sums_a, float(self.A), state["lalp"],
                rng, cycle, adapting,
            )


def split_rhat(x: np.ndarray) -> np.ndarray:
    """Split-R-hat along axis 0 for draws of shape (chains, draws, ...)."""
    c, m = x.shape[:2]
    half = m // 2
    halves = np.concatenate([x[:, :half], x[:, half : 2 * half]], axis=0)
    means = halves.mean(axis=1)
    vars_ = halves.var(axis=1, ddof=1)
    w = vars_.mean(axis=0)
    b = half * means.var(axis=0, ddof=1)
    var_plus = (half - 1) / half * w + b / half
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.sqrt(var_plus / w)
    return np.nan_to_num(out, nan=1.0)


def run_mwg(
    data: GroupedPairedSample,
    prior: PriorSpec,
    chains: int = 3,
    iters: int = 10500,
    burnin: int = 500,
    thin: int = 10,
    seed: int = 0,
) -> PosteriorDraws:
    """Run the Metropolis-within-Gibbs sampler and emit thinned metric draws.

    Returns draws of the three metric curves (variance ratios exponentiated at
    emission), chain labels, acceptance rates, and split-R-hat diagnostics;
    ``rhat_warning`` is set when any coordinate exceeds 1.1.
    """
    if iters <= burnin:
        raise ValueError("iters must exceed burnin")
    sampler = MwgSampler(data, prior)
    T = sampler.T
    per_chain = len(range(burnin, iters, thin))
    theta = np.empty((chains, per_chain, T))
    llam = np.empty((chains, per_chain, T))
    lpsi = np.empty((chains, per_chain, T))
    indicators = np.empty((chains, per_chain, 3), dtype=int)

    for c in range(chains):
        rng = _chain_rng(seed, c)
        state = sampler.init_from_data(rng, spread=0.5 * c)
        keep = 0
        for it in range(iters):
            sampler.sweep(state, rng, cycle=it, adapting=it < burnin)
            if it >= burnin and (it - burnin) % thin == 0:
                theta[c, keep] = state["mu"][0] - state["mu"][1]
                llam[c, keep] = state["leps"][0] - state["leps"][1]
                lpsi[c, keep] = state["lalp"][0] - state["lalp"][1]
                indicators[c, keep] = (state["d_mu"], state["d_e"], state["d_a"])
                keep += 1

    rhat = {
        "theta": split_rhat(theta),
        "lambda": split_rhat(llam),
        "psi": split_rhat(lpsi),
    }
    warn = bool(max(v.max() for v in rhat.values()) > 1.1)
    acc = {
        k: sampler.accept_counts[k] / max(sampler.proposal_counts[k], 1)
        for k in sampler.steps
    }
    chain_ids = np.repeat(np.arange(chains), per_chain)
    flat = lambda a: a.reshape(chains * per_chain, T)
    return PosteriorDraws(
        grid_points=data.grid.points,
        theta=flat(theta),
        lam=np.exp(flat(llam)),
        psi=np.exp(flat(lpsi)),
        chain=chain_ids,
        acceptance=acc,
        rhat=rhat,
        rhat_warning=warn,
        indicators=indicators.reshape(chains * per_chain, 3),
    )
