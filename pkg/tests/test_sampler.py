import numpy as np
import pytest

from feqt.bayes import GPBandPrior, PriorSpec, run_mwg
from feqt.bayes.sampler import MwgSampler, _chain_rng, split_rhat
from feqt.fdata import BandKind, equispaced_grid, make_cosine_bands

from conftest import make_grouped


def small_prior(grid):
    add = make_cosine_bands(grid, BandKind.ADDITIVE)
    mult = make_cosine_bands(grid, BandKind.MULTIPLICATIVE)
    return PriorSpec(
        mean_prior=GPBandPrior(0.3, 0.1, add),
        error_var_prior=GPBandPrior(0.3, 0.1, mult),
        reffect_var_prior=GPBandPrior(0.3, 0.1, mult),
    )


class TestSplitRhat:
    def test_well_mixed_chains_near_one(self, rng):
        x = rng.normal(size=(4, 400, 3))
        r = split_rhat(x)
        assert r.shape == (3,)
        assert np.all(r < 1.05)

    def test_separated_chains_flagged(self, rng):
        x = rng.normal(size=(2, 200, 2))
        x[1] += 5.0
        assert np.all(split_rhat(x) > 1.5)

    def test_within_chain_drift_flagged(self, rng):
        # split halves catch a trend inside a single chain
        x = rng.normal(size=(2, 400, 1)) + np.linspace(0, 5, 400)[None, :, None]
        assert split_rhat(x)[0] > 1.5


class TestRunMwg:
    def _run(self, seed=3):
        rng = np.random.default_rng(0)
        data = make_grouped(rng, n_groups=4, group_size=4, n_points=5)
        prior = small_prior(data.grid)
        return run_mwg(data, prior, chains=2, iters=240, burnin=40, thin=10, seed=seed)

    def test_shapes_and_labels(self):
        d = self._run()
        assert d.theta.shape == (40, 5)
        assert d.lam.shape == (40, 5) and np.all(d.lam > 0.0)
        assert d.psi.shape == (40, 5) and np.all(d.psi > 0.0)
        np.testing.assert_array_equal(np.unique(d.chain), [0, 1])
        assert d.indicators.shape == (40, 3)
        assert set(np.unique(d.indicators)) <= {0, 1}
        assert set(d.rhat) == {"theta", "lambda", "psi"}
        assert set(d.acceptance) == {
            "leps_1", "leps_2", "lalp_1", "lalp_2", "rho_e", "rho_a",
        }

    def test_deterministic_in_seed(self):
        a = self._run(seed=3)
        b = self._run(seed=3)
        np.testing.assert_array_equal(a.theta, b.theta)
        np.testing.assert_array_equal(a.lam, b.lam)
        c = self._run(seed=4)
        assert not np.array_equal(a.theta, c.theta)

    def test_iters_must_exceed_burnin(self):
        rng = np.random.default_rng(0)
        data = make_grouped(rng, n_points=5)
        with pytest.raises(ValueError, match="exceed burnin"):
            run_mwg(data, small_prior(data.grid), chains=1, iters=10, burnin=10)


class TestSamplerCore:
    def test_prior_init_and_data_simulation(self, rng):
        data = make_grouped(rng, n_groups=3, group_size=4, n_points=6)
        sampler = MwgSampler(data, small_prior(data.grid))
        sampler.fixed_hypers = True
        r = _chain_rng(9, 0)
        T = 6
        state = sampler.init_from_prior(r, np.zeros(T), np.full(T, -1.0), np.full(T, -2.0))
        assert state["alpha"].shape == (3, 2, T)
        assert np.all(np.abs(state["rho_e"]) < 1.0)
        before = sampler.y.copy()
        sampler.simulate_data(state, r)
        assert sampler.y.shape == before.shape
        assert not np.array_equal(sampler.y, before)
        # a sweep on simulated data keeps the state finite
        sampler.sweep(state, r)
        for key in ("mu", "leps", "lalp", "rho_e", "rho_a"):
            assert np.all(np.isfinite(state[key]))
        # fixed hyper-means must not move
        np.testing.assert_array_equal(state["mu0"], np.zeros(T))
        np.testing.assert_array_equal(state["tau_e"], np.full(T, -1.0))

    def test_zero_variance_data_simulation(self, rng):
        data = make_grouped(rng, n_groups=3, group_size=4, n_points=4)
        sampler = MwgSampler(data, small_prior(data.grid))
        r = _chain_rng(2, 0)
        state = sampler.init_from_data(r)
        state["leps"] = np.full((2, 4), -60.0)  # essentially noiseless
        sampler.simulate_data(state, r)
        np.testing.assert_allclose(
            sampler.y, state["alpha"][data.group_labels()], atol=1e-10
        )
