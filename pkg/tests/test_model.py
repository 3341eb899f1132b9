import numpy as np
import pytest
from scipy.stats import multivariate_normal

from feqt.bayes.kernels import JITTER, MaternKernel, corr_cholesky, matern_corr
from feqt.bayes.model import (
    GPBandPrior,
    PriorSpec,
    log_gp_prior_logdensity,
    mvn_logpdf_chol,
    paired_block_logpdf,
    simplified_corr,
)
from feqt.fdata import BandKind, equispaced_grid, make_cosine_bands


@pytest.fixture
def grid8():
    return equispaced_grid(8)


class TestPairedBlockLogpdf:
    def test_matches_scipy_bivariate(self, rng):
        for _ in range(10):
            v1, v2 = rng.uniform(0.2, 3.0, 2)
            rho = rng.uniform(-0.9, 0.9)
            m1, m2 = rng.normal(size=2)
            y1, y2 = rng.normal(size=2)
            cov = np.array(
                [[v1, rho * np.sqrt(v1 * v2)], [rho * np.sqrt(v1 * v2), v2]]
            )
            expected = multivariate_normal(mean=[m1, m2], cov=cov).logpdf([y1, y2])
            got = paired_block_logpdf(y1, y2, m1, m2, v1, v2, rho)
            assert got == pytest.approx(expected, rel=1e-12)


class TestSimplifiedCorrelation:
    def test_rejects_unit_correlation(self):
        with pytest.raises(ValueError, match="< 1"):
            simplified_corr([0.5, 1.0])

    def test_block_determinants(self):
        c = simplified_corr([0.0, 0.5, -0.5])
        np.testing.assert_allclose(c.block_determinants(), [1.0, 0.75, 0.75])

    def test_loglik_sums_blocks(self, rng, grid8):
        T = len(grid8)
        rho = rng.uniform(-0.8, 0.8, T)
        c = simplified_corr(rho)
        y = rng.normal(size=(5, 2, T))
        mean = rng.normal(size=(2, T))
        sigma2 = rng.uniform(0.5, 2.0, (2, T))
        total = c.loglik(y, mean, sigma2)
        blocks = c.block_logpdf(y, mean, sigma2)
        assert blocks.shape == (5, T)
        assert total == pytest.approx(blocks.sum(), rel=1e-12)
        # against scipy block by block
        k, t = 2, 3
        cov = np.array(
            [
                [sigma2[0, t], rho[t] * np.sqrt(sigma2[0, t] * sigma2[1, t])],
                [rho[t] * np.sqrt(sigma2[0, t] * sigma2[1, t]), sigma2[1, t]],
            ]
        )
        expected = multivariate_normal(mean=mean[:, t], cov=cov).logpdf(y[k, :, t])
        assert blocks[k, t] == pytest.approx(expected, rel=1e-12)


class TestMvnLogpdf:
    def test_matches_scipy(self, rng, grid8):
        corr = matern_corr(MaternKernel(0.3), grid8)
        cov = 0.7 * corr + 0.7 * JITTER * np.eye(len(grid8))
        chol = np.sqrt(0.7) * corr_cholesky(corr)
        mean = rng.normal(size=len(grid8))
        x = rng.normal(size=len(grid8))
        expected = multivariate_normal(mean=mean, cov=cov).logpdf(x)
        assert mvn_logpdf_chol(x, mean, chol) == pytest.approx(expected, rel=1e-9)

    def test_gp_prior_density_consistent(self, rng, grid8):
        kernel = MaternKernel(0.3, 0.5)
        corr = matern_corr(kernel, grid8)
        chol = np.sqrt(0.5) * corr_cholesky(corr)
        mean = np.zeros(len(grid8))
        x = rng.normal(size=len(grid8))
        assert log_gp_prior_logdensity(x, mean, kernel, grid8) == pytest.approx(
            mvn_logpdf_chol(x, mean, chol), rel=1e-12
        )


class TestPriorSpec:
    def test_band_kind_enforcement(self, grid8):
        add = make_cosine_bands(grid8, BandKind.ADDITIVE)
        mult = make_cosine_bands(grid8, BandKind.MULTIPLICATIVE)
        good = PriorSpec(
            mean_prior=GPBandPrior(0.3, 0.1, add),
            error_var_prior=GPBandPrior(0.3, 0.1, mult),
            reffect_var_prior=GPBandPrior(0.3, 0.1, mult),
        )
        assert good.gamma == 0.95
        with pytest.raises(ValueError, match="additive"):
            PriorSpec(GPBandPrior(0.3, 0.1, mult), GPBandPrior(0.3, 0.1, mult), GPBandPrior(0.3, 0.1, mult))
        with pytest.raises(ValueError, match="multiplicative"):
            PriorSpec(GPBandPrior(0.3, 0.1, add), GPBandPrior(0.3, 0.1, add), GPBandPrior(0.3, 0.1, mult))
        with pytest.raises(ValueError, match="gamma"):
            PriorSpec(
                GPBandPrior(0.3, 0.1, add), GPBandPrior(0.3, 0.1, mult),
                GPBandPrior(0.3, 0.1, mult), gamma=1.5,
            )

    def test_offsets_log_for_multiplicative(self, grid8):
        mult = make_cosine_bands(grid8, BandKind.MULTIPLICATIVE)
        lo, hi = GPBandPrior(0.3, 0.1, mult).offsets()
        np.testing.assert_allclose(lo, np.log(mult.lower))
        np.testing.assert_allclose(hi, np.log(mult.upper))
        add = make_cosine_bands(grid8, BandKind.ADDITIVE)
        lo, hi = GPBandPrior(0.3, 0.1, add).offsets()
        np.testing.assert_allclose(hi, add.upper)
