import numpy as np
import pytest

from feqt.fdata import (
    BandKind,
    BandPair,
    band_contains,
    equispaced_grid,
    make_cosine_bands,
)
from feqt.simlab import (
    ScenarioSequence,
    StudyResult,
    boundary_violation_scenarios,
    default_truth,
    generate_dataset,
    interior_scenarios,
    mixed_outcome_truth,
    run_study,
)
from feqt.tost import BootstrapConfig, Design, Metric
from dataclasses import replace


@pytest.fixture
def grid10():
    return equispaced_grid(10)


class TestTruthSpec:
    def test_default_profile_valid(self, grid10):
        t = default_truth(grid10, 5, 6)
        assert t.n_groups == 5
        np.testing.assert_allclose(t.theta(), 0.0)
        np.testing.assert_allclose(t.lam(), 1.0)
        np.testing.assert_allclose(t.psi(), 1.0)

    def test_validation(self, grid10):
        t = default_truth(grid10)
        with pytest.raises(ValueError, match="shape"):
            replace(t, mu=np.zeros((2, 3)))
        with pytest.raises(ValueError, match="rho_eps"):
            replace(t, rho_eps=np.ones(10))
        with pytest.raises(ValueError, match="positive semidefinite"):
            replace(t, within_corr=-np.eye(10))
        with pytest.raises(ValueError, match="2 groups"):
            replace(t, group_sizes=np.array([5]))


class TestGenerateDataset:
    def test_zero_variances_reproduce_mu(self, grid10):
        t = default_truth(grid10, 3, 4)
        t = replace(t, s2_eps=np.zeros((2, 10)), s2_alpha=np.zeros((2, 10)))
        d = generate_dataset(t, 0)
        for g in d.groups:
            assert np.abs(g.curves_1 - t.mu[0][None]).max() < 1e-12
            assert np.abs(g.curves_2 - t.mu[1][None]).max() < 1e-12

    def test_deterministic_in_seed(self, grid10):
        t = default_truth(grid10, 3, 4)
        a = generate_dataset(t, 7).stacked()
        b = generate_dataset(t, 7).stacked()
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, generate_dataset(t, 8).stacked())

    def test_large_sample_moments(self, grid10):
        t = default_truth(grid10, 200, 200)
        y = generate_dataset(t, 1).stacked()
        total_var = t.s2_eps + t.s2_alpha
        # group effects are shared within a group, so the mean's sampling
        # variance is s2_alpha / A + s2_eps / N
        se = np.sqrt(t.s2_alpha / t.n_groups + t.s2_eps / y.shape[0])
        assert np.all(np.abs(y.mean(axis=0) - t.mu) < 3.5 * se)
        np.testing.assert_allclose(y.var(axis=0, ddof=1), total_var, rtol=0.10)

    def test_cross_channel_correlation_matches(self, grid10):
        t = default_truth(grid10, 2, 5000)
        t = replace(t, s2_alpha=np.zeros((2, 10)))
        y = generate_dataset(t, 3).stacked()
        dev = y - y.mean(axis=0)
        corr = (dev[:, 0] * dev[:, 1]).mean(axis=0) / np.sqrt(
            (dev[:, 0] ** 2).mean(axis=0) * (dev[:, 1] ** 2).mean(axis=0)
        )
        np.testing.assert_allclose(corr, t.rho_eps, atol=0.03)


class TestScenarios:
    def test_boundary_theta_geometry(self, grid10):
        base = default_truth(grid10)
        bands = make_cosine_bands(grid10, BandKind.ADDITIVE)
        seq = boundary_violation_scenarios(base, bands, Metric.THETA)
        assert seq.count == 9 and seq.boundary
        np.testing.assert_allclose(seq.target_curves[0], bands.upper)
        # scenario 9 touches the band only at the pin
        last = seq.target_curves[8]
        assert last[0] == pytest.approx(bands.upper[0])
        np.testing.assert_allclose(last[1:], bands.midline[1:], atol=1e-12)
        for k, truth in enumerate(seq.truths):
            assert not band_contains(bands, seq.target_curves[k])
            np.testing.assert_allclose(truth.theta(), seq.target_curves[k])

    def test_boundary_lambda_log_scale(self, grid10):
        base = default_truth(grid10)
        bands = make_cosine_bands(grid10, BandKind.MULTIPLICATIVE)
        seq = boundary_violation_scenarios(base, bands, Metric.LAMBDA)
        mid_idx = 5
        # halfway scenario sits at the geometric midpoint of midline and band
        k = 5  # weight 1 - 4/8 = 0.5 away from midline
        expected = np.exp(
            np.log(bands.midline[mid_idx])
            + 0.5 * (np.log(bands.upper[mid_idx]) - np.log(bands.midline[mid_idx]))
        )
        assert seq.target_curves[k - 1][mid_idx] == pytest.approx(expected)
        for k, truth in enumerate(seq.truths):
            np.testing.assert_allclose(truth.lam(), seq.target_curves[k])

    def test_interior_scenarios_inside(self, grid10):
        base = default_truth(grid10)
        bands = make_cosine_bands(grid10, BandKind.ADDITIVE)
        seq = interior_scenarios(base, bands, Metric.THETA)
        assert not seq.boundary
        for c in seq.target_curves:
            assert band_contains(bands, c)
        np.testing.assert_allclose(seq.target_curves[8], bands.midline, atol=1e-12)

    def test_pin_index_configurable(self, grid10):
        base = default_truth(grid10)
        bands = make_cosine_bands(grid10, BandKind.ADDITIVE)
        seq = boundary_violation_scenarios(base, bands, Metric.THETA, pin_index=4)
        last = seq.target_curves[8]
        assert last[4] == pytest.approx(bands.upper[4])
        assert last[0] == pytest.approx(bands.midline[0])

    def test_count_validation(self, grid10):
        base = default_truth(grid10)
        bands = make_cosine_bands(grid10, BandKind.ADDITIVE)
        with pytest.raises(ValueError, match="count"):
            boundary_violation_scenarios(base, bands, Metric.THETA, count=1)


def tiny_sequence(grid, metric, target_curves, base):
    truths = []
    from feqt.simlab import _apply_metric_curve

    for c in target_curves:
        truths.append(_apply_metric_curve(base, metric, np.asarray(c, dtype=float)))
    return ScenarioSequence(
        metric=metric,
        truths=tuple(truths),
        target_curves=np.asarray(target_curves, dtype=float),
        boundary=False,
    )


class TestRunStudy:
    def test_wide_bands_always_reject(self, grid10):
        base = default_truth(grid10, 4, 4)
        wide = BandPair(grid10, np.full(10, -50.0), np.full(10, 50.0), BandKind.ADDITIVE)
        seq = tiny_sequence(grid10, Metric.THETA, [np.zeros(10)], base)
        cfg = BootstrapConfig(150, 0.05, 0, Design.RANDOM_EFFECTS_MATCHED)
        res = run_study(seq, 50, cfg, {Metric.THETA: wide}, seed=1)
        assert res.rates[0] == 1.0

    def test_truth_far_outside_never_rejects(self, grid10):
        base = default_truth(grid10, 4, 4)
        bands = make_cosine_bands(grid10, BandKind.ADDITIVE)
        seq = tiny_sequence(grid10, Metric.THETA, [np.full(10, 5.0)], base)
        cfg = BootstrapConfig(150, 0.05, 0, Design.RANDOM_EFFECTS_MATCHED)
        res = run_study(seq, 50, cfg, {Metric.THETA: bands}, seed=1)
        assert res.rates[0] == 0.0

    def test_reproducible(self, grid10):
        base = default_truth(grid10, 4, 4)
        bands = make_cosine_bands(grid10, BandKind.ADDITIVE)
        seq = tiny_sequence(grid10, Metric.THETA, [np.zeros(10)], base)
        cfg = BootstrapConfig(150, 0.05, 0, Design.RANDOM_EFFECTS_MATCHED)
        a = run_study(seq, 50, cfg, {Metric.THETA: bands}, seed=9)
        b = run_study(seq, 50, cfg, {Metric.THETA: bands}, seed=9)
        np.testing.assert_array_equal(a.rejections, b.rejections)

    def test_engine_errors_recorded_not_fatal(self, grid10):
        base = default_truth(grid10, 4, 4)
        # all-zero variances make every curve identical, so each replicate
        # hits a degenerate-spread error inside the engine
        base = replace(base, s2_eps=np.zeros((2, 10)), s2_alpha=np.zeros((2, 10)))
        bands = make_cosine_bands(grid10, BandKind.ADDITIVE)
        seq = tiny_sequence(grid10, Metric.THETA, [np.zeros(10)], base)
        cfg = BootstrapConfig(150, 0.05, 0, Design.RANDOM_EFFECTS_MATCHED)
        res = run_study(seq, 50, cfg, {Metric.THETA: bands}, seed=2)
        assert res.replicates[0] == 0
        assert len(res.errors) == 50

    def test_validation(self, grid10):
        base = default_truth(grid10, 4, 4)
        bands = make_cosine_bands(grid10, BandKind.ADDITIVE)
        seq = tiny_sequence(grid10, Metric.THETA, [np.zeros(10)], base)
        cfg = BootstrapConfig(150, 0.05, 0, Design.RANDOM_EFFECTS_MATCHED)
        with pytest.raises(ValueError, match="50 replicates"):
            run_study(seq, 10, cfg, {Metric.THETA: bands})
        with pytest.raises(ValueError, match="bayes_runner"):
            run_study(seq, 50, cfg, {Metric.THETA: bands}, method="bayesian")

    def test_bayesian_arm_uses_runner(self, grid10):
        base = default_truth(grid10, 4, 4)
        bands = make_cosine_bands(grid10, BandKind.ADDITIVE)
        seq = tiny_sequence(grid10, Metric.THETA, [np.zeros(10)], base)
        cfg = BootstrapConfig(150, 0.05, 0, Design.RANDOM_EFFECTS_MATCHED)
        calls = []

        def runner(data):
            calls.append(data.n_total)
            return len(calls) % 2 == 0

        res = run_study(
            seq, 50, cfg, {Metric.THETA: bands}, seed=1,
            method="bayesian", bayes_runner=runner,
        )
        assert len(calls) == 50
        assert res.rejections[0] == 25


class TestMixedOutcomeProfile:
    def test_split_decision_pattern(self):
        """Regression: the packaged profile keeps its three-way split —
        location rejects, the error-variance ratio fails two-sided but passes
        noninferiority, the random-effect variance ratio fails."""
        from feqt.fdata import equispaced_grid
        from feqt.tost import Design, TostDecision, run_tost

        grid = equispaced_grid(25)
        truth = mixed_outcome_truth(grid)
        data = generate_dataset(truth, 0)
        bands = {
            Metric.THETA: make_cosine_bands(grid, BandKind.ADDITIVE),
            Metric.LAMBDA: make_cosine_bands(grid, BandKind.MULTIPLICATIVE),
            Metric.PSI: make_cosine_bands(grid, BandKind.MULTIPLICATIVE),
        }
        cfg = BootstrapConfig(1000, 0.05, 5, Design.RANDOM_EFFECTS_MATCHED)
        rep = run_tost(data, cfg, bands)
        assert rep.results[Metric.THETA].reject
        assert not rep.results[Metric.LAMBDA].reject
        assert rep.lambda_noninferiority is TostDecision.REJECT_NONEQUIVALENCE
        assert not rep.results[Metric.PSI].reject
        assert rep.decision is TostDecision.FAIL_TO_REJECT


class TestStudyResult:
    def test_serialization(self):
        res = StudyResult(
            method="frequentist",
            metric="theta",
            scenarios=np.array([1, 2]),
            replicates=np.array([100, 100]),
            rejections=np.array([5, 50]),
        )
        csv = res.to_csv_text()
        assert csv.splitlines()[0] == "scenario,replicates,rejections,rate,se"
        assert "0.05" in csv
        import json

        payload = json.loads(res.to_json_text())
        assert payload["rates"] == [0.05, 0.5]

    def test_invariant(self):
        with pytest.raises(ValueError, match="more rejections"):
            StudyResult(
                method="frequentist", metric="theta",
                scenarios=np.array([1]), replicates=np.array([10]),
                rejections=np.array([11]),
            )
