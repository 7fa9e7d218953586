import numpy as np
import pytest

from logitprob.baselines import (
    TS_BOUNDS,
    TemperatureModel,
    apply_temperature,
    fit_temperature,
    fit_temperature_arrays,
    golden_section,
    nll,
)
from logitprob.errors import EmptyInput, MissingLabel, NonPositiveTemperature
from logitprob.inference import Method, softmax, softmax_array
from logitprob.model import LogitRecord


def calibrated_set(n, nc=4, spread=2.0, seed=0):
    """Logits with labels drawn from their own softmax: calibrated at ts = 1."""
    rng = np.random.default_rng(seed)
    logits = rng.normal(0, spread, size=(n, nc))
    p = softmax_array(logits)
    u = rng.random(n)
    labels = (p.cumsum(axis=1) < u[:, None]).sum(axis=1)
    return logits, np.minimum(labels, nc - 1)


class TestApplyTemperature:
    def test_identity(self):
        z = np.array([0.3, -1.2, 2.5])
        assert np.array_equal(apply_temperature(z, 1.0).scores, softmax(z).scores)
        assert apply_temperature(z, 1.0).method is Method.TS

    def test_flattening(self):
        np.testing.assert_allclose(apply_temperature([2, 0], 1e6).scores, [0.5, 0.5], atol=1e-6)

    def test_formula(self):
        np.testing.assert_allclose(apply_temperature([1, 2, 3], 2).scores, softmax([0.5, 1, 1.5]).scores,
                                   atol=1e-15)
        np.testing.assert_allclose(apply_temperature([1, 2, 3], 2).scores, [0.18632, 0.30720, 0.50648],
                                   atol=1e-5)

    @pytest.mark.parametrize("ts", [0.0, -1.0, float("inf"), float("nan")])
    def test_rejects(self, ts):
        with pytest.raises(NonPositiveTemperature):
            apply_temperature([1, 2], ts)
        with pytest.raises(NonPositiveTemperature):
            TemperatureModel(ts)

    def test_argmax_preserved(self):
        rng = np.random.default_rng(1)
        for z in rng.normal(0, 5, size=(2000, 5)):
            ts = float(rng.uniform(0.05, 20))
            assert apply_temperature(z, ts).predicted_class == softmax(z).predicted_class


class TestNLL:
    def test_matches_direct_formula(self):
        logits, labels = calibrated_set(50, seed=3)
        for ts in (0.3, 1.0, 4.0):
            p = softmax_array(logits / ts)
            direct = -np.log(p[np.arange(50), labels]).sum()
            assert nll(logits, labels, ts) == pytest.approx(direct, rel=1e-12)

    def test_tiny_losses_stay_ordered(self):
        z, y = np.array([[5.0, 0.0]]), np.array([0])
        assert nll(z, y, 0.05) < nll(z, y, 0.06) < nll(z, y, 1.0)


class TestGoldenSection:
    def test_against_grid_oracle(self):
        f = lambda t: (np.log(t) - 0.7) ** 2
        x, _ = golden_section(f, 0.05, 20, 1e-6)
        grid = np.linspace(0.05, 20, 200_001)
        assert x == pytest.approx(grid[np.argmin(f(grid))], abs=2e-4)
        assert x == pytest.approx(np.exp(0.7), abs=1e-5)


class TestFitTemperature:
    def test_calibrated_recovers_one(self):
        logits, labels = calibrated_set(5000, seed=4)
        assert fit_temperature_arrays(logits, labels).ts == pytest.approx(1.0, abs=0.1)

    def test_scaled_by_three(self):
        logits, labels = calibrated_set(5000, seed=4)
        assert fit_temperature_arrays(3 * logits, labels).ts == pytest.approx(3.0, abs=0.3)

    def test_single_confident_record_hits_lower_bound(self):
        tm = fit_temperature([LogitRecord("x", np.array([5.0, 0.0]), 0)])
        assert tm.ts == TS_BOUNDS[0]

    def test_single_wrong_record_hits_upper_bound(self):
        tm = fit_temperature([LogitRecord("x", np.array([5.0, 0.0]), 1)])
        assert tm.ts == TS_BOUNDS[1]

    def test_not_worse_than_identity(self):
        for seed in range(5):
            logits, labels = calibrated_set(800, seed=seed)
            scale = [0.5, 1, 2, 3, 7][seed]
            ts = fit_temperature_arrays(scale * logits, labels).ts
            assert nll(scale * logits, labels, ts) <= nll(scale * logits, labels, 1.0) + 1e-9

    def test_errors(self):
        with pytest.raises(EmptyInput):
            fit_temperature([])
        with pytest.raises(MissingLabel):
            fit_temperature([LogitRecord("x", np.zeros(2), None)])
