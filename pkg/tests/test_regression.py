import numpy as np
import pytest

from bscaling.errors import DimensionMismatch, DomainError, ZeroVariance
from bscaling.regression import adjusted_r2


class TestAdjustedR2:
    def test_exact_log_fit(self):
        x = np.linspace(-1, 1, 30)
        res = adjusted_r2(x, np.exp(2 + 3 * x), log_response=True)
        assert res.alpha0 == pytest.approx(2, abs=1e-8)
        assert res.alpha1 == pytest.approx(3, abs=1e-8)
        assert res.adj_r2 == pytest.approx(1, abs=1e-8)

    def test_three_points(self):
        res = adjusted_r2([0.0, 1.0, 2.0], np.exp([0.0, 1.0, 2.0]), log_response=True)
        assert res.alpha1 == pytest.approx(1.0)
        assert res.r2 == pytest.approx(1.0)

    def test_null_model(self):
        # frozen from a 200-run null Monte Carlo at n=10000: the 99th percentile
        # of adjusted R^2 is about 5e-4, far below the 0.01 bound
        g = np.random.default_rng(1)
        assert adjusted_r2(g.normal(size=10000), g.normal(size=10000)).adj_r2 <= 0.01

    def test_adjustment_formula(self, rng):
        x = rng.normal(size=12)
        g = x + rng.normal(size=12)
        res = adjusted_r2(x, g)
        assert res.r2 == pytest.approx(np.corrcoef(x, g)[0, 1] ** 2)
        assert res.adj_r2 == pytest.approx(1 - (1 - res.r2) * 11 / 10)

    def test_errors(self):
        with pytest.raises(ZeroVariance):
            adjusted_r2(np.ones(5), np.arange(5.0))
        with pytest.raises(DomainError):
            adjusted_r2(np.arange(3.0), [1.0, 0.0, 2.0], log_response=True)
        with pytest.raises(DimensionMismatch):
            adjusted_r2(np.arange(3.0), np.arange(4.0))
        with pytest.raises(DimensionMismatch):
            adjusted_r2(np.arange(2.0), np.arange(2.0))
