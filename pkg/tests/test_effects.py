import numpy as np
import pytest
from scipy.stats import norm

from polgrav import effects


class FakeFit:
    def __init__(self, names, coefficients, covariance=None):
        self.names = names
        self.coefficients = np.asarray(coefficients, dtype=float)
        self.covariance = covariance


class FakeLogitFit:
    def __init__(self, names, corrected, bootstrap_se):
        self.names = names
        self.corrected = np.asarray(corrected, dtype=float)
        self.bootstrap_se = np.asarray(bootstrap_se, dtype=float)


class TestOneSdEffect:
    def test_headline_arithmetic(self):
        # b = -0.031, sd = 0.8: 100*(exp(-0.0248)-1) = -2.449497...%
        fit = FakeFit(["pd"], [-0.031], np.array([[0.0001]]))
        rep = effects.one_sd_effect(fit, 0.8)
        expected = 100.0 * (np.exp(-0.031 * 0.8) - 1.0)
        assert rep.point == pytest.approx(expected, abs=1e-10)
        assert rep.point == pytest.approx(-2.4495006, abs=1e-6)

    def test_condition_adds_interaction_slope(self):
        fit = FakeFit(["pd", "pd_x"], [-0.2, 0.05], np.eye(2) * 1e-4)
        rep = effects.one_sd_effect(fit, 1.0, condition={"pd_x": 1.0})
        assert rep.point == pytest.approx(100 * (np.exp(-0.15) - 1), abs=1e-10)
        off = effects.one_sd_effect(fit, 1.0, condition={"pd_x": 0.0})
        assert off.point == pytest.approx(100 * (np.exp(-0.2) - 1), abs=1e-10)

    def test_delta_method_se_scalar(self):
        # single coefficient: se = 100*sd*exp(b*sd)*sqrt(V)
        b, sd, v = -0.25, 1.3, 0.004
        fit = FakeFit(["pd"], [b], np.array([[v]]))
        rep = effects.one_sd_effect(fit, sd)
        assert rep.se == pytest.approx(
            100 * sd * np.exp(b * sd) * np.sqrt(v), rel=1e-12
        )

    def test_gradient_matches_finite_difference(self):
        names = ["pd", "pd_a", "pd_b"]
        beta = np.array([-0.3, 0.1, -0.05])
        cond = {"pd_a": 1.0, "pd_b": 0.7}
        sd = 0.9
        V = np.array(
            [[4e-3, 1e-4, -2e-4], [1e-4, 9e-4, 5e-5], [-2e-4, 5e-5, 2.5e-3]]
        )

        def f(b_vec):
            fit = FakeFit(names, b_vec, V)
            return effects.one_sd_effect(fit, sd, condition=cond).point

        eps = 1e-7
        grad_fd = np.array(
            [
                (f(beta + eps * np.eye(3)[k]) - f(beta - eps * np.eye(3)[k]))
                / (2 * eps)
                for k in range(3)
            ]
        )
        se_fd = np.sqrt(grad_fd @ V @ grad_fd)
        rep = effects.one_sd_effect(FakeFit(names, beta, V), sd, condition=cond)
        assert rep.se == pytest.approx(se_fd, rel=1e-6)

    def test_ci_is_point_pm_196_se(self):
        fit = FakeFit(["pd"], [-0.1], np.array([[0.01]]))
        rep = effects.one_sd_effect(fit, 1.0)
        z = norm.ppf(0.975)
        assert rep.ci_low == pytest.approx(rep.point - z * rep.se, abs=1e-10)
        assert rep.ci_high == pytest.approx(rep.point + z * rep.se, abs=1e-10)

    def test_missing_covariance_gives_nan_se(self):
        rep = effects.one_sd_effect(FakeFit(["pd"], [-0.1]), 1.0)
        assert np.isnan(rep.se)
        assert np.isfinite(rep.point)

    def test_nonpositive_sd_rejected(self):
        fit = FakeFit(["pd"], [-0.1], np.eye(1))
        with pytest.raises(ValueError):
            effects.one_sd_effect(fit, 0.0)

    def test_unknown_names_rejected(self):
        fit = FakeFit(["pd"], [-0.1], np.eye(1))
        with pytest.raises(KeyError):
            effects.one_sd_effect(fit, 1.0, base="nope")
        with pytest.raises(KeyError):
            effects.one_sd_effect(fit, 1.0, condition={"nope": 1.0})


class TestLogitEffect:
    def test_symmetric_baseline_value(self):
        # at p=0.5 and b*sd=0.1: 100*(logistic(0.1)-0.5) = 2.4979187...pp
        fit = FakeFit(["pd"], [0.1], np.array([[1e-4]]))
        rep = effects.logit_effect_pp(fit, 1.0, 0.5)
        assert rep.point == pytest.approx(
            100 * (1 / (1 + np.exp(-0.1)) - 0.5), abs=1e-12
        )
        assert rep.point == pytest.approx(2.4979187, abs=1e-6)

    def test_zero_slope_zero_effect(self):
        fit = FakeFit(["pd"], [0.0], np.array([[1e-4]]))
        rep = effects.logit_effect_pp(fit, 1.0, 0.3)
        assert rep.point == pytest.approx(0.0, abs=1e-12)

    def test_uses_corrected_and_bootstrap_se(self):
        fit = FakeLogitFit(["pd"], corrected=[-0.2], bootstrap_se=[0.05])
        rep = effects.logit_effect_pp(fit, 1.0, 0.5)
        lam = 0.0
        shifted = 1 / (1 + np.exp(0.2))
        grad = 100 * 1.0 * shifted * (1 - shifted)
        assert rep.point == pytest.approx(100 * (shifted - 0.5), abs=1e-10)
        assert rep.se == pytest.approx(grad * 0.05, rel=1e-10)

    def test_bad_baseline_rejected(self):
        fit = FakeFit(["pd"], [0.1], np.eye(1))
        for p in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(ValueError):
                effects.logit_effect_pp(fit, 1.0, p)

    def test_report_validates_ci_order(self):
        with pytest.raises(ValueError):
            effects.EffectReport(
                label="x", condition={}, point=0.0, se=1.0,
                ci_low=2.0, ci_high=-2.0, sd_used=1.0,
            )


class TestSampleSd:
    def test_international_rows_only(self):
        import pandas as pd

        df = pd.DataFrame(
            {
                "x_pd": [1.0, 2.0, 3.0, 100.0],
                "is_domestic": [False, False, False, True],
            }
        )
        sd = effects.estimation_sample_sd(df, "x_pd")
        assert sd == pytest.approx(1.0)
        sd_all = effects.estimation_sample_sd(df, "x_pd", international_only=False)
        assert sd_all > 10
