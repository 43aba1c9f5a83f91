import numpy as np
import pytest

from kpplab.errors import ConfigurationError
from kpplab.media import (
    almost_periodic_linear_model,
    eval_f,
    eval_fu,
    logistic_model,
    make_media,
    periodic_kpp_model,
    space_sandwich_model,
    verify_class,
    verify_standing,
)

X = np.linspace(-5.0, 5.0, 11)


class TestEvaluators:
    def test_logistic_closed_form(self):
        m = logistic_model()
        assert np.allclose(eval_f(m, 0.0, X, np.ones_like(X)), 0.0)
        assert np.allclose(eval_f(m, 0.0, X, np.full_like(X, 0.25)), 0.75)
        assert np.allclose(eval_fu(m, 3.0, X, np.full_like(X, 0.5)), -1.0)

    def test_saturation_at_p0_plus_one(self):
        for m in (logistic_model(), periodic_kpp_model(), space_sandwich_model()):
            vals = eval_f(m, 0.3, X, np.full_like(X, m.p0 + 1.0))
            assert np.all(vals <= -m.beta0 + 1e-12)

    def test_negative_density_rejected(self):
        with pytest.raises(ConfigurationError):
            eval_f(logistic_model(), 0.0, X, np.full_like(X, -0.1))

    def test_rate_at_zero_matches_f(self):
        m = periodic_kpp_model()
        a = m.rate_at_zero(0.7, X)
        f0 = eval_f(m, 0.7, X, np.zeros_like(X))
        assert np.allclose(a, f0, atol=1e-12)

    def test_fu_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        for m in (logistic_model(), periodic_kpp_model(), almost_periodic_linear_model()):
            for _ in range(200):
                t = rng.uniform(0, 10)
                x = np.array([rng.uniform(-20, 20)])
                u = np.array([rng.uniform(0.01, 3.0)])
                h = 1e-5 * max(1.0, float(u[0]))
                fd = (eval_f(m, t, x, u + h) - eval_f(m, t, x, u - h)) / (2 * h)
                assert abs(float((fd - eval_fu(m, t, x, u))[0])) < 1e-6

    def test_sandwich_model_fu_negative(self):
        m = space_sandwich_model()
        rng = np.random.default_rng(2)
        xs = rng.uniform(-10, 10, 100)
        us = rng.uniform(0.0, 1.0, 100)
        assert np.all(eval_fu(m, 0.0, xs, us) < 0)


class TestCatalog:
    def test_make_media_logistic(self):
        m = make_media({"kind": "logistic"})
        assert m.kind == "logistic"
        assert np.allclose(eval_f(m, 0.0, X, np.full_like(X, 0.5)), 0.5)

    def test_make_media_quasi_periodic_bounds(self):
        m = make_media({
            "kind": "almost_periodic_linear", "base": 1.0,
            "coefficients": [0.25, 0.25], "frequencies": [1.0, float(np.sqrt(2))],
        })
        assert m.a_minus == pytest.approx(0.5)
        xs = np.linspace(-200, 200, 20001)
        assert float(m.rate_at_zero(0.0, xs).min()) > 0.5 - 1e-9

    def test_declared_periods_reproduced(self):
        m = periodic_kpp_model(t_period=2.0, p_period=4.0)
        rng = np.random.default_rng(5)
        for _ in range(50):
            t, x, u = rng.uniform(0, 10), rng.uniform(-10, 10), rng.uniform(0, 2)
            f0 = float(eval_f(m, t, np.array([x]), np.array([u]))[0])
            assert abs(float(eval_f(m, t + 2.0, np.array([x]), np.array([u]))[0]) - f0) < 1e-10
            assert abs(float(eval_f(m, t, np.array([x + 4.0]), np.array([u]))[0]) - f0) < 1e-10

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigurationError):
            make_media({"kind": "unknown"})

    def test_inconsistent_parameters_rejected(self):
        with pytest.raises(ConfigurationError):
            periodic_kpp_model(base=1.0, amplitude=1.5)


class TestVerifiers:
    def test_standing_passes_for_catalog(self):
        for m in (logistic_model(), periodic_kpp_model(), space_sandwich_model(),
                  almost_periodic_linear_model()):
            report = verify_standing(m)
            assert report.passed, [c for c in report.clauses if not c.passed]

    def test_logistic_window_average_is_one(self):
        report = verify_standing(logistic_model())
        assert report["mean_growth_at_zero"].worst == pytest.approx(1.0, abs=1e-9)

    def test_floor_half_gives_half_average(self):
        # u-independent a(t, x) - u with a >= 0.5: windows average >= 0.5
        m = almost_periodic_linear_model(base=1.0, coefficients=(0.5,), frequencies=(1.0,))
        report = verify_standing(m)
        assert report["mean_growth_at_zero"].worst >= 0.5 - 1e-6

    def test_zero_mean_growth_fails(self):
        from kpplab.media import custom_model

        def f(t, x, u):
            return np.sin(t) - u

        def f_u(t, x, u):
            return -np.ones_like(np.asarray(u, dtype=float))

        m = custom_model(f, f_u, beta0=1.0, p0=2.0)
        report = verify_standing(m)
        assert not report["mean_growth_at_zero"].passed

    def test_class_periodic_kpp(self):
        report = verify_class(periodic_kpp_model(), "periodic_kpp")
        assert report.passed, [c for c in report.clauses if not c.passed]

    def test_class_almost_periodic(self):
        report = verify_class(almost_periodic_linear_model(), "almost_periodic_linear")
        assert report.passed

    def test_class_sandwich(self):
        report = verify_class(space_sandwich_model(), "space_sandwich")
        assert report.passed, [c for c in report.clauses if not c.passed]

    def test_bad_nonlinearity_fails_slope_clause(self):
        from dataclasses import replace

        from kpplab.media import Nonlinearity
        m = replace(space_sandwich_model(),
                    g=Nonlinearity(lambda u: np.asarray(u) ** 2, lambda u: 2 * np.asarray(u), "u^2"))
        report = verify_class(m, "space_sandwich")
        assert not report["g_slope_at_zero"].passed
