import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kpplab.errors import ConfigurationError
from kpplab.evolve import IVPOptions
from kpplab.grids import Field, Grid, constant_field, nonlocal_dispersal, random_dispersal, uniform_kernel
from kpplab.media import logistic_model
from kpplab.partmetric import decrement_estimate, metric_trace, part_metric, part_metric_values


def grid(n=32, dx=0.125):
    return Grid(x_min=0.0, dx=dx, n=n)


def scalar_logistic(u0, t):
    return u0 * np.exp(t) / (1.0 + u0 * (np.exp(t) - 1.0))


class TestPartMetric:
    def test_identical_fields(self):
        u = constant_field(grid(), 0.8)
        assert part_metric(u, u) == 0.0

    def test_double_is_ln_two(self):
        g = grid()
        rng = np.random.default_rng(0)
        v = Field(g, rng.uniform(0.5, 1.5, g.n))
        u = Field(g, 2.0 * v.values)
        assert part_metric(u, v) == pytest.approx(np.log(2.0), abs=1e-14)

    def test_scale_law(self):
        g = grid()
        rng = np.random.default_rng(1)
        v = rng.uniform(0.2, 2.0, g.n)
        for c in (0.3, 1.0, 4.7):
            rho = part_metric_values(c * v, v)
            assert rho == pytest.approx(abs(np.log(c)), abs=1e-12)

    def test_matches_bruteforce_alpha_search(self):
        rng = np.random.default_rng(2)
        u = rng.uniform(0.2, 2.0, 64)
        v = rng.uniform(0.2, 2.0, 64)
        rho = part_metric_values(u, v)
        # brute-force: smallest ln(alpha) on a fine grid with v/alpha <= u <= alpha v
        alphas = np.exp(np.linspace(0.0, 3.0, 30001))
        feasible = alphas[[bool(np.all(u <= a * v) and np.all(v <= a * u)) for a in alphas]]
        assert rho == pytest.approx(np.log(feasible[0]), abs=1e-4)

    def test_undefined_when_floor_hit(self):
        g = grid()
        u = Field(g, np.concatenate([[0.0], np.ones(g.n - 1)]))
        assert part_metric(u, constant_field(g, 1.0)) is None

    def test_grid_mismatch_rejected(self):
        with pytest.raises(ConfigurationError):
            part_metric(constant_field(grid(16), 1.0), constant_field(grid(24), 1.0))

    @given(st.integers(min_value=0, max_value=20))
    @settings(max_examples=20, deadline=None)
    def test_symmetry_and_triangle(self, seed):
        rng = np.random.default_rng(seed)
        u = rng.uniform(0.1, 3.0, 32)
        v = rng.uniform(0.1, 3.0, 32)
        w = rng.uniform(0.1, 3.0, 32)
        duv = part_metric_values(u, v)
        assert duv == pytest.approx(part_metric_values(v, u), abs=1e-12)
        assert duv <= part_metric_values(u, w) + part_metric_values(w, v) + 1e-12


class TestTrace:
    def test_identical_pair_zero_trace(self):
        m = logistic_model()
        u = constant_field(grid(), 0.4)
        trace = metric_trace(random_dispersal(), m, u, u, 0.0, 1.0, 0.25)
        assert np.allclose(trace.rho, 0.0)

    def test_scalar_logistic_oracle(self):
        m = logistic_model()
        g = grid()
        trace = metric_trace(random_dispersal(), m, constant_field(g, 0.2),
                             constant_field(g, 0.8), 0.0, 2.0, 0.5,
                             IVPOptions(dt=1e-4))
        for t, rho in zip(*trace.defined_samples):
            a, b = scalar_logistic(0.2, t), scalar_logistic(0.8, t)
            assert rho == pytest.approx(abs(np.log(a / b)), abs=2e-4)

    def test_nonincreasing_on_random_pairs(self):
        m = logistic_model()
        g = grid()
        rng = np.random.default_rng(5)
        for op in (random_dispersal(), nonlocal_dispersal(uniform_kernel(0.5))):
            for _ in range(5):
                u = Field(g, rng.uniform(0.1, 2.0, g.n))
                v = Field(g, rng.uniform(0.1, 2.0, g.n))
                trace = metric_trace(op, m, u, v, 0.0, 1.5, 0.25)
                drops = np.diff(trace.rho[trace.defined])
                assert np.all(drops <= 1e-10)


class TestDecrement:
    def test_positive_delta_for_separated_pair(self):
        m = logistic_model()
        g = grid()
        trace = metric_trace(random_dispersal(), m, constant_field(g, 0.2),
                             constant_field(g, 0.8), 0.0, 3.0, 0.25)
        est = decrement_estimate(trace, sigma=0.5, tau=1.0)
        assert est is not None and est.delta > 0.0

    def test_identical_pair_not_applicable(self):
        m = logistic_model()
        u = constant_field(grid(), 0.4)
        trace = metric_trace(random_dispersal(), m, u, u, 0.0, 2.0, 0.25)
        assert decrement_estimate(trace, sigma=0.5, tau=1.0) is None

    def test_matches_scalar_closed_form(self):
        # pair (0.2, 0.8), tau = 1, sigma = 0.5: oracle drop from closed-form rho(t)
        m = logistic_model()
        g = grid()
        trace = metric_trace(random_dispersal(), m, constant_field(g, 0.2),
                             constant_field(g, 0.8), 0.0, 3.0, 0.25,
                             IVPOptions(dt=5e-5))
        est = decrement_estimate(trace, sigma=0.5, tau=1.0)

        def rho_exact(t):
            return abs(np.log(scalar_logistic(0.2, t) / scalar_logistic(0.8, t)))

        ts = trace.defined_samples[0]
        qualifying = [rho_exact(t) - rho_exact(t + 1.0) for t in ts
                      if rho_exact(t) >= 0.5 and t + 1.0 <= ts[-1] + 1e-9]
        assert est.delta == pytest.approx(min(qualifying), abs=5e-4)
