import numpy as np
import pytest
from scipy.integrate import solve_ivp as scipy_solve_ivp

from kpplab.errors import ConfigurationError, StepSizeError
from kpplab.evolve import IVPOptions, lipschitz_budget, solve_ivp, solve_pair, stable_dt, step
from kpplab.grids import Field, Grid, constant_field, nonlocal_dispersal, random_dispersal, uniform_kernel
from kpplab.media import logistic_model, periodic_kpp_model

RANDOM = random_dispersal()
NONLOCAL = nonlocal_dispersal(uniform_kernel(0.5))


def grid(n=40, dx=0.1):
    return Grid(x_min=0.0, dx=dx, n=n)


class TestStep:
    def test_equilibrium_fixed(self):
        m = logistic_model()
        u = constant_field(grid(), 1.0)
        out = step(RANDOM, m, u, 1e-3)
        assert np.allclose(out.values, 1.0, atol=1e-15)

    def test_zero_stays_zero(self):
        m = logistic_model()
        out = step(NONLOCAL, m, constant_field(grid(), 0.0), 1e-2)
        assert np.all(out.values == 0.0)

    def test_homogeneous_step_exact(self):
        m = logistic_model()
        dt = 1e-3
        out = step(RANDOM, m, constant_field(grid(), 0.5), dt)
        assert np.allclose(out.values, 0.5 + dt * 0.25, atol=1e-15)

    def test_step_bound_enforced(self):
        m = logistic_model()
        with pytest.raises(StepSizeError):
            step(RANDOM, m, constant_field(grid(dx=0.05), 0.5), dt=0.1, lipschitz=3.0)


class TestSolveIvp:
    def test_logistic_closed_form(self):
        m = logistic_model()
        traj = solve_ivp(RANDOM, m, 0.0, constant_field(grid(), 0.5), 1.0,
                         IVPOptions(dt=1e-4))
        expected = 1.0 / (1.0 + np.exp(-1.0))
        assert np.max(np.abs(traj.final().values - expected)) < 1e-4

    def test_decreasing_from_above(self):
        m = logistic_model()
        traj = solve_ivp(RANDOM, m, 0.0, constant_field(grid(), 2.0), 2.0,
                         IVPOptions(record_stride=0.5))
        sups = [float(s.values.max()) for s in traj.snapshots]
        assert all(b <= a + 1e-12 for a, b in zip(sups, sups[1:]))
        assert sups[-1] > 1.0
        # scalar ODE comparison oracle
        sol = scipy_solve_ivp(lambda t, y: y * (1 - y), (0, 2), [2.0], rtol=1e-10, atol=1e-12)
        assert abs(sups[-1] - sol.y[0, -1]) < 1e-3

    def test_zero_initial_data(self):
        m = logistic_model()
        traj = solve_ivp(NONLOCAL, m, 0.0, constant_field(grid(), 0.0), 1.0)
        assert np.all(traj.final().values == 0.0)

    def test_a_priori_bound_and_positivity(self):
        m = periodic_kpp_model()
        rng = np.random.default_rng(9)
        g = grid(60)
        u0 = Field(g, rng.uniform(0.0, 2.5, g.n))
        traj = solve_ivp(NONLOCAL, m, 0.0, u0, 3.0, IVPOptions(record_stride=0.25))
        bound = max(float(u0.values.max()), m.p0 + 1.0) + 1e-12
        for s in traj.snapshots:
            assert np.all(s.values >= 0.0)
            assert float(s.values.max()) <= bound

    def test_homogeneous_matches_scalar_ode(self):
        # spatially constant data + homogeneous f reduces to the scalar ODE
        m = logistic_model()
        traj = solve_ivp(RANDOM, m, 0.0, constant_field(grid(), 0.1), 3.0,
                         IVPOptions(dt=2e-5))
        sol = scipy_solve_ivp(lambda t, y: y * (1 - y), (0, 3), [0.1],
                              rtol=1e-12, atol=1e-14)
        assert np.max(np.abs(traj.final().values - sol.y[0, -1])) < 1e-4

    def test_negative_initial_data_rejected(self):
        with pytest.raises(ConfigurationError):
            solve_ivp(RANDOM, logistic_model(), 0.0,
                      Field(grid(), np.linspace(-0.1, 1.0, 40)), 1.0)


class TestSolvePair:
    def test_identical_pair_stays_identical(self):
        m = logistic_model()
        u = constant_field(grid(), 0.7)
        lo, hi = solve_pair(RANDOM, m, 0.0, u, u, 1.0)
        assert np.array_equal(lo.final().values, hi.final().values)

    def test_strict_ordering_persists(self):
        m = logistic_model()
        lo, hi = solve_pair(RANDOM, m, 0.0, constant_field(grid(), 0.2),
                            constant_field(grid(), 0.4), 2.0,
                            IVPOptions(record_stride=0.25))
        for a, b in zip(lo.snapshots, hi.snapshots):
            assert np.all(a.values < b.values)

    def test_uniform_gap_stays_positive(self):
        m = logistic_model()
        g = grid(50)
        rng = np.random.default_rng(4)
        base = rng.uniform(0.3, 0.8, g.n)
        lo, hi = solve_pair(NONLOCAL, m, 0.0, Field(g, base), Field(g, base + 0.2), 5.0,
                            IVPOptions(record_stride=1.0))
        for a, b in zip(lo.snapshots, hi.snapshots):
            assert float(np.min(b.values - a.values)) > 0.0

    def test_unordered_pair_rejected(self):
        m = logistic_model()
        with pytest.raises(ConfigurationError):
            solve_pair(RANDOM, m, 0.0, constant_field(grid(), 0.5),
                       constant_field(grid(), 0.4), 1.0)

    def test_random_ordered_pairs_no_violation(self):
        # smoke version of the acceptance property (full 100-pair run lives there)
        m = logistic_model()
        g = grid(32, dx=0.125)
        rng = np.random.default_rng(123)
        for op in (RANDOM, NONLOCAL):
            for _ in range(10):
                lo = rng.uniform(0.05, 1.5, g.n)
                hi = lo + rng.uniform(0.0, 1.0, g.n)
                solve_pair(op, m, 0.0, Field(g, lo), Field(g, hi), 0.5)


class TestStability:
    def test_auto_dt_respects_bounds(self):
        m = logistic_model()
        g = grid(dx=0.05)
        lip = lipschitz_budget(m, 2.0)
        dt_r = stable_dt(RANDOM, g, lip)
        assert dt_r <= 0.5 * g.dx**2 / 2 + 1e-15
        dt_n = stable_dt(NONLOCAL, g, lip)
        assert dt_n * (1 + lip) <= 0.5 + 1e-12
