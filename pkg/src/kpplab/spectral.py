"""Tilted-operator principal exponents, speed curves, and decaying eigenfunctions.

Evolution-based exponents come from renormalized power iteration of the
explicit step map I + dt L.  For a time-independent medium the dominant
eigenvalue of that map is exactly 1 + dt lambda(L), so the exponent is
extracted as (growth - 1)/dt; the raw log of the growth factor would carry an
O(dt lambda^2) bias that the dense-matrix cross-checks could never meet.
Time-periodic media report the per-period average of the same per-step
increments, i.e. the Floquet exponent of the discrete period map.

Two tilt stencils exist for random dispersal: the "centered" form
w_xx - 2 mu w_x + mu^2 w (exact on constants, the public contract) and the
"conjugate" form with e^(+-mu dx) off-diagonal factors, which is the exact
discrete conjugation used by wave barrier construction so that barriers are
step-exact solutions of the untilted scheme.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.integrate import cumulative_trapezoid
from scipy.integrate import solve_ivp as scipy_solve_ivp
from scipy.optimize import minimize_scalar

from .errors import (
    BracketError,
    ConfigurationError,
    ConstructionError,
    ConvergenceError,
    NumericsError,
    UnsupportedMediumError,
)
from .grids import DispersalOperator, Field, Grid, TILT_GUARD
from .media import ReactionModel

DEFAULT_CELLS = 128


# ---------------------------------------------------------------------------
# Ring stencils
# ---------------------------------------------------------------------------


def _tilt_coefficients(op: DispersalOperator, mu: float, dx: float, tilt: str):
    """Stencil data for the tilted operator on a periodic ring."""
    if op.kind == "random":
        if abs(mu) * dx > 1.0:
            raise ConfigurationError(
                f"tilt unresolved: |mu| dx = {abs(mu) * dx:.3f} > 1 breaks positivity")
        if tilt == "centered":
            return ("random", 1.0 / dx**2 + mu / dx, 1.0 / dx**2 - mu / dx,
                    -2.0 / dx**2 + mu * mu)
        if tilt == "conjugate":
            return ("random", np.exp(mu * dx) / dx**2, np.exp(-mu * dx) / dx**2,
                    -2.0 / dx**2)
        raise ConfigurationError(f"unknown tilt {tilt!r}")
    if abs(mu) * op.kernel.r0 > TILT_GUARD:
        raise NumericsError("tilt too strong for kernel support")
    offsets, w = op.kernel.weights(dx)
    tw = w * np.exp(-mu * offsets * dx)
    return ("nonlocal", offsets, tw, None)


class RingTiltedOperator:
    """Applies the tilted dispersal part on a periodic ring of n cells."""

    def __init__(self, op: DispersalOperator, mu: float, grid: Grid, tilt: str = "centered"):
        self.grid = grid
        self.mu = mu
        kind, a, b, c = _tilt_coefficients(op, mu, grid.dx, tilt)
        self.kind = kind
        if kind == "random":
            self.c_minus, self.c_plus, self.c_diag = a, b, c
            if grid.n * grid.dx <= 2 * grid.dx:
                raise ConfigurationError("ring too small")
        else:
            self.offsets, self.tw = a, b
            self.m = int(self.offsets[-1])
            if grid.n <= 2 * self.m:
                raise ConfigurationError("ring must exceed twice the kernel reach")

    def __call__(self, w: np.ndarray) -> np.ndarray:
        if self.kind == "random":
            return (self.c_minus * np.roll(w, 1) + self.c_plus * np.roll(w, -1)
                    + self.c_diag * w)
        p = np.concatenate([w[-self.m:], w, w[: self.m]])
        return np.convolve(p, self.tw[::-1], mode="valid") - w

    def negative_rate_bound(self, a_min: float) -> float:
        """Largest damping rate on the diagonal; bounds dt for positivity."""
        if self.kind == "random":
            return max(-self.c_diag - a_min, 1e-12)
        center = float(self.tw[self.m])
        return max(1.0 - center - a_min, 1e-12)

    def matrix(self, a_diag: np.ndarray) -> np.ndarray:
        n = self.grid.n
        L = np.zeros((n, n))
        idx = np.arange(n)
        if self.kind == "random":
            L[idx, (idx - 1) % n] += self.c_minus
            L[idx, (idx + 1) % n] += self.c_plus
            L[idx, idx] += self.c_diag
        else:
            for off, twj in zip(self.offsets, self.tw):
                L[idx, (idx + off) % n] += twj
            L[idx, idx] -= 1.0
        L[idx, idx] += a_diag
        return L


def make_ring_grid(length: float, cells: int) -> Grid:
    return Grid(x_min=0.0, dx=length / cells, n=cells)


def _ring_length(m: ReactionModel, op: DispersalOperator, ring_length: float | None) -> float:
    if ring_length is not None:
        return float(ring_length)
    if m.p_period is not None:
        return float(m.p_period)
    base = 4.0
    if op.kind == "nonlocal":
        base = max(base, 4.0 * op.kernel.r0)
    return base


def ring_dt(op: RingTiltedOperator, a_abs_max: float, a_min: float,
            cfl: float = 0.45, t_period: float | None = None) -> float:
    bound = cfl / (op.negative_rate_bound(-a_abs_max) + a_abs_max + 1e-12)
    if t_period is None:
        return bound
    k = max(1, int(np.ceil(t_period / bound - 1e-12)))
    return t_period / k


# ---------------------------------------------------------------------------
# Principal exponent
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EigenData:
    """Principal exponent data for one tilt rate."""

    mu: float
    lam: float
    eta: tuple[Field, ...]      # positive profile snapshots over one period, sup-norm 1
    s_samples: np.ndarray       # (time, phase) rows over the recorded period
    beta_bound: float           # sup |S(t) - log-growth(t)/mu| over the record
    method: str
    grid: Grid

    def __post_init__(self) -> None:
        for f in self.eta:
            if float(f.values.min()) <= 0.0:
                raise ConstructionError("eta must be strictly positive")
            if abs(float(f.values.max()) - 1.0) > 1e-10:
                raise ConstructionError("eta snapshots must be sup-normalized")
        if not np.isfinite(self.lam):
            raise NumericsError("principal exponent is not finite")


def _medium_rates(m: ReactionModel, x: np.ndarray):
    def a_of_t(t: float) -> np.ndarray:
        return m.rate_at_zero(t, x)

    return a_of_t


def _matrix_principal(ring: RingTiltedOperator, a_diag: np.ndarray) -> tuple[float, np.ndarray]:
    L = ring.matrix(a_diag)
    vals, vecs = scipy.linalg.eig(L)
    k = int(np.argmax(vals.real))
    lam = float(vals[k].real)
    if abs(vals[k].imag) > 1e-8 * max(1.0, abs(lam)):
        raise NumericsError("principal eigenvalue has a significant imaginary part")
    v = vecs[:, k].real
    v = v if v[int(np.argmax(np.abs(v)))] > 0 else -v
    if float(v.min()) <= 0.0:
        raise NumericsError("principal eigenvector is not positive")
    return lam, v / v.max()


def principal_lambda(op: DispersalOperator, m: ReactionModel, mu: float,
                     method: str = "auto", *, cells: int = DEFAULT_CELLS,
                     ring_length: float | None = None, cfl: float = 0.45,
                     tilt: str = "centered", max_steps: int = 2_000_000,
                     drift_tol: float = 1e-8) -> EigenData:
    """Principal exponent lambda(mu) of the tilted operator plus a(t, x).

    Media must be space-periodic (or space-free) and time-periodic or
    time-independent; one spatial period must be resolved by >= 64 cells for
    heterogeneous media.  ``method``: "matrix" (time-independent only) solves a
    dense eigenproblem; "evolution" runs the renormalized explicit flow; "auto"
    picks matrix when available.
    """
    length = _ring_length(m, op, ring_length)
    heterogeneous = m.p_period is not None
    if heterogeneous and cells < 64:
        raise ConfigurationError("resolve one spatial period by at least 64 cells")
    grid = make_ring_grid(length, cells)
    x = grid.positions()
    a_of_t = _medium_rates(m, x)
    time_dep = m.time_dependent

    if method == "auto":
        method = "evolution" if time_dep else "matrix"
    if method == "matrix" and time_dep:
        raise UnsupportedMediumError("matrix method needs a time-independent medium")
    if method not in ("matrix", "evolution"):
        raise ConfigurationError(f"unknown method {method!r}")

    ring = RingTiltedOperator(op, mu, grid, tilt)

    if method == "matrix":
        lam, v = _matrix_principal(ring, a_of_t(0.0))
        eta = (Field(grid, v, 0.0),)
        s = np.array([[0.0, 0.0], [1.0, lam / mu if mu != 0 else 0.0]])
        return EigenData(mu, lam, eta, s, 0.0, "matrix", grid)

    a0 = a_of_t(0.0)
    a_abs = max(float(np.max(np.abs(a0))), abs(m.a_plus) if m.a_plus else 0.0)
    T = m.t_period if time_dep else None
    dt = ring_dt(ring, a_abs, float(a0.min()), cfl, T)

    w = np.ones(grid.n)
    t = 0.0
    if not time_dep:
        lam_prev = None
        lam_est = 0.0
        for k in range(max_steps):
            w_new = w + dt * (ring(w) + a0 * w)
            g = float(w_new.max())
            if not np.isfinite(g) or g <= 0:
                raise NumericsError("tilted flow degenerated")
            w_next = w_new / g
            delta = float(np.max(np.abs(w_next - w)))
            w = w_next
            lam_est = (g - 1.0) / dt
            if delta < 1e-13:
                break
            if lam_prev is not None and k > 50 and abs(lam_est - lam_prev) < 1e-13 * max(1.0, abs(lam_est)):
                break
            lam_prev = lam_est
        else:
            if lam_prev is None or abs(lam_est - lam_prev) > drift_tol * max(1.0, abs(lam_est)):
                raise ConvergenceError("power iteration did not converge")
        if float(w.min()) <= 0:
            raise NumericsError("profile lost positivity")
        eta = (Field(grid, w / w.max(), 0.0),)
        s = np.array([[0.0, 0.0], [1.0, lam_est / mu if mu != 0 else 0.0]])
        return EigenData(mu, lam_est, eta, s, 0.0, "evolution", grid)

    # time-periodic medium: iterate whole periods of the explicit map
    steps_per_period = int(round(T / dt))
    lam_history: list[float] = []
    max_periods = max(64, max_steps // steps_per_period)
    for period in range(max_periods):
        lin_acc = 0.0
        for k in range(steps_per_period):
            t_k = period * T + k * dt
            w_new = w + dt * (ring(w) + a_of_t(t_k) * w)
            g = float(w_new.max())
            if not np.isfinite(g) or g <= 0:
                raise NumericsError("tilted flow degenerated")
            w = w_new / g
            lin_acc += g - 1.0
        lam_history.append(lin_acc / T)
        if len(lam_history) >= 8:
            quarter = max(2, len(lam_history) // 4)
            tail = lam_history[-quarter:]
            if max(tail) - min(tail) < 1e-11 * max(1.0, abs(tail[-1])):
                break
    else:
        quarter = max(2, len(lam_history) // 4)
        tail = lam_history[-quarter:]
        if max(tail) - min(tail) > drift_tol * max(1.0, abs(tail[-1])):
            raise ConvergenceError(
                f"Floquet iteration drift {max(tail) - min(tail):.2e} above tolerance")

    lam = float(np.mean(lam_history[len(lam_history) // 2:]))
    # record one more period for eta and the phase samples
    snaps: list[Field] = []
    s_rows = []
    lin_acc = 0.0
    log_acc = 0.0
    beta = 0.0
    record_every = max(1, steps_per_period // 16)
    t0 = len(lam_history) * T
    for k in range(steps_per_period):
        if k % record_every == 0:
            snaps.append(Field(grid, w / w.max(), k * dt))
            s_rows.append([k * dt, lin_acc / mu if mu != 0 else 0.0])
            if mu != 0:
                beta = max(beta, abs(lin_acc - log_acc) / abs(mu))
        w_new = w + dt * (ring(w) + a_of_t(t0 + k * dt) * w)
        g = float(w_new.max())
        w = w_new / g
        lin_acc += g - 1.0
        log_acc += np.log(g)
    if float(w.min()) <= 0:
        raise NumericsError("profile lost positivity")
    s_arr = np.array(s_rows)
    return EigenData(mu, lam, tuple(snaps), s_arr, float(beta), "evolution", grid)


# ---------------------------------------------------------------------------
# Speed curve
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpeedCurve:
    mu_grid: np.ndarray
    lambda_values: np.ndarray
    c_values: np.ndarray
    mu_star: float
    c_star: float


def speed_curve(op: DispersalOperator, m: ReactionModel,
                mu_range: tuple[float, float], grid_points: int = 16,
                method: str = "auto", **kwargs) -> SpeedCurve:
    """Tabulate c(mu) = lambda(mu)/mu and refine the interior minimum.

    The minimizer is located by golden-section refinement around the grid
    minimum to 1e-6 relative accuracy; a minimum on the range boundary raises
    a bracket error (widen the range).
    """
    lo, hi = mu_range
    if not (0.0 < lo < hi):
        raise ConfigurationError("mu_range must be positive and increasing")
    if grid_points < 8:
        raise ConfigurationError("need at least 8 grid points")
    mus = np.linspace(lo, hi, grid_points)

    def c_of(mu: float) -> tuple[float, float]:
        data = principal_lambda(op, m, mu, method=method, **kwargs)
        return data.lam, data.lam / mu

    lams, cs = zip(*(c_of(mu) for mu in mus))
    lams, cs = np.array(lams), np.array(cs)
    k = int(np.argmin(cs))
    if k in (0, grid_points - 1):
        raise BracketError(
            f"speed minimum at the range boundary (mu={mus[k]:.4g}); widen mu_range")
    res = minimize_scalar(lambda mu: c_of(mu)[1], method="golden",
                          bracket=(mus[k - 1], mus[k], mus[k + 1]),
                          options={"xtol": 1e-8})
    mu_star = float(res.x)
    c_star = float(res.fun)
    return SpeedCurve(mus, lams, cs, mu_star, c_star)


# ---------------------------------------------------------------------------
# Phase trace S(t)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PhaseTrace:
    mu: float
    times: np.ndarray
    s: np.ndarray
    c: np.ndarray  # finite-difference speeds between strides (len = len(times) - 1)


def phase_trace(op: DispersalOperator, m: ReactionModel, mu: float,
                tspan: tuple[float, float], *, stride: float = 0.25,
                cells: int = DEFAULT_CELLS, ring_length: float | None = None,
                cfl: float = 0.45, tilt: str = "centered",
                dt: float | None = None) -> PhaseTrace:
    """Integrate the tilted linear flow accumulating the phase S(t).

    S advances by (growth - 1)/mu per step, which keeps the asymptotic slope
    exactly consistent with :func:`principal_lambda` on time-independent media.
    """
    if mu == 0:
        raise ConfigurationError("phase trace needs a nonzero tilt")
    length = _ring_length(m, op, ring_length)
    grid = make_ring_grid(length, cells)
    x = grid.positions()
    a_of_t = _medium_rates(m, x)
    ring = RingTiltedOperator(op, mu, grid, tilt)
    a0 = a_of_t(tspan[0])
    a_abs = float(np.max(np.abs(a0))) + (abs(m.a_plus) if m.a_plus else 0.0)
    dt_bound = ring_dt(ring, a_abs, float(a0.min()), cfl)
    h = min(dt, dt_bound) if dt is not None else dt_bound
    n_steps = max(1, int(np.ceil((tspan[1] - tspan[0]) / h - 1e-12)))
    h = (tspan[1] - tspan[0]) / n_steps
    every = max(1, int(round(stride / h)))

    w = np.ones(grid.n)
    acc = 0.0
    times = [tspan[0]]
    s_vals = [0.0]
    for k in range(n_steps):
        t = tspan[0] + k * h
        w_new = w + h * (ring(w) + a_of_t(t) * w)
        g = float(w_new.max())
        if not np.isfinite(g) or g <= 0:
            raise NumericsError("tilted flow degenerated")
        w = w_new / g
        acc += g - 1.0
        if (k + 1) % every == 0 or k == n_steps - 1:
            times.append(tspan[0] + (k + 1) * h)
            s_vals.append(acc / mu)
    times_a = np.array(times)
    s_a = np.array(s_vals)
    c = np.diff(s_a) / np.diff(times_a)
    return PhaseTrace(mu, times_a, s_a, c)


# ---------------------------------------------------------------------------
# Decaying eigenfunction via the Riccati equation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayEigenfunction:
    lam: float
    x: np.ndarray
    phi: np.ndarray        # normalized phi(0) = 1
    sigma: np.ndarray      # -phi'/phi
    mu: float              # exponential decay rate mu(lambda)
    anchor_sensitivity: float

    def __post_init__(self) -> None:
        if np.any(self.phi <= 0):
            raise ConstructionError("decaying eigenfunction must be positive")
        if self.mu <= 0:
            raise ConstructionError("decay rate must be positive")


def _riccati_sigma(m: ReactionModel, lam: float, x_max: float, x_min: float,
                   n_points: int, anchor: float) -> tuple[np.ndarray, np.ndarray]:
    def rhs(x, sig):
        a = float(m.rate_at_zero(0.0, np.array([x]))[0])
        return [sig[0] ** 2 + a - lam]

    cap = 10.0 * np.sqrt(abs(lam) + (m.a_plus or 1.0) + 1.0)

    def blow_up(x, sig):
        return abs(sig[0]) - cap

    blow_up.terminal = True
    xs = np.linspace(x_min, x_max, n_points)
    sol = scipy_solve_ivp(rhs, (x_max, x_min), [anchor], t_eval=xs[::-1],
                          method="DOP853", rtol=1e-11, atol=1e-13, events=blow_up)
    if sol.status == 1:
        raise ConstructionError(
            "Riccati blow-up: lambda too close to the spectral bound for this medium")
    if not sol.success:
        raise NumericsError(f"Riccati integration failed: {sol.message}")
    return xs, sol.y[0][::-1]


def decaying_eigenfunction(m: ReactionModel, lam: float, x_max: float, *,
                           x_min: float = 0.0, n_points: int = 4096,
                           anchor_buffer: float | None = None) -> DecayEigenfunction:
    """Backward Riccati integration for the rightward-decaying eigenfunction.

    sigma' = sigma^2 + a(x) - lambda is integrated from x_max toward x_min with
    anchor sigma(x_max) = sqrt(lambda - a(x_max)); the decaying solution is the
    backward attractor, so the anchor transient dies within a few units.  The
    decay rate mu(lambda) averages sigma over the trailing half of [0, x_max]
    excluding an anchor buffer, which keeps the +-10% anchor sensitivity below
    1e-4.
    """
    if m.time_dependent:
        raise UnsupportedMediumError("decaying eigenfunction needs a time-independent medium")
    a_end = float(m.rate_at_zero(0.0, np.array([x_max]))[0])
    if lam <= a_end:
        raise ConstructionError(
            f"lambda={lam} <= a(x_max)={a_end:.4g}: no real Riccati anchor; "
            "shift x_max or raise lambda")
    anchor = float(np.sqrt(lam - a_end))
    if anchor_buffer is None:
        anchor_buffer = min(10.0 / max(anchor, 0.1), 0.25 * x_max)

    xs, sigma = _riccati_sigma(m, lam, x_max, x_min, n_points, anchor)
    if np.any(~np.isfinite(sigma)):
        raise NumericsError("Riccati produced non-finite slopes")
    a_vals = m.rate_at_zero(0.0, xs)
    if lam <= float(a_vals.max()) and np.any(np.diff(np.sign(sigma)) != 0):
        raise UnsupportedMediumError(
            "oscillatory slope field: lambda below sup a is not supported")

    ln_phi = -cumulative_trapezoid(sigma, xs, initial=0.0)
    ln_phi -= np.interp(0.0, xs, ln_phi)  # phi(0) = 1
    phi = np.exp(ln_phi)

    def window_mean(sig: np.ndarray) -> float:
        lo = max(0.5 * x_max - anchor_buffer, x_min)
        hi = x_max - anchor_buffer
        mask = (xs >= lo) & (xs <= hi)
        return float(np.trapezoid(sig[mask], xs[mask]) / (xs[mask][-1] - xs[mask][0]))

    mu = window_mean(sigma)
    sens = 0.0
    for scale in (0.9, 1.1):
        _, sig_p = _riccati_sigma(m, lam, x_max, x_min, n_points, anchor * scale)
        sens = max(sens, abs(window_mean(sig_p) - mu))
    return DecayEigenfunction(lam, xs, phi, sigma, mu, sens)


# ---------------------------------------------------------------------------
# Top eigenvalue of d_xx + a on a large ring
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TopEigenvalue:
    value: float
    drift: float
    resolution_warning: bool
    domain_size: float


def top_eigenvalue(m: ReactionModel, domain_size: float, method: str = "matrix",
                   *, cells_per_unit: int = 32, drift_tol: float = 1e-3) -> TopEigenvalue:
    """Largest eigenvalue of d_xx + a(x) on periodic rings, with a doubling check.

    Computes the value on rings of length ``domain_size`` and ``2 * domain_size``
    and reports the larger-domain value together with the drift between them;
    drift above ``drift_tol`` sets a resolution warning.
    """
    if m.time_dependent:
        raise UnsupportedMediumError("top eigenvalue needs a time-independent medium")
    from .grids import random_dispersal

    op = random_dispersal()
    values = []
    for length in (domain_size, 2.0 * domain_size):
        cells = max(64, int(round(length * cells_per_unit)))
        data = principal_lambda(op, m, 0.0, method=method, cells=cells,
                                ring_length=length)
        values.append(data.lam)
    drift = abs(values[1] - values[0])
    return TopEigenvalue(values[1], drift, drift > drift_tol, 2.0 * domain_size)


# ---------------------------------------------------------------------------
# Floquet solutions of the tilted flow, evaluable on the step lattice
# ---------------------------------------------------------------------------


class PeriodicTiltedSolution:
    """Exact discrete solution e^(-mu x) w(t, x) of the linearized scheme.

    Stores one period of sup-normalized ring profiles together with per-step
    growth factors after converging the period map, so the solution can be
    evaluated at any step index (positive or negative) by periodic wrapping
    with exact compounding.  Used by wave barrier pairs; the tilt stencil is
    the exact conjugation so the untilted scheme annihilates the defect.
    """

    def __init__(self, op: DispersalOperator, m: ReactionModel, mu: float,
                 grid: Grid, dt: float, *, tilt: str | None = None,
                 max_periods: int | None = None):
        if tilt is None:
            tilt = "conjugate" if op.kind == "random" else "centered"
        self.mu = mu
        self.grid = grid
        self.dt = dt
        self.ring = RingTiltedOperator(op, mu, grid, tilt)
        x = grid.positions()
        self.period_length = grid.n * grid.dx
        a_of_t = _medium_rates(m, x)
        T = m.t_period if m.time_dependent else None
        if T is not None:
            steps = int(round(T / dt))
            if abs(steps * dt - T) > 1e-9 * T or steps < 1:
                raise ConfigurationError("dt must divide the time period")
        else:
            steps = 1
        self.steps_per_period = steps
        if max_periods is None:
            max_periods = max(2000, 4_000_000 // steps)
        t_probe = np.linspace(0.0, T if T else 1.0, 9)
        a_min = min(float(a_of_t(tp).min()) for tp in t_probe)
        if dt > 1.0 / self.ring.negative_rate_bound(a_min) + 1e-15:
            raise StepSizeError(
                f"dt={dt:.3e} breaks positivity of the tilted flow "
                f"(bound {1.0 / self.ring.negative_rate_bound(a_min):.3e})")

        w = np.ones(grid.n)
        prev = None
        for period in range(max_periods):
            for k in range(steps):
                w_new = w + dt * (self.ring(w) + a_of_t(k * dt) * w)
                g = float(w_new.max())
                if not np.isfinite(g) or g <= 0:
                    raise NumericsError("tilted flow degenerated")
                w = w_new / g
            if prev is not None and float(np.max(np.abs(w - prev))) < 1e-13:
                break
            prev = w.copy()
        else:
            raise ConvergenceError("period map power iteration did not converge")

        profiles = np.empty((steps, grid.n))
        ln_g = np.empty(steps)
        for k in range(steps):
            profiles[k] = w
            w_new = w + dt * (self.ring(w) + a_of_t(k * dt) * w)
            g = float(w_new.max())
            ln_g[k] = np.log(g)
            w = w_new / g
        if float(profiles.min()) <= 0:
            raise NumericsError("Floquet profile lost positivity")
        self.profiles = profiles
        self.ln_profiles = np.log(profiles)
        self.ln_g = ln_g
        self.cum_ln_g = np.concatenate([[0.0], np.cumsum(ln_g)])
        self.ln_period_growth = float(self.cum_ln_g[-1])
        self.lam = self.ln_period_growth / (steps * dt)

    def ln_growth(self, step_index: int) -> float:
        q, r = divmod(int(step_index), self.steps_per_period)
        return q * self.ln_period_growth + float(self.cum_ln_g[r])

    def phase(self, step_index: int) -> float:
        """S(t) = log-growth / mu at the given step index."""
        return self.ln_growth(step_index) / self.mu

    def step_speed(self, step_index: int) -> float:
        r = int(step_index) % self.steps_per_period
        return float(self.ln_g[r]) / (self.mu * self.dt)

    def _ring_indices(self, x: np.ndarray) -> np.ndarray:
        pos = np.mod(x - self.grid.x_min, self.period_length)
        idx = pos / self.grid.dx
        rounded = np.rint(idx)
        if np.max(np.abs(idx - rounded)) > 1e-6:
            raise ConfigurationError("evaluation points must align with the ring grid")
        return rounded.astype(int) % self.grid.n

    def ln_value(self, step_index: int, x: np.ndarray) -> np.ndarray:
        """ln of e^(-mu x) w(t, x) at step_index on grid-aligned positions x."""
        r = int(step_index) % self.steps_per_period
        cols = self._ring_indices(np.asarray(x, dtype=np.float64))
        return -self.mu * np.asarray(x) + self.ln_growth(step_index) + self.ln_profiles[r][cols]

    def value(self, step_index: int, x: np.ndarray) -> np.ndarray:
        return np.exp(self.ln_value(step_index, x))
