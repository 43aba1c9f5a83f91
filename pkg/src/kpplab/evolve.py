"""Monotone, order-preserving explicit time integration.

The update u <- u + dt (A u + u f(t, x, u)) is a nondecreasing function of
every stencil value whenever the step bound holds (dt <= cfl dx^2 / 2 and
dt L <= cfl for random dispersal; dt (1 + L) <= cfl for nonlocal, with L the
Lipschitz budget of u f in u).  That makes the comparison principle an exact
discrete invariant, which the rest of the package leans on.

Two boundary modes: "line" truncates the real line with the extension policy
of :mod:`kpplab.grids`; "ring" wraps periodically (used for periodic media).
In coupled runs the right-tail decay rate is fitted from a designated
reference trajectory and shared, so ghost values are ordered whenever the
fields are; a per-field fit would break cell-wise order preservation for
kernels reaching more than one cell past the edge.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, InvariantBreachError, NumericsError, StepSizeError
from .grids import (
    DispersalOperator,
    Field,
    Grid,
    Trajectory,
    apply_values,
    right_decay_rate,
    shift_window,
)
from .media import ReactionModel, eval_f, eval_fu


@dataclass(frozen=True)
class IVPOptions:
    dt: float | None = None  # None -> auto from the monotonicity bound
    cfl_safety: float = 0.5
    record_stride: float | None = None
    track_front: bool = False
    value_floor: float = 1e-300
    boundary: str = "line"  # "line" | "ring"

    def __post_init__(self) -> None:
        if not (0.0 < self.cfl_safety <= 1.0):
            raise ConfigurationError("cfl_safety must lie in (0, 1]")
        if self.boundary not in ("line", "ring"):
            raise ConfigurationError("boundary must be 'line' or 'ring'")


def lipschitz_budget(m: ReactionModel, u_max: float,
                     t_span: tuple[float, float] = (0.0, 1.0),
                     x_span: tuple[float, float] = (-20.0, 20.0),
                     samples: int = 24) -> float:
    """Sampled bound on |d/du (u f)| over the run box, doubled for safety."""
    ts = np.linspace(t_span[0], t_span[1], 5)
    xs = np.linspace(x_span[0], x_span[1], samples)
    us = np.linspace(0.0, max(u_max, 1e-6), samples)
    worst = 0.0
    for t in ts:
        for u in us:
            uu = np.full_like(xs, u)
            slope = eval_f(m, t, xs, uu) + uu * eval_fu(m, t, xs, uu)
            worst = max(worst, float(np.max(np.abs(slope))))
    return 2.0 * worst


def stable_dt(op: DispersalOperator, grid: Grid, lipschitz: float,
              cfl_safety: float = 0.5) -> float:
    if op.kind == "random":
        return cfl_safety * min(grid.dx ** 2 / 2.0, 1.0 / max(lipschitz, 1e-12))
    return cfl_safety / (1.0 + lipschitz)


def check_step_bound(op: DispersalOperator, grid: Grid, dt: float, lipschitz: float,
                     cfl_safety: float = 0.5) -> None:
    if op.kind == "random":
        if dt > cfl_safety * grid.dx ** 2 / 2.0 + 1e-15 or dt * lipschitz > cfl_safety + 1e-12:
            raise StepSizeError(
                f"dt={dt:.3e} violates the random-dispersal bound "
                f"(dx={grid.dx}, L={lipschitz:.3g}, cfl={cfl_safety})")
    else:
        if dt * (1.0 + lipschitz) > cfl_safety + 1e-12:
            raise StepSizeError(
                f"dt={dt:.3e} violates the nonlocal bound (L={lipschitz:.3g}, cfl={cfl_safety})")


def _ring_apply(op: DispersalOperator, values: np.ndarray, dx: float) -> np.ndarray:
    if op.kind == "random":
        return (np.roll(values, 1) - 2.0 * values + np.roll(values, -1)) / (dx * dx)
    offsets, w = op.kernel.weights(dx)
    m = int(offsets[-1])
    p = np.concatenate([values[-m:], values, values[:m]])
    return np.convolve(p, w[::-1], mode="valid") - values


def step_values(op: DispersalOperator, m: ReactionModel, grid: Grid,
                values: np.ndarray, t: float, dt: float, *,
                boundary: str = "line", rate: float | None = None,
                floor: float = 0.0) -> np.ndarray:
    """One explicit step on raw values; negative round-off is clamped to 0."""
    x = grid.positions()
    if boundary == "ring":
        disp = _ring_apply(op, values, grid.dx)
    else:
        disp = apply_values(op, values, grid.dx, rate=rate)
    out = values + dt * (disp + values * eval_f(m, t, x, values))
    if not np.all(np.isfinite(out)):
        raise NumericsError(f"non-finite values after step at t={t}")
    np.clip(out, 0.0, None, out=out)
    if floor > 0.0:
        out[out < floor] = 0.0
    return out


def step(op: DispersalOperator, m: ReactionModel, u: Field, dt: float, *,
         lipschitz: float | None = None, boundary: str = "line",
         rate: float | None = None) -> Field:
    """Single step of the monotone scheme, validating the step bound."""
    if lipschitz is None:
        u_max = max(float(u.values.max()), m.p0 + 1.0)
        x = u.grid.positions()
        lipschitz = lipschitz_budget(m, u_max, (u.t, u.t + max(dt, 1e-6)),
                                     (float(x[0]), float(x[-1])))
    check_step_bound(op, u.grid, dt, lipschitz)
    out = step_values(op, m, u.grid, u.values, u.t, dt, boundary=boundary, rate=rate)
    return Field(u.grid, out, u.t + dt)


def _resolve_steps(t0: float, t1: float, dt_req: float) -> tuple[int, float]:
    span = t1 - t0
    if span <= 0:
        raise ConfigurationError("t1 must exceed t0")
    n_steps = max(1, int(np.ceil(span / dt_req - 1e-12)))
    return n_steps, span / n_steps


def solve_ivp(op: DispersalOperator, m: ReactionModel, t0: float, u0: Field,
              t1: float, opts: IVPOptions = IVPOptions()) -> Trajectory:
    """Integrate forward from u0 >= 0, recording snapshots every stride.

    Positivity and the a priori bound sup u <= max(sup u0, p0 + 1) are asserted
    on every snapshot.  With track_front the window is recentered whenever the
    half-maximum crossing leaves the middle third.
    """
    if np.any(u0.values < 0):
        raise ConfigurationError("initial data must be nonnegative")
    bound = max(float(u0.values.max()), m.p0 + 1.0)
    x = u0.grid.positions()
    lip = lipschitz_budget(m, bound, (t0, t1), (float(x[0]), float(x[-1])))
    dt_max = stable_dt(op, u0.grid, lip, opts.cfl_safety)
    dt_req = min(opts.dt, dt_max) if opts.dt is not None else dt_max
    if opts.dt is not None and opts.dt > dt_max * (1.0 + 1e-12):
        raise StepSizeError(f"requested dt={opts.dt:.3e} exceeds the bound {dt_max:.3e}")
    n_steps, dt = _resolve_steps(t0, t1, dt_req)
    stride = opts.record_stride or (t1 - t0)
    every = max(1, int(round(stride / dt)))

    grid = u0.grid
    vals = u0.values.copy()
    snaps = [Field(grid, vals, t0)]
    tol_bound = bound * (1.0 + 1e-12) + 1e-12
    for k in range(n_steps):
        t = t0 + k * dt
        vals = step_values(op, m, grid, vals, t, dt, boundary=opts.boundary,
                           floor=opts.value_floor)
        if float(vals.max()) > tol_bound:
            raise InvariantBreachError(
                f"a priori bound violated: sup={vals.max():.6g} > {bound:.6g} at t={t + dt:.6g}")
        if opts.track_front and opts.boundary == "line":
            shift = _front_recenter_shift(grid, vals)
            if shift != 0:
                moved = shift_window(Field(grid, vals, t + dt), shift)
                grid, vals = moved.grid, moved.values.copy()
        if (k + 1) % every == 0 or k == n_steps - 1:
            snaps.append(Field(grid, vals, t0 + (k + 1) * dt))
    return Trajectory(tuple(snaps), stride)


def _front_recenter_shift(grid: Grid, vals: np.ndarray) -> int:
    top = float(vals.max())
    if top <= 0.0:
        return 0
    level = 0.5 * top
    below = vals < level
    if not below.any() or below.all():
        return 0
    idx = int(np.argmax(below))  # first cell below level, scanning rightward
    lo, hi = grid.n // 3, 2 * grid.n // 3
    if lo <= idx <= hi:
        return 0
    return idx - grid.n // 2


def solve_pair(op: DispersalOperator, m: ReactionModel, t0: float, u01: Field,
               u02: Field, t1: float,
               opts: IVPOptions = IVPOptions()) -> tuple[Trajectory, Trajectory]:
    """Lockstep integration of an ordered pair, asserting order at every step.

    The right-extension decay rate is fitted from the upper trajectory and
    shared, so the discrete comparison principle holds exactly; a violation
    signals a scheme bug, not a model property.
    """
    if u01.grid != u02.grid:
        raise ConfigurationError("pair must share a grid")
    if np.any(u01.values > u02.values):
        raise ConfigurationError("need u01 <= u02 pointwise")
    bound = max(float(u02.values.max()), m.p0 + 1.0)
    x = u01.grid.positions()
    lip = lipschitz_budget(m, bound, (t0, t1), (float(x[0]), float(x[-1])))
    dt_max = stable_dt(op, u01.grid, lip, opts.cfl_safety)
    dt_req = min(opts.dt, dt_max) if opts.dt is not None else dt_max
    n_steps, dt = _resolve_steps(t0, t1, dt_req)
    stride = opts.record_stride or (t1 - t0)
    every = max(1, int(round(stride / dt)))

    grid = u01.grid
    lo = u01.values.copy()
    hi = u02.values.copy()
    snaps_lo = [Field(grid, lo, t0)]
    snaps_hi = [Field(grid, hi, t0)]
    for k in range(n_steps):
        t = t0 + k * dt
        shared = right_decay_rate(hi) if opts.boundary == "line" else None
        lo = step_values(op, m, grid, lo, t, dt, boundary=opts.boundary,
                         rate=shared, floor=opts.value_floor)
        hi = step_values(op, m, grid, hi, t, dt, boundary=opts.boundary,
                         rate=shared, floor=opts.value_floor)
        if np.any(lo > hi):
            worst = float(np.max(lo - hi))
            raise InvariantBreachError(
                f"ordering violated by {worst:.3e} at t={t + dt:.6g} (scheme bug)")
        if (k + 1) % every == 0 or k == n_steps - 1:
            tk = t0 + (k + 1) * dt
            snaps_lo.append(Field(grid, lo, tk))
            snaps_hi.append(Field(grid, hi, tk))
    return Trajectory(tuple(snaps_lo), stride), Trajectory(tuple(snaps_hi), stride)
