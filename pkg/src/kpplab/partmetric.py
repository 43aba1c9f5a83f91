"""The part metric between positive fields and its traces along the flow.

rho(u, v) = ln max(sup u/v, sup v/u, 1) when both fields stay above the floor;
otherwise it is undefined (None).  Along lockstep trajectories of the monotone
scheme the trace is non-increasing up to arithmetic slack: the update is
order-preserving and subhomogeneous (step(c u) <= c step(u) for c >= 1 since
f decreases in u), which is the discrete form of the contraction argument.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InvariantBreachError
from .evolve import IVPOptions, lipschitz_budget, stable_dt, step_values, _resolve_steps
from .grids import DispersalOperator, Field, right_decay_rate
from .media import ReactionModel

MONOTONE_SLACK = 1e-10


def part_metric(u: Field, v: Field, floor: float = 1e-300) -> float | None:
    if u.grid != v.grid:
        raise ConfigurationError("part metric needs a shared grid")
    return part_metric_values(u.values, v.values, floor)


def part_metric_values(u: np.ndarray, v: np.ndarray, floor: float = 1e-300) -> float | None:
    if float(u.min()) <= floor or float(v.min()) <= floor:
        return None
    ratio = u / v
    alpha = max(float(ratio.max()), float(1.0 / ratio.min()), 1.0)
    return float(np.log(alpha))


def edge_ratio_stable(u: np.ndarray, v: np.ndarray, tol: float = 0.10) -> bool:
    """Window-width sanity: edge-cell ratios within tol of the adjacent interior."""
    ok = True
    for i, j in ((0, 1), (-1, -2)):
        if v[i] > 0 and v[j] > 0:
            r_edge, r_in = u[i] / v[i], u[j] / v[j]
            if r_in > 0 and abs(r_edge / r_in - 1.0) > tol:
                ok = False
    return ok


@dataclass(frozen=True)
class PartMetricTrace:
    times: np.ndarray
    rho: np.ndarray          # nan where undefined
    defined: np.ndarray      # bool per sample
    truncated_reason: str | None = None
    edge_warning: bool = False

    def __post_init__(self) -> None:
        if np.any(np.diff(self.times) <= 0):
            raise ConfigurationError("trace timestamps must be strictly increasing")

    @property
    def defined_samples(self) -> tuple[np.ndarray, np.ndarray]:
        mask = self.defined
        return self.times[mask], self.rho[mask]


def metric_trace(op: DispersalOperator, m: ReactionModel, u0: Field, v0: Field,
                 t0: float, t1: float, stride: float,
                 opts: IVPOptions = IVPOptions()) -> PartMetricTrace:
    """Lockstep integration recording rho at each stride.

    Post-asserts the non-increase of the trace within arithmetic slack; the
    extension decay rate is fitted from the pointwise max of the pair and
    shared, which keeps the subhomogeneity argument exact.  If a field hits
    the floor mid-run the trace is truncated with a reason.
    """
    if u0.grid != v0.grid:
        raise ConfigurationError("pair must share a grid")
    rho0 = part_metric(u0, v0, opts.value_floor)
    if rho0 is None:
        raise ConfigurationError("part metric undefined for the initial pair")
    bound = max(float(u0.values.max()), float(v0.values.max()), m.p0 + 1.0)
    x = u0.grid.positions()
    lip = lipschitz_budget(m, bound, (t0, t1), (float(x[0]), float(x[-1])))
    dt_max = stable_dt(op, u0.grid, lip, opts.cfl_safety)
    dt_req = min(opts.dt, dt_max) if opts.dt is not None else dt_max
    n_steps, dt = _resolve_steps(t0, t1, dt_req)
    every = max(1, int(round(stride / dt)))

    grid = u0.grid
    u = u0.values.copy()
    v = v0.values.copy()
    times = [t0]
    rhos = [rho0]
    edge_warn = not edge_ratio_stable(u, v)
    truncated = None
    for k in range(n_steps):
        t = t0 + k * dt
        shared = right_decay_rate(np.maximum(u, v)) if opts.boundary == "line" else None
        u = step_values(op, m, grid, u, t, dt, boundary=opts.boundary, rate=shared,
                        floor=opts.value_floor)
        v = step_values(op, m, grid, v, t, dt, boundary=opts.boundary, rate=shared,
                        floor=opts.value_floor)
        if (k + 1) % every == 0 or k == n_steps - 1:
            rho = part_metric_values(u, v, opts.value_floor)
            if rho is None:
                truncated = f"field hit the floor at t={t + dt:.6g}"
                break
            if rho > rhos[-1] + MONOTONE_SLACK:
                raise InvariantBreachError(
                    f"part metric increased by {rho - rhos[-1]:.3e} at t={t + dt:.6g}")
            edge_warn = edge_warn or not edge_ratio_stable(u, v)
            times.append(t0 + (k + 1) * dt)
            rhos.append(rho)
    times_a = np.array(times)
    rho_a = np.array(rhos)
    return PartMetricTrace(times_a, rho_a, np.isfinite(rho_a), truncated, edge_warn)


@dataclass(frozen=True)
class DecrementEstimate:
    delta: float
    segments: int
    threshold: float
    window: float


def decrement_estimate(trace: PartMetricTrace, sigma: float, tau: float) -> DecrementEstimate | None:
    """Minimum drop of rho over [t, t + tau] segments that start with rho >= sigma.

    Returns None when no segment qualifies (e.g. the trace starts below sigma).
    """
    ts, rho = trace.defined_samples
    if ts.size < 2:
        return None
    drops = []
    for i, t in enumerate(ts):
        if rho[i] < sigma:
            continue
        j = int(np.searchsorted(ts, t + tau - 1e-9))
        if j >= ts.size:
            continue
        if ts[j] - t > tau * 1.5:
            continue  # stride too coarse to represent the window
        drops.append(rho[i] - rho[j])
    if not drops:
        return None
    return DecrementEstimate(float(min(drops)), len(drops), sigma, tau)
