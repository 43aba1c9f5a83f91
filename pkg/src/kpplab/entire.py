"""Construction and validation of the unique strictly positive entire solution.

The double-limit iteration evolves the constant fields delta and M from ever
earlier anchor times to a fixed target time; the lower branch is nondecreasing
and the upper branch nonincreasing (exact discrete comparison), and the part
metric between them certifies convergence.  For media whose time dependence is
periodic with the iteration span a whole number of periods, each deepening is
one application of the same monotone period map, so the sequence is computed
incrementally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ConvergenceError, InvariantBreachError
from .evolve import IVPOptions, lipschitz_budget, stable_dt, step_values
from .grids import DispersalOperator, Field, Grid, constant_field
from .media import ReactionModel
from .partmetric import part_metric_values


@dataclass(frozen=True)
class EntireSolution:
    """Windowed record of the positive entire solution.

    ``orbit`` tags how snapshots extend beyond the window: "stationary" for
    time-independent media, "periodic" (period t_period) for time-periodic
    ones, "window" otherwise.
    """

    window: tuple[float, float]
    snapshots: tuple[Field, ...]
    gap_history: np.ndarray
    delta: float
    big: float
    t_iter: float
    orbit: str
    t_period: float | None
    boundary: str
    dt: float
    lower_monotone: bool = True
    upper_monotone: bool = True

    def __post_init__(self) -> None:
        if min(float(s.values.min()) for s in self.snapshots) <= 0.0:
            raise InvariantBreachError("entire solution must be strictly positive")

    @property
    def grid(self) -> Grid:
        return self.snapshots[0].grid

    def at_time(self, t: float, tol: float = 1e-8) -> Field:
        """Snapshot at time t, using stationarity or periodic wrapping."""
        times = np.array([s.t for s in self.snapshots])
        if self.orbit == "stationary":
            k = int(np.argmin(np.abs(times - t)))
            return Field(self.snapshots[k].grid, self.snapshots[k].values, t)
        if self.orbit == "periodic":
            T = self.t_period
            phase = np.mod(times - t, T)
            phase = np.minimum(phase, T - phase)
            k = int(np.argmin(phase))
            if phase[k] > tol:
                raise ConfigurationError(
                    f"no stored snapshot at phase of t={t} (nearest off by {phase[k]:.2e})")
            return Field(self.snapshots[k].grid, self.snapshots[k].values, t)
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) > tol:
            raise ConfigurationError(f"t={t} outside the stored window")
        return self.snapshots[k]


def _default_t0_samples(m: ReactionModel) -> np.ndarray:
    if m.time_dependent:
        return np.linspace(0.0, m.t_period, 8, endpoint=False)
    return np.zeros(1)


def calibrate_floor(op: DispersalOperator, m: ReactionModel, grid: Grid, *,
                    t0_samples: np.ndarray | None = None,
                    max_halvings: int = 12, t_candidates: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0),
                    opts: IVPOptions = IVPOptions(boundary="ring")) -> tuple[float, float]:
    """First (delta, T) with the constant field delta mapped above itself after T.

    Searches delta over p0 / 2^k (k = 1, 2, ...) and T over doublings, checking
    every sampled anchor time; media with no growth at zero are rejected.
    """
    t0s = _default_t0_samples(m) if t0_samples is None else np.asarray(t0_samples)
    x = grid.positions()
    lip = lipschitz_budget(m, m.p0 + 1.0, (float(t0s.min()), float(t0s.max()) + max(t_candidates)),
                           (float(x[0]), float(x[-1])))
    dt = stable_dt(op, grid, lip, opts.cfl_safety)
    for k in range(1, max_halvings + 1):
        delta = m.p0 * 2.0 ** (-k)
        for T in t_candidates:
            ok = True
            for t0 in t0s:
                n_steps = max(1, int(np.ceil(T / dt - 1e-12)))
                h = T / n_steps
                vals = np.full(grid.n, delta)
                for j in range(n_steps):
                    vals = step_values(op, m, grid, vals, float(t0) + j * h, h,
                                       boundary=opts.boundary)
                if float(vals.min()) < delta:
                    ok = False
                    break
            if ok:
                return delta, T
    raise ConvergenceError(
        "no (delta, T) found: the medium's growth at zero is too weak numerically")


def build_entire(op: DispersalOperator, m: ReactionModel, delta: float, big: float,
                 t_iter: float, n_max: int, tol: float,
                 window: tuple[float, float], grid: Grid, *,
                 opts: IVPOptions = IVPOptions(boundary="ring"),
                 record_stride: float | None = None,
                 dt: float | None = None) -> EntireSolution:
    """Run the double-limit iteration and evolve the converged state across the window.

    Requires delta below the calibrated floor and big >= p0 (and above any
    catalog bound).  Raises ConvergenceError when the part-metric gap stagnates
    above tol; the gap history rides along in the exception message.
    """
    t_a, t_b = window
    if t_b <= t_a:
        raise ConfigurationError("window must be increasing")
    if big < m.p0:
        raise ConfigurationError("big must be at least p0")
    if delta >= big:
        raise ConfigurationError("delta must be below big")
    x = grid.positions()
    lip = lipschitz_budget(m, big, (t_a - n_max * t_iter, t_b), (float(x[0]), float(x[-1])))
    dt_bound = stable_dt(op, grid, lip, opts.cfl_safety)
    h = min(dt, dt_bound) if dt is not None else dt_bound
    if m.time_dependent:
        # a whole number of periods per deepening keeps the map autonomous
        periods = max(1, int(np.ceil(t_iter / m.t_period - 1e-12)))
        t_iter = periods * m.t_period
    steps_per_iter = max(1, int(np.ceil(t_iter / h - 1e-12)))
    h = t_iter / steps_per_iter
    # each deepening is one application of the same monotone map: the span is a
    # whole number of periods (or the medium is autonomous)

    def back_map(vals: np.ndarray, anchor: float) -> np.ndarray:
        out = vals.copy()
        for j in range(steps_per_iter):
            out = step_values(op, m, grid, out, anchor + j * h, h, boundary=opts.boundary,
                              floor=opts.value_floor)
        return out

    lower = np.full(grid.n, float(delta))
    upper = np.full(grid.n, float(big))
    gaps: list[float] = []
    converged = False
    lower_monotone = True
    upper_monotone = True
    for n in range(1, n_max + 1):
        anchor = t_a - t_iter  # any anchor of the same phase; map is the same
        new_lower = back_map(lower, anchor)
        new_upper = back_map(upper, anchor)
        lower_monotone = lower_monotone and bool(np.all(new_lower >= lower))
        upper_monotone = upper_monotone and bool(np.all(new_upper <= upper))
        if np.any(new_lower > new_upper):
            raise InvariantBreachError("sandwich ordering violated (scheme bug)")
        lower, upper = new_lower, new_upper
        gap = part_metric_values(upper, lower, opts.value_floor)
        if gap is None:
            raise ConvergenceError("iteration branch hit the value floor")
        gaps.append(gap)
        if gap < tol:
            converged = True
            break
    if not converged and gaps and gaps[-1] >= tol:
        raise ConvergenceError(
            f"entire-solution gap stagnated at {gaps[-1]:.3e} >= tol={tol:.1e}; "
            f"history={np.array2string(np.array(gaps), precision=3)}")

    u_star = np.sqrt(lower * upper)  # part-metric midpoint of the branches
    stride = record_stride or max((t_b - t_a) / 32.0, h)
    span_steps = max(1, int(np.ceil((t_b - t_a) / h - 1e-12)))
    every = max(1, int(round(stride / h)))
    vals = u_star
    snaps = [Field(grid, vals, t_a)]
    for j in range(span_steps):
        vals = step_values(op, m, grid, vals, t_a + j * h, h, boundary=opts.boundary,
                           floor=opts.value_floor)
        if (j + 1) % every == 0 or j == span_steps - 1:
            snaps.append(Field(grid, vals, t_a + (j + 1) * h))

    if m.time_dependent:
        orbit = "periodic"
    else:
        drift = max(float(np.max(np.abs(s.values - snaps[0].values))) for s in snaps)
        orbit = "stationary" if drift < 10.0 * tol else "window"
    return EntireSolution(window, tuple(snaps), np.array(gaps), delta, big, t_iter,
                          orbit, m.t_period, opts.boundary, h,
                          lower_monotone, upper_monotone)


@dataclass(frozen=True)
class BasinRow:
    t0: float
    label: str
    time_to_tol: float | None
    final_error: float
    passed: bool


@dataclass(frozen=True)
class BasinReport:
    rows: tuple[BasinRow, ...]
    tol: float
    horizon: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def max_time_to_tol(self) -> float | None:
        ts = [r.time_to_tol for r in self.rows if r.time_to_tol is not None]
        return max(ts) if ts else None


def verify_entire(op: DispersalOperator, m: ReactionModel, entire: EntireSolution,
                  factors: tuple[float, ...] = (0.5, 1.5),
                  t0_samples: np.ndarray | None = None, horizon: float = 30.0,
                  tol: float = 1e-3) -> BasinReport:
    """Attraction check: scaled copies of the entire solution converge back.

    Each initial state must be strictly positive (inf > 0); the sup-norm
    error against the re-evolved entire solution is traced and the
    time-to-tolerance recorded per anchor time, giving a sampled uniformity
    proxy across t0.
    """
    t0s = _default_t0_samples(m) if t0_samples is None else np.asarray(t0_samples)
    grid = entire.grid
    rows: list[BasinRow] = []
    h = entire.dt
    n_steps = int(np.ceil(horizon / h - 1e-12))
    for t0 in t0s:
        base = entire.at_time(float(t0)).values
        for factor in factors:
            u0 = factor * base
            if float(u0.min()) <= 0.0:
                raise ConfigurationError("initial data must have positive infimum")
            u = u0.copy()
            ref = base.copy()
            time_to = None
            err = float(np.max(np.abs(u - ref)))
            for j in range(n_steps):
                t = float(t0) + j * h
                u = step_values(op, m, grid, u, t, h, boundary=entire.boundary)
                ref = step_values(op, m, grid, ref, t, h, boundary=entire.boundary)
                err = float(np.max(np.abs(u - ref)))
                if err < tol:
                    time_to = (j + 1) * h
                    break
            rows.append(BasinRow(float(t0), f"{factor}x", time_to, err, time_to is not None))
    return BasinReport(tuple(rows), tol, horizon)


@dataclass(frozen=True)
class RecurrenceReport:
    time_defect: float | None
    space_defect: float | None
    almost_periods: np.ndarray | None
    max_gap: float | None
    passed: bool


def check_recurrence(entire: EntireSolution, t_period: float | None = None,
                     p_period: float | None = None, tol: float = 1e-6,
                     eps: float | None = None) -> RecurrenceReport:
    """Periodicity defects of the stored window, or an almost-period scan.

    Periodic media: sup |u(t + T) - u(t)| and sup |u(t, x + p) - u(t, x)| are
    compared against tol.  Quasi-periodic media: scans window shifts tau and
    reports those with sup-difference below eps (epsilon-almost-periods) plus
    the largest gap between them; heuristic evidence only.
    """
    snaps = entire.snapshots
    times = np.array([s.t for s in snaps])
    span = times[-1] - times[0]
    time_defect = None
    space_defect = None
    aps = None
    max_gap = None
    ok = True

    if t_period:
        if span < 3.0 * t_period:
            raise ConfigurationError("window must cover at least 3 time periods")
        defect = 0.0
        for i, t in enumerate(times):
            j = int(np.argmin(np.abs(times - (t + t_period))))
            if abs(times[j] - t - t_period) < entire.dt:
                defect = max(defect, float(np.max(np.abs(snaps[j].values - snaps[i].values))))
        time_defect = defect
        ok = ok and defect < tol

    if p_period:
        k = int(round(p_period / entire.grid.dx))
        if abs(k * entire.grid.dx - p_period) > 1e-9:
            raise ConfigurationError("space period must be a whole number of cells")
        defect = max(float(np.max(np.abs(np.roll(s.values, -k) - s.values)))
                     for s in snaps)
        space_defect = defect
        ok = ok and defect < tol

    if not t_period and not p_period:
        eps = eps if eps is not None else 1e-3
        stride = times[1] - times[0]
        shifts = []
        for k in range(1, len(times) - 1):
            tau = k * stride
            diffs = [float(np.max(np.abs(snaps[i + k].values - snaps[i].values)))
                     for i in range(len(times) - k)]
            if max(diffs) < eps:
                shifts.append(tau)
        aps = np.array(shifts)
        if aps.size >= 2:
            max_gap = float(np.max(np.diff(aps)))
        ok = aps.size > 0
    return RecurrenceReport(time_defect, space_defect, aps, max_gap, ok)
