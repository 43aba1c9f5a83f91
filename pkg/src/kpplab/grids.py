"""Grids, fields, kernels, and the two dispersal operators with their tilted forms.

The spatial domain is a uniform window of the line.  A moving frame is encoded
by an integer ``window_shift``: cell ``i`` sits at ``x_min + (window_shift + i) * dx``.
Off-window values are supplied by an extension policy (constant on the left,
clamped exponential continuation on the right) so fronts connecting a positive
state on the left to an exponentially decaying tail on the right see minimal
artificial reflection.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigurationError, NumericsError

KERNEL_MASS_TOL = 1e-12
TILT_GUARD = 50.0


@dataclass(frozen=True)
class Grid:
    """Uniform 1-d grid; cell i is at x_min + (window_shift + i) * dx."""

    x_min: float
    dx: float
    n: int
    window_shift: int = 0

    def __post_init__(self) -> None:
        if not (self.dx > 0.0):
            raise ConfigurationError(f"grid spacing must be positive, got {self.dx}")
        if self.n < 3:
            raise ConfigurationError(f"grid needs at least 3 cells, got {self.n}")

    def positions(self) -> np.ndarray:
        return self.x_min + (self.window_shift + np.arange(self.n)) * self.dx

    def shifted(self, k: int) -> "Grid":
        return replace(self, window_shift=self.window_shift + int(k))

    @property
    def width(self) -> float:
        return (self.n - 1) * self.dx


@dataclass(frozen=True)
class Field:
    """Sampled density u(t, .) on a grid, with timestamp."""

    grid: Grid
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.grid.n,):
            raise ConfigurationError(
                f"field length {vals.shape} does not match grid n={self.grid.n}"
            )
        if not np.all(np.isfinite(vals)):
            raise NumericsError("field contains non-finite values")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def with_values(self, values: np.ndarray, t: float | None = None) -> "Field":
        return Field(self.grid, values, self.t if t is None else t)


def constant_field(grid: Grid, value: float, t: float = 0.0) -> Field:
    return Field(grid, np.full(grid.n, float(value)), t)


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered snapshots sharing grid geometry modulo window_shift."""

    snapshots: tuple[Field, ...]
    record_stride: float

    def __post_init__(self) -> None:
        times = [s.t for s in self.snapshots]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigurationError("snapshot timestamps must be strictly increasing")
        g0 = self.snapshots[0].grid
        for s in self.snapshots[1:]:
            if s.grid.dx != g0.dx or s.grid.n != g0.n or s.grid.x_min != g0.x_min:
                raise ConfigurationError("snapshots must share grid geometry up to window_shift")

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def final(self) -> Field:
        return self.snapshots[-1]


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Kernel:
    """Even, nonnegative dispersal kernel supported on [-r0, r0] with unit mass.

    ``profile`` is a vectorized evaluator of the density on the closed support;
    discrete quadrature weights are built per grid spacing by ``weights``.
    """

    r0: float
    profile: Callable[[np.ndarray], np.ndarray]
    label: str = "custom"

    def __post_init__(self) -> None:
        if not (self.r0 > 0.0):
            raise ConfigurationError(f"kernel radius must be positive, got {self.r0}")

    def weights(self, dx: float) -> tuple[np.ndarray, np.ndarray]:
        """Trapezoid quadrature weights on offsets j*dx, renormalized to sum 1.

        Requires r0/dx >= 2 so the kernel is resolved.  Cell offsets are
        returned as integers; weights are nonnegative and sum to exactly 1.
        """
        m = int(np.floor(self.r0 / dx + 1e-9))
        if m < 2:
            raise ConfigurationError(
                f"kernel unresolved: r0/dx = {self.r0 / dx:.3f} < 2 (r0={self.r0}, dx={dx})"
            )
        offsets = np.arange(-m, m + 1)
        z = offsets * dx
        w = np.asarray(self.profile(z), dtype=np.float64) * dx
        if float(z[-1]) >= self.r0 * (1.0 - 1e-9):
            # support edge sampled: trapezoid halves the endpoint weight
            w[0] *= 0.5
            w[-1] *= 0.5
        if np.any(w < -1e-15):
            raise ConfigurationError("kernel profile is negative on the sample grid")
        w = np.clip(w, 0.0, None)
        asym = np.max(np.abs(w - w[::-1]))
        if asym > 1e-10 * max(w.max(), 1e-300):
            raise ConfigurationError(f"kernel is not even (asymmetry {asym:.2e})")
        total = w.sum()
        if total <= 0.0:
            raise ConfigurationError("kernel has zero discrete mass")
        w = w / total
        return offsets, w


def uniform_kernel(r0: float) -> Kernel:
    def profile(z: np.ndarray) -> np.ndarray:
        return np.where(np.abs(z) <= r0 * (1.0 + 1e-12), 1.0 / (2.0 * r0), 0.0)

    return Kernel(r0=r0, profile=profile, label=f"uniform(r0={r0})")


def cosine_kernel(r0: float) -> Kernel:
    def profile(z: np.ndarray) -> np.ndarray:
        inside = np.abs(z) < r0
        vals = np.where(inside, (np.pi / (4.0 * r0)) * np.cos(np.pi * z / (2.0 * r0)), 0.0)
        return np.clip(vals, 0.0, None)

    return Kernel(r0=r0, profile=profile, label=f"cosine(r0={r0})")


def kernel_from_table(z: np.ndarray, k: np.ndarray, label: str = "table") -> Kernel:
    z = np.asarray(z, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if z.ndim != 1 or z.shape != k.shape or z.size < 5:
        raise ConfigurationError("kernel table needs matching 1-d arrays with >= 5 rows")
    order = np.argsort(z)
    z, k = z[order], k[order]
    if np.any(k < 0):
        raise ConfigurationError("kernel table has negative values")
    r0 = float(max(abs(z[0]), abs(z[-1])))

    def profile(q: np.ndarray) -> np.ndarray:
        return np.interp(q, z, k, left=0.0, right=0.0)

    return Kernel(r0=r0, profile=profile, label=label)


def kernel_from_csv(path: str | Path) -> Kernel:
    """Load a kernel from a two-column CSV (z, kappa(z)); header row optional."""
    zs: list[float] = []
    ks: list[float] = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                zs.append(float(row[0]))
                ks.append(float(row[1]))
            except ValueError:
                continue  # header row
    return kernel_from_table(np.array(zs), np.array(ks), label=f"csv({path})")


def kernel_laplace(kernel: Kernel, mu: float, dx: float | None = None) -> float:
    """Quadrature of the exponential moment of the kernel with the apply weights."""
    if abs(mu) * kernel.r0 > TILT_GUARD:
        raise NumericsError(
            f"tilt too strong for kernel support: |mu|*r0 = {abs(mu) * kernel.r0:.1f} > {TILT_GUARD}"
        )
    h = dx if dx is not None else kernel.r0 / 64.0
    offsets, w = kernel.weights(h)
    return float(np.dot(w, np.exp(mu * offsets * h)))


# ---------------------------------------------------------------------------
# Dispersal operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DispersalOperator:
    kind: str  # "random" | "nonlocal"
    kernel: Kernel | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("random", "nonlocal"):
            raise ConfigurationError(f"unknown dispersal kind {self.kind!r}")
        if self.kind == "nonlocal" and self.kernel is None:
            raise ConfigurationError("nonlocal dispersal needs a kernel")

    def reach(self, dx: float) -> int:
        """Number of ghost cells the stencil needs on each side."""
        if self.kind == "random":
            return 1
        offsets, _ = self.kernel.weights(dx)
        return int(offsets[-1])


def random_dispersal() -> DispersalOperator:
    return DispersalOperator("random")


def nonlocal_dispersal(kernel: Kernel) -> DispersalOperator:
    return DispersalOperator("nonlocal", kernel)


# ---------------------------------------------------------------------------
# Extension policy (truncation of the line)
# ---------------------------------------------------------------------------


def right_decay_rate(values: np.ndarray) -> float | None:
    """Per-cell decay ratio fitted to the last two cells, clamped to [0, 1].

    Returns None when the tail is not positive, which selects the constant-zero
    fallback extension.
    """
    a, b = float(values[-2]), float(values[-1])
    if a <= 0.0 or b <= 0.0:
        return None
    return min(b / a, 1.0)


def extension_values(values: np.ndarray, side: str, count: int,
                     rate: float | None = None) -> np.ndarray:
    """Ghost values continuing the field beyond the window.

    Left: constant continuation by the edge value.  Right: geometric
    continuation at ``rate`` per cell (fitted from the last two cells when not
    given), clamped to [0, last value]; non-positive tail falls back to zeros.
    """
    if count <= 0:
        return np.empty(0)
    if side == "left":
        return np.full(count, values[0])
    if side != "right":
        raise ConfigurationError(f"side must be 'left' or 'right', got {side!r}")
    q = right_decay_rate(values) if rate is None else rate
    b = float(values[-1])
    if q is None or b <= 0.0:
        return np.zeros(count)
    ghosts = b * np.power(q, np.arange(1, count + 1))
    return np.clip(ghosts, 0.0, b)


def pad_values(values: np.ndarray, reach: int, rate: float | None = None) -> np.ndarray:
    return np.concatenate([
        extension_values(values, "left", reach),
        values,
        extension_values(values, "right", reach, rate=rate),
    ])


# ---------------------------------------------------------------------------
# Operator application
# ---------------------------------------------------------------------------


def _tilted_weights(op: DispersalOperator, mu: float, dx: float) -> tuple[int, np.ndarray]:
    kernel = op.kernel
    if abs(mu) * kernel.r0 > TILT_GUARD:
        raise NumericsError(
            f"tilt too strong for kernel support: |mu|*r0 = {abs(mu) * kernel.r0:.1f} > {TILT_GUARD}"
        )
    offsets, w = kernel.weights(dx)
    tw = w * np.exp(-mu * offsets * dx)
    return int(offsets[-1]), tw


def apply_values(op: DispersalOperator, values: np.ndarray, dx: float,
                 rate: float | None = None) -> np.ndarray:
    """Dispersal operator on raw values with line extension at the window edges."""
    if op.kind == "random":
        p = pad_values(values, 1, rate=rate)
        return (p[:-2] - 2.0 * values + p[2:]) / (dx * dx)
    m, tw = _tilted_weights(op, 0.0, dx)
    p = pad_values(values, m, rate=rate)
    return np.convolve(p, tw[::-1], mode="valid") - values


def tilted_apply_values(op: DispersalOperator, mu: float, values: np.ndarray, dx: float,
                        rate: float | None = None) -> np.ndarray:
    """Conjugation of the dispersal operator by exp(-mu x), acting on raw values.

    Random dispersal uses the centered form w_xx - 2 mu w_x + mu^2 w, which is
    exact on constants; nonlocal dispersal tilts the quadrature weights, which
    is the exact discrete conjugation.
    """
    if not np.isfinite(mu):
        raise ConfigurationError("tilt rate must be finite")
    if op.kind == "random":
        p = pad_values(values, 1, rate=rate)
        lap = (p[:-2] - 2.0 * values + p[2:]) / (dx * dx)
        grad = (p[2:] - p[:-2]) / (2.0 * dx)
        return lap - (2.0 * mu) * grad + (mu * mu) * values
    m, tw = _tilted_weights(op, mu, dx)
    p = pad_values(values, m, rate=rate)
    return np.convolve(p, tw[::-1], mode="valid") - values


def apply(op: DispersalOperator, u: Field) -> Field:
    out = apply_values(op, u.values, u.grid.dx)
    if not np.all(np.isfinite(out)):
        raise NumericsError("dispersal produced non-finite values")
    return u.with_values(out)


def tilted_apply(op: DispersalOperator, mu: float, w: Field) -> Field:
    out = tilted_apply_values(op, mu, w.values, w.grid.dx)
    if not np.all(np.isfinite(out)):
        raise NumericsError("tilted dispersal produced non-finite values")
    return w.with_values(out)


def shift_window(u: Field, k: int) -> Field:
    """Move the window by k cells; exposed cells are filled by the extension."""
    k = int(k)
    n = u.grid.n
    if abs(k) >= n:
        raise ConfigurationError(f"frame jump |k|={abs(k)} >= window size {n}")
    if k == 0:
        return u
    vals = u.values
    out = np.empty(n)
    if k > 0:
        out[: n - k] = vals[k:]
        out[n - k:] = extension_values(vals, "right", k)
    else:
        out[-k:] = vals[:k]
        out[: -k] = extension_values(vals, "left", -k)
    return Field(u.grid.shifted(k), out, u.t)
