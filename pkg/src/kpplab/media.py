"""Reaction-term families, heterogeneous coefficients, and assumption verifiers.

Catalog models all share the structural form f(t, x, u) = a(t, x) * (1 - u)
with a bounded away from zero, which keeps every standing-assumption clause
checkable in closed form.  Class tags used by :func:`verify_class`:

* ``periodic_kpp``        -- space-periodic (t, x)-dependent KPP class with the
  low-density lower bound u*f >= f(.,0)*u - C*u^(1+nu);
* ``almost_periodic_linear`` -- f = a(x)(1-u) with quasi-periodic a(x);
* ``space_sandwich``      -- time-independent f(x, u) with the sandwich
  a(x)g(u) <= u f(x, u) <= a(x) u for a scalar KPP nonlinearity g.
"""

from __future__ import annotations

from dataclasses import dataclass, replace as dc_replace
from typing import Callable

import numpy as np

from .errors import ConfigurationError

CLASS_TAGS = ("periodic_kpp", "almost_periodic_linear", "space_sandwich")


@dataclass(frozen=True)
class Nonlinearity:
    """Scalar nonlinearity g with derivative, used by the sandwich class."""

    fn: Callable[[np.ndarray], np.ndarray]
    dfn: Callable[[np.ndarray], np.ndarray]
    label: str = "g"

    def __call__(self, u):
        return self.fn(u)


def logistic_nonlinearity() -> Nonlinearity:
    return Nonlinearity(lambda u: u * (1.0 - u), lambda u: 1.0 - 2.0 * u, "u(1-u)")


@dataclass(frozen=True)
class ReactionModel:
    """Per-capita growth rate f(t, x, u) with derivative and class metadata."""

    kind: str
    f: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    f_u: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    beta0: float
    p0: float
    nu: float = 1.0
    c_low: float | None = None
    delta_low: float = 1.0
    g: Nonlinearity | None = None
    a_minus: float | None = None
    a_plus: float | None = None
    t_period: float | None = None
    p_period: float | None = None
    frequencies: tuple[float, ...] | None = None
    label: str = ""

    def __post_init__(self) -> None:
        if self.beta0 <= 0:
            raise ConfigurationError("beta0 must be positive")
        if self.p0 <= 0:
            raise ConfigurationError("p0 must be positive")
        if self.a_minus is not None and self.a_plus is not None:
            if not (0 < self.a_minus <= self.a_plus < np.inf):
                raise ConfigurationError("need 0 < a_minus <= a_plus < inf")

    @property
    def time_dependent(self) -> bool:
        return self.t_period is not None and self.t_period > 0

    def rate_at_zero(self, t: float, x: np.ndarray) -> np.ndarray:
        """Coefficient a(t, x) = f(t, x, 0)."""
        x = np.asarray(x, dtype=np.float64)
        return np.asarray(self.f(t, x, np.zeros_like(x)), dtype=np.float64)


def eval_f(m: ReactionModel, t: float, x, u):
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if np.any(u < 0):
        raise ConfigurationError("density must be nonnegative")
    out = np.asarray(m.f(t, x, u), dtype=np.float64)
    return out


def eval_fu(m: ReactionModel, t: float, x, u):
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if np.any(u < 0):
        raise ConfigurationError("density must be nonnegative")
    return np.asarray(m.f_u(t, x, u), dtype=np.float64)


@dataclass(frozen=True)
class CoefficientField:
    """Evaluator of a(t, x) = f(t, x, 0)."""

    a: Callable[[float, np.ndarray], np.ndarray]


def coefficient_field(m: ReactionModel) -> CoefficientField:
    return CoefficientField(a=m.rate_at_zero)


# ---------------------------------------------------------------------------
# Catalog constructors
# ---------------------------------------------------------------------------


def _linear_in_u_model(kind: str, a: Callable[[float, np.ndarray], np.ndarray],
                       a_minus: float, a_plus: float, **kw) -> ReactionModel:
    """f(t, x, u) = a(t, x) (1 - u); constants follow from the bounds on a."""

    def f(t, x, u):
        return a(t, x) * (1.0 - u)

    def f_u(t, x, u):
        return -a(t, x) * np.ones_like(np.asarray(u, dtype=np.float64))

    return ReactionModel(
        kind=kind, f=f, f_u=f_u,
        beta0=a_minus, p0=2.0, nu=1.0, c_low=a_plus, delta_low=1.0,
        a_minus=a_minus, a_plus=a_plus, **kw,
    )


def logistic_model() -> ReactionModel:
    """Classical f(t, x, u) = 1 - u."""
    return _linear_in_u_model(
        "logistic", lambda t, x: np.ones_like(np.asarray(x, dtype=np.float64)),
        1.0, 1.0, label="1-u",
    )


def periodic_kpp_model(base: float = 1.0, amplitude: float = 0.15,
                       t_period: float = 2.0, p_period: float = 4.0) -> ReactionModel:
    """(t, x)-periodic a(t, x) = base + amplitude sin(2 pi t / T) cos(2 pi x / p)."""
    if not (0 <= amplitude < base):
        raise ConfigurationError("need 0 <= amplitude < base so inf a > 0")

    def a(t, x):
        return base + amplitude * np.sin(2.0 * np.pi * t / t_period) * np.cos(
            2.0 * np.pi * x / p_period)

    return _linear_in_u_model(
        "periodic_kpp", a, base - amplitude, base + amplitude,
        t_period=t_period, p_period=p_period,
        label=f"({base}+{amplitude}sin(2pi t/{t_period})cos(2pi x/{p_period}))(1-u)",
    )


def almost_periodic_linear_model(base: float = 1.0,
                                 coefficients: tuple[float, ...] = (0.25, 0.25),
                                 frequencies: tuple[float, ...] = (1.0, float(np.sqrt(2.0))),
                                 phases: tuple[float, ...] | None = None) -> ReactionModel:
    """Quasi-periodic a(x) = base + sum_k c_k sin(w_k x + theta_k)."""
    coefficients = tuple(float(c) for c in coefficients)
    frequencies = tuple(float(w) for w in frequencies)
    if len(coefficients) != len(frequencies):
        raise ConfigurationError("coefficients and frequencies must pair up")
    phases = tuple(phases) if phases is not None else (0.0,) * len(frequencies)
    span = sum(abs(c) for c in coefficients)
    if span >= base:
        raise ConfigurationError("sum |c_k| must stay below base so inf a > 0")

    def a(t, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.full_like(x, base)
        for c, w, th in zip(coefficients, frequencies, phases):
            out = out + c * np.sin(w * x + th)
        return out

    return _linear_in_u_model(
        "almost_periodic_linear", a, base - span, base + span,
        frequencies=frequencies, label=f"({base}+quasi-periodic)(1-u)",
    )


def space_sandwich_model(base: float = 1.0, amplitude: float = 0.2,
                         p_period: float = 4.0) -> ReactionModel:
    """Time-independent f(x, u) = a(x)(1-u) with g(u) = u(1-u) sandwich data."""
    if not (0 <= amplitude < base):
        raise ConfigurationError("need 0 <= amplitude < base so inf a > 0")

    def a(t, x):
        return base + amplitude * np.cos(2.0 * np.pi * np.asarray(x, dtype=np.float64) / p_period)

    m = _linear_in_u_model(
        "space_sandwich", a, base - amplitude, base + amplitude,
        p_period=p_period, label=f"({base}+{amplitude}cos(2pi x/{p_period}))(1-u)",
    )
    return dc_replace(m, g=logistic_nonlinearity())


def custom_model(f, f_u, beta0, p0, **kw) -> ReactionModel:
    return ReactionModel(kind="custom", f=f, f_u=f_u, beta0=beta0, p0=p0, **kw)


def make_media(spec: dict) -> ReactionModel:
    """Build a catalog model from a plain dict (the run-config `model` block)."""
    kind = spec.get("kind")
    params = {k: v for k, v in spec.items() if k != "kind"}
    builders = {
        "logistic": logistic_model,
        "periodic_kpp": periodic_kpp_model,
        "almost_periodic_linear": almost_periodic_linear_model,
        "space_sandwich": space_sandwich_model,
    }
    if kind not in builders:
        raise ConfigurationError(
            f"unknown model kind {kind!r}; catalog: {sorted(builders)}")
    for key in ("coefficients", "frequencies", "phases"):
        if key in params:
            params[key] = tuple(params[key])
    try:
        return builders[kind](**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for model {kind!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# Assumption verifiers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClauseCheck:
    name: str
    passed: bool
    worst: float
    detail: str = ""


@dataclass(frozen=True)
class VerificationReport:
    clauses: tuple[ClauseCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def __getitem__(self, name: str) -> ClauseCheck:
        for c in self.clauses:
            if c.name == name:
                return c
        raise KeyError(name)


def verify_standing(m: ReactionModel,
                    box: tuple[tuple[float, float], tuple[float, float], tuple[float, float]] = ((0.0, 20.0), (-20.0, 20.0), (0.0, 5.0)),
                    samples: int = 400,
                    horizon: float = 40.0,
                    margin: float = 1e-3,
                    rng: np.random.Generator | None = None) -> VerificationReport:
    """Sampled check of the standing assumptions on a (t, x, u) box.

    Clauses: f <= -beta0 on {u >= p0}; f_u <= -beta0 on {u >= 0}; and every
    sliding-window average of inf_x f(tau, x, 0) with window length in
    [horizon/2, horizon] exceeds a positive margin.  The true long-run liminf
    is not numerically verifiable; finite windows plus a margin stand in.
    """
    if samples < 100:
        raise ConfigurationError("need at least 100 samples")
    rng = rng or np.random.default_rng(0)
    (t0, t1), (x0, x1), (_, u1) = box
    ts = rng.uniform(t0, t1, samples)
    xs = rng.uniform(x0, x1, samples)

    us_high = m.p0 + rng.uniform(0.0, max(u1, 1.0), samples)
    f_high = np.array([float(eval_f(m, t, np.array([x]), np.array([u]))[0])
                       for t, x, u in zip(ts, xs, us_high)])
    worst_f = float(f_high.max())
    saturation = ClauseCheck(
        "saturation", worst_f <= -m.beta0 + 1e-12, worst_f,
        f"max f on u >= p0={m.p0} (must be <= -beta0={-m.beta0})")

    us_any = rng.uniform(0.0, max(u1, m.p0 + 1.0), samples)
    fu_any = np.array([float(eval_fu(m, t, np.array([x]), np.array([u]))[0])
                       for t, x, u in zip(ts, xs, us_any)])
    worst_fu = float(fu_any.max())
    damping = ClauseCheck(
        "derivative_damping", worst_fu <= -m.beta0 + 1e-12, worst_fu,
        "max f_u on u >= 0 (must be <= -beta0)")

    # sliding-window averages of inf_x f(tau, x, 0)
    n_tau = 512
    taus = np.linspace(t0, t0 + horizon, n_tau)
    x_grid = np.linspace(x0, x1, 257)
    inf_a = np.array([float(np.min(m.rate_at_zero(tau, x_grid))) for tau in taus])
    cum = np.concatenate([[0.0], np.cumsum((inf_a[1:] + inf_a[:-1]) * 0.5 * np.diff(taus))])
    worst_avg = np.inf
    for frac in np.linspace(0.5, 1.0, 6):
        length = horizon * frac
        k = int(round(length / (taus[1] - taus[0])))
        if k < 1 or k >= n_tau:
            continue
        avgs = (cum[k:] - cum[:-k]) / (taus[k:] - taus[:-k])
        worst_avg = min(worst_avg, float(avgs.min()))
    growth = ClauseCheck(
        "mean_growth_at_zero", worst_avg > margin, worst_avg,
        f"min sliding-window average of inf_x f(tau, x, 0) (must exceed {margin})")

    return VerificationReport((saturation, damping, growth))


def verify_class(m: ReactionModel, cls: str, samples: int = 400,
                 rng: np.random.Generator | None = None) -> VerificationReport:
    """Sampled verification of the declared structural class of the model."""
    if cls not in CLASS_TAGS:
        raise ConfigurationError(f"unknown class {cls!r}; known: {CLASS_TAGS}")
    rng = rng or np.random.default_rng(1)
    ts = rng.uniform(0.0, 10.0, samples) if m.time_dependent else np.zeros(samples)
    xs = rng.uniform(-20.0, 20.0, samples)
    clauses: list[ClauseCheck] = []

    f1 = np.array([float(eval_f(m, t, np.array([x]), np.array([1.0]))[0])
                   for t, x in zip(ts, xs)])
    clauses.append(ClauseCheck("state_one_is_steady", float(np.max(np.abs(f1))) <= 1e-10,
                               float(np.max(np.abs(f1))), "f(t, x, 1) = 0"))

    if cls == "periodic_kpp":
        if m.p_period is None:
            clauses.append(ClauseCheck("space_period_declared", False, np.nan))
        else:
            defect = 0.0
            for t, x in zip(ts[:64], xs[:64]):
                u = rng.uniform(0.0, 2.0)
                d = abs(float(eval_f(m, t, np.array([x + m.p_period]), np.array([u]))[0]
                              - eval_f(m, t, np.array([x]), np.array([u]))[0]))
                defect = max(defect, d)
            clauses.append(ClauseCheck("space_period_declared", defect <= 1e-10, defect))
        us = rng.uniform(0.0, 1.0, samples)
        gap = np.array([float(eval_f(m, t, np.array([x]), np.array([u]))[0]
                              - eval_f(m, t, np.array([x]), np.array([0.0]))[0])
                        for t, x, u in zip(ts, xs, us)])
        clauses.append(ClauseCheck("below_rate_at_zero", float(gap.max()) <= 1e-12,
                                   float(gap.max()), "f(t,x,u) <= f(t,x,0) on [0,1]"))
        u_mid = rng.uniform(0.05, 0.95, samples)
        f_mid = np.array([float(eval_f(m, t, np.array([x]), np.array([u]))[0])
                          for t, x, u in zip(ts, xs, u_mid)])
        clauses.append(ClauseCheck("interior_growth", float(f_mid.min()) > 0.0,
                                   float(f_mid.min()), "inf f > 0 for u in (0,1)"))
        c_low = m.c_low if m.c_low is not None else 1.0
        u_small = rng.uniform(1e-6, m.delta_low, samples)
        lower = np.array([
            float(u * eval_f(m, t, np.array([x]), np.array([u]))[0]
                  - (eval_f(m, t, np.array([x]), np.array([0.0]))[0] * u
                     - c_low * u ** (1.0 + m.nu)))
            for t, x, u in zip(ts, xs, u_small)])
        clauses.append(ClauseCheck(
            "low_density_bound", float(lower.min()) >= -1e-12, float(lower.min()),
            "u f >= f(.,0) u - C u^(1+nu) on (0, delta)"))

    if cls == "almost_periodic_linear":
        a_vals = m.rate_at_zero(0.0, xs)
        clauses.append(ClauseCheck("coefficient_positive", float(a_vals.min()) > 0.0,
                                   float(a_vals.min()), "inf a(x) > 0"))
        us = rng.uniform(0.0, 2.0, samples)
        defect = np.array([
            float(np.max(np.abs(eval_f(m, 0.0, np.array([x]), np.array([u]))[0]
                                - a * (1.0 - u))))
            for x, u, a in zip(xs, us, a_vals)])
        clauses.append(ClauseCheck("linear_in_u_form", float(defect.max()) <= 1e-10,
                                   float(defect.max()), "f = a(x)(1-u)"))
        clauses.append(ClauseCheck("frequencies_declared", m.frequencies is not None,
                                   float(len(m.frequencies or ()))))

    if cls == "space_sandwich":
        if m.g is None:
            clauses.append(ClauseCheck("nonlinearity_declared", False, np.nan))
        else:
            g = m.g
            g0 = float(np.asarray(g.fn(0.0)))
            g1 = float(np.asarray(g.fn(1.0)))
            dg0 = float(np.asarray(g.dfn(0.0)))
            clauses.append(ClauseCheck("g_endpoints", abs(g0) <= 1e-12 and abs(g1) <= 1e-12,
                                       max(abs(g0), abs(g1)), "g(0) = g(1) = 0"))
            clauses.append(ClauseCheck("g_slope_at_zero", abs(dg0 - 1.0) <= 1e-10,
                                       dg0, "g'(0) = 1"))
            u_grid = np.linspace(1e-4, 1.0 - 1e-4, 512)
            ratio = g.fn(u_grid) / u_grid
            clauses.append(ClauseCheck("g_ratio_decreasing",
                                       bool(np.all(np.diff(ratio) < 1e-12)),
                                       float(np.max(np.diff(ratio))), "(g(u)/u)' < 0"))
            us = rng.uniform(0.0, 1.0, samples)
            lo, hi = np.inf, -np.inf
            for x, u in zip(xs, us):
                a = float(m.rate_at_zero(0.0, np.array([x]))[0])
                uf = u * float(eval_f(m, 0.0, np.array([x]), np.array([u]))[0])
                lo = min(lo, uf - a * float(g.fn(u)))
                hi = max(hi, uf - a * u)
            clauses.append(ClauseCheck("sandwich_lower", lo >= -1e-12, lo,
                                       "a g(u) <= u f(x, u)"))
            clauses.append(ClauseCheck("sandwich_upper", hi <= 1e-12, hi,
                                       "u f(x, u) <= a u"))
        fu = np.array([float(eval_fu(m, 0.0, np.array([x]), np.array([u]))[0])
                       for x, u in zip(xs, rng.uniform(0.0, 1.0, samples))])
        clauses.append(ClauseCheck("strictly_decreasing_in_u", float(fu.max()) < 0.0,
                                   float(fu.max()), "f_u(x, u) < 0"))

    return VerificationReport(tuple(clauses))
