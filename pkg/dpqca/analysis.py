"""
Critical-point location and decay-exponent fits on density traces.

A trace is anything with a `curve()` method returning (t, n), or a plain
(t, n) pair. Fits use the late-time tail: the last `window` fraction of the
positive times measured in log t.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Protocol, Sequence, Union

import numpy as np
from scipy import stats

from .config import FitMethod
from .dkca import site_rule_sweep
from .errors import InsufficientTail, InvalidParameters, NoSignChange

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 0.5
MIN_FIT_POINTS = 10


class HasCurve(Protocol):
    def curve(self) -> tuple[np.ndarray, np.ndarray]: ...


Curve = Union[HasCurve, tuple[Sequence[float], Sequence[float]]]


def as_curve(trace: Curve) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(trace, "curve"):
        t, n = trace.curve()  # type: ignore[union-attr]
    else:
        t, n = trace  # type: ignore[misc]
    t = np.asarray(t, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if t.shape != n.shape:
        raise InvalidParameters(f"Time axis {t.shape} and density {n.shape} differ in length")
    return t, n


def tail_mask(t: np.ndarray, window: float = DEFAULT_WINDOW) -> np.ndarray:
    """Points with t > 0 in the last `window` fraction of the log-time range."""
    if not 0.0 < window <= 1.0:
        raise InvalidParameters(f"Tail window must be in (0, 1], got {window}")
    positive = t > 0
    if not positive.any():
        return positive
    lo, hi = math.log(t[positive].min()), math.log(t[positive].max())
    cut = hi - window * (hi - lo)
    return positive & (np.log(np.where(positive, t, 1.0)) >= cut - 1e-12)


def curvature(trace: Curve, window: float = DEFAULT_WINDOW) -> float:
    """Second-order coefficient of a quadratic fit of log n against log t over the tail.

    A trace that reaches zero inside the window is absorbed and gets -inf.
    """
    t, n = as_curve(trace)
    mask = tail_mask(t, window)
    if np.count_nonzero(mask) < 3:
        raise InsufficientTail(f"Curvature needs 3 tail points, got {np.count_nonzero(mask)}")
    if np.any(n[mask] <= 0):
        return -math.inf
    coeffs = np.polyfit(np.log(t[mask]), np.log(n[mask]), 2)
    return float(coeffs[0])


def interpolate_crossing(ps: Sequence[float], values: Sequence[float]) -> float:
    """p of the first sign change of `values` along ascending `ps`."""
    order = np.argsort(ps)
    ps = np.asarray(ps, dtype=np.float64)[order]
    values = np.asarray(values, dtype=np.float64)[order]
    for i in range(len(ps) - 1):
        a, b = values[i], values[i + 1]
        if a == 0:
            return float(ps[i])
        if np.sign(a) != np.sign(b):
            if not (math.isfinite(a) and math.isfinite(b)):
                return float(0.5 * (ps[i] + ps[i + 1]))
            return float(ps[i] - a * (ps[i + 1] - ps[i]) / (b - a))
    if values[-1] == 0:
        return float(ps[-1])
    raise NoSignChange(f"Curvature keeps one sign over p in [{ps[0]}, {ps[-1]}]")


def locate_critical(points: Sequence[tuple[float, Curve]], *, window: float = DEFAULT_WINDOW) -> float:
    """Critical p from the sign change of the late-time curvature across a grid of traces."""
    if len(points) < 3:
        raise InvalidParameters(f"Locating the critical point needs >= 3 grid points, got {len(points)}")
    ps = [float(p) for p, _ in points]
    values = [curvature(trace, window) for _, trace in points]
    logger.debug("curvatures: %s", ", ".join(f"{p:.4g}:{c:.3g}" for p, c in zip(ps, values)))
    return interpolate_crossing(ps, values)


@dataclass
class FitResult:
    p_c: float | None
    delta: float
    t_min: float
    t_max: float
    residual: float
    method: str
    n_points: int
    intercept: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def fit_delta(
    trace: Curve,
    *,
    window: float = DEFAULT_WINDOW,
    method: FitMethod | str = FitMethod.POWER_LAW,
    p_c: float | None = None,
) -> FitResult:
    """Least-squares decay exponent over the tail window.

    power-law: log n = a - delta log t; exponential: log n = a - delta t.
    The residual is the RMS deviation of log n from the fitted line.
    """
    method = FitMethod(method)
    t, n = as_curve(trace)
    mask = tail_mask(t, window) & (n > 0)
    count = int(np.count_nonzero(mask))
    if count < MIN_FIT_POINTS:
        raise InsufficientTail(f"Fit window holds {count} usable points, need {MIN_FIT_POINTS}")
    x = np.log(t[mask]) if method == FitMethod.POWER_LAW else t[mask]
    y = np.log(n[mask])
    fit = stats.linregress(x, y)
    residual = float(np.sqrt(np.mean((y - (fit.intercept + fit.slope * x)) ** 2)))
    result = FitResult(
        p_c=p_c,
        delta=float(-fit.slope),
        t_min=float(t[mask].min()),
        t_max=float(t[mask].max()),
        residual=residual,
        method=method.value,
        n_points=count,
        intercept=float(fit.intercept),
    )
    logger.info("delta=%.4g (%s, %d points, residual %.3g)", result.delta, result.method, count, residual)
    return result


@dataclass
class CriticalScan:
    p_c: float
    fit: FitResult
    curvatures: list[tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {"p_c": self.p_c, "fit": self.fit.to_dict(), "curvatures": [list(c) for c in self.curvatures]}


def classical_critical_scan(
    ps: Sequence[float],
    length: int,
    rounds: int,
    n_seeds: int,
    *,
    seed: int = 0,
    workers: int = 1,
    window: float = DEFAULT_WINDOW,
    progress: bool = False,
) -> CriticalScan:
    """Site-DP sweep, curvature crossing, then a power-law fit at the located p_c."""
    if len(ps) < 3:
        raise InvalidParameters(f"Locating the critical point needs >= 3 grid points, got {len(ps)}")
    traces = site_rule_sweep(ps, length, rounds, n_seeds, seed=seed, workers=workers, progress=progress)
    curvatures = [(p, curvature(trace, window)) for p, trace in traces]
    p_c = interpolate_crossing([p for p, _ in curvatures], [c for _, c in curvatures])
    logger.info("Classical site-DP critical point p_c=%.4f", p_c)
    (_, at_critical), = site_rule_sweep(
        [p_c], length, rounds, n_seeds, seed=seed, workers=workers, progress=progress
    )
    return CriticalScan(p_c=p_c, fit=fit_delta(at_critical, window=window, p_c=p_c), curvatures=curvatures)
