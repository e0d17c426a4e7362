"""Geometric probe ladders and the finite-resolution limit protocol.

A limit claim at infinity is judged from evidence on a geometric ladder:
PASS when the deviation sits below tolerance at the last two rungs and its
best-fit log-log slope over the trailing decade is negative; FAIL when the
deviation is above tolerance and flat or growing; INCONCLUSIVE otherwise.
"""

from __future__ import annotations

import math

import numpy as np

DEFAULT_RUNGS = 60
DEFAULT_S_MAX = 1e8
EVIDENCE_FLOOR = 1e-13  # deviations below this are treated as converged


def geometric_ladder(lo: float, hi: float, rungs: int = DEFAULT_RUNGS) -> np.ndarray:
    if not (lo > 0 and hi > lo):
        raise ValueError("ladder needs 0 < lo < hi")
    return np.geomspace(lo, hi, rungs)


def default_ladder(rho: float, s_max: float = DEFAULT_S_MAX, rungs: int = DEFAULT_RUNGS) -> np.ndarray:
    return geometric_ladder(max(2.0 * rho, 10.0), s_max, rungs)


def loglog_slope(s: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of log y against log s, ignoring nonpositive y."""
    mask = (y > 0) & (s > 0) & np.isfinite(y)
    if mask.sum() < 2:
        return 0.0
    return float(np.polyfit(np.log(s[mask]), np.log(y[mask]), 1)[0])


def trailing_decade_slope(s: np.ndarray, y: np.ndarray, decades: float = 1.0) -> float:
    hi = s[-1]
    window = s >= hi / 10.0**decades
    return loglog_slope(s[window], y[window])


def trailing_slope_linear(s: np.ndarray, g: np.ndarray, decades: float = 1.0) -> float:
    """Slope of g (already log-scale data) against log10 s over the last decade."""
    hi = s[-1]
    window = (s >= hi / 10.0**decades) & np.isfinite(g)
    if window.sum() < 2:
        return 0.0
    return float(np.polyfit(np.log10(s[window]), g[window], 1)[0])


def limit_verdict(s: np.ndarray, dev: np.ndarray, tol: float, floor: float = EVIDENCE_FLOOR):
    """Return (verdict_str, slope) for a deviation curve that should -> 0."""
    dev = np.asarray(dev, dtype=float)
    last2 = float(np.max(dev[-2:]))
    if last2 <= floor:
        return "PASS", 0.0
    slope = trailing_decade_slope(s, np.maximum(dev, floor))
    if last2 <= tol:
        if slope < 0.0 or float(np.max(dev[s >= s[-1] / 10.0])) <= tol:
            return "PASS", slope
        return "INCONCLUSIVE", slope
    if slope >= -0.02:
        return "FAIL", slope
    return "INCONCLUSIVE", slope


def per_decade_max(s: np.ndarray, dev: np.ndarray) -> list[tuple[float, float]]:
    """(decade upper edge, max deviation in that decade), low to high."""
    out = []
    lo, hi = float(s[0]), float(s[-1])
    n_dec = max(int(math.ceil(math.log10(hi / lo))), 1)
    for k in range(n_dec):
        a, b = lo * 10.0**k, min(lo * 10.0 ** (k + 1), hi)
        mask = (s >= a) & (s <= b)
        if mask.any():
            out.append((b, float(np.max(dev[mask]))))
    return out


def decades_decreasing(decade_devs: list[tuple[float, float]], floor: float) -> bool:
    """Deviations per decade non-increasing, with values under floor tied."""
    vals = [max(v, floor) for _, v in decade_devs]
    return all(vals[i + 1] <= vals[i] * 1.0000001 or vals[i + 1] <= floor for i in range(len(vals) - 1))
