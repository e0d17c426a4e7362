"""Uniform-grid densities and spectral linear convolution.

Grid mass is the rectangle (Riemann) sum spacing * sum(values); under the
zero-padded spectral convolution that mass is exactly multiplicative up to
FFT round-off, which is what the mass bookkeeping relies on. The trapezoid
integral differs from it only by endpoint terms already covered by the
truncation ledger.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .densities import DensitySpec, evaluate_array, log_evaluate_array
from .errors import BudgetExceededError, NonFiniteError, SpacingMismatchError

NEGATIVE_CLIP = 1e-12  # relative magnitude below which negatives are round-off
_ALIGN_TOL = 1e-9


@dataclass(frozen=True)
class TailModel:
    """Fitted model of values beyond the window: power A*s^-D or exp A*e^-rs."""

    kind: str  # "power" | "exp"
    log_amplitude: float
    index: float  # D for power, rate for exp
    residual: float  # rms log-residual of the fit
    fit_lo: float

    def log_value_at(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kind == "power":
            return self.log_amplitude - self.index * np.log(np.maximum(s, 1e-300))
        return self.log_amplitude - self.index * s

    def mass_beyond(self, s: float) -> float:
        """Analytic integral of the model on [s, inf); inf if divergent."""
        if self.kind == "power":
            if self.index <= 1.0:
                return math.inf
            lv = self.log_amplitude + (1.0 - self.index) * math.log(s) - math.log(self.index - 1.0)
        else:
            if self.index <= 0.0:
                return math.inf
            lv = self.log_amplitude - self.index * s - math.log(self.index)
        return math.exp(lv) if lv < 700.0 else math.inf


def fit_tail_model(s: np.ndarray, values: np.ndarray) -> TailModel | None:
    """Fit both candidate tail laws on the last decade, keep the better one."""
    hi = s[-1]
    mask = (s >= hi / 10.0) & (values > 0)
    if mask.sum() < 8:
        return None
    st, lv = s[mask], np.log(values[mask])
    fits = []
    if np.all(st > 0):
        slope, intercept = np.polyfit(np.log(st), lv, 1)
        res = float(np.sqrt(np.mean((lv - (slope * np.log(st) + intercept)) ** 2)))
        fits.append(TailModel("power", float(intercept), float(-slope), res, float(st[0])))
    slope, intercept = np.polyfit(st, lv, 1)
    res = float(np.sqrt(np.mean((lv - (slope * st + intercept)) ** 2)))
    fits.append(TailModel("exp", float(intercept), float(-slope), res, float(st[0])))
    best = min(fits, key=lambda m: m.residual)
    if best.index <= 0:  # growing "tail" is not a tail model
        return None
    return best


@dataclass(frozen=True)
class GridFunction:
    """Sampled nonnegative function on a uniform grid [lo, hi]."""

    lo: float
    hi: float
    values: np.ndarray
    tail_model: TailModel | None = None
    left_tail_model: TailModel | None = None
    flags: tuple = ()
    step_discarded: float = 0.0  # truncation ledger, this construction step
    total_discarded: float = 0.0  # truncation ledger, accumulated

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1 or vals.size < 2:
            raise ValueError("GridFunction needs a 1-D array with m >= 2")
        if not self.hi > self.lo:
            raise ValueError("GridFunction needs hi > lo")
        if not np.all(np.isfinite(vals)):
            raise NonFiniteError("grid values must be finite")
        if "negative-excursion" not in self.flags and np.any(vals < 0):
            raise ValueError("grid values must be >= 0 (or carry the excursion flag)")

    @property
    def m(self) -> int:
        return int(self.values.size)

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.m - 1)

    def grid(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.m)

    def mass(self) -> float:
        """Rectangle-sum mass; exactly multiplicative under convolve."""
        return float(self.values.sum() * self.spacing)

    def trapz_mass(self) -> float:
        return float(np.trapezoid(self.values, dx=self.spacing))

    def value_at(self, s) -> np.ndarray:
        return np.interp(np.asarray(s, dtype=float), self.grid(), self.values, left=0.0, right=0.0)

    def index_of(self, s: float) -> int:
        pos = (s - self.lo) / self.spacing
        idx = round(pos)
        if abs(pos - idx) > _ALIGN_TOL * max(1.0, abs(pos)):
            raise SpacingMismatchError(f"coordinate {s} is off-lattice")
        return int(idx)

    def solid_range(self, rel_floor: float = 1e-8) -> tuple[float, float]:
        """Widest [a, b] where values stay above rel_floor * max."""
        vmax = float(self.values.max())
        ok = np.nonzero(self.values > rel_floor * vmax)[0]
        if ok.size == 0:
            return self.lo, self.lo
        g = self.grid()
        return float(g[ok[0]]), float(g[ok[-1]])

    def tail_mass_outside(self) -> float:
        """Modelled mass beyond the window, both sides."""
        out = 0.0
        if self.tail_model is not None:
            out += self.tail_model.mass_beyond(self.hi)
        if self.left_tail_model is not None and self.lo < 0:
            out += self.left_tail_model.mass_beyond(-self.lo)
        return out


def sample(spec: DensitySpec, lo: float, hi: float, m: int) -> GridFunction:
    """Pointwise sampling with tail-model fits on the trailing decades.

    A genuine jump at a window edge (the density is 0 just outside and
    positive at the edge, e.g. exp(-s) at s=0) is stored at half value,
    the average of the one-sided limits. Plain rectangle convolution of
    such samples is then trapezoid-accurate while the rectangle-sum mass
    stays exactly multiplicative.
    """
    if m < 2 or not hi > lo:
        raise ValueError("need m >= 2 and hi > lo")
    s = np.linspace(lo, hi, m)
    vals = evaluate_array(spec, s)
    flags = []
    dx = (hi - lo) / (m - 1)
    if vals[0] > 0 and evaluate_array(spec, np.array([lo - 0.25 * dx]))[0] == 0.0:
        vals = vals.copy()
        vals[0] *= 0.5
        flags.append("jump-edge-halved")
    if vals[-1] > 0 and evaluate_array(spec, np.array([hi + 0.25 * dx]))[0] == 0.0:
        vals = vals.copy()
        vals[-1] *= 0.5
        if "jump-edge-halved" not in flags:
            flags.append("jump-edge-halved")
    lv = log_evaluate_array(spec, np.array([hi]))[0]
    if -math.inf < lv < -700.0:
        flags.append("underflow-at-edge")
    tm = fit_tail_model(s, vals)
    ltm = fit_tail_model(-s[::-1], vals[::-1]) if lo < 0 else None
    return GridFunction(lo, hi, vals, tail_model=tm, left_tail_model=ltm, flags=tuple(flags))


def normalize_grid(gf: GridFunction) -> GridFunction:
    """Rescale values so the rectangle-sum mass is exactly 1."""
    mass = gf.mass()
    if mass <= 0:
        raise ValueError("cannot normalize a zero grid")
    return replace(gf, values=gf.values / mass)


def _check_spacing(f: GridFunction, g: GridFunction) -> float:
    df, dg = f.spacing, g.spacing
    if abs(df - dg) > _ALIGN_TOL * max(df, dg):
        raise SpacingMismatchError(f"spacings differ: {df} vs {dg}")
    return 0.5 * (df + dg)


def _apply_negative_policy(vals: np.ndarray) -> tuple[np.ndarray, tuple]:
    vmax = float(vals.max(initial=0.0))
    negs = vals < 0
    if not negs.any():
        return vals, ()
    small = negs & (vals >= -NEGATIVE_CLIP * vmax)
    vals = vals.copy()
    vals[small] = 0.0
    if np.any(vals < 0):
        return vals, ("negative-excursion",)
    return vals, ()


def convolve(f: GridFunction, g: GridFunction) -> GridFunction:
    """Linear (zero-padded) spectral convolution rescaled by the spacing."""
    dx = _check_spacing(f, g)
    vals = fftconvolve(f.values, g.values) * dx
    vals, flags = _apply_negative_policy(vals)
    lo, hi = f.lo + g.lo, f.hi + g.hi
    m = f.m + g.m - 1
    grid = np.linspace(lo, hi, m)
    out = GridFunction(
        lo, hi, vals,
        tail_model=fit_tail_model(grid, np.maximum(vals, 0.0)),
        left_tail_model=fit_tail_model(-grid[::-1], np.maximum(vals[::-1], 0.0)) if lo < 0 else None,
        flags=flags,
        step_discarded=0.0,
        total_discarded=f.total_discarded + g.total_discarded,
    )
    return out


def truncation_deficit_estimate(f: GridFunction, g: GridFunction, s: float) -> float:
    """Ledger-style bound on the convolution deficit at s from window cutoffs."""
    est = 0.0
    if f.tail_model is not None:
        est += f.tail_model.mass_beyond(f.hi) * float(g.value_at(s - f.hi)) * 2.0
    if f.left_tail_model is not None and f.lo < 0:
        est += f.left_tail_model.mass_beyond(-f.lo) * float(g.value_at(s - f.lo)) * 2.0
    if g.tail_model is not None:
        est += g.tail_model.mass_beyond(g.hi) * float(f.value_at(s - g.hi)) * 2.0
    if g.left_tail_model is not None and g.lo < 0:
        est += g.left_tail_model.mass_beyond(-g.lo) * float(f.value_at(s - g.lo)) * 2.0
    return est


def crop(gf: GridFunction, lo: float, hi: float) -> GridFunction:
    """Restrict to window [lo, hi] (snapped inward to the lattice),
    ledgering the cut."""
    dx = gf.spacing
    i0 = max(int(math.ceil((lo - gf.lo) / dx - 1e-9)), 0)
    i1 = min(int(math.floor((hi - gf.lo) / dx + 1e-9)), gf.m - 1)
    if i1 - i0 < 1:
        raise ValueError("crop window too narrow")
    vals = gf.values[i0 : i1 + 1]
    discarded = float(gf.values[:i0].sum() + gf.values[i1 + 1 :].sum()) * gf.spacing
    discarded += gf.tail_mass_outside()
    g = gf.grid()[i0 : i1 + 1]
    return GridFunction(
        float(g[0]), float(g[-1]), vals,
        tail_model=fit_tail_model(g, np.maximum(vals, 0.0)),
        left_tail_model=fit_tail_model(-g[::-1], np.maximum(vals[::-1], 0.0)) if g[0] < 0 else None,
        flags=gf.flags,
        step_discarded=discarded,
        total_discarded=gf.total_discarded + discarded,
    )


def self_convolve_n(
    f: GridFunction,
    n: int,
    window: tuple[float, float] | None = None,
    budget: float = 1e-6,
) -> list[GridFunction]:
    """[f, f*f, ..., n-fold], iterated spectral convolution.

    With ``window=None`` the domain grows linearly and nothing is discarded.
    With a window, each step is re-truncated to it and the discarded mass is
    accumulated in the per-step ledger; exceeding ``budget`` raises.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    out = [f]
    acc = f
    for _ in range(1, n):
        acc = convolve(acc, f)
        if window is not None:
            acc = crop(acc, window[0], window[1])
            if acc.total_discarded > budget:
                raise BudgetExceededError(
                    f"truncation ledger {acc.total_discarded:.3e} exceeds budget {budget:.3e}"
                )
        out.append(acc)
    return out


def embed(gf: GridFunction, lo: float, hi: float) -> GridFunction:
    """Zero-pad onto the aligned lattice spanning [lo, hi]."""
    dx = gf.spacing
    n_left = (gf.lo - lo) / dx
    n_right = (hi - gf.hi) / dx
    kl, kr = round(n_left), round(n_right)
    if (
        kl < 0
        or kr < 0
        or abs(n_left - kl) > _ALIGN_TOL * max(1.0, abs(n_left))
        or abs(n_right - kr) > _ALIGN_TOL * max(1.0, abs(n_right))
    ):
        raise SpacingMismatchError("embedding window is off-lattice")
    vals = np.concatenate([np.zeros(kl), gf.values, np.zeros(kr)])
    return replace(gf, lo=gf.lo - kl * dx, hi=gf.hi + kr * dx, values=vals)


def add(f: GridFunction, g: GridFunction, wf: float = 1.0, wg: float = 1.0) -> GridFunction:
    """wf*f + wg*g on the union lattice."""
    _check_spacing(f, g)
    lo, hi = min(f.lo, g.lo), max(f.hi, g.hi)
    fe, ge = embed(f, lo, hi), embed(g, lo, hi)
    vals = wf * fe.values + wg * ge.values
    flags = tuple(sorted(set(fe.flags) | set(ge.flags)))
    return GridFunction(lo, hi, vals, flags=flags,
                        total_discarded=f.total_discarded + g.total_discarded)


# ---------------------------------------------------------------------------
# CSV + sidecar serialization


def _tail_model_dict(tm: TailModel | None):
    if tm is None:
        return None
    return {
        "kind": tm.kind,
        "log_amplitude": tm.log_amplitude,
        "index": tm.index,
        "residual": tm.residual,
        "fit_lo": tm.fit_lo,
    }


def write_grid(gf: GridFunction, csv_path) -> Path:
    """CSV (s, value) at 17 significant digits plus a JSON header sidecar."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("s,value\n")
        for s, v in zip(gf.grid(), gf.values):
            fh.write(f"{s:.17g},{v:.17g}\n")
    sidecar = {
        "lo": gf.lo,
        "hi": gf.hi,
        "m": gf.m,
        "tail_model": _tail_model_dict(gf.tail_model),
        "left_tail_model": _tail_model_dict(gf.left_tail_model),
        "flags": list(gf.flags),
        "ledger": {"step_discarded": gf.step_discarded, "total_discarded": gf.total_discarded},
    }
    side_path = csv_path.with_suffix(".json")
    with open(side_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return side_path


def read_grid(csv_path) -> GridFunction:
    csv_path = Path(csv_path)
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1)
    side_path = csv_path.with_suffix(".json")
    tm = ltm = None
    flags: tuple = ()
    step = total = 0.0
    if side_path.exists():
        doc = json.loads(side_path.read_text())
        def mk(d):
            return None if d is None else TailModel(
                d["kind"], d["log_amplitude"], d["index"], d["residual"], d["fit_lo"]
            )
        tm, ltm = mk(doc.get("tail_model")), mk(doc.get("left_tail_model"))
        flags = tuple(doc.get("flags", ()))
        ledger = doc.get("ledger", {})
        step, total = ledger.get("step_discarded", 0.0), ledger.get("total_discarded", 0.0)
    return GridFunction(
        float(data[0, 0]), float(data[-1, 0]), data[:, 1],
        tail_model=tm, left_tail_model=ltm, flags=flags,
        step_discarded=step, total_discarded=total,
    )
