"""Density catalog: tail profiles, transformation layers, and integration.

A density is described declaratively by :class:`DensitySpec` and evaluated
through a fixed layer pipeline

    base family -> s^D prefactor -> affine (p * b(q*s + r)) -> power alpha
    -> outer scale -> splice (left of s0 the value is replaced)

All evaluation is done in log space first; linear values below the float64
underflow threshold are returned as 0.0 rather than subnormal noise.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Mapping

import numpy as np
from scipy import integrate

from .errors import DivergentError, DomainError, NonFiniteError

# exp(x) underflows to 0.0 in float64 below this
LOG_UNDERFLOW = -745.0

_NEG_INF = float("-inf")


class Family(str, Enum):
    POLYNOMIAL = "Polynomial"
    STUDENT_T = "StudentT"
    LEVY = "Levy"
    BURR = "Burr"
    PARETO = "Pareto"
    LOG_NORMAL_TYPE = "LogNormalType"
    WEIBULL_TYPE = "WeibullType"
    FRACTIONAL_EXP = "FractionalExp"
    NEAR_EXPONENTIAL = "NearExponential"
    GAUSSIAN = "Gaussian"
    EXPONENTIAL = "Exponential"
    CUSTOM = "Custom"


class LeftPart(str, Enum):
    ZERO = "Zero"
    CONSTANT = "Constant"
    MIRROR = "Mirror"


class Domain(str, Enum):
    POSITIVE_HALF_LINE = "PositiveHalfLine"
    WHOLE_LINE = "WholeLine"


@dataclass(frozen=True)
class Affine:
    """Argument rescaling and prefactor: s -> p * base(q*s + r)."""

    q_scale: float = 1.0
    r_shift: float = 0.0
    prefactor: float = 1.0

    def __post_init__(self):
        if not (self.q_scale > 0 and self.prefactor > 0):
            raise ValueError("affine requires q_scale > 0 and prefactor > 0")

    @property
    def is_identity(self) -> bool:
        return self.q_scale == 1.0 and self.r_shift == 0.0 and self.prefactor == 1.0


@dataclass(frozen=True)
class Splice:
    """Replace the density left of ``point`` by a bounded left part."""

    point: float = 0.0
    left: LeftPart = LeftPart.ZERO
    value: float = 0.0

    def __post_init__(self):
        if self.point < 0:
            raise ValueError("splice point must be >= 0")
        if self.left is LeftPart.CONSTANT and self.value < 0:
            raise ValueError("constant left part must be >= 0")


@dataclass(frozen=True)
class DensitySpec:
    """Declarative description of a 1-D tail profile.

    ``params`` is stored as a sorted tuple of (name, value) pairs so specs
    are hashable; pass a plain dict to the constructor.
    """

    family: Family
    params: tuple = ()
    splice: Splice | None = None
    affine: Affine = field(default_factory=Affine)
    power_alpha: float = 1.0
    prefactor_D: float = 0.0
    scale: float = 1.0
    custom_log: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if isinstance(self.params, Mapping):
            object.__setattr__(
                self, "params", tuple(sorted((str(k), float(v)) for k, v in self.params.items()))
            )
        if not (0.0 < self.power_alpha <= 1.0):
            raise ValueError("power_alpha must lie in (0, 1]")
        if not self.scale > 0:
            raise ValueError("scale must be > 0")
        if self.family is Family.CUSTOM and self.custom_log is None:
            raise ValueError("Custom family needs a custom_log callable")

    @property
    def param_dict(self) -> dict[str, float]:
        return dict(self.params)

    def param(self, name: str, default: float | None = None) -> float:
        for key, val in self.params:
            if key == name:
                return val
        if default is None:
            raise KeyError(f"{self.family.value} spec has no parameter {name!r}")
        return float(default)

    @property
    def supported_on_half_line(self) -> bool:
        """True when the spec vanishes for s < 0 by construction."""
        if self.splice is not None and self.splice.left is LeftPart.ZERO:
            return True
        return self.family in _HALF_LINE_FAMILIES and self.affine.is_identity

    @property
    def even_symmetric(self) -> bool:
        """True for whole-line catalog families that are even in s."""
        return (
            self.family in (Family.STUDENT_T, Family.GAUSSIAN)
            and self.splice is None
            and self.affine.r_shift == 0.0
        )


_HALF_LINE_FAMILIES = frozenset(
    {
        Family.POLYNOMIAL,
        Family.LEVY,
        Family.BURR,
        Family.PARETO,
        Family.LOG_NORMAL_TYPE,
        Family.WEIBULL_TYPE,
        Family.FRACTIONAL_EXP,
        Family.NEAR_EXPONENTIAL,
        Family.EXPONENTIAL,
    }
)


# ---------------------------------------------------------------------------
# base family log-evaluation (vectorized, -inf where the base vanishes)


def _log_base(spec: DensitySpec, u: np.ndarray) -> np.ndarray:
    fam = spec.family
    out = np.full_like(u, _NEG_INF, dtype=float)
    if fam is Family.POLYNOMIAL:
        D = spec.param("D")
        pos = u >= 0
        out[pos] = -D * np.log1p(u[pos])
    elif fam is Family.STUDENT_T:
        p = spec.param("p")
        out = -p * np.log1p(u * u)
    elif fam is Family.LEVY:
        c = spec.param("c")
        pos = u > 0
        out[pos] = -1.5 * np.log(u[pos]) - c / u[pos]
    elif fam is Family.BURR:
        c, k = spec.param("c"), spec.param("k")
        pos = u > 0
        up = u[pos]
        out[pos] = (c - 1.0) * np.log(up) - (k + 1.0) * np.log1p(up**c)
    elif fam is Family.PARETO:
        k, p0 = spec.param("k"), spec.param("scale", 1.0)
        pos = u >= p0
        out[pos] = math.log(k) + k * math.log(p0) - (k + 1.0) * np.log(u[pos])
    elif fam is Family.LOG_NORMAL_TYPE:
        D, q = spec.param("D"), spec.param("q")
        mid = (u >= 0) & (u < 1)
        out[mid] = 0.0
        top = u >= 1
        out[top] = -D * np.log(u[top]) ** q
    elif fam in (Family.WEIBULL_TYPE, Family.FRACTIONAL_EXP):
        a = spec.param("alpha")
        pos = u >= 0
        out[pos] = -(u[pos] ** a)
    elif fam is Family.NEAR_EXPONENTIAL:
        q = spec.param("q")
        pos = u > 1
        up = u[pos]
        out[pos] = -up / np.log(up) ** q
    elif fam is Family.GAUSSIAN:
        sig = spec.param("sigma", 1.0)
        nd = spec.param("norm_dim", 1.0)
        out = -0.5 * nd * math.log(2.0 * math.pi * sig * sig) - u * u / (2.0 * sig * sig)
    elif fam is Family.EXPONENTIAL:
        rate = spec.param("rate", 1.0)
        pos = u >= 0
        out[pos] = -rate * u[pos]
    elif fam is Family.CUSTOM:
        out = np.asarray(spec.custom_log(u), dtype=float)
    else:  # pragma: no cover
        raise ValueError(f"unknown family {fam}")
    return out


def _core_log(spec: DensitySpec, s: np.ndarray) -> np.ndarray:
    """Log of the pipeline through the outer scale (splice not applied)."""
    u = spec.affine.q_scale * s + spec.affine.r_shift
    lv = _log_base(spec, u)
    if spec.prefactor_D != 0.0:
        # even extension |u|^D so whole-line families stay even
        with np.errstate(divide="ignore", invalid="ignore"):
            lv = lv + spec.prefactor_D * np.log(np.abs(u))
    lv = lv + math.log(spec.affine.prefactor)
    if spec.power_alpha != 1.0:
        lv = lv * spec.power_alpha
    return lv + math.log(spec.scale)


def log_evaluate_array(spec: DensitySpec, s) -> np.ndarray:
    """Vectorized log b(s); -inf marks exact zeros, overflow raises."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    lv = _core_log(spec, s)
    if spec.splice is not None:
        left_mask = s < spec.splice.point
        if np.any(left_mask):
            if spec.splice.left is LeftPart.ZERO:
                lv[left_mask] = _NEG_INF
            elif spec.splice.left is LeftPart.CONSTANT:
                lv[left_mask] = (
                    math.log(spec.splice.value) if spec.splice.value > 0 else _NEG_INF
                )
            else:  # mirror around the splice point
                lv[left_mask] = _core_log(spec, 2.0 * spec.splice.point - s[left_mask])
    if np.any(np.isnan(lv)) or np.any(np.isposinf(lv)):
        bad = s[np.isnan(lv) | np.isposinf(lv)][:3]
        raise NonFiniteError(f"{spec.family.value} evaluation overflowed near s={bad}")
    return lv


def evaluate_array(spec: DensitySpec, s) -> np.ndarray:
    """Vectorized b(s); values whose log falls below -745 are returned as 0."""
    lv = log_evaluate_array(spec, s)
    out = np.zeros_like(lv)
    ok = lv >= LOG_UNDERFLOW
    out[ok] = np.exp(lv[ok])
    return out


def evaluate(spec: DensitySpec, s: float) -> float:
    return float(evaluate_array(spec, s)[0])


def log_evaluate(spec: DensitySpec, s: float) -> float:
    lv = float(log_evaluate_array(spec, s)[0])
    if lv == _NEG_INF:
        raise DomainError(f"density is zero at s={s}; log undefined")
    return lv


def underflows_linear(spec: DensitySpec, s: float) -> bool:
    """True when b(s) > 0 but the linear-space value is reported as 0."""
    lv = float(log_evaluate_array(spec, s)[0])
    return _NEG_INF < lv < LOG_UNDERFLOW


# ---------------------------------------------------------------------------
# integration with divergence detection

_SHELL_GROWTH = 2.0
_MAX_SHELLS = 64


def _quad(fn, lo, hi) -> float:
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(fn, lo, hi, limit=200, epsabs=1e-14, epsrel=1e-11)
    return val


def _shell_integral(fn, lo: float, description: str) -> float:
    """Integrate fn over [lo, inf) by geometric shells, detecting divergence.

    Shell masses must eventually decay by a stable ratio < 1; a stabilized
    ratio closes the tail as a geometric series (slow power tails would
    otherwise exhaust any shell budget), while non-decaying shells are
    declared divergent (p-series boundary).
    """
    a = max(lo, 1.0)
    head = _quad(fn, lo, a) if a > lo else 0.0
    masses = []
    total = head
    for _ in range(_MAX_SHELLS):
        b = a * _SHELL_GROWTH
        m = _quad(fn, a, b)
        masses.append(m)
        total += m
        a = b
        if len(masses) < 4:
            continue
        recent = masses[-4:]
        if recent[-1] <= 0.0:
            return total
        if any(x <= 0 for x in recent[:-1]):
            continue
        ratios = [recent[i + 1] / recent[i] for i in range(3)]
        if len(masses) >= 12 and min(ratios) >= 0.98:
            raise DivergentError(f"{description}: shell masses do not decay")
        r = max(ratios)
        if r < 0.97:
            spread = max(ratios) - min(ratios)
            tail = recent[-1] * r / (1.0 - r)
            drift_err = recent[-1] * spread / (1.0 - r) ** 2
            scale = max(total + tail, 1e-300)
            if tail <= 1e-12 * scale:
                return total
            if len(masses) >= 6 and drift_err <= 1e-9 * scale:
                return total + tail
    last = masses[-1] if masses else 0.0
    if last > 1e-12 * max(total, 1e-300):
        raise DivergentError(f"{description}: no convergence within shell budget")
    return total


def moment_integral(spec: DensitySpec, n: int, rho: float) -> float:
    """integral over [rho, inf) of b(s) s^(n-1), shell-tested for divergence."""
    if n < 1:
        raise ValueError("moment order n must be >= 1")

    def fn(s):
        lv = float(log_evaluate_array(spec, s)[0])
        if lv == _NEG_INF:
            return 0.0
        g = lv + (n - 1) * math.log(s) if s > 0 else lv
        return math.exp(g) if g > LOG_UNDERFLOW else 0.0

    return _shell_integral(fn, rho, f"moment({n}) of {spec.family.value}")


def _left_integral(spec: DensitySpec, upto: float) -> float:
    """integral over (-inf, upto], shells toward -inf."""

    def fn(t):  # t >= -upto mirrored coordinate
        return evaluate(spec, -t)

    return _shell_integral(fn, -upto, f"left tail of {spec.family.value}")


@functools.lru_cache(maxsize=512)
def l1_norm(spec: DensitySpec, domain: Domain = Domain.POSITIVE_HALF_LINE) -> float:
    """L1 norm of the density on the requested domain (cached per spec)."""
    right = _shell_integral(
        lambda s: evaluate(spec, s), 0.0, f"l1 of {spec.family.value}"
    )
    if domain is Domain.POSITIVE_HALF_LINE:
        total = right
    else:
        total = right + _left_integral(spec, 0.0)
    if not (total > 0 and math.isfinite(total)):
        raise DivergentError(f"l1 norm of {spec.family.value} is not positive finite")
    return total


def normalize(spec: DensitySpec, domain: Domain = Domain.WHOLE_LINE) -> DensitySpec:
    """Rescale so the density integrates to 1 on ``domain``.

    Restricting to the positive half line zeroes s < 0; this is representable
    only when the spec has no conflicting splice.
    """
    norm = l1_norm(spec, domain)
    out = replace(spec, scale=spec.scale / norm)
    if domain is Domain.POSITIVE_HALF_LINE and not spec.supported_on_half_line:
        if spec.splice is not None and spec.splice.point > 0:
            raise ValueError(
                "cannot restrict to the half line: spec already spliced above 0"
            )
        out = replace(out, splice=Splice(0.0, LeftPart.ZERO))
    return out


# ---------------------------------------------------------------------------
# insensitivity scale h and tail metadata


@dataclass(frozen=True)
class HFamily:
    """Growing shift scale h(s): s^gamma, (log s)^gamma, or a callable."""

    kind: str  # "power" | "logpower" | "custom"
    gamma: float = 0.0
    fn: Callable[[np.ndarray], np.ndarray] | None = None
    threshold: float = 10.0  # h(s) < s/2 holds for s >= threshold

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kind == "power":
            return s**self.gamma
        if self.kind == "logpower":
            return np.where(s > 1.0, np.log(np.maximum(s, 1.0 + 1e-12)) ** self.gamma, 0.0)
        return np.asarray(self.fn(s), dtype=float)

    def with_threshold(self, lo: float = 2.0, hi: float = 1e12) -> "HFamily":
        """Record the onset above which h(s) < s/2 (scanned on a log grid)."""
        s = np.geomspace(lo, hi, 2400)
        bad = self(s) >= s / 2.0
        if bad[-1]:
            raise ValueError("h(s) >= s/2 persists; not an admissible scale")
        idx = np.nonzero(bad)[0]
        thr = lo if idx.size == 0 else float(s[min(idx[-1] + 1, s.size - 1)] * 1.05)
        return replace(self, threshold=max(thr, lo))


@dataclass(frozen=True)
class TailMetadata:
    """Analytic tail regularity data attached to a spec."""

    rho: float
    delta: float
    h: HFamily

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        if self.rho <= 0:
            raise ValueError("rho must be > 0")

    def l1(self, spec: DensitySpec, domain: Domain = Domain.POSITIVE_HALF_LINE) -> float:
        return l1_norm(spec, domain)


_CLASS1_BASE_EXPONENT = {
    Family.POLYNOMIAL: lambda sp: sp.param("D"),
    Family.STUDENT_T: lambda sp: 2.0 * sp.param("p"),
    Family.LEVY: lambda sp: 1.5,
    Family.BURR: lambda sp: sp.param("c") * sp.param("k") + 1.0,
    Family.PARETO: lambda sp: sp.param("k") + 1.0,
}


def effective_poly_exponent(spec: DensitySpec) -> float | None:
    """Decay exponent of a class-1 spec after prefactor/power layers."""
    fn = _CLASS1_BASE_EXPONENT.get(spec.family)
    if fn is None:
        return None
    return spec.power_alpha * (fn(spec) - spec.prefactor_D)


def _family_rho(spec: DensitySpec) -> float:
    fam = spec.family
    if fam in (Family.POLYNOMIAL, Family.STUDENT_T):
        return 1.0
    if fam is Family.LEVY:
        return max(1.0, 4.0 * spec.param("c") / 3.0)
    if fam is Family.BURR:
        return max(2.0, 10.0 ** (1.0 / spec.param("c")))
    if fam is Family.PARETO:
        return max(1.0, spec.param("scale", 1.0))
    if fam is Family.LOG_NORMAL_TYPE:
        return max(2.0, math.exp(spec.param("q") - 1.0))
    if fam in (Family.WEIBULL_TYPE, Family.FRACTIONAL_EXP):
        return 1.0
    if fam is Family.NEAR_EXPONENTIAL:
        return math.exp(spec.param("q") + 1.0)
    if fam is Family.GAUSSIAN:
        return max(1.0, spec.param("sigma", 1.0))
    if fam is Family.EXPONENTIAL:
        return 1.0
    raise ValueError("Custom specs must supply TailMetadata explicitly")


def _numeric_regularity_onset(spec: DensitySpec, lo: float = 0.5, hi: float = 1e6) -> float:
    """Last monotonicity/midpoint-convexity violation of log b on a scan grid.

    Used to refine rho when multiplicative perturbations shift the onset of
    the regular tail away from the base family's analytic value.
    """
    onset = lo
    for k in range(int(math.log10(lo / 0.5)), int(math.ceil(math.log10(hi / 0.5)))):
        a, b = 0.5 * 10.0**k, 0.5 * 10.0 ** (k + 1)
        s = np.linspace(a, b, 240)
        lv = log_evaluate_array(spec, s)
        finite = np.isfinite(lv)
        if finite.sum() < 3:
            continue
        sv, lvv = s[finite], lv[finite]
        mono_bad = np.diff(lvv) >= 0
        cvx_bad = (lvv[1:-1] - 0.5 * (lvv[:-2] + lvv[2:])) > 1e-11 * np.maximum(1.0, np.abs(lvv[1:-1]))
        for arr, pts in ((mono_bad, sv[1:]), (cvx_bad, sv[1:-1])):
            if arr.any():
                onset = max(onset, float(pts[np.nonzero(arr)[0][-1]]))
    return onset


def default_metadata(spec: DensitySpec) -> TailMetadata:
    """Analytic per-family (rho, delta, h), adjusted for the layer pipeline.

    Affine rescaling and the s^D prefactor keep each family inside its
    asymptotic class; only the effective polynomial exponent of class-1
    families shifts, which feeds the (gamma, delta) defaults.
    """
    if spec.family is Family.CUSTOM:
        raise ValueError("Custom specs must supply TailMetadata explicitly")
    aff = spec.affine
    rho = max((_family_rho(spec) - aff.r_shift) / aff.q_scale, 1.0)
    if spec.splice is not None:
        rho = max(rho, spec.splice.point)
    if spec.prefactor_D != 0.0:
        # the s^D layer can push the monotone/log-convex onset outward
        rho = max(rho, 1.2 * _numeric_regularity_onset(spec, lo=max(rho, 0.5)))

    dt = effective_poly_exponent(spec)
    if dt is not None:
        if dt <= 1.0:
            # not integrable-grade decay; checks will report honestly
            h = HFamily("power", gamma=0.9).with_threshold()
            return TailMetadata(rho=rho, delta=0.05, h=h)
        # balance shift insensitivity (small gamma) against the decay margin
        # gamma*dt - 1 - delta that the delta-tail condition needs
        gamma = min(max(0.31 + 0.7 / dt, 1.04 / dt), 0.88)
        delta = min(max(0.3 * (gamma * dt - 1.0), 0.02), 0.9)
        h = HFamily("power", gamma=gamma).with_threshold()
        return TailMetadata(rho=rho, delta=delta, h=h)

    fam = spec.family
    if fam is Family.LOG_NORMAL_TYPE:
        h = HFamily("power", gamma=1.0 / spec.param("q")).with_threshold()
    elif fam in (Family.WEIBULL_TYPE, Family.FRACTIONAL_EXP):
        h = HFamily("logpower", gamma=2.0 / spec.param("alpha")).with_threshold()
        rho = max(rho, h.threshold)
    elif fam is Family.NEAR_EXPONENTIAL:
        h = HFamily("logpower", gamma=0.5 * (1.0 + spec.param("q"))).with_threshold()
    else:  # Gaussian / Exponential: light tails, scale only used by reports
        h = HFamily("power", gamma=0.5).with_threshold()
    return TailMetadata(rho=rho, delta=0.5, h=h)


# ---------------------------------------------------------------------------
# catalog constructors


def polynomial(D: float, **kw) -> DensitySpec:
    """(1+s)^(-D) on s >= 0; the canonical polynomial-decay representative."""
    return DensitySpec(Family.POLYNOMIAL, {"D": D}, **kw)


def student_t(p: float, **kw) -> DensitySpec:
    """(1+s^2)^(-p) on the whole line."""
    return DensitySpec(Family.STUDENT_T, {"p": p}, **kw)


def cauchy() -> DensitySpec:
    """The normalized Cauchy density 1/(pi (1+s^2))."""
    return DensitySpec(Family.STUDENT_T, {"p": 1.0}, scale=1.0 / math.pi)


def levy(c: float, **kw) -> DensitySpec:
    """s^(-3/2) exp(-c/s) on s > 0."""
    return DensitySpec(Family.LEVY, {"c": c}, **kw)


def burr(c: float, k: float, **kw) -> DensitySpec:
    """s^(c-1) (1+s^c)^(-k-1) on s > 0."""
    return DensitySpec(Family.BURR, {"c": c, "k": k}, **kw)


def pareto(k: float, scale: float = 1.0, **kw) -> DensitySpec:
    """Classical Pareto density k p^k s^(-k-1) on s >= p."""
    return DensitySpec(Family.PARETO, {"k": k, "scale": scale}, **kw)


def log_normal_type(D: float, q: float, **kw) -> DensitySpec:
    """exp(-D (log s)^q) for s >= 1 (value 1 on [0, 1))."""
    return DensitySpec(Family.LOG_NORMAL_TYPE, {"D": D, "q": q}, **kw)


def weibull_type(alpha: float, **kw) -> DensitySpec:
    """exp(-s^alpha) on s >= 0; the classical Weibull density is reached
    with prefactor_D = alpha - 1."""
    return DensitySpec(Family.WEIBULL_TYPE, {"alpha": alpha}, **kw)


def fractional_exp(alpha: float, **kw) -> DensitySpec:
    """exp(-s^alpha) on s >= 0."""
    return DensitySpec(Family.FRACTIONAL_EXP, {"alpha": alpha}, **kw)


def near_exponential(q: float, **kw) -> DensitySpec:
    """exp(-s / (log s)^q) on s > 1; decays just slower than exponential."""
    return DensitySpec(Family.NEAR_EXPONENTIAL, {"q": q}, **kw)


def gaussian(sigma: float = 1.0, norm_dim: int = 1, **kw) -> DensitySpec:
    """(2 pi sigma^2)^(-norm_dim/2) exp(-s^2 / (2 sigma^2))."""
    return DensitySpec(Family.GAUSSIAN, {"sigma": sigma, "norm_dim": float(norm_dim)}, **kw)


def exponential(rate: float = 1.0, **kw) -> DensitySpec:
    """exp(-rate*s) on s >= 0."""
    return DensitySpec(Family.EXPONENTIAL, {"rate": rate}, **kw)


def custom(log_fn: Callable[[np.ndarray], np.ndarray], **kw) -> DensitySpec:
    """Density from a vectorized log-value callable (not JSON-serializable)."""
    return DensitySpec(Family.CUSTOM, {}, custom_log=log_fn, **kw)


# ---------------------------------------------------------------------------
# JSON interface (field names are part of the CLI contract)


def spec_to_dict(spec: DensitySpec) -> dict:
    if spec.family is Family.CUSTOM:
        raise ValueError("Custom densities carry callables and do not serialize")
    splice = None
    if spec.splice is not None:
        splice = {
            "point": spec.splice.point,
            "left": spec.splice.left.value,
            "value": spec.splice.value,
        }
    return {
        "family": spec.family.value,
        "params": spec.param_dict,
        "splice": splice,
        "affine": {
            "q_scale": spec.affine.q_scale,
            "r_shift": spec.affine.r_shift,
            "prefactor": spec.affine.prefactor,
        },
        "alpha": spec.power_alpha,
        "prefactor_D": spec.prefactor_D,
        "scale": spec.scale,
    }


def spec_from_dict(doc: Mapping) -> DensitySpec:
    family = Family(doc["family"])
    splice = None
    if doc.get("splice") is not None:
        sp = doc["splice"]
        splice = Splice(
            point=float(sp.get("point", 0.0)),
            left=LeftPart(sp.get("left", "Zero")),
            value=float(sp.get("value", 0.0)),
        )
    aff = doc.get("affine") or {}
    return DensitySpec(
        family=family,
        params={k: float(v) for k, v in (doc.get("params") or {}).items()},
        splice=splice,
        affine=Affine(
            q_scale=float(aff.get("q_scale", 1.0)),
            r_shift=float(aff.get("r_shift", 0.0)),
            prefactor=float(aff.get("prefactor", 1.0)),
        ),
        power_alpha=float(doc.get("alpha", 1.0)),
        prefactor_D=float(doc.get("prefactor_D", 0.0)),
        scale=float(doc.get("scale", 1.0)),
    )


def spec_to_json(spec: DensitySpec) -> str:
    return json.dumps(spec_to_dict(spec), sort_keys=True, indent=2)


def spec_from_json(text: str) -> DensitySpec:
    return spec_from_dict(json.loads(text))


def load_spec(path) -> DensitySpec:
    with open(path, "r", encoding="utf-8") as fh:
        return spec_from_json(fh.read())


def save_spec(spec: DensitySpec, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(spec_to_json(spec) + "\n")
