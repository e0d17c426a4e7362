"""Numeric verification of tail-class membership at finite resolution.

Every check probes a geometric ladder, works in log space, and returns an
evidence-bearing entry with verdict PASS / FAIL / INCONCLUSIVE. ``classify``
composes the atomic checks into the class verdicts used by the CLI.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import ladder
from .densities import (
    DensitySpec,
    Domain,
    Family,
    TailMetadata,
    default_metadata,
    effective_poly_exponent,
    evaluate_array,
    l1_norm,
    log_evaluate_array,
)
from .errors import DivergentError, DomainError, HTooLargeError, NonFiniteError
from .densities import moment_integral, _left_integral


class Verdict(str, Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class CheckResult:
    condition: str
    verdict: Verdict
    evidence: tuple = ()  # ((s, measured value), ...)
    threshold: float = 0.0
    note: str = ""


@dataclass(frozen=True)
class ClassReport:
    checks: tuple = ()

    def entry(self, condition: str) -> CheckResult:
        for c in self.checks:
            if c.condition == condition:
                return c
        raise KeyError(condition)

    def verdict_for(self, condition: str) -> Verdict:
        return self.entry(condition).verdict

    def all_pass(self, conditions) -> bool:
        return all(self.verdict_for(c) is Verdict.PASS for c in conditions)

    def to_json_dict(self) -> list[dict]:
        return [
            {
                "condition": c.condition,
                "verdict": c.verdict.value,
                "evidence": [[float(s), float(v)] for s, v in c.evidence],
                "threshold": c.threshold,
                "note": c.note,
            }
            for c in self.checks
        ]

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2)


def _evidence(s: np.ndarray, v: np.ndarray, cap: int = 60) -> tuple:
    idx = np.linspace(0, len(s) - 1, min(cap, len(s))).astype(int)
    return tuple((float(s[i]), float(v[i])) for i in idx)


def _witness(s: np.ndarray, v: np.ndarray) -> tuple:
    i = int(np.nanargmax(v))
    return ((float(s[i]), float(v[i])),)


# ---------------------------------------------------------------------------
# atomic checks


def check_long_tailed(
    spec: DensitySpec,
    tau_grid=(1.0, 2.0),
    s_max: float = ladder.DEFAULT_S_MAX,
    rho: float | None = None,
    tol: float = 1e-2,
    rungs: int = ladder.DEFAULT_RUNGS,
) -> CheckResult:
    """Shift-insensitivity for fixed shifts: b(s+tau)/b(s) -> 1."""
    rho = rho if rho is not None else default_metadata(spec).rho
    s = ladder.default_ladder(rho, s_max, rungs)
    lb = log_evaluate_array(spec, s)
    if np.any(np.isneginf(lb)):
        raise DomainError("density vanishes on the probe ladder")
    dev = np.zeros_like(s)
    for tau in tau_grid:
        if tau == 0.0:
            continue
        lshift = log_evaluate_array(spec, s + tau)
        dev = np.maximum(dev, np.abs(np.expm1(np.minimum(lshift - lb, 700.0))))
    verdict, slope = ladder.limit_verdict(s, dev, tol)
    ev = _witness(s, dev) if verdict == "FAIL" else _evidence(s, dev)
    return CheckResult("LongTailed", Verdict(verdict), ev, tol, f"trailing slope {slope:.3g}")


def check_h_insensitive(
    spec: DensitySpec,
    meta: TailMetadata,
    s_max: float = ladder.DEFAULT_S_MAX,
    tol: float = 1e-2,
    rungs: int = ladder.DEFAULT_RUNGS,
) -> CheckResult:
    """Shift-insensitivity up to the growing scale h(s)."""
    lo = max(2.0 * meta.rho, 10.0, meta.h.threshold)
    if lo >= s_max / 10.0:
        raise HTooLargeError("h(s) < s/2 only holds too close to s_max")
    s = ladder.geometric_ladder(lo, s_max, rungs)
    h = meta.h(s)
    if np.any(h >= s / 2.0):
        raise HTooLargeError("h(s) >= s/2 on the probe ladder")
    lb = log_evaluate_array(spec, s)
    if np.any(np.isneginf(lb)):
        raise DomainError("density vanishes on the probe ladder")
    up = log_evaluate_array(spec, s + h)
    dn = log_evaluate_array(spec, s - h)
    dev = np.maximum(
        np.abs(np.expm1(np.minimum(up - lb, 700.0))),
        np.abs(np.expm1(np.minimum(dn - lb, 700.0))),
    )
    verdict, slope = ladder.limit_verdict(s, dev, tol)
    ev = _witness(s, dev) if verdict == "FAIL" else _evidence(s, dev)
    return CheckResult("HInsensitive", Verdict(verdict), ev, tol, f"trailing slope {slope:.3g}")


def check_tail_decreasing(
    spec: DensitySpec,
    rho: float,
    s_max: float = ladder.DEFAULT_S_MAX,
    rungs: int = 400,
) -> CheckResult:
    """Strictly decreasing to 0 beyond rho."""
    s = ladder.geometric_ladder(max(rho, 1e-6), s_max, rungs)
    lb = log_evaluate_array(spec, s)
    if np.any(np.isneginf(lb)):
        raise DomainError("density vanishes beyond rho; not tail-decreasing data")
    diffs = np.diff(lb)
    bad = diffs >= 0.0
    if np.any(bad):
        i = int(np.nonzero(bad)[0][0])
        ev = ((float(s[i]), float(lb[i])), (float(s[i + 1]), float(lb[i + 1])))
        return CheckResult("TailDecreasing", Verdict.FAIL, ev, 0.0, "non-decreasing step")
    decayed = lb[-1] < lb[0] - 3.0  # must actually head to 0, not flatten
    verdict = Verdict.PASS if decayed else Verdict.INCONCLUSIVE
    return CheckResult("TailDecreasing", verdict, _evidence(s, lb), 0.0)


def check_tail_log_convex(
    spec: DensitySpec,
    rho: float,
    s_max: float = ladder.DEFAULT_S_MAX,
    n_pairs: int = 10_000,
    seed: int = 0,
    tol: float = 1e-9,
) -> CheckResult:
    """Midpoint convexity of log b on randomized pairs in [rho, s_max]."""
    rng = np.random.default_rng(seed)
    lo = max(rho, 1e-6)
    u = rng.uniform(math.log(lo), math.log(s_max), size=(2, n_pairs))
    s1, s2 = np.exp(u[0]), np.exp(u[1])
    # structured near-neighbor triples catch narrow bumps the random pairs miss
    grid = ladder.geometric_ladder(lo, s_max, 800)
    s1 = np.concatenate([s1, grid[:-2]])
    s2 = np.concatenate([s2, grid[2:]])
    mid = 0.5 * (s1 + s2)
    l1v = log_evaluate_array(spec, s1)
    l2v = log_evaluate_array(spec, s2)
    lm = log_evaluate_array(spec, mid)
    if np.any(np.isneginf([l1v.min(), l2v.min(), lm.min()])):
        raise DomainError("density vanishes inside the convexity probe range")
    scale = np.maximum(1.0, np.maximum(np.abs(l1v), np.abs(l2v)))
    gap = lm - 0.5 * (l1v + l2v) - tol * scale
    bad = gap > 0
    if np.any(bad):
        order = np.argsort(gap[bad])[::-1][:5]
        ms, gs = mid[bad][order], gap[bad][order]
        return CheckResult(
            "TailLogConvex", Verdict.FAIL, tuple(zip(ms.tolist(), gs.tolist())), tol,
            f"{int(bad.sum())} midpoint violations",
        )
    return CheckResult("TailLogConvex", Verdict.PASS, _witness(mid, gap), tol)


def _sdelta_g(spec: DensitySpec, meta: TailMetadata, x: np.ndarray) -> np.ndarray:
    """g = log b(h(s)) + (1+delta) log s parameterized by x = log s.

    Power-family h is clipped where e^(gamma x) would overflow; logpower h
    needs only x itself, so the probe range is limited by float range on x,
    not on s.
    """
    if meta.h.kind == "power":
        h = np.exp(np.minimum(meta.h.gamma * x, 700.0))
    elif meta.h.kind == "logpower":
        h = np.maximum(x, 1e-12) ** meta.h.gamma
    else:
        h = np.asarray(meta.h(np.exp(np.minimum(x, 700.0))), dtype=float)
    return log_evaluate_array(spec, np.maximum(h, 1e-12)) + (1.0 + meta.delta) * x


def check_S_delta_condition(
    spec: DensitySpec,
    meta: TailMetadata,
    s_max: float = ladder.DEFAULT_S_MAX,
    tol: float = 5e-2,
    rungs: int = ladder.DEFAULT_RUNGS,
    x_extended: float = 1e7,
) -> CheckResult:
    """b(h(s)) s^(1+delta) -> 0, judged in log-parameterized space.

    Verdict protocol, in order:
    1. the curve g(s) = log b(h(s)) + (1+delta) log s drops below log(tol)
       with negative trend inside [lo, s_max]  -> PASS;
    2. same test on the analytic extension out to s = 1e250 (the quantity
       needs no grids, so the long reach is safe)  -> PASS, noted;
    3. for slowly-opening insensitivity scales (h = (log s)^gamma) the
       competing rate T(x) = -log b(h)/x is probed on x = log s up to
       x_extended; a sustained crossing of 1 + delta certifies the limit
       even when its onset lies beyond representable s  -> PASS, noted.
    A curve that grows with no crossing in reach is FAIL; in-between,
    INCONCLUSIVE.
    """
    lo = max(2.0 * meta.rho, 10.0, meta.h.threshold)
    s = ladder.geometric_ladder(min(lo, s_max / 100.0), s_max, rungs)
    g = _sdelta_g(spec, meta, np.log(s))
    finite = np.isfinite(g)
    if not finite.any() or np.all(np.isneginf(g[-2:])):
        return CheckResult("SDeltaCondition", Verdict.PASS, (), tol, "identically 0 beyond ladder")
    ev = _evidence(s, np.where(finite, g, -np.inf))
    log_tol = math.log(tol)
    last2 = float(np.max(g[-2:]))
    slope = ladder.trailing_slope_linear(s, np.where(finite, g, -1e30))
    if last2 <= log_tol and slope < 0.0:
        return CheckResult("SDeltaCondition", Verdict.PASS, ev, tol,
                           f"log slope {slope:.3g}/decade")

    # stage 2: extend the analytic ladder toward the float limit on s
    x_far = np.geomspace(math.log(max(lo, 2.0)), 570.0, 400)
    g_far = _sdelta_g(spec, meta, x_far)
    quarter = g_far.size // 4
    tail_dec = float(g_far[-1] - g_far[-quarter])
    if float(g_far[-1]) <= log_tol and tail_dec < 0.0:
        return CheckResult(
            "SDeltaCondition", Verdict.PASS, ev, tol,
            f"limit resolved on the extended ladder (s up to 1e{int(570/math.log(10))})",
        )

    # stage 3: crossing analysis for logpower scales
    if meta.h.kind == "logpower":
        x = np.geomspace(max(math.log(lo), 2.0), x_extended, 600)
        lb = _sdelta_g(spec, meta, x) - (1.0 + meta.delta) * x  # log b(h)
        t_rate = -lb / x
        crossing = t_rate >= (1.0 + meta.delta) * 1.02
        q = t_rate.size // 4
        increasing = bool(np.all(np.diff(t_rate[-2 * q :]) > 0))
        if crossing.any() and increasing and bool(crossing[-1]):
            x_star = float(x[np.nonzero(crossing)[0][0]])
            return CheckResult(
                "SDeltaCondition", Verdict.PASS, ev, tol,
                f"decay rate crosses 1+delta at log s ~ {x_star:.3g} "
                "(onset beyond the representable range)",
            )
        if not crossing.any() and not increasing:
            return CheckResult("SDeltaCondition", Verdict.FAIL, ev, tol,
                               "competing rate stays below 1+delta")

    if last2 > log_tol and slope >= -1e-3 and tail_dec >= 0.0:
        return CheckResult("SDeltaCondition", Verdict.FAIL, ev, tol,
                           f"curve not decreasing (slope {slope:.3g}/decade)")
    return CheckResult("SDeltaCondition", Verdict.INCONCLUSIVE, ev, tol,
                       f"log slope {slope:.3g}/decade")


def check_quasi_decreasing(
    spec: DensitySpec,
    rho: float,
    s_max: float = ladder.DEFAULT_S_MAX,
    rungs: int = 400,
    tol: float = 1e-6,
) -> tuple[CheckResult, float]:
    """Bounded overshoot b(s+tau) <= K b(s); returns the entry and K-hat.

    The probe set joins a geometric ladder with linear windows so short-scale
    oscillations contribute to the supremum.
    """
    lo = max(rho, 1e-6)
    pts = [ladder.geometric_ladder(lo, s_max, rungs)]
    for center in np.geomspace(max(4.0 * lo, 10.0), s_max / 10.0, 5):
        width = min(60.0, center)
        pts.append(np.linspace(center, center + width, 800))
    s = np.unique(np.concatenate(pts))

    def khat(points: np.ndarray) -> tuple[float, float, float]:
        lb = log_evaluate_array(spec, points)
        ok = np.isfinite(lb)
        pts_ok, lb_ok = points[ok], lb[ok]
        run_min = np.minimum.accumulate(lb_ok)
        jump = lb_ok - np.concatenate(([lb_ok[0]], run_min[:-1]))
        i = int(np.argmax(jump))
        return float(math.exp(jump[i])), float(pts_ok[i]), float(jump[i])

    k1, s_at, _ = khat(s)
    # refinement stability: double the geometric ladder
    s2 = np.unique(np.concatenate([s, ladder.geometric_ladder(lo, s_max, 2 * rungs)]))
    k2, _, _ = khat(s2)
    stable = abs(k2 - k1) <= 0.05 * max(1.0, k1)
    k = max(k1, k2)
    verdict = Verdict.PASS if stable else Verdict.INCONCLUSIVE
    entry = CheckResult(
        "QuasiDecreasing", verdict, ((s_at, k),), tol,
        f"K estimate {k:.6g}" + ("" if stable else " (unstable under refinement)"),
    )
    return entry, k


def check_finite_moment(spec: DensitySpec, n: int, rho: float) -> CheckResult:
    """Left integrability plus the n-th tail moment beyond rho."""
    cond = f"FiniteMoment({n})"
    try:
        left = 0.0 if spec.supported_on_half_line else _left_integral(spec, rho)
        tail = moment_integral(spec, n, rho)
    except DivergentError as exc:
        return CheckResult(cond, Verdict.FAIL, ((rho, math.inf),), 0.0, str(exc))
    total = left + tail
    return CheckResult(cond, Verdict.PASS, ((rho, total),), 0.0, f"value {total:.6g}")


def check_log_equivalence(
    spec_a: DensitySpec,
    spec_b: DensitySpec,
    s_max: float = ladder.DEFAULT_S_MAX,
    rho: float = 2.0,
    tol: float = 0.25,
    rungs: int = ladder.DEFAULT_RUNGS,
) -> CheckResult:
    """log b1(s) / log b2(s) -> 1. Tolerance is loose: the classes it guards
    are stable under corrections as slow as log log s / log s."""
    s = ladder.default_ladder(rho, s_max, rungs)
    la = log_evaluate_array(spec_a, s)
    lb = log_evaluate_array(spec_b, s)
    if np.any(la == 0.0) or np.any(lb == 0.0):
        raise DomainError("log b vanishes on the probe set; ratio undefined")
    if np.any(np.isneginf(la)) or np.any(np.isneginf(lb)):
        raise DomainError("density vanishes on the probe set")
    dev = np.abs(la / lb - 1.0)
    verdict, slope = ladder.limit_verdict(s, dev, tol)
    ev = _witness(s, dev) if verdict == "FAIL" else _evidence(s, dev)
    return CheckResult("LogEquiv", Verdict(verdict), ev, tol, f"trailing slope {slope:.3g}")


def check_weak_tail_equivalence(
    spec_a: DensitySpec,
    spec_b: DensitySpec,
    s_max: float = ladder.DEFAULT_S_MAX,
    rho: float = 2.0,
    bound: float = 10.0,
    rungs: int = ladder.DEFAULT_RUNGS,
) -> CheckResult:
    """b1/b2 bounded away from 0 and infinity along the tail."""
    s = ladder.default_ladder(rho, s_max, rungs)
    la = log_evaluate_array(spec_a, s)
    lb = log_evaluate_array(spec_b, s)
    if np.any(np.isneginf(la)) or np.any(np.isneginf(lb)):
        raise DomainError("density vanishes on the probe set")
    lr = la - lb
    tail = s >= s[-1] / 100.0
    spread = float(np.max(lr[tail]) - np.min(lr[tail]))
    drift = ladder.trailing_slope_linear(s, lr)
    if spread <= math.log(bound) and abs(drift) <= 0.05:
        verdict = Verdict.PASS
    elif abs(drift) >= 0.5:
        verdict = Verdict.FAIL
    else:
        verdict = Verdict.INCONCLUSIVE
    return CheckResult(
        "WeakTailEquiv", verdict, _evidence(s, np.exp(lr)), bound,
        f"log-ratio drift {drift:.3g}/decade",
    )


# ---------------------------------------------------------------------------
# composite classification


def _combine(conditions: list[Verdict]) -> Verdict:
    if any(v is Verdict.FAIL for v in conditions):
        return Verdict.FAIL
    if all(v is Verdict.PASS for v in conditions):
        return Verdict.PASS
    return Verdict.INCONCLUSIVE


def _check_integrable(spec: DensitySpec) -> CheckResult:
    try:
        val = l1_norm(spec, Domain.POSITIVE_HALF_LINE)
    except DivergentError as exc:
        return CheckResult("Integrable", Verdict.FAIL, (), 0.0, str(exc))
    return CheckResult("Integrable", Verdict.PASS, ((0.0, val),), 0.0, f"l1 on R+ {val:.6g}")


def _fast_decay_verdict(spec: DensitySpec, s_max: float) -> Verdict:
    """Faster-than-any-polynomial decay: local log-log slope keeps falling."""
    s = np.geomspace(max(s_max / 1e4, 10.0), s_max, 41)
    lb = log_evaluate_array(spec, s)
    if np.any(np.isneginf(lb)):
        return Verdict.FAIL
    x = np.log(s)
    slopes = np.diff(lb) / np.diff(x)
    q = len(slopes) // 4
    quarter_means = [float(np.mean(slopes[i * q : (i + 1) * q])) for i in range(4)]
    falling = all(
        quarter_means[i + 1] <= quarter_means[i] - 0.25 for i in range(3)
    )
    steep = quarter_means[-1] <= -6.0
    if falling and steep:
        return Verdict.PASS
    if not falling and quarter_means[-1] > -50.0:
        return Verdict.FAIL
    return Verdict.INCONCLUSIVE


def _positivity_on_half_line(spec: DensitySpec, s_max: float) -> bool:
    s = np.concatenate([[0.0], np.geomspace(1e-3, s_max, 200)])
    try:
        return bool(np.all(np.isfinite(log_evaluate_array(spec, s))))
    except NonFiniteError:
        return False  # unbounded at the origin: not an admissible envelope


def _decreasing_from_origin(spec: DensitySpec, s_max: float) -> Verdict:
    s = np.unique(np.concatenate(
        [np.geomspace(1e-3, 1.0, 60), ladder.geometric_ladder(1.0, s_max, 300)]
    ))
    lb = log_evaluate_array(spec, s)
    if np.any(np.isneginf(lb)):
        return Verdict.FAIL
    return Verdict.PASS if bool(np.all(np.diff(lb) < 0)) else Verdict.FAIL


def classify(
    spec: DensitySpec,
    meta: TailMetadata | None = None,
    d: int = 1,
    s_max: float = ladder.DEFAULT_S_MAX,
    seed: int = 0,
) -> ClassReport:
    """Compose the atomic checks into class verdicts for dimension d.

    The core-class gate combines LongTailed, TailDecreasing, TailLogConvex,
    the delta-tail condition, and half-line integrability. The h-insensitivity
    entry is reported as evidence but is not a gate: at finite s_max it is
    honestly INCONCLUSIVE for stretched-exponential tails.
    """
    if d < 1:
        raise ValueError("dimension d must be >= 1")
    meta = meta if meta is not None else default_metadata(spec)
    checks: list[CheckResult] = []

    long_tailed = check_long_tailed(spec, s_max=s_max, rho=meta.rho)
    checks.append(long_tailed)
    try:
        checks.append(check_h_insensitive(spec, meta, s_max=s_max))
    except HTooLargeError as exc:
        checks.append(CheckResult("HInsensitive", Verdict.INCONCLUSIVE, (), 0.0, str(exc)))
    tail_dec = check_tail_decreasing(spec, meta.rho, s_max=s_max)
    checks.append(tail_dec)
    log_cvx = check_tail_log_convex(spec, meta.rho, s_max=s_max, seed=seed)
    checks.append(log_cvx)
    quasi, _ = check_quasi_decreasing(spec, meta.rho, s_max=s_max)
    checks.append(quasi)
    sdelta = check_S_delta_condition(spec, meta, s_max=s_max)
    checks.append(sdelta)
    integ = _check_integrable(spec)
    checks.append(integ)

    n_top = max(d, 1)
    moments = {n: check_finite_moment(spec, n, meta.rho) for n in range(1, n_top + 1)}
    checks.extend(moments[n] for n in range(1, n_top + 1))

    gate = [long_tailed.verdict, tail_dec.verdict, log_cvx.verdict, sdelta.verdict, integ.verdict]
    class_s = _combine(gate)
    note = ""
    b_rho = float(evaluate_array(spec, meta.rho)[0])
    if b_rho > 1.0:
        note = f"b(rho)={b_rho:.3g} > 1 (normalization convention flag, not a failure)"
    checks.append(CheckResult("ClassS", class_s, (), 0.0, note))

    for n in range(1, n_top + 1):
        v = _combine([class_s, moments[n].verdict])
        checks.append(CheckResult(f"ClassSn({n})", v, (), 0.0))

    # admissible radial classes
    sn_d = _combine([class_s, moments[n_top].verdict])
    if d == 1:
        st_verdict, st_note = sn_d, "coincides with ClassSn(1)"
    else:
        exponent = effective_poly_exponent(spec)
        if exponent is not None:
            mu = exponent - d
            if mu > 0:
                st_verdict = sn_d
                st_note = f"inverse-polynomial form, mu={mu:.4g}"
            else:
                st_verdict = Verdict.FAIL
                st_note = f"polynomial exponent {exponent:.4g} <= d"
        else:
            fast = _fast_decay_verdict(spec, s_max)
            st_verdict = _combine([sn_d, fast])
            st_note = f"fast-decay check {fast.value}"
    checks.append(CheckResult(f"ClassSTilde({d})", st_verdict, (), 0.0, st_note))

    positive = _positivity_on_half_line(spec, s_max)
    dmoment = moments[n_top].verdict if d <= n_top else check_finite_moment(spec, d, meta.rho).verdict
    bounded_dec = [tail_dec.verdict, dmoment]
    dt_verdict = _combine(bounded_dec) if positive else Verdict.FAIL
    checks.append(CheckResult(f"ClassDTilde({d})", dt_verdict, (), 0.0))
    strict = _decreasing_from_origin(spec, s_max)
    checks.append(CheckResult(f"ClassD({d})", _combine([dt_verdict, strict]), (), 0.0))

    return ClassReport(tuple(checks))
