"""Tail diagnostics built on the convolution engines.

* fold-ratio curves b^{*n}(s)/b(s) against the limit n * ||b||_1^(n-1);
* uniform-in-n bound fitting: the smallest stable onset s* and the
  constant c such that b^{*n} <= c (1+delta)^n b(s) beyond it;
* the constructive certificate (lambda, gamma) from the sublevel-set
  argument, which propagates a one-step convolution bound to all n;
* the d-dimensional variant with an alpha-power envelope b(r)^alpha.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import ladder
from .densities import (
    DensitySpec,
    Domain,
    TailMetadata,
    default_metadata,
    effective_poly_exponent,
    l1_norm,
    log_evaluate_array,
)
from .errors import (
    AlphaTooSmallError,
    NoFeasibleLambdaError,
    UnderResolvedError,
)
from .grids import GridFunction, convolve, embed, sample, self_convolve_n
from .logconv import FoldFamily, build_folds, pair_convolve_log
from .membership import Verdict, check_quasi_decreasing, classify
from .radial import RadialProfile, radial_convolve, radial_self_convolve_n

DEVIATION_FLOOR = 5e-3  # engine accuracy floor for decade-monotonicity tests


@dataclass(frozen=True)
class RatioDiagnostic:
    """Evidence for the n-fold ratio limit of one density."""

    n: int
    curve: tuple  # ((s, ratio), ...)
    predicted_limit: float
    last_decade_deviation: float
    decade_deviations: tuple  # ((decade edge, max |ratio/limit - 1|), ...)
    log_derived_from: float = math.inf  # s beyond which ratios are log-space only
    floor: float = DEVIATION_FLOOR

    @property
    def decades_decreasing(self) -> bool:
        return ladder.decades_decreasing(list(self.decade_deviations), self.floor)

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "predicted_limit": self.predicted_limit,
            "last_decade_deviation": self.last_decade_deviation,
            "decade_deviations": [[a, b] for a, b in self.decade_deviations],
            "log_derived_from": self.log_derived_from,
            "curve": [[s, v] for s, v in self.curve],
        }


@dataclass(frozen=True)
class KestenFit:
    """Fitted uniform-in-n tail bound b^{*n} <= c (1+delta)^n b^alpha."""

    delta: float
    s_delta: float
    c_delta: float
    residuals: tuple  # per n = 1..n_max: sup ratio over the fitted region
    n_max: int
    alpha: float = 1.0
    stabilized: bool = True
    note: str = ""
    probe: tuple = (10.0, 400.0, 60)  # (ladder lo, hi, rungs) used by the fit

    def envelope_log(self, spec: DensitySpec, s, n: int) -> np.ndarray:
        lv = log_evaluate_array(spec, s)
        return math.log(self.c_delta) + n * math.log1p(self.delta) + self.alpha * lv

    def to_json_dict(self) -> dict:
        return {
            "delta": self.delta,
            "s_delta": self.s_delta,
            "c_delta": self.c_delta,
            "residuals": list(self.residuals),
            "n_max": self.n_max,
            "alpha": self.alpha,
            "stabilized": self.stabilized,
            "note": self.note,
        }


def _require_class(spec: DensitySpec, meta: TailMetadata | None, s_max: float) -> None:
    meta = meta if meta is not None else default_metadata(spec)
    report = classify(spec, meta, d=1, s_max=s_max)
    if report.verdict_for("ClassS") is Verdict.FAIL:
        raise ValueError(
            "density fails the sub-exponential class checks; "
            "pass assume_classes=True to run the diagnostic anyway"
        )
    entry, _ = check_quasi_decreasing(spec, meta.rho, s_max=s_max)
    if entry.verdict is Verdict.FAIL:
        raise ValueError("density fails the bounded-overshoot check")


def ratio_diagnostic(
    spec: DensitySpec,
    n_max: int,
    window: tuple[float, float] = (10.0, 1e6),
    rungs: int = ladder.DEFAULT_RUNGS,
    meta: TailMetadata | None = None,
    assume_classes: bool = False,
    folds: FoldFamily | None = None,
    floor: float = DEVIATION_FLOOR,
) -> list[RatioDiagnostic]:
    """Fold-ratio curves on a geometric ladder inside the window.

    Ratios are evaluated through the log-space fold family, so the curves
    stay meaningful far past linear-arithmetic underflow; points are marked
    log-derived beyond exp(-700).
    """
    if not assume_classes:
        _require_class(spec, meta, s_max=min(window[1], 1e8))
    meta = meta if meta is not None else default_metadata(spec)
    if folds is None:
        folds = build_folds(spec, n_max, s_max=window[1], rho=meta.rho)
    s = ladder.geometric_ladder(max(window[0], 1e-3), window[1], rungs)
    limit_norm = l1_norm(spec, Domain.WHOLE_LINE)
    lb = folds.log_fold(1, s)
    log_cut = np.nonzero(lb < -700.0)[0]
    log_from = float(s[log_cut[0]]) if log_cut.size else math.inf
    out = []
    for n in range(1, n_max + 1):
        ratios = folds.ratio(n, s)
        limit = n * limit_norm ** (n - 1)
        dev = np.abs(ratios / limit - 1.0)
        decades = ladder.per_decade_max(s, dev)
        out.append(
            RatioDiagnostic(
                n=n,
                curve=tuple(zip(s.tolist(), ratios.tolist())),
                predicted_limit=limit,
                last_decade_deviation=float(np.max(dev[s >= s[-1] / 10.0])),
                decade_deviations=tuple(decades),
                log_derived_from=log_from,
                floor=floor,
            )
        )
    return out


def weighted_limit_diagnostic(
    spec_b: DensitySpec,
    spec_b1: DensitySpec,
    spec_b2: DensitySpec,
    window: tuple[float, float] = (10.0, 1e6),
    c1: float | None = None,
    c2: float | None = None,
    rungs: int = ladder.DEFAULT_RUNGS,
    support: str | None = None,
) -> dict:
    """Curve of (b1 * b2)(s) / b(s) against c1 ||b2||_1 + c2 ||b1||_1.

    The weights c_j = lim b_j/b are measured on the top decade when not
    supplied; a vanishing tail measures as 0.
    """
    s = ladder.geometric_ladder(max(window[0], 1e-3), window[1], rungs)
    top = s[s >= s[-1] / 10.0]
    lb = log_evaluate_array(spec_b, top)

    def measure(sp) -> float:
        lj = log_evaluate_array(sp, top)
        vals = np.exp(np.where(np.isneginf(lj), -np.inf, lj) - lb)
        return float(np.median(vals))

    c1 = c1 if c1 is not None else measure(spec_b1)
    c2 = c2 if c2 is not None else measure(spec_b2)
    predicted = c1 * l1_norm(spec_b2, Domain.WHOLE_LINE) + c2 * l1_norm(
        spec_b1, Domain.WHOLE_LINE
    )
    lconv = pair_convolve_log(spec_b1, spec_b2, s, support=support)
    ratios = np.exp(lconv - log_evaluate_array(spec_b, s))
    dev = np.abs(ratios / predicted - 1.0) if predicted > 0 else np.abs(ratios)
    return {
        "curve": tuple(zip(s.tolist(), ratios.tolist())),
        "predicted": predicted,
        "c1": c1,
        "c2": c2,
        "last_decade_deviation": float(np.max(dev[s >= s[-1] / 10.0])),
    }


def _stability_onset(s: np.ndarray, curves: list[np.ndarray], band: float = 0.05) -> int | None:
    """First ladder index from which every curve's trailing log-log slope
    stays within +-band of flat."""
    n_pts = s.size
    for i in range(n_pts - 8):
        ok = True
        for q in curves:
            window = slice(i, n_pts)
            slope = ladder.loglog_slope(s[window], q[window])
            tail_slope = ladder.trailing_decade_slope(s[window], np.maximum(q[window], 1e-300))
            if abs(slope) > band or abs(tail_slope) > band:
                ok = False
                break
        if ok:
            return i
    return None


def kesten_fit(
    spec: DensitySpec,
    delta: float,
    n_max: int,
    window: tuple[float, float] = (-500.0, 500.0),
    grid_m: int = 2**16,
    rungs: int = ladder.DEFAULT_RUNGS,
    meta: TailMetadata | None = None,
    assume_classes: bool = False,
    mass_tol: float = 1e-6,
) -> KestenFit:
    """Fit (c, s*) for the uniform bound b^{*n} <= c (1+delta)^n b, s > s*.

    s* is the smallest ladder point after which every per-n ratio curve is
    slope-stable; c is then the exact supremum of the discounted ratios
    over the fitted region, so the bound holds at every probe by
    construction.
    """
    if not (0.0 < delta):
        raise ValueError("delta must be positive")
    mass = l1_norm(spec, Domain.WHOLE_LINE)
    if abs(mass - 1.0) > mass_tol:
        raise ValueError(f"kesten_fit needs a probability density; ||b||_1 = {mass:.8f}")
    meta = meta if meta is not None else default_metadata(spec)
    if not assume_classes:
        _require_class(spec, meta, s_max=1e6)

    lo, hi = window
    if spec.supported_on_half_line:
        lo = 0.0
        f = sample(spec, lo, hi, grid_m)
    else:
        m = grid_m + 1 if grid_m % 2 == 0 else grid_m
        f = sample(spec, lo, hi, m)
    folds = self_convolve_n(f, n_max)

    s_lo = max(2.0 * meta.rho, 10.0)
    s_hi = 0.8 * hi
    s = ladder.geometric_ladder(s_lo, s_hi, rungs)
    lb = log_evaluate_array(spec, s)
    discounted = []
    noise_floor = 1e-13 * float(f.values.max())
    for n in range(1, n_max + 1):
        vals = folds[n - 1].value_at(s)
        if np.any(vals <= noise_floor):
            raise UnderResolvedError(
                f"fold {n} under-resolved on the probe ladder; widen the window"
            )
        q = np.exp(np.log(vals) - lb - n * math.log1p(delta))
        discounted.append(q)

    onset = _stability_onset(s, discounted)
    if onset is None:
        s_delta = float(s[max(s.size - rungs // 3, 0)])
        stabilized = False
        note = "no ladder point passed the slope-stability test"
    else:
        s_delta = float(s[onset])
        stabilized = True
        note = ""
    fitted = s > s_delta * (1.0 - 1e-12)
    residuals = tuple(float(np.max(q[fitted])) for q in discounted)
    return KestenFit(
        delta=delta,
        s_delta=s_delta,
        c_delta=max(residuals),
        residuals=residuals,
        n_max=n_max,
        alpha=1.0,
        stabilized=stabilized,
        note=note,
        probe=(s_lo, s_hi, rungs),
    )


def kesten_verify(
    fit: KestenFit,
    spec: DensitySpec,
    folds: list[GridFunction] | None = None,
    window: tuple[float, float] = (-500.0, 500.0),
    grid_m: int = 2**16,
    slack: float = 1e-12,
) -> bool:
    """Post-hoc check of the fitted bound at every fitted ladder point."""
    if folds is None:
        lo, hi = window
        if spec.supported_on_half_line:
            lo = 0.0
        m = grid_m + 1 if (lo < 0 and grid_m % 2 == 0) else grid_m
        folds = self_convolve_n(sample(spec, lo, hi, m), fit.n_max)
    s_lo, s_hi, rungs = fit.probe
    s = ladder.geometric_ladder(s_lo, s_hi, int(rungs))
    s = s[s > fit.s_delta * (1.0 - 1e-12)]
    lb = log_evaluate_array(spec, s)
    for n in range(1, fit.n_max + 1):
        vals = folds[n - 1].value_at(s)
        bound = (1.0 + slack) * fit.c_delta * np.exp(n * math.log1p(fit.delta) + lb)
        if np.any(vals > bound):
            return False
    return True


@dataclass(frozen=True)
class BoundCertificate:
    """Constructive (lambda, gamma) certificate: given the reference weight
    w > 0, (a * min(lambda, w)) <= gamma * min(lambda, w) on the verified
    window, hence a^{*n} <= gamma^(n-1) ||a||_phi min(lambda, w) there.

    The window [claim_lo, claim_hi] is the complete-overlap region of the
    discrete convolution; whatever mass of a lives outside its own carrier
    is accounted by the sampling ledger, not by this certificate.
    """

    lam: float
    gamma: float
    a_norm_phi: float
    eta_hat: float
    delta: float
    ladder_tried: int
    claim_lo: float = -math.inf
    claim_hi: float = math.inf

    def to_json_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "gamma": self.gamma,
            "a_norm_phi": self.a_norm_phi,
            "eta_hat": self.eta_hat,
            "delta": self.delta,
            "ladder_tried": self.ladder_tried,
            "claim_lo": self.claim_lo,
            "claim_hi": self.claim_hi,
        }


def _grid_pair(a, omega):
    """Common-lattice values of a, omega and the convolution a * omega."""
    if isinstance(a, RadialProfile) and isinstance(omega, RadialProfile):
        conv = radial_convolve(a, omega)
        x = omega.grid()
        return (
            omega.gf.values,
            conv.value_at(x),
            a.gf.values,
            x,
            a,
        )
    if isinstance(a, GridFunction) and isinstance(omega, GridFunction):
        conv = convolve(a, omega)
        x = omega.grid()
        return omega.values, conv.value_at(x), a.value_at(x), x, a
    raise TypeError("operands must both be GridFunction or both RadialProfile")


def certified_bound_propagation(
    a,
    omega,
    delta: float,
    n_rungs: int = 40,
) -> BoundCertificate:
    """Search a decreasing threshold ladder for the largest feasible lambda.

    For each candidate lambda, eta is measured as the supremum of
    (a * w)/w over the sublevel region {w < lambda} (or the near-minimum
    region when that is empty), gamma = max(1, (1+delta) eta), and
    feasibility demands (a * min(lambda, w)) <= gamma * min(lambda, w)
    over the complete-overlap window of the discrete convolution.
    """
    if not (0.0 < delta):
        raise ValueError("delta must be positive")
    omega = _positive_core(omega)
    w_vals, conv_w, a_vals, x, a_obj = _grid_pair(a, omega)
    if np.any(w_vals <= 0):
        raise ValueError("the reference weight must be positive on its grid")
    a_gf = a_obj.gf if isinstance(a_obj, RadialProfile) else a_obj
    if isinstance(omega, RadialProfile):
        claim_lo, claim_hi = 0.0, omega.hi - a_gf.hi
    else:
        claim_lo, claim_hi = omega.lo + a_gf.hi, omega.hi + a_gf.lo
    claim = (x >= claim_lo) & (x <= claim_hi)
    if not claim.any():
        raise ValueError("the weight's carrier is too narrow against a's window")

    lam_hi = float(w_vals.max()) / 2.0
    lam_lo = float(w_vals[claim].min()) * 1.0000001
    rungs = np.geomspace(lam_hi, lam_lo, n_rungs) if lam_hi > lam_lo else np.array([lam_hi])
    tried = 0
    for lam in rungs:
        tried += 1
        sub = claim & (w_vals < lam)
        if not sub.any():
            sub = claim & (w_vals <= float(w_vals[claim].min()) * (1.0 + 1e-9))
        eta = float(np.max(conv_w[sub] / w_vals[sub]))
        gamma = max(1.0, (1.0 + delta) * eta)
        w_lam = np.minimum(lam, w_vals)
        if isinstance(omega, RadialProfile):
            conv_lam = radial_convolve(a, _replace_vals(omega, w_lam)).value_at(x)
        else:
            conv_lam = convolve(a, _replace_vals(omega, w_lam)).value_at(x)
        if np.all(conv_lam[claim] <= gamma * w_lam[claim] * (1.0 + 1e-9)):
            a_norm_phi = float(np.max(a_vals[claim] / w_lam[claim]))
            return BoundCertificate(
                lam=float(lam), gamma=float(gamma), a_norm_phi=a_norm_phi,
                eta_hat=eta, delta=delta, ladder_tried=tried,
                claim_lo=float(claim_lo), claim_hi=float(claim_hi),
            )
    raise NoFeasibleLambdaError(
        f"no feasible lambda among {tried} rungs in [{rungs[-1]:.3g}, {rungs[0]:.3g}]"
    )


def _replace_vals(obj, vals: np.ndarray):
    if isinstance(obj, RadialProfile):
        gf = GridFunction(obj.gf.lo, obj.gf.hi, vals, tail_model=obj.gf.tail_model)
        return RadialProfile(obj.dimension, gf)
    return GridFunction(obj.lo, obj.hi, vals, tail_model=obj.tail_model,
                        left_tail_model=obj.left_tail_model)


def _positive_core(omega, rel_floor: float = 1e-10):
    """Trim the weight to the contiguous region solidly above round-off;
    carrier edges of deep convolutions decay into clipped FFT noise."""
    gf = omega.gf if isinstance(omega, RadialProfile) else omega
    vmax = float(gf.values.max())
    ok = np.nonzero(gf.values > rel_floor * vmax)[0]
    if ok.size < 2:
        raise ValueError("the reference weight has no positive core")
    i0, i1 = int(ok[0]), int(ok[-1])
    if isinstance(omega, RadialProfile):
        i0 = 0
    if i0 == 0 and i1 == gf.m - 1:
        return omega
    g = gf.grid()
    core = GridFunction(float(g[i0]), float(g[i1]), gf.values[i0 : i1 + 1],
                        tail_model=gf.tail_model, left_tail_model=gf.left_tail_model)
    if isinstance(omega, RadialProfile):
        return RadialProfile(omega.dimension, core)
    return core


def alpha_threshold_polynomial(d: int, mu: float) -> float:
    """Admissibility threshold for the alpha-power envelope of the
    inverse-polynomial profile M (1+s)^-(d+mu)."""
    return (d + mu / 2.0) / (d + mu)


def multi_d_kesten_verify(
    profile: RadialProfile,
    spec_b: DensitySpec,
    alpha: float,
    delta: float,
    n_max: int,
    window: float | None = None,
    rungs: int = ladder.DEFAULT_RUNGS,
    folds: list[RadialProfile] | None = None,
    rel_resolution: float = 1e-8,
) -> KestenFit:
    """Fit c2 in a^{*n}(x) <= c2 (1+delta)^n b(|x|)^alpha beyond a stable onset.

    For inverse-polynomial envelopes the power alpha must exceed
    (d + mu/2)/(d + mu); below that the envelope provably cannot absorb the
    middle of the convolution and the request is refused.
    """
    d = profile.dimension
    exponent = effective_poly_exponent(spec_b)
    if exponent is not None:
        mu = exponent - d
        if mu <= 0:
            raise ValueError("polynomial envelope needs decay exponent > d")
        a0 = alpha_threshold_polynomial(d, mu)
        if alpha <= a0:
            raise AlphaTooSmallError(
                f"alpha={alpha} is at or below the admissible threshold {a0:.6f}"
            )
    if not (0.0 < alpha <= 1.0):
        raise ValueError("alpha must lie in (0, 1]")
    if folds is None:
        folds = radial_self_convolve_n(profile, n_max, window=window)

    # probe only where every fold is resolved and edge effects stay small
    r_cap = 0.75 * min(p.hi for p in folds)
    for p in folds:
        vmax = float(p.gf.values.max())
        solid = p.grid()[p.gf.values > rel_resolution * vmax]
        if solid.size:
            r_cap = min(r_cap, float(solid[-1]))
    r_lo = max(4.0 * profile.spacing, profile.hi / 1e4, 1.0)
    s = ladder.geometric_ladder(r_lo, r_cap, rungs)
    lb_alpha = alpha * log_evaluate_array(spec_b, s)
    discounted = []
    for n in range(1, n_max + 1):
        vals = folds[n - 1].value_at(s)
        if np.any(vals <= 0):
            raise UnderResolvedError(f"radial fold {n} vanished inside its window")
        q = np.exp(np.log(vals) - lb_alpha - n * math.log1p(delta))
        discounted.append(q)
    onset = _stability_onset(s, discounted, band=0.1)
    if onset is None:
        s_alpha = float(s[max(s.size - rungs // 3, 0)])
        stabilized = False
        note = "no radius passed the slope-stability test"
    else:
        s_alpha = float(s[onset])
        stabilized = True
        note = ""
    fitted = s > s_alpha * (1.0 - 1e-12)
    residuals = tuple(float(np.max(q[fitted])) for q in discounted)
    return KestenFit(
        delta=delta,
        s_delta=s_alpha,
        c_delta=max(residuals),
        residuals=residuals,
        n_max=n_max,
        alpha=alpha,
        stabilized=stabilized,
        note=note,
        probe=(float(s[0]), float(s[-1]), rungs),
    )


def write_ratio_csv(diags: list[RatioDiagnostic], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("n,s,ratio,predicted_limit\n")
        for d in diags:
            for s, v in d.curve:
                fh.write(f"{d.n},{s:.17g},{v:.17g},{d.predicted_limit:.17g}\n")


def write_kesten_json(fit: KestenFit, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(fit.to_json_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
