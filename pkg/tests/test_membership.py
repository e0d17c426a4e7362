import math
from dataclasses import replace

import numpy as np
import pytest

from subexp import (
    Affine,
    HFamily,
    HTooLargeError,
    LeftPart,
    Splice,
    TailMetadata,
    burr,
    cauchy,
    custom,
    default_metadata,
    exponential,
    fractional_exp,
    gaussian,
    levy,
    log_normal_type,
    near_exponential,
    polynomial,
    student_t,
    weibull_type,
)
from subexp.membership import (
    Verdict,
    check_S_delta_condition,
    check_finite_moment,
    check_h_insensitive,
    check_log_equivalence,
    check_long_tailed,
    check_quasi_decreasing,
    check_tail_decreasing,
    check_tail_log_convex,
    check_weak_tail_equivalence,
    classify,
)


class TestLongTailed:
    def test_pareto_type_passes_with_derived_deviation(self):
        res = check_long_tailed(polynomial(2.5), tau_grid=(1.0,), s_max=1e8)
        assert res.verdict is Verdict.PASS
        # measured deviation at the rung nearest 1e4 matches the closed form
        s_ev = np.array([p[0] for p in res.evidence])
        v_ev = np.array([p[1] for p in res.evidence])
        i = int(np.argmin(np.abs(s_ev - 1e4)))
        s0 = s_ev[i]
        exact = abs((2.0 + s0) ** -2.5 / (1.0 + s0) ** -2.5 - 1.0)
        assert v_ev[i] == pytest.approx(exact, rel=1e-9)
        assert exact == pytest.approx(2.5e-4, rel=0.1)

    def test_exponential_fails_flat(self):
        res = check_long_tailed(exponential(), tau_grid=(1.0,))
        assert res.verdict is Verdict.FAIL
        # ratio is e^-1 at every s: deviation constant ~0.632
        assert res.evidence[0][1] == pytest.approx(1.0 - math.exp(-1.0), rel=1e-9)

    def test_zero_shift_trivial(self):
        res = check_long_tailed(cauchy(), tau_grid=(0.0,))
        assert res.verdict is Verdict.PASS


class TestHInsensitive:
    def test_class1_power_scale(self):
        meta = default_metadata(polynomial(2.5))
        res = check_h_insensitive(polynomial(2.5), meta)
        assert res.verdict is Verdict.PASS

    def test_class3_log_scale_is_honest_inconclusive_at_1e8(self):
        spec = fractional_exp(0.5)
        res = check_h_insensitive(spec, default_metadata(spec))
        assert res.verdict is Verdict.INCONCLUSIVE  # converges only near s ~ 1e16

    def test_exponential_fails(self):
        spec = exponential()
        meta = TailMetadata(rho=1.0, delta=0.5, h=HFamily("power", 0.5).with_threshold())
        res = check_h_insensitive(spec, meta)
        assert res.verdict is Verdict.FAIL

    def test_h_too_large_rejected(self):
        oversized = HFamily("custom", fn=lambda s: 0.6 * np.asarray(s), threshold=2.0)
        bad = TailMetadata(rho=1.0, delta=0.5, h=oversized)
        with pytest.raises(HTooLargeError):
            check_h_insensitive(polynomial(2.5), bad)


class TestTailShape:
    def test_tail_log_convex_pareto(self):
        assert check_tail_log_convex(polynomial(2.5), 1.0, 1e6).verdict is Verdict.PASS

    def test_tail_log_convex_weibull(self):
        assert check_tail_log_convex(weibull_type(0.5), 1.0, 1e6).verdict is Verdict.PASS

    def test_bump_fails_with_witness_near_bump(self):
        bump = custom(
            lambda s: np.where(
                np.asarray(s) >= 0,
                -2.5 * np.log1p(np.maximum(s, 0.0)) + np.log1p(np.exp(-(np.asarray(s) - 50.0) ** 2)),
                -np.inf,
            )
        )
        res = check_tail_log_convex(bump, 1.0, 1e6)
        assert res.verdict is Verdict.FAIL
        assert any(abs(s - 50.0) < 20.0 for s, _ in res.evidence)

    def test_gaussian_not_log_convex(self):
        assert check_tail_log_convex(gaussian(), 1.0, 1e4).verdict is Verdict.FAIL

    def test_tail_decreasing(self):
        assert check_tail_decreasing(polynomial(2.5), 1.0).verdict is Verdict.PASS
        res = check_tail_decreasing(levy(1.0), 0.1)  # rho below the mode
        assert res.verdict is Verdict.FAIL


class TestQuasiDecreasing:
    def test_monotone_gives_unit_constant(self):
        entry, k = check_quasi_decreasing(polynomial(2.5), 1.0)
        assert entry.verdict is Verdict.PASS
        assert k == pytest.approx(1.0, abs=1e-9)

    def test_levy_hump(self):
        c = 4.0
        entry, k = check_quasi_decreasing(levy(c), 0.5, s_max=1e6)
        assert entry.verdict is Verdict.PASS
        # ratio maximized from rho to the mode at 2c/3
        exact = math.exp(
            (-1.5 * math.log(2 * c / 3) - c / (2 * c / 3)) - (-1.5 * math.log(0.5) - c / 0.5)
        )
        assert k == pytest.approx(exact, rel=0.02)

    def test_oscillating_bounded_overshoot(self):
        osc = custom(
            lambda s: np.where(
                np.asarray(s) >= 0,
                -2.5 * np.log1p(np.maximum(s, 0.0)) + np.log(2.0 + np.sin(np.asarray(s))),
                -np.inf,
            )
        )
        entry, k = check_quasi_decreasing(osc, 1.0, s_max=1e8)
        assert k == pytest.approx(3.0, rel=0.02)


class TestSDelta:
    def test_pareto_admissible_delta(self):
        meta = TailMetadata(rho=1.0, delta=0.5, h=HFamily("power", 0.7).with_threshold())
        res = check_S_delta_condition(polynomial(2.5), meta)
        assert res.verdict is Verdict.PASS  # gamma*D - 1 = 0.75 > delta

    def test_pareto_inadmissible_delta(self):
        meta = TailMetadata(rho=1.0, delta=0.9, h=HFamily("power", 0.7).with_threshold())
        res = check_S_delta_condition(polynomial(2.5), meta)
        assert res.verdict is Verdict.FAIL

    def test_log_normal_any_delta(self):
        spec = log_normal_type(1.0, 2.0)
        for delta in (0.1, 0.5, 0.9):
            meta = TailMetadata(rho=2.0, delta=delta, h=HFamily("power", 0.5).with_threshold())
            assert check_S_delta_condition(spec, meta).verdict is Verdict.PASS

    def test_near_exponential_needs_the_extended_protocol(self):
        spec = near_exponential(2.0)
        res = check_S_delta_condition(spec, default_metadata(spec))
        assert res.verdict is Verdict.PASS
        assert "crosses" in res.note


class TestFiniteMoment:
    def test_cauchy_first_only(self):
        spec = student_t(1.0)
        assert check_finite_moment(spec, 1, 1.0).verdict is Verdict.PASS
        assert check_finite_moment(spec, 2, 1.0).verdict is Verdict.FAIL

    def test_pareto_type_thresholds(self):
        spec = polynomial(2.5)
        assert check_finite_moment(spec, 2, 1.0).verdict is Verdict.PASS
        assert check_finite_moment(spec, 3, 1.0).verdict is Verdict.FAIL

    @pytest.mark.parametrize("n", [1, 5, 10])
    def test_fractional_exp_all(self, n):
        assert check_finite_moment(fractional_exp(0.5), n, 1.0).verdict is Verdict.PASS


class TestLogEquivalence:
    def test_log_perturbation_equivalent(self):
        b1 = polynomial(2.5)
        b2 = custom(
            lambda s: np.where(
                np.asarray(s) > 1.0,
                3.0 * np.log(np.log(np.maximum(s, 2.0))) - 2.5 * np.log1p(np.maximum(s, 0.0)),
                -np.inf,
            )
        )
        res = check_log_equivalence(b2, b1, rho=4.0)
        assert res.verdict is Verdict.PASS

    def test_polynomial_prefactor_equivalent(self):
        b1 = weibull_type(0.5)
        b2 = weibull_type(0.5, prefactor_D=7.0)
        assert check_log_equivalence(b1, b2, rho=2.0).verdict is Verdict.PASS

    def test_different_powers_fail(self):
        b1 = fractional_exp(0.5)
        b2 = fractional_exp(0.6)
        assert check_log_equivalence(b1, b2, rho=2.0).verdict is Verdict.FAIL

    def test_weak_tail_equivalence(self):
        b1 = polynomial(2.5)
        b2 = replace(polynomial(2.5), scale=3.0)
        assert check_weak_tail_equivalence(b1, b2).verdict is Verdict.PASS
        b3 = polynomial(3.0)
        assert check_weak_tail_equivalence(b1, b3).verdict is Verdict.FAIL


class TestClassify:
    @pytest.fixture(scope="class")
    def table(self):
        out = {}
        for name, spec, d in [
            ("cauchy", cauchy(), 2),
            ("fracexp", fractional_exp(0.5), 5),
            ("nearexp", near_exponential(2.0), 1),
            ("exponential", exponential(), 1),
            ("burr", burr(2.0, 1.0), 3),
        ]:
            out[name] = classify(spec, d=d)
        return out

    def test_cauchy_first_class_only(self, table):
        rep = table["cauchy"]
        assert rep.verdict_for("ClassSn(1)") is Verdict.PASS
        assert rep.verdict_for("ClassSn(2)") is Verdict.FAIL
        assert rep.verdict_for("ClassSTilde(1)" if False else "ClassSTilde(2)") is Verdict.FAIL

    def test_fracexp_every_class(self, table):
        rep = table["fracexp"]
        for n in range(1, 6):
            assert rep.verdict_for(f"ClassSn({n})") is Verdict.PASS
        assert rep.verdict_for("ClassSTilde(5)") is Verdict.PASS

    def test_nearexp_in_core_class(self, table):
        assert table["nearexp"].verdict_for("ClassS") is Verdict.PASS

    def test_exponential_fails_long_tailed(self, table):
        rep = table["exponential"]
        assert rep.verdict_for("LongTailed") is Verdict.FAIL
        assert rep.verdict_for("ClassS") is Verdict.FAIL

    def test_burr_radial_classes(self, table):
        rep = table["burr"]
        assert rep.verdict_for("ClassD(3)") is Verdict.FAIL  # not decreasing at 0
        assert rep.verdict_for("ClassDTilde(3)") is Verdict.FAIL  # vanishes at 0

    def test_cauchy_admissible_envelope(self):
        rep = classify(cauchy(), d=1)
        assert rep.verdict_for("ClassD(1)") is Verdict.PASS
        assert rep.verdict_for("ClassSTilde(1)") is Verdict.PASS

    def test_moment_monotone_consistency(self, table):
        # if S[n] passes, every S[m], m < n passes as well
        for rep in table.values():
            passing = [c.condition for c in rep.checks
                       if c.condition.startswith("ClassSn(") and c.verdict is Verdict.PASS]
            for cond in passing:
                n = int(cond[8:-1])
                for m in range(1, n):
                    assert rep.verdict_for(f"ClassSn({m})") is Verdict.PASS

    def test_every_fail_has_witness(self, table):
        for rep in table.values():
            for c in rep.checks:
                if c.verdict is Verdict.FAIL and c.condition in (
                    "LongTailed", "HInsensitive", "TailDecreasing", "TailLogConvex",
                ):
                    assert len(c.evidence) >= 1

    def test_report_serializes(self, table):
        doc = table["cauchy"].to_json_dict()
        assert all(set(e) == {"condition", "verdict", "evidence", "threshold", "note"}
                   for e in doc)

    def test_convexity_probe_is_seeded(self):
        a = check_tail_log_convex(polynomial(2.5), 1.0, 1e6, seed=7)
        b = check_tail_log_convex(polynomial(2.5), 1.0, 1e6, seed=7)
        assert a.evidence == b.evidence


class TestClosure:
    def test_affine_closure(self):
        base = fractional_exp(0.5)
        for q, r, p in [(0.5, -5.0, 2.0), (2.0, 5.0, 0.5), (1.5, 0.0, 1.0)]:
            spec = replace(base, affine=Affine(q, r, p))
            rep = classify(spec, d=1, s_max=1e10)
            assert rep.verdict_for("ClassS") is Verdict.PASS, (q, r, p)

    def test_splice_closure_preserves_tail_verdicts(self):
        base = polynomial(2.5)
        rep0 = classify(base, d=1)
        for left, val in [(LeftPart.ZERO, 0.0), (LeftPart.CONSTANT, 0.3), (LeftPart.MIRROR, 0.0)]:
            spec = replace(base, splice=Splice(5.0, left, val))
            rep = classify(spec, d=1)
            for cond in ("LongTailed", "TailDecreasing", "TailLogConvex",
                         "SDeltaCondition", "ClassS"):
                assert rep.verdict_for(cond) == rep0.verdict_for(cond), (left, cond)

    def test_power_closure_grid(self):
        base = near_exponential(2.0)
        # the 0.8 power is integrable, so every alpha in [0.85, 1] stays in class
        for alpha in (0.85, 0.9, 0.95, 1.0):
            spec = replace(base, power_alpha=alpha)
            assert classify(spec, d=1, s_max=1e10).verdict_for("ClassS") is Verdict.PASS

    def test_exponential_factor_destroys_long_tail(self):
        damped = custom(
            lambda s: np.where(
                np.asarray(s) >= 0,
                -0.25 * np.asarray(s) - 2.5 * np.log1p(np.maximum(s, 0.0)),
                -np.inf,
            )
        )
        assert check_long_tailed(damped, tau_grid=(1.0,), rho=1.0).verdict is Verdict.FAIL
