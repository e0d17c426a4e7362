import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subexp import (
    Affine,
    DensitySpec,
    DivergentError,
    DomainError,
    Domain,
    Family,
    LeftPart,
    NonFiniteError,
    Splice,
    burr,
    cauchy,
    custom,
    default_metadata,
    evaluate,
    evaluate_array,
    exponential,
    fractional_exp,
    gaussian,
    l1_norm,
    levy,
    log_evaluate,
    log_evaluate_array,
    log_normal_type,
    near_exponential,
    normalize,
    pareto,
    polynomial,
    spec_from_json,
    spec_to_dict,
    spec_to_json,
    student_t,
    weibull_type,
)
from subexp.densities import moment_integral


class TestEvaluate:
    def test_pareto_type_pointwise(self):
        assert evaluate(polynomial(2.5), 1.0) == pytest.approx(2.0**-2.5, rel=1e-14)

    def test_pareto_type_exact_identity(self):
        spec = polynomial(2.5)
        s = np.linspace(0.0, 100.0, 301)
        assert np.allclose(evaluate_array(spec, s) * (1.0 + s) ** 2.5, 1.0, rtol=1e-13)

    def test_fractional_exp(self):
        assert evaluate(fractional_exp(0.5), 4.0) == pytest.approx(math.exp(-2.0), rel=1e-14)

    def test_splice_zero_left(self):
        spec = polynomial(2.5, splice=Splice(2.0, LeftPart.ZERO))
        assert evaluate(spec, 1.0) == 0.0
        assert evaluate(spec, 3.0) == pytest.approx(4.0**-2.5, rel=1e-14)

    def test_splice_constant_and_mirror(self):
        const = polynomial(2.5, splice=Splice(2.0, LeftPart.CONSTANT, 0.25))
        assert evaluate(const, 0.5) == 0.25
        mirror = polynomial(2.5, splice=Splice(2.0, LeftPart.MIRROR))
        assert evaluate(mirror, 1.5) == pytest.approx(evaluate(mirror, 2.5), rel=1e-14)

    def test_nonnegative_everywhere(self):
        s = np.linspace(-50, 5000, 800)
        for spec in (cauchy(), levy(2.0), burr(2.0, 1.0), gaussian(), near_exponential(2.0)):
            vals = evaluate_array(spec, s)
            assert np.all(vals >= 0.0) and np.all(np.isfinite(vals))

    def test_positive_beyond_rho(self):
        # strict positivity is a log-space statement: linear evaluation may
        # underflow to 0 while the log value stays finite
        for spec in (polynomial(2.5), levy(1.0), weibull_type(0.5), near_exponential(2.0),
                     log_normal_type(1.0, 2.0), pareto(1.5), student_t(2.0)):
            rho = default_metadata(spec).rho
            s = np.geomspace(rho * 1.01, 1e8, 50)
            assert np.all(np.isfinite(log_evaluate_array(spec, s)))

    def test_overflowing_prefactor_reports(self):
        spec = polynomial(2.5, prefactor_D=-1.0)
        with pytest.raises(NonFiniteError):
            evaluate(spec, 0.0)


class TestLogEvaluate:
    def test_near_exponential_value(self):
        got = log_evaluate(near_exponential(2.0), math.e**4)
        assert got == pytest.approx(-math.e**4 / 16.0, rel=1e-13)

    def test_pareto_type_at_zero(self):
        assert log_evaluate(polynomial(2.5), 0.0) == 0.0

    def test_weibull_layer_sum(self):
        spec = weibull_type(0.5, prefactor_D=-0.5)
        got = log_evaluate(spec, 100.0)
        assert got == pytest.approx(-10.0 - 0.5 * math.log(100.0), rel=1e-13)

    def test_deep_tail_stays_accurate(self):
        # values far below linear underflow remain exact in log space
        spec = weibull_type(0.5)
        assert log_evaluate(spec, 1.0e6) == pytest.approx(-1000.0, rel=1e-13)
        assert evaluate(spec, 1.0e6) == 0.0

    def test_zero_raises_domain_error(self):
        with pytest.raises(DomainError):
            log_evaluate(exponential(), -1.0)


class TestL1Norm:
    def test_exponential_unit(self):
        assert l1_norm(exponential(), Domain.POSITIVE_HALF_LINE) == pytest.approx(1.0, rel=1e-8)

    def test_cauchy_whole_line(self):
        assert l1_norm(cauchy(), Domain.WHOLE_LINE) == pytest.approx(1.0, rel=1e-8)

    def test_pareto_type_closed_form(self):
        got = l1_norm(polynomial(2.5), Domain.POSITIVE_HALF_LINE)
        assert got == pytest.approx(1.0 / 1.5, rel=1e-8)

    def test_levy_closed_form(self):
        # substitute u = c/s: integral is sqrt(pi/c)
        got = l1_norm(levy(4.0), Domain.POSITIVE_HALF_LINE)
        assert got == pytest.approx(math.sqrt(math.pi / 4.0), rel=1e-7)

    def test_divergent_tail_detected(self):
        with pytest.raises(DivergentError):
            l1_norm(polynomial(0.9), Domain.POSITIVE_HALF_LINE)

    def test_divergent_constant_left_whole_line(self):
        spec = polynomial(2.5, splice=Splice(1.0, LeftPart.CONSTANT, 0.5))
        with pytest.raises(DivergentError):
            l1_norm(spec, Domain.WHOLE_LINE)


class TestMoments:
    def test_cauchy_moment_boundary(self):
        spec = student_t(1.0)
        assert math.isfinite(moment_integral(spec, 1, 1.0))
        with pytest.raises(DivergentError):
            moment_integral(spec, 2, 1.0)

    def test_pareto_type_p_series_threshold(self):
        spec = polynomial(2.5)
        assert math.isfinite(moment_integral(spec, 2, 1.0))
        with pytest.raises(DivergentError):
            moment_integral(spec, 3, 1.0)

    @pytest.mark.parametrize("n", [1, 2, 5, 10])
    def test_fractional_exp_all_moments(self, n):
        # closed form against Gamma: int_0^inf s^(n-1) e^(-sqrt(s)) ds = 2 (2n-1)!
        got = moment_integral(fractional_exp(0.5), n, 0.0)
        assert got == pytest.approx(2.0 * math.factorial(2 * n - 1), rel=1e-7)


class TestNormalize:
    def test_pareto_type_half_line(self):
        spec = normalize(polynomial(2.5), Domain.POSITIVE_HALF_LINE)
        s = np.linspace(0, 50, 101)
        assert np.allclose(evaluate_array(spec, s), 1.5 * (1 + s) ** -2.5, rtol=1e-9)
        assert evaluate(spec, -1.0) == 0.0

    def test_idempotent(self):
        once = normalize(cauchy(), Domain.WHOLE_LINE)
        twice = normalize(once, Domain.WHOLE_LINE)
        s = np.linspace(-500, 500, 1000)
        assert np.allclose(evaluate_array(once, s), evaluate_array(twice, s), rtol=1e-12)

    def test_zero_density_divergent(self):
        dead = custom(lambda s: np.full(np.shape(s), -np.inf))
        with pytest.raises(DivergentError):
            normalize(dead, Domain.POSITIVE_HALF_LINE)


class TestMetadata:
    def test_near_exponential_rho(self):
        meta = default_metadata(near_exponential(2.0))
        assert meta.rho == pytest.approx(math.exp(3.0))

    def test_h_threshold_recorded(self):
        meta = default_metadata(fractional_exp(0.5))
        # (log s)^4 < s/2 fails around s ~ 2e4; the threshold must clear it
        s = np.geomspace(meta.h.threshold, 1e9, 200)
        assert np.all(meta.h(s) < s / 2.0)

    def test_custom_needs_explicit_metadata(self):
        with pytest.raises(ValueError):
            default_metadata(custom(lambda s: -np.abs(s)))


class TestSerialization:
    def test_round_trip(self):
        spec = polynomial(
            2.5,
            splice=Splice(2.0, LeftPart.CONSTANT, 0.1),
            affine=Affine(2.0, -1.0, 3.0),
            power_alpha=0.9,
            prefactor_D=0.5,
        )
        again = spec_from_json(spec_to_json(spec))
        assert again == spec

    def test_field_names_contract(self):
        doc = spec_to_dict(cauchy())
        assert set(doc) == {"family", "params", "splice", "affine", "alpha",
                            "prefactor_D", "scale"}
        assert doc["affine"] == {"q_scale": 1.0, "r_shift": 0.0, "prefactor": 1.0}

    def test_custom_refuses_to_serialize(self):
        with pytest.raises(ValueError):
            spec_to_dict(custom(lambda s: -np.abs(s)))


_FAMILY_STRATEGY = st.sampled_from(
    [
        lambda p: polynomial(1.5 + 3.0 * p),
        lambda p: student_t(0.75 + 2.0 * p),
        lambda p: fractional_exp(0.2 + 0.7 * p),
        lambda p: near_exponential(1.2 + 2.0 * p),
        lambda p: log_normal_type(0.5 + p, 1.5 + p),
        lambda p: exponential(0.5 + p),
        lambda p: burr(1.0 + p, 0.5 + p),
    ]
)


class TestProperties:
    @given(mk=_FAMILY_STRATEGY, p=st.floats(0, 1), s=st.floats(0.1, 1e6))
    @settings(max_examples=150, deadline=None)
    def test_exp_log_consistency(self, mk, p, s):
        spec = mk(p)
        lv = float(log_evaluate_array(spec, s)[0])
        v = evaluate(spec, s)
        if lv > -700.0:
            assert v == pytest.approx(math.exp(lv), rel=1e-12)
        else:
            assert v == 0.0

    @given(mk=_FAMILY_STRATEGY, p=st.floats(0, 1), s=st.floats(-10, 1e5))
    @settings(max_examples=100, deadline=None)
    def test_identity_layers_are_identity(self, mk, p, s):
        base = mk(p)
        dressed = DensitySpec(
            base.family, dict(base.params),
            affine=Affine(1.0, 0.0, 1.0), power_alpha=1.0, prefactor_D=0.0,
        )
        assert evaluate(dressed, s) == evaluate(base, s)

    @given(mk=_FAMILY_STRATEGY, p=st.floats(0, 1))
    @settings(max_examples=50, deadline=None)
    def test_json_round_trip(self, mk, p):
        spec = mk(p)
        assert spec_from_json(spec_to_json(spec)) == spec

    @given(D=st.floats(1.3, 6.0), n=st.integers(1, 5))
    @settings(max_examples=40, deadline=None)
    def test_moment_nesting(self, D, n):
        # if the n-th tail moment converges, so does every lower one
        spec = polynomial(D)

        def converges(k):
            try:
                moment_integral(spec, k, 1.0)
                return True
            except DivergentError:
                return False

        if converges(n):
            assert all(converges(m) for m in range(1, n))
