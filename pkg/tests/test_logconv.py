import math

import numpy as np
import pytest

from subexp import (
    Domain,
    UnderResolvedError,
    build_folds,
    cauchy,
    exponential,
    gaussian,
    normalize,
    pair_convolve_log,
    polynomial,
    student_t,
    weibull_type,
)
from conftest import cauchy_nfold


@pytest.fixture(scope="module")
def cauchy_folds():
    return build_folds(cauchy(), 5, s_max=1e4, rho=1.0)


class TestClosedFormOracles:
    def test_cauchy_deep_tail(self, cauchy_folds):
        s = np.array([50.0, 300.0, 1e3, 1e4])
        for n in (2, 3, 5):
            got = np.exp(cauchy_folds.log_fold(n, s))
            assert np.max(np.abs(got / cauchy_nfold(n, s) - 1.0)) < 1e-3

    def test_cauchy_ratio_curve_values(self, cauchy_folds):
        # closed form: ratio_n(s) = n (1+s^2) / (n^2+s^2)
        r2 = float(cauchy_folds.ratio(2, np.array([100.0]))[0])
        assert r2 == pytest.approx(2.0 * (1 + 100.0**2) / (4 + 100.0**2), rel=1e-4)
        assert r2 == pytest.approx(1.99940, abs=5e-4)
        r5 = float(cauchy_folds.ratio(5, np.array([300.0]))[0])
        assert r5 == pytest.approx(5.0 * (1 + 300.0**2) / (25 + 300.0**2), rel=1e-4)
        assert r5 == pytest.approx(4.99867, abs=5e-3)

    def test_unit_fold_is_exact(self, cauchy_folds):
        s = np.geomspace(0.1, 1e4, 50)
        assert np.allclose(
            cauchy_folds.ratio(1, s), np.ones(s.size), rtol=1e-14
        )

    def test_gamma_family(self):
        folds = build_folds(exponential(), 4, s_max=200.0, rho=1.0)
        s = np.array([5.0, 50.0, 150.0])
        for n in (2, 3, 4):
            exact = s ** (n - 1) * np.exp(-s) / math.factorial(n - 1)
            got = np.exp(folds.log_fold(n, s))
            assert np.max(np.abs(got / exact - 1.0)) < 1e-4

    def test_bulk_matches_spectral(self, cauchy_folds):
        # inside the solid spectral region both representations agree
        s = np.linspace(5.0, 200.0, 64)
        got = np.exp(cauchy_folds.log_fold(3, s))
        assert np.max(np.abs(got / cauchy_nfold(3, s) - 1.0)) < 2e-3


class TestRefinementStability:
    def test_weibull_psi_step_and_order(self, weibull_normalized):
        base = build_folds(weibull_normalized, 3, s_max=1e5, rho=1.0)
        fine = build_folds(weibull_normalized, 3, s_max=1e5, rho=1.0,
                           psi_step=0.125, gl_order=48)
        s = np.geomspace(1e3, 1e5, 12)
        for n in (2, 3):
            a = base.log_fold(n, s)
            b = fine.log_fold(n, s)
            assert np.max(np.abs(a - b)) < 1e-4

    def test_stitch_gaps_small(self, weibull_normalized):
        fam = build_folds(weibull_normalized, 4, s_max=1e5, rho=1.0)
        assert fam.max_stitch_gap < 0.02
        assert not any(f.startswith("stitch-gap") for f in fam.flags)


class TestSupportHandling:
    def test_halfline_vanishes_left(self):
        folds = build_folds(polynomial(2.5), 2, s_max=1e4, rho=1.0)
        assert np.isneginf(folds.log_fold(2, np.array([-5.0]))[0])

    def test_even_symmetry(self, cauchy_folds):
        s = np.array([25.0, 250.0])
        assert np.allclose(
            cauchy_folds.log_fold(3, s), cauchy_folds.log_fold(3, -s), rtol=1e-12
        )

    def test_shifted_density_refused(self):
        from subexp.densities import Affine
        from dataclasses import replace

        shifted = replace(student_t(1.0), affine=Affine(1.0, 3.0, 1.0))
        with pytest.raises(UnderResolvedError):
            build_folds(shifted, 2, s_max=1e3, rho=1.0)


class TestPairConvolve:
    def test_two_cauchys(self):
        s = np.array([50.0, 500.0])
        got = np.exp(pair_convolve_log(cauchy(), cauchy(), s))
        assert np.max(np.abs(got / cauchy_nfold(2, s) - 1.0)) < 1e-4

    def test_scaled_operand_linearity(self):
        from dataclasses import replace

        c = cauchy()
        c3 = replace(c, scale=c.scale * 3.0)
        s = np.array([80.0])
        one = float(np.exp(pair_convolve_log(c, c, s))[0])
        three = float(np.exp(pair_convolve_log(c, c3, s))[0])
        assert three == pytest.approx(3.0 * one, rel=1e-10)


class TestRatiosConverge:
    def test_weibull_slow_convergence_profile(self, weibull_normalized):
        # the stretched-exponential tail converges like 1/sqrt(s): by 1e6
        # the 5-fold ratio sits within a few percent of its limit
        fam = build_folds(weibull_normalized, 5, s_max=1e6, rho=1.0)
        r5_1e4 = float(fam.ratio(5, np.array([1e4]))[0])
        r5_1e6 = float(fam.ratio(5, np.array([1e6]))[0])
        assert abs(r5_1e4 / 5.0 - 1.0) > 0.08  # still far at 1e4
        assert abs(r5_1e6 / 5.0 - 1.0) < 0.02  # close at 1e6

    def test_exponential_ratio_grows_linearly(self):
        fam = build_folds(exponential(), 2, s_max=300.0, rho=1.0)
        s = np.array([50.0, 100.0, 200.0])
        assert np.allclose(fam.ratio(2, s), s, rtol=1e-6)
