import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subexp import (
    BudgetExceededError,
    GridFunction,
    SpacingMismatchError,
    cauchy,
    convolve,
    exponential,
    gaussian,
    normalize_grid,
    polynomial,
    sample,
    self_convolve_n,
)
from subexp.grids import (
    add,
    crop,
    embed,
    fit_tail_model,
    read_grid,
    truncation_deficit_estimate,
    write_grid,
)
from conftest import cauchy_nfold


class TestSample:
    def test_cauchy_window_mass(self):
        f = sample(cauchy(), -500.0, 500.0, 2**16)
        expected = 1.0 - 2.0 / (math.pi * 500.0)  # arctan tail
        assert f.mass() == pytest.approx(expected, rel=1e-5)

    def test_exponential_mass(self):
        # trapezoid-order sampling: error ~ dx^2/12 from the jump at 0
        f = sample(exponential(), 0.0, 50.0, 2**12)
        assert f.mass() == pytest.approx(1.0 - math.exp(-50.0), rel=2e-5)
        fine = sample(exponential(), 0.0, 50.0, 2**16)
        assert fine.mass() == pytest.approx(1.0 - math.exp(-50.0), rel=1e-7)

    def test_pareto_tail_model_exponent(self):
        f = sample(polynomial(2.5), 0.0, 1e4, 2**16)
        assert f.tail_model is not None
        assert f.tail_model.kind == "power"
        assert f.tail_model.index == pytest.approx(2.5, rel=0.01)

    def test_exponential_tail_model(self):
        f = sample(exponential(), 0.0, 50.0, 2**12)
        assert f.tail_model.kind == "exp"
        assert f.tail_model.index == pytest.approx(1.0, rel=1e-3)

    def test_jump_edge_is_halved(self):
        f = sample(exponential(), 0.0, 50.0, 2**10)
        assert "jump-edge-halved" in f.flags
        assert f.values[0] == pytest.approx(0.5)


class TestConvolve:
    def test_gamma_oracle(self):
        f = sample(exponential(), 0.0, 50.0, 2**16)
        g = convolve(f, f)
        s = np.linspace(0.5, 30.0, 120)
        assert np.max(np.abs(g.value_at(s) / (s * np.exp(-s)) - 1.0)) < 5e-6

    def test_cauchy_stability(self):
        f = sample(cauchy(), -2000.0, 2000.0, 2**16 + 1)
        g = convolve(f, f)
        s = np.linspace(-100.0, 100.0, 81)
        assert np.max(np.abs(g.value_at(s) / cauchy_nfold(2, s) - 1.0)) < 1e-3

    def test_near_identity_element(self):
        f = sample(cauchy(), -200.0, 200.0, 2**14 + 1)
        dx = f.spacing
        spike = np.zeros(5)
        spike[2] = 1.0 / dx  # unit-mass approximation of a point mass at 0
        delta = GridFunction(-2 * dx, 2 * dx, spike)
        g = convolve(f, delta)
        s = np.linspace(-100, 100, 200)
        assert np.max(np.abs(g.value_at(s) - f.value_at(s))) < 1e-4

    def test_mass_multiplicativity_tight(self):
        f = sample(cauchy(), -500.0, 500.0, 2**15 + 1)
        g = convolve(f, f)
        assert g.mass() == pytest.approx(f.mass() ** 2, rel=1e-12)

    def test_spacing_mismatch(self):
        f = sample(exponential(), 0.0, 50.0, 2**10)
        g = sample(exponential(), 0.0, 50.0, 2**11)
        with pytest.raises(SpacingMismatchError):
            convolve(f, g)

    def test_even_symmetry_preserved(self):
        f = sample(gaussian(), -20.0, 20.0, 2**12 + 1)
        g = convolve(f, f)
        assert np.max(np.abs(g.values - g.values[::-1])) <= 1e-10 * g.values.max()

    def test_commutativity(self):
        f = sample(cauchy(), -100.0, 100.0, 2**12 + 1)
        g = sample(gaussian(), -100.0, 100.0, 2**12 + 1)
        ab = convolve(f, g)
        ba = convolve(g, f)
        assert np.max(np.abs(ab.values - ba.values)) <= 1e-10 * ab.values.max()


class TestSelfConvolve:
    def test_gamma_family(self):
        f = sample(exponential(), 0.0, 50.0, 2**16)
        folds = self_convolve_n(f, 5)
        s = np.linspace(1.0, 30.0, 200)
        for k in (2, 3, 5):
            exact = s ** (k - 1) * np.exp(-s) / math.factorial(k - 1)
            assert np.max(np.abs(folds[k - 1].value_at(s) / exact - 1.0)) < 1e-5

    def test_single_fold_is_input(self):
        f = sample(exponential(), 0.0, 50.0, 2**10)
        assert self_convolve_n(f, 1) == [f]

    def test_mass_powers(self):
        f = sample(cauchy(), -500.0, 500.0, 2**14 + 1)
        folds = self_convolve_n(f, 6)
        for k, g in enumerate(folds, start=1):
            assert g.mass() == pytest.approx(f.mass() ** k, rel=1e-9 * k + 1e-12)

    def test_window_ledger_and_budget(self):
        f = sample(cauchy(), -500.0, 500.0, 2**14 + 1)
        folds = self_convolve_n(f, 4, window=(-500.0, 500.0), budget=1.0)
        assert all(g.hi <= 500.0 for g in folds)
        assert folds[-1].total_discarded > folds[1].total_discarded > 0.0
        with pytest.raises(BudgetExceededError):
            self_convolve_n(f, 4, window=(-500.0, 500.0), budget=1e-9)

    def test_truncation_ledger_sound_for_cauchy(self):
        # deviation from the closed form at L/2 is within 10x the estimate
        L = 500.0
        f = sample(cauchy(), -L, L, 2**16 + 1)
        g = convolve(f, f)
        s = L / 2.0
        measured = abs(float(g.value_at(s)) - float(cauchy_nfold(2, s)))
        estimate = truncation_deficit_estimate(f, f, s)
        assert measured <= 10.0 * estimate
        assert estimate <= 100.0 * measured  # and not wildly conservative


class TestAlignmentHelpers:
    def test_embed_and_add(self):
        f = sample(exponential(), 0.0, 10.0, 2**8)
        wide = embed(f, 0.0, 20.0 - f.spacing * ((20.0 / f.spacing) % 1))
        assert wide.values[: f.m] == pytest.approx(f.values)
        total = add(f, f)
        assert total.mass() == pytest.approx(2.0 * f.mass(), rel=1e-12)

    def test_crop_records_ledger(self):
        f = sample(cauchy(), -500.0, 500.0, 2**12 + 1)
        c = crop(f, -100.0, 100.0)
        grid_loss = f.mass() - c.mass()
        assert c.step_discarded >= grid_loss * 0.99

    def test_negative_policy_flags(self):
        vals = np.ones(64)
        vals[10] = -0.5
        with pytest.raises(ValueError):
            GridFunction(0.0, 1.0, vals)
        flagged = GridFunction(0.0, 1.0, vals, flags=("negative-excursion",))
        assert flagged.values[10] == -0.5


class TestSerialization:
    def test_csv_round_trip(self, tmp_path):
        f = sample(polynomial(2.5), 0.0, 100.0, 2**10)
        write_grid(f, tmp_path / "grid.csv")
        g = read_grid(tmp_path / "grid.csv")
        assert g.lo == f.lo and g.hi == f.hi and g.m == f.m
        assert np.allclose(g.values, f.values, rtol=0, atol=0)
        assert g.tail_model.index == pytest.approx(f.tail_model.index)

    def test_sidecar_has_ledger(self, tmp_path):
        f = sample(cauchy(), -100.0, 100.0, 2**10 + 1)
        c = crop(convolve(f, f), -100.0, 100.0)
        side = write_grid(c, tmp_path / "conv.csv")
        import json

        doc = json.loads(side.read_text())
        assert doc["ledger"]["total_discarded"] > 0


class TestProperties:
    @given(
        m=st.integers(16, 128),
        lo=st.floats(-10.0, 0.0),
        width=st.floats(1.0, 20.0),
        seed=st.integers(0, 2**31),
    )
    @settings(max_examples=60, deadline=None)
    def test_mass_multiplicativity_random(self, m, lo, width, seed):
        rng = np.random.default_rng(seed)
        f = GridFunction(lo, lo + width, rng.random(m))
        g = GridFunction(lo, lo + width, rng.random(m))
        conv = convolve(f, g)
        assert conv.mass() == pytest.approx(f.mass() * g.mass(), rel=1e-10)

    @given(m=st.integers(16, 64), seed=st.integers(0, 2**31))
    @settings(max_examples=40, deadline=None)
    def test_associativity_random(self, m, seed):
        rng = np.random.default_rng(seed)
        f = GridFunction(0.0, 1.0, rng.random(m))
        g = GridFunction(0.0, 1.0, rng.random(m))
        h = GridFunction(0.0, 1.0, rng.random(m))
        left = convolve(convolve(f, g), h)
        right = convolve(f, convolve(g, h))
        assert np.max(np.abs(left.values - right.values)) <= 1e-10 * left.values.max()

    @given(index=st.floats(1.5, 6.0))
    @settings(max_examples=30, deadline=None)
    def test_tail_model_recovers_power(self, index):
        s = np.geomspace(1.0, 1e4, 400)
        tm = fit_tail_model(s, s**-index)
        assert tm.kind == "power"
        assert tm.index == pytest.approx(index, rel=1e-6)
        # analytic mass beyond agrees with the integral of the model
        assert tm.mass_beyond(1e4) == pytest.approx(
            1e4 ** (1 - index) / (index - 1), rel=1e-6
        )
