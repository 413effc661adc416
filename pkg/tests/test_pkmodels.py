"""Fractional kinetic laws, regimens and compartment models."""

import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from fracdose.errors import MassBalanceError, UnitError
from fracdose.glkernel import discretize_two_comp, simulate_gl
from fracdose.laplace import nilt
from fracdose.pkmodels import (
    AMIODARONE,
    CompartmentModel,
    DoseSchedule,
    Elimination,
    ImpulseTrain,
    PiecewiseConstantInput,
    PowerLawInput,
    Transfer,
    TwoCompParams,
    build_ncomp,
    concentration,
    dose_amounts,
    dose_times,
    input_from_dict,
    one_comp_bolus,
    one_comp_infusion,
    one_comp_powerlaw_infusion,
    rl_to_caputo_correction,
    two_comp_series,
    two_comp_transfer,
    zero_order_frac,
)


class TestOneCompartment:
    def test_zero_order(self):
        assert zero_order_frac(1.0, 1.0, 3.0) == pytest.approx(3.0, rel=1e-15)
        assert zero_order_frac(1.0, 0.5, 1.0) == pytest.approx(1.1283791671, abs=1e-10)
        assert zero_order_frac(2.5, 0.3, 0.0) == 0.0

    def test_bolus(self):
        assert one_comp_bolus(1.0, 1.0, 1.0, 1.0) == pytest.approx(0.3678794412, abs=1e-10)
        assert one_comp_bolus(1.0, 1.0, 0.5, 1.0) == pytest.approx(0.4275835762, abs=1e-10)
        assert one_comp_bolus(2.0, 0.7, 0.4, 0.0) == 2.0

    @pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
    def test_bolus_regimes(self, alpha):
        k = 1.0
        # stretched exponential at short times
        for t in np.geomspace(1e-6, (0.1 / k) ** (1 / alpha), 8):
            se = math.exp(-k * t**alpha / math.gamma(1 + alpha))
            assert one_comp_bolus(1.0, k, alpha, t) == pytest.approx(se, rel=0.05)
        # power-law tail at long times
        for x in (50.0, 200.0, 1000.0):
            t = (x / k) ** (1 / alpha)
            tail = t**-alpha / (k * math.gamma(1 - alpha))
            assert one_comp_bolus(1.0, k, alpha, t) == pytest.approx(tail, rel=0.10)

    def test_infusion(self):
        assert one_comp_infusion(1.0, 1.0, 1.0, 50.0) == pytest.approx(1.0, abs=1e-10)
        for t in (0.3, 2.0, 7.0):
            assert one_comp_infusion(2.0, 0.5, 1.0, t) == pytest.approx(4.0 * (1 - math.exp(-0.5 * t)), rel=1e-12)
        q = one_comp_infusion(1.0, 1.0, 0.5, [10.0, 100.0, 1000.0])
        assert np.all(np.isfinite(q)) and q[0] < q[1] < q[2]
        assert one_comp_infusion(1.0, 1.0, 0.5, 0.0) == 0.0

    def test_powerlaw_infusion_steady_state_at_200(self):
        # the stated 2% band; the exact value below sits 4.0% under sqrt(pi) at t = 200
        assert one_comp_powerlaw_infusion(1.0, 1.0, 0.5, 200.0) == pytest.approx(math.sqrt(math.pi), rel=0.02)

    def test_powerlaw_infusion_closed_form(self):
        # for alpha = 1/2 and k01 = k10f = 1 the solution is sqrt(pi) (1 - e^t erfc(sqrt t))
        for t in (0.5, 3.0, 200.0, 5000.0):
            ref = float(mpmath.sqrt(mpmath.pi) * (1 - mpmath.exp(t) * mpmath.erfc(mpmath.sqrt(t))))
            assert one_comp_powerlaw_infusion(1.0, 1.0, 0.5, t) == pytest.approx(ref, rel=1e-10)
        assert one_comp_powerlaw_infusion(1.0, 1.0, 0.5, 5000.0) == pytest.approx(math.sqrt(math.pi), rel=0.02)

    def test_powerlaw_infusion_limits(self):
        assert one_comp_powerlaw_infusion(1.0, 1.0, 1.0, 60.0) == pytest.approx(1.0, abs=1e-10)
        assert one_comp_powerlaw_infusion(1.0, 1.0, 0.5, 0.0) == 0.0

    def test_negative_time(self):
        with pytest.raises(ValueError):
            one_comp_bolus(1.0, 1.0, 0.5, -1.0)


class TestRegimens:
    def test_dose_times(self):
        t = dose_times(1.0, 1.0, 0.5, 3)
        assert t[0] == pytest.approx(2.25, rel=1e-15)
        assert t[1] == pytest.approx(4.0, rel=1e-15)
        np.testing.assert_array_equal(dose_times(2.0, 0.5, 1.0, 4), [2.5, 3.0, 3.5, 4.0])

    def test_dose_amounts(self):
        q = dose_amounts(1.0, 0.5, 3)
        assert q[0] == pytest.approx(2.0, rel=1e-15)
        assert q[1] == pytest.approx(0.8284271247, abs=1e-10)
        np.testing.assert_array_equal(dose_amounts(3.0, 1.0, 5), np.full(5, 3.0))

    @given(st.floats(0.05, 0.99), st.integers(2, 40))
    @settings(max_examples=40, deadline=None)
    def test_tapering_shape(self, alpha, n):
        gaps = np.diff(np.concatenate([[1.0], dose_times(1.0, 1.0, alpha, n)]))
        assert np.all(np.diff(gaps) > 0)
        assert np.all(np.diff(dose_amounts(1.0, alpha, n)) < 0)

    def test_schedule_validation(self):
        DoseSchedule((1.0, 2.0), (0.5, 0.5))
        with pytest.raises(ValueError):
            DoseSchedule((2.0, 1.0), (0.5, 0.5))
        with pytest.raises(ValueError):
            DoseSchedule((1.0, 2.0), (0.5, 0.0))


class TestHelpers:
    def test_rl_to_caputo(self):
        assert rl_to_caputo_correction(0.0, 0.5, 3.0) == 0.0
        assert rl_to_caputo_correction(1.0, 1.0, 5.0) == pytest.approx(1.0)
        assert rl_to_caputo_correction(2.0, 0.5, 4.0) == pytest.approx(0.5641895835, abs=1e-10)
        with pytest.warns(RuntimeWarning):
            assert math.isinf(rl_to_caputo_correction(1.0, 0.5, 0.0))

    def test_concentration(self):
        assert concentration(4.72, 1.0) == 4.72
        assert concentration(0.0, 3.0) == 0.0
        assert concentration(10.0, 2.0) == 5.0
        with pytest.raises(ValueError):
            concentration(1.0, 0.0)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            TwoCompParams(1.0, 1.0, 1.0, 1.5)
        with pytest.raises(ValueError):
            TwoCompParams(-1.0, 1.0, 1.0, 0.5)
        with pytest.raises(ValueError):
            TwoCompParams(1.0, 1.0, 1.0, 0.5, v=0.0)

    def test_inputs(self):
        pw = PiecewiseConstantInput((0.0, 1.0, 2.0), (1.0, 3.0))
        assert pw.cumulative(1.5) == pytest.approx(2.5)
        assert pw.rate(1.5) == 3.0
        imp = ImpulseTrain((0.5, 1.5), (2.0, 1.0))
        assert imp.cumulative(1.0) == 2.0
        pl = PowerLawInput(1.0, -0.5)
        assert pl.cumulative(4.0) == pytest.approx(4.0)
        assert isinstance(input_from_dict({"kind": "power_law", "k": 1, "exponent": -0.5}), PowerLawInput)
        with pytest.raises(ValueError):
            input_from_dict({"kind": "sinusoid"})


class TestTwoCompartment:
    def test_decoupled_transfer(self):
        p = TwoCompParams(1.0, 0.0, 0.3, 0.6, q10=1.0)
        q1, _ = two_comp_transfer(p)
        assert q1(1.0) == pytest.approx(0.5, rel=1e-14)
        for s in (0.2, 3.0, 1 + 2j):
            assert q1(s) == pytest.approx(1 / (s + 1), rel=1e-13)

    def test_integer_order_denominator(self):
        p = AMIODARONE.with_(alpha=1.0)
        q1, _ = two_comp_transfer(p)
        den = dict((e, c) for c, e in q1.denominator)
        assert set(den) == {2.0, 1.0, 0.0}
        assert den[2.0] == 1.0
        assert den[1.0] == pytest.approx(p.k12 + p.k10 + p.k21f)
        assert den[0.0] == pytest.approx(p.k10 * p.k21f)

    def test_denominator_exponents(self):
        q1, q2 = two_comp_transfer(AMIODARONE)
        a = AMIODARONE.alpha
        assert {e for _, e in q1.denominator} == {a + 1, 1.0, a, 0.0}
        assert q1.denominator == q2.denominator

    def test_initial_value(self):
        q1, _ = two_comp_transfer(AMIODARONE)
        assert nilt(q1, [1e-3])[0] == pytest.approx(AMIODARONE.q10, rel=1e-2)

    def test_series_at_zero(self):
        r = two_comp_series(AMIODARONE, 0.0)
        assert (r.q1, r.q2) == (AMIODARONE.q10, 0.0)

    def test_series_vs_nilt(self):
        r = two_comp_series(AMIODARONE, 1.0)
        f1, f2 = two_comp_transfer(AMIODARONE)
        assert r.q1 == pytest.approx(nilt(f1, [1.0])[0], rel=1e-3)
        assert r.q2 == pytest.approx(nilt(f2, [1.0])[0], rel=1e-3)
        assert not r.diverging

    def test_series_integer_order(self):
        p = AMIODARONE.with_(alpha=1.0)
        a = np.array([[-(p.k10 + p.k12), p.k21f], [p.k12, -p.k21f]])
        ref = expm(0.5 * a) @ np.array([p.q10, 0.0])
        r = two_comp_series(p, 0.5)
        assert r.q1 == pytest.approx(ref[0], abs=1e-6)
        assert r.q2 == pytest.approx(ref[1], abs=1e-6)

    def test_series_divergence_flag(self):
        p = AMIODARONE.with_(k21f=6.0)
        with warnings.catch_warnings(record=True) as rec:
            warnings.simplefilter("always")
            r = two_comp_series(p, 30.0, n_max=25)
        assert r.diverging
        assert any(issubclass(w.category, RuntimeWarning) for w in rec)

    def test_gl_mass_balance(self):
        p = TwoCompParams(0.0, 2.0, 0.8, 0.6, q10=1.0)
        steps = 5000
        tr = simulate_gl(discretize_two_comp(p, 1e-3, steps + 1), [1.0, 0.0], None, steps)
        assert np.max(np.abs(tr.q1 + tr.q2 - 1.0)) < 1e-6


class TestNCompartment:
    def test_two_comp_accepted_and_matches(self):
        m = build_ncomp(CompartmentModel.two_comp(AMIODARONE))
        steps = 500
        _, xs = m.simulate_gl(0.01, steps, nu=200)
        tr = simulate_gl(discretize_two_comp(AMIODARONE, 0.01, 200), [AMIODARONE.q10, 0.0], None, steps)
        np.testing.assert_allclose(xs, tr.states, atol=1e-13)

    def test_mass_balance_violation(self):
        spec = CompartmentModel(2, (Transfer(0, 1, 1.0, 0.5, 0.7),), (), (), (1.0, 0.0))
        with pytest.raises(MassBalanceError, match=r"\(0, 1\)"):
            build_ncomp(spec)

    def test_unit_mismatch(self):
        spec = CompartmentModel(2, (Transfer(0, 1, 1.0, 0.5, 0.5, "1/day"),), (), (), (1.0, 0.0))
        with pytest.raises(UnitError):
            build_ncomp(spec)

    def test_single_compartment_classical(self):
        spec = CompartmentModel(1, (), (Elimination(0, 0.8, 1.0),), (), (2.0,))
        t, xs = build_ncomp(spec).simulate_gl(1e-3, 2000)
        assert np.all(xs[1:, 0] == pytest.approx(2.0 * (1 - 0.8e-3) ** np.arange(1, 2001), rel=1e-12))
        assert xs[-1, 0] == pytest.approx(2.0 * math.exp(-0.8 * 2.0), rel=1e-3)

    def test_closed_three_compartment_mass(self):
        spec = CompartmentModel.from_dict(
            {
                "n": 3,
                "transfers": [
                    {"source": 0, "target": 1, "rate": 1.0, "order": 1.0},
                    {"source": 1, "target": 2, "rate": 0.5, "order": 0.6},
                    {"source": 2, "target": 0, "rate": 0.4, "order": 0.6},
                ],
                "initial": [1.0, 0.0, 0.0],
            }
        )
        _, xs = build_ncomp(spec).simulate_gl(1e-3, 3000)
        assert np.max(np.abs(xs.sum(axis=1) - 1.0)) < 1e-9
