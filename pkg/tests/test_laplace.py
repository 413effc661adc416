"""Transfer-function evaluation, numerical Laplace inversion and rational approximations of s^alpha."""

import math

import numpy as np
import pytest

from fracdose.errors import PoleError
from fracdose.laplace import (
    FracTransferFunction,
    RationalTf,
    matsuda_fujii,
    nilt,
    oustaloup,
    oustaloup_frequencies,
    pade_s_alpha,
    tf_eval,
)
from fracdose.pkmodels import TwoCompParams, two_comp_transfer
from fracdose.specialfn import ml2

E_HALF = 0.42758357615580700442  # e erfc(1)


def poly_tf(num, den):
    """FracTransferFunction from ordinary polynomial coefficients (highest degree first)."""
    terms = lambda c: tuple((float(a), float(len(c) - 1 - i)) for i, a in enumerate(c))
    return FracTransferFunction(terms(num), terms(den))


class TestTfEval:
    def test_integrator(self):
        assert tf_eval(FracTransferFunction(((1.0, 0.0),), ((1.0, 1.0),)), 2.0) == pytest.approx(0.5)

    def test_half_order(self):
        f = FracTransferFunction(((1.0, 0.0),), ((1.0, 1.0), (1.0, 0.5)))
        assert tf_eval(f, 1.0) == pytest.approx(0.5, rel=1e-15)

    def test_q1_reduces_to_first_order(self):
        p = TwoCompParams(k10=1.0, k12=0.0, k21f=0.3, alpha=0.6, q10=1.0)
        q1, _ = two_comp_transfer(p)
        assert tf_eval(q1, 1.0) == pytest.approx(0.5, rel=1e-14)
        assert tf_eval(q1, 3.0 + 2.0j) == pytest.approx(1 / (4.0 + 2.0j), rel=1e-14)

    def test_scaling(self):
        f = FracTransferFunction(((2.0, 0.3), (1.0, 0.0)), ((1.0, 1.2), (0.5, 0.4), (3.0, 0.0)))
        s = np.array([0.5 + 1j, 2.0, 7.0 - 3j])
        for c in (-2.5, 0.0, 1e3):
            np.testing.assert_allclose(tf_eval(f.scaled(c), s), c * tf_eval(f, s), rtol=1e-15)

    def test_canonical_form(self):
        f = FracTransferFunction(((1.0, 0.0), (2.0, 0.5), (1.0, 0.0)), ((1.0, 0.0), (1.0, 1.0)))
        assert f.numerator == ((2.0, 0.5), (2.0, 0.0))
        assert f.denominator == ((1.0, 1.0), (1.0, 0.0))

    def test_pole(self):
        f = FracTransferFunction(((1.0, 0.0),), ((1.0, 1.0), (-1.0, 0.0)))
        with pytest.raises(PoleError):
            tf_eval(f, 1.0)

    def test_zero_denominator_rejected(self):
        with pytest.raises(ValueError):
            FracTransferFunction(((1.0, 0.0),), ((1.0, 1.0), (-1.0, 1.0)))

    def test_round_trip_dict(self):
        f = FracTransferFunction(((2.0, 0.3),), ((1.0, 1.2), (3.0, 0.0)), "x")
        assert FracTransferFunction.from_dict(f.to_dict()) == f


class TestNilt:
    def test_step(self):
        f = FracTransferFunction(((1.0, 0.0),), ((1.0, 1.0),))
        assert nilt(f, [1.0])[0] == pytest.approx(1.0, abs=1e-8)

    def test_half_order_erfc(self):
        f = FracTransferFunction(((1.0, 0.0),), ((1.0, 1.0), (1.0, 0.5)))
        assert nilt(f, [1.0])[0] == pytest.approx(0.4275835762, abs=1e-6)
        assert nilt(f, [1.0])[0] == pytest.approx(E_HALF, abs=1e-9)

    def test_two_parameter_pair(self):
        a, k = 0.5, 1.0
        f = FracTransferFunction(((1.0, a - 2.0),), ((1.0, a), (k, 0.0)))
        assert nilt(f, [1.0])[0] == pytest.approx(ml2(a, 2.0, -k).value, abs=1e-6)

    def test_pair_over_time(self):
        # s^(a-1)/(s^a + k) <-> E_a(-k t^a)
        a, k = 0.7, 2.0
        f = FracTransferFunction(((1.0, a - 1.0),), ((1.0, a), (k, 0.0)))
        t = np.array([0.1, 0.5, 2.0, 10.0, 50.0])
        ref = [ml2(a, 1.0, -k * ti**a).value for ti in t]
        np.testing.assert_allclose(nilt(f, t), ref, rtol=1e-8)

    def test_random_rational_round_trip(self):
        rng = np.random.default_rng(2024)
        t = np.linspace(0.1, 10.0, 40)
        for _ in range(20):
            n_real = int(rng.integers(1, 4))
            poles = list(-rng.uniform(0.1, 3.0, n_real))
            res = list(rng.uniform(-2.0, 2.0, n_real))
            if rng.random() < 0.5:
                p = complex(-rng.uniform(0.1, 2.0), rng.uniform(0.2, 3.0))
                r = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
                poles += [p, p.conjugate()]
                res += [r, r.conjugate()]
            poles, res = np.array(poles, dtype=complex), np.array(res, dtype=complex)
            den = np.poly(poles)
            num = sum(r * np.poly(np.delete(poles, i)) for i, r in enumerate(res))
            f = poly_tf(np.atleast_1d(np.real(num)), np.real(den))
            exact = np.real(np.exp(np.outer(t, poles)) @ res)
            np.testing.assert_allclose(nilt(f, t), exact, atol=1e-6)

    def test_error_estimate_and_flags(self):
        f = FracTransferFunction(((1.0, 0.0),), ((1.0, 1.0), (1.0, 0.5)))
        r = nilt(f, [0.5, 1.0, 5.0], full_output=True)
        assert np.all(r.error_estimates < 1e-6)
        assert not np.any(r.reduced_accuracy)

    def test_callable_input(self):
        assert nilt(lambda s: 1.0 / (s + 1.0), [1.0])[0] == pytest.approx(math.exp(-1), abs=1e-10)

    def test_zero_transform(self):
        f = FracTransferFunction((), ((1.0, 1.0),))
        np.testing.assert_array_equal(nilt(f, [1.0, 2.0]), [0.0, 0.0])

    def test_non_positive_time(self):
        with pytest.raises(ValueError):
            nilt(lambda s: 1 / s, [0.0, 1.0])


class TestOustaloup:
    def test_gain_at_centre(self):
        h = oustaloup(0.5, 1e-2, 1e2, 4)
        assert abs(h(1j * 1.0)) == pytest.approx(1.0, rel=0.05)

    @pytest.mark.parametrize("wb, wh", [(1e-2, 1e2), (1.0, 100.0), (1e-1, 1e4)])
    def test_gain_condition(self, wb, wh):
        wu = math.sqrt(wb * wh)
        for a in (0.2, 0.5, 0.8):
            assert abs(oustaloup(a, wb, wh, 3)(1j * wu)) == pytest.approx(wu**a, rel=1e-12)

    def test_first_pole_hand_value(self):
        _, wp = oustaloup_frequencies(0.5, 0.1, 10.0, 1)
        assert wp[0] == pytest.approx(0.1 * 100 ** (0.75 / 3), rel=1e-14)
        assert wp[0] == pytest.approx(0.3162, abs=1e-4)

    def test_log_slope(self):
        for a in (0.3, 0.5, 0.587, 0.9):
            wb, wh = 1e-2, 1e2
            h = oustaloup(a, wb, wh, 4)
            w = np.logspace(math.log10(10 * wb), math.log10(wh / 10), 60)
            slope = np.polyfit(np.log(w), np.log(np.abs(h(1j * w))), 1)[0]
            assert slope == pytest.approx(a, abs=0.05)

    def test_pole_count_and_stability(self):
        h = oustaloup(0.5, 1e-2, 1e2, 4)
        assert len(h.zeros) == len(h.poles) == 9
        assert np.all(h.poles < 0) and np.all(h.zeros < 0)

    @pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
    def test_interlacing(self, alpha):
        # zero-first ordering follows from the zero exponent (1-a)/2 being below the pole exponent (1+a)/2
        wz, wp = oustaloup_frequencies(alpha, 1e-2, 1e2, 4)
        merged = np.empty(2 * len(wz))
        merged[0::2], merged[1::2] = wz, wp
        assert np.all(np.diff(merged) > 0)

    def test_band_edge_degradation(self):
        wb, wh = 1e-2, 1e2
        for a in (0.3, 0.5, 0.8):
            h = oustaloup(a, wb, wh, 4)
            err = lambda w: abs(abs(h(1j * w)) - w**a) / w**a
            wu = math.sqrt(wb * wh)
            assert err(wu) <= err(10 * wb) <= err(wb)

    def test_invalid(self):
        with pytest.raises(ValueError):
            oustaloup(0.5, 10.0, 1.0, 2)
        with pytest.raises(ValueError):
            oustaloup(0.5, 1.0, 10.0, 0)


class TestMatsuda:
    def test_constant(self):
        s = np.logspace(-1, 1, 5)
        m = matsuda_fujii(list(zip(s, np.full(5, 3.0))))
        assert m.coeffs[0] == 3.0 and m.depth == 1
        assert m(0.37) == 3.0

    def test_square_root(self):
        s = np.logspace(-2, 2, 9)
        m = matsuda_fujii(list(zip(s, np.sqrt(s))))
        dense = np.logspace(-2, 2, 2000)
        assert np.max(np.abs(m(dense) - np.sqrt(dense)) / np.sqrt(dense)) <= 0.02

    @pytest.mark.parametrize("depth", [3, 5, 7, 9])
    def test_interpolates_nodes(self, depth):
        s = np.logspace(-2, 2, 9)
        f = s**0.587
        m = matsuda_fujii(list(zip(s, f)), depth=depth)
        np.testing.assert_allclose(m(s[:depth]), f[:depth], rtol=1e-10)

    def test_rational_form_matches_fraction(self):
        s = np.logspace(-2, 2, 9)
        m = matsuda_fujii(list(zip(s, np.sqrt(s))))
        r = m.as_rational()
        w = np.array([0.05, 1.3, 40.0])
        np.testing.assert_allclose(r(w).real, m(w), rtol=1e-8)

    def test_duplicate_nodes(self):
        with pytest.raises(ValueError):
            matsuda_fujii([(1.0, 1.0), (1.0, 2.0)])


class TestPade:
    def test_constant(self):
        r = pade_s_alpha(0.5, 4.0, 0, 0)
        assert r(7.0) == pytest.approx(2.0)

    @pytest.mark.parametrize("m, n", [(1, 1), (2, 2), (3, 2)])
    def test_value_at_centre(self, m, n):
        s0 = 2.5
        assert pade_s_alpha(0.4, s0, m, n)(s0).real == pytest.approx(s0**0.4, rel=1e-12)

    def test_two_two_accuracy(self):
        r = pade_s_alpha(0.5, 1.0, 2, 2)
        s = np.linspace(0.5, 2.0, 400)
        assert np.max(np.abs(r(s).real - np.sqrt(s)) / np.sqrt(s)) < 0.01

    def test_taylor_match(self):
        # error of an [m/n] approximant scales like x^(m+n+1)
        r = pade_s_alpha(0.5, 1.0, 2, 2)
        e1 = abs(r(1.02).real - math.sqrt(1.02))
        e2 = abs(r(1.01).real - math.sqrt(1.01))
        assert e1 / e2 == pytest.approx(2**5, rel=0.1)

    def test_stable_poles(self):
        assert isinstance(pade_s_alpha(0.7, 1.0, 3, 3), RationalTf)

    def test_invalid(self):
        with pytest.raises(ValueError):
            pade_s_alpha(0.5, -1.0, 1, 1)
