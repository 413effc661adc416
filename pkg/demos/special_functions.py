"""Mittag-Leffler evaluation and the half-order worked example.

The relaxation D^(1/2) q = -q, q(0) = 1 has Laplace transform 1/(s + sqrt(s)) for
its integral form, and the solution e^t erfc(sqrt t) = E_{1/2}(-sqrt t). The script
compares the Mittag-Leffler evaluator, the numerical Laplace inversion and the
erfc closed form.
"""

import math

import numpy as np

from fracdose.laplace import FracTransferFunction, nilt
from fracdose.specialfn import ml1, ml2


def main():
    print("E_alpha(-1) for several orders")
    for a in (0.25, 0.5, 0.75, 1.0):
        r = ml1(a, -1.0)
        print(f"  alpha={a:4.2f}  value={r.value:.15f}  error estimate={r.abs_error_estimate:.1e}")

    print("\nHalf-order relaxation: e^t erfc(sqrt t)")
    f = FracTransferFunction(((1.0, 0.0),), ((1.0, 1.0), (1.0, 0.5)))
    t = np.array([0.1, 0.5, 1.0, 2.0, 5.0, 20.0])
    inv = nilt(f, t)
    print(f"  {'t':>6} {'erfc form':>18} {'E_1/2(-sqrt t)':>18} {'NILT':>18}")
    for ti, v in zip(t, inv):
        exact = math.exp(ti) * math.erfc(math.sqrt(ti))
        print(f"  {ti:6.1f} {exact:18.15f} {ml1(0.5, -math.sqrt(ti)).value:18.15f} {v:18.15f}")

    print("\nPower-law tail of E_{0.6,1.6}(-x) compared with its leading asymptotic term")
    for x in (1.0, 10.0, 100.0, 1000.0):
        lead = 1.0 / (x * math.gamma(1.0))
        print(f"  x={x:7.1f}  E={ml2(0.6, 1.6, -x).value:.6e}  1/(x Gamma(1))={lead:.6e}")


if __name__ == "__main__":
    main()
