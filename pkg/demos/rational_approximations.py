"""Rational approximations of s^alpha: Oustaloup, Matsuda-Fujii and Pade.

Reports the magnitude error in dB along the imaginary axis (Oustaloup) and the
relative error along the positive real axis (Matsuda-Fujii, Pade).
"""

import numpy as np

from fracdose.laplace import matsuda_fujii, oustaloup, pade_s_alpha


def main():
    alpha = 0.5
    h = oustaloup(alpha, 1e-2, 1e2, 4)
    print("Oustaloup, N=4, band [1e-2, 1e2]")
    for w in (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3):
        err = 20 * np.log10(abs(h(1j * w))) - 20 * alpha * np.log10(w)
        print(f"  omega={w:8g}  magnitude error {err:+.3f} dB")

    s = np.logspace(-2, 2, 9)
    m = matsuda_fujii(list(zip(s, s**alpha)))
    dense = np.logspace(-2, 2, 400)
    rel = np.abs(m(dense) - dense**alpha) / dense**alpha
    print(f"\nMatsuda-Fujii, 9 nodes on [1e-2, 1e2]: max relative error {rel.max():.2e}")

    print("\nPade about s0 = 1, max relative error on [0.5, 2]")
    grid = np.linspace(0.5, 2.0, 200)
    for mm, nn in ((1, 1), (2, 2), (3, 3)):
        r = pade_s_alpha(alpha, 1.0, mm, nn)
        print(f"  [{mm}/{nn}]  {np.max(np.abs(r(grid).real - grid**alpha) / grid**alpha):.2e}")


if __name__ == "__main__":
    main()
