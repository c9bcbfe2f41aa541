"""Independent oracle for mode integrals and psi.

Integrates over the reference triangle with a collapsed (Duffy) tensor
Gauss-Legendre rule, x = u, y = (1 - u) v, and sums the truncated series
directly. Shares no code with the package. Run as a script; the printed
values are frozen into the tests.
"""

import mpmath
import numpy as np


def duffy_rule(n):
    t, w = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    u, v = np.meshgrid(t, t, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    return u.ravel(), ((1.0 - u) * v).ravel(), (wu * wv * (1.0 - u)).ravel()


def mode_values(m, x, y):
    k = np.arange(1, m + 1)[:, None]
    sx, sy = np.sin(np.pi * k * x), np.sin(np.pi * k * y)
    rx, ry = np.sin(np.pi * k * (1 - x)), np.sin(np.pi * k * (1 - y))
    # W[j, s] = sin(j pi x) sin(s pi y) - sin(s pi (1-x)) sin(j pi (1-y))
    return sx[:, None, :] * sy[None, :, :] - ry[:, None, :] * rx[None, :, :]


def psi_oracle(p1, p2, m=40, n=320):
    x, y, w = duffy_rule(n)
    W = mode_values(m, x, y)
    Jm = W @ (w * np.exp(-(p1 * x + p2 * y)))
    Jp = W @ (w * np.exp(p1 * x + p2 * y))
    j = np.arange(1, m + 1)[:, None]
    s = np.arange(1, m + 1)[None, :]
    lam = np.pi ** 2 * (j * j + s * s) + p1 * p1 + p2 * p2
    return float(np.sum(np.where(j != s, Jm * Jp / lam, 0.0)))


def i_minus_mp(j, s, p1, p2):
    mpmath.mp.dps = 30
    f = lambda x, y: (mpmath.exp(-p1 * (x - 1) - p2 * (y - 1))
                      * (mpmath.sin(j * mpmath.pi * x) * mpmath.sin(s * mpmath.pi * y)
                         - mpmath.sin(s * mpmath.pi * (1 - x)) * mpmath.sin(j * mpmath.pi * (1 - y))))
    return mpmath.quad(lambda x: mpmath.quad(lambda y: f(x, y), [0, 1 - x]), [0, 1])


if __name__ == "__main__":
    mpmath.mp.dps = 30
    w = (mpmath.sin(mpmath.pi * 0.3) * mpmath.sin(2 * mpmath.pi * 0.2)
         - mpmath.sin(2 * mpmath.pi * 0.7) * mpmath.sin(mpmath.pi * 0.8))
    print("W_12(0.3,0.2) =", mpmath.nstr(w, 17))
    print("I-_12(0,0) =", mpmath.nstr(i_minus_mp(1, 2, 0, 0), 17))
    print("I-_12(-1.5,0.7) =", mpmath.nstr(i_minus_mp(1, 2, -1.5, 0.7), 17))
    for pe in [(0.0, 0.0), (2.18, 6.72), (5.0, 5.0), (5.0, -5.0), (3.0, 1.0)]:
        a, b = psi_oracle(*pe, n=320), psi_oracle(*pe, n=400)
        print(f"psi{pe} = {b!r}  (n=320 vs 400 diff {abs(a - b):.1e})")
    tau = 8 * (1 / 80) ** 2 * psi_oracle(2.18, 6.72, n=400) / 1.0
    print("tau(h=1/80, mu=1, (2.18,6.72)) =", repr(tau))
