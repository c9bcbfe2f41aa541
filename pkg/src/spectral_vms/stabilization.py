"""Stabilization coefficients: spectral tau and the 1D / Codina baselines.

The spectral coefficient on a right isosceles triangle of side ``h`` is

    tau = 8 h^2 / mu * psi(Pe1, Pe2)

    psi = sum_{j<=M1, s<=M2} I-_js * I+_js / (pi^2 (j^2 + s^2) + Pe^2)

with ``I-/+`` the integrals of ``exp(-/+ (Pe1 (x - 1) + Pe2 (y - 1))) W_js`` over
the reference triangle. The ``(x - 1)`` shifts cancel in the product, so the
product is evaluated from the unshifted integrals

    J_js(P) = int_T exp(-P1 x - P2 y) W_js(x, y)

as ``J(P) * J(-P)``. ``J`` is computed with the y-integral in closed form and a
Gauss-Legendre rule in x; the peak exponent ``max(0, -P1, -P2)`` is factored out
and carried separately as a log-scale.
"""

from __future__ import annotations

import io
from typing import NamedTuple, Sequence, TextIO

import numpy as np

from .quadrature import gauss_legendre_01, integrate_composite, integrate_reference
from .spectral import ModeIndex, W_triangle_ref

PE_GUARD = 60.0


class OverflowGuardError(ValueError):
    """Directional Peclet number beyond the supported range of the shifted integrals."""


class PecletPair(NamedTuple):
    pe1: float
    pe2: float

    @property
    def pe(self) -> float:
        return float(np.hypot(self.pe1, self.pe2))


class Truncation(NamedTuple):
    m1: int = 40
    m2: int = 40

    def validate(self) -> "Truncation":
        if int(self.m1) != self.m1 or int(self.m2) != self.m2 or self.m1 < 1 or self.m2 < 1:
            raise ValueError(f"truncation orders must be positive integers, got {tuple(self)}")
        return self


DEFAULT_TRUNCATION = Truncation(40, 40)


def beta(m, h: float, mu: float, pe: float) -> float:
    """Inverse eigenvalue h^2 / (mu (Pe^2 + pi^2 (j^2 + s^2)))."""
    j, s = ModeIndex(*m).validate()
    return h * h / (mu * (pe * pe + np.pi ** 2 * (j * j + s * s)))


# ------------------------------------------------------------ mode integrals

def gauss_order(m: int) -> int:
    return 2 * int(m) + 48


def _inner_sine_integrals(pe2: float, lengths: np.ndarray, m: int) -> np.ndarray:
    """F[s-1, q] = int_0^{L_q} exp(-pe2 y) sin(s pi y) dy, s = 1..m."""
    k = np.pi * np.arange(1, m + 1)[:, None]
    L = lengths[None, :]
    kl = k * L
    em1 = np.expm1(-pe2 * L)
    cos_kl = np.cos(kl)
    sin_kl = np.sin(kl)
    # 1 - exp(-pe2 L) cos(kL), arranged to avoid cancellation for small L
    one_minus = -em1 * cos_kl + 2.0 * np.sin(0.5 * kl) ** 2
    return (k * one_minus - pe2 * (1.0 + em1) * sin_kl) / (pe2 * pe2 + k * k)


def _assemble_modes(G: np.ndarray) -> np.ndarray:
    """J_js = G[j, s] - (-1)^(j+s) G[s, j]  (batched over leading axes)."""
    m = G.shape[-1]
    idx = np.arange(1, m + 1)
    sign = np.where((idx[:, None] + idx[None, :]) % 2 == 0, 1.0, -1.0)
    return G - sign * np.swapaxes(G, -1, -2)


def mode_integrals_batch(pe1: Sequence[float], pe2: float, m: int,
                         n_gauss: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Scaled integrals ``J_js(P) * exp(-scale)`` for many ``Pe1`` at one ``Pe2``.

    Returns
    -------
    J : (p, m, m) array, entry ``[:, j-1, s-1]``
    scale : (p,) array, the factored-out exponent ``max(0, -Pe1, -Pe2)``
    """
    pe1 = np.atleast_1d(np.asarray(pe1, dtype=float))
    pe2 = float(pe2)
    n = gauss_order(m) if n_gauss is None else int(n_gauss)
    x, w = gauss_legendre_01(n)
    scale = np.maximum(0.0, np.maximum(-pe1, -pe2))
    F = _inner_sine_integrals(pe2, 1.0 - x, m)                      # (m, n)
    sx = np.sin(np.pi * np.arange(1, m + 1)[:, None] * x[None, :])  # (m, n)
    ew = w[None, :] * np.exp(-pe1[:, None] * x[None, :] - scale[:, None])  # (p, n)
    A = ew[:, None, :] * sx[None, :, :]                              # (p, m, n)
    G = (A.reshape(-1, n) @ F.T).reshape(len(pe1), m, m)
    return _assemble_modes(G), scale


def mode_integrals(pe1: float, pe2: float, m: int,
                   n_gauss: int | None = None) -> tuple[np.ndarray, float]:
    J, scale = mode_integrals_batch([pe1], pe2, m, n_gauss)
    return J[0], float(scale[0])


def _check_guard(pe1: float, pe2: float) -> None:
    if not (np.isfinite(pe1) and np.isfinite(pe2)):
        raise ValueError("Peclet numbers must be finite")
    if abs(pe1) > PE_GUARD or abs(pe2) > PE_GUARD:
        raise OverflowGuardError(
            f"|Pe| > {PE_GUARD:g} in ({pe1:g}, {pe2:g}): the shifted integrals overflow; "
            "use psi() or integral_product(), which cancel the shifts analytically")


def integral_I(sign: str, m, pe, method: str = "gauss") -> float:
    """Shifted integral ``I-`` (sign '-') or ``I+`` (sign '+') for one mode.

    ``method="gauss"`` uses the semi-analytic route of :func:`mode_integrals`;
    ``method="composite"`` integrates the shifted integrand directly with the
    refined 7-point triangle rule (slower, used for cross-checks).
    """
    j, s = ModeIndex(*m).validate()
    pe1, pe2 = PecletPair(*pe)
    _check_guard(pe1, pe2)
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    if method == "composite":
        sgn = -1.0 if sign == "-" else 1.0

        def integrand(x, y):
            return np.exp(sgn * (pe1 * (x - 1.0) + pe2 * (y - 1.0))) * W_triangle_ref((j, s), x, y)

        # absolute tolerance relative to the integral of |integrand|, so that
        # values small through cancellation are still resolved
        magnitude = float(integrate_composite(lambda x, y: np.abs(integrand(x, y)), 16))
        value, _ = integrate_reference(integrand, rtol=1e-12, atol=1e-14 * magnitude)
        return float(value)
    if method != "gauss":
        raise ValueError(f"unknown method {method!r}")
    mm = max(j, s)
    if sign == "-":
        J, scale = mode_integrals(pe1, pe2, mm)
        return float(J[j - 1, s - 1] * np.exp(scale + pe1 + pe2))
    J, scale = mode_integrals(-pe1, -pe2, mm)
    return float(J[j - 1, s - 1] * np.exp(scale - pe1 - pe2))


def integral_product(m, pe) -> float:
    """``I-_js * I+_js`` without the cancelling shift factors."""
    j, s = ModeIndex(*m).validate()
    pe1, pe2 = PecletPair(*pe)
    mm = max(j, s)
    Jm, sm = mode_integrals(pe1, pe2, mm)
    Jp, sp = mode_integrals(-pe1, -pe2, mm)
    return float(Jm[j - 1, s - 1] * Jp[j - 1, s - 1] * np.exp(sm + sp))


def _mode_weights(tr: Truncation, pe_sq) -> np.ndarray:
    j = np.arange(1, tr.m1 + 1)[:, None]
    s = np.arange(1, tr.m2 + 1)[None, :]
    off = (j != s).astype(float)
    lam = np.pi ** 2 * (j * j + s * s)
    pe_sq = np.asarray(pe_sq, dtype=float)
    return off / (lam + pe_sq[..., None, None])


def psi_batch(pe1: Sequence[float], pe2: float,
              tr: Truncation = DEFAULT_TRUNCATION) -> np.ndarray:
    """psi at ``(pe1[i], pe2)`` for an array of ``pe1``."""
    tr = Truncation(*tr).validate()
    pe1 = np.atleast_1d(np.asarray(pe1, dtype=float))
    if not (np.all(np.isfinite(pe1)) and np.isfinite(pe2)):
        raise ValueError("Peclet numbers must be finite")
    m = max(tr.m1, tr.m2)
    Jm, sm = mode_integrals_batch(pe1, pe2, m)
    Jp, sp = mode_integrals_batch(-pe1, -pe2, m)
    prod = Jm[:, :tr.m1, :tr.m2] * Jp[:, :tr.m1, :tr.m2]
    weights = _mode_weights(tr, pe1 * pe1 + pe2 * pe2)
    total = (prod * weights).reshape(len(pe1), -1).sum(axis=1)
    return total * np.exp(sm + sp)


def psi(pe, tr: Truncation = DEFAULT_TRUNCATION) -> float:
    """Truncated spectral sum psi_{M1,M2}(Pe1, Pe2)."""
    pe1, pe2 = PecletPair(*pe)
    return float(psi_batch([pe1], pe2, tr)[0])


def tau_spectral(h, mu, pe, tr: Truncation = DEFAULT_TRUNCATION):
    """Spectral stabilization coefficient 8 h^2 psi / mu."""
    if np.any(np.asarray(h) <= 0) or np.any(np.asarray(mu) <= 0):
        raise ValueError("h and mu must be positive")
    return 8.0 * np.asarray(h, float) ** 2 / np.asarray(mu, float) * psi(pe, tr)


# ------------------------------------------------------------ baselines

def phi(P):
    """phi(P) = P coth(P) - 1, with a series branch for |P| < 1e-4."""
    P = np.asarray(P, dtype=float)
    small = np.abs(P) < 1e-4
    Ps = np.where(small, 1.0, P)
    out = np.where(small, P * P / 3.0 - P ** 4 / 45.0, Ps / np.tanh(Ps) - 1.0)
    return out if out.ndim else float(out)


def _phi_over_p2(P):
    P = np.asarray(P, dtype=float)
    small = np.abs(P) < 1e-4
    Ps = np.where(small, 1.0, P)
    return np.where(small, 1.0 / 3.0 - P * P / 45.0, (Ps / np.tanh(Ps) - 1.0) / (Ps * Ps))


def tau_gen1d(h, mu, a_norm):
    """(mu / |a|^2) phi(Pe), Pe = h |a| / (2 mu); tends to h^2 / (12 mu) as a -> 0."""
    h = np.asarray(h, float)
    mu = np.asarray(mu, float)
    a = np.abs(np.asarray(a_norm, float))
    if np.any(mu <= 0):
        raise ValueError("mu must be positive")
    pe = h * a / (2.0 * mu)
    out = h * h / (4.0 * mu) * _phi_over_p2(pe)
    return out if out.ndim else float(out)


def tau_1d(h, mu, a):
    """Optimal 1D coefficient for speed ``a``; identical to :func:`tau_gen1d`."""
    return tau_gen1d(h, mu, np.abs(a))


def tau_codina(h, mu, a_norm):
    """((4 mu / h^2)^2 + (2 |a| / h)^2)^(-1/2)."""
    h = np.asarray(h, float)
    mu = np.asarray(mu, float)
    a = np.abs(np.asarray(a_norm, float))
    if np.any((mu == 0) & (a == 0)):
        raise ValueError("Codina coefficient undefined for mu = 0 and |a| = 0")
    out = 1.0 / np.sqrt((4.0 * mu / h ** 2) ** 2 + (2.0 * a / h) ** 2)
    return out if out.ndim else float(out)


# ------------------------------------------------------------ 1D vs 2D comparison

FIG2_HEADER = "P,phi_over_4P,curve_Pe1,curve_Pe2"


def fig2_curves(p_grid: Sequence[float], tr: Truncation = DEFAULT_TRUNCATION) -> np.ndarray:
    """Rows ``(P, phi(P)/(4P), 8P psi(P, 0), 8P psi(0, P))``."""
    P = np.asarray(p_grid, dtype=float)
    if np.any(P <= 0) or np.any(P > PE_GUARD):
        raise ValueError(f"P values must lie in (0, {PE_GUARD:g}]")
    along1 = psi_batch(P, 0.0, tr)
    along2 = np.array([psi((0.0, p), tr) for p in P])
    return np.column_stack([P, phi(P) / (4 * P), 8 * P * along1, 8 * P * along2])


def write_fig2_csv(rows: np.ndarray, stream: TextIO | None = None) -> str:
    out = io.StringIO()
    out.write(FIG2_HEADER + "\n")
    for row in np.asarray(rows):
        out.write(",".join(f"{v:.17g}" for v in row) + "\n")
    text = out.getvalue()
    if stream is not None:
        stream.write(text)
    return text
