"""Explicit eigen-pairs of the Laplace and advection-diffusion operators.

Elements are either squares ``K = (x0, x0 + h) x (y0, y0 + h)`` or the right
isosceles triangles A/B that split them (see :mod:`spectral_vms.geometry`).
Triangle modes are evaluated on the reference triangle
``T = {x in (0, 1), y in (0, 1 - x)}`` and carried to physical elements by the
affine maps

    G_A(x, y) = ((x - x0) / h, (y - y0) / h)
    G_B(x, y) = ((x1 - x) / h, (y1 - y) / h).

The advection-diffusion eigenfunctions are ``exp(a.x / 2mu) * W`` with ``W`` a
Dirichlet Laplace eigenfunction, and eigenvalue ``mu * (|a|^2 / 4mu^2 + sigma)``.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .geometry import ElementMetrics, MeshError


class ModeIndex(NamedTuple):
    j: int
    s: int

    def validate(self) -> "ModeIndex":
        if int(self.j) != self.j or int(self.s) != self.s or self.j < 1 or self.s < 1:
            raise ValueError(f"mode indices must be positive integers, got {tuple(self)}")
        return self


class LocalAdvection(NamedTuple):
    """Element data: constant velocity (a1, a2), diffusivity mu, side length h."""

    a1: float
    a2: float
    mu: float
    h: float

    @property
    def speed(self) -> float:
        return float(np.hypot(self.a1, self.a2))

    @property
    def peclets(self) -> tuple[float, float]:
        """Directional grid Peclet numbers h*a_i / (2 mu)."""
        c = self.h / (2.0 * self.mu)
        return self.a1 * c, self.a2 * c

    def validate(self) -> "LocalAdvection":
        if not (self.mu > 0 and self.h > 0):
            raise ValueError("mu and h must be positive")
        return self


def _mode(m) -> ModeIndex:
    return ModeIndex(*m).validate()


def sin_pi(k: int, t):
    """sin(k*pi*t)."""
    return np.sin(k * np.pi * np.asarray(t, dtype=float))


def sin_pi_reflected(k: int, t):
    """sin(k*pi*(1 - t)) computed as (-1)**(k+1) * sin(k*pi*t)."""
    sign = 1.0 if k % 2 == 1 else -1.0
    return sign * sin_pi(k, t)


# ---------------------------------------------------------------- squares

def sigma_square(m, h: float) -> float:
    """Dirichlet Laplace eigenvalue (j pi / h)^2 + (s pi / h)^2 on a square of side h."""
    j, s = _mode(m)
    return (j * np.pi / h) ** 2 + (s * np.pi / h) ** 2


def W_square(m, h: float, x, y):
    """Square-element Laplace eigenfunction in local coordinates.

    ``(x, y)`` are measured from the top-right node of the cell, so the cell is
    ``[-h, 0]^2`` and the function vanishes on its boundary.
    """
    j, s = _mode(m)
    return np.sin(j * np.pi * np.asarray(x, float) / h) * np.sin(s * np.pi * np.asarray(y, float) / h)


# ---------------------------------------------------------------- triangles

def sigma_triangle_ref(m) -> float:
    j, s = _mode(m)
    return np.pi ** 2 * (j * j + s * s)


def W_triangle_ref(m, x, y):
    """Laplace eigenfunction on the reference triangle.

    ``sin(j pi x) sin(s pi y) - sin(s pi (1 - x)) sin(j pi (1 - y))``, with the
    reflected factors evaluated through the argument-reduced identity. The
    function vanishes identically when ``j == s``.
    """
    j, s = _mode(m)
    return sin_pi(j, x) * sin_pi(s, y) - sin_pi_reflected(s, x) * sin_pi_reflected(j, y)


def lambda_ad(m, la: LocalAdvection) -> float:
    """Eigenvalue mu * (|a|^2 / (4 mu^2) + (j pi / h)^2 + (s pi / h)^2).

    The same expression holds for square elements and for A/B triangles.
    """
    j, s = _mode(m)
    la = LocalAdvection(*la).validate()
    speed2 = la.a1 ** 2 + la.a2 ** 2
    return la.mu * (speed2 / (4.0 * la.mu ** 2) + (j * np.pi / la.h) ** 2 + (s * np.pi / la.h) ** 2)


def to_reference(elem: ElementMetrics, x, y):
    """Apply G_A or G_B to physical points of a structured triangle."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    v0 = elem.vertices[0]
    if elem.orientation == "A":
        return (x - v0[0]) / elem.h, (y - v0[1]) / elem.h
    if elem.orientation == "B":
        return (v0[0] - x) / elem.h, (v0[1] - y) / elem.h
    raise MeshError("spectral eigen-pairs are only available on A/B triangles, "
                    f"got orientation {elem.orientation!r}")


def eigenfunction_physical(elem: ElementMetrics, m, la: LocalAdvection, x, y):
    """Advection-diffusion eigenfunction on a structured A or B triangle.

    ``exp(a . (p - c) / (2 mu)) * W_ref(G(p))`` where ``c`` is the lower-left
    corner of the enclosing cell and ``G`` the element's reference map.
    """
    la = LocalAdvection(*la).validate()
    xr, yr = to_reference(elem, x, y)
    c = elem.corner
    expo = (la.a1 * (np.asarray(x, float) - c[0]) + la.a2 * (np.asarray(y, float) - c[1])) / (2 * la.mu)
    return np.exp(expo) * W_triangle_ref(m, xr, yr)


def psi_factor(la: LocalAdvection, x, y):
    """exp(a . x / (2 mu)) for local coordinates x."""
    return np.exp((la.a1 * np.asarray(x, float) + la.a2 * np.asarray(y, float)) / (2 * la.mu))


def weight_p(la: LocalAdvection, x, y):
    """Orthogonality weight exp(-a . x / mu) = psi_factor**-2 in local coordinates."""
    return np.exp(-(la.a1 * np.asarray(x, float) + la.a2 * np.asarray(y, float)) / la.mu)


def z_physical(elem: ElementMetrics, m, la: LocalAdvection, x, y):
    """Normalized eigenfunction (2/h) * omega on a structured triangle."""
    return (2.0 / elem.h) * eigenfunction_physical(elem, m, la, x, y)


def z_reference(m, pe1: float, pe2: float, x, y):
    """Normalized reference eigenfunction 2 exp(pe1 x + pe2 y) W_ref(x, y)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    return 2.0 * np.exp(pe1 * x + pe2 * y) * W_triangle_ref(m, x, y)


def independent_modes(m_max: int) -> list[ModeIndex]:
    """Modes with j < s <= m_max: a linearly independent family.

    W_jj vanishes and W_sj = +/- W_js, so the full index square is redundant.
    """
    return [ModeIndex(j, s) for s in range(1, m_max + 1) for j in range(1, s)]
