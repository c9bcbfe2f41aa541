"""Quadrature rules on the reference triangle and on [0, 1].

The reference triangle is ``{(x, y): x > 0, y > 0, x + y < 1}`` with area 1/2;
all weights below already include that area.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Callable

import numpy as np

_SQRT15 = np.sqrt(15.0)


@lru_cache(maxsize=None)
def triangle_rule(name: str) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(points, weights)`` for a named rule on the reference triangle.

    Parameters
    ----------
    name : str
        ``"centroid"`` (degree 1), ``"interior3"`` (degree 2, interior points),
        ``"midpoint3"`` (degree 2, edge midpoints) or ``"radon7"`` (degree 5).

    Returns
    -------
    points : (q, 2) array
    weights : (q,) array summing to 1/2
    """
    if name == "centroid":
        pts = np.array([[1 / 3, 1 / 3]])
        w = np.array([1.0])
    elif name == "interior3":
        pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
        w = np.full(3, 1 / 3)
    elif name == "midpoint3":
        pts = np.array([[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])
        w = np.full(3, 1 / 3)
    elif name == "radon7":
        a = (6 - _SQRT15) / 21
        b = (6 + _SQRT15) / 21
        wa = (155 - _SQRT15) / 1200
        wb = (155 + _SQRT15) / 1200
        pts = np.array([
            [1 / 3, 1 / 3],
            [a, a], [1 - 2 * a, a], [a, 1 - 2 * a],
            [b, b], [1 - 2 * b, b], [b, 1 - 2 * b],
        ])
        w = np.array([9 / 40, wa, wa, wa, wb, wb, wb])
    else:
        raise ValueError(f"unknown triangle rule {name!r}")
    pts.setflags(write=False)
    w = 0.5 * w
    w.setflags(write=False)
    return pts, w


def _subtriangles(k: int) -> np.ndarray:
    """Vertices of the k**2 congruent sub-triangles of the reference triangle.

    Returns an array of shape (k*k, 3, 2).
    """
    i, j = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
    up = (i + j) <= k - 1
    iu, ju = i[up], j[up]
    upward = np.stack([
        np.stack([iu, ju], -1),
        np.stack([iu + 1, ju], -1),
        np.stack([iu, ju + 1], -1),
    ], axis=1)
    down = (i + j) <= k - 2
    idn, jdn = i[down], j[down]
    downward = np.stack([
        np.stack([idn + 1, jdn + 1], -1),
        np.stack([idn, jdn + 1], -1),
        np.stack([idn + 1, jdn], -1),
    ], axis=1)
    return np.concatenate([upward, downward]).astype(float) / k


@lru_cache(maxsize=16)
def composite_rule(k: int, name: str = "radon7") -> tuple[np.ndarray, np.ndarray]:
    """Composite rule from uniform refinement into ``k**2`` sub-triangles."""
    if k < 1:
        raise ValueError("refinement level k must be >= 1")
    pts, w = triangle_rule(name)
    tri = _subtriangles(k)
    v0 = tri[:, 0, :]
    e1 = tri[:, 1, :] - v0
    e2 = tri[:, 2, :] - v0
    # Sub-triangles all have area 1/(2k^2); downward ones are rotated, not reflected.
    phys = (v0[:, None, :]
            + pts[None, :, 0, None] * e1[:, None, :]
            + pts[None, :, 1, None] * e2[:, None, :])
    points = phys.reshape(-1, 2)
    weights = np.tile(w, tri.shape[0]) / (k * k)
    points.setflags(write=False)
    weights.setflags(write=False)
    return points, weights


def integrate_composite(func: Callable[[np.ndarray, np.ndarray], np.ndarray],
                        k: int, name: str = "radon7",
                        chunk: int = 1 << 18) -> np.ndarray:
    """Integrate ``func(x, y)`` over the reference triangle with a fixed ``k``.

    ``func`` may return extra leading axes; the last axis must match the
    points passed in. Points are processed in chunks to bound memory.
    """
    points, weights = composite_rule(k, name)
    total = None
    for start in range(0, len(weights), chunk):
        p = points[start:start + chunk]
        part = np.asarray(func(p[:, 0], p[:, 1])) @ weights[start:start + chunk]
        total = part if total is None else total + part
    return total


def integrate_reference(func: Callable[[np.ndarray, np.ndarray], np.ndarray],
                        rtol: float = 1e-10, k0: int = 4, kmax: int = 512,
                        atol: float = 0.0) -> tuple[np.ndarray, int]:
    """Adaptive composite integration over the reference triangle.

    ``k`` is doubled from ``k0`` until the relative change drops below
    ``rtol`` (or the absolute change below ``atol``), capped at ``kmax``.

    Returns
    -------
    value : ndarray or float
    k : int
        Refinement level of the returned value.
    """
    k = k0
    prev = cur = integrate_composite(func, k)
    while k < kmax:
        k *= 2
        cur = integrate_composite(func, k)
        change = np.max(np.abs(cur - prev))
        scale = np.max(np.abs(cur))
        if change <= rtol * scale or change <= atol:
            return cur, k
        prev = cur
    return cur, k


@lru_cache(maxsize=32)
def gauss_legendre_01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w
