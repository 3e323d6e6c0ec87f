"""Finite-difference stencils and derivative matrices on uniform 1-D grids.

Weights come from Fornberg's recurrence, so any (derivative order, accuracy,
offset pattern) combination is available. Grid derivatives are applied as
dense matrices along one axis; the grids here are small enough (<= a few
hundred nodes per axis) that BLAS matmul beats bespoke stencil loops.
"""

from __future__ import annotations

import numpy as np

__all__ = ["fornberg_weights", "derivative_matrix", "apply_along_axis"]


def fornberg_weights(z, x, m):
    """Weights of the m-th derivative at z for nodes x (Fornberg 1988).

    Parameters
    ----------
    z : float
        Evaluation point.
    x : array_like
        Stencil node coordinates (distinct).
    m : int
        Derivative order (0 gives interpolation weights).

    Returns
    -------
    ndarray, shape (len(x),)
        Weights w such that f^(m)(z) ~= sum_j w[j] f(x[j]).
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if m >= n:
        raise ValueError("stencil too short for requested derivative order")
    c = np.zeros((n, m + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = x[0] - z
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def _central_npts(m, acc):
    # smallest symmetric stencil achieving the accuracy
    n = 2 * ((m + 1) // 2) - 1 + acc
    if n % 2 == 0:
        n += 1
    return n


def derivative_matrix(n, h, m, acc=4, periodic=False):
    """Dense n x n matrix of the m-th derivative on a uniform grid.

    Periodic grids use the centered stencil with wrap-around indexing.
    Non-periodic grids keep centered rows in the interior and switch to
    shifted (one-sided) stencils of the same accuracy near the edges.
    """
    if m == 0:
        return np.eye(n)
    npts = _central_npts(m, acc)
    half = npts // 2
    D = np.zeros((n, n))
    if periodic:
        w = fornberg_weights(0.0, np.arange(-half, half + 1) * h, m)
        for off, wk in zip(range(-half, half + 1), w):
            idx = (np.arange(n) + off) % n
            D[np.arange(n), idx] += wk
        return D
    if n < m + acc:
        raise ValueError(f"grid too small ({n} nodes) for order-{m} derivative at accuracy {acc}")
    nside = m + acc  # one-sided stencil length
    for i in range(n):
        if i >= half and i < n - half:
            base = i - half
            w = fornberg_weights(i * h, (base + np.arange(npts)) * h, m)
            D[i, base:base + npts] = w
        else:
            base = 0 if i < half else n - nside
            w = fornberg_weights(i * h, (base + np.arange(nside)) * h, m)
            D[i, base:base + nside] = w
    return D


def apply_along_axis(D, a, axis):
    """Contract matrix D with array a along one axis, preserving layout."""
    out = np.tensordot(D, a, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)
