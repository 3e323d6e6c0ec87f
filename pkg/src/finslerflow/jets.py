"""Mixed-partial jet tables of F^2 and the polar chain rule.

A jet table is a plain dict mapping a multi-index key

    (p, q, m, n)  ->  d^{p+q+m+n} F^2 / dx1^p dx2^q dy1^m dy2^n

to a float or ndarray (values broadcast against each other). Every producer
fills the full envelope p + q <= 2, m + n <= 4, which is exactly what the
curvature pipeline consumes.

For fields sampled on the sphere bundle, y-derivatives are recovered from
theta-derivatives through the exact polar chain rule for f(y) = r^p u(theta):
the closed forms below were generated symbolically once and are used verbatim.
"""

from __future__ import annotations

from math import comb

import numpy as np

__all__ = [
    "JET_KEYS",
    "Y_KEYS",
    "X_KEYS",
    "zero_jet",
    "polar_y_jets",
    "leibniz_product",
    "radial_jets",
]

X_KEYS = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
Y_KEYS = [(m, n) for total in range(5) for m in range(total, -1, -1) for n in [total - m]]
JET_KEYS = [(p, q, m, n) for (p, q) in X_KEYS for (m, n) in Y_KEYS]

# what the curvature pipeline actually reads: y-order 4 is only needed
# without x-derivatives, y-order 3 with at most one
PIPELINE_KEYS = [(p, q, m, n) for (p, q, m, n) in JET_KEYS if m + n <= 4 - (p + q)]


def zero_jet():
    """Jet table of the zero function."""
    return {k: 0.0 for k in JET_KEYS}


def polar_y_jets(p, r, c, s, u):
    """y-jets of f(y) = r**p * u(theta), keyed by (m, n) with m + n <= 4.

    Parameters
    ----------
    p : int
        Radial homogeneity degree, 0 or 2.
    r, c, s : scalar or ndarray
        Radius, cos(theta), sin(theta) of the evaluation direction.
    u : sequence of 5 scalars/ndarrays
        u(theta) and its first four theta-derivatives.
    """
    u0, u1, u2, u3, u4 = u
    jets = {}
    if p == 0:
        r2, r3, r4 = r**2, r**3, r**4
        jets[(0, 0)] = u0 * np.ones_like(c) if np.ndim(c) else u0
        jets[(1, 0)] = -s * u1 / r
        jets[(0, 1)] = c * u1 / r
        jets[(2, 0)] = 2 * c * s * u1 / r2 + u2 * (1 - c**2) / r2
        jets[(1, 1)] = -c * s * u2 / r2 + u1 * (1 - 2 * c**2) / r2
        jets[(0, 2)] = c**2 * u2 / r2 - 2 * c * s * u1 / r2
        jets[(3, 0)] = (-6 * c * s**2 * u2 + u1 * (8 * s**3 - 6 * s) - s**3 * u3) / r3
        jets[(2, 1)] = (c * s**2 * u3 + u1 * (-8 * c * s**2 + 2 * c) + u2 * (-6 * s**3 + 4 * s)) / r3
        jets[(1, 2)] = (-(c**2) * s * u3 + u1 * (8 * c**2 * s - 2 * s) + u2 * (-6 * c**3 + 4 * c)) / r3
        jets[(0, 3)] = (c**3 * u3 - 6 * c**2 * s * u2 + u1 * (-8 * c**3 + 6 * c)) / r3
        jets[(4, 0)] = (
            12 * c * s**3 * u3
            + u1 * (-48 * c * s**3 + 24 * c * s)
            + u2 * (-44 * c**4 + 52 * c**2 - 8)
            + u4 * (c**4 - 2 * c**2 + 1)
        ) / r4
        jets[(3, 1)] = (
            -c * s**3 * u4
            + u1 * (-48 * c**4 + 48 * c**2 - 6)
            + u2 * (44 * c * s**3 - 18 * c * s)
            + u3 * (12 * c**4 - 15 * c**2 + 3)
        ) / r4
        jets[(2, 2)] = (
            u1 * (48 * c * s**3 - 24 * c * s)
            + u2 * (44 * c**4 - 44 * c**2 + 6)
            + u3 * (-12 * c * s**3 + 6 * c * s)
            + u4 * (c**2 - c**4)
        ) / r4
        jets[(1, 3)] = (
            u1 * (48 * c**4 - 48 * c**2 + 6)
            + u2 * (-44 * c * s**3 + 26 * c * s)
            + u3 * (-12 * c**4 + 9 * c**2)
            + u4 * (c * s**3 - c * s)
        ) / r4
        jets[(0, 4)] = (
            c**4 * u4
            + u1 * (-48 * c * s**3 + 24 * c * s)
            + u2 * (-44 * c**4 + 36 * c**2)
            + u3 * (12 * c * s**3 - 12 * c * s)
        ) / r4
        return jets
    if p == 2:
        r2 = r**2
        jets[(0, 0)] = r2 * u0
        jets[(1, 0)] = 2 * c * r * u0 - r * s * u1
        jets[(0, 1)] = c * r * u1 + 2 * r * s * u0
        jets[(2, 0)] = -2 * c * s * u1 + 2 * u0 + u2 * (1 - c**2)
        jets[(1, 1)] = -c * s * u2 + u1 * (2 * c**2 - 1)
        jets[(0, 2)] = c**2 * u2 + 2 * c * s * u1 + 2 * u0
        jets[(3, 0)] = (-4 * s**3 * u1 - s**3 * u3) / r
        jets[(2, 1)] = (4 * c * s**2 * u1 + c * s**2 * u3) / r
        jets[(1, 2)] = (-4 * c**2 * s * u1 - c**2 * s * u3) / r
        jets[(0, 3)] = (4 * c**3 * u1 + c**3 * u3) / r
        jets[(4, 0)] = (16 * c * s**3 * u1 + 4 * c * s**3 * u3 + 4 * s**4 * u2 + s**4 * u4) / r2
        jets[(3, 1)] = (
            u1 * (16 * s**4 - 12 * s**2)
            - 4 * c * s**3 * u2
            + u3 * (4 * s**4 - 3 * s**2)
            - c * s**3 * u4
        ) / r2
        jets[(2, 2)] = (
            4 * c**2 * s**2 * u2
            + c**2 * s**2 * u4
            + u1 * (8 * c**3 * s - 8 * c * s**3)
            + u3 * (2 * c**3 * s - 2 * c * s**3)
        ) / r2
        jets[(1, 3)] = (
            -4 * c**3 * s * u2
            - c**3 * s * u4
            + u1 * (12 * c**2 * s**2 - 4 * c**4)
            + u3 * (3 * c**2 * s**2 - c**4)
        ) / r2
        jets[(0, 4)] = (4 * c**4 * u2 + c**4 * u4 - 16 * c**3 * s * u1 - 4 * c**3 * s * u3) / r2
        return jets
    raise ValueError(f"unsupported radial degree p = {p}")


def _subkeys(key):
    p, q, m, n = key
    out = []
    for p2 in range(p + 1):
        for q2 in range(q + 1):
            for m2 in range(m + 1):
                for n2 in range(n + 1):
                    coeff = comb(p, p2) * comb(q, q2) * comb(m, m2) * comb(n, n2)
                    out.append(((p2, q2, m2, n2), (p - p2, q - q2, m - m2, n - n2), coeff))
    return out


_LEIBNIZ = {key: _subkeys(key) for key in JET_KEYS}


def _is_zero(v):
    return np.ndim(v) == 0 and v == 0.0


def leibniz_product(A, B, keys=None):
    """Jet table of the product A*B from the jet tables of the factors."""
    keys = JET_KEYS if keys is None else keys
    out = {}
    for key in keys:
        acc = None
        for ka, kb, coeff in _LEIBNIZ[key]:
            a, b = A[ka], B[kb]
            if _is_zero(a) or _is_zero(b):
                continue
            term = np.multiply(a, b)
            if coeff != 1:
                term *= coeff
            if acc is None:
                acc = term
            elif acc.shape == term.shape:
                acc += term
            else:
                acc = acc + term
        out[key] = 0.0 if acc is None else acc
    return out


def radial_jets(y1, y2):
    """y-jets of r = |y| up to order 4, keyed by (m, n)."""
    r = np.sqrt(y1**2 + y2**2)
    y = (y1, y2)
    d = lambda i, j: 1.0 if i == j else 0.0
    jets = {(0, 0): r}
    for m, n in Y_KEYS:
        total = m + n
        if total == 0:
            continue
        idx = [0] * m + [1] * n
        if total == 1:
            (i,) = idx
            val = y[i] / r
        elif total == 2:
            i, j = idx
            val = d(i, j) / r - y[i] * y[j] / r**3
        elif total == 3:
            i, j, k = idx
            val = (
                -(d(i, j) * y[k] + d(i, k) * y[j] + d(j, k) * y[i]) / r**3
                + 3 * y[i] * y[j] * y[k] / r**5
            )
        else:
            i, j, k, l = idx
            val = (
                -(d(i, j) * d(k, l) + d(i, k) * d(j, l) + d(j, k) * d(i, l)) / r**3
                + 3
                * (
                    d(i, j) * y[k] * y[l]
                    + d(i, k) * y[j] * y[l]
                    + d(i, l) * y[j] * y[k]
                    + d(j, k) * y[i] * y[l]
                    + d(j, l) * y[i] * y[k]
                    + d(k, l) * y[i] * y[j]
                )
                / r**5
                - 15 * y[i] * y[j] * y[k] * y[l] / r**7
            )
        jets[(m, n)] = val
    return jets
