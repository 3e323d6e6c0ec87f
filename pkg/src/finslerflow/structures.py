"""Finsler structures with exact jet evaluators.

Every structure exposes ``f2_jet``: the full mixed-partial table of F^2
(x-order <= 2, y-order <= 4) at one point or a broadcast batch of points.
Analytic entries ship hand-derived formulas; grid-backed structures live in
``bundle`` and obtain the same table from finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from . import jets as J
from .errors import InvalidParams

__all__ = [
    "ChartDomain",
    "FinslerStructure",
    "ConformalStructure",
    "RandersFlatStructure",
    "RiemannianStructure",
    "ScaledStructure",
    "euclidean",
    "round_sphere",
    "rosenau_structure",
    "torus_bump",
    "randers_flat",
]

Bounds = Tuple[Tuple[float, float], Tuple[float, float]]


@dataclass(frozen=True)
class ChartDomain:
    """Active chart: bounds are None for structures defined on all of R^2."""

    bounds: Optional[Bounds] = None
    mode: str = "free"  # 'free' | 'pinned' | 'periodic'

    def contains(self, x1, x2):
        if self.bounds is None or self.mode == "periodic":
            return np.broadcast_to(True, np.broadcast(x1, x2).shape)
        (a1, b1), (a2, b2) = self.bounds
        return (x1 >= a1) & (x1 <= b1) & (x2 >= a2) & (x2 <= b2)


class FinslerStructure:
    """Base class: subclasses implement ``f2_jet``."""

    name: str = "finsler"
    params: dict

    def __init__(self, domain: ChartDomain | None = None):
        self.domain = domain if domain is not None else ChartDomain()
        self.params = {}

    def f2_jet(self, x1, x2, y1, y2):
        raise NotImplementedError

    def nodal_jets(self, grid):
        """Jet tables on every (x1, x2, theta) node of a sphere-bundle grid."""
        X1, X2, C, S = grid.node_mesh()
        return self.f2_jet(X1, X2, C, S)

    def f2(self, x1, x2, y1, y2):
        return self.f2_jet(x1, x2, y1, y2)[(0, 0, 0, 0)]

    def label(self):
        if self.params:
            ps = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
            return f"{self.name}({ps})"
        return self.name


def _riemannian_y_jets(a11, a12, a22, y1, y2):
    """y-jets of a_ij y^i y^j for a y-independent symmetric matrix."""
    return {
        (0, 0): a11 * y1**2 + 2 * a12 * y1 * y2 + a22 * y2**2,
        (1, 0): 2 * (a11 * y1 + a12 * y2),
        (0, 1): 2 * (a12 * y1 + a22 * y2),
        (2, 0): 2 * a11,
        (1, 1): 2 * a12,
        (0, 2): 2 * a22,
    }


class ConformalStructure(FinslerStructure):
    """F^2 = lambda(x) |y|^2 for a positive conformal factor lambda.

    ``lam_jets(x1, x2)`` returns (lam, lam_1, lam_2, lam_11, lam_12, lam_22).
    """

    def __init__(self, name, lam_jets, domain=None, params=None):
        super().__init__(domain)
        self.name = name
        self.params = dict(params or {})
        self._lam_jets = lam_jets

    def lam(self, x1, x2):
        return self._lam_jets(x1, x2)[0]

    def f2_jet(self, x1, x2, y1, y2):
        lam = self._lam_jets(x1, x2)
        lx = {(0, 0): lam[0], (1, 0): lam[1], (0, 1): lam[2],
              (2, 0): lam[3], (1, 1): lam[4], (0, 2): lam[5]}
        ry = {(0, 0): y1**2 + y2**2, (1, 0): 2 * y1, (0, 1): 2 * y2,
              (2, 0): 2.0, (1, 1): 0.0, (0, 2): 2.0}
        out = {}
        for (p, q, m, n) in J.JET_KEYS:
            out[(p, q, m, n)] = lx[(p, q)] * ry[(m, n)] if (m + n) <= 2 else 0.0
        return out


class RiemannianStructure(FinslerStructure):
    """F^2 = a_ij(x) y^i y^j for a general y-independent metric field.

    ``a_jets(x1, x2)`` returns a dict keyed by (p, q) with p + q <= 2; each
    value is the (..., 2, 2) array of that x-derivative of a.
    """

    def __init__(self, name, a_jets, domain=None, params=None):
        super().__init__(domain)
        self.name = name
        self.params = dict(params or {})
        self._a_jets = a_jets

    def metric(self, x1, x2):
        return self._a_jets(x1, x2)[(0, 0)]

    def f2_jet(self, x1, x2, y1, y2):
        ax = self._a_jets(x1, x2)
        out = {}
        for (p, q) in J.X_KEYS:
            a = ax[(p, q)]
            yj = _riemannian_y_jets(a[..., 0, 0], a[..., 0, 1], a[..., 1, 1], y1, y2)
            for (m, n) in J.Y_KEYS:
                out[(p, q, m, n)] = yj[(m, n)] if (m + n) <= 2 else 0.0
        return out


class RandersFlatStructure(FinslerStructure):
    """Locally Minkowski Randers norm F = |y| + b . y with |b| < 1."""

    name = "randers_flat"

    def __init__(self, b1, b2=0.0):
        super().__init__(ChartDomain())
        if math.hypot(b1, b2) >= 1.0:
            raise InvalidParams(f"randers_flat needs |b| < 1, got |b| = {math.hypot(b1, b2):.4g}")
        self.b = (float(b1), float(b2))
        self.params = {"b": b1} if b2 == 0.0 else {"b1": b1, "b2": b2}

    def f2_jet(self, x1, x2, y1, y2):
        b1, b2 = self.b
        beta = {(0, 0): b1 * y1 + b2 * y2, (1, 0): b1, (0, 1): b2}
        r = J.radial_jets(y1, y2)
        shape = np.broadcast(x1, x2, y1, y2).shape
        out = {}
        for (p, q, m, n) in J.JET_KEYS:
            if p + q > 0:
                out[(p, q, m, n)] = 0.0
                continue
            # F^2 = r^2 + 2 beta r + beta^2, differentiated in y only
            val = 0.0
            # r^2 part
            if m + n == 0:
                val = val + y1**2 + y2**2
            elif m + n == 1:
                val = val + (2 * y1 if m else 2 * y2)
            elif (m, n) in ((2, 0), (0, 2)):
                val = val + 2.0
            # beta^2 part
            bmn = {(0, 0): beta[(0, 0)] ** 2,
                   (1, 0): 2 * beta[(0, 0)] * b1, (0, 1): 2 * beta[(0, 0)] * b2,
                   (2, 0): 2 * b1 * b1, (1, 1): 2 * b1 * b2, (0, 2): 2 * b2 * b2}
            if (m, n) in bmn:
                val = val + bmn[(m, n)]
            # 2 beta r part (Leibniz in y)
            for m2 in range(m + 1):
                for n2 in range(n + 1):
                    if m2 + n2 > 1:
                        continue
                    coeff = math.comb(m, m2) * math.comb(n, n2)
                    val = val + 2 * coeff * beta[(m2, n2)] * r[(m - m2, n - n2)]
            out[(p, q, m, n)] = np.broadcast_to(val, shape) if np.ndim(val) == 0 and shape else val
        return out


class ScaledStructure(FinslerStructure):
    """F^2 multiplied by a positive constant (Einstein-scaling snapshots)."""

    def __init__(self, base: FinslerStructure, factor: float):
        super().__init__(base.domain)
        if factor <= 0:
            raise InvalidParams(f"scale factor must be positive, got {factor}")
        self.base = base
        self.factor = float(factor)
        self.name = base.name
        self.params = dict(base.params)

    def f2_jet(self, x1, x2, y1, y2):
        inner = self.base.f2_jet(x1, x2, y1, y2)
        return {k: self.factor * v for k, v in inner.items()}

    def nodal_jets(self, grid):
        inner = self.base.nodal_jets(grid)
        return {k: self.factor * v for k, v in inner.items()}


# ---------------------------------------------------------------------------
# analytic catalog entries


def euclidean():
    def lam_jets(x1, x2):
        one = np.ones(np.broadcast(x1, x2).shape)
        return (one, 0.0, 0.0, 0.0, 0.0, 0.0)

    return ConformalStructure("euclidean", lam_jets)


def round_sphere():
    """Unit 2-sphere in the stereographic chart: lambda = 4 / (1 + |x|^2)^2."""

    def lam_jets(x1, x2):
        Q = 1.0 + x1**2 + x2**2
        lam = 4.0 / Q**2
        l1 = -16.0 * x1 / Q**3
        l2 = -16.0 * x2 / Q**3
        l11 = -16.0 / Q**3 + 96.0 * x1**2 / Q**4
        l22 = -16.0 / Q**3 + 96.0 * x2**2 / Q**4
        l12 = 96.0 * x1 * x2 / Q**4
        return (lam, l1, l2, l11, l12, l22)

    return ConformalStructure("round_sphere", lam_jets,
                              domain=ChartDomain(((-1.0, 1.0), (-1.0, 1.0))))


def rosenau_lambda_jets(t):
    """Conformal-factor jets of the Rosenau metric at time t < 0."""
    A = 8.0 * math.sinh(-t)
    c0 = math.cosh(-t)

    def lam_jets(x1, x2):
        rho = x1**2 + x2**2
        D = 1.0 + 2.0 * c0 * rho + rho**2
        D1 = 4.0 * x1 * (c0 + rho)
        D2 = 4.0 * x2 * (c0 + rho)
        D11 = 4.0 * (c0 + rho) + 8.0 * x1**2
        D22 = 4.0 * (c0 + rho) + 8.0 * x2**2
        D12 = 8.0 * x1 * x2
        lam = A / D
        l1 = -A * D1 / D**2
        l2 = -A * D2 / D**2
        l11 = -A * D11 / D**2 + 2.0 * A * D1 * D1 / D**3
        l22 = -A * D22 / D**2 + 2.0 * A * D2 * D2 / D**3
        l12 = -A * D12 / D**2 + 2.0 * A * D1 * D2 / D**3
        return (lam, l1, l2, l11, l12, l22)

    return lam_jets


def rosenau_structure(t0):
    from .errors import InvalidTime

    if t0 >= 0:
        raise InvalidTime(f"rosenau family is defined for t < 0, got t = {t0}")
    return ConformalStructure(
        "rosenau", rosenau_lambda_jets(t0),
        domain=ChartDomain(((-3.0, 3.0), (-3.0, 3.0))),
        params={"t0": t0},
    )


def torus_bump(eps=0.1):
    """a_ij = (1 + eps cos x1 cos x2) delta_ij on the periodic chart [0, 2pi)^2."""
    if abs(eps) >= 1.0:
        raise InvalidParams(f"torus_bump needs |eps| < 1, got {eps}")

    def lam_jets(x1, x2):
        c1, s1 = np.cos(x1), np.sin(x1)
        c2, s2 = np.cos(x2), np.sin(x2)
        lam = 1.0 + eps * c1 * c2
        return (lam, -eps * s1 * c2, -eps * c1 * s2,
                -eps * c1 * c2, eps * s1 * s2, -eps * c1 * c2)

    return ConformalStructure(
        "torus_bump", lam_jets,
        domain=ChartDomain(((0.0, 2.0 * math.pi), (0.0, 2.0 * math.pi)), mode="periodic"),
        params={"eps": eps},
    )


def randers_flat(b, b2=0.0):
    return RandersFlatStructure(b, b2)
