"""Pointwise Finsler-surface geometry from jets of F^2.

One vectorized pipeline produces every quantity: fundamental tensor, Cartan
tensor, geodesic spray, nonlinear connection, formal Christoffel symbols,
Chern connection, hh-curvature, reduced curvature and the Ricci scalar.
Batch shapes broadcast through, so the same code serves single-point queries
and whole sphere-bundle grids.

Internally all tensor indices are unrolled as nested python lists of batch
arrays (a 2x2 contraction is two fused array operations); numpy's general
einsum is far slower at these tiny tensor ranks. Public arrays carry the
tensor indices on the trailing axes:

    g[..., i, j]          fundamental tensor
    C[..., i, j, k]       Cartan tensor  dg_ij / dy^k
    G[..., i]             spray coefficients
    N[..., j, i]          nonlinear connection N^j_i = 1/2 dG^j/dy^i
    Gamma[..., i, j, k]   Chern connection Gamma^i_jk
    Rhh[..., j, i, k, l]  hh-curvature R_j^i_kl
    R[..., i, k]          reduced curvature R^i_k
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateMetric, ZeroVector

__all__ = [
    "GeometryField",
    "GeometryJet",
    "geometry_field",
    "geometry_jet",
    "eval_F",
    "metric_tensor",
    "cartan_tensor",
    "spray_coefficients",
    "nonlinear_connection",
    "chern_connection",
    "chern_hh_curvature",
    "reduced_curvature",
    "ricci_scalar",
    "cartan_symmetry_residual",
]

DEGENERACY_TOL = 1e-12

_I2 = (0, 1)


def _ykey(*idxs):
    return (sum(1 for i in idxs if i == 0), sum(1 for i in idxs if i == 1))


def _pack(nested, levels):
    """Nested index-first lists -> ndarray with indices on trailing axes."""
    a = np.array(nested)
    return np.moveaxis(a, tuple(range(levels)), tuple(range(-levels, 0)))


_PACKED = {"g": 2, "ginv": 2, "C": 3, "G": 1, "dG_dx": 2, "dG_dy": 2,
           "d2G_yy": 3, "d2G_xy": 3, "N": 2, "R": 2, "gamma": 3, "Gamma": 3,
           "Rhh": 4}


class GeometryField:
    """All geometric quantities over a broadcast batch of (x, y) points.

    Scalar fields (F2, F, Ric, det_g, min_eig_g) are plain arrays. Tensor
    fields are packed into trailing-index ndarrays on first attribute access;
    ``lists(name)`` hands out the raw index-first nested lists for hot loops.
    """

    def __init__(self, scalars, nested):
        self.__dict__.update(scalars)
        self._nested = nested

    def lists(self, name):
        return self._nested[name]

    def __getattr__(self, name):
        nested = self.__dict__.get("_nested", {})
        if name in nested:
            if nested[name] is None:
                raise AttributeError(f"{name} needs connection=True")
            val = _pack(nested[name], _PACKED[name])
            self.__dict__[name] = val
            return val
        raise AttributeError(name)


def geometry_field(T, y1, y2, *, connection=False, check=True,
                   degeneracy_tol=DEGENERACY_TOL):
    """Run the full pipeline on a jet table T at direction (y1, y2).

    Parameters
    ----------
    T : dict
        Jet table of F^2 (see ``jets``), values broadcastable to a batch.
    y1, y2 : scalar or ndarray
        Fiber coordinates of the evaluation direction(s).
    connection : bool
        Also produce formal Christoffel symbols, the Chern connection and
        the hh-curvature tensor (needs the same jets, more algebra).
    check : bool
        Raise ``DegenerateMetric`` when min-eig(g) <= degeneracy_tol.
    """
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    shape = np.broadcast(y1, y2, np.asarray(T[(0, 0, 0, 0)])).shape

    def Jt(xi, yi):
        key = _ykey(*xi) + _ykey(*yi)
        return np.broadcast_to(np.asarray(T[key], dtype=float), shape)

    y = [np.broadcast_to(y1, shape), np.broadcast_to(y2, shape)]

    F2 = Jt((), ())
    if check and not np.all(F2 > 0):
        raise ZeroVector("F^2 must be positive away from y = 0")
    F = np.sqrt(F2)

    def sym2(f):
        d = {}
        out = [[None, None], [None, None]]
        for i in _I2:
            for j in _I2:
                k = tuple(sorted((i, j)))
                if k not in d:
                    d[k] = f(*k)
                out[i][j] = d[k]
        return out

    def symn(f, n):
        d = {}

        def build(prefix):
            if len(prefix) == n:
                k = tuple(sorted(prefix))
                if k not in d:
                    d[k] = f(*k)
                return d[k]
            return [build(prefix + (i,)) for i in _I2]

        return build(())

    g = sym2(lambda i, j: 0.5 * Jt((), (i, j)))
    det_g = g[0][0] * g[1][1] - g[0][1] * g[0][1]
    tr_g = g[0][0] + g[1][1]
    disc = np.sqrt(np.maximum(tr_g**2 - 4.0 * det_g, 0.0))
    min_eig = 0.5 * (tr_g - disc)
    if check and np.any(min_eig <= degeneracy_tol):
        idx = np.unravel_index(np.argmin(min_eig), shape) if shape else None
        raise DegenerateMetric(min_eig.min() if shape else float(min_eig), where=idx)

    inv_det = 1.0 / det_g
    ginv = [[g[1][1] * inv_det, -g[0][1] * inv_det],
            [-g[0][1] * inv_det, g[0][0] * inv_det]]

    # metric jets: C totally symmetric, d2g_yy symmetric in all four slots
    C = symn(lambda i, j, k: 0.5 * Jt((), (i, j, k)), 3)
    d2g_yy = symn(lambda i, j, k, l: 0.5 * Jt((), (i, j, k, l)), 4)
    dg_x = [[[0.5 * Jt((k,), tuple(sorted((i, j)))) for k in _I2] for j in _I2] for i in _I2]
    d2g_xy = [[[[0.5 * Jt((k,), tuple(sorted((i, j, l)))) for l in _I2] for k in _I2]
               for j in _I2] for i in _I2]
    d2g_xx = [[[[0.5 * Jt((k, m), tuple(sorted((i, j)))) for m in _I2] for k in _I2]
               for j in _I2] for i in _I2]

    # spray source A_h = (d^2 F^2 / dy^h dx^j) y^j - d F^2 / dx^h
    A = [sum(Jt((j,), (h,)) * y[j] for j in _I2) - Jt((h,), ()) for h in _I2]
    dA_y = [[sum(Jt((j,), (h, k)) * y[j] for j in _I2)
             + Jt((k,), (h,)) - Jt((h,), (k,)) for k in _I2] for h in _I2]
    d2A_yy = [[[sum(Jt((j,), (h, k, l)) * y[j] for j in _I2)
                + Jt((l,), (h, k)) + Jt((k,), (h, l))
                - Jt((h,), (k, l)) for l in _I2] for k in _I2] for h in _I2]
    dA_x = [[sum(Jt((j, k), (h,)) * y[j] for j in _I2) - Jt((h, k), ())
             for k in _I2] for h in _I2]
    d2A_xy = [[[sum(Jt((j, k), (h, l)) * y[j] for j in _I2)
                + Jt((k, l), (h,)) - Jt((h, k), (l,))
                for l in _I2] for k in _I2] for h in _I2]

    def contract_ginv(V):
        # [i][...] = sum_h ginv[i][h] V[h][...], for V a list over the first slot
        return [[sum(ginv[i][h] * V[h][k] for h in _I2) for k in _I2] for i in _I2]

    # derivative recursion: dG_z = ginv (dA_z/4 - (d_z g) G),
    # d2G_ab = ginv (d2A_ab/4 - (d_a g) dG_b - (d_b g) dG_a - (d_ab g) G)
    G = [0.25 * sum(ginv[i][h] * A[h] for h in _I2) for i in _I2]
    dG_dy = contract_ginv(
        [[0.25 * dA_y[h][k] - sum(C[h][m][k] * G[m] for m in _I2) for k in _I2]
         for h in _I2])
    dG_dx = contract_ginv(
        [[0.25 * dA_x[h][k] - sum(dg_x[h][m][k] * G[m] for m in _I2) for k in _I2]
         for h in _I2])

    def sym_pair(f):
        vals = {}
        out = [[None, None], [None, None]]
        for k in _I2:
            for l in _I2:
                kk = tuple(sorted((k, l)))
                if kk not in vals:
                    vals[kk] = f(*kk)
                out[k][l] = vals[kk]
        return out

    d2G_yy = [None, None]
    inner_yy = [sym_pair(lambda k, l, h=h: 0.25 * d2A_yy[h][k][l]
                         - sum(C[h][m][k] * dG_dy[m][l] + C[h][m][l] * dG_dy[m][k]
                               + d2g_yy[h][m][k][l] * G[m] for m in _I2))
                for h in _I2]
    for i in _I2:
        d2G_yy[i] = sym_pair(lambda k, l, i=i: sum(ginv[i][h] * inner_yy[h][k][l]
                                                   for h in _I2))
    inner_xy = [[[0.25 * d2A_xy[h][k][l]
                  - sum(dg_x[h][m][k] * dG_dy[m][l] + C[h][m][l] * dG_dx[m][k]
                        + d2g_xy[h][m][k][l] * G[m] for m in _I2)
                  for l in _I2] for k in _I2] for h in _I2]
    d2G_xy = [[[sum(ginv[i][h] * inner_xy[h][k][l] for h in _I2)
                for l in _I2] for k in _I2] for i in _I2]  # [i][xk][yl]

    N = [[0.5 * dG_dy[j][i] for i in _I2] for j in _I2]  # N[j][i] = N^j_i

    # reduced curvature: entirely x/y-derivatives of the spray
    R = [[(2.0 * dG_dx[i][k]
           - sum(d2G_xy[i][j][k] * y[j] for j in _I2)
           + 2.0 * sum(G[j] * d2G_yy[i][j][k] for j in _I2)
           - sum(dG_dy[i][j] * dG_dy[j][k] for j in _I2)) / F2
          for k in _I2] for i in _I2]
    Ric = R[0][0] + R[1][1]

    scalars = dict(F2=F2, F=F, det_g=det_g, min_eig_g=min_eig, Ric=Ric)
    nested = dict(g=g, ginv=ginv, C=C, G=G, dG_dx=dG_dx, dG_dy=dG_dy,
                  d2G_yy=d2G_yy, d2G_xy=d2G_xy, N=N, R=R,
                  gamma=None, Gamma=None, Rhh=None)
    if not connection:
        return GeometryField(scalars, nested)

    def mat_sandwich(d):
        # -ginv (d_z g) ginv for a direction-indexed metric derivative d[i][j][z]
        out = [[[None, None], [None, None]], [[None, None], [None, None]]]
        for z in _I2:
            h = [[sum(ginv[i][a] * d[a][j][z] for a in _I2) for j in _I2] for i in _I2]
            for i in _I2:
                for j in _I2:
                    out[i][j][z] = out[j][i][z] if j < i else \
                        -sum(h[i][a] * ginv[a][j] for a in _I2)
        return out

    dginv_y = mat_sandwich(C)       # [i][j][k] = d g^{ij} / dy^k
    dginv_x = mat_sandwich(dg_x)

    # formal Christoffel symbols (plain x-derivatives)
    gamma = [[[0.5 * sum(ginv[i][h] * (dg_x[h][k][j] + dg_x[j][h][k] - dg_x[j][k][h])
                         for h in _I2) for k in _I2] for j in _I2] for i in _I2]

    # delta-derivative of g and the Chern connection
    delta_g = [[[dg_x[i][j][k] - sum(N[m][k] * C[i][j][m] for m in _I2)
                 for k in _I2] for j in _I2] for i in _I2]
    combo = [[[delta_g[h][k][j] + delta_g[j][h][k] - delta_g[j][k][h]
               for k in _I2] for h in _I2] for j in _I2]  # combo[j][h][k]
    Gamma = [[[0.5 * sum(ginv[i][h] * combo[j][h][k] for h in _I2)
               for k in _I2] for j in _I2] for i in _I2]

    dN_x = [[[0.5 * d2G_xy[j][k][i] for k in _I2] for i in _I2] for j in _I2]  # [j][i][k]
    dN_y = [[[0.5 * d2G_yy[j][i][k] for k in _I2] for i in _I2] for j in _I2]

    d_delta_g_x = [[[[d2g_xx[i][j][k][m]
                      - sum(dN_x[s][k][m] * C[i][j][s] + N[s][k] * d2g_xy[i][j][m][s]
                            for s in _I2)
                      for m in _I2] for k in _I2] for j in _I2] for i in _I2]
    d_delta_g_y = [[[[d2g_xy[i][j][k][m]
                      - sum(dN_y[s][k][m] * C[i][j][s] + N[s][k] * d2g_yy[i][j][s][m]
                            for s in _I2)
                      for m in _I2] for k in _I2] for j in _I2] for i in _I2]

    def dGamma(dginv_z, d_delta_g_z):
        dcombo = [[[[d_delta_g_z[h][k][j][m] + d_delta_g_z[j][h][k][m]
                     - d_delta_g_z[j][k][h][m] for m in _I2]
                    for k in _I2] for h in _I2] for j in _I2]
        return [[[[0.5 * sum(dginv_z[i][h][m] * combo[j][h][k]
                             + ginv[i][h] * dcombo[j][h][k][m] for h in _I2)
                   for m in _I2] for k in _I2] for j in _I2] for i in _I2]

    dGamma_x = dGamma(dginv_x, d_delta_g_x)  # [i][j][k][m] = dGamma^i_jk / dx^m
    dGamma_y = dGamma(dginv_y, d_delta_g_y)

    delta_Gamma = [[[[dGamma_x[i][j][l][k] - sum(N[m][k] * dGamma_y[i][j][l][m] for m in _I2)
                      for k in _I2] for l in _I2] for j in _I2] for i in _I2]
    # delta_Gamma[i][j][l][k] = delta_k Gamma^i_jl
    Rhh = [[[[delta_Gamma[i][j][l][k] - delta_Gamma[i][j][k][l]
              + sum(Gamma[i][h][k] * Gamma[h][j][l] - Gamma[i][h][l] * Gamma[h][j][k]
                    for h in _I2)
              for l in _I2] for k in _I2] for i in _I2] for j in _I2]

    nested.update(gamma=gamma, Gamma=Gamma, Rhh=Rhh)
    return GeometryField(scalars, nested)


# ---------------------------------------------------------------------------
# single-point API


@dataclass
class GeometryJet:
    """Every pointwise quantity of a Finsler surface at one (x, y)."""

    F: float
    l: np.ndarray
    g: np.ndarray
    ginv: np.ndarray
    C: np.ndarray
    G: np.ndarray
    N: np.ndarray
    gamma: np.ndarray
    Gamma: np.ndarray
    R: np.ndarray
    Ric: float


def _check_inputs(structure, x, y):
    x1, x2 = float(x[0]), float(x[1])
    y1, y2 = float(y[0]), float(y[1])
    if y1 == 0.0 and y2 == 0.0:
        raise ZeroVector("direction y must be nonzero")
    if structure.domain.mode == "pinned" and not bool(structure.domain.contains(x1, x2)):
        from .errors import OutOfChart

        raise OutOfChart(f"x = ({x1:.6g}, {x2:.6g}) outside chart bounds {structure.domain.bounds}")
    return x1, x2, y1, y2


def geometry_jet(structure, x, y) -> GeometryJet:
    """Full GeometryJet of a structure at chart point x and direction y."""
    x1, x2, y1, y2 = _check_inputs(structure, x, y)
    T = structure.f2_jet(x1, x2, y1, y2)
    out = geometry_field(T, y1, y2, connection=True)
    F = float(out.F)
    return GeometryJet(
        F=F,
        l=np.array([y1, y2]) / F,
        g=np.asarray(out.g),
        ginv=np.asarray(out.ginv),
        C=np.asarray(out.C),
        G=np.asarray(out.G),
        N=np.asarray(out.N),
        gamma=np.asarray(out.gamma),
        Gamma=np.asarray(out.Gamma),
        R=np.asarray(out.R),
        Ric=float(out.Ric),
    )


def _field(structure, x, y, **kw):
    x1, x2, y1, y2 = _check_inputs(structure, x, y)
    T = structure.f2_jet(x1, x2, y1, y2)
    return geometry_field(T, y1, y2, **kw), (y1, y2)


def eval_F(structure, x, y):
    """F(x, y) > 0."""
    out, _ = _field(structure, x, y)
    return float(out.F)


def metric_tensor(structure, x, y):
    """Fundamental tensor g_ij = 1/2 d^2 F^2 / dy^i dy^j (positive definite)."""
    out, _ = _field(structure, x, y)
    return np.asarray(out.g)


def cartan_tensor(structure, x, y):
    """Cartan tensor C_ijk = d g_ij / dy^k."""
    out, _ = _field(structure, x, y)
    return np.asarray(out.C)


def spray_coefficients(structure, x, y):
    """Geodesic spray G^i, homogeneous of degree 2 in y."""
    out, _ = _field(structure, x, y)
    return np.asarray(out.G)


def nonlinear_connection(structure, x, y):
    """N^j_i = 1/2 dG^j/dy^i, returned as N[j, i]."""
    out, _ = _field(structure, x, y)
    return np.asarray(out.N)


def chern_connection(structure, x, y):
    """Chern connection coefficients Gamma^i_jk (symmetric in j, k)."""
    out, _ = _field(structure, x, y, connection=True)
    return np.asarray(out.Gamma)


def chern_hh_curvature(structure, x, y):
    """hh-curvature R_j^i_kl of the Chern connection, antisymmetric in (k, l)."""
    out, _ = _field(structure, x, y, connection=True)
    return np.asarray(out.Rhh)


def reduced_curvature(structure, x, y):
    """Reduced hh-curvature R^i_k from x/y-derivatives of the spray."""
    out, _ = _field(structure, x, y)
    return np.asarray(out.R)


def ricci_scalar(structure, x, y):
    """Ricci scalar = trace of the reduced curvature."""
    out, _ = _field(structure, x, y)
    return float(out.Ric)


def cartan_symmetry_residual(C):
    """max |C_ijk - C_kji|, |C_ijk - C_ikj| over the trailing index triple."""
    r1 = np.abs(C - np.einsum("...ijk->...kji", C)).max(axis=(-3, -2, -1))
    r2 = np.abs(C - np.einsum("...ijk->...ikj", C)).max(axis=(-3, -2, -1))
    return np.maximum(r1, r2)
