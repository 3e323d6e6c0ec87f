"""Closed-form solutions, the structure catalog, and independent oracles.

The Rosenau family and the Einstein scaling law are exact solutions of the
scalar flow and anchor the validation suite. The Brioschi curvature works
purely from x-jets of a Riemannian metric by finite differences and shares
no code with the Finsler pipeline.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import structures as st
from .errors import CollapsedMetric, InvalidParams, InvalidTime, UnknownEntry
from .fd import fornberg_weights

__all__ = [
    "einstein_tau",
    "einstein_scaling",
    "rosenau_metric",
    "rosenau_curvature",
    "brioschi_gauss_curvature",
    "catalog",
    "CATALOG_NAMES",
]

CATALOG_NAMES = ("euclidean", "randers_flat", "round_sphere", "rosenau",
                 "torus_bump", "grid_sampled")


def einstein_tau(K, t):
    """Scaling factor tau(t) = 1 - 2 K t of the Einstein self-similar solution."""
    return 1.0 - 2.0 * K * t


def einstein_scaling(F0, K, t):
    """Self-similar Einstein solution F^2(t) = tau(t) F0^2.

    F0 must have constant Ricci scalar K; the returned structure has Ricci
    scalar K / tau(t). Raises CollapsedMetric at or past the collapse time.
    """
    tau = einstein_tau(K, t)
    if tau <= 0:
        raise CollapsedMetric(f"tau({t}) = {tau:.4g} <= 0 (collapse at t = {1/(2*K):.4g})")
    if tau == 1.0:
        return F0
    return st.ScaledStructure(F0, tau)


def rosenau_metric(t, x):
    """Rosenau conformal metric a_ij(t, x), a closed-form flow solution.

    a_ij = 8 sinh(-t) / (1 + 2 cosh(-t) |x|^2 + |x|^4) delta_ij for t < 0.
    """
    if t >= 0:
        raise InvalidTime(f"rosenau metric needs t < 0, got {t}")
    rho = float(x[0]) ** 2 + float(x[1]) ** 2
    lam = 8.0 * math.sinh(-t) / (1.0 + 2.0 * math.cosh(-t) * rho + rho**2)
    return lam * np.eye(2)


def rosenau_curvature(t, x):
    """Scalar curvature R(a(t), x) of the Rosenau metric (closed form).

    The Ricci scalar of the induced Finsler structure equals R / 2.
    """
    if t >= 0:
        raise InvalidTime(f"rosenau curvature needs t < 0, got {t}")
    rho = float(x[0]) ** 2 + float(x[1]) ** 2
    return (math.cosh(-t) / math.sinh(-t)
            - 2.0 * math.sinh(-t) * rho / (1.0 + 2.0 * math.cosh(-t) * rho + rho**2))


def _fd_weights(order, h, npts=7):
    offs = (np.arange(npts) - npts // 2) * h
    return offs, fornberg_weights(0.0, offs, order)


def brioschi_gauss_curvature(metric_fn, x, h=0.0125):
    """Gaussian curvature via the Brioschi formula from x-jets of a metric.

    ``metric_fn(x1, x2)`` returns the 2x2 Riemannian metric; first and second
    derivatives are 6th-order central differences with step ``h``. This is an
    independent oracle: it never touches F^2 jets or the Chern machinery.
    """
    x1, x2 = float(x[0]), float(x[1])
    a0 = np.asarray(metric_fn(x1, x2), dtype=float)
    if a0.shape != (2, 2):
        raise InvalidParams("metric_fn must return a 2x2 matrix")
    det0 = a0[0, 0] * a0[1, 1] - a0[0, 1] * a0[1, 0]
    if det0 <= 0 or a0[0, 0] <= 0:
        from .errors import DegenerateMetric

        raise DegenerateMetric(min(det0, a0[0, 0]))

    offs, w1 = _fd_weights(1, h)
    _, w2 = _fd_weights(2, h)

    def dx(i, fn):
        if i == 0:
            return sum(wk * np.asarray(fn(x1 + o, x2)) for o, wk in zip(offs, w1))
        return sum(wk * np.asarray(fn(x1, x2 + o)) for o, wk in zip(offs, w1))

    def dxx(i, fn):
        if i == 0:
            return sum(wk * np.asarray(fn(x1 + o, x2)) for o, wk in zip(offs, w2))
        return sum(wk * np.asarray(fn(x1, x2 + o)) for o, wk in zip(offs, w2))

    def dxy(fn):
        out = 0.0
        for o1, wa in zip(offs, w1):
            out = out + wa * sum(wb * np.asarray(fn(x1 + o1, x2 + o2))
                                 for o2, wb in zip(offs, w1))
        return out

    E, F, G = a0[0, 0], a0[0, 1], a0[1, 1]
    da_u = dx(0, metric_fn)
    da_v = dx(1, metric_fn)
    Eu, Ev = da_u[0, 0], da_v[0, 0]
    Fu, Fv = da_u[0, 1], da_v[0, 1]
    Gu, Gv = da_u[1, 1], da_v[1, 1]
    Evv = dxx(1, metric_fn)[0, 0]
    Guu = dxx(0, metric_fn)[1, 1]
    Fuv = dxy(metric_fn)[0, 1]
    M1 = np.array([
        [-0.5 * Evv + Fuv - 0.5 * Guu, 0.5 * Eu, Fu - 0.5 * Ev],
        [Fv - 0.5 * Gu, E, F],
        [0.5 * Gv, F, G],
    ])
    M2 = np.array([
        [0.0, 0.5 * Ev, 0.5 * Gu],
        [0.5 * Ev, E, F],
        [0.5 * Gu, F, G],
    ])
    return float((np.linalg.det(M1) - np.linalg.det(M2)) / (E * G - F**2) ** 2)


def _invariant_sweep(structure, n_samples=20, seed=20240):
    """Construction-time sanity: positivity, homogeneity, metric definiteness."""
    from .geometry import geometry_field

    rng = np.random.default_rng(seed)
    if structure.domain.bounds is not None:
        (a1, b1), (a2, b2) = structure.domain.bounds
    else:
        a1, b1 = a2, b2 = -1.0, 1.0
    x1 = rng.uniform(a1, b1, n_samples)
    x2 = rng.uniform(a2, b2, n_samples)
    th = rng.uniform(0, 2 * np.pi, n_samples)
    y1, y2 = np.cos(th), np.sin(th)
    T = structure.f2_jet(x1, x2, y1, y2)
    out = geometry_field(T, y1, y2)  # raises on nonpositive F^2 / degenerate g
    # exact 2-homogeneity of F^2 at one rescaling
    T2 = structure.f2_jet(x1, x2, 2.0 * y1, 2.0 * y2)
    f2a = np.broadcast_to(T[(0, 0, 0, 0)], x1.shape)
    f2b = np.broadcast_to(T2[(0, 0, 0, 0)], x1.shape)
    if np.abs(f2b - 4.0 * f2a).max() > 1e-9 * np.abs(f2b).max():
        raise InvalidParams(f"{structure.label()}: F^2 is not 2-homogeneous in y")
    # y^i y^j g_ij = F^2
    g = np.asarray(out.g)
    quad = (g[..., 0, 0] * y1**2 + 2 * g[..., 0, 1] * y1 * y2 + g[..., 1, 1] * y2**2)
    if np.abs(quad - f2a).max() > 1e-9 * np.abs(f2a).max():
        raise InvalidParams(f"{structure.label()}: y y g != F^2")
    return structure


def catalog(name, **params):
    """Named structure catalog.

    Entries: euclidean | randers_flat(b) | round_sphere | rosenau(t0) |
    torus_bump(eps) | grid_sampled(path). Every entry is checked against the
    kernel invariants at construction.
    """
    if name == "euclidean":
        out = st.euclidean()
    elif name == "randers_flat":
        if "b" not in params:
            raise InvalidParams("randers_flat needs parameter b")
        out = st.randers_flat(float(params["b"]), float(params.get("b2", 0.0)))
    elif name == "round_sphere":
        out = st.round_sphere()
    elif name == "rosenau":
        if "t0" not in params:
            raise InvalidParams("rosenau needs parameter t0 < 0")
        out = st.rosenau_structure(float(params["t0"]))
    elif name == "torus_bump":
        out = st.torus_bump(float(params.get("eps", 0.1)))
    elif name == "grid_sampled":
        if "path" not in params:
            raise InvalidParams("grid_sampled needs parameter path")
        out = load_grid_sampled(params["path"], mode=params.get("mode", "pinned"))
    else:
        raise UnknownEntry(f"unknown catalog entry {name!r}; known: {CATALOG_NAMES}")
    return _invariant_sweep(out)


def load_grid_sampled(path, mode="pinned"):
    """Load a grid-sampled structure from a flow snapshot CSV (final time)."""
    import csv as _csv

    from .bundle import GridSampledStructure, SphereBundleGrid

    rows = []
    with open(path, newline="") as fh:
        for row in _csv.DictReader(fh):
            rows.append(row)
    if not rows:
        raise InvalidParams(f"no snapshot rows in {path}")
    t_last = max(float(r["t"]) for r in rows)
    rows = [r for r in rows if float(r["t"]) == t_last]
    n1 = max(int(r["i1"]) for r in rows) + 1
    n2 = max(int(r["i2"]) for r in rows) + 1
    nt = max(int(r["itheta"]) for r in rows) + 1
    x1 = np.full(n1, np.nan)
    x2 = np.full(n2, np.nan)
    phi = np.full((n1, n2, nt), np.nan)
    for r in rows:
        i1, i2, it = int(r["i1"]), int(r["i2"]), int(r["itheta"])
        x1[i1] = float(r["x1"])
        x2[i2] = float(r["x2"])
        phi[i1, i2, it] = float(r["F"])
    if np.any(np.isnan(phi)):
        raise InvalidParams(f"snapshot in {path} does not cover the full grid")
    d1, d2 = x1[1] - x1[0], x2[1] - x2[0]
    if mode == "periodic":
        bounds = ((x1[0], x1[-1] + d1), (x2[0], x2[-1] + d2))
    else:
        bounds = ((x1[0], x1[-1]), (x2[0], x2[-1]))
    grid = SphereBundleGrid(n1, n2, nt, bounds, mode)
    return GridSampledStructure(grid, phi)
