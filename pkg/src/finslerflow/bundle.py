"""Discretized sphere bundle SM and fields/structures living on it.

SM is stored as an (x1, x2, theta) lattice: directions sit on the unit
Euclidean circle of the chart, and homogeneity converts theta-derivatives
into fiber derivatives through the polar chain rule. x-derivatives are
4th-order finite differences (one-sided of the same order near pinned
boundaries); theta-derivatives are 4th-order central with periodic wrap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.ndimage import map_coordinates, spline_filter

from . import fd
from . import jets as jj
from .errors import DegenerateMetric, InvalidParams, OutOfChart, ZeroVector
from .geometry import geometry_field
from .structures import ChartDomain, FinslerStructure

__all__ = [
    "SphereBundleGrid",
    "FieldOnSM",
    "polar_extend",
    "BerwaldFrame",
    "berwald_frame",
    "metric_field",
    "ellipticity_monitor",
    "GridSampledStructure",
    "RatioStructure",
    "nodal_jets_cached",
]


class SphereBundleGrid:
    """Uniform (x1, x2, theta) lattice over a chart.

    mode 'periodic' treats both x-axes as a torus (endpoint excluded);
    mode 'pinned' includes both endpoints and marks the outermost ring as
    boundary nodes that flows hold at reference values.
    """

    def __init__(self, nx1, nx2, ntheta, bounds, mode="pinned"):
        if nx1 < 9 or nx2 < 9:
            raise InvalidParams("grids need at least 9 nodes per x-axis")
        if ntheta < 16 or ntheta % 2:
            raise InvalidParams("ntheta must be even and at least 16")
        if mode not in ("pinned", "periodic"):
            raise InvalidParams(f"unknown boundary mode {mode!r}")
        (a1, b1), (a2, b2) = bounds
        if not (b1 > a1 and b2 > a2):
            raise InvalidParams("chart bounds must be increasing")
        self.nx1, self.nx2, self.ntheta = int(nx1), int(nx2), int(ntheta)
        self.bounds = ((float(a1), float(b1)), (float(a2), float(b2)))
        self.mode = mode
        periodic = mode == "periodic"
        if periodic:
            self.x1 = a1 + (b1 - a1) * np.arange(nx1) / nx1
            self.x2 = a2 + (b2 - a2) * np.arange(nx2) / nx2
            self.dx1 = (b1 - a1) / nx1
            self.dx2 = (b2 - a2) / nx2
        else:
            self.x1 = np.linspace(a1, b1, nx1)
            self.x2 = np.linspace(a2, b2, nx2)
            self.dx1 = (b1 - a1) / (nx1 - 1)
            self.dx2 = (b2 - a2) / (nx2 - 1)
        self.dtheta = 2.0 * np.pi / ntheta
        self.theta = self.dtheta * np.arange(ntheta)
        self.cos_t = np.cos(self.theta)
        self.sin_t = np.sin(self.theta)
        self._dmat = {}

    def key(self):
        return (self.nx1, self.nx2, self.ntheta, self.bounds, self.mode)

    def __eq__(self, other):
        return isinstance(other, SphereBundleGrid) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    @property
    def shape(self):
        return (self.nx1, self.nx2, self.ntheta)

    def domain(self):
        return ChartDomain(self.bounds, self.mode)

    def node_mesh(self):
        """Broadcastable (X1, X2, cos theta, sin theta) arrays."""
        X1 = self.x1[:, None, None]
        X2 = self.x2[None, :, None]
        C = self.cos_t[None, None, :]
        S = self.sin_t[None, None, :]
        return X1, X2, C, S

    def _matrix(self, axis, order):
        key = (axis, order)
        if key not in self._dmat:
            if axis == 2:
                D = fd.derivative_matrix(self.ntheta, self.dtheta, order, acc=4, periodic=True)
            else:
                n = self.nx1 if axis == 0 else self.nx2
                h = self.dx1 if axis == 0 else self.dx2
                D = fd.derivative_matrix(n, h, order, acc=4, periodic=self.mode == "periodic")
            self._dmat[key] = D
        return self._dmat[key]

    def dx(self, values, axis, order=1):
        """FD derivative of a nodal array along x1 (axis 0) or x2 (axis 1)."""
        return fd.apply_along_axis(self._matrix(axis, order), values, axis)

    def dtheta_n(self, values, order=1):
        """FD derivative of a nodal array along the periodic theta axis."""
        return fd.apply_along_axis(self._matrix(2, order), values, 2)

    def interior_mask(self, margin=4):
        """Nodes far enough from pinned boundaries for clean central stencils."""
        m = np.ones((self.nx1, self.nx2), dtype=bool)
        if self.mode == "pinned" and margin > 0:
            m[:margin, :] = False
            m[-margin:, :] = False
            m[:, :margin] = False
            m[:, -margin:] = False
        return m

    def boundary_mask(self):
        """Outermost ring of x-nodes (empty for periodic grids)."""
        m = np.zeros((self.nx1, self.nx2), dtype=bool)
        if self.mode == "pinned":
            m[0, :] = m[-1, :] = True
            m[:, 0] = m[:, -1] = True
        return m


_PAD = 12  # periodic padding width; the cubic prefilter's edge influence decays by ~3.7x per cell


class _TriCubic:
    """Interpolating tricubic B-spline on a sphere-bundle lattice.

    Exactly reproduces nodal values (B-spline prefilter); theta wraps
    periodically, pinned x-axes clamp queries to the chart.
    """

    def __init__(self, grid, values):
        self.grid = grid
        vals = np.asarray(values, dtype=float)
        vals = np.concatenate([vals[:, :, -_PAD:], vals, vals[:, :, :_PAD]], axis=2)
        if grid.mode == "periodic":
            vals = np.concatenate([vals[-_PAD:], vals, vals[:_PAD]], axis=0)
            vals = np.concatenate([vals[:, -_PAD:], vals, vals[:, :_PAD]], axis=1)
        self.coeffs = spline_filter(vals, order=3, mode="mirror")

    def __call__(self, x1, x2, theta):
        g = self.grid
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        theta = np.asarray(theta, dtype=float) % (2.0 * np.pi)
        (a1, b1), (a2, b2) = g.bounds
        if g.mode == "periodic":
            i1 = ((x1 - a1) / g.dx1) % g.nx1 + _PAD
            i2 = ((x2 - a2) / g.dx2) % g.nx2 + _PAD
        else:
            if np.any(x1 < a1 - 1e-12) or np.any(x1 > b1 + 1e-12) or \
               np.any(x2 < a2 - 1e-12) or np.any(x2 > b2 + 1e-12):
                raise OutOfChart(f"interpolation query outside chart {g.bounds}")
            i1 = np.clip((x1 - a1) / g.dx1, 0, g.nx1 - 1)
            i2 = np.clip((x2 - a2) / g.dx2, 0, g.nx2 - 1)
        it = theta / g.dtheta + _PAD
        coords = np.broadcast_arrays(i1, i2, it)
        shape = coords[0].shape
        pts = np.stack([c.ravel() for c in coords])
        out = map_coordinates(self.coeffs, pts, order=3, prefilter=False, mode="mirror")
        return out.reshape(shape) if shape else float(out[0])


@dataclass
class FieldOnSM:
    """Scalar samples on the sphere-bundle lattice.

    ``degree`` is the positive-rescaling homogeneity of the extension of the
    field off the unit circle (1 for F-valued fields, 0 for scalars on SM).
    """

    grid: SphereBundleGrid
    values: np.ndarray
    degree: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise InvalidParams(f"field shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise InvalidParams("field contains non-finite values")

    def interpolator(self):
        """Tricubic interpolator, periodic in theta (and in x on toroidal charts)."""
        if not hasattr(self, "_interp"):
            self._interp = _TriCubic(self.grid, self.values)
        return self._interp


def polar_extend(field_on_sm, x, y):
    """Homogeneous extension r^degree * phi(x, theta(y)) of a sampled field.

    theta interpolation is periodic cubic; x interpolation is cubic inside
    the chart. Nodal queries reproduce nodal values exactly.
    """
    y1, y2 = float(y[0]), float(y[1])
    if y1 == 0.0 and y2 == 0.0:
        raise ZeroVector("direction y must be nonzero")
    g = field_on_sm.grid
    x1, x2 = float(x[0]), float(x[1])
    if g.mode == "periodic":
        (a1, b1), (a2, b2) = g.bounds
        x1 = a1 + (x1 - a1) % (b1 - a1)
        x2 = a2 + (x2 - a2) % (b2 - a2)
    else:
        (a1, b1), (a2, b2) = g.bounds
        if not (a1 <= x1 <= b1 and a2 <= x2 <= b2):
            raise OutOfChart(f"x = ({x1:.6g}, {x2:.6g}) outside chart {g.bounds}")
    r = np.hypot(y1, y2)
    theta = np.arctan2(y2, y1) % (2.0 * np.pi)
    phi = float(field_on_sm.interpolator()(x1, x2, theta))
    return r**field_on_sm.degree * phi


# ---------------------------------------------------------------------------
# Berwald frame


@dataclass
class BerwaldFrame:
    """g-orthonormal frame of the pulled-back bundle and the SM (co)frame.

    e1, e2 are components in the d/dx^i basis; omega1, omega2 are dx^i
    components; omega3 has the same components in the delta-y^i / F basis.
    ehat_a splits into (dx-part, dy-part) on TM.
    """

    e1: np.ndarray
    e2: np.ndarray
    omega1: np.ndarray
    omega2: np.ndarray
    omega3: np.ndarray
    u: np.ndarray  # u[i, a]: ehat_a horizontal components
    v: np.ndarray  # v[a, i]: coframe components
    ehat_h: np.ndarray  # ehat_h[a] = (dx-components of ehat_{a+1})
    ehat_v: np.ndarray  # ehat_v[a] = (dy-components of ehat_{a+1}); a = 0,1 horizontal, 2 vertical


def berwald_frame(structure, x, y):
    """Berwald frame e1, e2 = l with coframe omega^1..3 and SM frame ehat."""
    x1, x2, y1, y2 = float(x[0]), float(x[1]), float(y[0]), float(y[1])
    if y1 == 0.0 and y2 == 0.0:
        raise ZeroVector("direction y must be nonzero")
    T = structure.f2_jet(x1, x2, y1, y2)
    out = geometry_field(T, y1, y2)
    F = float(out.F)
    Fy = np.array([float(T[(0, 0, 1, 0)]), float(T[(0, 0, 0, 1)])]) / (2.0 * F)
    sqrtg = float(np.sqrt(out.det_g))
    e1 = np.array([Fy[1] / sqrtg, -Fy[0] / sqrtg])
    e2 = np.array([y1, y2]) / F
    omega1 = (sqrtg / F) * np.array([y2, -y1])
    omega2 = Fy.copy()
    omega3 = omega1.copy()
    u = np.stack([e1, e2], axis=1)       # u[i, a]
    v = np.stack([omega1, omega2], axis=0)  # v[a, i]
    N = np.asarray(out.N)
    ehat_h = np.stack([e1, e2, np.zeros(2)], axis=0)
    ehat_v = np.empty((3, 2))
    ehat_v[0] = -N @ e1
    ehat_v[1] = -N @ e2
    ehat_v[2] = F * e1
    return BerwaldFrame(e1=e1, e2=e2, omega1=omega1, omega2=omega2, omega3=omega3,
                        u=u, v=v, ehat_h=ehat_h, ehat_v=ehat_v)


# ---------------------------------------------------------------------------
# positivity monitor


def metric_field(structure, grid):
    """Fundamental tensor at every grid node, shape (nx1, nx2, ntheta, 2, 2)."""
    T = nodal_jets_cached(structure, grid)
    C, S = grid.node_mesh()[2:]
    out = geometry_field(T, C, S, check=False)
    return np.asarray(out.g)


def ellipticity_monitor(g_field):
    """min over nodes of min-eigenvalue(g_ij); positive iff the flow's
    principal coefficients stay elliptic."""
    g = np.asarray(g_field)
    tr = g[..., 0, 0] + g[..., 1, 1]
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    disc = np.sqrt(np.maximum(tr**2 - 4.0 * det, 0.0))
    return float((0.5 * (tr - disc)).min())


# ---------------------------------------------------------------------------
# grid-backed structures


def _theta_tables(grid, nodal):
    """x/theta-derivative tables D^a_x D^m_theta of a nodal scalar array."""
    th = [nodal]
    for m in range(1, 5):
        th.append(grid.dtheta_n(nodal, m))
    tables = {}
    for m in range(5):
        t = th[m]
        tables[(0, 0, m)] = t
        tables[(1, 0, m)] = grid.dx(t, 0, 1)
        tables[(0, 1, m)] = grid.dx(t, 1, 1)
        tables[(2, 0, m)] = grid.dx(t, 0, 2)
        tables[(0, 2, m)] = grid.dx(t, 1, 2)
        tables[(1, 1, m)] = grid.dx(tables[(1, 0, m)], 1, 1)
    return tables


def _assemble_jets(grid, tables, p, keys=None):
    """Polar chain rule: jet table over the grid from x/theta tables."""
    keys = jj.JET_KEYS if keys is None else keys
    C, S = grid.node_mesh()[2:]
    out = {}
    for (px, qx) in jj.X_KEYS:
        wanted = [(m, n) for (pp, qq, m, n) in keys if (pp, qq) == (px, qx)]
        if not wanted:
            continue
        u = [tables[(px, qx, m)] for m in range(5)]
        yj = jj.polar_y_jets(p, 1.0, C, S, u)
        for (m, n) in wanted:
            out[(px, qx, m, n)] = yj[(m, n)]
    return out


def _locate_node(grid, x1, x2):
    """Indices of the lattice x-node at (x1, x2); off-node queries are rejected."""
    g = grid
    i1 = int(round((x1 - g.x1[0]) / g.dx1)) % (g.nx1 if g.mode == "periodic" else 10**9)
    i2 = int(round((x2 - g.x2[0]) / g.dx2)) % (g.nx2 if g.mode == "periodic" else 10**9)
    if not (0 <= i1 < g.nx1 and 0 <= i2 < g.nx2):
        raise OutOfChart(f"x = ({x1:.6g}, {x2:.6g}) outside chart {g.bounds}")
    if abs(g.x1[i1] - x1) > 1e-8 * max(1.0, g.dx1) or abs(g.x2[i2] - x2) > 1e-8 * max(1.0, g.dx2):
        raise OutOfChart("grid-backed structures evaluate jets at lattice x-nodes only")
    return i1, i2


def _point_jets(grid, tables, p, x1, x2, y1, y2):
    """Jet table at one lattice x-node, any direction: periodic cubic in theta."""
    i1, i2 = _locate_node(grid, float(x1), float(x2))
    r = np.hypot(y1, y2)
    theta = np.arctan2(y2, y1) % (2.0 * np.pi)
    th_ext = np.concatenate([grid.theta, [2.0 * np.pi]])
    c, s = np.cos(theta), np.sin(theta)
    out = {}
    for (px, qx) in jj.X_KEYS:
        u = []
        for m in range(5):
            row = tables[(px, qx, m)][i1, i2]
            u.append(CubicSpline(th_ext, np.append(row, row[0]), bc_type="periodic")(theta))
        yj = jj.polar_y_jets(p, r, c, s, u)
        for (m, n) in jj.Y_KEYS:
            out[(px, qx, m, n)] = yj[(m, n)]
    return out


class GridSampledStructure(FinslerStructure):
    """Finsler structure known through samples phi = F|_{r=1} on a grid.

    Jets come from 4th-order finite differences in (x, theta) composed with
    the exact polar chain rule; pointwise jet queries are supported at
    lattice x-nodes (any direction y).
    """

    name = "grid_sampled"

    def __init__(self, grid, phi):
        super().__init__(grid.domain())
        phi = np.asarray(phi, dtype=float)
        if phi.shape != grid.shape:
            raise InvalidParams(f"phi shape {phi.shape} != grid shape {grid.shape}")
        if not np.all(np.isfinite(phi)) or not np.all(phi > 0):
            raise InvalidParams("phi must be finite and strictly positive")
        self.grid = grid
        self.phi = phi
        self._tables = _theta_tables(grid, phi**2)
        self.params = {"nx1": grid.nx1, "nx2": grid.nx2, "ntheta": grid.ntheta}

    def field(self):
        return FieldOnSM(self.grid, self.phi, degree=1)

    def nodal_jets(self, grid):
        if grid != self.grid:
            raise InvalidParams("grid-sampled structure queried on a different grid")
        return _assemble_jets(self.grid, self._tables, 2)

    def f2_jet(self, x1, x2, y1, y2):
        return _point_jets(self.grid, self._tables, 2, x1, x2, y1, y2)


def nodal_jets_cached(structure, grid):
    """nodal_jets with a per-structure cache keyed by the grid."""
    cache = getattr(structure, "_nodal_cache", None)
    if cache is None:
        cache = {}
        try:
            structure._nodal_cache = cache
        except AttributeError:
            return structure.nodal_jets(grid)
    key = grid.key()
    if key not in cache:
        cache[key] = structure.nodal_jets(grid)
    return cache[key]


class RatioStructure(FinslerStructure):
    """F^2 = w(x, theta)^2 * Fbar^2 relative to an exactly-known base.

    Flows evolve the ratio w: finite differences then act on a field that is
    constant wherever the state is a uniform rescaling of the base, so the
    base's analytic jets carry the spatial accuracy.
    """

    def __init__(self, base, grid, w):
        super().__init__(grid.domain())
        w = np.asarray(w, dtype=float)
        if w.shape != grid.shape:
            raise InvalidParams(f"w shape {w.shape} != grid shape {grid.shape}")
        self.base = base
        self.grid = grid
        self.w = w
        self.name = f"ratio[{base.name}]"
        self.params = dict(base.params)

    def phi(self):
        X1, X2, C, S = self.grid.node_mesh()
        base_f2 = self.base.f2_jet(X1, X2, C, S)[(0, 0, 0, 0)]
        return self.w * np.sqrt(np.broadcast_to(base_f2, self.grid.shape))

    def nodal_jets(self, grid):
        if grid != self.grid:
            raise InvalidParams("ratio structure queried on a different grid")
        B = nodal_jets_cached(self.base, grid)
        tables = _theta_tables(grid, self.w**2)
        W = _assemble_jets(grid, tables, 0)
        return jj.leibniz_product(W, B, keys=jj.PIPELINE_KEYS)

    def f2_jet(self, x1, x2, y1, y2):
        W = _point_jets(self.grid, _theta_tables(self.grid, self.w**2), 0, x1, x2, y1, y2)
        B = self.base.f2_jet(x1, x2, y1, y2)
        return jj.leibniz_product(W, B)
