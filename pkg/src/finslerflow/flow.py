"""Method-of-lines integration of the Ricci and Ricci-DeTurck flows on SM.

The evolved unknown is F itself, stored as the ratio w = F / Fbar against the
initial structure's exact jets: spatial derivatives then act on w, so a state
that is a uniform rescaling of the initial data is represented exactly and
the integrability condition holds by construction. The scalar evolution is

    Ricci:    dF/dt = -F * Ric
    DeTurck:  dF/dt = (-2 F^2 Ric - L_xi F^2) / (2 F)

with explicit Euler or classical RK4 in time.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field as dc_field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .bundle import (FieldOnSM, RatioStructure, SphereBundleGrid,
                     ellipticity_monitor, nodal_jets_cached)
from .deturck import (BackgroundStructure, DeTurckField, deturck_vector_field,
                      lie_derivative_field)
from .errors import BlowUp, DegenerateMetric, FinslerError, InvalidParams, LeftChart
from .geometry import geometry_field

__all__ = [
    "FlowState",
    "FlowConfig",
    "theta_lowpass",
    "DiagnosticsRecord",
    "Snapshot",
    "FlowResult",
    "initial_state",
    "ricci_rhs",
    "deturck_step_rhs",
    "step",
    "run_flow",
    "integrability_residual_field",
    "integrability_check",
    "stability_timestep",
    "snapshot_csv",
    "diagnostics_csv",
    "diffeo_csv",
]


@dataclass
class FlowState:
    """Evolving structure: ratio field w against the initial jets, plus time."""

    grid: SphereBundleGrid
    base: object                 # initial FinslerStructure (jet carrier)
    w: np.ndarray                # (nx1, nx2, ntheta)
    t: float
    phibar: np.ndarray = None    # F of the base at nodes, cached

    def __post_init__(self):
        if self.phibar is None:
            T = nodal_jets_cached(self.base, self.grid)
            _, _, C, S = self.grid.node_mesh()
            self.phibar = np.sqrt(np.broadcast_to(T[(0, 0, 0, 0)], self.grid.shape))

    @property
    def phi(self):
        """F restricted to the unit circle, at every node."""
        return self.w * self.phibar

    def structure(self):
        return RatioStructure(self.base, self.grid, self.w)

    def field(self):
        return FieldOnSM(self.grid, self.phi, degree=1)

    def geometry(self, connection=False, degeneracy_tol=1e-12):
        T = self.structure().nodal_jets(self.grid)
        _, _, C, S = self.grid.node_mesh()
        out = geometry_field(T, C, S, connection=connection,
                             degeneracy_tol=degeneracy_tol)
        return T, out


def initial_state(structure, grid):
    return FlowState(grid=grid, base=structure, w=np.ones(grid.shape), t=0.0)


# ---------------------------------------------------------------------------
# right-hand sides


def ricci_rhs(state, degeneracy_tol=1e-12):
    """Nodewise dF/dt = -F * Ric for the unnormalized Ricci flow."""
    T, out = state.geometry(degeneracy_tol=degeneracy_tol)
    return -state.phi * np.asarray(out.Ric)


def deturck_step_rhs(state, background, degeneracy_tol=1e-12):
    """Nodewise DeTurck right-hand side converted to an F-evolution."""
    T, out = state.geometry(connection=True, degeneracy_tol=degeneracy_tol)
    xi = deturck_vector_field(out, background)
    lie = lie_derivative_field(T, xi, state.grid)
    F2 = np.asarray(out.F2)
    F = np.asarray(out.F)
    return (-2.0 * F2 * np.asarray(out.Ric) - lie) / (2.0 * F), xi


# ---------------------------------------------------------------------------
# time stepping


def _check_positive(w, phibar, t):
    phi = w * phibar
    if not np.all(np.isfinite(phi)) or np.any(phi <= 0):
        bad = int(np.sum(~np.isfinite(phi) | (phi <= 0)))
        raise BlowUp(t, f"{bad} nonpositive/non-finite F values")


def theta_lowpass(values, m_cut):
    """Zero all fiber harmonics above m_cut (FFT along the theta axis).

    The Ricci scalar of a Finsler surface amplifies fiber harmonic m like
    O(m^4), so explicit stepping must keep the evolved field inside a
    resolved band. The filter is exact on Riemannian states (harmonics 0, 2)
    and on Randers-type states (harmonics <= 2).
    """
    if not m_cut:
        return values
    spec = np.fft.rfft(values, axis=2)
    spec[:, :, int(m_cut) + 1:] = 0.0
    return np.fft.irfft(spec, n=values.shape[2], axis=2)


class HeldBand:
    """Prescribed (Dirichlet) nodes of a pinned chart.

    Stage derivatives at held nodes are replaced by the reference's time
    derivative so held and evolved nodes move through identical one-step
    stages; exact reference values are re-imposed once per accepted step.
    """

    def __init__(self, mask3, values_fn, rate_fn):
        self.mask3 = mask3
        self.values_fn = values_fn
        self.rate_fn = rate_fn

    def impose_values(self, w, t):
        w = w.copy()
        w[self.mask3] = np.broadcast_to(self.values_fn(t), w.shape)[self.mask3]
        return w

    def impose_rate(self, k, t):
        k[self.mask3] = np.broadcast_to(self.rate_fn(t), k.shape)[self.mask3]
        return k


def step(state, rhs, dt, method="rk4", boundary=None, theta_cut=None):
    """One explicit time step of dw/dt = rhs(state) / phibar.

    ``rhs`` maps a FlowState to the dF/dt field. ``boundary`` (optional
    HeldBand) prescribes pinned-node motion. ``theta_cut`` applies the fiber
    low-pass to each stage derivative.
    """
    g = state.grid
    pb = state.phibar

    def f(w_arr, t_arr):
        s = FlowState(grid=g, base=state.base, w=w_arr, t=t_arr, phibar=pb)
        out = rhs(s) / pb
        if theta_cut:
            out = theta_lowpass(out, theta_cut)
        if boundary is not None:
            out = boundary.impose_rate(out, t_arr)
        return out

    w0, t0 = state.w, state.t
    if method == "euler":
        w1 = w0 + dt * f(w0, t0)
    elif method == "rk4":
        k1 = f(w0, t0)
        k2 = f(w0 + 0.5 * dt * k1, t0 + 0.5 * dt)
        k3 = f(w0 + 0.5 * dt * k2, t0 + 0.5 * dt)
        k4 = f(w0 + dt * k3, t0 + dt)
        w1 = w0 + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    else:
        raise InvalidParams(f"unknown integrator {method!r}")
    t1 = t0 + dt
    if boundary is not None:
        w1 = boundary.impose_values(w1, t1)
    _check_positive(w1, pb, t1)
    return FlowState(grid=g, base=state.base, w=w1, t=t1, phibar=pb)


# ---------------------------------------------------------------------------
# monitors


def integrability_residual_field(grid, g_field):
    """Total-symmetry residual of (g_ij)_{y^k} measured on a nodal g-field.

    The outer fiber derivative is taken by theta finite differences, so a
    field that does come from a Finsler structure scores only discretization
    error, while a hand-built non-integrable g is flagged at O(1).
    """
    dg = grid.dtheta_n(np.asarray(g_field), 1)
    C, S = grid.cos_t, grid.sin_t
    et = np.stack([-S, C], axis=-1)  # d theta / dy^k on the unit circle
    Cmon = np.einsum("abtij,tk->abtijk", dg, et)
    r1 = np.abs(Cmon - np.einsum("...ijk->...kji", Cmon)).max()
    r2 = np.abs(Cmon - np.einsum("...ijk->...ikj", Cmon)).max()
    return float(max(r1, r2))


def integrability_check(state):
    """Integrability residual of the state's metric field."""
    _, out = state.geometry(degeneracy_tol=-np.inf)
    return integrability_residual_field(state.grid, np.asarray(out.g))


def stability_timestep(state, safety=0.2):
    """Advisory explicit-step bound for the flow's diffusion operator.

    Horizontal diffusion scales like max-eig(g^{mn}) / dx^2 and vertical like
    F^2 max-eig(g^{mn}) / dtheta^2 (the F^2-equivalent of the theta spacing),
    so the bound is safety * min(dx^2 / D_h, dtheta^2 / D_v) with the nodewise
    maxima of the two coefficients. Advisory only; callers may override.
    """
    _, out = state.geometry(degeneracy_tol=-np.inf)
    g = np.asarray(out.g)
    tr = g[..., 0, 0] + g[..., 1, 1]
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
    min_eig = 0.5 * (tr - np.sqrt(np.maximum(tr**2 - 4 * det, 0.0)))
    eig_inv = 1.0 / min_eig  # max eigenvalue of g^{mn}, nodewise
    F2 = np.asarray(out.F2)
    dx2 = min(state.grid.dx1, state.grid.dx2) ** 2
    dt_h = dx2 / float(eig_inv.max())
    dt_v = state.grid.dtheta**2 / float((F2 * eig_inv).max())
    return safety * min(dt_h, dt_v)


# ---------------------------------------------------------------------------
# orchestration


@dataclass
class FlowConfig:
    structure: object            # initial FinslerStructure
    grid: SphereBundleGrid
    kind: str = "ricci"          # 'ricci' | 'deturck'
    integrator: str = "rk4"      # 'rk4' | 'euler'
    dt: float = 1e-3
    t_end: float = 0.1
    snapshot_stride: int = 10
    background: object = None    # FinslerStructure (deturck only)
    boundary_reference: Callable = None  # t -> FinslerStructure holding pinned values
    degeneracy_tol: float = 1e-12
    integrability_alarm: float = np.inf
    theta_filter: int = 2        # fiber low-pass cutoff harmonic (0 disables)

    def validate(self):
        if self.dt <= 0 or self.t_end <= 0:
            raise InvalidParams("dt and t_end must be positive")
        if self.kind not in ("ricci", "deturck"):
            raise InvalidParams(f"unknown flow kind {self.kind!r}")
        if self.integrator not in ("rk4", "euler"):
            raise InvalidParams(f"unknown integrator {self.integrator!r}")
        if self.kind == "deturck" and self.background is None:
            raise InvalidParams("deturck flow needs a background structure")
        if self.snapshot_stride < 1:
            raise InvalidParams("snapshot_stride must be >= 1")


@dataclass
class DiagnosticsRecord:
    t: float
    min_eig_g: float
    integrability_residual: float
    max_abs_ric: float
    dt: float


@dataclass
class Snapshot:
    t: float
    phi: np.ndarray
    ric: np.ndarray


@dataclass
class FlowResult:
    grid: SphereBundleGrid
    snapshots: List[Snapshot]
    diagnostics: List[DiagnosticsRecord]
    status: str                  # 'completed' | 'early_stop'
    reason: str
    final_state: Optional[FlowState]
    xi_history: List[Tuple[float, np.ndarray]] = dc_field(default_factory=list)
    xi_grid: Optional[SphereBundleGrid] = None
    wall_time: float = 0.0


def _diagnose(state, dt, crop=(slice(None), slice(None))):
    T, out = state.geometry(degeneracy_tol=-np.inf)
    g_chart = np.asarray(out.g)[crop]
    ric_chart = np.asarray(out.Ric)[crop]
    res = integrability_residual_field(state.grid, np.asarray(out.g))
    return DiagnosticsRecord(
        t=state.t,
        min_eig_g=float(np.asarray(out.min_eig_g)[crop].min()),
        integrability_residual=res,
        max_abs_ric=float(np.abs(ric_chart).max()),
        dt=dt,
    ), Snapshot(t=state.t, phi=state.phi[crop].copy(), ric=ric_chart.copy())


GHOST_BAND = 4  # prescribed rings outside a pinned chart; covers composed 4th-order stencils


def _extend_pinned(grid):
    """Working grid for pinned runs: the chart plus a prescribed ghost band.

    Keeping a band of held nodes outside the chart lets every evolved node use
    centered stencils; high-order one-sided closures proved violently unstable
    when the held ring sits directly against evolved nodes.
    """
    if grid.mode != "pinned":
        return grid, (slice(None), slice(None))
    b = GHOST_BAND
    (a1, b1), (a2, b2) = grid.bounds
    ext_bounds = ((a1 - b * grid.dx1, b1 + b * grid.dx1),
                  (a2 - b * grid.dx2, b2 + b * grid.dx2))
    ext = SphereBundleGrid(grid.nx1 + 2 * b, grid.nx2 + 2 * b, grid.ntheta,
                           ext_bounds, "pinned")
    return ext, (slice(b, b + grid.nx1), slice(b, b + grid.nx2))


def _make_boundary(work_grid, crop, boundary_reference, phibar):
    if work_grid.mode != "pinned":
        return None
    held = np.ones((work_grid.nx1, work_grid.nx2), dtype=bool)
    held[crop] = False
    # also hold the chart's own edge ring, per the pinned-mode contract
    i1, i2 = crop
    held[i1.start, :] = held[i1.stop - 1, :] = True
    held[:, i2.start] = held[:, i2.stop - 1] = True
    held3 = held[:, :, None] & np.ones(work_grid.shape, bool)
    if boundary_reference is None:
        return HeldBand(held3, lambda t: 1.0, lambda t: 0.0)

    X1, X2, C, S = work_grid.node_mesh()

    def w_ref(t):
        ref = boundary_reference(t)
        phi_ref = np.sqrt(np.broadcast_to(ref.f2(X1, X2, C, S), work_grid.shape))
        return phi_ref / phibar

    def w_rate(t, delta=1e-6):
        return (w_ref(t + delta) - w_ref(t - delta)) / (2.0 * delta)

    return HeldBand(held3, w_ref, w_rate)


def run_flow(config: FlowConfig) -> FlowResult:
    """Integrate the configured flow, collecting snapshots and diagnostics.

    Pinned charts are internally padded by a held ghost band (values from the
    boundary reference, or frozen initial data); snapshots and diagnostics are
    reported on the configured chart only.
    """
    config.validate()
    t_start = time.perf_counter()
    grid = config.grid
    work_grid, crop = _extend_pinned(grid)
    state = initial_state(config.structure, work_grid)
    boundary = _make_boundary(work_grid, crop, config.boundary_reference, state.phibar)

    background = None
    if config.kind == "deturck":
        background = config.background if isinstance(config.background, BackgroundStructure) \
            else BackgroundStructure.build(config.background, work_grid)

    xi_history: List[Tuple[float, np.ndarray]] = []

    def rhs(s):
        if config.kind == "ricci":
            return ricci_rhs(s, config.degeneracy_tol)
        dphi, xi = deturck_step_rhs(s, background, config.degeneracy_tol)
        if abs(s.t - state.t) < 1e-14:  # record xi only at accepted states
            xi_history.append((s.t, xi.base_values()))
        return dphi

    n_steps = int(round(config.t_end / config.dt))
    if abs(n_steps * config.dt - config.t_end) > 1e-9 * max(1.0, config.t_end):
        n_steps = int(np.ceil(config.t_end / config.dt))

    diagnostics: List[DiagnosticsRecord] = []
    snapshots: List[Snapshot] = []
    status, reason = "completed", ""
    rec, snap = _diagnose(state, config.dt, crop)
    diagnostics.append(rec)
    snapshots.append(snap)

    try:
        for k in range(n_steps):
            dt = min(config.dt, config.t_end - state.t)
            if dt <= 0:
                break
            state = step(state, rhs, dt, method=config.integrator, boundary=boundary,
                         theta_cut=config.theta_filter)
            take_snapshot = ((k + 1) % config.snapshot_stride == 0) or (k == n_steps - 1)
            if take_snapshot:
                rec, snap = _diagnose(state, dt, crop)
                diagnostics.append(rec)
                snapshots.append(snap)
                if rec.min_eig_g <= config.degeneracy_tol:
                    raise DegenerateMetric(rec.min_eig_g)
                if rec.integrability_residual > config.integrability_alarm:
                    status, reason = "early_stop", (
                        f"integrability alarm: residual {rec.integrability_residual:.3e}"
                        f" > {config.integrability_alarm:.3e}")
                    break
        if config.kind == "deturck" and status == "completed":
            # final xi sample so the diffeomorphism ODE covers [0, t_end]
            _, xi = deturck_step_rhs(state, background, config.degeneracy_tol)
            xi_history.append((state.t, xi.base_values()))
    except (BlowUp, DegenerateMetric, LeftChart) as exc:
        status = "early_stop"
        reason = f"{type(exc).__name__}: {exc}"
        rec = DiagnosticsRecord(t=state.t, min_eig_g=float("nan"),
                                integrability_residual=float("nan"),
                                max_abs_ric=float("nan"), dt=config.dt)
        diagnostics.append(rec)

    return FlowResult(grid=grid, snapshots=snapshots, diagnostics=diagnostics,
                      status=status, reason=reason, final_state=state,
                      xi_history=xi_history, xi_grid=work_grid,
                      wall_time=time.perf_counter() - t_start)


# ---------------------------------------------------------------------------
# machine-readable outputs


def _fmt(v):
    return f"{v:.17g}"


def snapshot_csv(result, fh):
    """Snapshot rows: t, i1, i2, itheta, x1, x2, theta, F, Ric."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "i1", "i2", "itheta", "x1", "x2", "theta", "F", "Ric"])
    for snap in result.snapshots:
        n1, n2, nt = snap.phi.shape
        for i1 in range(n1):
            for i2 in range(n2):
                for it in range(nt):
                    w.writerow([_fmt(snap.t), i1, i2, it,
                                _fmt(result.grid.x1[i1]), _fmt(result.grid.x2[i2]),
                                _fmt(result.grid.theta[it]),
                                _fmt(snap.phi[i1, i2, it]), _fmt(snap.ric[i1, i2, it])])


def diagnostics_csv(result, fh):
    """Diagnostics rows: t, min_eig_g, integrability_residual, max_abs_ric, dt."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "min_eig_g", "integrability_residual", "max_abs_ric", "dt"])
    for rec in result.diagnostics:
        w.writerow([_fmt(rec.t), _fmt(rec.min_eig_g), _fmt(rec.integrability_residual),
                    _fmt(rec.max_abs_ric), _fmt(rec.dt)])


def diffeo_csv(family, fh):
    """DiffeoFamily rows: t, i1, i2, phi1, phi2, J11, J12, J21, J22."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "i1", "i2", "phi1", "phi2", "J11", "J12", "J21", "J22"])
    for t, mp, jac in zip(family.times, family.maps, family.jacobians):
        n1, n2 = mp.shape[:2]
        for i1 in range(n1):
            for i2 in range(n2):
                J = jac[i1, i2]
                w.writerow([_fmt(t), i1, i2, _fmt(mp[i1, i2, 0]), _fmt(mp[i1, i2, 1]),
                            _fmt(J[0, 0]), _fmt(J[0, 1]), _fmt(J[1, 0]), _fmt(J[1, 1])])
