"""Explicit monotone time stepper and steady-state driver.

Exterior nodes are hard-set to the datum at the current time; interior and
boundary-trace nodes advance by the same explicit update

    u_i <- u_i + dt * [ I(u, x_i) - H_num(x_i, t, u_i, p-, p+) ]

so the generalized Dirichlet condition emerges: a persistent trace gap
phi - u > 0 on the boundary signals loss of the boundary condition.  Operator
neighbor reads use the upper phi-envelope at trace nodes; the evaluated node
always contributes its raw value (required for the exact discrete comparison
property when exterior data differ).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield

import numpy as np

from .errors import BlowUp, CflViolation, NonConvergence, ViscosityUnderflow
from .geometry import Grid
from .hamiltonians import (CoefficientField, lf_viscosity_bound,
                           numerical_hamiltonian_many)
from .kernels import QuadratureTable
from .operators import Field, SweepPlan


@dataclass
class SchemeConfig:
    """Scheme parameters; dt defaults to the CFL-limited value theta/denom."""

    h: float
    theta: float = 0.9
    dt: float | None = None
    T: float | None = None
    steady_tol: float | None = None
    delta: float | None = None
    m_cap: float | None = None
    snapshot_dt: float | None = None
    max_steps: int = 2_000_000
    sigma_override: object = None

    def __post_init__(self):
        if not (0.0 < self.theta <= 1.0):
            raise ValueError("CFL safety factor theta must lie in (0, 1]")
        if self.h <= 0:
            raise ValueError("spacing must be positive")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("time step must be positive")


@dataclass
class SolveState:
    grid: Grid
    plan: SweepPlan
    spec: object
    phi: CoefficientField
    raw: np.ndarray
    t: float = 0.0
    steps: int = 0
    sigma: np.ndarray | None = None
    m_cap: float = np.inf
    sup_norm: float = 0.0
    sigma_growth: int = 0
    last_dt: float = 0.0
    _core_pts: np.ndarray = dfield(init=False, repr=False, default=None)

    def __post_init__(self):
        self._core_pts = self.grid.points_at(self.grid.core_flat)
        self.sup_norm = float(np.abs(self.raw[self.grid.core_flat]).max())

    @property
    def qt(self) -> QuadratureTable:
        return self.plan.qt

    def field(self, policy: str = "upper") -> Field:
        return Field(self.grid, self.raw.copy(), self.phi, self.t, policy)

    def trace_gaps(self) -> np.ndarray:
        pts = self.grid.points_at(self.grid.trace_flat)
        return (np.asarray(self.phi(pts, self.t), dtype=float)
                - self.raw[self.grid.trace_flat])


def eval_initial(u0, pts: np.ndarray) -> np.ndarray:
    """Initial data: scalar, expression string in x[, y], or f(points)."""
    if np.isscalar(u0) and not isinstance(u0, str):
        return np.full(pts.shape[0], float(u0))
    if isinstance(u0, (str, CoefficientField)):
        return CoefficientField(u0, "u0")(pts, 0.0)
    return np.broadcast_to(np.asarray(u0(pts), dtype=float), (pts.shape[0],)).copy()


def init_state(grid: Grid, qt: QuadratureTable, spec, phi, u0,
               cfg: SchemeConfig, t0: float = 0.0) -> SolveState:
    phi = phi if isinstance(phi, CoefficientField) else CoefficientField(phi, "phi")
    raw = np.zeros(grid.size)
    core_pts = grid.points_at(grid.core_flat)
    raw[grid.core_flat] = eval_initial(u0, core_pts)
    ext_pts = grid.points_at(grid.exterior_flat)
    raw[grid.exterior_flat] = phi(ext_pts, t0)
    plan = SweepPlan(grid, qt)
    st = SolveState(grid, plan, spec, phi, raw, t=t0)
    sup_u = st.sup_norm
    sup_phi = float(np.abs(raw[grid.exterior_flat]).max(initial=0.0))
    st.m_cap = cfg.m_cap if cfg.m_cap is not None else 1e3 * (1.0 + sup_u + sup_phi)
    if spec.family == "coercive":
        if cfg.sigma_override is not None:
            st.sigma = np.atleast_1d(np.asarray(cfg.sigma_override, dtype=float))
        else:
            pm, pp = _one_sided_gradients(st, _envelope(st))
            scale = float(np.abs(np.concatenate([pm, pp])).max(initial=0.0))
            st.sigma = 1.0 + lf_viscosity_bound(spec, core_pts, t0, scale)
    return st


def _envelope(st: SolveState) -> np.ndarray:
    """Extension array: raw values with the upper envelope at trace nodes."""
    E = st.raw.copy()
    tr = st.grid.trace_flat
    if len(tr):
        phi_tr = np.asarray(st.phi(st.grid.points_at(tr), st.t), dtype=float)
        E[tr] = np.maximum(E[tr], phi_tr)
    return E


def _one_sided_gradients(st: SolveState, E: np.ndarray):
    g = st.grid
    core = g.core_flat
    centers = st.raw[core]
    h = g.h
    dim = g.dim
    pm = np.empty((len(core), dim))
    pp = np.empty((len(core), dim))
    for a, s in enumerate(g.strides):
        pp[:, a] = (E[core + s] - centers) / h
        pm[:, a] = (centers - E[core - s]) / h
    return pm, pp


def _tail_values(st: SolveState, E: np.ndarray) -> np.ndarray:
    g = st.grid
    if g.dim == 1:
        return np.array([E[0], E[-1]])
    v = E.reshape(g.shape)
    shell = np.concatenate([v[0, :], v[-1, :], v[1:-1, 0], v[1:-1, -1]])
    return np.array([shell.mean()])


def cfl_denominator(st: SolveState, t: float) -> float:
    qt = st.qt
    pts = st._core_pts
    lam_abs = 0.0
    if st.spec.family == "coercive":
        lam_abs = float(np.abs(st.spec.lam(pts, t)).max())
        drift = st.sigma
    else:
        lam_abs = max(float(np.abs(c.lam(pts, t)).max())
                      for c in st.spec.controls)
        drift = st.spec.drift_bound(pts, t)
    return qt.lam + float(np.sum(drift)) / st.grid.h + lam_abs


def auto_dt(st: SolveState, cfg: SchemeConfig) -> float:
    den = cfl_denominator(st, st.t)
    if den <= 0.0:
        fallback = cfg.T / 100.0 if cfg.T else 0.01
        return cfg.dt if cfg.dt is not None else fallback
    dt = cfg.theta / den
    if cfg.dt is not None:
        if cfg.dt > cfg.theta / den * (1 + 1e-12):
            raise CflViolation(
                f"dt = {cfg.dt} violates dt*(Lambda + sigma/h + lam) <= theta "
                f"(max {cfg.theta / den})")
        return cfg.dt
    return dt


def _rhs(st: SolveState, t: float) -> np.ndarray:
    E = _envelope(st)
    core = st.grid.core_flat
    centers = st.raw[core]
    op = st.plan.apply(E, centers, _tail_values(st, E))
    pm, pp = _one_sided_gradients(st, E)
    hvals = numerical_hamiltonian_many(st.spec, st._core_pts, t, centers,
                                       pm, pp, st.sigma)
    return op - hvals


def step(st: SolveState, cfg: SchemeConfig, dt: float | None = None) -> SolveState:
    """Advance one explicit step (in place) and return the state.

    On a Lax-Friedrichs viscosity underflow the viscosity is enlarged and the
    step retried with the tightened CFL limit, unless a shared sigma override
    pins it (paired comparison runs must restart jointly).  The applied step
    size is stored in ``st.last_dt``.
    """
    requested = dt
    attempt = 0
    while True:
        cfl_dt = auto_dt(st, cfg)
        if requested is None:
            use = cfl_dt
        elif requested > cfl_dt * (1 + 1e-9):
            if attempt == 0:
                raise CflViolation(
                    f"dt = {requested} exceeds the CFL-limited step {cfl_dt}")
            use = cfl_dt  # viscosity grew mid-step; tighten silently
        else:
            use = requested
        try:
            rhs = _rhs(st, st.t)
            break
        except ViscosityUnderflow as e:
            if cfg.sigma_override is not None:
                raise
            grown = 2.0 * st.sigma
            if e.required is not None:
                grown = np.maximum(grown, 2.0 * np.asarray(e.required, dtype=float))
            st.sigma = grown
            st.sigma_growth += 1
            attempt += 1
    core = st.grid.core_flat
    st.raw[core] += use * rhs
    st.t += use
    st.last_dt = use
    ext = st.grid.exterior_flat
    st.raw[ext] = st.phi(st.grid.points_at(ext), st.t)
    st.steps += 1
    st.sup_norm = float(np.abs(st.raw[core]).max())
    if not np.isfinite(st.sup_norm) or st.sup_norm > st.m_cap:
        raise BlowUp(f"sup-norm {st.sup_norm} exceeded cap {st.m_cap} at t = {st.t}")
    return st


@dataclass
class RunReport:
    """Time series collected along a run."""

    times: list = dfield(default_factory=list)
    sup_norms: list = dfield(default_factory=list)
    snapshots: list = dfield(default_factory=list)       # (t, raw copy)
    trace_gap_series: list = dfield(default_factory=list)  # (t, gaps array)
    residuals: list = dfield(default_factory=list)
    certificates: dict = dfield(default_factory=dict)
    cfl: dict = dfield(default_factory=dict)

    def record(self, st: SolveState, snapshot: bool = False):
        self.times.append(st.t)
        self.sup_norms.append(st.sup_norm)
        if snapshot:
            self.snapshots.append((st.t, st.raw.copy()))
            self.trace_gap_series.append((st.t, st.trace_gaps()))


def run_to_time(st: SolveState, cfg: SchemeConfig, T: float,
                report: RunReport | None = None) -> RunReport:
    """March to t = T with snapshots at the configured cadence.

    The initial condition is enforced classically at t = 0; the final step is
    shortened to land on T exactly.
    """
    if T < st.t:
        raise ValueError("target time lies in the past")
    rep = report if report is not None else RunReport()
    if not rep.times:
        rep.record(st, snapshot=True)
    if T == st.t:
        return rep
    cadence = cfg.snapshot_dt
    next_snap = st.t + cadence if cadence else np.inf
    while st.t < T - 1e-14:
        dt = auto_dt(st, cfg)
        dt = min(dt, T - st.t)
        if cadence and st.t + dt >= next_snap - 1e-14:
            dt = min(dt, next_snap - st.t)
        step(st, cfg, dt)
        snap = (cadence and st.t >= next_snap - 1e-12) or st.t >= T - 1e-14
        rep.record(st, snapshot=bool(snap))
        if cadence and st.t >= next_snap - 1e-12:
            next_snap += cadence
        if st.steps > cfg.max_steps:
            raise NonConvergence(f"exceeded {cfg.max_steps} steps before T")
    return rep


def run_to_steady(st: SolveState, cfg: SchemeConfig,
                  report: RunReport | None = None) -> tuple:
    """Freeze time and iterate until sup |u_new - u| / dt <= steady_tol.

    Requires time-independent data; returns (state, report) with the residual
    history.  Raises NonConvergence past max_steps.
    """
    if st.spec.time_dependent or getattr(st.phi, "time_dependent", False):
        raise ValueError("steady driver requires time-independent data")
    rep = report if report is not None else RunReport()
    tol = cfg.steady_tol
    if tol is None:
        tol = 1e-8 * (1.0 + st.sup_norm)
    core = st.grid.core_flat
    t_frozen = st.t
    for _ in range(cfg.max_steps):
        prev = st.raw[core].copy()
        step(st, cfg)
        st.t = t_frozen  # explicit pseudo-time marching with frozen data
        res = float(np.abs(st.raw[core] - prev).max()) / st.last_dt
        rep.residuals.append(res)
        rep.sup_norms.append(st.sup_norm)
        if res <= tol:
            rep.certificates["steady_tol"] = tol
            return st, rep
    raise NonConvergence(
        f"steady residual {rep.residuals[-1] if rep.residuals else np.inf} "
        f"above {tol} after {cfg.max_steps} steps")
