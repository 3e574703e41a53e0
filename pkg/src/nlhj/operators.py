"""Nonlocal operator evaluation: full, truncated, censored, and the scheme
residual.

A :class:`Field` pairs grid values on the closed domain with the exterior
Dirichlet datum; exterior nodes always carry the datum at the field's time,
and boundary-trace nodes carry the upper (max) or lower (min) envelope of the
stored value and the datum, per the field's policy.

The full-grid sweep used by the time stepper is the hot path: an explicit
loop version is compiled with numba and a vectorized numpy twin is selected
by the ``NLHJ_DISABLE_NUMBA`` environment flag (see ``_accel``).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield

import numpy as np

from ._accel import NUMBA_ENABLED, maybe_njit, prange
from .errors import NodeOutsideGrid, UnsupportedOrder
from .geometry import Domain, Grid, signed_distance_many
from .kernels import QuadratureTable

UPPER, LOWER = "upper", "lower"


@dataclass
class Region:
    """Offset-set selector for the truncated operator I[A]."""

    kind: str
    delta: float | None = None

    @staticmethod
    def all():
        return Region("all")

    @staticmethod
    def ball(delta: float):
        return Region("ball", float(delta))

    @staticmethod
    def ball_complement(delta: float):
        return Region("ball_c", float(delta))

    @staticmethod
    def censored():
        return Region("censored")


ALL = Region.all()


class Field:
    """Grid values plus exterior datum, with a boundary-trace policy.

    The stored value array (``values``) equals the raw solution values at
    interior nodes, the datum at exterior nodes, and max(u, phi) (upper
    policy) or min(u, phi) (lower policy) at trace nodes.  ``raw`` keeps the
    un-enveloped trace values for reporting.
    """

    def __init__(self, grid: Grid, raw: np.ndarray, phi, t: float = 0.0,
                 policy: str = UPPER):
        if policy not in (UPPER, LOWER):
            raise ValueError("policy must be 'upper' or 'lower'")
        self.grid = grid
        self.raw = np.asarray(raw, dtype=float)
        if self.raw.shape != (grid.size,):
            raise ValueError("raw values must be flat over the full grid")
        self.phi = phi
        self.t = float(t)
        self.policy = policy
        vals = self.raw.copy()
        ext_pts = grid.points_at(grid.exterior_flat)
        vals[grid.exterior_flat] = phi(ext_pts, t)
        if len(grid.trace_flat):
            tr_pts = grid.points_at(grid.trace_flat)
            phi_tr = np.asarray(phi(tr_pts, t), dtype=float)
            mix = np.maximum if policy == UPPER else np.minimum
            vals[grid.trace_flat] = mix(self.raw[grid.trace_flat], phi_tr)
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains non-finite values")
        self.values = vals
        self.bound = float(np.abs(vals).max())

    @classmethod
    def from_function(cls, grid: Grid, u0, phi, t: float = 0.0,
                      policy: str = UPPER) -> "Field":
        raw = np.zeros(grid.size)
        core_pts = grid.points_at(grid.core_flat)
        raw[grid.core_flat] = u0(core_pts) if not np.isscalar(u0) else float(u0)
        ext_pts = grid.points_at(grid.exterior_flat)
        raw[grid.exterior_flat] = phi(ext_pts, t)
        return cls(grid, raw, phi, t, policy)

    def trace_gap(self) -> np.ndarray:
        """phi - u at trace nodes (raw trace, before the policy envelope)."""
        tr_pts = self.grid.points_at(self.grid.trace_flat)
        return np.asarray(self.phi(tr_pts, self.t), dtype=float) - self.raw[self.grid.trace_flat]

    def tail_values(self) -> np.ndarray:
        """Field values representing the constant continuation beyond r_max.

        1-D: the two outermost stored nodes (left, right).  2-D: the mean of
        the outermost shell, returned as a single entry.
        """
        g = self.grid
        if g.dim == 1:
            return np.array([self.values[0], self.values[-1]])
        v = self.values.reshape(g.shape)
        shell = np.concatenate([v[0, :], v[-1, :], v[1:-1, 0], v[1:-1, -1]])
        return np.array([shell.mean()])


def save_field(f: Field, path, alpha: float):
    """Write coordinates and values as a text table with a metadata header."""
    pts = f.grid.points()
    cols = [pts[:, a] for a in range(f.grid.dim)] + [f.values]
    with open(path, "w") as fh:
        fh.write(f"# t={f.t:.17g} h={f.grid.h:.17g} alpha={alpha:.17g}\n")
        for row in zip(*cols):
            fh.write("\t".join(f"{v:.17g}" for v in row) + "\n")


# ---------------------------------------------------------------------------
# full-grid sweep (hot path)
# ---------------------------------------------------------------------------

def _sweep_loops_py(E, centers, core, off, w, sum_w, strides, nf_coeffs,
                    use_comp, m1, h, out):
    # explicit loops; compiled by numba when enabled (each node owns one
    # fixed-order accumulation, so the parallel schedule cannot change bits)
    for i in prange(core.shape[0]):
        base = core[i]
        acc = 0.0
        for k in range(off.shape[0]):
            acc += w[k] * E[base + off[k]]
        acc -= sum_w * centers[i]
        for a in range(strides.shape[0]):
            c = nf_coeffs[a]
            if c != 0.0:
                s = strides[a]
                acc += c * (E[base + s] - 2.0 * centers[i] + E[base - s])
        if use_comp:
            for a in range(strides.shape[0]):
                s = strides[a]
                pbar = (E[base + s] - E[base - s]) / (2.0 * h)
                acc -= pbar * m1[a]
        out[i] = acc
    return out


_sweep_loops = maybe_njit(_sweep_loops_py, parallel=True)


def dense_taps_1d(qt: QuadratureTable, nf_coeffs, use_comp: bool):
    """Dense tap vector for the 1-D correlate fallback: every E-linear term
    (weights, near-field neighbors, compensator moment) in one stencil."""
    C = max(int(np.abs(qt.offsets).max(initial=0)), 1)
    taps = np.zeros(2 * C + 1)
    if len(qt.offsets):
        np.add.at(taps, C + qt.offsets[:, 0], qt.weights)
    c = nf_coeffs[0]
    taps[C + 1] += c
    taps[C - 1] += c
    if use_comp:
        taps[C + 1] -= qt.m1[0] / (2.0 * qt.h)
        taps[C - 1] += qt.m1[0] / (2.0 * qt.h)
    diag = qt.sum_w + 2.0 * c
    return taps, C, diag


def _sweep_numpy(E, centers, core, off, w, sum_w, strides, nf_coeffs,
                 use_comp, m1, h, out, taps=None, tap_center=0, diag=0.0):
    if taps is not None:
        # 1-D: dense correlation carries every E-linear term
        conv = np.correlate(E, taps, mode="valid")
        np.subtract(conv[core - tap_center], diag * centers, out=out)
        return out
    # chunked gather keeps the temporary index matrix cache-sized
    chunk = max(1, 2_000_000 // max(off.shape[0], 1))
    for s in range(0, core.shape[0], chunk):
        blk = core[s:s + chunk]
        out[s:s + chunk] = E[blk[:, None] + off[None, :]] @ w
    out -= sum_w * centers
    for a in range(strides.shape[0]):
        c = nf_coeffs[a]
        if c != 0.0:
            s = strides[a]
            out += c * (E[core + s] - 2.0 * centers + E[core - s])
    if use_comp:
        for a in range(strides.shape[0]):
            s = strides[a]
            out -= (E[core + s] - E[core - s]) / (2.0 * h) * m1[a]
    return out


@dataclass
class SweepPlan:
    """Precomputed index data binding a grid to a quadrature table."""

    grid: Grid
    qt: QuadratureTable
    off_flat: np.ndarray = dfield(init=False)
    strides: np.ndarray = dfield(init=False)
    nf_coeffs: np.ndarray = dfield(init=False)
    use_comp: bool = dfield(init=False)
    taps: np.ndarray | None = dfield(init=False, default=None, repr=False)
    tap_center: int = dfield(init=False, default=0)
    diag: float = dfield(init=False, default=0.0)

    def __post_init__(self):
        g, qt = self.grid, self.qt
        if qt.dim != g.dim:
            raise ValueError("quadrature dimension does not match the grid")
        J = int(np.abs(qt.offsets).max(initial=0))
        need = max(J, 1)
        if g.halo < need:
            raise ValueError(f"grid halo {g.halo} too small for offsets (need {need})")
        self.off_flat = g.offset_to_flat(qt.offsets)
        self.strides = np.asarray(g.strides, dtype=np.int64)
        self.nf_coeffs = qt.nf_axis / (2.0 * qt.h ** 2)
        self.use_comp = bool(qt.alpha >= 1 and np.abs(qt.m1).max(initial=0) > 1e-15)
        if g.dim == 1:
            # dense contiguous stencil: faster for both backends in 1-D
            self.taps, self.tap_center, self.diag = dense_taps_1d(
                qt, self.nf_coeffs, self.use_comp)
            self._off_dense = np.arange(-self.tap_center, self.tap_center + 1,
                                        dtype=np.int64)
            self._zeros1 = np.zeros(1)

    def apply(self, E: np.ndarray, centers: np.ndarray,
              tail_vals: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """Operator values at every core node (interior + trace).

        ``centers`` supplies the value subtracted at the evaluated node (the
        solver passes the raw solution there; the Field API passes the stored
        envelope).  ``tail_vals`` per `Field.tail_values`.
        """
        g, qt = self.grid, self.qt
        core = g.core_flat
        if out is None:
            out = np.empty(core.shape[0])
        if g.dim == 1:
            # taps absorb the near field and compensator moment
            args = (E, centers, core, self._off_dense, self.taps, self.diag,
                    self.strides, self._zeros1, False, self._zeros1, qt.h, out)
        else:
            args = (E, centers, core, self.off_flat, qt.weights, qt.sum_w,
                    self.strides, self.nf_coeffs, self.use_comp, qt.m1, qt.h, out)
        if NUMBA_ENABLED:
            _sweep_loops(*args)
        elif g.dim == 1:
            _sweep_numpy(*args, taps=self.taps, tap_center=self.tap_center,
                         diag=self.diag)
        else:
            _sweep_numpy(*args)
        if qt.tail_mass > 0.0:
            if g.dim == 1:
                out += qt.tail_sides[0] * (tail_vals[0] - centers)
                out += qt.tail_sides[1] * (tail_vals[1] - centers)
            else:
                out += qt.tail_mass * (tail_vals[0] - centers)
        return out


# ---------------------------------------------------------------------------
# single-node evaluation (general regions)
# ---------------------------------------------------------------------------

def _locate(f: Field, x) -> int:
    try:
        return int(f.grid.flat_index_of(x))
    except ValueError as e:
        raise NodeOutsideGrid(str(e))


def eval_operator(f: Field, x, p, qt: QuadratureTable,
                  region: Region = ALL, dom: Domain | None = None) -> float:
    """Truncated operator I[A](f, x, p) on the lattice.

    The compensator <p, z> acts on offsets inside the unit ball and only for
    alpha >= 1; for alpha < 1 it is omitted and p has no effect.  The near
    field (second-difference form, alpha >= 1) belongs to the ball side of
    any split; the tail belongs to the complement side.
    """
    g = f.grid
    flat = _locate(f, x)
    idx = np.unravel_index(flat, g.shape) if g.dim == 2 else (flat,)
    J = int(np.abs(qt.offsets).max(initial=0))
    for a, i in enumerate(np.atleast_1d(idx)):
        if i - J < 0 or i + J >= g.shape[a]:
            raise NodeOutsideGrid(f"offsets from {x} leave the stored block")
    p = np.zeros(g.dim) if p is None else np.atleast_1d(np.asarray(p, dtype=float))
    E = f.values
    center = float(E[flat])

    norms = qt.offset_norms
    if region.kind == "all":
        sel = np.ones(norms.shape, dtype=bool)
        include_near, include_tail = True, True
    elif region.kind == "ball":
        sel = norms < region.delta
        include_near, include_tail = True, False
    elif region.kind == "ball_c":
        sel = norms >= region.delta
        include_near, include_tail = False, True
    elif region.kind == "censored":
        if qt.alpha >= 1:
            raise UnsupportedOrder("censored operator requires alpha < 1")
        if dom is None:
            dom = g.domain
        pts = g.points_at(np.full(1, flat))[0][None, :] + qt.offsets * qt.h
        sel = signed_distance_many(dom, pts) > 0.0
        include_near, include_tail = False, False
    else:
        raise ValueError(f"unknown region kind {region.kind!r}")

    off_flat = g.offset_to_flat(qt.offsets[sel])
    w = qt.weights[sel]
    acc = float(np.dot(w, E[flat + off_flat]) - w.sum() * center)
    if qt.alpha >= 1:
        zsel = qt.offsets[sel] * qt.h
        in_ball = norms[sel] <= 1.0 + 1e-14
        if np.any(in_ball):
            acc -= float((w[in_ball, None] * zsel[in_ball]).sum(axis=0) @ p)
        if include_near:
            strides = np.asarray(g.strides, dtype=np.int64)
            for a in range(g.dim):
                c = qt.nf_axis[a] / (2.0 * qt.h ** 2)
                if c != 0.0:
                    s = strides[a]
                    acc += c * (E[flat + s] - 2.0 * center + E[flat - s])
    if include_tail and qt.tail_mass > 0.0:
        tv = f.tail_values()
        if g.dim == 1:
            acc += qt.tail_sides[0] * (tv[0] - center)
            acc += qt.tail_sides[1] * (tv[1] - center)
        else:
            acc += qt.tail_mass * (tv[0] - center)
    return acc


def eval_censored(f: Field, x, qt: QuadratureTable,
                  dom: Domain | None = None) -> float:
    """Censored operator: jumps restricted to land inside Omega (alpha < 1)."""
    if qt.alpha >= 1:
        raise UnsupportedOrder("censored operator requires alpha < 1")
    return eval_operator(f, x, None, qt, Region.censored(), dom=dom)


def scheme_evaluation(f: Field, x, t: float, dt_slot: float, p, ham_spec,
                      qt: QuadratureTable, delta: float | None = None,
                      p_minus=None, p_plus=None, sigma=None,
                      center=None) -> float:
    """Scheme residual dt_slot - I(f, x, p) + H(x, t, f(x), p).

    The continuous evaluation splits the operator at a ball of radius delta;
    on the lattice both parts reduce to the same quadrature, so delta is kept
    only for definition parity (asserted in tests via the ball/complement
    split).  When the one-sided pair (p_minus, p_plus) is given the monotone
    numerical Hamiltonian is used instead of the pointwise one (pass the
    solver's sigma for the exact stepping residual); ``center`` overrides the
    value subtracted/fed at the node, matching the solver's raw-center reads.
    """
    from .hamiltonians import eval_hamiltonian, numerical_hamiltonian

    if delta is not None and delta < qt.h:
        raise ValueError("delta must be at least the grid spacing")
    flat = _locate(f, x)
    op = eval_operator(f, x, p, qt, ALL)
    r = float(f.values[flat]) if center is None else float(center)
    if center is not None:
        # the operator subtracted the envelope value at the node; shift the
        # difference terms to the raw center
        mass = qt.sum_w + qt.nf_axis.sum() / qt.h ** 2 + qt.tail_mass
        op += mass * (float(f.values[flat]) - r)
    xpt = f.grid.points_at(np.full(1, flat))[0]
    if p_minus is not None:
        hval = numerical_hamiltonian(ham_spec, xpt, t, r, p_minus, p_plus,
                                     sigma=sigma)
    else:
        hval = eval_hamiltonian(ham_spec, xpt, t, r, p)
    return dt_slot - op + hval
