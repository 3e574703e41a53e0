"""Jump kernels K^alpha(z) = K(z)|z|^{-(n+alpha)} and lattice quadrature.

The quadrature covers lattice cells out to a truncation radius.  Cells whose
midpoint lies inside the near-field radius ``r_cut`` are excluded from the
weight table: for alpha < 1 their contribution vanishes under refinement and
they are dropped; for alpha >= 1 they are replaced by a symmetric
second-difference rule carrying the exact second moment of the kernel over
the near region.  Beyond the truncation radius the neglected mass is bounded
from above analytically (``tail_mass``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidResolution, OriginSingularity
from .geometry import Domain, signed_distance_many


@dataclass(frozen=True)
class Kernel:
    """Kernel data: order, dimension, bounded density K and its metadata.

    ``profile`` maps radius arrays to K values (all built-in kernels are
    radial).  ``const_value`` is set when K is a constant, enabling exact
    power-law cell integrals in 1-D.  ``support_radius`` bounds the support
    of K when finite.  Ellipticity constants (c1, c2) witness the uniform
    ellipticity condition K >= c2 on |z| <= c1 when present.
    """

    alpha: float
    dim: int
    profile: object
    kmax: float
    symmetric: bool = True
    const_value: float | None = None
    support_radius: float | None = None
    c1: float | None = None
    c2: float | None = None
    name: str = "custom"

    def __post_init__(self):
        if not (0.0 < self.alpha < 2.0):
            raise ValueError("kernel order alpha must lie in (0, 2)")
        if self.dim not in (1, 2):
            raise ValueError("kernel dimension must be 1 or 2")
        if self.kmax < 0:
            raise ValueError("kernel bound must be nonnegative")

    def density_values(self, z: np.ndarray) -> np.ndarray:
        """K(z) at offset rows z (M, dim)."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        r = np.linalg.norm(z, axis=1)
        return np.asarray(self.profile(r), dtype=float)


def fractional_laplacian_kernel(alpha: float, dim: int = 1) -> Kernel:
    """K identically 1 (normalization constant set to 1 by convention)."""
    return Kernel(alpha, dim, lambda r: np.ones_like(r), kmax=1.0,
                  const_value=1.0, c1=1.0, c2=1.0, name="fractional_laplacian")


def indicator_kernel(alpha: float, dim: int, rho: float) -> Kernel:
    """K = 1 on |z| <= rho, else 0.  rho = 0 yields the zero kernel."""
    if rho < 0:
        raise ValueError("indicator radius must be nonnegative")
    prof = lambda r, rho=rho: (r <= rho).astype(float)
    return Kernel(alpha, dim, prof, kmax=1.0 if rho > 0 else 0.0,
                  support_radius=rho, c1=rho if rho > 0 else None,
                  c2=1.0 if rho > 0 else None, name="indicator")


def zero_kernel(alpha: float = 0.5, dim: int = 1) -> Kernel:
    return indicator_kernel(alpha, dim, 0.0)


def custom_radial_kernel(alpha: float, dim: int, radii, values) -> Kernel:
    """Tabulated radial profile, interpolated linearly, clamped at the ends."""
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    if radii.ndim != 1 or radii.shape != values.shape or len(radii) < 2:
        raise ValueError("profile needs matching 1-D radius/value arrays")
    if np.any(values < 0):
        raise ValueError("kernel density must be nonnegative")
    prof = lambda r: np.interp(r, radii, values)
    return Kernel(alpha, dim, prof, kmax=float(values.max()), name="custom_radial")


def kernel_density(k: Kernel, z) -> float:
    """K^alpha(z) = K(z)|z|^{-(n+alpha)} for z != 0."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    r = float(np.linalg.norm(z))
    if r == 0.0:
        raise OriginSingularity("kernel density is singular at z = 0")
    return float(k.density_values(z[None, :])[0]) * r ** (-(k.dim + k.alpha))


@dataclass
class QuadratureTable:
    """Per-offset weights for the truncated nonlocal operator.

    ``offsets`` are integer lattice steps (M, dim) with Euclidean length in
    (r_cut_edge, r_max]; ``weights`` the per-cell kernel masses (>= 0).
    ``nf_axis`` holds, per axis, the exact integral of z_axis^2 K^alpha over
    the near region (zero for alpha < 1, where the near field is dropped).
    ``tail_mass`` over-estimates the kernel mass beyond the covered region
    (``tail_sides`` splits it per direction in 1-D).
    """

    kernel: Kernel
    h: float
    r_max: float
    r_cut: float
    offsets: np.ndarray
    weights: np.ndarray
    offset_norms: np.ndarray
    near_edge: float
    nf_axis: np.ndarray
    tail_mass: float
    tail_sides: np.ndarray
    sum_w: float = field(init=False)
    m1: np.ndarray = field(init=False)

    def __post_init__(self):
        self.sum_w = float(self.weights.sum())
        zs = self.offsets * self.h
        in_ball = self.offset_norms <= 1.0 + 1e-14
        self.m1 = (self.weights[in_ball, None] * zs[in_ball]).sum(axis=0)

    @property
    def alpha(self) -> float:
        return self.kernel.alpha

    @property
    def dim(self) -> int:
        return self.kernel.dim

    @property
    def nf_mass(self) -> float:
        """Near-field second-difference diagonal mass (enters the CFL bound)."""
        return float(self.nf_axis.sum() / self.h ** 2)

    @property
    def lam(self) -> float:
        """Total operator mass: weights + near-field mass + tail bound."""
        return self.sum_w + self.nf_mass + self.tail_mass


def _cell_integral_1d(k: Kernel, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact integral of K^alpha over [a, b] (0 < a < b) where possible."""
    alpha = k.alpha
    if k.const_value is not None:
        return k.const_value * (a ** -alpha - b ** -alpha) / alpha
    if k.name == "indicator" and k.support_radius is not None:
        rho = k.support_radius
        bb = np.minimum(b, rho)
        out = np.zeros_like(a)
        mask = bb > a
        out[mask] = (a[mask] ** -alpha - bb[mask] ** -alpha) / alpha
        return out
    # midpoint rule per cell
    mid = 0.5 * (a + b)
    return k.profile(mid) * mid ** (-(1 + alpha)) * (b - a)


def _near_second_moments(k: Kernel, h: float, near_offsets: np.ndarray) -> np.ndarray:
    """Per-axis integral of z_axis^2 K^alpha over the union of near cells."""
    dim = k.dim
    out = np.zeros(dim)
    if dim == 1:
        edge = (np.abs(near_offsets[:, 0]).max() + 0.5) * h
        if k.const_value is not None:
            out[0] = 2.0 * k.const_value * edge ** (2 - k.alpha) / (2 - k.alpha)
            return out
        # fine midpoint subdivision of [0, edge], doubled by symmetry? K may
        # be asymmetric in principle, but built-in kernels are radial.
        s = np.linspace(0, edge, 4097)
        r = 0.5 * (s[1:] + s[:-1])
        vals = k.profile(r) * r ** (1 - k.alpha)  # z^2 * r^{-(1+alpha)}
        out[0] = 2.0 * float(np.sum(vals) * (s[1] - s[0]))
        return out
    # 2-D: subdivide each near cell, midpoint sum (integrand r^{-alpha} scale)
    sub = 64
    loc = (np.arange(sub) + 0.5) / sub - 0.5
    lx, ly = np.meshgrid(loc, loc, indexing="ij")
    for off in near_offsets:
        cx = (off[0] + lx.ravel()) * h
        cy = (off[1] + ly.ravel()) * h
        r = np.hypot(cx, cy)
        good = r > 0
        dens = np.zeros_like(r)
        dens[good] = k.profile(r[good]) * r[good] ** (-(2 + k.alpha))
        area = (h / sub) ** 2
        out[0] += float(np.sum(cx ** 2 * dens) * area)
        out[1] += float(np.sum(cy ** 2 * dens) * area)
    return out


def build_quadrature(k: Kernel, h: float, r_max: float,
                     r_cut: float | None = None) -> QuadratureTable:
    """Precompute lattice weights for the operator of order alpha.

    ``r_cut`` defaults to h for alpha < 1 (origin cell dropped) and to
    max(h, sqrt(h)) for alpha >= 1, where the enlarged second-difference near
    field keeps the scheme consistent of order >= 1 in h.
    """
    if h <= 0:
        raise ValueError("spacing must be positive")
    if r_max < 10 * h:
        raise InvalidResolution(f"r_max = {r_max} below 10*h = {10 * h}")
    if r_cut is None:
        r_cut = h if k.alpha < 1 else max(h, float(np.sqrt(h)))

    J = int(np.floor(r_max / h + 1e-12))
    if k.dim == 1:
        j = np.arange(-J, J + 1)
        offsets = j[:, None]
    else:
        j = np.arange(-J, J + 1)
        gx, gy = np.meshgrid(j, j, indexing="ij")
        offsets = np.column_stack([gx.ravel(), gy.ravel()])
    norms = np.linalg.norm(offsets * h, axis=1)
    keep = norms <= r_max + 1e-12
    offsets, norms = offsets[keep], norms[keep]

    near = norms < r_cut * (1 - 1e-12)
    near = near | (norms == 0)
    near_offsets = offsets[near]
    far_offsets = offsets[~near]
    far_norms = norms[~near]
    near_edge = (np.abs(near_offsets).max(initial=0) + 0.5) * h

    if k.dim == 1:
        a = far_norms - 0.5 * h
        b = far_norms + 0.5 * h
        weights = _cell_integral_1d(k, a, b)
    else:
        dens = k.density_values(far_offsets * h)
        weights = dens * far_norms ** (-(2 + k.alpha)) * h ** 2
    weights = np.maximum(weights, 0.0)

    if k.alpha >= 1:
        nf_axis = _near_second_moments(k, h, near_offsets)
    else:
        nf_axis = np.zeros(k.dim)

    # Tail beyond the covered region, using K <= kmax (exact coverage radius
    # in 1-D; inscribed radius of the covered cell union in 2-D).
    if k.dim == 1:
        r_cov = (J + 0.5) * h
        surf = 2.0
    else:
        r_cov = max(r_max - h, r_max / 2)
        surf = 2.0 * np.pi
    if k.support_radius is not None and k.support_radius <= r_cov:
        tail = 0.0
    else:
        tail = k.kmax * surf * r_cov ** (-k.alpha) / k.alpha
    if k.dim == 1:
        tail_sides = np.array([tail / 2.0, tail / 2.0])
    else:
        tail_sides = np.array([tail])

    return QuadratureTable(kernel=k, h=h, r_max=r_max, r_cut=r_cut,
                           offsets=far_offsets.astype(np.int64),
                           weights=weights, offset_norms=far_norms,
                           near_edge=near_edge, nf_axis=nf_axis,
                           tail_mass=float(tail), tail_sides=tail_sides)


def exterior_mass(k: Kernel, dom: Domain, x, qt: QuadratureTable) -> float:
    """Quadrature estimate of the kernel mass over Omega^c - x.

    Includes the tail over-estimate; valid for x in the closed domain with
    r_max exceeding the domain diameter (the tail is then fully exterior).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    pts = x[None, :] + qt.offsets * qt.h
    outside = signed_distance_many(dom, pts) <= 0.0
    return float(qt.weights[outside].sum()) + qt.tail_mass


def exterior_mass_many(k: Kernel, dom: Domain, pts: np.ndarray,
                       qt: QuadratureTable) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    out = np.empty(pts.shape[0])
    for i, x in enumerate(pts):
        out[i] = exterior_mass(k, dom, x, qt)
    return out
