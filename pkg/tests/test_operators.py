import numpy as np
import pytest

from nlhj.errors import NodeOutsideGrid, UnsupportedOrder
from nlhj.geometry import Domain, Grid
from nlhj.hamiltonians import BellmanSpec, ControlLaw
from nlhj.kernels import build_quadrature, fractional_laplacian_kernel
from nlhj.operators import (ALL, Field, Region, eval_censored, eval_operator,
                            scheme_evaluation)
from nlhj.oracles import censored_oracle_1d, operator_oracle_1d

from conftest import grid_for

ZERO_PHI = lambda p, t: np.zeros(p.shape[0])
BUMP = lambda p: np.maximum(0.0, 1.0 - p[:, 0] ** 2)


def make_field(dom, h, r_max, u0, phi=ZERO_PHI, policy="upper"):
    g = grid_for(dom, h, r_max)
    return Field.from_function(g, u0, phi, 0.0, policy)


def test_constant_field_vanishes(dom1, k05, k15):
    for k in (k05, k15):
        qt = build_quadrature(k, 2.0 ** -6, 8.0)
        f = make_field(dom1, 2.0 ** -6, 8.0, lambda p: np.full(p.shape[0], 3.0),
                       lambda p, t: np.full(p.shape[0], 3.0))
        for region in (ALL, Region.ball(0.5), Region.ball_complement(0.5)):
            assert eval_operator(f, 0.0, 0.7, qt, region) == pytest.approx(0.0, abs=1e-12)
    qt = build_quadrature(k05, 2.0 ** -6, 8.0)
    f = make_field(dom1, 2.0 ** -6, 8.0, lambda p: np.full(p.shape[0], 3.0),
                   lambda p, t: np.full(p.shape[0], 3.0))
    assert eval_censored(f, 0.0, qt) == pytest.approx(0.0, abs=1e-12)


def test_affine_field_symmetric_kernel(dom1, k15):
    # odd integrand cancels under symmetry (alpha >= 1, compensator active);
    # evaluated at the grid center so the constant-continuation tails cancel
    qt = build_quadrature(k15, 2.0 ** -6, 8.0)
    slope = 0.7
    f = make_field(dom1, 2.0 ** -6, 8.0, lambda p: slope * p[:, 0],
                   lambda p, t: slope * p[:, 0])
    v = eval_operator(f, 0.0, slope, qt, ALL)
    assert v == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize("alpha", [0.5, 1.5])
def test_matches_adaptive_quadrature(dom1, alpha):
    k = fractional_laplacian_kernel(alpha, 1)
    h = 2.0 ** -8
    qt = build_quadrature(k, h, 8.0)
    f = make_field(dom1, h, 8.0, BUMP)
    v = eval_operator(f, 0.0, 0.0, qt, ALL)
    fn = lambda x: max(0.0, 1.0 - x * x)
    ref = operator_oracle_1d(fn, 0.0, k, points=[-1.0, 1.0], grad=0.0)
    assert v == pytest.approx(ref, rel=1e-2)


def test_partition_ball_plus_complement(dom1, k05, k15):
    for k in (k05, k15):
        qt = build_quadrature(k, 2.0 ** -6, 8.0)
        f = make_field(dom1, 2.0 ** -6, 8.0, BUMP)
        for delta in (0.25, 1.0):
            tot = eval_operator(f, 0.25, 0.3, qt, ALL)
            a = eval_operator(f, 0.25, 0.3, qt, Region.ball(delta))
            b = eval_operator(f, 0.25, 0.3, qt, Region.ball_complement(delta))
            assert a + b == pytest.approx(tot, rel=1e-12, abs=1e-12)


def test_compensator_ignored_below_one(dom1, k05):
    qt = build_quadrature(k05, 2.0 ** -6, 8.0)
    f = make_field(dom1, 2.0 ** -6, 8.0, BUMP)
    v1 = eval_operator(f, 0.25, 0.0, qt, ALL)
    v2 = eval_operator(f, 0.25, 123.0, qt, ALL)
    assert v1 == v2


def test_monotonicity_in_field_values(dom1, k05):
    qt = build_quadrature(k05, 2.0 ** -6, 8.0)
    g = grid_for(dom1, 2.0 ** -6, 8.0)
    rng = np.random.default_rng(7)
    base = rng.standard_normal(g.size) * 0.1
    other = base + np.abs(rng.standard_normal(g.size)) * 0.1
    x0 = g.flat_index_of(0.25)
    other[x0] = base[x0]  # equality at the evaluated node
    fa = Field(g, base, ZERO_PHI)
    fb = Field(g, other, ZERO_PHI)
    # exterior/trace slots are overwritten identically by the datum
    va = eval_operator(fa, 0.25, 0.0, qt, ALL)
    vb = eval_operator(fb, 0.25, 0.0, qt, ALL)
    assert va <= vb + 1e-13


def test_translation_covariance_bitwise(k05):
    dom = Domain((-4,), (4,))
    h = 2.0 ** -5
    qt = build_quadrature(k05, h, 2.0)
    g = grid_for(dom, h, 2.0)
    bump = lambda c: (lambda p: np.maximum(0.0, 0.25 - (p[:, 0] - c) ** 2))
    s = 8 * h
    f1 = Field.from_function(g, bump(0.0), ZERO_PHI)
    f2 = Field.from_function(g, bump(s), ZERO_PHI)
    v1 = eval_operator(f1, 0.25, 0.0, qt, ALL)
    v2 = eval_operator(f2, 0.25 + s, 0.0, qt, ALL)
    assert v1 == v2  # identical summands in identical order


def test_censored_operator(dom1, k05):
    h = 2.0 ** -10
    qt = build_quadrature(k05, h, 8.0)
    g = grid_for(dom1, h, 8.0)
    lin = lambda p: p[:, 0]
    f = Field.from_function(g, lin, lambda p, t: p[:, 0])
    x = g.points_at(np.array([g.flat_index_of(0.99)]))[0][0]
    v = eval_censored(f, x, qt)
    ref = censored_oracle_1d(lambda y: y, float(x), k05, dom1)
    assert v == pytest.approx(ref, rel=3e-2)


def test_censored_requires_small_alpha(dom1, k15):
    qt = build_quadrature(k15, 2.0 ** -6, 8.0)
    f = make_field(dom1, 2.0 ** -6, 8.0, BUMP)
    with pytest.raises(UnsupportedOrder):
        eval_censored(f, 0.0, qt)


def test_censored_partition_identity(dom1, k05):
    # full minus censored equals the exterior part plus the tail
    h = 2.0 ** -6
    qt = build_quadrature(k05, h, 8.0)
    g = grid_for(dom1, h, 8.0)
    f = Field.from_function(g, BUMP, ZERO_PHI)
    x = 0.25
    full = eval_operator(f, x, 0.0, qt, ALL)
    cen = eval_censored(f, x, qt)
    flat = g.flat_index_of(x)
    E = f.values
    center = E[flat]
    pts = np.array([x]) + qt.offsets[:, 0] * qt.h
    outside = np.array([not (-1 < p < 1) for p in pts])
    ext_part = float(np.dot(qt.weights[outside],
                            E[flat + g.offset_to_flat(qt.offsets[outside])])
                     - qt.weights[outside].sum() * center)
    tv = f.tail_values()
    ext_part += qt.tail_sides[0] * (tv[0] - center)
    ext_part += qt.tail_sides[1] * (tv[1] - center)
    assert full - cen == pytest.approx(ext_part, rel=1e-12, abs=1e-12)


def test_node_outside_grid(dom1, k05):
    qt = build_quadrature(k05, 2.0 ** -6, 8.0)
    f = make_field(dom1, 2.0 ** -6, 8.0, BUMP)
    with pytest.raises(NodeOutsideGrid):
        eval_operator(f, 50.0, 0.0, qt, ALL)
    with pytest.raises(NodeOutsideGrid):
        # stored node, but its stencil leaves the storage block
        eval_operator(f, 8.5, 0.0, qt, ALL)


def test_field_envelope_policies(dom1):
    g = grid_for(dom1, 0.25, 4)
    phi = lambda p, t: np.full(p.shape[0], 2.0)
    raw = np.zeros(g.size)
    up = Field(g, raw, phi, policy="upper")
    lo = Field(g, raw, phi, policy="lower")
    assert np.all(up.values[g.trace_flat] == 2.0)   # max(0, 2)
    assert np.all(lo.values[g.trace_flat] == 0.0)   # min(0, 2)
    assert np.all(up.values[g.exterior_flat] == 2.0)
    assert np.all(up.trace_gap() == 2.0)  # phi - raw


def test_field_serialization_header(tmp_path, dom1):
    from nlhj.operators import save_field
    g = grid_for(dom1, 0.25, 4)
    f = Field.from_function(g, BUMP, ZERO_PHI, t=0.5)
    out = tmp_path / "field.tsv"
    save_field(f, out, alpha=0.5)
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# t=0.5 h=0.25 alpha=0.5")
    assert len(lines) == 1 + g.size
    assert len(lines[1].split("\t")) == 2  # coordinate, value


def test_scheme_evaluation_trivial(dom1, k05):
    qt = build_quadrature(k05, 2.0 ** -6, 8.0)
    f = make_field(dom1, 2.0 ** -6, 8.0, lambda p: np.zeros(p.shape[0]))
    ident = BellmanSpec([ControlLaw(lam=1.0, b=0.0, f=0.0)])
    # stationary zero field with H(r) = r
    assert scheme_evaluation(f, 0.0, 0.0, 0.0, 0.0, ident, qt) == pytest.approx(0.0, abs=1e-12)
    zero_h = BellmanSpec([ControlLaw(lam=0.0, b=0.0, f=0.0)])
    # only the time slot survives
    assert scheme_evaluation(f, 0.0, 0.0, 1.0, 0.0, zero_h, qt) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        scheme_evaluation(f, 0.0, 0.0, 0.0, 0.0, ident, qt, delta=qt.h / 4)


def test_operator_2d_radial_oracle(dom2):
    from nlhj.kernels import fractional_laplacian_kernel
    from nlhj.oracles import operator_oracle_2d_radial
    k = fractional_laplacian_kernel(0.5, 2)
    h = 2.0 ** -5
    qt = build_quadrature(k, h, 2.0)
    g = grid_for(dom2, h, 2.0)
    u0 = lambda p: np.maximum(0.0, 1.0 - (p ** 2).sum(axis=1))
    f = Field.from_function(g, u0, ZERO_PHI)
    v = eval_operator(f, (0.0, 0.0), (0.0, 0.0), qt, ALL)
    ref = operator_oracle_2d_radial(lambda r: max(0.0, 1.0 - r * r), k,
                                    points=[1.0])
    assert v == pytest.approx(ref, rel=5e-2)
