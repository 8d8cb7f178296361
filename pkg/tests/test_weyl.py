"""Weyl curvature in 4D: decomposition oracle, duality split, conformal
behavior, the divergence shift, and the rough-Laplacian balance."""

import itertools
import math

import numpy as np
import pytest

from curvbench.metrics import builtin_model, conformal_rescale
from curvbench.tensors import curvature_bundle
from curvbench.weyl import (
    algebra_identity_suite,
    divergence_shift_residual,
    weyl_split,
    weyl_split_fields,
    z_field,
    z_field_weitzenboeck,
)
from curvbench.collar import make_collar

S2XS2_NORM2 = 4.0 / 3.0           # |W|^2 = W.W/4 for unit S^2 x S^2
KAHLER_PLUS = 2.0 / 3.0           # R^2/24 in the same normalization

WARPED_DOC = """
dim = 4
coords = x1 x2 x3 x4
domain.x1 = [0.3, 1.4]
domain.x2 = [0, 3.141592653589793]
domain.x3 = [0, 6.283185307179586] periodic
domain.x4 = [0, 1] periodic
g11 = 1
g22 = x1^2
g33 = x1^2 * sin(x2)^2
g44 = 1 + 0.2*cos(x2)
"""


def _pts(spec, n=5, seed=0):
    rng = np.random.default_rng(seed)
    return spec.sample_interior(rng, n, margin=0.1)


def _weyl_by_hand(bundle):
    """Weyl tensor assembled index-by-index from its textbook definition,
    with no shared code with the package routines."""
    g, ric, scal, riem = bundle.g, bundle.ricci, bundle.scalar, bundle.riemann
    w = np.zeros((4, 4, 4, 4))
    for i, j, k, l in itertools.product(range(4), repeat=4):
        w[i, j, k, l] = (
            riem[i, j, k, l]
            - 0.5 * (g[i, k] * ric[j, l] - g[i, l] * ric[j, k]
                     + g[j, l] * ric[i, k] - g[j, k] * ric[i, l])
            + scal / 6.0 * (g[i, k] * g[j, l] - g[i, l] * g[j, k]))
    return w


def _star_by_hand(bundle, w, orientation=1):
    eps = np.zeros((4, 4, 4, 4))
    for perm in itertools.permutations(range(4)):
        sign = 1.0
        p = list(perm)
        for a in range(4):
            for b in range(a + 1, 4):
                if p[a] > p[b]:
                    sign = -sign
        eps[perm] = sign
    vol = orientation * math.sqrt(np.linalg.det(bundle.g)) * eps
    ginv = bundle.g_inv
    vol_mixed = np.einsum("ijmn,mk,nl->ijkl", vol, ginv, ginv)
    return 0.5 * np.einsum("ijmn,mnkl->ijkl", vol_mixed, w)


def test_weyl_matches_textbook_definition():
    spec = builtin_model("s2xs2")
    for pt in _pts(spec, 4):
        b = curvature_bundle(spec, pt)
        split = weyl_split(b)
        np.testing.assert_allclose(split.w, _weyl_by_hand(b), atol=1e-11)


def test_weyl_is_totally_trace_free():
    from curvbench.metrics import parse_metric_spec
    spec = parse_metric_spec(WARPED_DOC)
    for pt in _pts(spec, 4, seed=1):
        b = curvature_bundle(spec, pt)
        w = weyl_split(b).w
        trace = np.einsum("ik,ijkl->jl", b.g_inv, w)
        assert np.max(np.abs(trace)) < 1e-10


def test_duality_split_properties():
    spec = builtin_model("s2xs2")
    for pt in _pts(spec, 3, seed=2):
        b = curvature_bundle(spec, pt)
        split = weyl_split(b)
        # star is an involution on 2-forms in Riemannian signature
        star_star = _star_by_hand(b, _star_by_hand(b, split.w))
        np.testing.assert_allclose(star_star, split.w, atol=1e-11)
        # the halves recombine and are genuine eigenvectors of star
        np.testing.assert_allclose(split.w_plus + split.w_minus, split.w,
                                   atol=1e-12)
        np.testing.assert_allclose(_star_by_hand(b, split.w_plus),
                                   split.w_plus, atol=1e-11)
        np.testing.assert_allclose(_star_by_hand(b, split.w_minus),
                                   -split.w_minus, atol=1e-11)
        # the split is orthogonal: <W+, W-> = 0 and norms add
        inner = np.einsum("ia,jb,kc,ld,ijkl,abcd->",
                          b.g_inv, b.g_inv, b.g_inv, b.g_inv,
                          split.w_plus, split.w_minus) / 4.0
        assert abs(inner) < 1e-12
        assert abs(split.plus_norm2 + split.minus_norm2
                   - split.norm2) < 1e-12


def test_product_of_spheres_closed_form():
    # |Riem|^2 = 8, Ric = g, R = 4 gives |W|^2 = (8 - 16/3)/4 = 4/3, split
    # evenly between the halves (Kahler-Einstein: |W+|^2 = R^2/24)
    spec = builtin_model("s2xs2")
    for pt in _pts(spec, 4, seed=3):
        split = weyl_split(curvature_bundle(spec, pt))
        assert abs(split.norm2 - S2XS2_NORM2) < 1e-11
        assert abs(split.plus_norm2 - KAHLER_PLUS) < 1e-11
        assert abs(split.minus_norm2 - KAHLER_PLUS) < 1e-11


def test_orientation_swap_exchanges_halves():
    spec = builtin_model("s2xs2")
    pt = _pts(spec, 1, seed=4)[0]
    b = curvature_bundle(spec, pt)
    plus = weyl_split(b, orientation=1)
    minus = weyl_split(b, orientation=-1)
    np.testing.assert_allclose(plus.w_plus, minus.w_minus, atol=1e-13)
    np.testing.assert_allclose(plus.plus_norm2, minus.minus_norm2,
                               atol=1e-13)


def test_collar_boundary_is_weyl_free():
    # dr^2 + (1 - r^2/4)^2 sigma_round is conformally flat: W = 0
    spec = builtin_model("hyperbolic-collar")
    for pt in _pts(spec, 4, seed=5):
        split = weyl_split(curvature_bundle(spec, pt))
        assert split.norm2 < 1e-13


def test_conformal_covariance_pointwise():
    # with lowered indices W(e^{2w} g) = e^{2w} W(g), so the norm scales
    # by e^{-4w} and the duality halves never mix
    spec = builtin_model("s2xs2")
    w_expr = "0.2*cos(x1) + 0.1*sin(x3)*sin(x2)"
    scaled = conformal_rescale(spec, w_expr)
    pts = _pts(spec, 5, seed=6)
    base = weyl_split_fields(spec, pts)
    resc = weyl_split_fields(scaled, pts)
    wv = 0.2 * np.cos(pts[:, 0]) + 0.1 * np.sin(pts[:, 2]) * np.sin(pts[:, 1])
    factor = np.exp(2.0 * wv)
    np.testing.assert_allclose(
        resc["weyl"], factor[:, None, None, None, None] * base["weyl"],
        atol=1e-7)
    np.testing.assert_allclose(resc["plus_norm2"],
                               np.exp(-4.0 * wv) * base["plus_norm2"],
                               rtol=1e-7)
    np.testing.assert_allclose(resc["minus_norm2"],
                               np.exp(-4.0 * wv) * base["minus_norm2"],
                               rtol=1e-7)


def test_weyl_l2_integral_is_conformally_invariant():
    # |W|^2 dV is a pointwise conformal invariant in 4D; integrate both
    # sides on a modest grid and compare
    from curvbench.quadrature import quadrature_integrate
    spec = builtin_model("s2xs2")
    scaled = conformal_rescale(spec, "0.15*cos(x1) + 0.1*sin(x3)")

    def density(model):
        def f(pts):
            return weyl_split_fields(model, pts)["norm2"]
        return f

    base, _ = quadrature_integrate(spec, density(spec), resolution=8)
    resc, _ = quadrature_integrate(scaled, density(scaled), resolution=8)
    assert abs(base - resc) <= 1e-4 * abs(base)


def test_divergence_shift_identity():
    # delta W(e^{2w}g) = e^{-2w}(delta W(g) - W(g)(grad w, ...)) in the
    # package's index layout; the residual is the difference of the sides
    spec = builtin_model("s2xs2")
    pts = _pts(spec, 6, seed=7)
    out = divergence_shift_residual(spec, "0.2*cos(x1) + 0.1*sin(x3)", pts)
    assert out["max_rel"] < 1e-6
    scale = np.max(np.abs(out["rhs"]))
    np.testing.assert_allclose(out["lhs"], out["rhs"], atol=1e-6 * scale)


def test_z_field_selfdual_branch_suppresses_minus_half():
    # the normalized field Z = W/r^2 keeps a finite self-dual part as
    # r -> 0 while the anti-self-dual part dies at fourth order
    boundary = builtin_model("berger", {"eps": 2.0})
    collar = make_collar(boundary, branch="selfdual", r_max=0.3)
    pts = boundary.sample_interior(np.random.default_rng(8), 4, margin=0.1)
    z_small = z_field(collar, 0.01, pts)
    z_big = z_field(collar, 0.02, pts)
    assert z_small.z_plus.shape == (4, 4, 4, 4, 4)
    assert np.all(z_small.plus_norm2 > 100.0)
    assert np.all(z_small.minus_norm2 < 1e-4 * z_small.plus_norm2)
    ratio = z_big.minus_norm2 / z_small.minus_norm2
    assert np.all(ratio > 10.0) and np.all(ratio < 32.0)
    # orientation reversal exchanges the halves
    z_flip = z_field(collar, 0.01, pts, orientation=-1)
    np.testing.assert_allclose(z_flip.minus_norm2, z_small.plus_norm2,
                               rtol=1e-12)


def test_weitzenboeck_balance_on_product_metric():
    spec = builtin_model("s2xs2")
    rng = np.random.default_rng(9)
    pts = spec.sample_interior(rng, 8, margin=0.12)
    report = z_field_weitzenboeck(spec, "0.15*cos(x1) + 0.1*sin(x3)", pts)
    assert report.precondition < 1e-8
    assert np.max(report.weitzenboeck_residual) < 1e-6
    assert np.max(report.harmonic_residual) < 1e-8
    assert np.min(report.kato_margin) > -1e-8
    assert {"lhs", "rhs", "lap_u"} <= set(report.parts)


def test_algebra_identity_suite_all_pass():
    report = algebra_identity_suite(rng=np.random.default_rng(10),
                                    pairs=2000)
    assert len(report.items) >= 5
    for item in report.items:
        assert item.passed, (item.name, item.value, item.tolerance)
        assert item.value <= item.tolerance
    names = {item.name for item in report.items}
    assert "two-circle-max" in names
