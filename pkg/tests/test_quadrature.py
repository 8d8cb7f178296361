"""Quadrature grids: exactness, chart volumes, fixed parallel reduction."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvbench.metrics import builtin_model, parse_metric_spec
from curvbench.quadrature import (
    grid_nodes,
    integrate_on_grid,
    pairwise_sum,
    quadrature_integrate,
)

TWO_PI2 = 2.0 * math.pi ** 2          # volume of the unit round 3-sphere
S2XS2_VOL = (4.0 * math.pi) ** 2

FLAT_BOX = """
dim = 3
coords = x1 x2 x3
domain.x1 = [-1, 1]
domain.x2 = [0, 1]
domain.x3 = [0, 1]
g11 = 1
g22 = 1
g33 = 1
"""


def _one(pts):
    return np.ones(pts.shape[0])


def test_weights_cover_the_coordinate_box():
    spec = builtin_model("flat-t3")
    pts, w = grid_nodes(spec, (6, 7, 8))
    box = np.prod([d.hi - d.lo for d in spec.domains])
    assert pts.shape == (6 * 7 * 8, 3)
    np.testing.assert_allclose(pairwise_sum(w), box, rtol=1e-13)


def test_round_sphere_volume():
    spec = builtin_model("round-s3")
    val, err = quadrature_integrate(spec, _one, resolution=(4, 24, 5))
    # periodic axes are exact at tiny resolutions; only the polar
    # Gauss-Legendre axis carries error
    np.testing.assert_allclose(val, TWO_PI2, rtol=1e-12)
    assert err <= 1e-10


def test_product_of_spheres_volume():
    spec = builtin_model("s2xs2")
    val, err = quadrature_integrate(spec, _one, resolution=(20, 4, 20, 4))
    np.testing.assert_allclose(val, S2XS2_VOL, rtol=1e-12)
    assert err <= 1e-9


def test_periodic_axis_kills_low_harmonics():
    # trapezoid on an N-node periodic circle integrates e^{ikx} exactly
    # for 0 < |k| < N
    spec = builtin_model("flat-t3")     # the unit torus [0,1)^3
    for k in (1, 2, 5):
        def integrand(pts, k=k):
            ang = 2.0 * math.pi * k
            return np.cos(ang * pts[:, 0]) + np.sin(ang * pts[:, 1])
        val = integrate_on_grid(spec, integrand, (8, 8, 4))
        assert abs(val) < 1e-13


@settings(max_examples=30, deadline=None)
@given(coeffs=st.lists(st.floats(min_value=-2, max_value=2,
                                 allow_nan=False), min_size=1, max_size=6))
def test_gauss_nodes_integrate_polynomials_exactly(coeffs):
    # n-point Gauss-Legendre is exact through degree 2n-1; degree <= 5
    # needs only 3 nodes on the non-periodic axis
    spec = parse_metric_spec(FLAT_BOX)

    def integrand(pts):
        x = pts[:, 0]
        return sum(c * x ** k for k, c in enumerate(coeffs)) + 0.0 * x

    val = integrate_on_grid(spec, integrand, (3, 2, 2))
    exact = sum(c * (1.0 - (-1.0) ** (k + 1)) / (k + 1)
                for k, c in enumerate(coeffs))
    scale = 1.0 + max(abs(c) for c in coeffs)
    assert abs(val - exact) <= 1e-12 * scale


def test_error_estimate_brackets_truth():
    # the reported value is the doubled-resolution one; its true error on a
    # smooth non-trivial integrand sits well inside the reported estimate
    spec = builtin_model("round-s3")

    def integrand(pts):
        return np.exp(0.3 * np.cos(pts[:, 1]))

    val, err = quadrature_integrate(spec, integrand, resolution=(4, 6, 5))
    ref = integrate_on_grid(spec, integrand, (8, 48, 10))
    assert abs(val - ref) <= max(err, 1e-13)


def test_threaded_reduction_is_bit_identical():
    spec = builtin_model("s2xs2")

    def integrand(pts):
        return 1.0 + 0.3 * np.cos(pts[:, 1]) + 0.1 * np.sin(pts[:, 3])

    a = quadrature_integrate(spec, integrand, resolution=10, threads=1)
    b = quadrature_integrate(spec, integrand, resolution=10, threads=2)
    c = quadrature_integrate(spec, integrand, resolution=10, threads=3)
    assert a == b == c


def test_pairwise_sum_matches_fsum():
    rng = np.random.default_rng(12)
    vals = rng.standard_normal(10_001) * np.logspace(-8, 8, 10_001)
    expected = math.fsum(vals.tolist())
    assert abs(pairwise_sum(vals) - expected) <= 1e-10 * abs(expected)


def test_non_finite_integrand_is_reported():
    spec = builtin_model("flat-t3")

    def integrand(pts):
        out = np.ones(pts.shape[0])
        out[0] = np.inf
        return out

    with pytest.raises(ValueError, match="non-finite"):
        integrate_on_grid(spec, integrand, (4, 4, 4))


def test_resolution_must_match_dimension():
    spec = builtin_model("round-s3")
    with pytest.raises((ValueError, IndexError)):
        quadrature_integrate(spec, _one, resolution=(4, 4))
