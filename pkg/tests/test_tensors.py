"""Curvature bundles: model spaces with known curvature, frame route,
metric compatibility, boundary mean curvature."""

import numpy as np
import pytest

from curvbench.metrics import builtin_model
from curvbench.tensors import (
    boundary_mean_curvature,
    christoffel,
    covariant_derivative,
    curvature_bundle,
    frame_curvature,
    su2_frame,
)

CHART_TOL = 1e-10        # exact jets feed the bundle, so only roundoff
FD_TOL = 5e-7            # covariant_derivative differentiates numerically


def _samples(spec, n=10, seed=0):
    rng = np.random.default_rng(seed)
    return spec.sample_interior(rng, n, margin=0.1)


def test_round_sphere_is_unit_curvature():
    # unit S^3: Riem_ijkl = g_ik g_jl - g_il g_jk, Ric = 2g, R = 6
    spec = builtin_model("round-s3")
    for pt in _samples(spec, 6):
        b = curvature_bundle(spec, pt)
        g = b.g
        expected = (np.einsum("ik,jl->ijkl", g, g)
                    - np.einsum("il,jk->ijkl", g, g))
        np.testing.assert_allclose(b.riemann, expected, atol=CHART_TOL)
        np.testing.assert_allclose(b.ricci, 2.0 * g, atol=CHART_TOL)
        assert abs(b.scalar - 6.0) < CHART_TOL
        # Schouten of the unit sphere: P = Ric - (R/4) g = g/2
        np.testing.assert_allclose(b.schouten, 0.5 * g, atol=CHART_TOL)


def test_flat_torus_is_flat():
    spec = builtin_model("flat-t3")
    for pt in _samples(spec, 4):
        b = curvature_bundle(spec, pt)
        assert np.max(np.abs(b.riemann)) < 1e-14
        assert np.max(np.abs(b.christoffel)) < 1e-14


def test_product_of_spheres_is_einstein():
    # unit S^2 x S^2: Ric = g, R = 4
    spec = builtin_model("s2xs2")
    for pt in _samples(spec, 6, seed=1):
        b = curvature_bundle(spec, pt)
        np.testing.assert_allclose(b.ricci, b.g, atol=CHART_TOL)
        assert abs(b.scalar - 4.0) < CHART_TOL


def test_riemann_symmetries():
    spec = builtin_model("perturbed-s3", {"t": 0.2, "seed": 5})
    for pt in _samples(spec, 5, seed=2):
        r = curvature_bundle(spec, pt).riemann
        np.testing.assert_allclose(r, -r.transpose(1, 0, 2, 3), atol=1e-12)
        np.testing.assert_allclose(r, -r.transpose(0, 1, 3, 2), atol=1e-12)
        np.testing.assert_allclose(r, r.transpose(2, 3, 0, 1), atol=1e-12)
        # first Bianchi
        bianchi = (r + r.transpose(0, 2, 3, 1) + r.transpose(0, 3, 1, 2))
        np.testing.assert_allclose(bianchi, 0.0, atol=1e-12)


def test_christoffel_is_torsion_free_and_compatible():
    spec = builtin_model("perturbed-s3", {"t": 0.2, "seed": 5})
    for pt in _samples(spec, 4, seed=3):
        gamma = christoffel(spec, pt)
        np.testing.assert_allclose(gamma, gamma.transpose(0, 2, 1), atol=0)

        # nabla g = 0, checked with the generic covariant derivative
        def metric_field(pts):
            return spec.metric_values(pts)

        nabla_g = covariant_derivative(spec, metric_field, "dd", pt,
                                       richardson=True)
        assert np.max(np.abs(nabla_g)) < FD_TOL


def test_scalar_covariant_derivative_is_plain_gradient():
    spec = builtin_model("perturbed-s3", {"t": 0.15, "seed": 7})
    pt = _samples(spec, 1, seed=4)[0]

    def f(pts):
        return np.sin(pts[:, 0]) * np.cos(pts[:, 2])

    grad = covariant_derivative(spec, f, "", pt, richardson=True)
    expected = np.array([np.cos(pt[0]) * np.cos(pt[2]), 0.0,
                         -np.sin(pt[0]) * np.sin(pt[2])])
    np.testing.assert_allclose(grad, expected, atol=FD_TOL)


@pytest.mark.parametrize("eps", [0.5, 1.0, 1.7])
def test_su2_frame_curvature_closed_form(eps):
    # Berger family in the left-invariant frame with [E_i, E_j] = 2 E_k and
    # g = diag(eps, 1, 1): the Ricci eigenvalues (of g^{-1} Ric) are the
    # classical (2 eps, 4 - 2 eps, 4 - 2 eps), so R = 8 - 2 eps
    bundle = frame_curvature(su2_frame(eps))
    np.testing.assert_allclose(bundle.g, np.diag([eps, 1.0, 1.0]), atol=0)
    mixed = np.linalg.solve(bundle.g, bundle.ricci)
    expected = np.diag([2.0 * eps, 4.0 - 2.0 * eps, 4.0 - 2.0 * eps])
    np.testing.assert_allclose(mixed, expected, atol=1e-12)
    np.testing.assert_allclose(bundle.scalar, 8.0 - 2.0 * eps, atol=1e-12)


def test_frame_and_chart_routes_agree():
    # scalar curvature invariants of berger eps=1.4 from the frame route vs
    # the Euler-angle chart route
    eps = 1.4
    frame_b = frame_curvature(su2_frame(eps))
    spec = builtin_model("berger", {"eps": eps})

    def mixed_eigs(g, ric):
        # eigenvalues of g^{-1} Ric via Cholesky whitening (keeps symmetry)
        lo = np.linalg.cholesky(g)
        white = np.linalg.solve(lo, np.linalg.solve(lo, ric).T)
        return np.sort(np.linalg.eigvalsh(white))

    for pt in _samples(spec, 5, seed=6):
        chart_b = curvature_bundle(spec, pt)
        assert abs(chart_b.scalar - frame_b.scalar) < 1e-9
        np.testing.assert_allclose(mixed_eigs(chart_b.g, chart_b.ricci),
                                   mixed_eigs(frame_b.g, frame_b.ricci),
                                   atol=1e-9)


def test_collar_mean_curvature_closed_form():
    # dr^2 + f(r)^2 sigma_round with f = 1 - r^2/4: the slice r = r0 has
    # H = -3 f'(r0)/f(r0) with respect to the outward normal -d/dr
    spec4 = builtin_model("hyperbolic-collar")
    for r0 in (0.3, 0.8, 1.2):
        f, fp = 1.0 - r0 ** 2 / 4.0, -r0 / 2.0
        pts, h = boundary_mean_curvature(spec4, r0, count=12,
                                         rng=np.random.default_rng(8))
        assert pts.shape == (12, 4)
        np.testing.assert_allclose(pts[:, 0], r0, atol=0)
        np.testing.assert_allclose(h, -3.0 * fp / f, rtol=1e-8)


def test_hyperbolic_collar_scalar_curvature():
    # warped product over the round sphere: R = 9 / f with f = 1 - r^2/4
    spec4 = builtin_model("hyperbolic-collar")
    for pt in _samples(spec4, 5, seed=9):
        b = curvature_bundle(spec4, pt)
        f = 1.0 - pt[0] ** 2 / 4.0
        np.testing.assert_allclose(b.scalar, 9.0 / f, rtol=1e-10)
