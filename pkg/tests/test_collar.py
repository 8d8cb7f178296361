"""Collar metrics dr^2 + g_r: coefficient closed forms, series remainders,
branch behavior, and the V-tensor consistency check."""

import numpy as np
import pytest

from curvbench.collar import (
    collar_from_spec,
    collar_metric_eval,
    collar_series_residual,
    fg_coefficients,
    make_collar,
    v_tensors,
)
from curvbench.metrics import builtin_model, parse_metric_spec

ROUND_TOL = 1e-10


def _pts3(spec, n=6, seed=0):
    rng = np.random.default_rng(seed)
    return spec.sample_interior(rng, n, margin=0.1)


def test_round_sphere_coefficients_closed_form():
    # even branch over the unit round sphere: g_r = (1 - r^2/4)^2 ghat,
    # so g2 = -ghat/2, g3 = 0, g4 = ghat/16
    boundary = builtin_model("round-s3")
    coeffs = fg_coefficients(boundary, "even")
    pts = _pts3(boundary)
    f = coeffs.fields(pts)
    g = f["g"]
    np.testing.assert_allclose(f["g2"], -0.5 * g, atol=ROUND_TOL)
    np.testing.assert_allclose(f["g3"], 0.0, atol=ROUND_TOL)
    np.testing.assert_allclose(f["g4"], g / 16.0, atol=ROUND_TOL)


def test_round_selfdual_branch_also_kills_g3():
    # the round sphere has CY = 0, so the self-dual g3 vanishes as well
    boundary = builtin_model("round-s3")
    coeffs = fg_coefficients(boundary, "selfdual")
    f = coeffs.fields(_pts3(boundary))
    np.testing.assert_allclose(f["g3"], 0.0, atol=1e-8)


@pytest.mark.parametrize("branch", ["even", "selfdual"])
def test_g4_trace_identity(branch):
    # tr_ghat g4 = |P|^2/4 on both branches (berger eps=2 boundary)
    boundary = builtin_model("berger", {"eps": 2.0})
    coeffs = fg_coefficients(boundary, branch)
    pts = _pts3(boundary, seed=1)
    f = coeffs.fields(pts)
    ginv = np.linalg.inv(f["g"])
    tr_g4 = np.einsum("Nij,Nij->N", ginv, f["g4"])
    p_norm2 = np.einsum("Nik,Njl,Nij,Nkl->N", ginv, ginv,
                        f["schouten"], f["schouten"])
    np.testing.assert_allclose(tr_g4, 0.25 * p_norm2, atol=1e-9)


def test_g2_is_minus_schouten():
    boundary = builtin_model("berger", {"eps": 1.5})
    coeffs = fg_coefficients(boundary, "even")
    f = coeffs.fields(_pts3(boundary, seed=2))
    np.testing.assert_allclose(f["g2"], -f["schouten"], atol=1e-10)


def test_round_even_collar_reproduces_warped_product():
    # the degree-4 truncation of (1 - r^2/4)^2 is exact, so the assembled
    # collar must equal the builtin warped product on the nose
    collar = make_collar(builtin_model("round-s3"), branch="even",
                         r_max=0.5)
    target = builtin_model("hyperbolic-collar")
    rng = np.random.default_rng(3)
    pts4 = collar.assembled.sample_interior(rng, 12, margin=0.05)
    np.testing.assert_allclose(collar.assembled.metric_values(pts4),
                               target.metric_values(pts4), atol=1e-12)


def test_collar_metric_eval_matches_series():
    boundary = builtin_model("berger", {"eps": 2.0})
    collar = make_collar(boundary, branch="selfdual", r_max=0.3)
    pts = _pts3(boundary, seed=4)
    f = collar.coefficients.fields(pts)
    for r in (0.05, 0.2):
        out = collar_metric_eval(collar, r, pts)
        series = (f["g"] + r ** 2 * f["g2"] + r ** 3 * f["g3"]
                  + r ** 4 * f["g4"])
        # normal form: g_rr = 1, no cross terms, tangential block = series
        g4d = out["g"]
        np.testing.assert_allclose(g4d[:, 1:, 1:], series, atol=1e-12)
        np.testing.assert_allclose(g4d[:, 0, 0], 1.0, atol=1e-14)
        np.testing.assert_allclose(g4d[:, 0, 1:], 0.0, atol=1e-14)
        ambient = collar.assembled.metric_values(
            np.column_stack([np.full(len(pts), r), pts]))
        np.testing.assert_allclose(ambient, g4d, atol=1e-12)


def test_series_remainders_have_designed_order():
    boundary = builtin_model("berger", {"eps": 2.0})
    collar = make_collar(boundary, branch="selfdual", r_max=0.3)
    rng = np.random.default_rng(5)
    for check in ("christoffel", "riemann", "schouten"):
        fits = collar_series_residual(collar, check, count=4, rng=rng)
        for family, fit in fits.items():
            assert fit.passed, (check, family, fit.slope, fit.exact)


def test_round_collar_series_is_exact():
    # every family collapses to the residual floor for the warped product
    collar = make_collar(builtin_model("round-s3"), branch="even",
                         r_max=0.3)
    rng = np.random.default_rng(6)
    fits = collar_series_residual(collar, "riemann", count=4, rng=rng)
    assert any(fit.exact for fit in fits.values())
    assert all(fit.passed for fit in fits.values())


def test_v_tensor_routes_agree():
    boundary = builtin_model("berger", {"eps": 1.5})
    for branch in ("even", "selfdual"):
        coeffs = fg_coefficients(boundary, branch)
        pts = _pts3(boundary, seed=7)
        vt = v_tensors(boundary, coeffs, pts)
        assert vt.max_diff < 1e-6
        np.testing.assert_allclose(vt.v4_direct, vt.v4_reduced, atol=1e-6)


def test_collar_from_spec_roundtrip():
    doc = "[collar]\nboundary = round-s3\nbranch = even\nr_max = 0.5\n"
    doc_spec = parse_metric_spec(doc)
    collar = collar_from_spec(doc_spec)
    assert collar.order == 4
    assert collar.boundary.dim == 3
    direct = make_collar(builtin_model("round-s3"), branch="even",
                         r_max=collar.r_max)
    rng = np.random.default_rng(8)
    pts4 = collar.assembled.sample_interior(rng, 8, margin=0.05)
    np.testing.assert_allclose(collar.assembled.metric_values(pts4),
                               direct.assembled.metric_values(pts4),
                               atol=1e-10)


def test_scale_knobs_perturb_single_coefficients():
    boundary = builtin_model("berger", {"eps": 2.0})
    base = make_collar(boundary, branch="selfdual", r_max=0.3)
    bumped = make_collar(boundary, branch="selfdual", r_max=0.3,
                         g3_scale=1.1)
    pts = _pts3(boundary, seed=9)
    f0, f1 = base.coefficients.fields(pts), bumped.coefficients.fields(pts)
    np.testing.assert_allclose(f1["g2"], f0["g2"], atol=1e-13)
    np.testing.assert_allclose(f1["g3"], 1.1 * f0["g3"], atol=1e-13)
    np.testing.assert_allclose(f1["g4"], f0["g4"], atol=1e-13)


def test_rejects_wrong_dimension():
    with pytest.raises(ValueError):
        make_collar(builtin_model("s2xs2"), branch="even")
    with pytest.raises(ValueError):
        make_collar(builtin_model("round-s3"), branch="odd")
