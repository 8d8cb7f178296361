"""Cotton tensor, Cotton-York, V tensor, and the regularized invariant."""

import math

import numpy as np
import pytest

from curvbench.cotton import (
    DEFAULT_SCHEDULE,
    berger_closed_form,
    berger_invariant_exact,
    cotton_pack,
    i_epsilon,
    i_zero_estimate,
    invariance_residual,
)
from curvbench.metrics import builtin_model
from curvbench.tensors import su2_frame

FRAME_TOL = 1e-12       # frame route is algebraic, no differencing
CHART_TOL = 1e-7        # chart route uses Richardson-extrapolated stencils


def berger_pairing(eps):
    # <V, CY> for the Berger sphere, from the Koszul closed form
    return -576.0 * eps ** 1.5 * (eps - 1.0) ** 2


def berger_cy_norm2(eps):
    return 384.0 * eps * (eps - 1.0) ** 2


def test_flat_torus_has_no_cotton():
    pack = cotton_pack(builtin_model("flat-t3"),
                       point=np.array([0.4, 0.3, 0.7]))
    assert np.max(np.abs(pack.cotton)) < 1e-12
    assert abs(pack.pairing) < 1e-12 and abs(pack.cy_norm2) < 1e-12


def test_round_sphere_is_conformally_flat():
    spec = builtin_model("round-s3")
    rng = np.random.default_rng(3)
    for pt in spec.sample_interior(rng, 4, margin=0.1):
        pack = cotton_pack(spec, point=pt, richardson=True)
        assert np.max(np.abs(pack.cotton)) < 1e-8
        assert abs(pack.cy_norm2) < 1e-8


@pytest.mark.parametrize("eps", [0.6, 1.3, 2.0])
def test_berger_frame_closed_forms(eps):
    pack = cotton_pack(su2_frame(eps))
    assert abs(pack.pairing - berger_pairing(eps)) \
        <= FRAME_TOL * (1.0 + abs(berger_pairing(eps)))
    assert abs(pack.cy_norm2 - berger_cy_norm2(eps)) \
        <= FRAME_TOL * (1.0 + berger_cy_norm2(eps))


def test_cotton_tensor_symmetries():
    # C_ijk = -C_ikj, g^{ij} C_ijk = 0, and the cyclic sum vanishes
    spec = builtin_model("perturbed-s3", {"t": 0.2, "seed": 5})
    rng = np.random.default_rng(4)
    for pt in spec.sample_interior(rng, 3, margin=0.1):
        pack = cotton_pack(spec, point=pt, richardson=True)
        c = pack.cotton
        scale = np.max(np.abs(c)) + 1e-12
        np.testing.assert_allclose(c, -c.transpose(0, 2, 1),
                                   atol=1e-12 * scale)
        ginv = np.linalg.inv(pack.g)
        trace = np.einsum("ij,ijk->k", ginv, c)
        assert np.max(np.abs(trace)) < CHART_TOL * scale
        cyc = c + c.transpose(1, 2, 0) + c.transpose(2, 0, 1)
        assert np.max(np.abs(cyc)) < CHART_TOL * scale


def test_cotton_york_is_symmetric_trace_free():
    pack = cotton_pack(su2_frame(1.7))
    cy = pack.cotton_york
    np.testing.assert_allclose(cy, cy.T, atol=FRAME_TOL)
    ginv = np.linalg.inv(pack.g)
    assert abs(np.einsum("ij,ij->", ginv, cy)) < FRAME_TOL


def test_chart_route_matches_frame_route():
    eps = 1.6
    frame = cotton_pack(su2_frame(eps))
    spec = builtin_model("berger", {"eps": eps})
    rng = np.random.default_rng(6)
    for pt in spec.sample_interior(rng, 3, margin=0.1):
        chart = cotton_pack(spec, point=pt, richardson=True)
        assert abs(chart.pairing - frame.pairing) \
            <= CHART_TOL * abs(frame.pairing)
        assert abs(chart.cy_norm2 - frame.cy_norm2) \
            <= CHART_TOL * frame.cy_norm2


@pytest.mark.parametrize("eps", [0.5, 0.8, 1.25, 2.0])
def test_berger_invariant_against_closed_form(eps):
    computed, closed = berger_invariant_exact(eps)
    assert closed == berger_closed_form(eps)
    assert abs(computed - closed) <= 1e-12 * (1.0 + abs(closed))


def test_closed_form_shape():
    # I(eps) = -12 pi^2 (6 eps^4 (eps-1)^2)^(1/3): zero exactly at the
    # round sphere, negative elsewhere, symmetric factor in (eps-1)^2
    assert berger_closed_form(1.0) == 0.0
    eps = 1.37
    expected = -12.0 * math.pi ** 2 \
        * (6.0 * eps ** 4 * (eps - 1.0) ** 2) ** (1.0 / 3.0)
    assert abs(berger_closed_form(eps) - expected) < 1e-13 * abs(expected)
    assert berger_closed_form(0.5) < 0.0 and berger_closed_form(2.0) < 0.0


def test_invariance_residual_fd_and_jet():
    # <V,CY> scales by e^{-7w} and |CY|^2 by e^{-6w}; the jet route beats
    # the finite-difference route by construction
    spec = builtin_model("perturbed-s3", {"t": 0.25, "seed": 9})
    rng = np.random.default_rng(10)
    pts = spec.sample_interior(rng, 5, margin=0.1)
    w = "0.2*cos(x1) + 0.1*sin(x2)*sin(x3)"
    res7_fd, res6_fd = invariance_residual(spec, w, pts, method="fd")
    res7_jet, res6_jet = invariance_residual(spec, w, pts, method="jet")
    assert np.max(res7_fd) < 1e-4 and np.max(res6_fd) < 1e-4
    assert np.max(res7_jet) < 1e-6 and np.max(res6_jet) < 1e-6


def test_i_epsilon_monotone_pieces():
    # I_eps = integral of <V,CY> / (|CY|^2 + eps)^(2/3): on the Berger
    # sphere the integrand is a negative constant, so shrinking eps sends
    # I_eps down toward I_0 from above
    frame = su2_frame(1.5)
    vals = [i_epsilon(frame, e)[0] for e in (1e-2, 1e-3, 1e-4)]
    assert vals[0] > vals[1] > vals[2]
    pairing = berger_pairing(1.5)
    cy2 = berger_cy_norm2(1.5)
    vol = math.sqrt(1.5) * 2.0 * math.pi ** 2
    for e, v in zip((1e-2, 1e-3, 1e-4), vals):
        expected = vol * pairing / (cy2 + e) ** (2.0 / 3.0)
        assert abs(v - expected) <= 1e-10 * abs(expected)


def test_i_zero_estimate_round_sphere_flags_zero():
    report = i_zero_estimate(su2_frame(1.0))
    assert report.schedule == DEFAULT_SCHEDULE
    assert abs(report.i_zero) < 1e-10
    assert report.flag in ("zero", "nonneg", "converged")


def test_i_zero_estimate_berger_frame():
    eps = 2.0
    report = i_zero_estimate(su2_frame(eps))
    closed = berger_closed_form(eps)
    assert abs(report.i_zero - closed) <= 1e-8 * abs(closed)
    assert len(report.values) == len(report.schedule)
