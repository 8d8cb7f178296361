"""Conformal energy with boundary term, renormalized volume, and the gap
inequality verdicts."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvbench.exprs import eval_jet2, parse_expr
from curvbench.functionals import (
    GAP_NAMES,
    GAP_REQUIREMENTS,
    ObstructionInputs,
    conformal_energy,
    gap_evaluators,
    renormalized_volume,
    restrict_interval,
    volume_upper_bound,
    weight_times,
)
from curvbench.metrics import builtin_model

S3_VOL = 2.0 * math.pi ** 2


def _energy_oracle_radial(phi_text, lo, hi, n=400):
    """E_h[phi] on dr^2 + f(r)^2 sigma_round, f = 1 - r^2/4, for radial
    phi: reduce to one dimension using R = 9/f and H = +-3 f'/f, and the
    slice area f^3 * Vol(S^3)."""
    phi = parse_expr(phi_text, ("x1",))
    nodes, weights = np.polynomial.legendre.leggauss(n)
    r = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * weights
    f = 1.0 - r ** 2 / 4.0
    vals = np.array([eval_jet2(phi, np.array([t])).value for t in r])
    dvals = np.array([eval_jet2(phi, np.array([t])).gradient[0] for t in r])
    interior = np.sum((dvals ** 2 + (9.0 / f) * vals ** 2 / 6.0)
                      * f ** 3 * w) * S3_VOL
    phi4 = np.sum(vals ** 4 * f ** 3 * w) * S3_VOL

    def face(r0, outward):
        ff = 1.0 - r0 ** 2 / 4.0
        h = outward * 3.0 * (-r0 / 2.0) / ff
        v = eval_jet2(phi, np.array([r0])).value
        return h * v ** 2 * ff ** 3 * S3_VOL / 3.0

    boundary = face(lo, -1.0) + face(hi, +1.0)
    return interior, boundary, phi4


def test_energy_matches_radial_oracle():
    spec4 = restrict_interval(builtin_model("hyperbolic-collar"), 0.2, 0.8)
    phi4d = "1 + 0.3*x1^2"
    vals = conformal_energy(spec4, phi4d, resolution=(20, 6, 10, 7))
    interior, boundary, phi4 = _energy_oracle_radial("1 + 0.3*x1^2",
                                                     0.2, 0.8)
    assert abs(vals.interior - interior) <= 1e-8 * abs(interior)
    assert abs(vals.boundary - boundary) <= 1e-8 * abs(boundary)
    assert abs(vals.phi4 - phi4) <= 1e-8 * abs(phi4)
    assert abs(vals.energy - (interior + boundary)) <= 1e-12 * abs(interior)
    assert abs(vals.yamabe - vals.energy / math.sqrt(phi4)) \
        <= 1e-12 * abs(vals.yamabe)


def test_energy_sees_nonradial_gradients():
    # a phi depending on the sphere directions picks up tangential
    # gradient energy that the radial reduction misses
    spec4 = restrict_interval(builtin_model("hyperbolic-collar"), 0.2, 0.8)
    radial = conformal_energy(spec4, "1 + 0.3*x1^2",
                              resolution=(16, 6, 8, 7))
    mixed = conformal_energy(spec4, "1 + 0.3*x1^2 + 0.1*cos(x3)",
                             resolution=(16, 10, 8, 9))
    assert mixed.interior > radial.interior


def test_energy_rejects_bad_inputs():
    with pytest.raises(ValueError, match="periodic"):
        conformal_energy(_periodic_first_axis(), "1", resolution=4)
    with pytest.raises(ValueError, match="4D"):
        conformal_energy(builtin_model("round-s3"), "1", resolution=4)


def _periodic_first_axis():
    from curvbench.metrics import parse_metric_spec
    return parse_metric_spec("""
    dim = 4
    coords = x1 x2 x3 x4
    domain.x1 = [0, 1] periodic
    domain.x2 = [0, 1]
    domain.x3 = [0, 1]
    domain.x4 = [0, 1]
    g11 = 1
    g22 = 1
    g33 = 1
    g44 = 1
    """)


def test_restrict_interval_validates():
    spec = builtin_model("hyperbolic-collar")
    cut = restrict_interval(spec, 0.3, 0.9)
    assert cut.domains[0].lo == 0.3 and cut.domains[0].hi == 0.9
    assert cut.domains[1:] == spec.domains[1:]
    with pytest.raises(ValueError):
        restrict_interval(spec, 0.9, 0.3)
    with pytest.raises(ValueError):
        restrict_interval(spec, -0.5, 1.0)


def test_weight_times_evaluates_to_weighted_product():
    expr = weight_times("1 + x1", "0.3*x2", coords=("x1", "x2", "x3"))
    pt = np.array([0.4, 1.1, 0.0])
    expected = math.exp(0.3 * 1.1) * 1.4
    assert abs(eval_jet2(expr, pt).value - expected) < 1e-14


def test_renormalized_volume_closed_form():
    # W = 0 saturates the bound: V = (4/3) pi^2 chi
    assert renormalized_volume(1, 0.0) == volume_upper_bound(1)
    np.testing.assert_allclose(renormalized_volume(1, 0.0),
                               4.0 * math.pi ** 2 / 3.0, rtol=1e-15)
    assert renormalized_volume(2, 3.0) \
        == pytest.approx(8.0 * math.pi ** 2 / 3.0 - 0.5)
    with pytest.raises(ValueError):
        renormalized_volume(1, -1.0)


@settings(max_examples=50, deadline=None)
@given(chi=st.integers(min_value=1, max_value=10),
       w2=st.floats(min_value=0, max_value=100, allow_nan=False))
def test_renormalized_volume_never_exceeds_bound(chi, w2):
    assert renormalized_volume(chi, w2) <= volume_upper_bound(chi) + 1e-12


def test_gap_names_and_requirements_agree():
    assert set(GAP_REQUIREMENTS) == set(GAP_NAMES)
    for name, fields in GAP_REQUIREMENTS.items():
        assert set(fields) <= {"tau", "eta", "chi", "yamabe",
                               "yamabe_type1", "weyl_l2", "weyl_plus_l2"}


def test_gap_verdicts_on_synthetic_inputs():
    inputs = ObstructionInputs(tau=0.0, eta=0.0, chi=1, yamabe=1.0,
                               yamabe_type1=10.0, weyl_l2=80.0,
                               weyl_plus_l2=0.0)
    verdicts = {v.name: v for v in gap_evaluators(inputs)}
    assert set(verdicts) == set(GAP_NAMES)

    # tau = eta: the signature obstruction holds with equality and the
    # verdict carries the rigidity note
    sig = verdicts["sigob"]
    assert sig.satisfied and sig.equality
    assert "hyperbolic" in sig.note

    # tau >= eta + chi/3 fails at tau = eta = 0, chi = 1
    assert verdicts["tauSD"].satisfied is False
    assert verdicts["tauSD"].margin == pytest.approx(-1.0 / 3.0)

    # eta <= -1/3 fails at eta = 0
    assert verdicts["tauSD2"].satisfied is False

    # |W+|^2 = 0 = 12 pi^2 (tau - eta): consistency holds
    assert verdicts["sigsd-consistency"].satisfied

    # 8 pi^2 <= 80 + 150
    assert verdicts["CY1"].satisfied

    # 100 >= 2 sqrt(6)
    assert verdicts["ChangGe"].satisfied

    # V = 4 pi^2/3 - 80/6 < min(2 pi^2/3, ...): holds
    assert verdicts["g3gap"].satisfied


def test_gap_missing_inputs_are_flagged_not_defaulted():
    inputs = ObstructionInputs(tau=1.0, eta=0.0, chi=1, yamabe=1.0,
                               yamabe_type1=None, weyl_l2=None,
                               weyl_plus_l2=None)
    verdicts = {v.name: v for v in gap_evaluators(inputs)}
    for name in ("sigsd-consistency", "CY1", "ChangGe", "g3gap"):
        v = verdicts[name]
        assert v.satisfied is None
        assert v.left is None and v.right is None
    assert verdicts["sigob"].satisfied is True


def test_gap_negative_yamabe_marks_not_applicable():
    inputs = ObstructionInputs(tau=1.0, eta=0.0, chi=1, yamabe=-2.0,
                               yamabe_type1=5.0, weyl_l2=10.0,
                               weyl_plus_l2=1.0)
    verdicts = {v.name: v for v in gap_evaluators(inputs)}
    assert verdicts["ChangGe"].satisfied is None
    assert "not applicable" in verdicts["ChangGe"].note
    assert verdicts["g3gap"].satisfied is None


def test_gap_selection_and_unknown_name():
    inputs = ObstructionInputs(tau=1.0, eta=0.0, chi=1, yamabe=1.0,
                               yamabe_type1=None, weyl_l2=None,
                               weyl_plus_l2=None)
    only = gap_evaluators(inputs, which=("sigob", "tauSD2"))
    assert [v.name for v in only] == ["sigob", "tauSD2"]
    with pytest.raises(ValueError, match="unknown inequality"):
        gap_evaluators(inputs, which=("nope",))
