"""Metric documents: parsing, builtins, rescaling, domain handling."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvbench.metrics import (
    BUILTIN_NAMES,
    ParseError,
    builtin_model,
    conformal_rescale,
    parse_metric_spec,
    print_metric_spec,
)

TWO_PI = 2.0 * math.pi

DOC3 = """
# a 3D warped product over a box
dim = 3
coords = x1 x2 x3
domain.x1 = [0, 3.141592653589793]
domain.x2 = [0, 6.283185307179586] periodic
domain.x3 = [0.2, 1.7]
g11 = 1
g22 = sin(x1)^2
g33 = 1 + 0.1*cos(x2)
g13 = 0.05*x3
"""


def test_parse_print_reparse_roundtrip():
    spec = parse_metric_spec(DOC3)
    assert spec.dim == 3
    assert spec.coords == ("x1", "x2", "x3")
    assert spec.domains[1].periodic and not spec.domains[0].periodic
    back = parse_metric_spec(print_metric_spec(spec))
    rng = np.random.default_rng(7)
    pts = spec.sample_interior(rng, 12)
    np.testing.assert_allclose(back.metric_values(pts),
                               spec.metric_values(pts), rtol=0, atol=1e-14)


def test_metric_jets_match_component_jets():
    spec = parse_metric_spec(DOC3)
    rng = np.random.default_rng(9)
    pts = spec.sample_interior(rng, 8)
    g, dg, d2g = spec.metric_jets(pts)
    np.testing.assert_allclose(g, spec.metric_values(pts), atol=1e-15)
    # symmetry in the metric indices and in the two derivative slots
    np.testing.assert_allclose(dg, dg.transpose(0, 1, 3, 2), atol=0)
    np.testing.assert_allclose(d2g, d2g.transpose(0, 2, 1, 3, 4), atol=0)


REQUIRED_PARAMS = {
    "berger": {"eps": 1.5},
    "perturbed-s3": {"t": 0.1, "seed": 2},
}


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_builtins_construct_and_are_spd(name):
    spec = builtin_model(name, REQUIRED_PARAMS.get(name))
    rng = np.random.default_rng(5)
    pts = spec.sample_interior(rng, 25)
    spec.spd_check(pts)
    assert spec.dim in (3, 4)
    assert len(spec.coords) == spec.dim


def test_builtin_params():
    spec = builtin_model("berger", {"eps": 2.0})
    assert spec.builtin == "berger"
    assert spec.builtin_params["eps"] == 2.0
    with pytest.raises(ValueError, match="unknown builtin"):
        builtin_model("klein-bottle")


def test_round_s3_volume_element():
    # Euler-angle chart of the unit round metric: sqrt(det g) = sin(x2)/8
    spec = builtin_model("round-s3")
    rng = np.random.default_rng(1)
    pts = spec.sample_interior(rng, 40)
    det = np.linalg.det(spec.metric_values(pts))
    np.testing.assert_allclose(np.sqrt(det), np.sin(pts[:, 1]) / 8.0,
                               rtol=1e-12, atol=1e-14)


def test_sample_interior_margin():
    spec = parse_metric_spec(DOC3)
    rng = np.random.default_rng(2)
    pts = spec.sample_interior(rng, 200, margin=0.1)
    for k, d in enumerate(spec.domains):
        pad = 0.1 * (d.hi - d.lo)
        assert pts[:, k].min() >= d.lo + pad - 1e-12
        assert pts[:, k].max() <= d.hi - pad + 1e-12


@settings(max_examples=25, deadline=None)
@given(a=st.floats(min_value=-0.5, max_value=0.5, allow_nan=False),
       b=st.floats(min_value=-0.5, max_value=0.5, allow_nan=False))
def test_conformal_rescale_scales_pointwise(a, b):
    spec = builtin_model("perturbed-s3", {"t": 0.15, "seed": 4})
    w = f"({a!r})*cos(x1) + ({b!r})*sin(x3)"
    scaled = conformal_rescale(spec, w)
    rng = np.random.default_rng(4)
    pts = spec.sample_interior(rng, 6)
    factor = np.exp(2.0 * (a * np.cos(pts[:, 0]) + b * np.sin(pts[:, 2])))
    np.testing.assert_allclose(scaled.metric_values(pts),
                               factor[:, None, None] * spec.metric_values(pts),
                               rtol=1e-12, atol=1e-14)


def test_parse_error_positions():
    bad = "dim = 3\ncoords = x1 x2 x3\ndomain.x1 = [0, 1]\n" \
          "domain.x2 = [0, 1]\ndomain.x3 = [0, 1]\ng11 = sin(x9)\n"
    with pytest.raises(ParseError) as err:
        parse_metric_spec(bad)
    assert "x9" in str(err.value)
    assert "6" in str(err.value)      # the offending line number


def test_dimension_mismatch_rejected():
    bad = DOC3.replace("g33 = 1 + 0.1*cos(x2)", "g33 = 1 + 0.1*cos(x4)")
    with pytest.raises(ParseError, match="x4"):
        parse_metric_spec(bad)


def test_collar_document_assembles_4d():
    doc = """
    [collar]
    boundary = berger eps=1.5
    branch = selfdual
    r_max = 0.4
    """
    spec = parse_metric_spec(doc)
    assert spec.dim == 4
    assert spec.collar_info is not None
    assert spec.collar_info.branch == "selfdual"
    assert spec.domains[0].lo == 0.0 and spec.domains[0].hi == 0.4
    rng = np.random.default_rng(3)
    spec.spd_check(spec.sample_interior(rng, 10))


def test_non_spd_metric_detected():
    doc = DOC3.replace("g11 = 1", "g11 = -1")
    spec = parse_metric_spec(doc)
    with pytest.raises(ValueError, match="not positive definite"):
        spec.spd_check(np.array([[1.0, 1.0, 1.0]]))


DOCS_EXAMPLES = __import__("pathlib").Path(__file__).resolve().parents[1] \
    / "docs" / "examples"


def test_docs_perturbed_sphere_document_is_spd():
    # the shipped example document must parse and stay positive definite
    # across the open chart, poles approached within 2% of the range
    spec = parse_metric_spec(
        (DOCS_EXAMPLES / "perturbed-sphere.metric").read_text())
    assert spec.dim == 3 and spec.builtin is None
    rng = np.random.default_rng(17)
    spec.spd_check(spec.sample_interior(rng, 100, margin=0.02))


def test_docs_collar_document_assembles():
    spec = parse_metric_spec(
        (DOCS_EXAMPLES / "berger-selfdual.metric").read_text())
    assert spec.dim == 4
    assert spec.collar_info.branch == "selfdual"
    assert spec.domains[0].hi == 0.5
