"""Weyl curvature of four-dimensional metrics and its self-dual split.

This module takes over where collar.py stops: given a 4D metric (usually an
assembled collar, sometimes a closed model like the product of two round
2-spheres) it computes the Weyl tensor, splits it into self-dual and
anti-self-dual halves with the Hodge star, and drives three kinds of checks:

* series fits of the W-bar blocks of a collar metric against their predicted
  r / r^2 coefficients built from boundary data (Cotton tensor, its York
  dual, and the V tensors),
* the Weitzenboeck balance, Kato margin and harmonicity of the conformally
  weighted field Z+ = e^w W+ on a base with harmonic self-dual Weyl tensor,
* a grab bag of exact algebraic identities (volume-form contractions, the
  Cotton/York reconstruction, the trace-free product bound) used by the
  inequalities downstream.

Conventions: riemann is all-lower with R_{ijij} > 0 on spheres, the Weyl
tensor is riemann minus the Kulkarni-Nomizu product of g with the 4D
Schouten tensor, and all tensor norms on two-form-pair objects carry the
1/4 double-pair weight, so |W|^2 = tr(M+^2) + tr(M-^2) for the 3x3 frame
block matrices M+-.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exprs import Const, Expr, parse_expr
from .metrics import MetricSpec, conformal_rescale
from .tensors import (FD_STEP_FRACTION, CurvatureBundle,
                      covariant_derivative, curvature_fields, grad_hess_fd,
                      fd_steps, levi_civita)
from .collar import (DEFAULT_R_GRID, CollarSpec, SeriesFit, _fit_family,
                     _kulkarni, _mu_mixed, _resmax)
from . import collar as _collar

__all__ = [
    "WeylSplit", "ZField", "BoundaryNormal", "WeitzenboeckReport",
    "AlgebraItem", "AlgebraReport",
    "weyl_fields", "weyl_split", "weyl_split_fields", "z_field",
    "z_field_weitzenboeck", "weyl_expansion_residual", "weyl_trace_residual",
    "divergence_shift_residual", "algebra_identity_suite",
    "renormalized_volume", "volume_upper_bound",
]

_EPS3 = levi_civita(3)
_EPS4 = levi_civita(4)

_EXPANSION_CHECKS = ("wtable", "even", "selfdual", "wplus-norm",
                     "boundary-normal")


def _lambda_bases():
    # Orthonormal bases (omega_i)_{ab} of the +- eigenspaces of the Hodge
    # star on two-forms, normalized so <phi,psi> = (1/2) phi_ab psi_ab.
    plus = np.zeros((3, 4, 4))
    for i in range(3):
        plus[i, 0, 1 + i] = 1.0
        plus[i, 1 + i, 0] = -1.0
    minus = plus.copy()
    plus[:, 1:, 1:] += _EPS3
    minus[:, 1:, 1:] -= _EPS3
    return plus / math.sqrt(2.0), minus / math.sqrt(2.0)


OMEGA_PLUS, OMEGA_MINUS = _lambda_bases()


# ---------------------------------------------------------------------------
# Split machinery


@dataclass(frozen=True)
class WeylSplit:
    """Pointwise Weyl data of a 4D metric.

    ``w`` is the all-lower Weyl tensor, ``star_w`` its Hodge dual on the
    first index pair, ``w_plus``/``w_minus`` the eigenparts, and
    ``m_plus``/``m_minus`` the 3x3 operator blocks in an oriented
    orthonormal frame.  Norms use the 1/4-contraction convention, so
    ``plus_norm2 == tr(m_plus @ m_plus)``.
    """

    point: np.ndarray
    w: np.ndarray
    star_w: np.ndarray
    w_plus: np.ndarray
    w_minus: np.ndarray
    m_plus: np.ndarray
    m_minus: np.ndarray
    norm2: float
    plus_norm2: float
    minus_norm2: float


def weyl_fields(spec4: MetricSpec, pts) -> dict:
    """Curvature fields of a 4D metric plus its Weyl tensor, batched."""
    if spec4.dim != 4:
        raise ValueError("weyl_fields needs a four-dimensional metric")
    fields = curvature_fields(spec4, pts)
    fields["weyl"] = fields["riemann"] - _kulkarni(fields["g"],
                                                   fields["schouten"])
    return fields


def _check_orientation(orientation):
    if orientation not in (1, -1):
        raise ValueError("orientation must be +1 or -1")
    return int(orientation)


def _split_arrays(fields: dict, orientation: int) -> dict:
    """Hodge split of the batched Weyl tensor; extends `fields` in place."""
    g, g_inv, weyl = fields["g"], fields["g_inv"], fields["weyl"]
    sqrt_det = fields["sqrt_det"]
    if not np.all(np.isfinite(sqrt_det)) or np.any(sqrt_det <= 0.0):
        raise ValueError("degenerate metric: det g must be positive")

    # star on the first index pair, in chart components
    mu4 = orientation * sqrt_det[:, None, None, None, None] * _EPS4
    mu_up = np.einsum("Nabmn,Nmp,Nnq->Nabpq", mu4, g_inv, g_inv,
                      optimize=True)
    star = 0.5 * np.einsum("Nabpq,Npqcd->Nabcd", mu_up, weyl, optimize=True)

    # oriented orthonormal frame from the Cholesky factor: E = L^{-T} has
    # positive determinant, so it preserves the chart orientation.
    try:
        lower = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"degenerate metric: {exc}") from exc
    frame = np.linalg.inv(np.swapaxes(lower, -1, -2))
    wf = np.einsum("Nabcd,Nap,Nbq,Ncr,Nds->Npqrs", weyl, frame, frame,
                   frame, frame, optimize=True)

    om_p = OMEGA_PLUS if orientation == 1 else OMEGA_MINUS
    om_m = OMEGA_MINUS if orientation == 1 else OMEGA_PLUS
    m_plus = 0.25 * np.einsum("iab,Nabcd,jcd->Nij", om_p, wf, om_p,
                              optimize=True)
    m_minus = 0.25 * np.einsum("iab,Nabcd,jcd->Nij", om_m, wf, om_m,
                               optimize=True)

    fields["star"] = star
    fields["plus"] = 0.5 * (weyl + star)
    fields["minus"] = 0.5 * (weyl - star)
    fields["m_plus"] = m_plus
    fields["m_minus"] = m_minus
    fields["norm2"] = 0.25 * np.einsum("Nabcd,Nabcd->N", wf, wf,
                                       optimize=True)
    fields["plus_norm2"] = np.einsum("Nij,Nji->N", m_plus, m_plus,
                                     optimize=True)
    fields["minus_norm2"] = np.einsum("Nij,Nji->N", m_minus, m_minus,
                                      optimize=True)
    return fields


def weyl_split_fields(spec4: MetricSpec, pts, orientation=1) -> dict:
    """Batched Weyl split: weyl_fields plus star/plus/minus/M blocks."""
    orientation = _check_orientation(orientation)
    return _split_arrays(weyl_fields(spec4, pts), orientation)


def weyl_split(bundle: CurvatureBundle, orientation=1) -> WeylSplit:
    """Split the Weyl tensor of a single-point 4D curvature bundle."""
    orientation = _check_orientation(orientation)
    point = np.asarray(bundle.point, dtype=float)
    if point.shape != (4,):
        raise ValueError("weyl_split needs a four-dimensional bundle")
    g = bundle.g[None]
    weyl = (bundle.riemann - _kulkarni(bundle.g, bundle.schouten))[None]
    fields = {
        "g": g, "g_inv": bundle.g_inv[None],
        "sqrt_det": np.sqrt(np.linalg.det(g)),
        "weyl": weyl,
    }
    _split_arrays(fields, orientation)
    return WeylSplit(
        point=point,
        w=fields["weyl"][0], star_w=fields["star"][0],
        w_plus=fields["plus"][0], w_minus=fields["minus"][0],
        m_plus=fields["m_plus"][0], m_minus=fields["m_minus"][0],
        norm2=float(fields["norm2"][0]),
        plus_norm2=float(fields["plus_norm2"][0]),
        minus_norm2=float(fields["minus_norm2"][0]),
    )


# ---------------------------------------------------------------------------
# Z fields on a collar


@dataclass(frozen=True)
class ZField:
    """The weighted field Z = r * W_{g_plus} in collar components.

    For the compactified metric g-bar = r^2 g_plus the conformal weight of
    the all-lower Weyl tensor gives Z+- = r^{-1} Wbar+-, with
    |Z+-|^2 = r^{-2} |Wbar+-|^2 as bookkeeping.
    """

    r: np.ndarray
    points: np.ndarray
    z_plus: np.ndarray
    z_minus: np.ndarray
    plus_norm2: np.ndarray
    minus_norm2: np.ndarray

    @property
    def norm2(self) -> np.ndarray:
        return self.plus_norm2 + self.minus_norm2


def z_field(collar_spec: CollarSpec, r, points, orientation=1) -> ZField:
    """Evaluate Z+- at radius r (scalar or (N,)) over boundary points."""
    r = np.asarray(r, dtype=float)
    pts3 = np.atleast_2d(np.asarray(points, dtype=float))
    if r.ndim == 0:
        r = np.full(pts3.shape[0], float(r))
    if r.shape[0] != pts3.shape[0]:
        raise ValueError("r and points must have matching lengths")
    if np.any(r <= 0.0) or np.any(r > collar_spec.r_max):
        raise ValueError("r must lie in (0, r_max]")
    pts4 = np.concatenate([r[:, None], pts3], axis=1)
    fields = weyl_split_fields(collar_spec.assembled, pts4, orientation)
    rcol = r[:, None, None, None, None]
    return ZField(
        r=r, points=pts4,
        z_plus=fields["plus"] / rcol,
        z_minus=fields["minus"] / rcol,
        plus_norm2=fields["plus_norm2"] / r ** 2,
        minus_norm2=fields["minus_norm2"] / r ** 2,
    )


# ---------------------------------------------------------------------------
# Collar expansion checks


def _boundary_inverse_raise(mu_low, ginv):
    # mu_i^{pq} = sqrt(det) eps_{imn} g^{mp} g^{nq}
    return np.einsum("Nimn,Nmp,Nnq->Nipq", mu_low, ginv, ginv,
                     optimize=False)


def _collar_weyl_blocks(collar_spec, r_grid, pts3, orientation):
    """Weyl split of the assembled metric on the (r, x) product grid,
    reshaped to (R, M, ...) with the radial axis first."""
    r_grid = np.asarray(r_grid, dtype=float)
    rr = np.repeat(r_grid, pts3.shape[0])[:, None]
    xx = np.tile(pts3, (r_grid.size, 1))
    fields = weyl_split_fields(collar_spec.assembled,
                               np.concatenate([rr, xx], axis=1), orientation)
    shape = (r_grid.size, pts3.shape[0])
    out = {}
    for key in ("weyl", "star", "plus", "minus"):
        out[key] = fields[key].reshape(shape + (4, 4, 4, 4))
    for key in ("norm2", "plus_norm2", "minus_norm2"):
        out[key] = fields[key].reshape(shape)
    return out


def _boundary_pack(fg, pts3):
    """Boundary tensors entering the predicted coefficients.

    Everything here is built from the Cotton level of the boundary data, so
    the predictions stay pinned to the true branch values even when the
    collar itself was assembled with corrupted g3/g4 scales.
    """
    f = fg.fields(pts3)
    g, ginv, sqd = f["g"], f["g_inv"], f["sqrt_det"]
    cotton, cy, dc = f["cotton"], f["cotton_york"], f["dc"]
    v2 = np.einsum("Nka,Naijk->Nij", ginv, dc, optimize=False)
    pack = {
        "g": g, "ginv": ginv, "cotton": cotton, "cy": cy,
        "mu_mixed": _mu_mixed(ginv, sqd),
        "mu_up2": _boundary_inverse_raise(sqd[:, None, None, None] * _EPS3,
                                          ginv),
        "v2": v2,
        "v4": _kulkarni(g, v2),
        "c_norm2": np.einsum("Nijk,Nia,Njb,Nkc,Nabc->N", cotton, ginv, ginv,
                             ginv, cotton, optimize=True),
        "cy_norm2": np.einsum("Nij,Nia,Njb,Nab->N", cy, ginv, ginv, cy,
                              optimize=True),
        "vc_pair": np.einsum("Nij,Nia,Njb,Nab->N", v2, ginv, ginv, cy,
                             optimize=True),
    }
    return pack


def _dg3_curls(dg3):
    # dg3[N, a, i, j] = D_a g3_{ij}
    curl_t = dg3.transpose(0, 2, 3, 1) - dg3.transpose(0, 2, 1, 3)
    # curl_t[N, p, k, l] = D_l g3_{pk} - D_k g3_{pl}
    return curl_t


def _wtable_families(blocks, bp, fg, pts3, r_grid):
    """Residuals of the six signed block predictions with r and r^2 terms."""
    f = fg.fields(pts3)
    g3, dg3 = f["g3"], f["dg3"]
    vt = _collar.v_tensors(fg.boundary, fg, pts3)
    v4, v2 = vt.v4_direct, vt.v2_direct
    g, cotton, cy = bp["g"], bp["cotton"], bp["cy"]
    mu_mixed, mu_up2 = bp["mu_mixed"], bp["mu_up2"]

    kn_g3 = _kulkarni(g, g3)
    mu_c = np.einsum("Nijp,Npkl->Nijkl", mu_mixed, cotton, optimize=False)
    # One antisymmetrized array covers all three derivative terms: with
    # dg3[N,a,i,j] = D_a g3_{ij}, curl3[N,x,y,z] = D_z g3_{xy} - D_y g3_{xz}
    # reads as (D_l g3_{pk} - D_k g3_{pl}) under labels pkl, as
    # (D_p g3_{jm} - D_m g3_{jp}) under jmp, and as
    # (D_k g3_{ij} - D_j g3_{ik}) under ijk.
    curl3 = _dg3_curls(dg3)
    mu_curl = np.einsum("Nijp,Npkl->Nijkl", mu_mixed, curl3, optimize=False)
    norm_curl = np.einsum("Nimp,Njmp->Nij", mu_up2, curl3, optimize=False)
    # mixed-block pieces
    mix_kn = np.einsum("Nipq,Njkpq->Nijk", mu_up2, kn_g3, optimize=False)
    mix_v = np.einsum("Nipq,Npqjk->Nijk", mu_up2, v4, optimize=False)
    mix_dg3 = curl3

    rc2 = r_grid[:, None, None, None]
    rc4 = r_grid[:, None, None, None, None, None]
    rc3 = r_grid[:, None, None, None, None]
    out = []
    for sign, tag in ((1.0, "plus"), (-1.0, "minus")):
        sel = blocks["plus"] if sign > 0 else blocks["minus"]
        tan = sel[:, :, 1:, 1:, 1:, 1:]
        nor = sel[:, :, 1:, 0, 1:, 0]
        mix = sel[:, :, 0, 1:, 1:, 1:]
        pred_tan = (rc4 * (0.75 * kn_g3 - sign * 0.5 * mu_c)
                    + rc4 ** 2 * (0.5 * v4 + sign * 0.75 * mu_curl))
        pred_nor = (rc2 * (-0.75 * g3 - sign * 0.25 * cy)
                    + rc2 ** 2 * (-0.5 * v2 + sign * 0.375 * norm_curl))
        pred_mix = (rc3 * (sign * 0.375 * mix_kn - 0.5 * cotton)
                    + rc3 ** 2 * (sign * 0.25 * mix_v + 0.75 * mix_dg3))
        out.append((f"{tag}-tangential", tan - pred_tan, 3))
        out.append((f"{tag}-normal", nor - pred_nor, 3))
        out.append((f"{tag}-mixed", mix - pred_mix, 3))
    return out


def _even_families(blocks, bp, r_grid):
    rc2 = r_grid[:, None, None, None]
    rc3 = r_grid[:, None, None, None, None]
    rc4 = r_grid[:, None, None, None, None, None]
    w = blocks["weyl"]
    fams = [
        ("tangential", w[:, :, 1:, 1:, 1:, 1:] - rc4 ** 2 * bp["v4"], 3),
        ("normal", w[:, :, 1:, 0, 1:, 0] + rc2 ** 2 * bp["v2"], 3),
        ("mixed", w[:, :, 0, 1:, 1:, 1:] + rc3 * bp["cotton"], 3),
        ("norm", blocks["norm2"] - r_grid[:, None] ** 2 * bp["c_norm2"], 4),
    ]
    return fams


def _selfdual_families(blocks, bp, r_grid):
    rc2 = r_grid[:, None, None, None]
    rc3 = r_grid[:, None, None, None, None]
    rc4 = r_grid[:, None, None, None, None, None]
    wp = blocks["plus"]
    mu_c = np.einsum("Nijp,Npkl->Nijkl", bp["mu_mixed"], bp["cotton"],
                     optimize=False)
    mix_v = np.einsum("Nipq,Npqjk->Nijk", bp["mu_up2"], bp["v4"],
                      optimize=False)
    fams = [
        ("plus-tangential",
         wp[:, :, 1:, 1:, 1:, 1:] - (-rc4 * mu_c + rc4 ** 2 * bp["v4"]), 3),
        ("plus-normal",
         wp[:, :, 1:, 0, 1:, 0]
         - (-0.5 * rc2 * bp["cy"] - rc2 ** 2 * bp["v2"]), 3),
        ("plus-mixed",
         wp[:, :, 0, 1:, 1:, 1:]
         - (-rc3 * bp["cotton"] + 0.5 * rc3 ** 2 * mix_v), 3),
    ]
    return fams


def _norm_family(blocks, bp, r_grid):
    rr = r_grid[:, None]
    pred = rr ** 2 * bp["cy_norm2"] + 4.0 * rr ** 3 * bp["vc_pair"]
    return [("wplus-norm", blocks["plus_norm2"] - pred, 4)]


@dataclass(frozen=True)
class BoundaryNormal:
    """Outward-normal derivative of |Z|^2 at the boundary, by extrapolation.

    ``values`` holds d|Z|^2/d(nu) per sample point with nu = -d/dr, and
    ``level_values`` the extrapolated |Z|^2 itself at r = 0.
    """

    branch: str
    r_grid: np.ndarray
    points: np.ndarray
    values: np.ndarray
    targets: np.ndarray
    level_values: np.ndarray
    level_targets: np.ndarray
    fit_degree: int

    @property
    def max_abs_error(self) -> float:
        return float(np.max(np.abs(self.values - self.targets)))

    @property
    def max_rel_error(self) -> float:
        scale = float(np.max(np.abs(self.targets)))
        if scale == 0.0:
            return self.max_abs_error
        return self.max_abs_error / scale

    def __str__(self):
        return (f"boundary-normal[{self.branch}]: max abs "
                f"{self.max_abs_error:.3e}, max rel {self.max_rel_error:.3e}"
                f" over {self.values.size} points")


_BN_R_GRID = tuple(np.geomspace(4e-3, 6e-2, 14))


def _boundary_normal(collar_spec, bp, pts3, r_grid, orientation, fit_degree):
    branch = collar_spec.coefficients.branch
    grid = np.asarray(r_grid if r_grid is not None else _BN_R_GRID,
                      dtype=float)
    if grid.size < fit_degree + 3:
        raise ValueError("boundary-normal needs at least degree+3 radii")
    blocks = _collar_weyl_blocks(collar_spec, grid, pts3, orientation)
    if branch == "selfdual":
        f = blocks["plus_norm2"] / grid[:, None] ** 2
        level_t = bp["cy_norm2"]
        targets = -4.0 * bp["vc_pair"]
    else:
        f = blocks["norm2"] / grid[:, None] ** 2
        level_t = bp["c_norm2"]
        targets = np.zeros(pts3.shape[0])
    # least-squares polynomial in r per boundary point; nu = -d/dr
    vand = np.vander(grid, fit_degree + 1)
    coef, *_ = np.linalg.lstsq(vand, f, rcond=None)
    values = -coef[-2]
    level = coef[-1]
    return BoundaryNormal(branch=branch, r_grid=grid, points=pts3,
                          values=values, targets=targets,
                          level_values=level, level_targets=level_t,
                          fit_degree=fit_degree)


def weyl_expansion_residual(collar_spec: CollarSpec, check: str,
                            r_grid=None, points=None, count=6, rng=None,
                            floor=None, orientation=1, fit_degree=4):
    """Check the W-bar expansion of a collar against boundary predictions.

    ``check`` selects what is fitted:

    * ``wtable``       — all six signed blocks, r and r^2 coefficients,
                         remainder order 3 (needs an uncorrupted branch);
    * ``even``         — the three unsplit blocks plus the norm identity
                         |W|^2 = r^2 |C|^2 (g3 = 0 branch);
    * ``selfdual``     — the three W+ blocks of the self-dual branch;
    * ``wplus-norm``   — |W+|^2 - r^2 |CY|^2 - 4 r^3 <V,CY>, order 4;
    * ``boundary-normal`` — extrapolates d|Z|^2/d(nu) at r = 0 instead of
                         fitting a slope, returning a BoundaryNormal.

    The per-check predictions are built from the boundary Cotton data, not
    from the stored g3/g4 of the collar, so collars assembled with scaled
    coefficients (branch ``custom-g3``) show degraded slopes here — that is
    the negative-control path.  Returns {family: SeriesFit} except for
    ``boundary-normal``.
    """
    if check not in _EXPANSION_CHECKS:
        raise ValueError(f"unknown check {check!r}; "
                         f"expected one of {_EXPANSION_CHECKS}")
    fg = collar_spec.coefficients
    branch = fg.branch
    allowed = {
        "wtable": ("even", "selfdual"),
        "even": ("even", "custom-g3"),
        "selfdual": ("selfdual", "custom-g3"),
        "wplus-norm": ("selfdual", "custom-g3"),
        "boundary-normal": ("even", "selfdual"),
    }[check]
    if branch not in allowed:
        raise ValueError(f"check {check!r} expects a collar with branch in "
                         f"{allowed}, got {branch!r}")
    orientation = _check_orientation(orientation)

    if points is None:
        rng = rng if rng is not None else np.random.default_rng(7)
        pts3 = fg.boundary.sample_interior(rng, count, margin=0.1)
    else:
        pts3 = np.atleast_2d(np.asarray(points, dtype=float))
    bp = _boundary_pack(fg, pts3)

    if check == "boundary-normal":
        return _boundary_normal(collar_spec, bp, pts3, r_grid, orientation,
                                fit_degree)

    grid = np.asarray(r_grid if r_grid is not None else DEFAULT_R_GRID,
                      dtype=float)
    if grid.size < 6 or np.any(grid <= 0.0) or np.any(grid > 0.1):
        raise ValueError("slope fits need >= 6 radii inside (0, 0.1]")
    if np.any(grid > collar_spec.r_max):
        raise ValueError("r grid exceeds the collar radius")
    blocks = _collar_weyl_blocks(collar_spec, grid, pts3, orientation)

    if check == "wtable":
        fams = _wtable_families(blocks, bp, fg, pts3, grid)
    elif check == "even":
        fams = _even_families(blocks, bp, grid)
    elif check == "selfdual":
        fams = _selfdual_families(blocks, bp, grid)
    else:
        fams = _norm_family(blocks, bp, grid)

    fits = {}
    for name, res, order in fams:
        scale = float(np.max(np.abs(res[-1]))) / max(grid[-1] ** order,
                                                     1e-30)
        fits[name] = _fit_family(name, grid, _resmax(np.abs(res)), order,
                                 1.0 + scale, floor)
    return fits


def weyl_trace_residual(collar_spec: CollarSpec, r_grid=None, points=None,
                        count=6, rng=None, floor=None) -> SeriesFit:
    """Fit the boundary-inverse Weyl trace against its r^2 coefficient.

    The Weyl tensor is trace-free for every metric, so the combination
    T_ij = W_{i0j0} + g^kl W_{ikjl} taken with the r = 0 boundary inverse
    is O(r^3) no matter how the collar was assembled.  The content of the
    check is the r^2 coefficient the series derivation assigns to that
    combination, P^2 - 4 g4 + V with V = div C in reduced form: the
    residual fitted here is T - r^2 (P^2 - 4 g4 + V) using the collar's
    declared g4.  For the correct g4 = (div C + P^2)/4 the subtracted
    bracket vanishes identically and the fit confirms O(r^3); a corrupted
    g4 leaves a genuine r^2 term and the slope collapses towards 2.
    """
    fg = collar_spec.coefficients
    if points is None:
        rng = rng if rng is not None else np.random.default_rng(7)
        pts3 = fg.boundary.sample_interior(rng, count, margin=0.1)
    else:
        pts3 = np.atleast_2d(np.asarray(points, dtype=float))
    grid = np.asarray(r_grid if r_grid is not None else DEFAULT_R_GRID,
                      dtype=float)
    if grid.size < 6 or np.any(grid <= 0.0):
        raise ValueError("slope fits need >= 6 positive radii")
    if np.any(grid > collar_spec.r_max):
        raise ValueError("r grid exceeds the collar radius")
    bf = fg.fields(pts3)
    ginv0 = bf["g_inv"]
    v2a = np.einsum("Nka,Naijk->Nij", ginv0, bf["dc"], optimize=False)
    bracket = bf["p_sq"] - 4.0 * bf["g4"] + v2a
    rr = np.repeat(grid, pts3.shape[0])[:, None]
    xx = np.tile(pts3, (grid.size, 1))
    w = weyl_fields(collar_spec.assembled,
                    np.concatenate([rr, xx], axis=1))["weyl"]
    w = w.reshape((grid.size, pts3.shape[0]) + (4,) * 4)
    trace = (w[:, :, 1:, 0, 1:, 0]
             + np.einsum("Nkl,RNikjl->RNij", ginv0,
                         w[:, :, 1:, 1:, 1:, 1:], optimize=False))
    res = trace - grid[:, None, None, None] ** 2 * bracket
    scale = 1.0 + float(np.max(np.abs(res[-1]))) / max(grid[-1] ** 3, 1e-30)
    return _fit_family("weyl-trace", grid, _resmax(np.abs(res)), 3,
                       scale, floor)


# ---------------------------------------------------------------------------
# Z = e^w W+ on a harmonic base: Weitzenboeck, Kato, harmonicity


@dataclass(frozen=True)
class WeitzenboeckReport:
    """Pointwise results of the weighted Weitzenboeck balance.

    Iterating the report yields (weitzenboeck residual, kato margin,
    harmonic residual) as arrays over the sample points; the residual is
    relative to the largest term in the balance.
    """

    points: np.ndarray
    weitzenboeck_residual: np.ndarray
    kato_margin: np.ndarray
    harmonic_residual: np.ndarray
    precondition: float
    parts: dict

    def __iter__(self):
        yield self.weitzenboeck_residual
        yield self.kato_margin
        yield self.harmonic_residual


def _as_weight_expr(w, coords):
    if isinstance(w, Expr):
        return w
    if isinstance(w, str):
        return parse_expr(w, coords)
    if isinstance(w, (int, float)):
        return Const(float(w))
    raise TypeError("w must be an expression tree, source text, or number")


def _richardson_grad_hess(field, pts, h):
    # the base stencils are 4th order, so the step-halving weights are 16/15
    _, g1, h1 = grad_hess_fd(field, pts, h)
    _, g2, h2 = grad_hess_fd(field, pts, 0.5 * h)
    return (16.0 * g2 - g1) / 15.0, (16.0 * h2 - h1) / 15.0


def _frame_m_matrix(g, tensor, omega):
    try:
        lower = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"degenerate metric: {exc}") from exc
    frame = np.linalg.inv(np.swapaxes(lower, -1, -2))
    tf = np.einsum("Nabcd,Nap,Nbq,Ncr,Nds->Npqrs", tensor, frame, frame,
                   frame, frame, optimize=True)
    return 0.25 * np.einsum("iab,Nabcd,jcd->Nij", omega, tf, omega,
                            optimize=True)


def z_field_weitzenboeck(g0: MetricSpec, w, points, *,
                         h_scale=FD_STEP_FRACTION, orientation=1,
                         precondition_tol=1e-6,
                         richardson=True) -> WeitzenboeckReport:
    """Check the Weitzenboeck balance of Z+ = e^w W+_{g0} under g = e^{2w}g0.

    Verifies, with all derivatives done by finite differences over exact
    metric jets:

    * (1/2) Lap_g |Z+|^2  =  |grad Z+|^2 - 6 tr(W+_g o (Z+)^2)
                             + (1/2) R_g |Z+|^2   (relative residual),
    * the Kato margin |grad Z+|^2 - (5/3) |grad |Z+||^2  >= 0,
    * harmonicity div_g Z+ = 0 (g-norm of the divergence).

    The base metric must have harmonic self-dual Weyl tensor; this is
    checked numerically (max |div W+_{g0}| <= precondition_tol) and a
    violation raises instead of being silently ignored.
    """
    if g0.dim != 4:
        raise ValueError("z_field_weitzenboeck needs a 4D base metric")
    orientation = _check_orientation(orientation)
    w_expr = _as_weight_expr(w, g0.coords)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    spec_g = conformal_rescale(g0, w_expr)

    def wplus0(q):
        return weyl_split_fields(g0, q, orientation)["plus"]

    # precondition: div_{g0} W+_{g0} = 0
    f0 = curvature_fields(g0, pts)
    dw0 = covariant_derivative(g0, wplus0, "dddd", pts, h_scale=h_scale,
                               richardson=richardson)
    div0 = np.einsum("Nam,Namjkl->Njkl", f0["g_inv"], dw0, optimize=False)
    precondition = float(np.max(np.abs(div0)))
    if precondition > precondition_tol:
        raise ValueError(
            f"base metric fails the harmonic-W+ precondition: "
            f"max |div W+| = {precondition:.3e} > {precondition_tol:.1e}")

    from .exprs import eval_value_batch

    def zfun(q):
        q = np.atleast_2d(np.asarray(q, dtype=float))
        return np.exp(eval_value_batch(w_expr, q))[:, None, None, None,
                                                   None] * wplus0(q)

    fg = curvature_fields(spec_g, pts)
    g, ginv, scal = fg["g"], fg["g_inv"], fg["scalar"]
    gamma = fg["christoffel"]

    z_here = zfun(pts)
    u = 0.25 * np.einsum("Nabcd,Nap,Nbq,Ncr,Nds,Npqrs->N", z_here, ginv,
                         ginv, ginv, ginv, z_here, optimize=True)
    if np.min(u) < 1e-12:
        raise ValueError("|Z+| is below 1e-6 at a sample point; the Kato "
                         "margin is not defined on the zero locus")

    def ufun(q):
        q = np.atleast_2d(np.asarray(q, dtype=float))
        zq = zfun(q)
        fq = curvature_fields(spec_g, q)
        gi = fq["g_inv"]
        return 0.25 * np.einsum("Nabcd,Nap,Nbq,Ncr,Nds,Npqrs->N", zq, gi,
                                gi, gi, gi, zq, optimize=True)

    h = fd_steps(spec_g, pts, h_scale)
    if richardson:
        du, d2u = _richardson_grad_hess(ufun, pts, h)
    else:
        _, du, d2u = grad_hess_fd(ufun, pts, h)
    # gamma[N, k, a, b] = Gamma^k_{ab}; covariant Hessian of the scalar u
    hess = d2u - np.einsum("Nkab,Nk->Nab", gamma, du, optimize=False)
    lap_u = np.einsum("Nab,Nab->N", ginv, hess, optimize=False)

    dz = covariant_derivative(spec_g, zfun, "dddd", pts, h_scale=h_scale,
                              richardson=richardson)
    grad_z2 = 0.25 * np.einsum(
        "Neabcd,Nef,Nap,Nbq,Ncr,Nds,Nfpqrs->N", dz, ginv, ginv, ginv, ginv,
        ginv, dz, optimize=True)
    grad_norm2 = (np.einsum("Nab,Na,Nb->N", ginv, du, du, optimize=False)
                  / (4.0 * u))
    kato = grad_z2 - (5.0 / 3.0) * grad_norm2

    om = OMEGA_PLUS if orientation == 1 else OMEGA_MINUS
    weyl_g = fg["riemann"] - _kulkarni(g, fg["schouten"])
    m_w = _frame_m_matrix(g, weyl_g, om)
    m_z = _frame_m_matrix(g, z_here, om)
    tr_term = np.einsum("Nij,Njk,Nki->N", m_w, m_z, m_z, optimize=False)

    lhs = 0.5 * lap_u
    rhs = grad_z2 - 6.0 * tr_term + 0.5 * scal * u
    scale = np.maximum.reduce([np.abs(lhs), np.abs(grad_z2),
                               6.0 * np.abs(tr_term),
                               0.5 * np.abs(scal) * u]) + 1e-30
    residual = np.abs(lhs - rhs) / scale

    div_z = np.einsum("Nam,Namjkl->Njkl", ginv, dz, optimize=False)
    har = np.sqrt(np.einsum("Njkl,Njp,Nkq,Nlr,Npqr->N", div_z, ginv, ginv,
                            ginv, div_z, optimize=True))

    return WeitzenboeckReport(
        points=pts, weitzenboeck_residual=residual, kato_margin=kato,
        harmonic_residual=har, precondition=precondition,
        parts={"lhs": lhs, "rhs": rhs, "u": u, "grad_z2": grad_z2,
               "tr_term": tr_term, "scalar": scal, "lap_u": lap_u,
               "grad_norm2": grad_norm2, "div_z": div_z})


def divergence_shift_residual(g0: MetricSpec, w, points, *,
                              h_scale=FD_STEP_FRACTION, orientation=1,
                              richardson=True) -> dict:
    """Two-sided check of the conformal shift of the Weyl divergence.

    For g = e^{2w} g0 and the all-lower tensors W_g = e^{2w} W_{g0},

        div_g W+_g = div_{g0} W+_{g0} + (grad_{g0} w)^p (W+_{g0})_{p...},

    which is the statement behind the harmonicity of e^w W+_{g0}.  Both
    sides are computed independently (left under g, right under g0) and the
    dictionary reports their difference.
    """
    if g0.dim != 4:
        raise ValueError("divergence_shift_residual needs a 4D base metric")
    orientation = _check_orientation(orientation)
    w_expr = _as_weight_expr(w, g0.coords)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    spec_g = conformal_rescale(g0, w_expr)

    from .exprs import eval_value_batch, diff_expr

    def wplus0(q):
        return weyl_split_fields(g0, q, orientation)["plus"]

    def wplus_g(q):
        return weyl_split_fields(spec_g, q, orientation)["plus"]

    dwg = covariant_derivative(spec_g, wplus_g, "dddd", pts, h_scale=h_scale,
                               richardson=richardson)
    ginv_g = curvature_fields(spec_g, pts)["g_inv"]
    lhs = np.einsum("Nam,Namjkl->Njkl", ginv_g, dwg, optimize=False)

    dw0 = covariant_derivative(g0, wplus0, "dddd", pts, h_scale=h_scale,
                               richardson=richardson)
    f0 = curvature_fields(g0, pts)
    rhs = np.einsum("Nam,Namjkl->Njkl", f0["g_inv"], dw0, optimize=False)
    grad_w = np.stack([eval_value_batch(diff_expr(w_expr, a), pts)
                       for a in range(4)], axis=1)
    grad_up = np.einsum("Npa,Na->Np", f0["g_inv"], grad_w, optimize=False)
    rhs = rhs + np.einsum("Np,Npjkl->Njkl", grad_up, wplus0(pts),
                          optimize=False)
    scale = float(np.max(np.abs(rhs))) + 1e-30
    return {"lhs": lhs, "rhs": rhs,
            "max_abs": float(np.max(np.abs(lhs - rhs))),
            "max_rel": float(np.max(np.abs(lhs - rhs)) / scale)}


# ---------------------------------------------------------------------------
# Algebraic identity suite


@dataclass(frozen=True)
class AlgebraItem:
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str

    def __str__(self):
        tag = "pass" if self.passed else "FAIL"
        return f"{self.name}: {self.value:.3e} (tol {self.tolerance:.1e}) [{tag}]"


@dataclass(frozen=True)
class AlgebraReport:
    items: tuple

    @property
    def passed(self) -> bool:
        return all(item.passed for item in self.items)

    def __str__(self):
        return "\n".join(str(item) for item in self.items)


def _tracefree_sym(rng, count):
    a = rng.standard_normal((count, 3, 3))
    a = 0.5 * (a + a.transpose(0, 2, 1))
    tr = np.einsum("Nii->N", a)
    return a - tr[:, None, None] / 3.0 * np.eye(3)


def _mu_identity_residual(g, sqrt_det):
    ginv = np.linalg.inv(g)
    mu = sqrt_det[:, None, None, None] * _EPS3
    mu_upup = np.einsum("Nabc,Nap,Nbi,Ncj->Npij", mu, ginv, ginv, ginv,
                        optimize=True)
    lhs = np.einsum("Npij,Npkl->Nijkl", mu_upup, mu, optimize=False)
    eye = np.eye(3)
    rhs = (eye[:, None, :, None] * eye[None, :, None, :]
           - eye[None, :, :, None] * eye[:, None, None, :])
    # rhs[i, j, k, l] = delta^i_k delta^j_l - delta^j_k delta^i_l
    return float(np.max(np.abs(lhs - rhs[None])))


def _suite_points(spec, seed, count=5):
    rng = np.random.default_rng(seed)
    return spec.sample_interior(rng, count, margin=0.15)


def algebra_identity_suite(rng=None, pairs=10000) -> AlgebraReport:
    """Exact algebraic identities and inequalities used by the gap bounds.

    Items: (a) the volume-form contraction identity on three computed
    metrics; (b) reconstruction of the Cotton tensor from its York dual;
    (c) the four-index pairing identity on the Berger sphere; (d) the
    trace-free product bound |tr(A B^2)| <= 6^{-1/2} |A| |B|^2 over random
    and structured samples; (e) the two-circle maximum by brute force.
    """
    from .metrics import builtin_model
    from .cotton import cotton_fields, frame_cotton_fields
    from .tensors import su2_frame

    rng = rng if rng is not None else np.random.default_rng(20240817)
    items = []

    # (a) mu^{pij} mu_{pkl} = delta^i_k delta^j_l - delta^j_k delta^i_l
    worst = 0.0
    for name, params, seed in (("round-s3", None, 11),
                               ("berger", {"eps": 2.0}, 12),
                               ("perturbed-s3", {"t": 0.1, "seed": 42}, 13)):
        spec = builtin_model(name, params)
        pts = _suite_points(spec, seed)
        g = spec.metric_values(pts)
        worst = max(worst, _mu_identity_residual(
            g, np.sqrt(np.linalg.det(g))))
    items.append(AlgebraItem("mu-contraction", worst, 1e-12, worst <= 1e-12,
                             "round-s3, berger eps=2, perturbed-s3"))

    # (b) C_{ijk} = (1/2) mu_{mjk} CY_i^m
    worst = 0.0
    scale = 0.0
    packs = []
    fb = frame_cotton_fields(su2_frame(2.0))
    packs.append(("berger frame", fb["g"][None], fb["cotton"][None],
                  fb["cotton_york"][None]))
    spec = builtin_model("perturbed-s3", {"t": 0.1, "seed": 42})
    f = cotton_fields(spec, _suite_points(spec, 14), richardson=True)
    packs.append(("perturbed-s3", f["g"], f["cotton"], f["cotton_york"]))
    for _, g, cotton, cy in packs:
        ginv = np.linalg.inv(g)
        mu = np.sqrt(np.linalg.det(g))[:, None, None, None] * _EPS3
        cy_mixed = np.einsum("Nil,Nlm->Nim", cy, ginv, optimize=False)
        recon = 0.5 * np.einsum("Nmjk,Nim->Nijk", mu, cy_mixed,
                                optimize=False)
        worst = max(worst, float(np.max(np.abs(cotton - recon))))
        scale = max(scale, float(np.max(np.abs(cotton))))
    tol = 1e-10 * (1.0 + scale)
    items.append(AlgebraItem("cotton-york-reconstruction", worst, tol,
                             worst <= tol, "berger frame, perturbed-s3"))

    # (c) -(1/2) mu^{mpq} V_{pq}^{kl} C_{mkl} = <V, CY> on Berger eps=2
    g = fb["g"][None]
    ginv = np.linalg.inv(g)
    mu = np.sqrt(np.linalg.det(g))[:, None, None, None] * _EPS3
    mu_up3 = np.einsum("Nabc,Nam,Nbp,Ncq->Nmpq", mu, ginv, ginv, ginv,
                       optimize=True)
    v2 = fb["v_tensor"][None]
    v4 = _kulkarni(g, v2)
    v4_up = np.einsum("Npqkl,Nka,Nlb->Npqab", v4, ginv, ginv, optimize=True)
    lhs = -0.5 * np.einsum("Nmpq,Npqkl,Nmkl->N", mu_up3, v4_up,
                           fb["cotton"][None], optimize=True)
    rhs = np.einsum("Nij,Nia,Njb,Nab->N", v2, ginv, ginv,
                    fb["cotton_york"][None], optimize=True)
    resid = float(np.max(np.abs(lhs - rhs)))
    tol = 1e-10 * (1.0 + float(np.max(np.abs(rhs))))
    items.append(AlgebraItem("v-cy-pairing", resid, tol, resid <= tol,
                             f"lhs {lhs[0]:.6e} vs rhs {rhs[0]:.6e}"))

    # (d) |tr(A B^2)| <= 6^{-1/2} |A| |B|^2 for trace-free symmetric pairs
    a = _tracefree_sym(rng, pairs)
    b = _tracefree_sym(rng, pairs)
    lhs = np.abs(np.einsum("Nij,Njk,Nki->N", a, b, b, optimize=False))
    bound = (np.linalg.norm(a, axis=(1, 2))
             * np.linalg.norm(b, axis=(1, 2)) ** 2 / math.sqrt(6.0))
    violations = int(np.sum(lhs > bound * (1.0 + 1e-12) + 1e-14))
    # structured equality cases: B a rotated diag(2,-1,-1), A the trace-free
    # part of B^2 -> the bound is attained
    q, _ = np.linalg.qr(rng.standard_normal((64, 3, 3)))
    b_eq = np.einsum("Nij,jk,Nlk->Nil", q, np.diag([2.0, -1.0, -1.0]), q,
                     optimize=False)
    b2 = np.einsum("Nij,Njk->Nik", b_eq, b_eq, optimize=False)
    a_eq = b2 - np.einsum("Nii->N", b2)[:, None, None] / 3.0 * np.eye(3)
    ratio = (np.abs(np.einsum("Nij,Njk,Nki->N", a_eq, b_eq, b_eq))
             / (np.linalg.norm(a_eq, axis=(1, 2))
                * np.linalg.norm(b_eq, axis=(1, 2)) ** 2 / math.sqrt(6.0)))
    eq_gap = float(np.max(np.abs(ratio - 1.0)))
    ok = violations == 0 and eq_gap <= 1e-6
    items.append(AlgebraItem("tracefree-product-bound",
                             float(eq_gap if violations == 0 else violations),
                             1e-6, ok,
                             f"{violations} violations over {pairs} pairs; "
                             f"equality gap {eq_gap:.2e}"))

    # (e) max over both circles of a x^2 + b y^2 is exactly 1
    theta = np.linspace(0.0, 2.0 * math.pi, 2001)
    phi = np.linspace(0.0, 2.0 * math.pi, 2001)
    x2 = np.cos(theta) ** 2
    vals = (np.cos(phi)[:, None] * x2[None, :]
            + np.sin(phi)[:, None] * (1.0 - x2)[None, :])
    vmax = float(np.max(vals))
    resid = abs(vmax - 1.0)
    ok = resid <= 1e-9 and vmax <= 1.0 + 1e-12
    items.append(AlgebraItem("two-circle-max", resid, 1e-9, ok,
                             f"grid max {vmax:.12f}"))

    return AlgebraReport(items=tuple(items))


# ---------------------------------------------------------------------------
# Renormalized volume


def renormalized_volume(chi: int, weyl_l2: float) -> float:
    """V = (4/3) pi^2 chi - (1/6) * (L2 norm squared of the Weyl tensor)."""
    if weyl_l2 < 0.0:
        raise ValueError("weyl_l2 must be nonnegative")
    return (4.0 / 3.0) * math.pi ** 2 * chi - weyl_l2 / 6.0


def volume_upper_bound(chi: int) -> float:
    """The topological bound V <= (4/3) pi^2 chi (equality iff W = 0)."""
    return (4.0 / 3.0) * math.pi ** 2 * chi
