"""Truncated collar metrics gbar = dr^2 + g_r built from boundary data.

Given a 3-metric ghat, the collar carries the one-parameter family

    g_r = ghat - r^2 Phat + r^3 g3 + r^4 g4,

the order-four truncation of the asymptotic expansion of a Poincare-Einstein
metric with conformal infinity [ghat]: Phat is the Schouten tensor, g4 is
forced to (1/4)(div C + Phat^2) by the Einstein condition, and g3 is the
free coefficient - zero on the even branch, a Cotton-York multiple on the
self-dual branch.  Every series identity verified downstream depends only on
coefficients through order four, so these truncated collars stand in for
exact Poincare-Einstein metrics in remainder-order tests.

Assembly produces an ordinary MetricSpec whose components are expression
trees (polynomials in r composed with boundary expressions), so the 4D
metric keeps exact second-order jets.  Homogeneous builtin boundaries
(round-s3, berger) assemble through their left-invariant frame, where the
coefficients are constant matrices paired with the coframe; any other
boundary goes through symbolic differentiation of its component expressions,
which is exact but grows with the complexity of the boundary metric.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exprs import (Const, Var, BinOp, Func, Expr, parse_expr, diff_expr,
                    expr_add, expr_sub, expr_mul, expr_div, expr_neg,
                    expr_pow)
from .metrics import MetricSpec, CoordDomain, CollarInfo, _COFRAME_TEXT
from .tensors import (curvature_fields, christoffel, covariant_derivative,
                      levi_civita, su2_frame, LieFrameSpec, FD_STEP_FRACTION)
from .cotton import cotton_fields, frame_cotton_fields

__all__ = [
    "FGCoefficients", "CollarSpec", "SeriesFit", "VTensors",
    "fg_coefficients", "make_collar", "collar_metric_eval",
    "collar_series_residual", "collar_from_spec", "v_tensors",
    "DEFAULT_R_GRID",
]

# Geometric grid for remainder-slope fits: inside (0, 0.1] so the truncated
# series dominates, wide enough (two decades) for a stable log-log fit.
DEFAULT_R_GRID = tuple(np.geomspace(1e-3, 1e-1, 8))

_FRAME_BUILTINS = ("round-s3", "berger")


# ---------------------------------------------------------------------------
# Shared tensor algebra (batched over arbitrary leading axes via "...")


def _kulkarni(g, x):
    """(g ^ x)_{ijkl} = g_ik x_jl - g_il x_jk - g_jk x_il + g_jl x_ik."""
    return (np.einsum("...ik,...jl->...ijkl", g, x, optimize=False)
            - np.einsum("...il,...jk->...ijkl", g, x, optimize=False)
            - np.einsum("...jk,...il->...ijkl", g, x, optimize=False)
            + np.einsum("...jl,...ik->...ijkl", g, x, optimize=False))


def _mu_mixed(g_inv, sqrt_det):
    """mu_{ij}^{ p} = sqrt(det g) eps_{ijm} g^{mp}."""
    eps3 = levi_civita(3)
    mu = np.asarray(sqrt_det)[..., None, None, None] * eps3
    return np.einsum("...ijm,...mp->...ijp", mu, g_inv, optimize=False)


def _g3_from_cy(g, g_inv, cy):
    """Solve the contracted self-duality constraint for g3.

    Contracting the 4-index constraint once with ghat^{ik} leaves
    X + (tr X) ghat = CY/3 for the unknown X = g3; tracing again pins tr X,
    and substituting back gives X explicitly.  The Cotton-York tensor is
    symmetrized first so finite-difference asymmetry cannot leak in; nothing
    here assumes it is trace-free - the caller re-checks the full 4-index
    identity afterwards (plug-back).
    """
    rhs = (cy + np.swapaxes(cy, -1, -2)) / 6.0
    tr = np.einsum("...ij,...ij->...", g_inv, rhs, optimize=False)
    return rhs - 0.25 * tr[..., None, None] * g


def _g3_identity_residual(g, g_inv, sqrt_det, cotton, g3):
    """Max-norm residual of the full 4-index self-duality constraint
    (3/4)(ghat ^ g3)_{ijkl} = -(1/2) mu_{ij}^p C_{pkl}."""
    lhs = 0.75 * _kulkarni(g, g3)
    mu = _mu_mixed(g_inv, sqrt_det)
    rhs = -0.5 * np.einsum("...ijp,...pkl->...ijkl", mu, cotton,
                           optimize=False)
    scale = float(np.max(np.abs(rhs))) + float(np.max(np.abs(lhs)))
    return float(np.max(np.abs(lhs - rhs))), scale


# ---------------------------------------------------------------------------
# Symbolic boundary pipeline (exact closed forms for inline boundaries)
#
# Works entirely on 3x3 nested lists of expression trees.  Sizes grow with
# the boundary's complexity (g4 needs four symbolic derivatives of the
# metric), so builtin homogeneous boundaries take the frame path instead.


def _esum(terms):
    out = Const(0.0)
    for t in terms:
        out = expr_add(out, t)
    return out


def _sym_inverse(g):
    """Adjugate-over-determinant inverse of a symmetric 3x3 expression
    matrix; returns (inv, det)."""
    def minor(r0, r1, c0, c1):
        return expr_sub(expr_mul(g[r0][c0], g[r1][c1]),
                        expr_mul(g[r0][c1], g[r1][c0]))

    cof = [[None] * 3 for _ in range(3)]
    rows = ((1, 2), (0, 2), (0, 1))
    for i in range(3):
        for j in range(3):
            m = minor(rows[i][0], rows[i][1], rows[j][0], rows[j][1])
            cof[i][j] = m if (i + j) % 2 == 0 else expr_neg(m)
    det = _esum([expr_mul(g[0][j], cof[0][j]) for j in range(3)])
    inv = [[expr_div(cof[j][i], det) for j in range(3)] for i in range(3)]
    return inv, det


def _sym_fg_exprs(spec: MetricSpec, branch: str):
    """Closed-form Schouten, g3 and g4 of a 3D boundary as expression
    matrices, via symbolic differentiation of the metric components."""
    rng3 = range(3)
    g = [[spec.component(i, j) for j in rng3] for i in rng3]
    ginv, det = _sym_inverse(g)
    dg = [[[diff_expr(g[i][j], k) for j in rng3] for i in rng3]
          for k in rng3]                      # dg[k][i][j] = d_k g_ij

    gam = [[[None] * 3 for _ in rng3] for _ in rng3]   # gam[k][i][j]
    for k in rng3:
        for i in rng3:
            for j in rng3:
                gam[k][i][j] = expr_mul(Const(0.5), _esum(
                    [expr_mul(ginv[k][l],
                              expr_sub(expr_add(dg[i][j][l], dg[j][i][l]),
                                       dg[l][i][j]))
                     for l in rng3]))

    dgam = [[[[diff_expr(gam[k][i][j], a) for j in rng3] for i in rng3]
             for k in rng3] for a in rng3]    # dgam[a][k][i][j]

    ric = [[None] * 3 for _ in rng3]
    for j in rng3:
        for l in rng3:
            terms = []
            for k in rng3:
                terms.append(dgam[k][k][j][l])
                terms.append(expr_neg(dgam[j][k][k][l]))
                for m in rng3:
                    terms.append(expr_mul(gam[k][k][m], gam[m][j][l]))
                    terms.append(expr_neg(expr_mul(gam[k][j][m],
                                                   gam[m][k][l])))
            ric[j][l] = _esum(terms)

    scal = _esum([expr_mul(ginv[j][l], ric[j][l])
                  for j in rng3 for l in rng3])
    quarter = expr_mul(Const(0.25), scal)
    p = [[expr_sub(ric[i][j], expr_mul(quarter, g[i][j])) for j in rng3]
         for i in rng3]

    def cov2(t, dt):    # nabla_a T_ij for a 2-tensor given dt[a][i][j]
        out = [[[None] * 3 for _ in rng3] for _ in rng3]
        for a in rng3:
            for i in rng3:
                for j in rng3:
                    corr = [expr_mul(gam[m][a][i], t[m][j]) for m in rng3]
                    corr += [expr_mul(gam[m][a][j], t[i][m]) for m in rng3]
                    out[a][i][j] = expr_sub(dt[a][i][j], _esum(corr))
        return out

    dp = [[[diff_expr(p[i][j], a) for j in rng3] for i in rng3] for a in rng3]
    covp = cov2(p, dp)
    cot = [[[expr_sub(covp[k][i][j], covp[j][i][k]) for k in rng3]
            for j in rng3] for i in rng3]     # C_ijk

    # nabla_a C_ijk, then V_ij = g^{ka} nabla_a C_ijk
    covc = [[[[None] * 3 for _ in rng3] for _ in rng3] for _ in rng3]
    for a in rng3:
        for i in rng3:
            for j in rng3:
                for k in rng3:
                    corr = [expr_mul(gam[m][a][i], cot[m][j][k])
                            for m in rng3]
                    corr += [expr_mul(gam[m][a][j], cot[i][m][k])
                             for m in rng3]
                    corr += [expr_mul(gam[m][a][k], cot[i][j][m])
                             for m in rng3]
                    covc[a][i][j][k] = expr_sub(
                        diff_expr(cot[i][j][k], a), _esum(corr))
    v = [[_esum([expr_mul(ginv[k][a], covc[a][i][j][k])
                 for k in rng3 for a in rng3]) for j in rng3] for i in rng3]

    p2 = [[_esum([expr_mul(expr_mul(p[i][a], ginv[a][b]), p[b][j])
                  for a in rng3 for b in rng3]) for j in rng3] for i in rng3]
    g4 = [[expr_mul(Const(0.25), expr_add(v[i][j], p2[i][j])) for j in rng3]
          for i in rng3]

    if branch == "selfdual":
        sq = Func("sqrt", det)
        eps3 = levi_civita(3)
        cy = [[None] * 3 for _ in rng3]
        for i in rng3:
            for j in rng3:
                terms = []
                for m in rng3:
                    for n in rng3:
                        s = eps3[i, m, n]
                        if s == 0.0:
                            continue
                        for k in rng3:
                            for l in rng3:
                                prod = expr_mul(
                                    expr_mul(ginv[m][k], ginv[n][l]),
                                    cot[j][k][l])
                                terms.append(prod if s > 0
                                             else expr_neg(prod))
                cy[i][j] = expr_mul(sq, _esum(terms))
        sym = [[expr_mul(Const(1.0 / 6.0), expr_add(cy[i][j], cy[j][i]))
                for j in rng3] for i in rng3]
        trq = expr_mul(Const(0.25), _esum(
            [expr_mul(ginv[i][j], sym[i][j]) for i in rng3 for j in rng3]))
        g3 = [[expr_sub(sym[i][j], expr_mul(trq, g[i][j])) for j in rng3]
              for i in rng3]
    else:
        g3 = [[Const(0.0)] * 3 for _ in rng3]

    return {"g": g, "p": p, "g3": g3, "g4": g4}


# ---------------------------------------------------------------------------
# Frame data for homogeneous builtin boundaries


_COFRAME_EXPRS = tuple(
    tuple(parse_expr(t, ("x1", "x2", "x3")) for t in row)
    for row in _COFRAME_TEXT)


def _coframe_values(pts):
    """E^a_i at pts (N,3) -> (N,3,3), rows indexed by the frame label a."""
    from .exprs import eval_value_batch
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    out = np.zeros((pts.shape[0], 3, 3))
    for a in range(3):
        for i in range(3):
            e = _COFRAME_EXPRS[a][i]
            if isinstance(e, Const) and e.value == 0.0:
                continue
            out[:, a, i] = eval_value_batch(e, pts)
    return out


def _frame_fg_tensors(frame: LieFrameSpec, branch: str):
    """Exact constant frame components of all collar coefficient data."""
    from .tensors import frame_cov_constant
    f = frame_cotton_fields(frame)
    g, ginv = f["g"], f["g_inv"]
    p = f["schouten"]
    p2 = p @ ginv @ p
    v = f["v_tensor"]
    g4 = 0.25 * (v + p2)
    sqrt_det = float(np.sqrt(np.prod(np.asarray(frame.gamma, dtype=float))))
    if branch == "selfdual":
        g3 = _g3_from_cy(g, ginv, f["cotton_york"])
        resid, scale = _g3_identity_residual(g, ginv, sqrt_det,
                                             f["cotton"], g3)
    else:
        g3 = np.zeros((3, 3))
        resid, scale = 0.0, 1.0
    tensors = {
        "g": g, "ginv": ginv, "sqrt_det": sqrt_det,
        "p": p, "p2": p2, "cotton": f["cotton"], "dp": f["dp"],
        "dc": f["dc"], "cy": f["cotton_york"], "v": v,
        "g3": g3, "g4": g4,
        "dg3": frame_cov_constant(frame, g3, "dd"),
    }
    return tensors, resid, scale


# ---------------------------------------------------------------------------
# Coefficients


@dataclass(frozen=True)
class FGCoefficients:
    """Pointwise evaluators for the collar coefficients of a boundary metric.

    mode "frame" holds exact constant frame matrices (homogeneous builtin
    boundaries); mode "chart" differentiates jet-exact curvature fields by
    finite differences at each requested point.  g3_scale/g4_scale deform
    the respective coefficients uniformly - used for negative controls; any
    deformation retags the branch as custom-g3.
    """
    boundary: MetricSpec
    branch: str
    mode: str
    frame: LieFrameSpec | None = None
    frame_tensors: dict | None = None
    g3_scale: float = 1.0
    g4_scale: float = 1.0
    g3_check_residual: float = 0.0
    h_scale: float = FD_STEP_FRACTION

    def scaled(self, g3=1.0, g4=1.0) -> "FGCoefficients":
        branch = self.branch if g3 == 1.0 and g4 == 1.0 else "custom-g3"
        return replace(self, g3_scale=self.g3_scale * float(g3),
                       g4_scale=self.g4_scale * float(g4), branch=branch)

    # -- evaluators ---------------------------------------------------------

    def fields(self, pts) -> dict:
        """All boundary tensors needed by the series checks, in chart
        components at pts (N,3): g, g_inv, sqrt_det, schouten, p_sq, cotton,
        dp, dc, cotton_york, v_tensor, g2, g3, g4, dg3."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.mode == "frame":
            return self._fields_frame(pts)
        return self._fields_chart(pts)

    def _fields_frame(self, pts):
        ft = self.frame_tensors
        E = _coframe_values(pts)

        def c2(x):
            return np.einsum("ab,Nai,Nbj->Nij", x, E, E, optimize=False)

        def c3(x):
            return np.einsum("abc,Nai,Nbj,Nck->Nijk", x, E, E, E,
                             optimize=False)

        def c4(x):
            return np.einsum("abcd,Nai,Nbj,Nck,Ndl->Nijkl", x, E, E, E, E,
                             optimize=False)

        g = c2(ft["g"])
        out = {
            "g": g, "g_inv": np.linalg.inv(g),
            "sqrt_det": np.sqrt(np.linalg.det(g)),
            "schouten": c2(ft["p"]), "p_sq": c2(ft["p2"]),
            "cotton": c3(ft["cotton"]), "dp": c3(ft["dp"]),
            "dc": c4(ft["dc"]), "cotton_york": c2(ft["cy"]),
            "v_tensor": c2(ft["v"]),
            "g3": self.g3_scale * c2(ft["g3"]),
            "g4": self.g4_scale * c2(ft["g4"]),
            "dg3": self.g3_scale * c3(ft["dg3"]),
        }
        out["g2"] = -out["schouten"]
        return out

    def _fields_chart(self, pts):
        f = cotton_fields(self.boundary, pts, h_scale=self.h_scale)
        p, ginv = f["schouten"], f["g_inv"]
        p2 = np.einsum("Nia,Nab,Nbj->Nij", p, ginv, p, optimize=False)
        out = {
            "g": f["g"], "g_inv": ginv, "sqrt_det": f["sqrt_det"],
            "schouten": p, "p_sq": p2, "cotton": f["cotton"],
            "dp": f["dp"], "dc": f["dc"], "cotton_york": f["cotton_york"],
            "v_tensor": f["v_tensor"],
            "g2": -p,
            "g4": self.g4_scale * 0.25 * (f["v_tensor"] + p2),
        }
        if self.branch == "even":
            out["g3"] = np.zeros_like(p)
            out["dg3"] = np.zeros(p.shape[:1] + (3, 3, 3))
        else:
            out["g3"] = self.g3_scale * _g3_from_cy(f["g"], ginv,
                                                    f["cotton_york"])

            def g3_at(q):
                fq = cotton_fields(self.boundary, q, h_scale=self.h_scale)
                return _g3_from_cy(fq["g"], fq["g_inv"], fq["cotton_york"])

            out["dg3"] = self.g3_scale * covariant_derivative(
                self.boundary, g3_at, "dd", pts, h_scale=self.h_scale)
        return out

    def g2(self, pts):
        return self.fields(pts)["g2"]

    def g3(self, pts):
        return self.fields(pts)["g3"]

    def g4(self, pts):
        return self.fields(pts)["g4"]

    def trace_check(self, pts) -> dict:
        """Pointwise residuals of the coefficient trace identities:
        tr g3 = 0 and tr g4 = |P|^2 / 4."""
        f = self.fields(pts)
        ginv = f["g_inv"]
        tr3 = np.einsum("Nij,Nij->N", ginv, f["g3"], optimize=False)
        tr4 = np.einsum("Nij,Nij->N", ginv, f["g4"], optimize=False)
        p_norm2 = np.einsum("Nik,Njl,Nij,Nkl->N", ginv, ginv,
                            f["schouten"], f["schouten"], optimize=False)
        return {
            "g3_trace": float(np.max(np.abs(tr3))),
            "g4_trace": float(np.max(np.abs(tr4 - 0.25 * p_norm2))),
        }


def fg_coefficients(boundary: MetricSpec, branch: str,
                    method: str = "auto",
                    h_scale: float = FD_STEP_FRACTION) -> FGCoefficients:
    """Collar coefficients of a 3D boundary metric.

    branch "even" sets g3 = 0; branch "selfdual" derives g3 from the
    Cotton-York tensor by contracting the self-duality constraint, then
    verifies the full 4-index identity at sample points (plug-back) and
    records the residual.  method "auto" picks the exact frame route for
    homogeneous builtins and finite differences otherwise.
    """
    if boundary.dim != 3:
        raise ValueError("collar coefficients need a 3-dimensional boundary")
    if branch not in ("even", "selfdual"):
        raise ValueError(f"branch must be even|selfdual, got {branch!r}")
    if method == "auto":
        method = "frame" if boundary.builtin in _FRAME_BUILTINS else "chart"

    if method == "frame":
        if boundary.builtin not in _FRAME_BUILTINS:
            raise ValueError("frame coefficients exist only for the "
                             "homogeneous builtins round-s3 and berger")
        eps = float(boundary.builtin_params.get("eps", 1.0))
        frame = su2_frame(eps)
        tensors, resid, scale = _frame_fg_tensors(frame, branch)
        if resid > 1e-8 * (1.0 + scale):
            raise ValueError(f"self-dual g3 plug-back failed: residual "
                             f"{resid:.3e} against scale {scale:.3e}")
        return FGCoefficients(boundary=boundary, branch=branch, mode="frame",
                              frame=frame, frame_tensors=tensors,
                              g3_check_residual=resid, h_scale=h_scale)

    if method != "chart":
        raise ValueError(f"method must be auto|frame|chart, got {method!r}")
    fg = FGCoefficients(boundary=boundary, branch=branch, mode="chart",
                        h_scale=h_scale)
    if branch == "selfdual":
        pts = boundary.sample_interior(np.random.default_rng(23), 5,
                                       margin=0.15)
        f = fg.fields(pts)
        resid, scale = _g3_identity_residual(
            f["g"], f["g_inv"], f["sqrt_det"], f["cotton"], f["g3"])
        if resid > 1e-2 * (1.0 + scale):
            raise ValueError(f"self-dual g3 plug-back failed: residual "
                             f"{resid:.3e} against scale {scale:.3e}")
        fg = replace(fg, g3_check_residual=resid)
    return fg


# ---------------------------------------------------------------------------
# Assembly


def _shift_expr(e: Expr, names4, offset=1, memo=None) -> Expr:
    """Reindex boundary variables into the 4D chart (radial slot first).

    memo must be shared across all components of one assembly: the
    coefficient expressions share curvature subtrees, and rebuilding shared
    nodes once per path both blows up the walk and destroys the sharing the
    evaluator's cache relies on."""
    if memo is None:
        memo = {}
    out = memo.get(id(e))
    if out is not None:
        return out
    if isinstance(e, Const):
        out = e
    elif isinstance(e, Var):
        out = Var(e.index + offset, names4[e.index + offset])
    elif isinstance(e, BinOp):
        out = BinOp(e.op, _shift_expr(e.lhs, names4, offset, memo),
                    _shift_expr(e.rhs, names4, offset, memo))
    elif isinstance(e, Func):
        out = Func(e.fn, _shift_expr(e.arg, names4, offset, memo))
    else:
        raise TypeError(f"unknown AST node {e!r}")
    memo[id(e)] = out
    return out


def _radial_poly(rvar, coeffs):
    """c0 + c2 r^2 + c3 r^3 + c4 r^4 as a tree, skipping exact zeros."""
    out = Const(float(coeffs[0]))
    for k, c in zip((2, 3, 4), coeffs[1:]):
        if c != 0.0:
            out = expr_add(out, expr_mul(Const(float(c)), expr_pow(rvar, k)))
    return out


def _assemble_frame(fg: FGCoefficients, names4):
    ft = fg.frame_tensors
    rvar = Var(0, names4[0])
    rows = tuple(tuple(_shift_expr(e, names4) for e in row)
                 for row in _COFRAME_EXPRS)
    polys = {}
    for a in range(3):
        for b in range(a, 3):
            coeffs = (ft["g"][a, b], -ft["p"][a, b],
                      fg.g3_scale * ft["g3"][a, b],
                      fg.g4_scale * ft["g4"][a, b])
            if any(c != 0.0 for c in coeffs):
                polys[(a, b)] = _radial_poly(rvar, coeffs)
    comps = {(0, 0): Const(1.0)}
    for i in range(3):
        for j in range(i, 3):
            terms = []
            for (a, b), h in polys.items():
                prods = [(rows[a][i], rows[b][j])]
                if a != b:
                    prods.append((rows[b][i], rows[a][j]))
                for u, vv in prods:
                    terms.append(expr_mul(h, expr_mul(u, vv)))
            comps[(1 + i, 1 + j)] = _esum(terms)
    return comps


def _assemble_symbolic(fg: FGCoefficients, names4):
    sym = _sym_fg_exprs(fg.boundary, fg.branch)
    rvar = Var(0, names4[0])
    memo = {}
    comps = {(0, 0): Const(1.0)}
    for i in range(3):
        for j in range(i, 3):
            pieces = [_shift_expr(sym["g"][i][j], names4, memo=memo)]
            pieces.append(expr_mul(
                expr_pow(rvar, 2),
                expr_neg(_shift_expr(sym["p"][i][j], names4, memo=memo))))
            if fg.branch != "even":
                g3e = _shift_expr(sym["g3"][i][j], names4, memo=memo)
                if fg.g3_scale != 1.0:
                    g3e = expr_mul(Const(fg.g3_scale), g3e)
                pieces.append(expr_mul(expr_pow(rvar, 3), g3e))
            g4e = _shift_expr(sym["g4"][i][j], names4, memo=memo)
            if fg.g4_scale != 1.0:
                g4e = expr_mul(Const(fg.g4_scale), g4e)
            pieces.append(expr_mul(expr_pow(rvar, 4), g4e))
            comps[(1 + i, 1 + j)] = _esum(pieces)
    return comps


@dataclass(frozen=True)
class CollarSpec:
    """A truncated collar: coefficients plus the assembled 4D metric."""
    coefficients: FGCoefficients
    r_max: float
    order: int
    assembled: MetricSpec

    @property
    def boundary(self) -> MetricSpec:
        return self.coefficients.boundary


def _boundary_text(spec: MetricSpec) -> str:
    if spec.builtin is None:
        return "inline"
    params = " ".join(f"{k}={v!r}"
                      for k, v in sorted(spec.builtin_params.items()))
    return f"{spec.builtin} {params}".strip()


def make_collar(boundary: MetricSpec, branch: str = "even",
                r_max: float = 0.5, *, method: str = "auto",
                g3_scale: float = 1.0, g4_scale: float = 1.0) -> CollarSpec:
    """Assemble gbar = dr^2 + g_r on [0, r_max] x boundary.

    The result's .assembled is a plain 4D MetricSpec with the radial
    coordinate first, so every downstream tool (jets, curvature, quadrature)
    applies unchanged.  Construction verifies that the r = 0 slice equals
    the boundary metric, that the expansion has no linear term, and that the
    metric stays positive definite up to r_max.
    """
    if not (r_max > 0):
        raise ValueError("r_max must be positive")
    fg = fg_coefficients(boundary, branch, method=method)
    if g3_scale != 1.0 or g4_scale != 1.0:
        fg = fg.scaled(g3=g3_scale, g4=g4_scale)

    for cand in ("r", "r0", "rad"):
        if cand not in boundary.coords:
            rname = cand
            break
    names4 = (rname,) + tuple(boundary.coords)
    if fg.mode == "frame":
        comps = _assemble_frame(fg, names4)
    else:
        comps = _assemble_symbolic(fg, names4)
    domains = (CoordDomain(0.0, float(r_max), False),) + tuple(
        boundary.domains)
    spec4 = MetricSpec(4, names4, domains, comps)

    # construction self-checks: boundary slice, no linear term, positivity
    pts3 = boundary.sample_interior(np.random.default_rng(17), 6, margin=0.12)
    zero = np.concatenate([np.zeros((pts3.shape[0], 1)), pts3], axis=1)
    g0, dg0, _ = spec4.metric_jets(zero)
    ghat = boundary.metric_values(pts3)
    scale = float(np.max(np.abs(ghat)))
    if float(np.max(np.abs(g0[:, 1:, 1:] - ghat))) > 1e-11 * (1.0 + scale):
        raise ValueError("assembled collar does not restrict to the "
                         "boundary metric at r = 0")
    if float(np.max(np.abs(dg0[:, 0]))) > 1e-11 * (1.0 + scale):
        raise ValueError("assembled collar has a linear term in r")
    for frac in (1.0, 0.6):
        probe = np.concatenate(
            [np.full((pts3.shape[0], 1), frac * r_max), pts3], axis=1)
        try:
            spec4.spd_check(probe)
        except ValueError as exc:
            raise ValueError(
                f"collar metric loses positivity near r = {frac * r_max:g}; "
                f"reduce r_max ({exc})") from None

    if fg.g3_scale == 1.0 and fg.g4_scale == 1.0:
        spec4.collar_info = CollarInfo(_boundary_text(boundary), branch,
                                       float(r_max), boundary)
    return CollarSpec(coefficients=fg, r_max=float(r_max), order=4,
                      assembled=spec4)


def collar_from_spec(spec4: MetricSpec) -> CollarSpec:
    """Rebuild a CollarSpec from a 4D metric carrying collar provenance."""
    info = spec4.collar_info
    if info is None:
        raise ValueError("metric spec has no collar provenance")
    return make_collar(info.boundary_spec, branch=info.branch,
                       r_max=info.r_max)


def collar_metric_eval(collar: CollarSpec, r, x) -> dict:
    """Metric value and exact jets of the assembled collar at (r, x).

    r: scalar or (N,); x: (3,) or (N,3).  Radii must lie in (0, r_max].
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r = np.broadcast_to(np.asarray(r, dtype=float).ravel(),
                        (x.shape[0],)).astype(float)
    if np.any(r <= 0.0) or np.any(r > collar.r_max * (1 + 1e-12)):
        raise ValueError(f"radius out of range (0, {collar.r_max}]")
    pts = np.concatenate([r[:, None], x], axis=1)
    g, dg, d2g = collar.assembled.metric_jets(pts)
    return {"points": pts, "g": g, "dg": dg, "d2g": d2g}


# ---------------------------------------------------------------------------
# Series residuals


@dataclass(frozen=True)
class SeriesFit:
    """Log-log remainder fit for one family of series components.

    order is the first omitted power (None for identically-zero families).
    exact means every residual sat at the roundoff floor, which passes
    regardless of slope."""
    family: str
    order: float | None
    slope: float | None
    exact: bool
    passed: bool
    residuals: np.ndarray
    r_grid: np.ndarray
    scale: float

    def __str__(self):
        if self.exact:
            body = f"exact to tolerance (max residual {max(self.residuals):.2e})"
        elif self.slope is None:
            body = "no fit"
        else:
            body = f"slope {self.slope:.3f} (need >= {self.order - 0.3:.1f})"
        mark = "pass" if self.passed else "FAIL"
        return f"{self.family}: {body} [{mark}]"


def _fit_family(family, r_grid, residuals, order, scale, floor=None):
    res = np.asarray(residuals, dtype=float)
    eff_floor = floor if floor is not None else 5e-12 * (1.0 + scale)
    mask = res > eff_floor
    if order is None or mask.sum() < 3:
        exact = bool(np.all(res <= eff_floor))
        return SeriesFit(family=family, order=order, slope=None, exact=exact,
                         passed=exact, residuals=res,
                         r_grid=np.asarray(r_grid), scale=scale)
    slope = float(np.polyfit(np.log(np.asarray(r_grid)[mask]),
                             np.log(res[mask]), 1)[0])
    return SeriesFit(family=family, order=order, slope=slope, exact=False,
                     passed=slope >= order - 0.3, residuals=res,
                     r_grid=np.asarray(r_grid), scale=scale)


def _resmax(arr):
    """Max over everything but the leading r-axis."""
    return np.max(np.abs(arr.reshape(arr.shape[0], -1)), axis=1)


def collar_series_residual(collar: CollarSpec, check: str, r_grid=None,
                           points=None, count: int = 6, rng=None,
                           floor=None) -> dict:
    """Measured-minus-predicted remainders of the collar expansions.

    check "christoffel" fits the three nonzero connection families and
    verifies the identically-zero one; "riemann" the three curvature blocks;
    "schouten" the slice tensor P = -(Hess r)/r.  The prediction side uses
    only boundary data; the measured side only the assembled 4D metric.
    Returns {family: SeriesFit}.
    """
    if r_grid is None:
        r_grid = np.asarray(DEFAULT_R_GRID)
    r_grid = np.asarray(r_grid, dtype=float)
    if len(r_grid) < 6:
        raise ValueError("slope fits need at least 6 radii")
    if np.any(r_grid <= 0) or np.any(r_grid > 0.1 + 1e-15):
        raise ValueError("r-grid must lie in (0, 0.1]")
    if np.any(r_grid > collar.r_max):
        raise ValueError("r-grid exceeds the collar range")

    boundary = collar.boundary
    if points is None:
        rng = rng or np.random.default_rng(7)
        points = boundary.sample_interior(rng, count, margin=0.1)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    M, R = points.shape[0], len(r_grid)

    bf = collar.coefficients.fields(points)
    base = curvature_fields(boundary, points)
    pts4 = np.concatenate([
        np.repeat(r_grid, M)[:, None],
        np.tile(points, (R, 1)),
    ], axis=1)
    # broadcast columns: ndim must exceed the predicted tensor's by one
    rcol = r_grid.reshape(R, 1, 1, 1)           # against (M,3,3) fields
    rcol3 = r_grid.reshape(R, 1, 1, 1, 1)       # against (M,3,3,3)
    rcol4 = r_grid.reshape(R, 1, 1, 1, 1, 1)    # against (M,3,3,3,3)

    ginv, g = bf["g_inv"], bf["g"]
    p, p2 = bf["schouten"], bf["p_sq"]
    g3, g4, dp, dg3 = bf["g3"], bf["g4"], bf["dp"], bf["dg3"]

    out = {}
    if check == "christoffel":
        gam4 = christoffel(collar.assembled, pts4).reshape(R, M, 4, 4, 4)
        a_kij = np.einsum("Nkm,Nijm->Nkij", ginv, dp, optimize=False)
        b_kij = np.einsum("Nka,Naij->Nkij", ginv, dp, optimize=False)
        t = a_kij + a_kij.transpose(0, 1, 3, 2) - b_kij
        pred = base["christoffel"][None] - 0.5 * rcol3 ** 2 * t
        meas = gam4[:, :, 1:, 1:, 1:]
        out["tangential"] = _fit_family(
            "tangential", r_grid, _resmax(meas - pred), 3,
            float(np.max(np.abs(meas))), floor)

        pred = rcol * p - 1.5 * rcol ** 2 * g3 - 2.0 * rcol ** 3 * g4
        meas = gam4[:, :, 0, 1:, 1:]
        out["normal"] = _fit_family(
            "normal", r_grid, _resmax(meas - pred), 4,
            float(np.max(np.abs(meas))), floor)

        pud = np.einsum("Nkm,Nmi->Nki", ginv, p, optimize=False)
        g3ud = np.einsum("Nkm,Nmi->Nki", ginv, g3, optimize=False)
        tail = np.einsum("Nkm,Nmi->Nki", ginv, 2.0 * g4 - p2, optimize=False)
        pred = (-rcol * pud + 1.5 * rcol ** 2 * g3ud + rcol ** 3 * tail)
        meas = gam4[:, :, 1:, 1:, 0]            # [r, m, k, i] = Gamma^k_{i0}
        out["mixed"] = _fit_family(
            "mixed", r_grid, _resmax(meas - pred), 4,
            float(np.max(np.abs(meas))), floor)

        zeros = np.concatenate([
            gam4[:, :, 0, 0, :].reshape(R, -1),
            gam4[:, :, 1:, 0, 0].reshape(R, -1),
        ], axis=1)
        out["zero"] = _fit_family("zero", r_grid, _resmax(zeros), None,
                                  1.0, floor)
        return out

    if check == "riemann":
        f4 = curvature_fields(collar.assembled, pts4)
        riem = f4["riemann"].reshape(R, M, 4, 4, 4, 4)

        dc = bf["dc"]
        curl = dc.transpose(0, 2, 1, 3, 4) - dc            # [N,i,j,k,l]
        pp = (np.einsum("Nik,Njl->Nijkl", p, p, optimize=False)
              - np.einsum("Njk,Nil->Nijkl", p, p, optimize=False))
        corr = curl - _kulkarni(g, p2) - 4.0 * pp
        pred = base["riemann"][None] + 0.5 * rcol4 ** 2 * corr
        meas = riem[:, :, 1:, 1:, 1:, 1:]
        out["tangential"] = _fit_family(
            "tangential", r_grid, _resmax(meas - pred), 3,
            float(np.max(np.abs(meas))), floor)

        pred = p - 3.0 * rcol * g3 + rcol ** 2 * (p2 - 6.0 * g4)
        meas = riem[:, :, 1:, 0, 1:, 0]
        out["normal-normal"] = _fit_family(
            "normal-normal", r_grid, _resmax(meas - pred), 3,
            float(np.max(np.abs(meas))), floor)

        tg = dg3.transpose(0, 2, 3, 1)
        curl3 = tg - tg.transpose(0, 1, 3, 2)              # nabla_k g3_ij - nabla_j g3_ik
        pred = -rcol3 * bf["cotton"] + 1.5 * rcol3 ** 2 * curl3
        meas = riem[:, :, 0, 1:, 1:, 1:]
        out["normal-tangential"] = _fit_family(
            "normal-tangential", r_grid, _resmax(meas - pred), 3,
            float(np.max(np.abs(meas))), floor)
        return out

    if check == "schouten":
        gam4 = christoffel(collar.assembled, pts4).reshape(R, M, 4, 4, 4)
        pbar = gam4[:, :, 0] / rcol                        # -(Hess r)/r
        pred = p - 1.5 * rcol * g3 - 2.0 * rcol ** 2 * g4
        meas = pbar[:, :, 1:, 1:]
        out["tangential"] = _fit_family(
            "tangential", r_grid, _resmax(meas - pred), 3,
            float(np.max(np.abs(meas))), floor)
        out["mixed-zero"] = _fit_family(
            "mixed-zero", r_grid, _resmax(pbar[:, :, 1:, 0]), None, 1.0,
            floor)
        out["normal-zero"] = _fit_family(
            "normal-zero", r_grid, _resmax(pbar[:, :, 0, 0]), None, 1.0,
            floor)
        return out

    raise ValueError(
        f"check must be christoffel|riemann|schouten, got {check!r}")


# ---------------------------------------------------------------------------
# The curvature-type tensor V


@dataclass(frozen=True)
class VTensors:
    """Direct and reduced evaluations of the curvature-type tensor V.

    The direct route antisymmetrizes nabla C and adds the P^2/g4 wedge
    blocks; the reduced route contracts first (V_ij = div C) and rebuilds
    the 4-index tensor from the vanishing of its trace-free part.  Agreement
    is a nontrivial identity, not bookkeeping.
    """
    v4_direct: np.ndarray
    v4_reduced: np.ndarray
    v2_direct: np.ndarray
    v2_reduced: np.ndarray
    max_diff: float


def v_tensors(boundary: MetricSpec, coefficients: FGCoefficients | None,
              points) -> VTensors:
    """Evaluate V both ways at points (N,3) or a single point (3,)."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if coefficients is None:
        coefficients = fg_coefficients(boundary, "even")
    bf = coefficients.fields(pts)
    g, ginv, dc = bf["g"], bf["g_inv"], bf["dc"]

    curl = dc.transpose(0, 2, 1, 3, 4) - dc
    v4_direct = (0.5 * curl - 0.5 * _kulkarni(g, bf["p_sq"])
                 + 2.0 * _kulkarni(g, bf["g4"]))
    v2_direct = np.einsum("Nkl,Nikjl->Nij", ginv, v4_direct, optimize=False)

    v2_reduced = np.einsum("Nka,Naijk->Nij", ginv, dc, optimize=False)
    v4_reduced = _kulkarni(g, v2_reduced)

    max_diff = max(float(np.max(np.abs(v4_direct - v4_reduced))),
                   float(np.max(np.abs(v2_direct - v2_reduced))))
    if single:
        return VTensors(v4_direct[0], v4_reduced[0], v2_direct[0],
                        v2_reduced[0], max_diff)
    return VTensors(v4_direct, v4_reduced, v2_direct, v2_reduced, max_diff)
