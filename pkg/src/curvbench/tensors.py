"""Pointwise tensor calculus.

Two evaluation paths feed everything downstream:

* the chart path — curvature assembled from exact second-order jets of the
  metric components (Christoffels and Riemann carry no truncation error;
  only covariant derivatives of *derived* fields fall back to finite
  differences), and

* the frame path — left-invariant metrics on a 3D Lie group, where the Koszul
  formula gives constant Christoffels and every curvature quantity is a small
  exact matrix computation.

Sign conventions (pinned by: unit round S^3 has R = +6, Ric = 2g, P = g/2):

    Gamma^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)
    R^m_lij    = d_i Gamma^m_jl - d_j Gamma^m_il
                 + Gamma^m_ik Gamma^k_jl - Gamma^m_jk Gamma^k_il
    R_ijkl     = g_km R^m_lij          (so R_ijij > 0 on the round sphere)
    Ric_jl     = g^{ik} R_ijkl,   R = g^{jl} Ric_jl
    P          = (Ric - R/(2(n-1)) g) / (n-2)
    mu_{1..n}  = +sqrt(det g) in the declared coordinate order
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .exprs import ExprDomainError

__all__ = [
    "CurvatureBundle", "LieFrameSpec", "su2_frame",
    "christoffel", "curvature_bundle", "curvature_fields", "ricci_fields",
    "christoffel_with_derivative", "covariant_derivative", "grad_hess_fd",
    "fd_steps", "frame_curvature", "frame_cov_constant",
    "frame_volume", "boundary_mean_curvature", "levi_civita",
    "FD_STEP_FRACTION",
]

# finite-difference step, as a fraction of each axis' domain span
FD_STEP_FRACTION = 1e-3
# fraction of the distance to a non-periodic edge the stencil may use
_EDGE_FRACTION = 0.45

_LC_CACHE = {}


def levi_civita(n: int) -> np.ndarray:
    """Dense Levi-Civita symbol of rank n."""
    if n not in _LC_CACHE:
        arr = np.zeros((n,) * n)
        for perm in itertools.permutations(range(n)):
            sign = 1.0
            p = list(perm)
            for i in range(n):
                for j in range(i + 1, n):
                    if p[i] > p[j]:
                        sign = -sign
            arr[perm] = sign
        _LC_CACHE[n] = arr
    return _LC_CACHE[n]


@dataclass
class CurvatureBundle:
    point: np.ndarray | None
    g: np.ndarray            # (n,n)
    g_inv: np.ndarray
    christoffel: np.ndarray  # (n,n,n): [k,i,j] = Gamma^k_ij
    riemann: np.ndarray      # (n,n,n,n) all indices down
    ricci: np.ndarray
    scalar: float
    schouten: np.ndarray
    volume_form: np.ndarray  # dense, mu_{1..n} = +sqrt(det g)


def _christoffel_arrays(g, dg):
    g_inv = np.linalg.inv(g)
    term = dg + dg.transpose(0, 2, 1, 3) - dg.transpose(0, 2, 3, 1)
    # 0.5 g^{ml} term_{ijl} as a batched matmul (hot path)
    gamma = 0.5 * np.matmul(term, g_inv[:, None]).transpose(0, 3, 1, 2)
    return g_inv, term, gamma


def _dginv_arrays(g_inv, dg):
    """d_a (g^{-1}) = -g^{-1} (d_a g) g^{-1}, batched over points and axes."""
    inner = np.matmul(g_inv[:, None], dg)
    return -np.matmul(inner, g_inv[:, None])


def _curvature_arrays(g, dg, d2g):
    N, n = g.shape[0], g.shape[1]
    g_inv, term, gamma = _christoffel_arrays(g, dg)

    dginv = _dginv_arrays(g_inv, dg)
    dterm = d2g + d2g.transpose(0, 1, 3, 2, 4) - d2g.transpose(0, 1, 3, 4, 2)
    dgamma = 0.5 * (np.einsum("Naml,Nijl->Namij", dginv, term, optimize=False)
                    + np.einsum("Nml,Naijl->Namij", g_inv, dterm, optimize=False))

    quad = np.einsum("Nmik,Nkjl->Nmlij", gamma, gamma, optimize=False)
    t1 = dgamma.transpose(0, 2, 4, 1, 3)          # [N,m,l,i,j] = dGamma[N,i,m,j,l]
    rud = t1 - t1.transpose(0, 1, 2, 4, 3) + quad - quad.transpose(0, 1, 2, 4, 3)

    riemann = np.einsum("Nkm,Nmlij->Nijkl", g, rud, optimize=False)
    ricci = np.einsum("Nik,Nijkl->Njl", g_inv, riemann, optimize=False)
    scalar = np.einsum("Njl,Njl->N", g_inv, ricci, optimize=False)
    schouten = (ricci - scalar[:, None, None] / (2.0 * (n - 1)) * g) / (n - 2)
    sqrt_det = np.sqrt(np.linalg.det(g))
    return {
        "g": g, "g_inv": g_inv, "christoffel": gamma, "riemann": riemann,
        "ricci": ricci, "scalar": scalar, "schouten": schouten,
        "sqrt_det": sqrt_det,
    }


def curvature_fields(spec, pts) -> dict:
    """Batched curvature of a MetricSpec at pts (N,n); exact-jet based."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    g, dg, d2g = spec.metric_jets(pts)
    return _curvature_arrays(g, dg, d2g)


def christoffel_with_derivative(spec, pts):
    """(g, g_inv, Gamma, dGamma) with dGamma[N,a,m,i,j] = d_a Gamma^m_ij,
    all exact from the second-order metric jets."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    g, dg, d2g = spec.metric_jets(pts)
    g_inv, term, gamma = _christoffel_arrays(g, dg)
    dginv = _dginv_arrays(g_inv, dg)
    dterm = d2g + d2g.transpose(0, 1, 3, 2, 4) - d2g.transpose(0, 1, 3, 4, 2)
    dgamma = 0.5 * (np.einsum("Naml,Nijl->Namij", dginv, term, optimize=False)
                    + np.einsum("Nml,Naijl->Namij", g_inv, dterm,
                                optimize=False))
    return g, g_inv, gamma, dgamma


def ricci_fields(spec, pts) -> dict:
    """Ricci/scalar/Schouten only, assembled through contracted traces of
    dGamma so no (N,n^4) intermediate is materialized.  Same conventions and
    results as curvature_fields; used on hot paths that never need the full
    Riemann tensor."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    g, dg, d2g = spec.metric_jets(pts)
    n = g.shape[1]
    g_inv, term, gamma = _christoffel_arrays(g, dg)

    dginv = _dginv_arrays(g_inv, dg)
    dterm = d2g + d2g.transpose(0, 1, 3, 2, 4) - d2g.transpose(0, 1, 3, 4, 2)

    # Ric_{jl} = sum_i [d_i Gamma^i_{jl}] - d_j [Gamma^i_{il}]
    #          + Gamma^i_{ik} Gamma^k_{jl} - Gamma^i_{jk} Gamma^k_{il}
    t1 = 0.5 * (np.einsum("Naal,Nijl->Nij", dginv, term, optimize=False)
                + np.einsum("Nal,Naijl->Nij", g_inv, dterm, optimize=False))
    t2 = 0.5 * (np.einsum("Njml,Nmil->Nij", dginv, term, optimize=False)
                + np.einsum("Nml,Njmil->Nij", g_inv, dterm, optimize=False))
    tr_gamma = np.einsum("Nmmk->Nk", gamma, optimize=False)
    t3 = np.einsum("Nk,Nkij->Nij", tr_gamma, gamma, optimize=False)
    t4 = np.einsum("Nmik,Nkmj->Nij", gamma, gamma, optimize=False)

    ricci = t1 - t2 + t3 - t4
    scalar = np.einsum("Njl,Njl->N", g_inv, ricci, optimize=False)
    schouten = (ricci - scalar[:, None, None] / (2.0 * (n - 1)) * g) / (n - 2)
    with np.errstate(invalid="ignore"):
        # a negative determinant yields nan here; callers surface it
        # through their non-finite checks with the offending point
        sqrt_det = np.sqrt(np.linalg.det(g))
    return {
        "g": g, "g_inv": g_inv, "christoffel": gamma, "ricci": ricci,
        "scalar": scalar, "schouten": schouten,
        "sqrt_det": sqrt_det,
    }


def christoffel(spec, point) -> np.ndarray:
    """Gamma^k_ij at one point (n,n,n), or batched (N,n,n,n) for 2D input."""
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    g, dg, _ = spec.metric_jets(pts)
    _, _, gamma = _christoffel_arrays(g, dg)
    return gamma[0] if single else gamma


def curvature_bundle(spec, point) -> CurvatureBundle:
    pts = np.atleast_2d(np.asarray(point, dtype=float))
    f = curvature_fields(spec, pts)
    n = f["g"].shape[1]
    mu = f["sqrt_det"][0] * levi_civita(n)
    return CurvatureBundle(
        point=pts[0], g=f["g"][0], g_inv=f["g_inv"][0],
        christoffel=f["christoffel"][0], riemann=f["riemann"][0],
        ricci=f["ricci"][0], scalar=float(f["scalar"][0]),
        schouten=f["schouten"][0], volume_form=mu,
    )


# ---------------------------------------------------------------------------
# Finite-difference covariant derivative


def _fd_steps(spec, pts, h_scale):
    """Per-point, per-axis steps; shrinks near non-periodic edges so the
    5-point stencil stays inside the domain."""
    N, n = pts.shape
    h = np.empty((N, n))
    for a, dom in enumerate(spec.domains):
        base = h_scale * dom.span
        if dom.periodic:
            h[:, a] = base
        else:
            dist = np.minimum(pts[:, a] - dom.lo, dom.hi - pts[:, a])
            if np.any(dist <= 1e-12):
                bad = pts[np.argmin(dist)]
                raise ExprDomainError(
                    f"finite-difference stencil exits the domain at {bad} "
                    f"(axis {spec.coords[a]})")
            h[:, a] = np.minimum(base, _EDGE_FRACTION * dist)
    return h


def _partial_fd(field, pts, h):
    """4th-order central differences of field along every axis.

    field maps (M,n) -> (M, *shape); returns (N, n, *shape)."""
    N, n = pts.shape
    shifted = []
    for a in range(n):
        for s in (-2.0, -1.0, 1.0, 2.0):
            q = pts.copy()
            q[:, a] += s * h[:, a]
            shifted.append(q)
    big = np.concatenate(shifted, axis=0)
    vals = np.asarray(field(big))
    shape = vals.shape[1:]
    vals = vals.reshape(n, 4, N, *shape)
    # (-f2 + 8 f1 - 8 fm1 + fm2) / (12h) with order (-2,-1,+1,+2)
    num = vals[:, 0] - 8.0 * vals[:, 1] + 8.0 * vals[:, 2] - vals[:, 3]
    hh = h.T.reshape(n, N, *([1] * len(shape)))
    out = num / (12.0 * hh)
    return np.moveaxis(out, 0, 1)      # (N, n, *shape)


def grad_hess_fd(field, pts, h):
    """4th-order finite-difference gradient and Hessian of a tensor field.

    field maps (M,n) -> (M,*shape); returns (f0, grad (N,n,*s), hess
    (N,n,n,*s)).  Pure second derivatives reuse the gradient stencil points;
    mixed ones use the 4x4 cross stencil, so one call costs
    1 + 4n + 8·n(n-1) field rows per point."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    N, n = pts.shape
    offsets = (-2.0, -1.0, 1.0, 2.0)
    shifted = [pts]
    for a in range(n):
        for s in offsets:
            q = pts.copy()
            q[:, a] += s * h[:, a]
            shifted.append(q)
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    for a, b in pairs:
        for sa in offsets:
            for sb in offsets:
                q = pts.copy()
                q[:, a] += sa * h[:, a]
                q[:, b] += sb * h[:, b]
                shifted.append(q)
    vals = np.asarray(field(np.concatenate(shifted, axis=0)))
    shape = vals.shape[1:]
    f0 = vals[:N]
    singles = vals[N:N + 4 * n * N].reshape(n, 4, N, *shape)
    cross = vals[N + 4 * n * N:].reshape(len(pairs), 4, 4, N, *shape)

    hvec = h.T.reshape(n, N, *([1] * len(shape)))
    grad = (singles[:, 0] - 8.0 * singles[:, 1]
            + 8.0 * singles[:, 2] - singles[:, 3]) / (12.0 * hvec)
    grad = np.moveaxis(grad, 0, 1)

    hess = np.zeros((N, n, n) + shape)
    for a in range(n):
        hess[:, a, a] = (-singles[a, 0] + 16.0 * singles[a, 1] - 30.0 * f0
                         + 16.0 * singles[a, 2] - singles[a, 3]) \
            / (12.0 * hvec[a] * hvec[a])
    w = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
    for k, (a, b) in enumerate(pairs):
        mixed = np.einsum("s,t,stN...->N...", w, w, cross[k],
                          optimize=False) / (hvec[a] * hvec[b])
        hess[:, a, b] = mixed
        hess[:, b, a] = mixed
    return f0, grad, hess


def fd_steps(spec, pts, h_scale=FD_STEP_FRACTION):
    """Public wrapper for the edge-adaptive stencil steps."""
    return _fd_steps(spec, np.atleast_2d(np.asarray(pts, dtype=float)), h_scale)


def covariant_derivative(spec, field, variance, point, h_scale=FD_STEP_FRACTION,
                         richardson=False):
    """nabla T by 4th-order finite differences plus Christoffel corrections.

    field: callable (M,n)->(M,*shape); variance: string of 'd'/'u' per slot.
    Returns (N, n, *shape) with the derivative index first:
    out[:, a, ...] = (nabla_a T)(...).  Accepts a single point too.
    """
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    h = _fd_steps(spec, pts, h_scale)

    partial = _partial_fd(field, pts, h)
    if richardson:
        partial_half = _partial_fd(field, pts, 0.5 * h)
        partial = (16.0 * partial_half - partial) / 15.0

    T = np.asarray(field(pts))
    if len(variance) != T.ndim - 1:
        raise ValueError("variance signature does not match field rank")
    gamma = christoffel(spec, pts)

    out = partial
    q = len(variance)
    letters = "ijklpqst"[:q]
    for s, v in enumerate(variance):
        idx = list(letters)
        src = list(letters)
        src[s] = "m"
        if v == "d":
            # - Gamma^m_{a i_s} T[... m ...]
            sub = f"Nma{letters[s]},N{''.join(src)}->Na{''.join(idx)}"
            out = out - np.einsum(sub, gamma, T, optimize=False)
        elif v == "u":
            # + Gamma^{i_s}_{a m} T[... m ...]
            sub = f"N{letters[s]}am,N{''.join(src)}->Na{''.join(idx)}"
            out = out + np.einsum(sub, gamma, T, optimize=False)
        else:
            raise ValueError(f"variance letters must be 'd' or 'u', got {v!r}")
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Left-invariant frames


@dataclass(frozen=True)
class LieFrameSpec:
    """3D Lie frame: structure constants c[k,i,j] = c^k_ij and a diagonal
    frame metric gamma."""
    c: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.shape != (3, 3, 3):
            raise ValueError("structure constants must be (3,3,3)")
        if not np.allclose(c, -c.transpose(0, 2, 1), atol=1e-14):
            raise ValueError("structure constants not antisymmetric in (i,j)")
        # Jacobi: sum over cyclic (i,j,k) of c^m_{i j} c^l_{m k} = 0
        jac = (np.einsum("mij,lmk->lijk", c, c, optimize=False)
               + np.einsum("mjk,lmi->lijk", c, c, optimize=False)
               + np.einsum("mki,lmj->lijk", c, c, optimize=False))
        if not np.allclose(jac, 0.0, atol=1e-12):
            raise ValueError("structure constants violate the Jacobi identity")
        if np.any(np.asarray(self.gamma, dtype=float) <= 0):
            raise ValueError("frame metric must be positive")


def su2_frame(eps: float) -> LieFrameSpec:
    """Left-invariant metric diag(eps,1,1) on SU(2), basis with
    [E_i, E_j] = 2 eps_{ijk} E_k; eps = 1 is the unit round 3-sphere."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return LieFrameSpec(c=2.0 * levi_civita(3),
                        gamma=np.array([float(eps), 1.0, 1.0]))


def _frame_christoffel(frame):
    c, gam = np.asarray(frame.c, float), np.asarray(frame.gamma, float)
    low = np.zeros((3, 3, 3))   # low[i,j,k] = <nabla_{e_i} e_j, e_k>
    for i in range(3):
        for j in range(3):
            for k in range(3):
                low[i, j, k] = 0.5 * (c[k, i, j] * gam[k]
                                      - c[i, j, k] * gam[i]
                                      + c[j, k, i] * gam[j])
    gamma_udd = low / gam[None, None, :]          # Gamma^k_ij = low_ijk / gam_k
    return np.ascontiguousarray(gamma_udd.transpose(2, 0, 1))   # [k,i,j]


def frame_curvature(frame: LieFrameSpec) -> CurvatureBundle:
    """Exact curvature of the left-invariant metric; frame components are
    base-point independent."""
    c = np.asarray(frame.c, float)
    gam = np.asarray(frame.gamma, float)
    G = _frame_christoffel(frame)     # G[k,i,j] = Gamma^k_ij

    # R^l_kij = Gamma^m_jk Gamma^l_im - Gamma^m_ik Gamma^l_jm - c^m_ij Gamma^l_mk
    rud = (np.einsum("mjk,lim->lkij", G, G, optimize=False)
           - np.einsum("mik,ljm->lkij", G, G, optimize=False)
           - np.einsum("mij,lmk->lkij", c, G, optimize=False))
    g = np.diag(gam)
    g_inv = np.diag(1.0 / gam)
    riemann = np.einsum("km,mlij->ijkl", g, rud, optimize=False)
    ricci = np.einsum("ik,ijkl->jl", g_inv, riemann, optimize=False)
    scalar = float(np.einsum("jl,jl->", g_inv, ricci, optimize=False))
    schouten = ricci - scalar / 4.0 * g
    mu = np.sqrt(np.prod(gam)) * levi_civita(3)
    return CurvatureBundle(point=None, g=g, g_inv=g_inv, christoffel=G,
                           riemann=riemann, ricci=ricci, scalar=scalar,
                           schouten=schouten, volume_form=mu)


def frame_cov_constant(frame, T, variance):
    """nabla_l T for a frame-constant tensor; returns (3, *T.shape) with the
    derivative index first.  Exact."""
    T = np.asarray(T, dtype=float)
    G = _frame_christoffel(frame)
    q = len(variance)
    letters = "ijkpqs"[:q]
    out = np.zeros((3,) + T.shape)
    for s, v in enumerate(variance):
        idx = list(letters)
        src = list(letters)
        src[s] = "m"
        if v == "d":
            sub = f"ma{letters[s]},{''.join(src)}->a{''.join(idx)}"
            out = out - np.einsum(sub, G, T, optimize=False)
        else:
            sub = f"{letters[s]}am,{''.join(src)}->a{''.join(idx)}"
            out = out + np.einsum(sub, G, T, optimize=False)
    return out


_SU2_VOLUME_UNIT = 2.0 * np.pi ** 2     # unit round 3-sphere


def frame_volume(frame: LieFrameSpec) -> float:
    """Total volume of the group manifold for su(2)-type frames."""
    if not np.allclose(frame.c, 2.0 * levi_civita(3), atol=1e-12):
        raise ValueError("frame volume is only defined here for the su(2) "
                         "frame with [E_i,E_j] = 2 eps_ijk E_k")
    return float(np.sqrt(np.prod(frame.gamma)) * _SU2_VOLUME_UNIT)


# ---------------------------------------------------------------------------
# Mean curvature of a coordinate slice


def boundary_mean_curvature(spec4, r0, points3=None, count=20, rng=None,
                            outward_sign=-1.0):
    """Mean curvature H of the slice {x1 = r0} with respect to the unit
    normal along outward_sign * grad(x1)  (outward_sign=-1 gives the
    nu = -d/dr convention at the r -> 0 face of a collar).

    H = div(nu) computed exactly from metric jets (no finite differences).
    Returns (points4, H values).
    """
    r_dom = spec4.domains[0]
    if not (r_dom.lo <= r0 <= r_dom.hi):
        raise ValueError(f"slice r = {r0} outside the domain "
                         f"[{r_dom.lo}, {r_dom.hi}]")
    if points3 is None:
        rng = rng or np.random.default_rng(0)
        cols = []
        for d in spec4.domains[1:]:
            pad = 0.05 * d.span
            cols.append(rng.uniform(d.lo + pad, d.hi - pad, size=count))
        points3 = np.stack(cols, axis=1)
    points3 = np.atleast_2d(points3)
    pts = np.concatenate([np.full((points3.shape[0], 1), float(r0)), points3],
                         axis=1)

    g, dg, _ = spec4.metric_jets(pts)
    g_inv = np.linalg.inv(g)
    dginv = _dginv_arrays(g_inv, dg)

    u = g_inv[:, :, 0]                        # g^{alpha r}
    grr = g_inv[:, 0, 0]
    phi = 1.0 / np.sqrt(grr)                  # normalization of grad r
    du = dginv[:, :, :, 0]                    # d_a g^{alpha r} -> [N,a,alpha]
    dgrr = dginv[:, :, 0, 0]                  # d_a g^{rr}
    dphi = -0.5 * (phi / grr)[:, None] * dgrr

    div = (np.einsum("Naa->N", du, optimize=False) * phi
           + np.einsum("Na,Na->N", u, dphi, optimize=False))
    # Gamma^a_{a mu} nu^mu = nu^mu d_mu log sqrt(det g)
    dlog = 0.5 * np.einsum("Nab,Nmab->Nm", g_inv, dg, optimize=False)
    div = div + np.einsum("Nm,Nm->N", u * phi[:, None], dlog, optimize=False)
    return pts, float(outward_sign) * div
