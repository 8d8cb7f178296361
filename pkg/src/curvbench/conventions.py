"""Frozen statement of the sign and index conventions the package computes in.

Every number this package emits depends on a web of sign choices that
reasonable references disagree on.  The text below pins each choice once;
`conventions_hash()` digests it so that reports carry a short fingerprint and
a reader comparing two runs can tell immediately whether they were produced
under the same conventions.  Change the text and every report hash changes
with it -- that is the point.
"""

from __future__ import annotations

import hashlib

__all__ = ["CONVENTIONS", "conventions_hash"]


CONVENTIONS = """\
curvbench convention ledger, revision 1

coordinates and storage
  Tensors are stored with all indices down unless a name says otherwise.
  Batched arrays carry the point index first: riemann[N, i, j, k, l].
  Coordinates are named x1..xn; on 4D collar models x1 is the defining
  (boundary-distance) coordinate r.

curvature signs
  Riemann: R(X,Y)Z = [nabla_X, nabla_Y] Z - nabla_[X,Y] Z, lowered so that
  sectional curvatures of round spheres are positive: R_ijij > 0.
  Ricci: Ric_jl = g^ik R_ijkl.  Scalar: R = g^jl Ric_jl.
  With these signs a unit round S^3 has Ric = 2 g and R = 6; hyperbolic
  4-space has Ric = -3 g.

schouten / cotton / dual (3D)
  Schouten: P = (Ric - R g / (2 (n - 1))) / (n - 2).
  Cotton: C_ijk = nabla_k P_ij - nabla_j P_ik   (antisymmetric in j,k).
  Volume form: mu_ikl = sqrt(det g) eps_ikl with eps_123 = +1; raised
  version mu_i^kl = sqrt(det g) eps_imn g^mk g^nl.
  Cotton-York: CY_ij = mu_i^kl C_jkl (no 1/2); symmetric, trace-free,
  divergence-free.  V_ij = g^kl nabla_l C_ijk (divergence on the last
  slot of C).
  Pairing <A, B> = A_ij B_kl g^ik g^jl; norms |A|^2 = <A, A>.

regularized invariant
  i_eps = integral of <V, CY> (eps + |CY|^2)^(-2/3) dv; the limit eps -> 0+
  is taken along a decreasing schedule and reported only when the tail
  differences decay geometrically.

collar normalization (4D from 3D boundary data)
  gbar = dr^2 + g_r,   g_r = ghat + r^2 g2 + r^3 g3 + r^4 g4 + ...
  g2 = -P(ghat).
  even branch: g3 = 0.
  selfdual branch: g3 solves the contracted self-duality constraint
  (3/4)(ghat ^ g3) = -(1/2) mu C; for the trace-free CY above this is
  g3 = CY/6.
  g4 = (1/4) (V + P^2), with P^2_ij = P_ik P^k_j and V as above; its
  ghat-trace equals (1/4) |P|^2 in both branches.

weyl conventions (4D)
  Kulkarni-Nomizu: (g ? x)_ijkl = g_ik x_jl - g_il x_jk - g_jk x_il
  + g_jl x_ik.  Weyl: W = Riem - (g ? Schouten4) with
  Schouten4 = (Ric - R g / 6) / 2.
  Orientation: the coordinate frame x1..x4 is positively oriented;
  vol_ijkl = sqrt(det g) eps_ijkl.  Self-dual part via the curvature
  operator on two-forms; norms use the operator normalization
  |W+-|^2 = (1/4) W+-_ijkl W+-^ijkl, so |W|^2 = |W+|^2 + |W-|^2.

boundary terms
  Mean curvature H = div(nu) with nu the outward unit normal; on the
  inner face of a collar (smaller r) the outward normal is -d/dr.
  Conformal energy: E_h[phi] = integral (|grad phi|^2 + R phi^2 / 6) dv
  + (1/3) boundary integral H phi^2 dA.

quadrature and reduction order
  Periodic axes: midpoint-offset trapezoid nodes lo + (j + 1/2) h.
  Non-periodic axes: Gauss-Legendre.  All sums reduce in fixed pairwise
  order, independent of thread count.
"""


def conventions_hash() -> str:
    """sha256 hex digest of the convention ledger text."""
    return hashlib.sha256(CONVENTIONS.encode("utf-8")).hexdigest()
