"""Exact symbolic oracle for the Berger-sphere invariants.

Everything here is derived from scratch in Euler-angle coordinates with
sympy: metric -> Christoffel -> curvature -> Schouten -> Cotton -> V, with
no imports from the package under test except at the final comparison.
The squashed metric is g = (sigma1^2 + sigma2^2 + eps*sigma3^2)/4, which at
eps = 1 is the unit round 3-sphere.
"""

import math

import numpy as np
import pytest

sympy = pytest.importorskip("sympy")

from curvbench.cotton import cotton_pack
from curvbench.tensors import su2_frame


def _symbolic_invariants(eps_exact):
    sp = sympy
    phi, theta, psi = sp.symbols("phi theta psi", real=True)
    x = (phi, theta, psi)

    s1 = [sp.sin(psi) * sp.sin(theta), sp.cos(psi), 0]
    s2 = [sp.cos(psi) * sp.sin(theta), -sp.sin(psi), 0]
    s3 = [sp.cos(theta), 0, 1]

    g = sp.zeros(3, 3)
    for a in range(3):
        for b in range(3):
            g[a, b] = sp.Rational(1, 4) * (
                s1[a] * s1[b] + s2[a] * s2[b] + eps_exact * s3[a] * s3[b])
    g = sp.simplify(g)
    ginv = g.inv()
    detg = sp.simplify(g.det())

    gamma = [[[sp.S.Zero] * 3 for _ in range(3)] for _ in range(3)]
    for k in range(3):
        for i in range(3):
            for j in range(3):
                t = sum(ginv[k, l] * (sp.diff(g[l, i], x[j])
                                      + sp.diff(g[l, j], x[i])
                                      - sp.diff(g[i, j], x[l]))
                        for l in range(3))
                gamma[k][i][j] = t / 2

    # R^l_{kij} = d_i Gamma^l_{jk} - d_j Gamma^l_{ik} + ...
    riem_up = [[[[sp.S.Zero] * 3 for _ in range(3)]
                for _ in range(3)] for _ in range(3)]
    for l in range(3):
        for k in range(3):
            for i in range(3):
                for j in range(3):
                    t = (sp.diff(gamma[l][j][k], x[i])
                         - sp.diff(gamma[l][i][k], x[j]))
                    t += sum(gamma[l][i][m] * gamma[m][j][k]
                             - gamma[l][j][m] * gamma[m][i][k]
                             for m in range(3))
                    riem_up[l][k][i][j] = t

    ricci = sp.zeros(3, 3)
    for k in range(3):
        for j in range(3):
            ricci[k, j] = sp.trigsimp(sum(riem_up[i][k][i][j]
                                          for i in range(3)))
    scalar = sp.simplify(sum(ginv[k, j] * ricci[k, j]
                             for k in range(3) for j in range(3)))

    schouten = sp.simplify(ricci - scalar / 4 * g)

    def cov_d_2tensor(t):
        out = [[[sp.S.Zero] * 3 for _ in range(3)] for _ in range(3)]
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    v = sp.diff(t[i, j], x[k])
                    v -= sum(gamma[m][k][i] * t[m, j] for m in range(3))
                    v -= sum(gamma[m][k][j] * t[i, m] for m in range(3))
                    out[i][j][k] = v
        return out

    dp = cov_d_2tensor(schouten)
    cotton = [[[sp.trigsimp(dp[i][j][k] - dp[i][k][j])
                for k in range(3)] for j in range(3)] for i in range(3)]

    # mu_i^{kl} = vol_{imn} g^{mk} g^{nl} with vol = sqrt(det g) [imn]
    sqrtg = sp.sqrt(detg)
    eps_sym = sp.LeviCivita
    mu = [[[sp.S.Zero] * 3 for _ in range(3)] for _ in range(3)]
    for i in range(3):
        for k in range(3):
            for l in range(3):
                mu[i][k][l] = sqrtg * sum(
                    eps_sym(i, m, n) * ginv[m, k] * ginv[n, l]
                    for m in range(3) for n in range(3))

    cy = sp.zeros(3, 3)
    for i in range(3):
        for j in range(3):
            cy[i, j] = sum(mu[i][k][l] * cotton[j][k][l]
                           for k in range(3) for l in range(3))

    def cov_d_3tensor(t):
        out = [[[[sp.S.Zero] * 3 for _ in range(3)]
                for _ in range(3)] for _ in range(3)]
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    for l in range(3):
                        v = sp.diff(t[i][j][k], x[l])
                        v -= sum(gamma[m][l][i] * t[m][j][k]
                                 for m in range(3))
                        v -= sum(gamma[m][l][j] * t[i][m][k]
                                 for m in range(3))
                        v -= sum(gamma[m][l][k] * t[i][j][m]
                                 for m in range(3))
                        out[i][j][k][l] = v
        return out

    dc = cov_d_3tensor(cotton)
    v_tensor = sp.zeros(3, 3)
    for i in range(3):
        for j in range(3):
            v_tensor[i, j] = sum(ginv[k, l] * dc[i][j][k][l]
                                 for k in range(3) for l in range(3))

    point = {theta: sp.Rational(2, 5), psi: sp.Rational(1, 3),
             phi: sp.Rational(1, 7)}
    gp = g.subs(point)
    ginv_p = ginv.subs(point)
    cy_p = cy.subs(point)
    v_p = v_tensor.subs(point)

    def pair(a, b):
        return sp.simplify(sum(
            ginv_p[i, k] * ginv_p[j, l] * a[i, j] * b[k, l]
            for i in range(3) for j in range(3)
            for k in range(3) for l in range(3)))

    return {
        "scalar": sp.simplify(scalar),
        "cy_norm2": pair(cy_p, cy_p),
        "pairing": pair(v_p, cy_p),
        "volume_check": sp.simplify(detg / sp.sin(theta) ** 2),
    }


@pytest.mark.slow
def test_squashed_sphere_invariants_match_symbolic_oracle():
    eps = sympy.Integer(2)
    sym = _symbolic_invariants(eps)

    # curvature scalars, exactly
    assert sympy.simplify(sym["scalar"] - 4) == 0          # R = 8 - 2 eps
    assert sympy.simplify(sym["cy_norm2"] - 768) == 0
    # <V, CY> is orientation-odd; compare magnitudes
    assert sympy.simplify(sym["pairing"] ** 2 - 1152 ** 2 * 2) == 0
    # det g = eps sin^2(theta) / 64 for this chart
    assert sympy.simplify(sym["volume_check"] - eps / sympy.Integer(64)) == 0

    pack = cotton_pack(su2_frame(2.0))
    assert abs(pack.cy_norm2 - 768.0) < 1e-10
    assert abs(abs(pack.pairing) - 1152.0 * math.sqrt(2.0)) < 1e-9
    assert pack.pairing < 0.0


@pytest.mark.slow
def test_round_sphere_symbolic_oracle_degenerates():
    sym = _symbolic_invariants(sympy.Integer(1))
    assert sympy.simplify(sym["scalar"] - 6) == 0
    assert sympy.simplify(sym["cy_norm2"]) == 0
    assert sympy.simplify(sym["pairing"]) == 0
