"""First-order secular averaging of the perturbing function.

The secular value of F_pert at a pair of ellipses is the double average
over both mean anomalies,

    <F_pert> = (1/4 pi^2) int_0^2pi int_0^2pi F_pert dl1 dl2,

evaluated here by tensor-product trapezoid quadrature (the integrand is
periodic and analytic in each angle, so the trapezoid rule converges
geometrically; the mean anomalies parametrize the averages directly, no
extra Jacobian).  Convergence is certified by doubling the node count.

The leading contribution is the quadrupolar (n = 2 Legendre) term, whose
double average has the closed form implemented in ``quadrupolar_term``:
with C = |C1 + C2| and the node lines eliminated (Laplace frame),

    <T2> = -(mu_quad L2^3 alpha^3) / (8 a1 G2^3) *
           { 3 (G1/L1)^2 [1 + Z] + 15 (1 - (G1/L1)^2) [cos^2 g1
             + Z sin^2 g1] - 6 (1 - (G1/L1)^2) - 4 },
    Z = (C^2 - G1^2 - G2^2)^2 / (4 G1^2 G2^2),

with mu_quad = m0 m1 m2/(m0+m1) and alpha = a1/a2.  It is independent of
g2, l1, l2.  The residual <F_pert> - <T2> is dominated by the averaged
octupole: with a1 and all eccentricities/angles held fixed, it scales as
alpha^4 for generic masses and as alpha^5 when m0 = m1 (sigma_3 = 0).
(The exponent convention here is for the raw energy at fixed a1; the
normalized bookkeeping used in averaging theory counts powers of alpha
after pulling out one factor 1/a2, which shifts exponents by one.)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCaseError, DomainError, PrecisionError
from .kepler import DelaunayElements, GravParams, solve_kepler, _orientation_matrix
from .threebody import MassSystem, laplace_elements, legendre_sigma, legendre_cos

TWO_PI = 2.0 * math.pi

# |C - G2| below this (times L1) is the excluded degenerate configuration
DEGENERATE_TOL = 1e-9

# doubling the quadrature nodes must move the result by less than this
QUADRATURE_RTOL = 1e-12


@dataclass(frozen=True)
class SecularConfig:
    """Averaging configuration: trapezoid nodes per angle and the alpha
    grid used by the residual-order fit."""

    nodes: int = 64
    alpha_list: tuple = ()

    def __post_init__(self):
        if self.nodes < 16:
            raise DomainError("need at least 16 quadrature nodes per angle")
        object.__setattr__(self, "alpha_list", tuple(self.alpha_list))


def _grid_positions(el: DelaunayElements, gp: GravParams, l_vals: np.ndarray):
    """Positions of one orbit at an array of mean anomalies, shape (n, 3)."""
    e = el.eccentricity
    a = el.semi_major_axis(gp)
    u = solve_kepler(l_vals, e)
    cu, su = np.cos(u), np.sin(u)
    se = math.sqrt(1.0 - e * e)
    pos_pf = np.stack([a * (cu - e), a * se * su, np.zeros_like(cu)], axis=1)
    ci = min(1.0, max(-1.0, el.H / el.G))
    si = math.sqrt(max(0.0, 1.0 - ci * ci))
    R = _orientation_matrix(el.g, ci, si, el.h)
    return pos_pf @ R.T


def _pairwise_fpert(Q1: np.ndarray, Q2: np.ndarray, ms: MassSystem):
    """F_pert on the tensor grid: Q1 (n1,3) x Q2 (n2,3) -> (n1,n2)."""
    d_a = Q2[None, :, :] - ms.sigma0 * Q1[:, None, :]
    d_b = Q2[None, :, :] + ms.sigma1 * Q1[:, None, :]
    ra = np.linalg.norm(d_a, axis=2)
    rb = np.linalg.norm(d_b, axis=2)
    r2 = np.linalg.norm(Q2, axis=1)[None, :]
    if min(ra.min(), rb.min(), r2.min()) <= 0.0:
        raise DomainError("orbit geometries intersect a collision")
    return -ms.mu1 * ms.m2 * ((1.0 / ms.sigma0) * (1.0 / ra - 1.0 / r2)
                              + (1.0 / ms.sigma1) * (1.0 / rb - 1.0 / r2))


def _pairwise_legendre_term(Q1, Q2, ms: MassSystem, n: int):
    r1 = np.linalg.norm(Q1, axis=1)[:, None]
    r2 = np.linalg.norm(Q2, axis=1)[None, :]
    cz = (Q1 @ Q2.T) / (r1 * r2)
    Pn = legendre_cos(n, cz)[n]
    return -ms.mu1 * ms.m2 * legendre_sigma(n, ms) * Pn * r1 ** n / r2 ** (n + 1)


def _double_average(el1, el2, ms, nodes, integrand):
    l = np.arange(nodes) * (TWO_PI / nodes)
    Q1 = _grid_positions(el1, ms.inner, l)
    Q2 = _grid_positions(el2, ms.outer, l)
    return float(np.mean(integrand(Q1, Q2, ms)))


def average_fpert(el1: DelaunayElements, el2: DelaunayElements,
                  ms: MassSystem, cfg: SecularConfig,
                  check_convergence: bool = True) -> float:
    """<F_pert> over both mean anomalies (trapezoid tensor quadrature).

    With ``check_convergence`` the node count is doubled and the two
    results must agree to QUADRATURE_RTOL relative, else PrecisionError.
    The result does not depend on the l entries of the inputs.
    """
    v1 = _double_average(el1, el2, ms, cfg.nodes, _pairwise_fpert)
    if not check_convergence:
        return v1
    v2 = _double_average(el1, el2, ms, 2 * cfg.nodes, _pairwise_fpert)
    if abs(v2 - v1) > QUADRATURE_RTOL * max(abs(v2), 1e-300):
        raise PrecisionError(
            f"averaging quadrature not converged at {cfg.nodes} nodes: "
            f"{v1!r} vs {v2!r} at doubled resolution")
    return v2


def average_legendre_term(el1, el2, ms: MassSystem, n: int,
                          cfg: SecularConfig) -> float:
    """Double average of the single n-th Legendre term (quadrature)."""
    return _double_average(el1, el2, ms, 2 * cfg.nodes,
                           lambda a, b, m: _pairwise_legendre_term(a, b, m, n))


def quadrupolar_term(el1: DelaunayElements, el2: DelaunayElements,
                     ms: MassSystem) -> float:
    """Closed-form double average of the n = 2 (quadrupolar) term.

    Expects both element sets in the Laplace frame, where C = H1 + H2 and
    the node lines coincide (h1 = h2 + pi).  Raises DegenerateCaseError
    for |C - G2| < 1e-9 L1 and DomainError when G1 violates the angular
    momentum triangle |C - G2| <= G1 <= min(L1, C + G2).
    """
    L1, G1, g1 = el1.L, el1.G, el1.g
    L2, G2 = el2.L, el2.G
    C = el1.H + el2.H
    if C <= 0.0:
        raise DegenerateCaseError("total angular momentum not positive")
    dh = (el1.h - el2.h) % TWO_PI
    node_ok = abs(dh - math.pi) < 1e-8
    h1_ok = abs(el1.H - (C * C + G1 * G1 - G2 * G2) / (2.0 * C)) < 1e-8 * max(L1, 1.0)
    if not (node_ok and h1_ok):
        raise DomainError("elements are not given in the Laplace frame")
    if abs(C - G2) < DEGENERATE_TOL * L1:
        raise DegenerateCaseError("C = G2 within tolerance (excluded)")
    g1min = abs(C - G2)
    g1max = min(L1, C + G2)
    if not (g1min <= G1 <= g1max * (1.0 + 1e-12)):
        raise DomainError(
            f"G1 = {G1} outside the admissible interval [{g1min}, {g1max}]")
    a1 = el1.semi_major_axis(ms.inner)
    a2 = el2.semi_major_axis(ms.outer)
    alpha = a1 / a2
    d2 = (G1 / L1) ** 2
    Z = (C * C - G1 * G1 - G2 * G2) ** 2 / (4.0 * G1 * G1 * G2 * G2)
    braces = (3.0 * d2 * (1.0 + Z)
              + 15.0 * (1.0 - d2) * (math.cos(g1) ** 2 + Z * math.sin(g1) ** 2)
              - 6.0 * (1.0 - d2) - 4.0)
    return -ms.mu_quad * L2 ** 3 * alpha ** 3 / (8.0 * a1 * G2 ** 3) * braces


@dataclass(frozen=True)
class ResidualFit:
    """Least-squares slope of log|<F_pert> - <T2>| against log(alpha)."""

    exponent: float
    alphas: tuple
    residuals: tuple
    averages: tuple
    quadrupolar: tuple


def residual_order(el1: DelaunayElements, el2: DelaunayElements,
                   ms: MassSystem, cfg: SecularConfig) -> ResidualFit:
    """Fit the alpha-scaling of the post-quadrupolar residual.

    a1 and all eccentricities/angles (including the mutual inclination)
    are held fixed while a2 is varied over cfg.alpha_list, which must
    span at least a factor 4.  Residuals within a decade of the
    quadrature floor raise PrecisionError (increase cfg.nodes).
    """
    alphas = np.asarray(cfg.alpha_list, dtype=float)
    if alphas.size < 3:
        raise DomainError("alpha_list needs at least three values")
    if alphas.max() / alphas.min() < 3.999:
        raise DomainError("alpha_list must span at least a factor of 4")
    a1 = el1.semi_major_axis(ms.inner)
    e1 = el1.eccentricity
    e2 = el2.eccentricity
    C = el1.H + el2.H
    cosim = (C * C - el1.G ** 2 - el2.G ** 2) / (2.0 * el1.G * el2.G)
    i_mut = math.acos(min(1.0, max(-1.0, cosim)))
    avs, quads, resids = [], [], []
    for alpha in alphas:
        a2 = a1 / float(alpha)
        e1a, e2a = laplace_elements(ms, a1, a2, e1, e2, i_mut,
                                    g1=el1.g, g2=el2.g, l1=el1.l, l2=el2.l)
        av = average_fpert(e1a, e2a, ms, cfg)
        qd = quadrupolar_term(e1a, e2a, ms)
        avs.append(av)
        quads.append(qd)
        resids.append(abs(av - qd))
    floor = 10.0 * QUADRATURE_RTOL * max(abs(v) for v in avs)
    if min(resids) < floor:
        raise PrecisionError(
            f"residual {min(resids):.3e} within a decade of the quadrature "
            f"floor {floor:.3e}; increase cfg.nodes")
    slope = float(np.polyfit(np.log(alphas), np.log(resids), 1)[0])
    return ResidualFit(exponent=slope, alphas=tuple(map(float, alphas)),
                       residuals=tuple(resids), averages=tuple(avs),
                       quadrupolar=tuple(quads))
