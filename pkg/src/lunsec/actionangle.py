"""Action variables, frequency maps and torsion for the reduced flow.

All frequencies refer to the flow of Wbar = (W + 5/3)/beta_hat^3 in the
canonical chart (omega, delta) (see ``quadrupolar``); the physical
quadrupolar frequencies are these times the positive constant k of that
module's normalization.

Branches of closed orbits:

    libration  -- loops around the elliptic point B,
    circ-min   -- curves winding around the cylinder between the
                  delta_min boundary circle and the nearest separatrix,
    circ-max   -- likewise against the delta_max boundary.

For a closed orbit at level f the action is I1 = |loop integral of
delta d omega| / (2 pi): the enclosed loop area for librating tori, the
full winding integral for circulating ones.  nu1 = 2 pi/T from the time
of first return to a transverse section, and nu2 is the time average of
-dWbar/dbeta_hat (the drift rate of the angle conjugate to beta_hat, in
the sign convention of the physical quadrupolar drift).

Taylor data at B: with x = delta_B^2 the elliptic root of the ordinate
cubic,

    Wbar = Phi + Xi (delta - delta_B)^2 + Upsilon (omega - pi/2)^2 + ...
    Xi = (15 a^4 - 30 a^2 b^2 + 8 a^2 x^2 + 15 b^4 + 4 b^2 x^2
          - 24 x^3 + 5 x^2) / (4 b^5 x^2),
    Upsilon = 5 (x - 1)((a-b)^2 - x)((a+b)^2 - x) / (4 b^5 x),

so small librations have frequency nu1 -> 2 sqrt(Xi Upsilon), which is
also the normal frequency of the elliptic isotropic torus at B.

Torsion convention: the reported torsion is |det| of the Hessian in
(I1, beta_hat) of the *branch-relative* energy f(I1, beta_hat) -
f(0, beta_hat), the energy measured from the organizing invariant set of
the branch (the point B for libration, the boundary circle for
circulation).  Its I1 -> 0 limit on the libration branch is the closed
form 4 (d sqrt(Xi Upsilon)/d beta_hat)^2 with delta_B re-solved at each
beta_hat.  The |det| of the Hessian of the full energy, whose small-I1
value also carries the curvature of the branch energy itself (the
2 (dnu1/dI1)(d^2 f(0, beta)/dbeta^2) cross term, not small in general),
is exposed separately as ``torsion_full``.

Boundary frequency closed forms (circulating curves shrinking onto a
boundary circle free of singularities):

    delta_min:        |nu1| = 2 sqrt(a+b) sqrt(9a^2 b - 6ab^2 + b^3
                                             - 4a^3 + 5a) / b^4
    delta_max = a+b:  the same expression under b -> -b
    delta_max = 1:    |nu1| = sqrt(A1 (A1 + B1)) / (2 b^5),
                      A1 = 4b^2 + 8a^2 - 3 - 5a^4 + 10a^2 b^2 - 5b^4,
                      A1 + B1 = 2 (1 - a^2 - 3 b^2).
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import DomainError, SeparatrixProximityError, TracingError
from .quadrupolar import (EDGE_EXCLUSION, LZParams, LZPoint,
                          find_singularities, ordinate_cubic_roots,
                          wbar_dbeta_raw, wbar_grad_raw, wbar_raw)

TWO_PI = 2.0 * math.pi

# refuse tori with |level - separatrix level| below this fraction of the
# branch's level range
SEPARATRIX_BAND = 1e-6

# finite-difference steps (first/second derivatives of closed forms)
FD_STEP_1 = 1e-4
FD_STEP_2 = 1e-3


class Branch(enum.Enum):
    LIBRATION = "libration"
    CIRC_MIN = "circ-min"
    CIRC_MAX = "circ-max"


@dataclass(frozen=True)
class TorusCoordinates:
    """Invariant-torus labels: action, outer momentum, level, family."""

    i1: float
    beta_hat: float
    level: float
    region_branch: Branch


@dataclass(frozen=True)
class FrequencyRecord:
    nu1: float
    nu2: float
    torsion: float
    torsion_full: float


@dataclass(frozen=True)
class EllipticTorusRecord:
    nu2_at_B: float
    nu_normal: float


@dataclass(frozen=True)
class XiUpsilon:
    xi: float
    upsilon: float
    phi: float
    delta_B: float


@dataclass(frozen=True)
class TorusOrbit:
    level: float
    period: float
    nu1: float
    nu2: float
    i1: float
    branch: Branch


# ---------------------------------------------------------------------------
# Closed forms at B
# ---------------------------------------------------------------------------

def _xi_up_at(a: float, b: float, x: float):
    """Taylor coefficients (Xi, Upsilon) of Wbar at an omega = pi/2
    critical point with squared ordinate x."""
    xi = (15.0 * a ** 4 - 30.0 * a * a * b * b + 8.0 * a * a * x * x
          + 15.0 * b ** 4 + 4.0 * b * b * x * x - 24.0 * x ** 3
          + 5.0 * x * x) / (4.0 * b ** 5 * x * x)
    up = (5.0 * (x - 1.0) * ((a - b) ** 2 - x) * ((a + b) ** 2 - x)
          / (4.0 * b ** 5 * x))
    return xi, up


def _delta_B(p: LZParams) -> float:
    """Ordinate of the elliptic point B (cubic root with Xi*Upsilon > 0)."""
    lo2, hi2 = p.delta_min ** 2, p.delta_max ** 2
    for x in ordinate_cubic_roots(p):
        if lo2 < x < hi2:
            xi, up = _xi_up_at(p.alpha_hat, p.beta_hat, x)
            if xi * up > 0.0:
                return math.sqrt(x)
    raise DomainError(f"no elliptic ordinate for {p}")


def xi_upsilon(p: LZParams) -> XiUpsilon:
    """(Xi, Upsilon, Phi) of the quadratic model at B, plus delta_B.

    Raises DomainError when the parameters admit no elliptic point.
    """
    dB = _delta_B(p)
    xi, up = _xi_up_at(p.alpha_hat, p.beta_hat, dB * dB)
    phi = float(wbar_raw(dB, math.pi / 2.0, p.alpha_hat, p.beta_hat))
    return XiUpsilon(xi=xi, upsilon=up, phi=phi, delta_B=dB)


def nu_normal_closed(p: LZParams) -> float:
    """Normal frequency of the elliptic torus at B: 2 sqrt(Xi Upsilon)."""
    xu = xi_upsilon(p)
    prod = xu.xi * xu.upsilon
    if prod <= 0.0:
        raise DomainError("B is not elliptic at these parameters")
    return 2.0 * math.sqrt(prod)


def nu2_at_B(p: LZParams) -> float:
    """Drift frequency of the angle conjugate to beta_hat on the elliptic
    branch: -dWbar/dbeta_hat at B (partial at fixed (delta, omega))."""
    dB = _delta_B(p)
    return float(-wbar_dbeta_raw(dB, math.pi / 2.0, p.alpha_hat, p.beta_hat))


def boundary_frequency(p: LZParams, branch: Branch) -> float:
    """|nu1| of circulating curves shrinking onto a singularity-free
    boundary circle (closed forms in the module docstring)."""
    a, b = p.alpha_hat, p.beta_hat

    def freq_min(a, b):
        rad = 9.0 * a * a * b - 6.0 * a * b * b + b ** 3 - 4.0 * a ** 3 + 5.0 * a
        val = (a + b) * rad
        if val <= 0.0:
            raise DomainError("boundary frequency undefined (vanishing radicand)")
        return abs(2.0 * math.sqrt(val) / b ** 4)

    if branch is Branch.CIRC_MIN:
        return freq_min(a, b)
    if branch is Branch.CIRC_MAX:
        if p.delta_max < 1.0:
            return freq_min(a, -b)
        A1 = (4.0 * b * b + 8.0 * a * a - 3.0 - 5.0 * a ** 4
              + 10.0 * a * a * b * b - 5.0 * b ** 4)
        s = A1 * 2.0 * (1.0 - a * a - 3.0 * b * b)
        if s <= 0.0:
            raise DomainError("boundary frequency undefined (E on the boundary)")
        return math.sqrt(s) / (2.0 * b ** 5)
    raise DomainError("boundary frequency applies to circulation branches")


# ---------------------------------------------------------------------------
# Orbit tracing
# ---------------------------------------------------------------------------

def _rhs(t, y, a, b):
    gd, gw = wbar_grad_raw(y[0], y[1], a, b)
    return (-gw, gd, -wbar_dbeta_raw(y[0], y[1], a, b), y[0] * gd)


def _trace_closed_orbit(d0, om0, a, b, branch, T_est, rtol=1e-12):
    """One closed orbit from a section point; returns (T, nu2, I1)."""
    y0 = (d0, om0, 0.0, 0.0)
    omdot0 = _rhs(0.0, y0, a, b)[1]
    if omdot0 == 0.0:
        raise TracingError("section start is a fixed point of omega")
    if branch is Branch.LIBRATION:
        def ev(t, y, *args):
            return y[1] - om0
        ev.direction = math.copysign(1.0, omdot0)
    else:
        target = om0 + math.copysign(TWO_PI, omdot0)

        def ev(t, y, *args):
            return y[1] - target
        ev.direction = 0
    ev.terminal = True
    sol = solve_ivp(_rhs, (0.0, 200.0 * T_est), y0, args=(a, b),
                    method="DOP853", rtol=rtol, atol=1e-14,
                    max_step=T_est / 8.0, events=ev, dense_output=True)
    if len(sol.t_events[0]) == 0:
        raise TracingError("orbit did not close within 200 estimated periods")
    T = float(sol.t_events[0][0])
    yT = sol.sol(T)
    return T, float(yT[2] / T), float(abs(yT[3]) / TWO_PI)


def _branch_geometry(p: LZParams):
    """(singularities, separatrix levels, boundary levels of Wbar)."""
    reps = find_singularities(p)
    a, b = p.alpha_hat, p.beta_hat
    sep_levels = [float(wbar_raw(r.location.delta, r.location.omega, a, b))
                  for r in reps if r.stability == "hyperbolic"]
    w_lo = float(wbar_raw(p.delta_min + EDGE_EXCLUSION, 0.0, a, b))
    w_hi = float(wbar_raw(p.delta_max - EDGE_EXCLUSION, 0.0, a, b))
    return reps, sep_levels, w_lo, w_hi


def _base_level(p: LZParams, branch: Branch) -> float:
    """Level of the branch's organizing invariant set."""
    a, b = p.alpha_hat, p.beta_hat
    if branch is Branch.LIBRATION:
        return xi_upsilon(p).phi
    d = p.delta_min if branch is Branch.CIRC_MIN else p.delta_max
    return float(wbar_raw(max(d, 1e-12), 0.0, a, b))


def _section_point(level: float, p: LZParams, branch: Branch):
    """Point on the branch's transverse section with Wbar = level, plus a
    period estimate.  Raises SeparatrixProximityError inside the
    separatrix exclusion band, DomainError off the branch's level range.
    """
    a, b = p.alpha_hat, p.beta_hat
    reps, sep_levels, w_lo, w_hi = _branch_geometry(p)
    span = max(abs(w_hi - w_lo), 1e-300)
    for lv in sep_levels:
        if abs(level - lv) < SEPARATRIX_BAND * span:
            raise SeparatrixProximityError(
                f"level {level} within the separatrix exclusion band")

    def wb(d, om=0.0):
        return float(wbar_raw(d, om, a, b))

    if branch is Branch.LIBRATION:
        xu = xi_upsilon(p)
        om0 = math.pi / 2.0
        g = lambda d: wb(d, om0) - level
        lo_in = p.delta_min + EDGE_EXCLUSION
        hi_out = p.delta_max - EDGE_EXCLUSION
        if g(xu.delta_B + 1e-14) * g(hi_out) <= 0.0:
            d0 = brentq(g, xu.delta_B + 1e-14, hi_out, xtol=1e-15)
        elif g(lo_in) * g(xu.delta_B - 1e-14) <= 0.0:
            d0 = brentq(g, lo_in, xu.delta_B - 1e-14, xtol=1e-15)
        else:
            raise DomainError(f"level {level} not on the libration section")
        return d0, om0, TWO_PI / nu_normal_closed(p)

    om0 = 0.0
    lo = p.delta_min + EDGE_EXCLUSION
    hi = p.delta_max - EDGE_EXCLUSION
    # the only possible obstruction on omega = 0 is the saddle A
    sads = [r.location.delta for r in reps
            if r.stability == "hyperbolic" and abs(math.sin(r.location.omega)) < 1e-9]
    if branch is Branch.CIRC_MIN and sads:
        hi = min(sads) - 1e-12
    if branch is Branch.CIRC_MAX and sads:
        lo = max(sads) + 1e-12
    g = lambda d: wb(d, om0) - level
    if g(lo) * g(hi) > 0.0:
        raise DomainError(f"level {level} not on the {branch.value} section")
    d0 = brentq(g, lo, hi, xtol=1e-15)
    try:
        T_est = TWO_PI / boundary_frequency(p, branch)
    except DomainError:
        T_est = TWO_PI / max(abs(wbar_grad_raw(d0, om0, a, b)[0]), 1e-9)
    return d0, om0, T_est


def trace_torus(level: float, p: LZParams, branch: Branch) -> TorusOrbit:
    """Trace the closed orbit of a level on a branch; returns period,
    frequencies and action."""
    d0, om0, T_est = _section_point(level, p, branch)
    T, nu2, i1 = _trace_closed_orbit(d0, om0, p.alpha_hat, p.beta_hat,
                                     branch, T_est)
    return TorusOrbit(level=level, period=T, nu1=TWO_PI / T, nu2=nu2,
                      i1=i1, branch=branch)


def action_I1(level: float, p: LZParams, branch: Branch) -> float:
    """Action (1/2 pi)|loop integral of delta d omega| of the level's
    closed orbit on the given branch."""
    return trace_torus(level, p, branch).i1


# ---------------------------------------------------------------------------
# Frequency map and torsion
# ---------------------------------------------------------------------------

def _denergy_dI1_sign(p: LZParams, branch: Branch) -> float:
    """Sign of dE/dI1 along the branch."""
    if branch is Branch.LIBRATION:
        return math.copysign(1.0, xi_upsilon(p).xi)
    d = p.delta_min if branch is Branch.CIRC_MIN else p.delta_max
    om = np.linspace(0.0, TWO_PI, 64, endpoint=False)
    gd = float(np.mean(wbar_grad_raw(d, om, p.alpha_hat, p.beta_hat)[0]))
    return math.copysign(1.0, gd)


def _nu2_branch(p: LZParams, branch: Branch) -> float:
    """I1 -> 0 limit of nu2 on a branch (organizing-set drift rate)."""
    a, b = p.alpha_hat, p.beta_hat
    if branch is Branch.LIBRATION:
        return nu2_at_B(p)
    dref = p.delta_min if branch is Branch.CIRC_MIN else p.delta_max
    # time-weighted average along the boundary circle: the limiting
    # motion has omega' = dWbar/ddelta(dref, omega)
    om = np.linspace(0.0, TWO_PI, 4096, endpoint=False)
    xdot = wbar_grad_raw(dref, om, a, b)[0]
    if xdot.max() >= 0.0 >= xdot.min():
        raise DomainError("boundary circle carries a singularity")
    drift = wbar_dbeta_raw(dref, om, a, b)
    return float(-np.mean(drift / np.abs(xdot)) / np.mean(1.0 / np.abs(xdot)))


def _level_at_action(i1_target: float, p: LZParams, branch: Branch,
                     level_guess: float) -> TorusOrbit:
    """Secant iteration for the level whose orbit has action i1_target."""
    sgn = _denergy_dI1_sign(p, branch)
    orb = trace_torus(level_guess, p, branch)
    for _ in range(25):
        err = orb.i1 - i1_target
        if abs(err) < 1e-9 * max(abs(i1_target), 1e-12):
            return orb
        orb = trace_torus(orb.level - err * sgn * orb.nu1, p, branch)
    raise TracingError("action matching did not converge")


def frequencies(level: float, p: LZParams, branch: Branch,
                beta_step: float = FD_STEP_1) -> FrequencyRecord:
    """Frequencies and torsion of the invariant torus at a level.

    nu1 = 2 pi / period; nu2 = orbit average of -dWbar/dbeta_hat.  The
    torsion is |det| of the finite-difference Hessian (in (I1, beta_hat))
    of the branch-relative energy, ``torsion_full`` the one of the full
    energy (module docstring discusses the distinction).
    """
    base = trace_torus(level, p, branch)
    base0 = _base_level(p, branch)
    df = max(1e-3 * abs(level - base0), 1e-12)
    orb_p = trace_torus(level + df, p, branch)
    orb_m = trace_torus(level - df, p, branch)
    dnu1_dI = (orb_p.nu1 - orb_m.nu1) / (orb_p.i1 - orb_m.i1)
    dnu2_dI = (orb_p.nu2 - orb_m.nu2) / (orb_p.i1 - orb_m.i1)

    h = beta_step
    side = {}
    for sgn in (+1.0, -1.0):
        pb = LZParams(p.alpha_hat, p.beta_hat + sgn * h)
        guess = level + _base_level(pb, branch) - base0
        side[sgn] = (_level_at_action(base.i1, pb, branch, guess), pb)
    orb_bp, p_bp = side[+1.0]
    orb_bm, p_bm = side[-1.0]
    dnu1_db = (orb_bp.nu1 - orb_bm.nu1) / (2.0 * h)
    dnu2_db = (orb_bp.nu2 - orb_bm.nu2) / (2.0 * h)
    dref_db = (_nu2_branch(p_bp, branch) - _nu2_branch(p_bm, branch)) / (2.0 * h)

    torsion_full = abs(dnu1_dI * dnu2_db - dnu1_db * dnu2_dI)
    torsion = abs(dnu1_dI * (dnu2_db - dref_db) - dnu1_db * dnu2_dI)
    return FrequencyRecord(nu1=base.nu1, nu2=base.nu2, torsion=torsion,
                           torsion_full=torsion_full)


def torsion_at_B(p: LZParams, step: float = FD_STEP_1) -> float:
    """Closed-form libration-branch torsion limit
    4 (d sqrt(Xi Upsilon)/d beta_hat)^2, by Richardson-extrapolated
    central differences with delta_B re-solved at each beta_hat.  Values
    below 1e-12 are flagged as degenerate parameters (warning)."""
    def sq(b):
        xu = xi_upsilon(LZParams(p.alpha_hat, b))
        prod = xu.xi * xu.upsilon
        if prod <= 0.0:
            raise DomainError("B not elliptic inside the differentiation stencil")
        return math.sqrt(prod)

    def der(h):
        return (sq(p.beta_hat + h) - sq(p.beta_hat - h)) / (2.0 * h)

    d = (4.0 * der(step / 2.0) - der(step)) / 3.0
    val = 4.0 * d * d
    if val < 1e-12:
        warnings.warn("torsion at B below 1e-12: degenerate parameter "
                      "(measure-zero set)", RuntimeWarning, stacklevel=2)
    return val


def elliptic_torus_frequencies(p: LZParams) -> EllipticTorusRecord:
    """Tangential and normal frequencies of the elliptic isotropic torus
    at B: (nu2_at_B, 2 sqrt(Xi Upsilon))."""
    return EllipticTorusRecord(nu2_at_B=nu2_at_B(p),
                               nu_normal=nu_normal_closed(p))


def elliptic_torus_jacobian(p: LZParams, step: float = FD_STEP_1) -> float:
    """Finite-difference Jacobian determinant of
    (beta_hat, alpha_hat) -> (nu2_at_B, nu_normal)."""
    a, b = p.alpha_hat, p.beta_hat

    def rec(aa, bb):
        q = LZParams(aa, bb)
        return np.array([nu2_at_B(q), nu_normal_closed(q)])

    d_db = (rec(a, b + step) - rec(a, b - step)) / (2.0 * step)
    d_da = (rec(a + step, b) - rec(a - step, b)) / (2.0 * step)
    return float(d_db[0] * d_da[1] - d_db[1] * d_da[0])


def keplerian_hessian_det(ms, L1: float, L2: float) -> float:
    """Determinant of the Keplerian block of the full frequency-map
    Hessian: (3 mu1^3 M1^2 / L1^4)(3 mu2^3 M2^2 / L2^4)."""
    return (3.0 * ms.mu1 ** 3 * ms.M1 ** 2 / L1 ** 4) * \
           (3.0 * ms.mu2 ** 3 * ms.M2 ** 2 / L2 ** 4)


def frequency_map_rows(p: LZParams, branch: Branch, n_levels: int):
    """(level, I1, nu1, nu2, torsion) rows spanning a branch, for the
    frequency-map CLI output.  Levels that fail to trace are skipped."""
    reps, sep_levels, w_lo, w_hi = _branch_geometry(p)
    if branch is Branch.LIBRATION:
        start = xi_upsilon(p).phi
        if sep_levels:
            end = min(sep_levels, key=lambda lv: abs(lv - start))
        else:
            end = w_lo if abs(w_lo - start) < abs(w_hi - start) else w_hi
    else:
        start = w_lo if branch is Branch.CIRC_MIN else w_hi
        cand = sep_levels or [w_hi if branch is Branch.CIRC_MIN else w_lo]
        end = min(cand, key=lambda lv: abs(lv - start))
    rows = []
    for f in np.linspace(0.02, 0.9, n_levels):
        lev = start + float(f) * (end - start)
        try:
            orb = trace_torus(lev, p, branch)
            rec = frequencies(lev, p, branch)
        except (DomainError, TracingError):
            continue
        rows.append((lev, orb.i1, rec.nu1, rec.nu2, rec.torsion))
    return rows
