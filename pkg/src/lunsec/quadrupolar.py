"""Reduced quadrupolar system: normalized Hamiltonian, global
classification of the parameter plane, singularities and phase portraits.

Normalizing by the inner circular angular momentum L1 gives parameters
and phase variables

    alpha_hat = C/L1,  beta_hat = G2/L1,  delta = G1/L1,  omega = g1,

for which the closed-form quadrupolar average is, up to a positive
state-independent factor,

    F2 = -(k/beta_hat^3) (W + 5/3),
    k  = 3 mu_quad L2^3 alpha^3 / (8 a1 L1^3),

    W(delta, omega) = -2 delta^2 + D^2/(4 b^2)
                      + 5 (1 - delta^2) sin^2(omega) [D^2/(4 b^2 delta^2) - 1],
    D = alpha_hat^2 - beta_hat^2 - delta^2,  b = beta_hat.

The physical cylinder is delta in [delta_min, delta_max] with
delta_min = |alpha_hat - beta_hat|, delta_max = min(1, alpha_hat +
beta_hat); both boundary circles are invariant level sets of W, and W is
analytic across delta_min, which permits analytic continuation to
0 < delta < delta_min.  The reduced flow used throughout is the one of
Wbar = (W + 5/3)/beta_hat^3 with omega as coordinate and delta as its
conjugate momentum:

    delta' = -dWbar/domega,   omega' = +dWbar/ddelta,

and the conjugate angle of beta_hat drifts at -dWbar/dbeta_hat (the
drift direction of the physical quadrupolar Hamiltonian, which is
-k*Wbar + const).

Interior critical points sit on the lines sin(2 omega) = 0: a saddle A
at (omega = 0 mod pi, delta^2 = alpha_hat^2 + 3 beta_hat^2) and, on
omega = pi/2 mod pi, points whose squared ordinates solve the cubic

    x^3 - (beta_hat^2/2 + alpha_hat^2 + 5/8) x^2
        + (5/8)(alpha_hat^2 - beta_hat^2)^2 = 0

(the elliptic root is B, a coexisting saddle root is A').  A boundary
saddle E can occur on delta = delta_max.  The classification of which
points exist partitions the admissible parameter set into Region1
{A, B}, Region2 {B, E}, Region3 {B, A'} and a remainder with no
singularities; parameters within tolerance of a defining equality are
reported as Border.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (ConsistencyError, DegenerateCaseError, DomainError,
                     PrecisionError)

TWO_PI = 2.0 * math.pi

# open-set exclusion band at the cylinder boundaries (blow-up convention)
EDGE_EXCLUSION = 1e-6

# |expression| below this counts as sitting on a region-defining equality
BORDER_TOL = 1e-9

# Morse flag: |det Hess| above this
MORSE_TOL = 1e-8


class RegionClass(enum.Enum):
    REGION1 = "Region1"
    REGION2 = "Region2"
    REGION3 = "Region3"
    BORDER = "Border"
    NO_SINGULARITIES = "NoSingularities"


class SingularityKind(enum.Enum):
    A = "A"
    B = "B"
    APRIME = "Aprime"
    E = "E"


@dataclass(frozen=True)
class LZParams:
    """Normalized parameters (C/L1, G2/L1) of the reduced system."""

    alpha_hat: float
    beta_hat: float

    def __post_init__(self):
        if not (self.alpha_hat > 0.0 and self.beta_hat > 0.0):
            raise DomainError("alpha_hat and beta_hat must be positive")
        if abs(self.alpha_hat - self.beta_hat) > 1.0:
            raise DomainError("|alpha_hat - beta_hat| > 1 is inadmissible")
        if self.alpha_hat == self.beta_hat:
            raise DegenerateCaseError("alpha_hat = beta_hat is excluded")

    @property
    def delta_min(self) -> float:
        return abs(self.alpha_hat - self.beta_hat)

    @property
    def delta_max(self) -> float:
        return min(1.0, self.alpha_hat + self.beta_hat)

    def contains(self, pt: "LZPoint") -> bool:
        return self.delta_min <= pt.delta <= self.delta_max


@dataclass(frozen=True)
class LZPoint:
    """Phase point (delta, omega) = (G1/L1, g1) on the reduced cylinder."""

    delta: float
    omega: float

    def __post_init__(self):
        if not (0.0 < self.delta <= 1.0):
            raise DomainError(f"delta must lie in (0, 1], got {self.delta}")
        object.__setattr__(self, "omega", float(self.omega % TWO_PI))


@dataclass(frozen=True)
class SingularityReport:
    kind: SingularityKind
    location: LZPoint
    hessian_det: float
    stability: str            # "elliptic" | "hyperbolic"
    morse: bool


# ---------------------------------------------------------------------------
# W and its derivatives (array-friendly raw forms plus typed wrappers)
# ---------------------------------------------------------------------------

def w_raw(delta, omega, a, b):
    """W as above; accepts scalars or arrays."""
    d2 = np.square(delta)
    D = a * a - b * b - d2
    return (-2.0 * d2 + D * D / (4.0 * b * b)
            + 5.0 * (1.0 - d2) * np.square(np.sin(omega))
            * (D * D / (4.0 * b * b * d2) - 1.0))


def w_grad_raw(delta, omega, a, b):
    """(dW/ddelta, dW/domega)."""
    d = delta
    d2 = np.square(d)
    D = a * a - b * b - d2
    X = D * D / (4.0 * b * b * d2)
    s2 = np.square(np.sin(omega))
    dW_dd = (-4.0 * d - d * D / (b * b) - 10.0 * d * s2 * (X - 1.0)
             - 5.0 * (1.0 - d2) * s2 * D * (2.0 * d2 + D) / (2.0 * b * b * d2 * d))
    dW_dom = 5.0 * (1.0 - d2) * (X - 1.0) * np.sin(2.0 * omega)
    return dW_dd, dW_dom


def w_dbeta_raw(delta, omega, a, b):
    """dW/dbeta_hat at fixed (delta, omega)."""
    d2 = np.square(delta)
    D = a * a - b * b - d2
    s2 = np.square(np.sin(omega))
    return (-D / b - D * D / (2.0 * b ** 3)
            + 5.0 * (1.0 - d2) * s2 * (-D / (b * d2) - D * D / (2.0 * b ** 3 * d2)))


def wbar_raw(delta, omega, a, b):
    return (w_raw(delta, omega, a, b) + 5.0 / 3.0) / b ** 3


def wbar_grad_raw(delta, omega, a, b):
    gd, gw = w_grad_raw(delta, omega, a, b)
    return gd / b ** 3, gw / b ** 3


def wbar_dbeta_raw(delta, omega, a, b):
    return (w_dbeta_raw(delta, omega, a, b) / b ** 3
            - 3.0 * (w_raw(delta, omega, a, b) + 5.0 / 3.0) / b ** 4)


def w_value(pt: LZPoint, p: LZParams) -> float:
    """W at a phase point (analytic continuation below delta_min included)."""
    return float(w_raw(pt.delta, pt.omega, p.alpha_hat, p.beta_hat))


def wbar_value(pt: LZPoint, p: LZParams) -> float:
    """Wbar = (W + 5/3)/beta_hat^3, the reduced Hamiltonian of the flow."""
    return float(wbar_raw(pt.delta, pt.omega, p.alpha_hat, p.beta_hat))


# ---------------------------------------------------------------------------
# Region classification
# ---------------------------------------------------------------------------

def _region_conditions(a: float, b: float):
    """Signed slack lists for the three region systems (all must be > 0)."""
    p = b * b / 2.0 + a * a + 5.0 / 8.0
    r1 = [a - b, 1.0 - (3.0 * b * b + a * a)]
    if a + b < 1.0:
        e_num = (b - a) * (b + a) ** 2
        e_den = 5.0 * a * (1.0 - (a + b) ** 2)
        r2 = [1.0 - (a + b), e_num, e_den - e_num]
        r3_extra = e_num - e_den
    else:
        e_num = 2.0 * (3.0 * b * b + a * a - 1.0)
        e_den = 5.0 * (4.0 * b * b - (a * a - b * b - 1.0) ** 2)
        r2 = [(a + b) - 1.0, e_num, e_den - e_num]
        r3_extra = e_num - e_den
    r3 = [(2.0 / 3.0) * p - (a - b) ** 2,
          min(1.0, (a + b) ** 2) - (2.0 / 3.0) * p,
          (32.0 / 135.0) * p ** 3 - (a * a - b * b) ** 2,
          r3_extra]
    return {RegionClass.REGION1: r1, RegionClass.REGION2: r2,
            RegionClass.REGION3: r3}


def classify_region(p: LZParams, tol: float = BORDER_TOL) -> RegionClass:
    """Classify (alpha_hat, beta_hat) by which singularities exist.

    Returns Border when any defining expression lies within ``tol`` of
    zero.  Raises DegenerateCaseError for alpha_hat = beta_hat within
    tolerance (the excluded C = G2 line).
    """
    a, b = p.alpha_hat, p.beta_hat
    if abs(a - b) <= tol:
        raise DegenerateCaseError("alpha_hat = beta_hat within tolerance")
    conds = _region_conditions(a, b)
    if any(abs(c) <= tol for cs in conds.values() for c in cs):
        return RegionClass.BORDER
    hits = [reg for reg, cs in conds.items() if all(c > 0.0 for c in cs)]
    if len(hits) > 1:
        raise ConsistencyError(f"region systems overlap at {p}: {hits}")
    return hits[0] if hits else RegionClass.NO_SINGULARITIES


# ---------------------------------------------------------------------------
# Cubic for the omega = pi/2 ordinates
# ---------------------------------------------------------------------------

def ordinate_cubic_coeffs(p: LZParams):
    """(p2, r0) of x^3 - p2 x^2 + r0 = 0 for x = delta^2 on omega = pi/2."""
    a, b = p.alpha_hat, p.beta_hat
    return b * b / 2.0 + a * a + 5.0 / 8.0, 5.0 / 8.0 * (a * a - b * b) ** 2


def ordinate_cubic_roots(p: LZParams):
    """All real roots of the ordinate cubic, ascending.

    Closed-form trigonometric solution of the depressed cubic followed by
    one Newton polish per root (keeps root-finding deterministic).
    """
    p2, r0 = ordinate_cubic_coeffs(p)
    # depress x = y + p2/3:  y^3 + q y + s = 0
    q = -p2 * p2 / 3.0
    s = r0 - 2.0 * p2 ** 3 / 27.0
    m = 2.0 * math.sqrt(-q / 3.0)
    arg = 3.0 * s / (q * m)
    arg = min(1.0, max(-1.0, arg))
    theta = math.acos(arg)
    roots = []
    for k in range(3):
        y = m * math.cos((theta - TWO_PI * k) / 3.0)
        x = y + p2 / 3.0
        # one Newton step on the original cubic
        f = x ** 3 - p2 * x * x + r0
        fp = 3.0 * x * x - 2.0 * p2 * x
        if fp != 0.0:
            x -= f / fp
        roots.append(x)
    return sorted(roots)


# ---------------------------------------------------------------------------
# Hessian (finite differences, Richardson-extrapolated)
# ---------------------------------------------------------------------------

def hessian_w_raw(delta: float, omega: float, a: float, b: float,
                  step: float = 1e-3):
    """Hessian determinant and eigen-sign signature of W at a point.

    Central second differences at steps h and h/2, Richardson-combined
    ((16 D_{h/2} - D_h)/15) entry by entry.  Returns (det, n_pos, n_neg).
    """
    def hess(h):
        f0 = w_raw(delta, omega, a, b)
        fdd = (w_raw(delta + h, omega, a, b) - 2.0 * f0
               + w_raw(delta - h, omega, a, b)) / h ** 2
        fww = (w_raw(delta, omega + h, a, b) - 2.0 * f0
               + w_raw(delta, omega - h, a, b)) / h ** 2
        fdw = (w_raw(delta + h, omega + h, a, b) - w_raw(delta + h, omega - h, a, b)
               - w_raw(delta - h, omega + h, a, b)
               + w_raw(delta - h, omega - h, a, b)) / (4.0 * h * h)
        return np.array([[fdd, fdw], [fdw, fww]])
    # W is analytic in delta on (0, inf); only delta = 0 is off limits
    h = step if delta - step > 0.0 else 0.5 * delta
    if h <= 0.0:
        raise PrecisionError("no room for finite-difference steps")
    H = (16.0 * hess(h / 2.0) - hess(h)) / 15.0
    ev = np.linalg.eigvalsh(H)
    det = float(ev[0] * ev[1])
    return det, int(np.sum(ev > 0.0)), int(np.sum(ev < 0.0))


def hessian_w(pt: LZPoint, p: LZParams, step: float = 1e-3):
    return hessian_w_raw(pt.delta, pt.omega, p.alpha_hat, p.beta_hat, step)


def _report(kind: SingularityKind, delta: float, omega: float,
            p: LZParams) -> SingularityReport:
    det, npos, nneg = hessian_w_raw(delta, omega, p.alpha_hat, p.beta_hat)
    return SingularityReport(
        kind=kind, location=LZPoint(delta, omega), hessian_det=det,
        stability="elliptic" if det > 0.0 else "hyperbolic",
        morse=abs(det) > MORSE_TOL)


def find_singularities(p: LZParams) -> list:
    """Locate and classify the singularities of the region of ``p``.

    Representatives use omega in [0, pi) (portraits are invariant under
    omega -> omega + pi and omega -> pi - omega).  B and A' are the
    in-range cubic roots told apart by Hessian signature; E sits on the
    delta_max boundary circle.
    """
    region = classify_region(p)
    if region in (RegionClass.BORDER, RegionClass.NO_SINGULARITIES):
        return []
    a, b = p.alpha_hat, p.beta_hat
    lo2, hi2 = p.delta_min ** 2, p.delta_max ** 2
    in_range = [x for x in ordinate_cubic_roots(p) if lo2 < x < hi2]
    reports = []

    if region is RegionClass.REGION1:
        if len(in_range) != 1:
            raise ConsistencyError(
                f"Region1 expects one cubic root in range, got {in_range}")
        reports.append(_report(SingularityKind.A,
                               math.sqrt(3.0 * b * b + a * a), 0.0, p))
        reports.append(_report(SingularityKind.B,
                               math.sqrt(in_range[0]), math.pi / 2.0, p))
    elif region is RegionClass.REGION2:
        if len(in_range) != 1:
            raise ConsistencyError(
                f"Region2 expects one cubic root in range, got {in_range}")
        reports.append(_report(SingularityKind.B,
                               math.sqrt(in_range[0]), math.pi / 2.0, p))
        if a + b < 1.0:
            arg = (b - a) * (b + a) ** 2 / (5.0 * a * (1.0 - (a + b) ** 2))
        else:
            arg = (2.0 * (3.0 * b * b + a * a - 1.0)
                   / (5.0 * (4.0 * b * b - (a * a - b * b - 1.0) ** 2)))
        if not (0.0 < arg < 1.0):
            raise ConsistencyError(f"E-point ordinate argument {arg} out of (0,1)")
        reports.append(_report(SingularityKind.E, p.delta_max,
                               math.asin(math.sqrt(arg)), p))
    elif region is RegionClass.REGION3:
        if len(in_range) != 2:
            raise ConsistencyError(
                f"Region3 expects two cubic roots in range, got {in_range}")
        pair = [_report(SingularityKind.B, math.sqrt(x), math.pi / 2.0, p)
                for x in in_range]
        dets = [r.hessian_det for r in pair]
        if not (max(dets) > 0.0 > min(dets)):
            raise ConsistencyError(
                f"Region3 roots do not split elliptic/hyperbolic: dets {dets}")
        for r in pair:
            if r.hessian_det < 0.0:
                r = SingularityReport(SingularityKind.APRIME, r.location,
                                      r.hessian_det, r.stability, r.morse)
            reports.append(r)
        reports.sort(key=lambda r: r.kind.value)
    return reports


def elliptic_point(p: LZParams) -> LZPoint:
    """The elliptic singularity B (raises DomainError if absent)."""
    for rep in find_singularities(p):
        if rep.kind is SingularityKind.B:
            return rep.location
    raise DomainError(f"no elliptic singularity B for parameters {p}")


# ---------------------------------------------------------------------------
# Level curves, separatrices
# ---------------------------------------------------------------------------

def _w_grid(p: LZParams, grid: int):
    d = np.linspace(p.delta_min + EDGE_EXCLUSION, p.delta_max - EDGE_EXCLUSION, grid)
    om = np.linspace(0.0, TWO_PI, grid, endpoint=False)
    W = w_raw(d[:, None], om[None, :], p.alpha_hat, p.beta_hat)
    return d, om, W


def level_curves(p: LZParams, levels, grid: int = 512) -> list:
    """Marching-squares contours of W on the open cylinder.

    Returns a list of (level, polyline) pairs; polylines are (n, 2)
    arrays with columns (delta, omega), closed across the omega seam.
    Levels outside the range of W yield no entries.
    """
    from skimage import measure

    d, om, W = _w_grid(p, grid)
    # pad one column past 2*pi so contours close across the seam
    Wp = np.concatenate([W, W[:, :1]], axis=1)
    omp = np.concatenate([om, [TWO_PI]])
    dd = d[1] - d[0]
    dom = omp[1] - omp[0]
    out = []
    for lev in np.atleast_1d(np.asarray(levels, dtype=float)):
        for seg in measure.find_contours(Wp, lev):
            poly = np.column_stack([d[0] + seg[:, 0] * dd,
                                    (omp[0] + seg[:, 1] * dom) % TWO_PI])
            out.append((float(lev), poly))
    return out


def separatrix(p: LZParams) -> list:
    """Level polylines through the hyperbolic singularities.

    Returns (kind, level, polyline) triples; DomainError when the region
    has no hyperbolic point.
    """
    hyper = [r for r in find_singularities(p) if r.stability == "hyperbolic"]
    if not hyper:
        raise DomainError("no hyperbolic singularity for these parameters")
    out = []
    for rep in hyper:
        lev = w_value(rep.location, p)
        for _, poly in level_curves(p, [lev]):
            out.append((rep.kind, lev, poly))
    return out


# ---------------------------------------------------------------------------
# Reduced flow
# ---------------------------------------------------------------------------

@dataclass
class QuadTrajectory:
    t: np.ndarray
    delta: np.ndarray
    omega: np.ndarray
    g2_phase: np.ndarray
    boundary_hit: bool


def _flow_rhs(t, y, a, b):
    d, om = y[0], y[1]
    gd, gw = wbar_grad_raw(d, om, a, b)
    return (-gw, gd, -wbar_dbeta_raw(d, om, a, b))


def quad_flow(pt0: LZPoint, p: LZParams, t_span: float, dt: float = None,
              rtol: float = 1e-12) -> QuadTrajectory:
    """Integrate the reduced flow of Wbar from pt0 for time t_span.

    delta' = -dWbar/domega, omega' = +dWbar/ddelta; the accumulated
    drift phase of the angle conjugate to beta_hat (quadrature of
    -dWbar/dbeta_hat) is carried along.  Wbar is conserved by the flow;
    the integration stops with ``boundary_hit`` when delta reaches the
    edge-exclusion band at delta_min/delta_max.
    """
    if t_span <= 0.0:
        raise DomainError("t_span must be positive")
    lo = p.delta_min + EDGE_EXCLUSION
    hi = p.delta_max - EDGE_EXCLUSION
    if not (lo <= pt0.delta <= hi):
        raise DomainError("initial point inside the edge-exclusion band")
    if dt is None:
        dt = t_span / 2000.0
    a, b = p.alpha_hat, p.beta_hat

    def hit_lo(t, y, *args):
        return y[0] - lo

    def hit_hi(t, y, *args):
        return y[0] - hi

    hit_lo.terminal = True
    hit_hi.terminal = True
    sol = solve_ivp(_flow_rhs, (0.0, t_span), (pt0.delta, pt0.omega, 0.0),
                    args=(a, b), method="DOP853", rtol=rtol, atol=1e-14,
                    dense_output=True, events=(hit_lo, hit_hi))
    t_end = sol.t[-1]
    ts = np.arange(0.0, t_end + 0.5 * dt, dt)
    ts[-1] = min(ts[-1], t_end)
    ys = sol.sol(ts)
    hit = any(len(te) > 0 for te in sol.t_events)
    return QuadTrajectory(t=ts, delta=ys[0], omega=ys[1], g2_phase=ys[2],
                          boundary_hit=bool(hit))
