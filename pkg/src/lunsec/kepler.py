"""Two-body orbital mechanics for one fictitious Kepler problem.

A body with reduced mass ``mu`` moving about a centre of attraction with
mass sum ``M`` (gravitational constant 1) has Hamiltonian

    H = |P|^2 / (2 mu) - mu M / |Q|,

so velocities are V = P/mu and the orbit is an ordinary Kepler orbit with
gravitational parameter M.  The Delaunay chart

    L = mu sqrt(M a)        l = mean anomaly
    G = L sqrt(1 - e^2)     g = argument of pericentre
    H = G cos i             h = longitude of the ascending node

is action-angle for H:  H = -mu^3 M^2 / (2 L^2).  The chart degenerates
for circular (e = 0), horizontal (sin i = 0) and rectilinear (G = 0)
orbits; conversions refuse states within ``CHART_TOL`` of those sets.

Angles are stored reduced to [0, 2*pi); the node longitude h is measured
from the +x axis of the ambient frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ChartSingularError, DomainError, SolverError

TWO_PI = 2.0 * math.pi

# Chart-singularity tolerance: orbits with e or sin(i) below this are
# rejected by the element chart (the Delaunay angles lose meaning there).
CHART_TOL = 1e-12

_KEPLER_TOL = 1e-13
_KEPLER_MAX_ITER = 50


def reduce_angle(x):
    """Reduce an angle (scalar or array) to the canonical range [0, 2*pi)."""
    return np.mod(x, TWO_PI)


@dataclass(frozen=True)
class GravParams:
    """Mass constants of one fictitious two-body problem.

    mu -- reduced mass of the fictitious body
    M  -- mass sum acting as the central attractor (grav. parameter, G = 1)
    """

    mu: float
    M: float

    def __post_init__(self):
        if not (self.mu > 0.0 and self.M > 0.0):
            raise DomainError(f"GravParams requires mu > 0 and M > 0, got {self}")


@dataclass(frozen=True)
class DelaunayElements:
    """Delaunay variables (L, l, G, g, H, h) of one elliptic orbit."""

    L: float
    l: float
    G: float
    g: float
    H: float
    h: float

    def __post_init__(self):
        if not (0.0 < self.G <= self.L):
            raise DomainError(f"need 0 < G <= L, got G={self.G}, L={self.L}")
        if abs(self.H) > self.G * (1.0 + 1e-15):
            raise DomainError(f"need |H| <= G, got H={self.H}, G={self.G}")
        for name in ("l", "g", "h"):
            object.__setattr__(self, name, float(reduce_angle(getattr(self, name))))

    @property
    def eccentricity(self) -> float:
        return math.sqrt(max(0.0, 1.0 - (self.G / self.L) ** 2))

    @property
    def inclination(self) -> float:
        return math.acos(min(1.0, max(-1.0, self.H / self.G)))

    def semi_major_axis(self, gp: GravParams) -> float:
        return (self.L / (gp.mu * math.sqrt(gp.M))) ** 2


@dataclass(frozen=True)
class CartesianPair:
    """Position/momentum pair (Q, P) of one fictitious body."""

    Q: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        P = np.asarray(self.P, dtype=float)
        if Q.shape != (3,) or P.shape != (3,):
            raise DomainError("Q and P must be 3-vectors")
        if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(P))):
            raise DomainError("non-finite components in CartesianPair")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "P", P)


def solve_kepler(l, e):
    """Solve Kepler's equation u - e*sin(u) = l for the eccentric anomaly.

    Accepts a scalar or array mean anomaly.  Damped Newton seeded with
    u0 = l + e*sin(l); entries that have not met the 1e-13 residual after
    the iteration cap are retried with bisection on [0, 2*pi].
    """
    if not (0.0 <= e < 1.0):
        raise DomainError(f"eccentricity out of range [0, 1): {e}")
    scalar = np.isscalar(l) or np.ndim(l) == 0
    lr = reduce_angle(np.atleast_1d(np.asarray(l, dtype=float)))
    u = lr + e * np.sin(lr)
    for _ in range(_KEPLER_MAX_ITER):
        f = u - e * np.sin(u) - lr
        if np.max(np.abs(f)) < _KEPLER_TOL:
            break
        fp = 1.0 - e * np.cos(u)
        du = f / fp
        # damp steps that overshoot the (monotone) solution bracket
        np.clip(du, -1.0, 1.0, out=du)
        u = u - du
    f = u - e * np.sin(u) - lr
    bad = np.abs(f) >= _KEPLER_TOL
    if np.any(bad):
        u[bad] = _bisect_kepler(lr[bad], e)
        f = u - e * np.sin(u) - lr
        if np.max(np.abs(f)) >= _KEPLER_TOL:
            raise SolverError(
                f"Kepler solver residual {np.max(np.abs(f)):.3e} above "
                f"{_KEPLER_TOL} (e = {e})")
    return float(u[0]) if scalar else u


def _bisect_kepler(lr, e):
    lo = np.zeros_like(lr)
    hi = np.full_like(lr, TWO_PI)
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        low = (mid - e * np.sin(mid) - lr) < 0.0
        lo = np.where(low, mid, lo)
        hi = np.where(low, hi, mid)
    return 0.5 * (lo + hi)


def _orientation_matrix(g: float, inc_cos: float, inc_sin: float, h: float) -> np.ndarray:
    """Rotation taking perifocal coordinates to the ambient frame:
    R3(-h) R1(-i) R3(-g)."""
    cg, sg = math.cos(g), math.sin(g)
    ch, sh = math.cos(h), math.sin(h)
    ci, si = inc_cos, inc_sin
    return np.array([
        [ch * cg - sh * sg * ci, -ch * sg - sh * cg * ci, sh * si],
        [sh * cg + ch * sg * ci, -sh * sg + ch * cg * ci, -ch * si],
        [sg * si, cg * si, ci],
    ])


def elements_to_cartesian(el: DelaunayElements, gp: GravParams) -> CartesianPair:
    """Realize Delaunay elements as a Cartesian (Q, P) pair.

    Refuses chart-singular states: e < CHART_TOL or sin(i) < CHART_TOL.
    """
    e = el.eccentricity
    if e < CHART_TOL:
        raise ChartSingularError(f"orbit circular within tolerance (e = {e:.3e})")
    if e >= 1.0:
        raise DomainError("rectilinear/unbound elements")
    ci = min(1.0, max(-1.0, el.H / el.G))
    si = math.sqrt(max(0.0, 1.0 - ci * ci))
    if si < CHART_TOL:
        raise ChartSingularError(f"orbit horizontal within tolerance (sin i = {si:.3e})")
    a = el.semi_major_axis(gp)
    u = solve_kepler(el.l, e)
    cu, su = math.cos(u), math.sin(u)
    se = math.sqrt(1.0 - e * e)
    r = a * (1.0 - e * cu)
    n = math.sqrt(gp.M / a ** 3)
    pos_pf = np.array([a * (cu - e), a * se * su, 0.0])
    vel_pf = np.array([-a * a * n * su / r, a * a * n * se * cu / r, 0.0])
    R = _orientation_matrix(el.g, ci, si, el.h)
    return CartesianPair(R @ pos_pf, gp.mu * (R @ vel_pf))


def cartesian_to_elements(cp: CartesianPair, gp: GravParams) -> DelaunayElements:
    """Invert the Delaunay chart on the elliptic, chart-regular set.

    Raises DomainError for non-elliptic (E >= 0) states and
    ChartSingularError within CHART_TOL of circular/horizontal/rectilinear
    configurations.
    """
    Q, v = cp.Q, cp.P / gp.mu
    r = float(np.linalg.norm(Q))
    if r <= 0.0:
        raise DomainError("position at origin")
    v2 = float(v @ v)
    energy_per_mu = 0.5 * v2 - gp.M / r
    if energy_per_mu >= 0.0:
        raise DomainError("state is not elliptic (two-body energy >= 0)")
    a = -gp.M / (2.0 * energy_per_mu)
    c = np.cross(Q, v)
    cnorm = float(np.linalg.norm(c))
    if cnorm < CHART_TOL:
        raise ChartSingularError("rectilinear orbit (vanishing angular momentum)")
    e_vec = np.cross(v, c) / gp.M - Q / r
    e = float(np.linalg.norm(e_vec))
    if e < CHART_TOL:
        raise ChartSingularError(f"orbit circular within tolerance (e = {e:.3e})")
    if e >= 1.0:
        raise DomainError("parabolic/hyperbolic eccentricity")
    ci = c[2] / cnorm
    si = math.sqrt(max(0.0, 1.0 - ci * ci))
    if si < CHART_TOL:
        raise ChartSingularError(f"orbit horizontal within tolerance (sin i = {si:.3e})")

    node = np.array([-c[1], c[0], 0.0])   # z-hat x c
    nnorm = float(np.linalg.norm(node))
    h = math.atan2(node[1], node[0])
    cosg = float(node @ e_vec) / (nnorm * e)
    g = math.acos(min(1.0, max(-1.0, cosg)))
    if e_vec[2] < 0.0:
        g = TWO_PI - g
    # true anomaly -> eccentric -> mean
    cosf = float(e_vec @ Q) / (e * r)
    f = math.acos(min(1.0, max(-1.0, cosf)))
    if float(Q @ v) < 0.0:
        f = TWO_PI - f
    cu = (e + math.cos(f)) / (1.0 + e * math.cos(f))
    su = math.sqrt(1.0 - e * e) * math.sin(f) / (1.0 + e * math.cos(f))
    u = math.atan2(su, cu)
    l = u - e * su

    L = gp.mu * math.sqrt(gp.M * a)
    G = gp.mu * cnorm
    H = gp.mu * c[2]
    return DelaunayElements(L=L, l=l, G=G, g=g, H=H, h=h)


def kepler_energy(el: DelaunayElements, gp: GravParams) -> float:
    """Action-angle form of the two-body energy: -mu^3 M^2 / (2 L^2)."""
    return -gp.mu ** 3 * gp.M ** 2 / (2.0 * el.L ** 2)
