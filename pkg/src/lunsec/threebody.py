"""Spatial three-body problem in Jacobi coordinates.

After reduction by translations (total momentum fixed to zero) the
Hamiltonian splits as F = F_Kep + F_pert with

    F_Kep  = |P1|^2/(2 mu1) + |P2|^2/(2 mu2) - mu1 M1/|Q1| - mu2 M2/|Q2|
    F_pert = -mu1 m2 [ (1/s0)(1/|Q2 - s0 Q1| - 1/|Q2|)
                     + (1/s1)(1/|Q2 + s1 Q1| - 1/|Q2|) ]

where s0 = m0/(m0+m1), s1 = m1/(m0+m1), 1/mu1 = 1/m0 + 1/m1,
1/mu2 = 1/(m0+m1) + 1/m2, M1 = m0+m1, M2 = m0+m1+m2 and the
gravitational constant is 1.  F_pert admits the Legendre expansion

    F_pert = -mu1 m2 sum_{n>=2} sigma_n P_n(cos zeta) |Q1|^n / |Q2|^(n+1),
    sigma_n = s0^(n-1) + (-1)^n s1^(n-1),

convergent for |Q1|/|Q2| < 1/max(s0, s1) (zeta = angle between Q1, Q2).

The integrator is a fixed-step symplectic splitting: exact Keplerian
drifts of both fictitious bodies composed with momentum kicks from
grad F_pert, as a second-order leapfrog or its fourth-order
triple-composition (default).  Kicks leave the total angular momentum
C = Q1 x P1 + Q2 x P2 exactly invariant, so C is conserved to roundoff.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCaseError, DomainError
from .kepler import (CartesianPair, DelaunayElements, GravParams,
                     cartesian_to_elements, elements_to_cartesian)

TWO_PI = 2.0 * math.pi

# fourth-order (triple leapfrog) composition weights
_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_W0 = 1.0 - 2.0 * _W1

# close-encounter guard: abort when any mutual separation drops below
# this fraction of the instantaneous inner semi-major axis
CLOSE_ENCOUNTER_FACTOR = 1e-6


@dataclass(frozen=True)
class MassSystem:
    """The three masses and every derived mass constant."""

    m0: float
    m1: float
    m2: float

    def __post_init__(self):
        if not (self.m0 > 0.0 and self.m1 > 0.0 and self.m2 > 0.0):
            raise DomainError("all masses must be positive")

    @property
    def M1(self) -> float:
        return self.m0 + self.m1

    @property
    def M2(self) -> float:
        return self.m0 + self.m1 + self.m2

    @property
    def sigma0(self) -> float:
        return self.m0 / (self.m0 + self.m1)

    @property
    def sigma1(self) -> float:
        return self.m1 / (self.m0 + self.m1)

    @property
    def mu1(self) -> float:
        return self.m0 * self.m1 / (self.m0 + self.m1)

    @property
    def mu2(self) -> float:
        return self.M1 * self.m2 / self.M2

    @property
    def mu_quad(self) -> float:
        return self.m0 * self.m1 * self.m2 / (self.m0 + self.m1)

    @property
    def inner(self) -> GravParams:
        return GravParams(self.mu1, self.M1)

    @property
    def outer(self) -> GravParams:
        return GravParams(self.mu2, self.M2)


@dataclass(frozen=True)
class JacobiState:
    """Momenta/positions of the two fictitious bodies after reduction."""

    inner: CartesianPair
    outer: CartesianPair

    def separations(self, ms: MassSystem):
        """(r1, ra, rb, r2) with ra = |Q2 - s0 Q1|, rb = |Q2 + s1 Q1|."""
        Q1, Q2 = self.inner.Q, self.outer.Q
        r1 = float(np.linalg.norm(Q1))
        ra = float(np.linalg.norm(Q2 - ms.sigma0 * Q1))
        rb = float(np.linalg.norm(Q2 + ms.sigma1 * Q1))
        r2 = float(np.linalg.norm(Q2))
        return r1, ra, rb, r2

    def require_collision_free(self, ms: MassSystem):
        r1, ra, rb, _ = self.separations(ms)
        if min(r1, ra, rb) <= 0.0:
            raise DomainError("collision configuration")


@dataclass(frozen=True)
class AsynchronousBounds:
    """Eccentricity/semi-major-axis bands defining the admissible
    hierarchical region, with the resulting bound on alpha = a1/a2."""

    e1_lo: float
    e1_hi: float
    e2_lo: float
    e2_hi: float
    a1_lo: float
    a1_hi: float
    masses: MassSystem
    alpha_max: float = field(init=False)

    def __post_init__(self):
        ok = (0.0 < self.e1_lo < self.e1_hi < 1.0
              and 0.0 < self.e2_lo < self.e2_hi < 1.0
              and 0.0 < self.a1_lo < self.a1_hi)
        if not ok:
            raise DomainError("invalid admissibility bands")
        ms = self.masses
        amax = min((1.0 - self.e2_hi) / 80.0,
                   (1.0 - self.e2_hi) / (2.0 * ms.sigma0),
                   (1.0 - self.e2_hi) / (2.0 * ms.sigma1))
        object.__setattr__(self, "alpha_max", amax)

    def admits(self, el1: DelaunayElements, el2: DelaunayElements) -> bool:
        a1 = el1.semi_major_axis(self.masses.inner)
        a2 = el2.semi_major_axis(self.masses.outer)
        return (self.e1_lo < el1.eccentricity < self.e1_hi
                and self.e2_lo < el2.eccentricity < self.e2_hi
                and self.a1_lo < a1 < self.a1_hi
                and a1 / a2 < self.alpha_max)


# ---------------------------------------------------------------------------
# Jacobi reduction
# ---------------------------------------------------------------------------

def jacobi_from_inertial(positions, momenta, ms: MassSystem):
    """Reduce inertial (q_j, p_j), j = 0..2 to Jacobi variables.

    Returns (JacobiState, total_momentum).  P1 = p1 + sigma1 p2, P2 = p2,
    Q1 = q1 - q0, Q2 = q2 - sigma0 q0 - sigma1 q1.
    """
    q = [np.asarray(x, dtype=float) for x in positions]
    p = [np.asarray(x, dtype=float) for x in momenta]
    for j in range(3):
        for k in range(j + 1, 3):
            if np.linalg.norm(q[j] - q[k]) <= 0.0:
                raise DomainError(f"bodies {j} and {k} coincide")
    P0 = p[0] + p[1] + p[2]
    P1 = p[1] + ms.sigma1 * p[2]
    P2 = p[2]
    Q1 = q[1] - q[0]
    Q2 = q[2] - ms.sigma0 * q[0] - ms.sigma1 * q[1]
    return JacobiState(CartesianPair(Q1, P1), CartesianPair(Q2, P2)), P0


def jacobi_to_inertial(state: JacobiState, ms: MassSystem,
                       total_momentum=None, q0=None):
    """Invert the Jacobi reduction given the centre-of-mass data
    (total momentum and the position of body 0; both default to zero)."""
    P0 = np.zeros(3) if total_momentum is None else np.asarray(total_momentum, float)
    q0 = np.zeros(3) if q0 is None else np.asarray(q0, float)
    Q1, P1 = state.inner.Q, state.inner.P
    Q2, P2 = state.outer.Q, state.outer.P
    q1 = Q1 + q0
    q2 = Q2 + ms.sigma0 * q0 + ms.sigma1 * q1
    p2 = P2
    p1 = P1 - ms.sigma1 * p2
    p0 = P0 - p1 - p2
    return [q0, q1, q2], [p0, p1, p2]


# ---------------------------------------------------------------------------
# Hamiltonian pieces
# ---------------------------------------------------------------------------

def f_pert_exact(s: JacobiState, ms: MassSystem) -> float:
    """Exact perturbing function (no expansion)."""
    r1, ra, rb, r2 = s.separations(ms)
    if min(r1, ra, rb, r2) <= 0.0:
        raise DomainError("collision configuration")
    return -ms.mu1 * ms.m2 * ((1.0 / ms.sigma0) * (1.0 / ra - 1.0 / r2)
                              + (1.0 / ms.sigma1) * (1.0 / rb - 1.0 / r2))


def kepler_part(s: JacobiState, ms: MassSystem) -> float:
    r1 = float(np.linalg.norm(s.inner.Q))
    r2 = float(np.linalg.norm(s.outer.Q))
    if min(r1, r2) <= 0.0:
        raise DomainError("collision configuration")
    P1, P2 = s.inner.P, s.outer.P
    return (0.5 * float(P1 @ P1) / ms.mu1 + 0.5 * float(P2 @ P2) / ms.mu2
            - ms.mu1 * ms.M1 / r1 - ms.mu2 * ms.M2 / r2)


def hamiltonian_full(s: JacobiState, ms: MassSystem) -> float:
    """F = F_Kep + F_pert (equals the inertial three-body energy when the
    total momentum vanishes)."""
    return kepler_part(s, ms) + f_pert_exact(s, ms)


def hamiltonian_inertial(positions, momenta, masses) -> float:
    """Three-body energy in the original chart (for cross-checks)."""
    q = [np.asarray(x, float) for x in positions]
    p = [np.asarray(x, float) for x in momenta]
    m = list(masses)
    T = sum(0.5 * float(pj @ pj) / mj for pj, mj in zip(p, m))
    U = 0.0
    for j in range(3):
        for k in range(j + 1, 3):
            U -= m[j] * m[k] / float(np.linalg.norm(q[j] - q[k]))
    return T + U


def legendre_sigma(n: int, ms: MassSystem) -> float:
    """Mass coefficient sigma_n = s0^(n-1) + (-1)^n s1^(n-1)."""
    return ms.sigma0 ** (n - 1) + (-1) ** n * ms.sigma1 ** (n - 1)


def legendre_cos(n_max: int, x):
    """P_0..P_n_max at x via the Bonnet three-term recursion (array ok)."""
    x = np.asarray(x, dtype=float)
    out = [np.ones_like(x), x.copy()]
    for k in range(2, n_max + 1):
        out.append(((2 * k - 1) * x * out[-1] - (k - 1) * out[-2]) / k)
    return out


def f_pert_legendre(s: JacobiState, ms: MassSystem, n_max: int) -> float:
    """Partial Legendre sum of F_pert through order n_max (n >= 2).

    Requires |Q1|/|Q2| < 1/max(sigma0, sigma1); the omitted tail is
    geometrically bounded with ratio max(sigma0, sigma1)*|Q1|/|Q2|.
    """
    if n_max < 2:
        raise DomainError("n_max must be >= 2")
    Q1, Q2 = s.inner.Q, s.outer.Q
    r1 = float(np.linalg.norm(Q1))
    r2 = float(np.linalg.norm(Q2))
    sig_hat = max(ms.sigma0, ms.sigma1)
    if r1 / r2 >= 1.0 / sig_hat:
        raise DomainError(
            f"|Q1|/|Q2| = {r1 / r2:.4f} outside the convergence region "
            f"(limit {1.0 / sig_hat:.4f})")
    cz = float(Q1 @ Q2) / (r1 * r2)
    P = legendre_cos(n_max, cz)
    rho = r1 / r2
    total = 0.0
    for n in range(2, n_max + 1):
        total += legendre_sigma(n, ms) * float(P[n]) * rho ** n / r2
    return -ms.mu1 * ms.m2 * total


def legendre_term_value(s: JacobiState, ms: MassSystem, n: int) -> float:
    """Single n-th term of the expansion (the n = 2 term is the
    quadrupolar integrand averaged by the secular module)."""
    Q1, Q2 = s.inner.Q, s.outer.Q
    r1 = float(np.linalg.norm(Q1))
    r2 = float(np.linalg.norm(Q2))
    cz = float(Q1 @ Q2) / (r1 * r2)
    P = legendre_cos(n, cz)
    return -ms.mu1 * ms.m2 * legendre_sigma(n, ms) * float(P[n]) * r1 ** n / r2 ** (n + 1)


# ---------------------------------------------------------------------------
# Angular momenta, Laplace frame
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AngularMomenta:
    c1: np.ndarray
    c2: np.ndarray
    c: np.ndarray
    c_norm: float
    G1: float
    G2: float
    H1: float
    H2: float


def angular_momenta(s: JacobiState) -> AngularMomenta:
    """C1 = Q1 x P1, C2 = Q2 x P2, C = C1 + C2 and the scalars
    (G_i = |C_i|, H_i = z-components in the current frame)."""
    c1 = np.cross(s.inner.Q, s.inner.P)
    c2 = np.cross(s.outer.Q, s.outer.P)
    c = c1 + c2
    c_norm = float(np.linalg.norm(c))
    G1 = float(np.linalg.norm(c1))
    G2 = float(np.linalg.norm(c2))
    if c_norm < 1e-12 * max(G1 + G2, 1e-300):
        raise DegenerateCaseError("total angular momentum vanishes")
    return AngularMomenta(c1, c2, c, c_norm, G1, G2, float(c1[2]), float(c2[2]))


def laplace_frame(s: JacobiState) -> JacobiState:
    """Rotate the state so the total angular momentum points along +z."""
    am = angular_momenta(s)
    ch = am.c / am.c_norm
    z = np.array([0.0, 0.0, 1.0])
    v = np.cross(ch, z)
    sv = float(np.linalg.norm(v))
    cv = float(ch @ z)
    if sv < 1e-15:
        R = np.eye(3) if cv > 0 else np.diag([1.0, -1.0, -1.0])
    else:
        K = np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])
        R = np.eye(3) + K + K @ K * ((1.0 - cv) / sv ** 2)
    return JacobiState(
        CartesianPair(R @ s.inner.Q, R @ s.inner.P),
        CartesianPair(R @ s.outer.Q, R @ s.outer.P))


def laplace_elements(ms: MassSystem, a1: float, a2: float, e1: float, e2: float,
                     i_mut: float, g1: float, g2: float,
                     l1: float = 0.0, l2: float = 0.0):
    """Delaunay elements of both ellipses in the Laplace frame for a given
    mutual inclination.  The node line is placed along the x axis
    (h1 = 0, h2 = pi); inclinations to the reference plane follow from the
    closed triangle C = C1 + C2 with C vertical.
    """
    gp1, gp2 = ms.inner, ms.outer
    L1 = gp1.mu * math.sqrt(gp1.M * a1)
    L2 = gp2.mu * math.sqrt(gp2.M * a2)
    G1 = L1 * math.sqrt(1.0 - e1 * e1)
    G2 = L2 * math.sqrt(1.0 - e2 * e2)
    C2 = G1 * G1 + G2 * G2 + 2.0 * G1 * G2 * math.cos(i_mut)
    if C2 <= 0.0:
        raise DegenerateCaseError("total angular momentum vanishes")
    C = math.sqrt(C2)
    H1 = (C * C + G1 * G1 - G2 * G2) / (2.0 * C)
    H2 = (C * C + G2 * G2 - G1 * G1) / (2.0 * C)
    el1 = DelaunayElements(L=L1, l=l1, G=G1, g=g1, H=H1, h=0.0)
    el2 = DelaunayElements(L=L2, l=l2, G=G2, g=g2, H=H2, h=math.pi)
    return el1, el2


def state_from_elements(el1: DelaunayElements, el2: DelaunayElements,
                        ms: MassSystem) -> JacobiState:
    return JacobiState(elements_to_cartesian(el1, ms.inner),
                       elements_to_cartesian(el2, ms.outer))


# ---------------------------------------------------------------------------
# Symplectic integrator
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Sampled trajectory plus diagnostics.

    Arrays are sampled every ``record_every`` steps (the initial state is
    row 0); ``final_state`` is the exact last integrated state.
    """

    times: np.ndarray
    q1: np.ndarray
    p1: np.ndarray
    q2: np.ndarray
    p2: np.ndarray
    final_state: JacobiState
    masses: MassSystem
    truncated: bool = False
    reason: str = ""
    steps_done: int = 0


def _drift(qx, qy, qz, vx, vy, vz, gm, dt):
    """Exact elliptic Kepler propagation (f and g functions, eccentric
    anomaly difference solved by safeguarded Newton)."""
    r0 = math.sqrt(qx * qx + qy * qy + qz * qz)
    v2 = vx * vx + vy * vy + vz * vz
    inva = 2.0 / r0 - v2 / gm
    if inva <= 0.0:
        raise DomainError("integrator requires elliptic instantaneous orbits")
    a = 1.0 / inva
    n = math.sqrt(gm / (a * a * a))
    s = (qx * vx + qy * vy + qz * vz) / (n * a * a)
    c = 1.0 - r0 / a
    M = n * dt
    x = M
    for _ in range(60):
        sx = math.sin(x)
        cx = math.cos(x)
        f = x - c * sx + s * (1.0 - cx) - M
        dx = f / (1.0 - c * cx + s * sx)   # derivative = r/a > 0
        x -= dx
        if abs(dx) < 1e-15:
            break
    sx = math.sin(x)
    cx = math.cos(x)
    r = a + (r0 - a) * cx + s * a * sx
    fg = 1.0 - a / r0 * (1.0 - cx)
    gg = dt + (sx - x) / n
    fd = -a * a * n * sx / (r * r0)
    gd = 1.0 - a / r * (1.0 - cx)
    return (fg * qx + gg * vx, fg * qy + gg * vy, fg * qz + gg * vz,
            fd * qx + gd * vx, fd * qy + gd * vy, fd * qz + gd * vz)


class _Stepper:
    """Scalar-arithmetic splitting stepper (hot loop kept numpy-free)."""

    def __init__(self, ms: MassSystem, order: int):
        if order not in (2, 4):
            raise DomainError("integrator order must be 2 or 4")
        self.ms = ms
        self.order = order
        self.gm1 = ms.M1
        self.gm2 = ms.M2
        self.s0 = ms.sigma0
        self.s1 = ms.sigma1
        self.mu1 = ms.mu1
        self.mu2 = ms.mu2
        self.c = ms.mu1 * ms.m2

    def kick(self, y, dt):
        (q1x, q1y, q1z, v1x, v1y, v1z, q2x, q2y, q2z, v2x, v2y, v2z) = y
        s0, s1, c = self.s0, self.s1, self.c
        ax, ay, az = q2x - s0 * q1x, q2y - s0 * q1y, q2z - s0 * q1z
        bx, by, bz = q2x + s1 * q1x, q2y + s1 * q1y, q2z + s1 * q1z
        ra3 = (ax * ax + ay * ay + az * az) ** 1.5
        rb3 = (bx * bx + by * by + bz * bz) ** 1.5
        r23 = (q2x * q2x + q2y * q2y + q2z * q2z) ** 1.5
        # Pdot = -dF_pert/dQ; dF_pert/dQ1 = -c (r_a/|r_a|^3 - r_b/|r_b|^3)
        g1x = c * (ax / ra3 - bx / rb3)
        g1y = c * (ay / ra3 - by / rb3)
        g1z = c * (az / ra3 - bz / rb3)
        g2x = c * ((1 / s0) * (-ax / ra3 + q2x / r23) + (1 / s1) * (-bx / rb3 + q2x / r23))
        g2y = c * ((1 / s0) * (-ay / ra3 + q2y / r23) + (1 / s1) * (-by / rb3 + q2y / r23))
        g2z = c * ((1 / s0) * (-az / ra3 + q2z / r23) + (1 / s1) * (-bz / rb3 + q2z / r23))
        k1, k2 = dt / self.mu1, dt / self.mu2
        return (q1x, q1y, q1z, v1x + k1 * g1x, v1y + k1 * g1y, v1z + k1 * g1z,
                q2x, q2y, q2z, v2x + k2 * g2x, v2y + k2 * g2y, v2z + k2 * g2z)

    def leapfrog(self, y, dt):
        y = self.kick(y, 0.5 * dt)
        d1 = _drift(*y[0:6], self.gm1, dt)
        d2 = _drift(*y[6:12], self.gm2, dt)
        return self.kick(d1 + d2, 0.5 * dt)

    def step(self, y, dt):
        if self.order == 2:
            return self.leapfrog(y, dt)
        y = self.leapfrog(y, _W1 * dt)
        y = self.leapfrog(y, _W0 * dt)
        return self.leapfrog(y, _W1 * dt)

    def min_separation_ratio(self, y):
        (q1x, q1y, q1z, v1x, v1y, v1z, q2x, q2y, q2z, _, _, _) = y
        s0, s1 = self.s0, self.s1
        r1 = math.sqrt(q1x * q1x + q1y * q1y + q1z * q1z)
        ra = math.sqrt((q2x - s0 * q1x) ** 2 + (q2y - s0 * q1y) ** 2 + (q2z - s0 * q1z) ** 2)
        rb = math.sqrt((q2x + s1 * q1x) ** 2 + (q2y + s1 * q1y) ** 2 + (q2z + s1 * q1z) ** 2)
        v2 = v1x * v1x + v1y * v1y + v1z * v1z
        a1 = 1.0 / (2.0 / r1 - v2 / self.gm1)
        return min(r1, ra, rb) / abs(a1)


def integrate(s: JacobiState, ms: MassSystem, dt: float, steps: int,
              order: int = 4, record_every: int = 1) -> Trajectory:
    """Propagate a JacobiState with the fixed-step symplectic splitting.

    dt > 0; ``order`` selects leapfrog (2) or its fourth-order
    composition (4, default).  The run truncates with a diagnostic if any
    mutual separation falls below CLOSE_ENCOUNTER_FACTOR times the
    instantaneous inner semi-major axis.
    """
    if dt <= 0.0:
        raise DomainError("dt must be positive")
    s.require_collision_free(ms)
    st = _Stepper(ms, order)
    y = (*s.inner.Q, *(s.inner.P / ms.mu1), *s.outer.Q, *(s.outer.P / ms.mu2))
    rows = [y]
    times = [0.0]
    truncated = False
    reason = ""
    done = 0
    for i in range(1, steps + 1):
        y = st.step(y, dt)
        done = i
        if st.min_separation_ratio(y) < CLOSE_ENCOUNTER_FACTOR:
            truncated = True
            reason = f"close encounter at step {i} (t = {i * dt:.6g})"
            rows.append(y)
            times.append(i * dt)
            break
        if i % record_every == 0:
            rows.append(y)
            times.append(i * dt)
    arr = np.asarray(rows, dtype=float)
    final = JacobiState(
        CartesianPair(np.array(y[0:3]), ms.mu1 * np.array(y[3:6])),
        CartesianPair(np.array(y[6:9]), ms.mu2 * np.array(y[9:12])))
    return Trajectory(times=np.asarray(times), q1=arr[:, 0:3],
                      p1=ms.mu1 * arr[:, 3:6], q2=arr[:, 6:9],
                      p2=ms.mu2 * arr[:, 9:12], final_state=final, masses=ms,
                      truncated=truncated, reason=reason, steps_done=done)


TRAJECTORY_CSV_HEADER = ("t,Q1x,Q1y,Q1z,P1x,P1y,P1z,Q2x,Q2y,Q2z,P2x,P2y,P2z,"
                         "energy,Cx,Cy,Cz,a1,e1,i1,g1,a2,e2,i2,g2")


def trajectory_to_csv(traj: Trajectory, out) -> None:
    """Write a trajectory as CSV (orbital-element columns through the
    Delaunay chart; chart-singular samples emit nan elements)."""
    close = False
    if isinstance(out, (str, bytes)):
        out = open(out, "w", encoding="utf-8")
        close = True
    ms = traj.masses
    try:
        out.write(TRAJECTORY_CSV_HEADER + "\n")
        for i in range(traj.times.shape[0]):
            s = JacobiState(CartesianPair(traj.q1[i], traj.p1[i]),
                            CartesianPair(traj.q2[i], traj.p2[i]))
            en = hamiltonian_full(s, ms)
            c = np.cross(traj.q1[i], traj.p1[i]) + np.cross(traj.q2[i], traj.p2[i])
            cols = [traj.times[i], *traj.q1[i], *traj.p1[i], *traj.q2[i],
                    *traj.p2[i], en, *c]
            for pair, gp in ((s.inner, ms.inner), (s.outer, ms.outer)):
                try:
                    el = cartesian_to_elements(pair, gp)
                    cols += [el.semi_major_axis(gp), el.eccentricity,
                             el.inclination, el.g]
                except DomainError:
                    cols += [math.nan] * 4
            out.write(",".join(f"{v:.17g}" for v in cols) + "\n")
    finally:
        if close:
            out.close()
