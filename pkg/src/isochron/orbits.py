"""Planar central-force orbits, their Clairaut reduction and apsidal angles."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy import integrate, optimize

from .errors import (CollisionApproach, DomainEscape, IsochronError,
                     NotAttractiveHere, StepFailure)
from .period import period as _period
from .potentials import (CentralForce, Potential1D, clairaut_reduce,
                         find_equilibria)

R_MIN_GUARD = 1e-6


def _step_tol(tol):
    # the pair runs 100x tighter than the requested drift bound: global error
    # accumulates over many periods (floored above roundoff)
    return max(tol * 1e-2, 1e-13)


@dataclass(frozen=True)
class OrbitState:
    x: float
    y: float
    vx: float
    vy: float

    @property
    def r(self) -> float:
        return math.hypot(self.x, self.y)

    @property
    def theta(self) -> float:
        return math.atan2(self.y, self.x)

    @property
    def angular_momentum(self) -> float:
        return self.x * self.vy - self.y * self.vx

    def energy(self, force: CentralForce) -> float:
        return 0.5 * (self.vx ** 2 + self.vy ** 2) + float(force.radial_potential(self.r))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.vx, self.vy])


def circular_orbit(force: CentralForce, r0: float):
    """Circular motion of radius ``r0``: returns ``(state, omega)`` with ``omega = sqrt(phi(r0^2))``."""
    phi = float(force.phi(r0 * r0))
    if not phi > 0:
        raise NotAttractiveHere(f"phi(r0^2) = {phi} is not positive")
    w = math.sqrt(phi)
    return OrbitState(r0, 0.0, 0.0, w * r0), w


def state_from_apsis(rho0: float, C: float) -> OrbitState:
    """Cartesian state at an apsis ``rho = rho0``, ``rho' = 0``, polar angle 0."""
    r0 = 1.0 / rho0
    return OrbitState(r0, 0.0, 0.0, C * rho0)


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray  # rows: x, y, vx, vy, theta (unwrapped polar angle)
    sol: object
    E: np.ndarray
    C: np.ndarray
    energy_drift: float
    momentum_drift: float
    t_events: list = field(default_factory=list)
    y_events: list = field(default_factory=list)

    def state(self, t) -> OrbitState:
        v = self.sol(t)
        return OrbitState(*v[:4])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x", "y", "vx", "vy", "E", "C"])
        for i, t in enumerate(self.t):
            w.writerow([repr(float(v)) for v in (t, *self.y[:4, i], self.E[i], self.C[i])])
        return buf.getvalue()


def _cartesian_rhs(force: CentralForce):
    phi = force.phi

    def rhs(t, s):
        x, y, vx, vy, _ = s
        r2 = x * x + y * y
        f = float(phi(r2))
        return [vx, vy, -f * x, -f * y, (x * vy - y * vx) / r2]

    return rhs


def integrate_cartesian(force: CentralForce, s0: OrbitState, t_end: float = math.inf,
                        tol: float = 1e-12, r_min_guard: float = R_MIN_GUARD,
                        theta_end: Optional[float] = None, events=(), t_eval=None,
                        max_step: float = math.inf) -> Trajectory:
    """Integrate ``r'' = -phi(r^2) r`` (DOP853, dense output) with drift monitoring.

    The unwrapped polar angle is carried as a fifth component; ``theta_end``
    stops the run once that angle is reached.  Extra ``events`` take
    ``(t, s)`` with ``s`` the five-component state.
    """
    if not s0.r > 0:
        raise ValueError("initial radius must be positive")
    if not math.isfinite(t_end) and theta_end is None:
        raise ValueError("need t_end or theta_end")

    def collision(t, s):
        return math.hypot(s[0], s[1]) - r_min_guard

    collision.terminal = True
    evs = [collision]
    if theta_end is not None:
        def angle(t, s):
            return s[4] - theta_end
        angle.terminal = True
        evs.append(angle)
    evs.extend(events)

    span_end = t_end
    if not math.isfinite(span_end):
        # angular speed is C / r^2 >= C / r_max^2; pick a generous horizon
        span_end = 1e6
    y0 = [*s0.as_array(), s0.theta]
    sol = integrate.solve_ivp(_cartesian_rhs(force), (0.0, span_end), y0, method="DOP853",
                              rtol=_step_tol(tol), atol=_step_tol(tol) * 1e-2, dense_output=True, events=evs,
                              t_eval=t_eval, max_step=max_step)
    if sol.status == -1:
        raise StepFailure(sol.message)
    if sol.t_events[0].size:
        raise CollisionApproach(f"r fell below {r_min_guard} at t={float(sol.t_events[0][0])!r}")

    Y = sol.y
    r = np.hypot(Y[0], Y[1])
    E = 0.5 * (Y[2] ** 2 + Y[3] ** 2) + np.asarray(force.radial_potential(r), dtype=float)
    C = Y[0] * Y[3] - Y[1] * Y[2]
    E0, C0 = E[0], C[0]
    e_drift = float(np.max(np.abs(E - E0)) / max(abs(E0), 1e-300))
    c_drift = float(np.max(np.abs(C - C0)) / max(abs(C0), 1e-300))
    return Trajectory(sol.t, Y, sol.sol, E, C, e_drift, c_drift,
                      list(sol.t_events[1:]), list(sol.y_events[1:]))


@dataclass
class ReducedTrajectory:
    theta: np.ndarray
    rho: np.ndarray
    drho: np.ndarray
    sol: object
    energy_drift: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta", "rho", "drho"])
        for a, b, c in zip(self.theta, self.rho, self.drho):
            w.writerow([repr(float(a)), repr(float(b)), repr(float(c))])
        return buf.getvalue()


def integrate_reduced(V: Potential1D, rho0: float, theta_end: float, tol: float = 1e-12,
                      drho0: float = 0.0, theta_eval=None) -> ReducedTrajectory:
    """Integrate ``rho'' + V'(rho) = 0`` in the polar angle from an apsis."""
    if not V.contains(rho0):
        raise DomainEscape(f"rho0={rho0} outside {V.domain}")
    lo, hi = V.domain
    dV = V.dV

    def rhs(th, s):
        # trial stages may step past the boundary before the escape event fires
        with np.errstate(invalid="ignore"):
            return [s[1], -float(dV(s[0]))]

    def escape_lo(th, s):
        return s[0] - max(lo, 0.0) - 1e-12 if math.isfinite(lo) else 1.0

    def escape_hi(th, s):
        return hi - s[0] if math.isfinite(hi) else 1.0

    escape_lo.terminal = escape_hi.terminal = True
    sol = integrate.solve_ivp(rhs, (0.0, theta_end), [rho0, drho0], method="DOP853",
                              rtol=_step_tol(tol), atol=_step_tol(tol) * 1e-2, dense_output=True,
                              events=[escape_lo, escape_hi], t_eval=theta_eval)
    if sol.status == -1:
        raise StepFailure(sol.message)
    if sol.status == 1:
        raise DomainEscape(f"rho left {V.domain} at theta={sol.t[-1]!r}")
    rho, drho = sol.y
    H = 0.5 * drho ** 2 + V.V(rho)
    drift = float(np.max(np.abs(H - H[0])) / max(abs(H[0]), 1e-300))
    return ReducedTrajectory(sol.t, rho, drho, sol.sol, drift)


def _locate_center(V: Potential1D, near: float) -> float:
    eq = find_equilibria(V, scan=(near * 1e-4, near * 1e4), n_seeds=4096, geometric=True)
    centers = [r for r, t in zip(eq.roots, eq.tags) if t == "center-candidate"]
    if not centers:
        raise NotAttractiveHere("reduced potential has no center")
    return min(centers, key=lambda r: abs(math.log(r / near)))


def angular_period(V: Potential1D, rho0: float, tol: float = 1e-10,
                   rho_star: Optional[float] = None) -> float:
    """Minimal period of ``rho(theta)`` started at rest from ``rho0`` (singular quadrature)."""
    if rho_star is None:
        rho_star = _locate_center(V, rho0)
    return _period(V, rho0, rho_star, tol).theta


def commensurability(theta: float, qmax: int = 8, tol: float = 1e-6):
    """``(p, q)`` with ``theta = (p/q) pi`` and ``q <= qmax`` within ``tol``, else ``None``."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    ratio = theta / math.pi
    fr = Fraction(ratio).limit_denominator(qmax)
    if abs(ratio - fr.numerator / fr.denominator) <= tol:
        return fr.numerator, fr.denominator
    return None


def cross_check(force: CentralForce, C: float, rho0: float, theta_end: float,
                tol: float = 1e-12, n: int = 200) -> float:
    """Max ``|1/r(theta) - rho(theta)|`` between the Cartesian and the reduced integrations."""
    force = force.with_C(C)
    V = clairaut_reduce(force)
    grid = np.linspace(0.0, theta_end, n)
    red = integrate_reduced(V, rho0, theta_end, tol, theta_eval=grid)
    traj = integrate_cartesian(force, state_from_apsis(rho0, C), theta_end=theta_end * (1 + 1e-9) + 1e-9,
                               tol=tol)
    sol, t_hi = traj.sol, traj.t[-1]
    rho_c = np.empty_like(grid)
    t_prev = 0.0
    for i, th in enumerate(grid):
        if th == 0.0:
            t = 0.0
        else:
            # polar angle is strictly increasing (dtheta/dt = C rho^2)
            t = optimize.brentq(lambda s: sol(s)[4] - th, t_prev, t_hi, xtol=1e-15, rtol=1e-15)
        v = sol(t)
        rho_c[i] = 1.0 / math.hypot(v[0], v[1])
        t_prev = t
    return float(np.max(np.abs(rho_c - red.rho)))


def detect_period(force: CentralForce, s0: OrbitState, t_window: float, threshold: float = 1e-6,
                  tol: float = 1e-12) -> Optional[float]:
    """First return time with ``|s(t) - s(0)| < threshold``, scanning distance minima in ``(0, t_window]``."""
    z0 = s0.as_array()
    rhs = _cartesian_rhs(force)

    def dist_rate(t, s):
        d = s[:4] - z0
        return float(np.dot(d, rhs(t, s)[:4]))

    dist_rate.direction = 1.0  # minimum of the distance
    traj = integrate_cartesian(force, s0, t_end=t_window, tol=tol, events=[dist_rate])
    for t, s in zip(traj.t_events[0], traj.y_events[0]):
        if t > 1e-6 * t_window and np.linalg.norm(s[:4] - z0) < threshold:
            return float(t)
    return None


def measured_angular_period(force: CentralForce, s0: OrbitState, t_end: float,
                            tol: float = 1e-12) -> float:
    """Polar angle between consecutive pericenters (``r`` minima) along a Cartesian run."""

    def radial(t, s):
        return s[0] * s[2] + s[1] * s[3]

    radial.direction = 1.0  # r' crosses zero upward at a pericenter
    traj = integrate_cartesian(force, s0, t_end=t_end, tol=tol, events=[radial])
    th = [s[4] for t, s in zip(traj.t_events[0], traj.y_events[0]) if t > 1e-9]
    if len(th) < 2:
        raise StepFailure("fewer than two pericenters in the window")
    return float(th[1] - th[0])


@dataclass(frozen=True)
class ApsidalReport:
    """Angular periods over a set of apsis starting points.

    ``commensurable`` is ``(p, q)`` with ``Theta = (p/q) pi`` for the mean angular period,
    or ``None``.  ``apsidal_angles`` are exactly half the angular periods.
    """

    C: float
    rho_star: float
    amplitudes: list
    rho0: list
    angular_periods: list
    apsidal_angles: list
    constancy: float
    commensurable: Optional[tuple]
    diagnostics: list = field(default_factory=list)

    def to_json(self) -> str:
        doc = asdict(self)
        doc["commensurable"] = list(self.commensurable) if self.commensurable else None
        return json.dumps(doc, indent=2, allow_nan=True)


def apsidal_report(force: CentralForce, C: float, amplitudes, tol: float = 1e-10, qmax: int = 8,
                   commens_tol: float = 1e-6, const_tol: float = 1e-6) -> ApsidalReport:
    """Angular periods for ``rho0 = rho*(1 + a)`` over relative offsets ``a`` in ``amplitudes``."""
    force = force.with_C(C)
    V = clairaut_reduce(force)
    rho_star = _locate_center(V, 1.0 / C ** 2 if C else 1.0)
    thetas, rhos, diags, used = [], [], [], []
    for a in amplitudes:
        rho0 = rho_star * (1.0 + a)
        try:
            th = angular_period(V, rho0, tol, rho_star)
        except IsochronError as exc:
            diags.append(f"amplitude {a}: {type(exc).__name__}: {exc}")
            continue
        used.append(float(a))
        rhos.append(rho0)
        thetas.append(th)
    if thetas:
        mean = float(np.mean(thetas))
        constancy = (max(thetas) - min(thetas)) / mean
        comm = commensurability(mean, qmax, commens_tol) if constancy <= const_tol else None
    else:
        constancy, comm = math.nan, None
    return ApsidalReport(C, rho_star, used, rhos, thetas, [t / 2 for t in thetas],
                         constancy, comm, diags)
