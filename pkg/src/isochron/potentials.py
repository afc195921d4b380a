"""One-dimensional potentials, parametrized families and the Clairaut reduction.

A :class:`Potential1D` bundles vectorized evaluators for ``V``, ``V'`` and
``V''`` together with the open interval on which they are defined.  The
closed-form constructors below cover every family used by the rest of the
package; :func:`potential_from_config` builds them from the JSON descriptions
accepted by the command line.
"""
from __future__ import annotations

import bisect
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicHermiteSpline

from .errors import DomainError, MultipleEquilibria

INF = math.inf

KINDS = (
    "harmonic-forced",
    "power-law",
    "log",
    "ermakov",
    "plateau",
    "reduced-from-force",
    "custom",
)


def _fd_derivative(f: Callable, h_rel: float = 1e-5) -> Callable:
    """Central difference derivative with a step relative to |x|."""

    def df(x):
        x = np.asarray(x, dtype=float)
        h = h_rel * np.maximum(1.0, np.abs(x))
        return (f(x + h) - f(x - h)) / (2.0 * h)

    return df


@dataclass(frozen=True)
class Potential1D:
    """A C^2 potential on the open interval ``domain = (alpha, beta)``."""

    V: Callable
    dV: Callable
    d2V: Optional[Callable] = None
    domain: tuple = (-INF, INF)
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = self.domain
        if not lo < hi:
            raise DomainError(f"empty domain {self.domain}")
        if self.d2V is None:
            object.__setattr__(self, "d2V", _fd_derivative(self.dV))

    def __call__(self, x):
        return self.V(x)

    def eval(self, x):
        """Return ``(V, V', V'')`` at ``x``."""
        return self.V(x), self.dV(x), self.d2V(x)

    def contains(self, x) -> bool:
        lo, hi = self.domain
        return bool(lo < x < hi)

    def translated(self, shift: float) -> "Potential1D":
        """Potential ``W(x) = V(x + shift) - V(shift)`` with the origin moved to ``shift``."""
        level = float(self.V(shift))
        V, dV, d2V = self.V, self.dV, self.d2V
        lo, hi = self.domain
        return Potential1D(
            V=lambda x: V(np.asarray(x) + shift) - level,
            dV=lambda x: dV(np.asarray(x) + shift),
            d2V=lambda x: d2V(np.asarray(x) + shift),
            domain=(lo - shift, hi - shift),
            kind=self.kind,
            params={**self.params, "shift": shift},
        )


# ---------------------------------------------------------------------------
# closed-form potentials


def harmonic_forced(lam: float = 0.0, K: float = 0.0, domain=(-INF, INF)) -> Potential1D:
    """``V(x) = x^2/2 + lam*K*x``; the harmonic oscillator under constant forcing."""
    c = lam * K
    return Potential1D(
        V=lambda x: 0.5 * np.square(x) + c * np.asarray(x),
        dV=lambda x: np.asarray(x) + c,
        d2V=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        domain=tuple(domain),
        kind="harmonic-forced",
        params={"lambda": lam, "K": K},
    )


def power_law(a: float, K: float = -1.0, lam: float = 1.0) -> Potential1D:
    """``V(x) = x^2/2 + lam*K*x^(a+1)/(a+1)`` on ``(0, inf)``; the log form when ``a = -1``."""
    if a == -1:
        return log_potential(K, lam)
    c = lam * K
    b = a + 1.0
    return Potential1D(
        V=lambda x: 0.5 * np.square(x) + c * np.power(x, b) / b,
        dV=lambda x: np.asarray(x) + c * np.power(x, a),
        d2V=lambda x: 1.0 + c * a * np.power(x, a - 1.0),
        domain=(0.0, INF),
        kind="power-law",
        params={"a": a, "K": K, "lambda": lam},
    )


def log_potential(K: float = -1.0, lam: float = 1.0) -> Potential1D:
    """``V(x) = x^2/2 + lam*K*ln(x)``, the ``a = -1`` member of the power-law family."""
    c = lam * K
    return Potential1D(
        V=lambda x: 0.5 * np.square(x) + c * np.log(x),
        dV=lambda x: np.asarray(x) + c / np.asarray(x),
        d2V=lambda x: 1.0 - c / np.square(x),
        domain=(0.0, INF),
        kind="log",
        params={"a": -1.0, "K": K, "lambda": lam},
    )


def ermakov(c: float = 0.5, centered: bool = False) -> Potential1D:
    """Ermakov-Pinney well ``V(rho) = rho^2/2 + c/rho^2``.

    With ``centered=True`` the equilibrium ``rho* = (2c)^(1/4)`` is moved to the
    origin and the minimum value is subtracted.  The centered form is evaluated
    as ``(rho - rho*^2/rho)^2 / 2``, which avoids cancellation near the center.
    """
    if c <= 0:
        raise DomainError("ermakov requires c > 0")
    s = math.sqrt(2.0 * c)  # rho*^2
    if not centered:
        return Potential1D(
            V=lambda r: 0.5 * np.square(r) + c / np.square(r),
            dV=lambda r: np.asarray(r) - 2.0 * c / np.power(r, 3),
            d2V=lambda r: 1.0 + 6.0 * c / np.power(r, 4),
            domain=(0.0, INF),
            kind="ermakov",
            params={"c": c, "centered": False},
        )
    r_star = math.sqrt(s)

    def V(x):
        r = np.asarray(x) + r_star
        return 0.5 * np.square(r - s / r)

    def dV(x):
        r = np.asarray(x) + r_star
        return (r - s / r) * (1.0 + s / np.square(r))

    def d2V(x):
        r = np.asarray(x) + r_star
        return 1.0 + 3.0 * s * s / np.power(r, 4)

    return Potential1D(V, dV, d2V, domain=(-r_star, INF), kind="ermakov",
                       params={"c": c, "centered": True})


def normalized_power(a: float) -> Potential1D:
    """Power-law well rescaled to ``x* = 1`` and translated to the origin.

    ``V(x) = (x+1)^2/2 - (x+1)^(a+1)/(a+1) - 1/2 + 1/(a+1)`` (log form for
    ``a = -1``) on ``(-1, beta)`` where ``beta`` is the right end of the region
    below the left cap when ``|a| < 1`` and ``+inf`` when ``a <= -1``.
    """
    if a >= 1:
        raise DomainError("normalized power well needs a < 1")
    if a == -3:
        p = ermakov(0.5, centered=True)
        return replace(p, kind="power-law", params={"a": a, "normalized": True})
    if abs(a) < 1:
        beta = -1.0 + (2.0 / (1.0 + a)) ** (1.0 / (1.0 - a))
    else:
        beta = INF
    if a == -1:
        def V(x):
            x = np.asarray(x)
            return x + 0.5 * np.square(x) - np.log1p(x)
    else:
        b = a + 1.0

        def V(x):
            x = np.asarray(x)
            return x + 0.5 * np.square(x) - np.expm1(b * np.log1p(x)) / b

    def dV(x):
        r = np.asarray(x) + 1.0
        return r - np.power(r, a)

    def d2V(x):
        r = np.asarray(x) + 1.0
        return 1.0 - a * np.power(r, a - 1.0)

    kind = "log" if a == -1 else "power-law"
    return Potential1D(V, dV, d2V, domain=(-1.0, beta), kind=kind,
                       params={"a": a, "normalized": True})


def polynomial(coeffs: Sequence[float], domain=(-INF, INF)) -> Potential1D:
    """Polynomial potential with ascending coefficients, e.g. ``[0, 0, 0.5, 0, 0.25]``."""
    P = np.polynomial.Polynomial(coeffs)
    dP, d2P = P.deriv(1), P.deriv(2)
    return Potential1D(
        V=lambda x: P(np.asarray(x, dtype=float)),
        dV=lambda x: dP(np.asarray(x, dtype=float)),
        d2V=lambda x: d2P(np.asarray(x, dtype=float)),
        domain=tuple(domain),
        kind="custom",
        params={"coeffs": list(map(float, coeffs))},
    )


def plateau(gamma: float = 1.0, Gamma: float = 2.0) -> Potential1D:
    """C^2 well on ``(0, inf)`` whose critical set is the interval ``[gamma, Gamma]``.

    ``V' = -(gamma - x)^2`` left of the plateau, ``0`` on it and
    ``(x - Gamma)^2`` right of it; ``V = 0`` on the plateau.
    """
    if not 0 < gamma < Gamma:
        raise DomainError("plateau needs 0 < gamma < Gamma")

    def V(x):
        x = np.asarray(x, dtype=float)
        return np.where(x < gamma, (gamma - x) ** 3 / 3.0,
                        np.where(x > Gamma, (x - Gamma) ** 3 / 3.0, 0.0))

    def dV(x):
        x = np.asarray(x, dtype=float)
        return np.where(x < gamma, -((gamma - x) ** 2),
                        np.where(x > Gamma, (x - Gamma) ** 2, 0.0))

    def d2V(x):
        x = np.asarray(x, dtype=float)
        return np.where(x < gamma, 2.0 * (gamma - x),
                        np.where(x > Gamma, 2.0 * (x - Gamma), 0.0))

    return Potential1D(V, dV, d2V, domain=(0.0, INF), kind="plateau",
                       params={"gamma": gamma, "Gamma": Gamma})


def tabulated(x, V, dV) -> Potential1D:
    """Potential interpolated from samples ``(x, V, V')`` by a cubic Hermite spline."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x)
    x = x[order]
    if len(x) < 2 or np.any(np.diff(x) <= 0):
        raise DomainError("tabulated potential needs >= 2 distinct x samples")
    spline = CubicHermiteSpline(x, np.asarray(V, float)[order], np.asarray(dV, float)[order],
                                extrapolate=False)
    d1, d2 = spline.derivative(1), spline.derivative(2)
    return Potential1D(
        V=lambda t: spline(t), dV=lambda t: d1(t), d2V=lambda t: d2(t),
        domain=(float(x[0]), float(x[-1])), kind="custom", params={"table": len(x)},
    )


# ---------------------------------------------------------------------------
# families V_lambda(x) = x^2/2 + lambda*Phi(x)


@dataclass(frozen=True)
class PotentialFamily:
    """Family ``V_lambda(x) = x^2/2 + lambda*Phi(x)`` on ``(0, inf)``.

    ``phi`` is the derivative ``Phi'``; ``dphi`` its derivative (optional).
    ``scan`` bounds the geometric seed grid used to search for equilibria.
    """

    Phi: Callable
    phi: Callable
    dphi: Optional[Callable] = None
    lambda_range: tuple = (0.0, INF)
    scan: tuple = (1e-6, 1e6)
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def materialize(self, lam: float) -> Potential1D:
        lo, hi = self.lambda_range
        if not lo < lam < hi:
            raise DomainError(f"lambda={lam} outside {self.lambda_range}")
        Phi, phi = self.Phi, self.phi
        dphi = self.dphi or _fd_derivative(phi)
        return Potential1D(
            V=lambda x: 0.5 * np.square(x) + lam * Phi(x),
            dV=lambda x: np.asarray(x) + lam * phi(x),
            d2V=lambda x: 1.0 + lam * dphi(x),
            domain=(0.0, INF),
            kind=self.name,
            params={**self.params, "lambda": lam},
        )


def power_family(a: float, K: float = -1.0) -> PotentialFamily:
    """Family with ``phi(x) = K*x^a``; ``a = 0`` is the forced oscillator, ``a = -3`` Ermakov."""
    if a == -1:
        Phi = lambda x: K * np.log(x)
    else:
        Phi = lambda x: K * np.power(x, a + 1.0) / (a + 1.0)
    return PotentialFamily(
        Phi=Phi,
        phi=lambda x: K * np.power(x, a),
        dphi=lambda x: K * a * np.power(x, a - 1.0),
        name="power-law",
        params={"a": a, "K": K},
    )


def _smoothstep(t):
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def _smoothstep_integral(t):
    return t ** 4 * (2.5 + t * (-3.0 + t))


def _smoothstep_slope(t):
    return 30.0 * t * t * (1.0 - t) ** 2


def counterexample_family(n_min: int = -2, n_max: int = 4, margin: float = 0.1) -> PotentialFamily:
    """Family whose members are all 2*pi-isochronous yet which is not an isochronous family.

    ``phi = -3^n`` exactly on ``[6^n, 2*6^n]`` for ``n_min <= n <= n_max``,
    constant beyond the outer plateaus, joined by quintic smoothstep ramps
    placed strictly inside each gap (leaving ``margin`` of the gap flat on
    both sides), so ``phi`` is C^2 and monotone.
    """
    if n_min > n_max:
        raise DomainError("n_min must not exceed n_max")
    ns = list(range(n_min, n_max + 1))
    levels = [-(3.0 ** n) for n in ns]
    ramps = []  # (start, end, from_level, to_level)
    for n, lo_level, hi_level in zip(ns[:-1], levels[:-1], levels[1:]):
        left, right = 2.0 * 6.0 ** n, 6.0 ** (n + 1)
        gap = right - left
        ramps.append((left + margin * gap, right - margin * gap, lo_level, hi_level))

    # Piecewise description on (0, inf): (start, ramp-or-None, level, Phi(start)).
    segments = []
    x, Phi0 = 0.0, 0.0
    level = levels[0]
    for a, b, c0, c1 in ramps:
        segments.append((x, None, level, Phi0))
        Phi0 += level * (a - x)
        segments.append((a, (a, b, c0, c1), None, Phi0))
        Phi0 += c0 * (b - a) + (c1 - c0) * (b - a) * _smoothstep_integral(1.0)
        x, level = b, c1
    segments.append((x, None, level, Phi0))
    starts = [s[0] for s in segments]

    def _scalar(x, what):
        start, ramp, level, P = segments[bisect.bisect_right(starts, x) - 1]
        if ramp is None:
            return (P + level * (x - start), level, 0.0)[what]
        a, b, c0, c1 = ramp
        w = b - a
        t = (x - a) / w
        if what == 0:
            return P + c0 * (x - a) + (c1 - c0) * w * _smoothstep_integral(t)
        if what == 1:
            return c0 + (c1 - c0) * _smoothstep(t)
        return (c1 - c0) * _smoothstep_slope(t) / w

    def vec(what):
        def f(x):
            x = np.asarray(x, dtype=float)
            if x.ndim == 0:
                return _scalar(float(x), what)
            return np.array([_scalar(float(v), what) for v in x.ravel()]).reshape(x.shape)
        return f

    return PotentialFamily(
        Phi=vec(0), phi=vec(1), dphi=vec(2),
        scan=(min(1e-3, 0.1 * 6.0 ** n_min), 10.0 * 6.0 ** n_max),
        name="counterexample",
        params={"n_min": n_min, "n_max": n_max},
    )


# ---------------------------------------------------------------------------
# equilibria


@dataclass(frozen=True)
class EquilibriumSet:
    roots: list
    curvatures: list
    tags: list
    warnings: list = field(default_factory=list)

    def __len__(self):
        return len(self.roots)


def _tag(curv: float, eps: float = 1e-10) -> str:
    if curv > eps:
        return "center-candidate"
    if curv < -eps:
        return "saddle"
    return "degenerate"


def find_equilibria(p: Potential1D, scan=None, n_seeds: int = 512, tol: float = 1e-12,
                    geometric: bool = False) -> EquilibriumSet:
    """Locate the zeros of ``V'`` on ``scan`` by seed-grid sign changes refined with Brent's method."""
    if n_seeds < 2:
        raise ValueError("n_seeds must be >= 2")
    lo, hi = scan if scan is not None else p.domain
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise DomainError("scan interval must be finite")
    if lo < p.domain[0] or hi > p.domain[1]:
        raise DomainError(f"scan {scan} not inside domain {p.domain}")
    if geometric:
        if lo <= 0:
            raise DomainError("geometric seeding needs a positive scan interval")
        seeds = np.geomspace(lo, hi, n_seeds)
    else:
        seeds = np.linspace(lo, hi, n_seeds)
    # open domain: nudge seeds off the boundary
    seeds = seeds[(seeds > p.domain[0]) & (seeds < p.domain[1])]

    notes = []
    with np.errstate(all="ignore"):
        vals = np.array([float(p.dV(s)) for s in seeds])
    finite = np.isfinite(vals)
    for s in seeds[~finite]:
        notes.append(f"non-finite V' at seed {s!r}; skipped")
    xs, ys = seeds[finite], vals[finite]

    found = []
    for x, y in zip(xs, ys):
        if y == 0.0:
            found.append(float(x))
    for x0, x1, y0, y1 in zip(xs[:-1], xs[1:], ys[:-1], ys[1:]):
        if y0 * y1 < 0:
            r = optimize.brentq(lambda t: float(p.dV(t)), x0, x1, xtol=1e-300, maxiter=500)
            found.append(float(r))
    found.sort()

    roots = []
    for r in found:
        if roots and abs(r - roots[-1]) <= 10 * tol * max(1.0, abs(r)):
            continue
        roots.append(r)
    for r in roots:
        resid = abs(float(p.dV(r)))
        if resid > tol * max(1.0, abs(r)):
            notes.append(f"|V'({r!r})| = {resid:.3e} above tolerance")
    curv = [float(p.d2V(r)) for r in roots]
    return EquilibriumSet(roots, curv, [_tag(c) for c in curv], notes)


def family_equilibrium(f: PotentialFamily, lam: float, tol: float = 1e-12,
                       n_seeds: int = 4096) -> Optional[float]:
    """The equilibrium ``x(lam)`` solving ``x + lam*phi(x) = 0``, or ``None`` if there is none.

    Raises :class:`MultipleEquilibria` when the scan finds more than one root.
    """
    p = f.materialize(lam)
    eq = find_equilibria(p, scan=f.scan, n_seeds=n_seeds, tol=tol, geometric=True)
    if len(eq.roots) > 1:
        raise MultipleEquilibria(eq.roots)
    return eq.roots[0] if eq.roots else None


# ---------------------------------------------------------------------------
# central forces and the Clairaut reduction


@dataclass(frozen=True)
class CentralForce:
    """Planar central force ``r'' = -phi(|r|^2) r`` with angular momentum ``C``.

    Attraction means ``phi > 0``.  ``U`` is the radial potential with
    ``U'(r) = phi(r^2) r`` (used for energy bookkeeping only).
    """

    phi: Callable
    C: float = 1.0
    dphi: Optional[Callable] = None
    U: Optional[Callable] = None
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def with_C(self, C: float) -> "CentralForce":
        return replace(self, C=C)

    def radial_potential(self, r):
        if self.U is not None:
            return self.U(r)
        phi = self.phi
        # U(r) = 1/2 * int_1^{r^2} phi(eta) d eta
        return np.vectorize(lambda s: 0.5 * integrate.quad(phi, 1.0, s * s, limit=200)[0])(r)


def power_law_force(q: float, k: float = 1.0, C: float = 1.0) -> CentralForce:
    """``phi(eta) = k*eta^q``; ``q = 0`` is Hooke, ``q = -3/2`` Kepler (attractive for ``k > 0``)."""
    if q == -1:
        U = lambda r: k * np.log(r)
    else:
        U = lambda r: k * np.power(r, 2.0 * (q + 1.0)) / (2.0 * (q + 1.0))
    return CentralForce(
        phi=lambda e: k * np.power(e, q),
        C=C,
        dphi=lambda e: k * q * np.power(e, q - 1.0),
        U=U,
        kind="power-law",
        params={"q": q, "k": k},
    )


def hooke(k: float = 1.0, C: float = 1.0) -> CentralForce:
    return power_law_force(0.0, k, C)


def kepler(k: float = 1.0, C: float = 1.0) -> CentralForce:
    return power_law_force(-1.5, k, C)


def clairaut_reduce(force: CentralForce) -> Potential1D:
    """Reduced potential ``V(rho) = rho^2/2 + Phi(rho)/C^2`` with ``Phi'(rho) = -rho^-3 phi(rho^-2)``."""
    C = force.C
    if C == 0:
        raise DomainError("angular momentum must be nonzero")
    lam = 1.0 / (C * C)
    params = {"C": C, **force.params}
    if force.kind == "power-law":
        q, k = force.params["q"], force.params["k"]
        e = -3.0 - 2.0 * q
        if q == -1:
            Phi = lambda r: -k * np.log(r)
        else:
            Phi = lambda r: k * np.power(r, e + 1.0) / -(e + 1.0)
        return Potential1D(
            V=lambda r: 0.5 * np.square(r) + lam * Phi(r),
            dV=lambda r: np.asarray(r) - lam * k * np.power(r, e),
            d2V=lambda r: 1.0 - lam * k * e * np.power(r, e - 1.0),
            domain=(0.0, INF),
            kind="reduced-from-force",
            params=params,
        )

    phi = force.phi

    def dPhi(r):
        r = np.asarray(r, dtype=float)
        return -np.power(r, -3.0) * phi(np.power(r, -2.0))

    def Phi_scalar(r):
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, _ = integrate.quad(lambda s: float(dPhi(s)), 1.0, r, limit=200)
            except (integrate.IntegrationWarning, ZeroDivisionError, FloatingPointError) as exc:
                raise DomainError(f"Clairaut quadrature failed at rho={r}: {exc}") from exc
        if not math.isfinite(val):
            raise DomainError(f"non-integrable force term near rho={r}")
        return val

    def Phi(r):
        r = np.asarray(r, dtype=float)
        if r.ndim == 0:
            return Phi_scalar(float(r))
        return np.array([Phi_scalar(float(v)) for v in r.ravel()]).reshape(r.shape)

    if force.dphi is not None:
        dphi = force.dphi

        def d2Phi(r):
            r = np.asarray(r, dtype=float)
            eta = np.power(r, -2.0)
            return 3.0 * np.power(r, -4.0) * phi(eta) + 2.0 * np.power(r, -6.0) * dphi(eta)
    else:
        d2Phi = _fd_derivative(dPhi)

    return Potential1D(
        V=lambda r: 0.5 * np.square(r) + lam * Phi(r),
        dV=lambda r: np.asarray(r) + lam * dPhi(r),
        d2V=lambda r: 1.0 + lam * d2Phi(r),
        domain=(0.0, INF),
        kind="reduced-from-force",
        params=params,
    )


# ---------------------------------------------------------------------------
# declarative configuration


def _domain(spec, default):
    d = spec.get("domain")
    if d is None:
        return default
    lo, hi = d
    return (-INF if lo is None else float(lo), INF if hi is None else float(hi))


def force_from_config(spec: dict) -> CentralForce:
    kind = spec.get("kind")
    C = float(spec.get("C", 1.0))
    k = float(spec.get("k", 1.0))
    if kind == "power-law":
        return power_law_force(float(spec["q"]), k, C)
    if kind == "hooke":
        return hooke(k, C)
    if kind == "kepler":
        return kepler(k, C)
    raise ValueError(f"unknown force kind {kind!r}")


def potential_from_config(spec: dict) -> Potential1D:
    """Build a potential from a JSON-style mapping such as ``{"kind": "power-law", "a": -3, "K": -1}``."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("potential spec must be an object with a 'kind' field")
    kind = spec["kind"]
    lam = float(spec.get("lambda", 1.0))
    if kind in ("harmonic", "harmonic-forced"):
        return harmonic_forced(lam if "lambda" in spec else 0.0, float(spec.get("K", 0.0)),
                               domain=_domain(spec, (-INF, INF)))
    if kind == "power-law":
        if spec.get("normalized"):
            return normalized_power(float(spec["a"]))
        return power_law(float(spec["a"]), float(spec.get("K", -1.0)), lam)
    if kind == "log":
        return log_potential(float(spec.get("K", -1.0)), lam)
    if kind == "ermakov":
        return ermakov(float(spec.get("c", 0.5)), bool(spec.get("centered", False)))
    if kind == "plateau":
        return plateau(float(spec.get("gamma", 1.0)), float(spec.get("Gamma", 2.0)))
    if kind == "polynomial":
        return polynomial(spec["coeffs"], domain=_domain(spec, (-INF, INF)))
    if kind == "custom":
        return tabulated(spec["x"], spec["V"], spec["dV"])
    if kind == "reduced-from-force":
        return clairaut_reduce(force_from_config(spec["force"]))
    raise ValueError(f"unknown potential kind {kind!r}")
