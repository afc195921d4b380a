"""Urabe's correspondence between isochronous wells and odd functions ``S`` with ``|S| < 1``.

For a well centered at the origin the map ``X(x) = sign(x) sqrt(2 V(x))``
straightens orbits into circles of the ``(X, y)`` plane.  An isochronous
potential is then encoded by ``dX/dx = (2 pi / T) / (1 + S(X))`` together with
``V = X^2 / 2``; this module extracts ``S`` from a potential, rebuilds the
potential from ``S`` and provides the circular-average and endpoint checks
that characterize isochrony.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicSpline

from .errors import (BoundViolation, DomainExceeded, InsufficientSamples,
                     NotACenteredWell, StepCollapse)
from .potentials import Potential1D

X_MAX_DEFAULT = 10.0


@dataclass(frozen=True)
class UrabeMap:
    """Forward map ``X(x)``, its inverse and the angular speed ``omega(X) = V'(x(X)) / X``."""

    potential: Potential1D
    v_bar: float
    omega0: float

    @property
    def X_cap(self) -> float:
        return math.sqrt(2.0 * self.v_bar)

    def X(self, x):
        x = np.asarray(x, dtype=float)
        return np.sign(x) * np.sqrt(2.0 * np.maximum(self.potential.V(x), 0.0))

    def _inverse_scalar(self, X: float) -> float:
        if X == 0.0:
            return 0.0
        if abs(X) >= self.X_cap:
            raise DomainExceeded(f"|X|={abs(X)} outside J (cap {self.X_cap})")
        lo, hi = self.potential.domain
        bound = hi if X > 0 else lo
        side = 1.0 if X > 0 else -1.0
        target = 0.5 * X * X
        V = self.potential.V

        def g(t):
            with np.errstate(all="ignore"):
                return float(V(t)) - target

        prev, step = 0.0, abs(X) / max(self.omega0, 1e-300)
        for k in range(400):
            trial = side * step * 2.0 ** k
            if math.isfinite(bound) and (trial - bound) * side >= 0:
                trial = bound + 0.5 * (prev - bound)
            if trial == prev:
                break
            val = g(trial)
            while not math.isfinite(val):
                trial = 0.5 * (trial + prev)
                val = g(trial)
            if val >= 0:
                a, b = sorted((prev, trial))
                return float(optimize.brentq(g, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                                             maxiter=500))
            prev = trial
        raise DomainExceeded(f"no x with X(x) = {X}")

    def x_of_X(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 0:
            return self._inverse_scalar(float(X))
        return np.array([self._inverse_scalar(float(v)) for v in X.ravel()]).reshape(X.shape)

    def omega(self, X):
        """Angular speed on the circle of radius ``|X|``; ``omega(0) = sqrt(V''(0))``."""
        X = np.asarray(X, dtype=float)
        scale = max(1.0, self.X_cap if math.isfinite(self.X_cap) else 1.0)
        out = np.empty_like(X)
        flat = X.ravel()
        res = out.ravel()
        for i, v in enumerate(flat):
            if abs(v) <= 1e-12 * scale:
                res[i] = self.omega0
            else:
                res[i] = float(self.potential.dV(self._inverse_scalar(float(v)))) / v
        return out if X.ndim else float(out)


def _sample_domain(p: Potential1D, n: int = 200):
    lo, hi = p.domain
    lo = max(lo, -1e3)
    hi = min(hi, 1e3)
    t = np.linspace(0.0, 1.0, n + 2)[1:-1]
    left = lo * (1 - t) if lo < 0 else np.array([])
    right = hi * t if hi > 0 else np.array([])
    return np.concatenate([left, right])


def _cap(p: Potential1D) -> float:
    """Smaller of the two end limits of V (``inf`` when V blows up at an end)."""
    vals = []
    for bound, side in zip(p.domain, (-1.0, 1.0)):
        if math.isfinite(bound):
            xs = bound - side * np.abs(bound if bound else 1.0) * 10.0 ** -np.arange(4.0, 15.0)
        else:
            xs = side * 10.0 ** np.arange(1.0, 9.0)
        with np.errstate(all="ignore"):
            est = _limit(np.asarray(p.V(xs), dtype=float))
        vals.append(est.extrapolated if math.isfinite(est.extrapolated) else math.inf)
    return min(vals)


def forward_map(p: Potential1D, x_star: Optional[float] = None, v_bar: Optional[float] = None) -> UrabeMap:
    """Build the Urabe map of ``p``; a nonzero ``x_star`` translates the center to 0 first."""
    if x_star is not None and x_star != 0.0:
        p = p.translated(x_star)
    if not p.contains(0.0):
        raise NotACenteredWell("0 must lie inside the domain")
    V0, dV0, d2V0 = (float(v) for v in p.eval(0.0))
    if abs(V0) > 1e-12 or abs(dV0) > 1e-10:
        raise NotACenteredWell(f"need V(0)=V'(0)=0, got V(0)={V0}, V'(0)={dV0}")
    xs = _sample_domain(p)
    with np.errstate(all="ignore"):
        prod = xs * p.dV(xs)
    bad = xs[~(prod > 0)]
    if bad.size:
        raise NotACenteredWell(f"x V'(x) > 0 fails at x={bad[0]!r}")
    if not d2V0 > 0:
        raise NotACenteredWell("V''(0) must be positive")
    if v_bar is None:
        v_bar = _cap(p)
    return UrabeMap(p, v_bar, math.sqrt(d2V0))


@dataclass
class UrabeData:
    """Odd function ``S`` on ``J = (-sqrt(2 v_bar), sqrt(2 v_bar))`` together with the period ``T``."""

    T: float
    v_bar: float
    X: np.ndarray = field(default_factory=lambda: np.zeros(0))
    S_samples: np.ndarray = field(default_factory=lambda: np.zeros(0))
    S_func: Optional[Callable] = None
    provenance: str = "user-supplied"
    odd_residual: Optional[float] = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.S_samples = np.asarray(self.S_samples, dtype=float)
        self._spline = None
        if self.S_func is None:
            if self.X.size < 4:
                raise InsufficientSamples("sampled S needs at least 4 points")
            order = np.argsort(self.X)
            self.X, self.S_samples = self.X[order], self.S_samples[order]
            self._spline = CubicSpline(self.X, self.S_samples)

    @property
    def J(self):
        c = math.sqrt(2.0 * self.v_bar)
        return (-c, c)

    @property
    def X_range(self):
        if self.S_func is not None:
            return self.J
        return (float(self.X[0]), float(self.X[-1]))

    def S(self, X):
        if self.S_func is not None:
            return self.S_func(X)
        return self._spline(X)

    def dS(self, X):
        if self.S_func is not None:
            h = 1e-6
            return (self.S_func(np.asarray(X) + h) - self.S_func(np.asarray(X) - h)) / (2 * h)
        return self._spline(X, 1)

    def check(self, tol: float = 1e-9) -> None:
        """Raise :class:`BoundViolation` unless ``|S| < 1`` on the samples and ``S(0) = 0``."""
        S = self.S_samples if self.S_func is None else self.S(np.linspace(*self._probe_range(), 201))
        if np.any(np.abs(S) >= 1.0):
            raise BoundViolation(f"sup|S| = {np.max(np.abs(S)):.6g} >= 1")
        if abs(float(self.S(0.0))) > tol:
            raise BoundViolation(f"S(0) = {float(self.S(0.0))} != 0")

    def _probe_range(self):
        lo, hi = self.X_range
        lo = max(lo, -X_MAX_DEFAULT)
        hi = min(hi, X_MAX_DEFAULT)
        return 0.999 * lo, 0.999 * hi

    def to_json(self) -> str:
        X, S = self.X, self.S_samples
        if self.S_func is not None and X.size == 0:
            X = np.linspace(*self._probe_range(), 101)
            S = np.asarray(self.S(X), dtype=float)
        doc = {
            "T": self.T,
            "v_bar": None if math.isinf(self.v_bar) else self.v_bar,
            "samples": [[float(a), float(b)] for a, b in zip(X, S)],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "UrabeData":
        doc = json.loads(text)
        v_bar = math.inf if doc.get("v_bar") is None else float(doc["v_bar"])
        pts = np.asarray(doc["samples"], dtype=float).reshape(-1, 2)
        return cls(float(doc["T"]), v_bar, pts[:, 0], pts[:, 1], provenance="user-supplied")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["X", "S"])
        for a, b in zip(self.X, self.S_samples):
            w.writerow([repr(float(a)), repr(float(b))])
        return buf.getvalue()


def graded_grid(X_cap: float, n: int = 2001) -> np.ndarray:
    """Symmetric grid on ``(-X_cap, X_cap)`` clustered toward both ends (sine spacing)."""
    t = np.linspace(-1.0, 1.0, n + 2)[1:-1]
    return X_cap * np.sin(0.5 * np.pi * t)


def extract_S(p: Potential1D, T: float, grid=None, X_grid=None, n: int = 2001,
              X_max: float = X_MAX_DEFAULT, umap: Optional[UrabeMap] = None) -> UrabeData:
    """Sample ``S(X(x)) = -1 + (2 pi / T) sqrt(2V(x)) / V'(x) sign(x)``.

    ``grid`` gives x-locations; otherwise ``X_grid`` (default: a graded
    symmetric grid on J, truncated at ``X_max`` when J is unbounded) is pulled
    back through the inverse map, which makes the oddness check exact in X.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    umap = umap or forward_map(p)
    p = umap.potential
    if grid is not None:
        x = np.asarray(grid, dtype=float)
        x = x[x != 0.0]
        X = umap.X(x)
    else:
        if X_grid is None:
            cap = min(umap.X_cap, X_max)
            X_grid = graded_grid(0.999 * cap if math.isfinite(umap.X_cap) and umap.X_cap <= X_max
                                 else cap, n)
        X = np.asarray(X_grid, dtype=float)
        X = X[X != 0.0]
        x = umap.x_of_X(X)
    with np.errstate(all="ignore"):
        S = -1.0 + (2.0 * math.pi / T) * np.sqrt(2.0 * p.V(x)) / p.dV(x) * np.sign(x)
    if not np.all(np.isfinite(S)):
        raise BoundViolation("non-finite S sample")
    if np.any(np.abs(S) >= 1.0):
        i = int(np.argmax(np.abs(S)))
        raise BoundViolation(f"|S| = {abs(S[i]):.6g} >= 1 at X={float(X[i])!r}: not {T}-isochronous")
    X = np.append(X, 0.0)
    S = np.append(S, 0.0)
    order = np.argsort(X)
    X, S = X[order], S[order]

    # oddness on mirrored pairs
    odd = None
    Xs = np.round(X, 13)
    pos = {v: s for v, s in zip(Xs, S) if v > 0}
    pairs = [abs(pos[-v] + s) for v, s in zip(Xs, S) if v < 0 and -v in pos]
    if pairs:
        odd = float(max(pairs))
    return UrabeData(T, umap.v_bar, X, S, provenance="extracted", odd_residual=odd)


@dataclass(frozen=True)
class MembershipVerdict:
    member: bool
    u0: float
    tail: list
    reason: str = ""

    def __bool__(self):
        return self.member


def urabe_membership(u: Callable, tol: float = 1e-2, x_min: float = 1e-9, x_max: float = 0.5,
                     n: int = 25, grid=None) -> MembershipVerdict:
    """Numerical test of ``u in U(I)``: ``u(0) = 0``, continuity at 0 and ``x u'(x) -> 0``.

    Both one-sided sequences ``|u(x_k) - u(0)|`` and ``|x_k u'(x_k)|`` along a
    geometric grid accumulating at 0 must be non-increasing over their tails
    and end below ``tol``.
    """
    xs = np.geomspace(x_max, x_min, n) if grid is None else np.asarray(sorted(set(np.abs(grid)), reverse=True), float)
    xs = xs[xs > 0]
    if xs.size < 6 or xs.min() > 1e-6:
        raise InsufficientSamples("need >= 6 geometric samples reaching 1e-6")
    u0 = float(u(0.0))
    if abs(u0) > tol:
        return MembershipVerdict(False, u0, [], "u(0) != 0")
    tails = []
    for side in (1.0, -1.0):
        x = side * xs
        h = 1e-3 * xs
        du = (np.asarray(u(x + h), float) - np.asarray(u(x - h), float)) / (2 * h)
        jump = np.abs(np.asarray(u(x), float) - u0)
        xdu = np.abs(x * du)
        for name, seq in (("continuity", jump), ("x u'", xdu)):
            tail = seq[-5:]
            decreasing = np.all(np.diff(tail) <= 1e-12 + 1e-9 * tail[:-1])
            tails.append(float(tail[-1]))
            if not (decreasing and tail[-1] <= tol):
                return MembershipVerdict(False, u0, tails, f"{name} fails on side {side:+.0f}")
    return MembershipVerdict(True, u0, tails)


def circular_average(f: Callable, r: float, m: int = 64, v_bar: float = math.inf) -> float:
    """``int_0^{2 pi} f(r cos theta) d theta`` by the m-point trapezoidal rule."""
    if m < 16:
        raise ValueError("need m >= 16 nodes")
    if abs(r) >= math.sqrt(2.0 * v_bar):
        raise DomainExceeded(f"r={r} outside J")
    th = 2.0 * math.pi * np.arange(m) / m
    vals = np.asarray(f(r * np.cos(th)), dtype=float)
    if vals.ndim == 0:
        vals = np.full(m, float(vals))
    return float(2.0 * math.pi * np.mean(vals))


@dataclass(frozen=True)
class AveragesVerdict:
    isochronous: bool
    radii: list
    theta: list
    tau: list
    T0: float
    max_deviation: float

    def __bool__(self):
        return self.isochronous


def isochronicity_by_averages(p: Potential1D, radii, tol: float = 1e-6, m: int = 128,
                              umap: Optional[UrabeMap] = None) -> AveragesVerdict:
    """``Theta(r) = int dtheta / omega(r cos theta)`` and the even-part residual ``tau(r)``.

    ``tau_even(X) = (pi/T)(u(X) + u(-X))`` with ``u = 1/omega - T/(2 pi)``; since
    the odd part averages to zero, ``Theta(r) - T = (T / 2 pi) tau(r)``.
    """
    umap = umap or forward_map(p)
    T0 = 2.0 * math.pi / umap.omega0
    th = 2.0 * math.pi * np.arange(m) / m
    thetas, taus = [], []
    for r in radii:
        if abs(r) >= umap.X_cap:
            raise DomainExceeded(f"r={r} outside J")
        Xn = r * np.cos(th)
        inv = 1.0 / umap.omega(Xn)
        u = inv - T0 / (2 * math.pi)
        # cos(theta + pi) = -cos(theta): the mirrored node is a shift by m/2
        tau_even = (math.pi / T0) * (u + np.roll(u, m // 2))
        thetas.append(float(2 * math.pi * np.mean(inv)))
        taus.append(float(2 * math.pi * np.mean(tau_even)))
    dev = max((abs(t - T0) / T0 for t in thetas), default=0.0)
    return AveragesVerdict(dev <= tol, list(map(float, radii)), thetas, taus, T0, dev)


def reconstruct_potential(s: UrabeData, X_max: float = X_MAX_DEFAULT, rtol: float = 1e-12,
                          atol: float = 1e-13, collapse_eps: float = 1e-12) -> Potential1D:
    """Integrate ``dX/dx = (2 pi / T) / (1 + S(X))``, ``X(0) = 0``, and return ``V = X^2 / 2``.

    The integration runs in both directions until ``X`` reaches the end of
    the J interval (or of the sampled range, or ``X_max`` when J is unbounded).
    """
    k = 2.0 * math.pi / s.T
    lo, hi = s.X_range
    lo, hi = max(lo, -X_max), min(hi, X_max)
    if s.S_func is None:
        S_probe = s.S_samples[(s.X >= lo) & (s.X <= hi)]
        if np.any(1.0 + S_probe <= collapse_eps):
            raise StepCollapse("1 + S vanishes on the sampled range")
    else:
        lo, hi = 0.999999 * lo, 0.999999 * hi

    def rhs(x, X):
        d = 1.0 + float(s.S(X[0]))
        if d <= collapse_eps:
            raise StepCollapse(f"1 + S(X) = {d} at X={X[0]!r}")
        return [k / d]

    sols = {}
    for sign, cap in ((1.0, hi), (-1.0, lo)):
        ev = lambda x, X, cap=cap: X[0] - cap
        ev.terminal = True
        span = 2.0 * abs(cap) / k * 1.01 + 1.0
        sol = integrate.solve_ivp(rhs, (0.0, sign * span), [0.0], method="DOP853",
                                  rtol=rtol, atol=atol, dense_output=True, events=ev)
        if sol.status < 0:
            raise StepCollapse(sol.message)
        end = float(sol.t_events[0][0]) if sol.t_events[0].size else float(sol.t[-1])
        sols[sign] = (sol.sol, end)

    (pos, beta), (neg, alpha) = sols[1.0], sols[-1.0]

    def Xfun(x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, pos(np.clip(x, 0.0, beta))[0], neg(np.clip(x, alpha, 0.0))[0])

    def V(x):
        return 0.5 * np.square(Xfun(x))

    def dV(x):
        X = Xfun(x)
        return X * k / (1.0 + s.S(X))

    def d2V(x):
        X = Xfun(x)
        g = k / (1.0 + s.S(X))
        dg = -k * s.dS(X) / np.square(1.0 + s.S(X))
        return g * g + X * dg * g

    return Potential1D(V, dV, d2V, domain=(alpha, beta), kind="custom",
                       params={"reconstructed": True, "T": s.T})


@dataclass(frozen=True)
class LimitEstimate:
    last: float
    extrapolated: float
    uncertainty: float
    oscillating: bool
    sequence: list

    @property
    def lower(self):
        return self.extrapolated - self.uncertainty

    @property
    def upper(self):
        return self.extrapolated + self.uncertainty


def _limit(seq) -> LimitEstimate:
    seq = [float(v) for v in seq if math.isfinite(v)]
    if len(seq) < 3:
        v = seq[-1] if seq else math.nan
        return LimitEstimate(v, v, math.inf, False, seq)
    f1, f2, f3 = seq[-3:]
    d1, d2 = f2 - f1, f3 - f2
    diffs = np.diff(seq[-5:])
    oscillating = bool(np.any(diffs[:-1] * diffs[1:] < 0)) and abs(d2) > 1e-9 * max(1.0, abs(f3))
    if d1 == d2 == 0.0:
        return LimitEstimate(f3, f3, 0.0, False, seq)
    if d1 * d2 > 0 and abs(d2) >= abs(d1):
        # not contracting: the sequence diverges
        return LimitEstimate(f3, math.copysign(math.inf, d2), math.inf, False, seq)
    denom = d2 - d1
    extrap = f3 - d2 * d2 / denom if denom != 0 and not oscillating else f3
    unc = abs(extrap - f3) + (abs(d2) if oscillating else 0.0) + 1e-12 * max(1.0, abs(f3))
    return LimitEstimate(f3, extrap, unc, oscillating, seq)


@dataclass(frozen=True)
class EndpointDiagnostic:
    alpha_limit: LimitEstimate
    beta_limit: LimitEstimate
    sum1: float
    sum2: float
    target: float
    deviation: float


def _approach(bound: float, n: int, side: float):
    k = np.arange(1, n + 1)
    if math.isfinite(bound):
        return bound * (1.0 - 10.0 ** (-k.astype(float)))
    return side * 10.0 ** (k.astype(float) / 1.0)


def endpoint_diagnostic(p: Potential1D, T: float, n: int = 8, umap: Optional[UrabeMap] = None) -> EndpointDiagnostic:
    """Limits of ``sqrt(2V)/|V'|`` at both domain ends and the two cross-sums (target ``T/pi``)."""
    umap = umap or forward_map(p)
    p = umap.potential
    lo, hi = p.domain
    res = []
    for bound, side in ((lo, -1.0), (hi, 1.0)):
        xs = _approach(bound, n, side)
        with np.errstate(all="ignore"):
            vals = np.sqrt(2.0 * p.V(xs)) / np.abs(p.dV(xs))
        res.append(_limit(vals))
    a, b = res
    if a.oscillating or b.oscillating:
        s1 = a.upper + b.lower
        s2 = a.lower + b.upper
    else:
        s1 = s2 = a.extrapolated + b.extrapolated
    target = T / math.pi
    dev = max(abs(s1 - target), abs(s2 - target))
    return EndpointDiagnostic(a, b, s1, s2, target, dev)


def s_integral_identity(s: UrabeData, umap: UrabeMap, x_probe: float) -> float:
    """``|int_0^{X(x_probe)} (1 + S) dX - (2 pi / T) x_probe|``."""
    if x_probe == 0:
        return 0.0
    Xp = float(umap.X(x_probe))
    if s.S_func is None:
        val = Xp + float(s._spline.integrate(0.0, Xp))
    else:
        val, _ = integrate.quad(lambda X: 1.0 + float(s.S(X)), 0.0, Xp, epsabs=1e-14, epsrel=1e-13, limit=200)
    return abs(val - 2.0 * math.pi / s.T * x_probe)
