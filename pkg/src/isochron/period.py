"""Period function of a 1-D center by singular quadrature.

The minimal period of the orbit through ``(x0, 0)`` is

    Theta(x0) = sqrt(2) * int_A^x0 d xi / sqrt(V(x0) - V(xi)),

with ``A`` the conjugate turning point.  The integral is split at the
equilibrium ``x*`` and on each half the substitution
``xi = x* + (x_t - x*) sin(theta)`` maps the turning point ``x_t`` to
``theta = pi/2`` where ``cos(theta)`` cancels the inverse square-root
singularity.  Each half uses its own turning level ``V(x_t)`` so that the
endpoint is an exact zero of the energy gap even when ``A`` is only known to
rounding accuracy.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, optimize

from .errors import (IsochronError, NoTurningPoint, NotACenter,
                     SingularQuadratureFailure)
from .potentials import Potential1D

ROOT_TOL = 1e-12
QUAD_RTOL = 1e-9

_GAUSS = {}


def _gauss(n):
    if n not in _GAUSS:
        t, w = leggauss(n)
        # map [-1, 1] -> [0, pi/2]
        _GAUSS[n] = (0.25 * np.pi * (t + 1.0), 0.25 * np.pi * w)
    return _GAUSS[n]


@dataclass(frozen=True)
class PeriodSample:
    x0: float
    turning: float
    theta: float
    est_error: float
    diagnostic: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.diagnostic is None


def turning_point(p: Potential1D, x0: float, x_star: float, tol: float = ROOT_TOL,
                  max_expand: int = 200) -> float:
    """Conjugate turning point ``A`` with ``V(A) = V(x0)`` on the other side of ``x_star``."""
    if x0 == x_star:
        raise ValueError("x0 must differ from x_star")
    E = float(p.V(x0))
    if not E > float(p.V(x_star)):
        raise ValueError("V(x0) must exceed V(x_star)")
    side = -1.0 if x0 > x_star else 1.0
    bound = p.domain[0] if side < 0 else p.domain[1]
    step = abs(x0 - x_star)

    def gap(t):
        with np.errstate(all="ignore"):
            return float(p.V(t)) - E

    prev = x_star
    for k in range(max_expand):
        trial = x_star + side * step * 2.0 ** k
        if math.isfinite(bound) and (trial - bound) * side >= 0:
            trial = bound + 0.5 * (prev - bound)
        if trial == prev or not math.isfinite(trial):
            break
        g = gap(trial)
        while not math.isfinite(g):
            # overflow next to a singular boundary: pull back toward the last good point
            trial = 0.5 * (trial + prev)
            g = gap(trial)
        if g >= 0:
            a, b = sorted((prev, trial))
            return float(optimize.brentq(gap, a, b, xtol=tol, rtol=4 * np.finfo(float).eps,
                                         maxiter=500))
        prev = trial
    raise NoTurningPoint(
        f"level V(x0)={E!r} not reached for x on the far side of x*={x_star!r}"
    )


_GAP_NODES = leggauss(24)


def _energy_gap(p: Potential1D, x_t: float, L: float, th: np.ndarray):
    """``V(x_t) - V(xi)`` at ``xi = x_t - L (1 - sin th)``.

    The distance to the turning point is formed as ``2 L sin^2((pi/2 - th)/2)``
    (no rounding of ``xi`` against ``x_t``).  Where ``V(x_t) - V(xi)`` would
    cancel, the gap is taken as the integral of ``V'`` over ``[xi, x_t]``.
    """
    d = 2.0 * L * np.square(np.sin(0.5 * (0.5 * np.pi - th)))  # signed x_t - xi
    Vt = float(p.V(x_t))
    Vxi = np.asarray(p.V(x_t - d), dtype=float)
    gap = Vt - Vxi
    # direct difference is kept where it loses at most a few digits
    bad = np.abs(gap) < 0.1 * (abs(Vt) + np.abs(Vxi))
    if np.any(bad):
        t, w = _GAP_NODES
        db = d[bad]
        nodes = x_t - db[:, None] * (0.5 * (1.0 + t))[None, :]
        gap[bad] = 0.5 * db * (np.asarray(p.dV(nodes), dtype=float) @ w)
    return gap


def _half_integral(p: Potential1D, x_star: float, x_t: float, n: int):
    """``int_{x*}^{x_t} d xi / sqrt(V(x_t) - V(xi))`` with the sine substitution."""
    th, w = _gauss(n)
    L = x_t - x_star
    gap = _energy_gap(p, x_t, L, th)
    with np.errstate(all="ignore"):
        f = abs(L) * np.cos(th) / np.sqrt(gap)
    if not np.all(np.isfinite(f)):
        bad = (x_star + L * np.sin(th))[~np.isfinite(f)][0]
        raise SingularQuadratureFailure(
            f"energy gap vanishes inside the orbit near xi={bad!r} (interior critical level)"
        )
    return float(np.dot(w, f))


def _half_adaptive(p, x_star, x_t, rtol):
    """Adaptive Gauss-Kronrod fallback on the substituted integrand."""
    L = x_t - x_star

    def f(th):
        if th >= 0.5 * math.pi:
            return math.sqrt(2.0 * abs(L) / abs(float(p.dV(x_t))))
        gap = float(_energy_gap(p, x_t, L, np.array([th]))[0])
        if not gap > 0:
            raise SingularQuadratureFailure(f"energy gap vanishes near xi={x_star + L * math.sin(th)!r}")
        return abs(L) * math.cos(th) / math.sqrt(gap)

    val, err = integrate.quad(f, 0.0, 0.5 * math.pi, epsrel=rtol, epsabs=0.0, limit=2000)
    return val, err


def _half(p, x_star, x_t, rtol, n0=32, n_max=4096):
    prev = _half_integral(p, x_star, x_t, n0)
    n = n0
    while n < n_max:
        n *= 2
        cur = _half_integral(p, x_star, x_t, n)
        err = abs(cur - prev)
        if err <= rtol * abs(cur):
            return cur, err
        prev = cur
    val, err = _half_adaptive(p, x_star, x_t, rtol)
    if not (math.isfinite(val) and err <= rtol * abs(val) * 10):
        raise SingularQuadratureFailure(
            f"quadrature did not converge on [{x_star}, {x_t}] (est. error {err:.2e})"
        )
    return val, err


def period(p: Potential1D, x0: float, x_star: float, tol: float = QUAD_RTOL,
           root_tol: float = ROOT_TOL) -> PeriodSample:
    """Minimal period of the orbit of ``x'' = -V'(x)`` released at rest from ``x0``."""
    if float(p.d2V(x_star)) < 0:
        raise NotACenter(f"V''({x_star}) < 0")
    A = turning_point(p, x0, x_star, root_tol)
    i1, e1 = _half(p, x_star, x0, tol)
    i2, e2 = _half(p, x_star, A, tol)
    theta = math.sqrt(2.0) * (i1 + i2)
    return PeriodSample(float(x0), A, theta, math.sqrt(2.0) * (e1 + e2))


def linear_period(p: Potential1D, x_star: float) -> float:
    """Period of the linearized motion, ``2*pi / sqrt(V''(x*))``."""
    k = float(p.d2V(x_star))
    if not k > 0:
        raise NotACenter(f"V''({x_star}) = {k} is not positive")
    return 2.0 * math.pi / math.sqrt(k)


def period_curve(p: Potential1D, x_star: float, amplitudes, tol: float = QUAD_RTOL,
                 jobs: int = 1) -> list:
    """``period`` over a grid of starting points; failed points carry a diagnostic and NaN theta."""

    def one(x0):
        try:
            return period(p, float(x0), x_star, tol)
        except (IsochronError, ValueError) as exc:
            return PeriodSample(float(x0), math.nan, math.nan, math.nan,
                                f"{type(exc).__name__}: {exc}")

    amplitudes = list(amplitudes)
    if jobs > 1 and len(amplitudes) > 1:
        with ThreadPoolExecutor(jobs) as ex:
            return list(ex.map(one, amplitudes))
    return [one(a) for a in amplitudes]


@dataclass(frozen=True)
class IsochronyVerdict:
    isochronous: bool
    max_deviation: float
    linear_period: float
    deviations: list = field(default_factory=list)
    samples: list = field(default_factory=list)

    def __bool__(self):
        return self.isochronous


def is_isochronous(p: Potential1D, x_star: float, amplitudes, rel_tol: float = 1e-6,
                   tol: float = QUAD_RTOL) -> IsochronyVerdict:
    """Compare ``Theta(x0)`` with the linearized period over ``amplitudes``."""
    T_lin = linear_period(p, x_star)
    samples = [period(p, float(x0), x_star, tol) for x0 in amplitudes]
    dev = [abs(s.theta - T_lin) / T_lin for s in samples]
    worst = max(dev) if dev else 0.0
    return IsochronyVerdict(worst <= rel_tol, worst, T_lin, dev, samples)


def samples_to_csv(samples) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x0", "turning", "theta", "est_error"])
    for s in samples:
        w.writerow([repr(float(s.x0)), repr(float(s.turning)), repr(float(s.theta)),
                    repr(float(s.est_error))])
    return buf.getvalue()
