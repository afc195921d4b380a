"""Isochronous families ``x^2/2 + lambda Phi(x)`` and the numerical Bertrand experiment."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, IsochronError
from .orbits import angular_period, commensurability
from .period import is_isochronous, linear_period
from .potentials import (PotentialFamily, clairaut_reduce, family_equilibrium,
                         normalized_power, power_law_force)
from .urabe import endpoint_diagnostic

DEFAULT_Q_GRID = (-1.75, -1.5, -1.25, -1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5)
DEFAULT_C_GRID = (1.0, 2.0)
DEFAULT_AMP_GRID = (0.01, 0.1, 0.2, 0.35, 0.5)


def exponent_from_period(T: float) -> float:
    """Exponent ``a = 1 - (2 pi / T)^2`` of the only possible power law ``phi = K x^a``."""
    if not T > 0:
        raise ValueError("T must be positive")
    return 1.0 - (2.0 * math.pi / T) ** 2


def period_from_exponent(a: float) -> float:
    if not a < 1:
        raise DomainError("a must be < 1")
    return 2.0 * math.pi / math.sqrt(1.0 - a)


@dataclass(frozen=True)
class FamilyVerdict:
    kind: str  # harmonic-type | ermakov-type | not-isochronous | no-equilibria
    a: float
    K: float
    T: float
    a_fit: float = math.nan
    evidence: list = field(default_factory=list)  # (lambda, x(lambda), T(lambda), max amplitude deviation)
    T_spread: float = math.nan


def classify_family(f: PotentialFamily, lambda_grid, amp_rel_grid, tol: float = 1e-6,
                    kind_tol: float = 1e-6) -> FamilyVerdict:
    """Decide whether ``f`` is one of the two isochronous families and recover ``(a, K)``.

    For each ``lambda`` with an equilibrium the period is checked for
    constancy over ``x0 = x(lambda)(1 + amp)``, and ``T(lambda)`` for constancy
    over ``lambda``; ``phi`` is fitted against ``K x^a`` by log-log least
    squares on the equilibria where ``phi < 0``.
    """
    if not len(lambda_grid) or not len(amp_rel_grid):
        raise ValueError("grids must be nonempty")
    evidence = []
    for lam in lambda_grid:
        x_eq = family_equilibrium(f, lam)  # MultipleEquilibria propagates
        if x_eq is None:
            continue
        p = f.materialize(lam)
        try:
            T_lam = linear_period(p, x_eq)
            ver = is_isochronous(p, x_eq, [x_eq * (1.0 + a) for a in amp_rel_grid], rel_tol=tol)
            dev = ver.max_deviation
        except IsochronError:
            T_lam, dev = math.nan, math.inf
        evidence.append((float(lam), float(x_eq), float(T_lam), float(dev)))
    if not evidence:
        return FamilyVerdict("no-equilibria", math.nan, math.nan, math.nan)

    xs = np.array([e[1] for e in evidence])
    Ts = np.array([e[2] for e in evidence])
    phis = np.asarray(f.phi(xs), dtype=float)
    neg = phis < 0
    a_fit = K_fit = math.nan
    if np.count_nonzero(neg) >= 2 and np.ptp(np.log(xs[neg])) > 0:
        slope, icpt = np.polyfit(np.log(xs[neg]), np.log(-phis[neg]), 1)
        a_fit, K_fit = float(slope), -float(math.exp(icpt))
    elif np.count_nonzero(neg) == 1:
        K_fit = float(phis[neg][0])

    iso = all(math.isfinite(e[3]) and e[3] <= tol for e in evidence)
    T_mean = float(np.nanmean(Ts))
    spread = float((np.nanmax(Ts) - np.nanmin(Ts)) / T_mean) if np.all(np.isfinite(Ts)) else math.inf
    a = exponent_from_period(T_mean)
    if iso and spread <= tol:
        if abs(a) <= kind_tol:
            kind = "harmonic-type"
        elif abs(a + 3.0) <= kind_tol * 3:
            kind = "ermakov-type"
        else:
            kind = "not-isochronous"
    else:
        kind = "not-isochronous"
    return FamilyVerdict(kind, a, K_fit, T_mean, a_fit, evidence, spread)


def excluded_case_equation(a: float) -> float:
    """Residual ``(1 + a)^(1 + a) - 4`` of the endpoint condition for ``a`` in ``(-1, 0]``."""
    if not -1.0 < a <= 0.0:
        raise DomainError(f"a={a} outside (-1, 0]")
    return (1.0 + a) ** (1.0 + a) - 4.0


@dataclass(frozen=True)
class ExclusionRow:
    a: float
    regime: str
    target: float  # T / pi
    alpha_limit: float
    beta_limit: float
    residual: float
    excluded: bool


def exclusion_scan(a_grid) -> list:
    """Check that every power ``a < 1`` other than ``0`` and ``-3`` violates the endpoint identity.

    ``a in (0, 1)``: the left limit of ``sqrt(2V)/|V'|`` diverges although it
    may not exceed ``T/pi``.  ``a in (-1, 0)``: the identity reduces to
    ``(1+a)^(1+a) = 4``, which has no root.  ``a <= -1``: the right limit is 1
    so ``T`` would have to be ``pi``, i.e. ``a = -3``.
    """
    rows = []
    for a in a_grid:
        a = float(a)
        T = period_from_exponent(a)
        target = T / math.pi
        if 0.0 < a < 1.0:
            d = endpoint_diagnostic(normalized_power(a), T)
            al = d.alpha_limit.extrapolated
            rows.append(ExclusionRow(a, "(0,1)", target, al, d.beta_limit.extrapolated,
                                     al - target, al > target))
        elif -1.0 < a < 0.0:
            res = excluded_case_equation(a)
            rows.append(ExclusionRow(a, "(-1,0)", target, math.nan, math.nan, res, res < 0))
        elif a <= -1.0:
            d = endpoint_diagnostic(normalized_power(a), T)
            bl = d.beta_limit.extrapolated
            rows.append(ExclusionRow(a, "(-inf,-1]", target, d.alpha_limit.extrapolated, bl,
                                     bl - target, abs(bl - target) > 1e-3))
        else:
            rows.append(ExclusionRow(a, "isochronous", target, math.nan, math.nan, 0.0, False))
    return rows


@dataclass(frozen=True)
class ScanCell:
    q: float
    C: float
    amplitude: float
    rho0: float
    theta: float
    diagnostic: str = ""


@dataclass(frozen=True)
class ScanRow:
    q: float
    theta_linear: float
    theta_mean: float
    amp_drift: float
    C_drift: float
    commensurable: "tuple | None"
    amp_pass: bool
    C_pass: bool
    commens_pass: bool
    skipped: bool = False

    @property
    def passed(self) -> bool:
        return self.amp_pass and self.C_pass and self.commens_pass and not self.skipped


@dataclass
class BertrandScan:
    rows: list
    cells: list

    @property
    def passing_q(self) -> list:
        return [r.q for r in self.rows if r.passed]

    def to_csv(self) -> str:
        flags = {r.q: r for r in self.rows}
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["q", "C", "amplitude", "rho0", "theta", "amp_pass", "C_pass", "commens_pass", "pass"])
        for c in self.cells:
            r = flags[c.q]
            w.writerow([repr(c.q), repr(c.C), repr(c.amplitude), repr(c.rho0), repr(c.theta),
                        int(r.amp_pass), int(r.C_pass), int(r.commens_pass), int(r.passed)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "passing_q": self.passing_q,
            "rows": [
                {
                    "q": r.q, "theta_linear": r.theta_linear, "theta_mean": r.theta_mean,
                    "amp_drift": r.amp_drift, "C_drift": r.C_drift,
                    "commensurable": list(r.commensurable) if r.commensurable else None,
                    "pass": r.passed, "skipped": r.skipped,
                }
                for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


def _scan_q(q, C_grid, amp_grid, k, tol, qmax, amp_tol, C_tol, commens_tol):
    cells = []
    if not 4.0 + 2.0 * q > 0:
        return ScanRow(q, math.nan, math.nan, math.nan, math.nan, None, False, False, False, True), cells
    per_C, drifts = [], []
    theta_lin = 2.0 * math.pi / math.sqrt(4.0 + 2.0 * q)
    for C in C_grid:
        V = clairaut_reduce(power_law_force(q, k, C))
        rho_star = (k / C ** 2) ** (1.0 / (4.0 + 2.0 * q))
        thetas = []
        for amp in amp_grid:
            rho0 = rho_star * (1.0 + amp)
            try:
                th = angular_period(V, rho0, tol, rho_star)
                cells.append(ScanCell(q, C, amp, rho0, th))
                thetas.append(th)
            except IsochronError as exc:
                cells.append(ScanCell(q, C, amp, rho0, math.nan, f"{type(exc).__name__}: {exc}"))
        if thetas:
            m = float(np.mean(thetas))
            per_C.append(m)
            drifts.append((max(thetas) - min(thetas)) / m)
    if not per_C:
        return ScanRow(q, theta_lin, math.nan, math.nan, math.nan, None, False, False, False, True), cells
    amp_drift = max(drifts)
    mean = float(np.mean(per_C))
    C_drift = (max(per_C) - min(per_C)) / mean
    comm = commensurability(mean, qmax, commens_tol)
    failed_cells = any(c.diagnostic for c in cells)
    return ScanRow(q, theta_lin, mean, amp_drift, C_drift, comm,
                   amp_drift <= amp_tol and not failed_cells, C_drift <= C_tol, comm is not None), cells


def bertrand_scan(q_grid=DEFAULT_Q_GRID, C_grid=DEFAULT_C_GRID, amp_grid=DEFAULT_AMP_GRID,
                  tol: float = 1e-10, qmax_commens: int = 8, K: float = -1.0,
                  amp_tol: float = 1e-6, C_tol: float = 1e-6, commens_tol: float = 1e-6,
                  jobs: int = 1) -> BertrandScan:
    """Apsidal constancy and closure of orbits near circular for ``phi(eta) = -K eta^q``.

    ``K < 0`` is the constant of the reduced family ``Phi'(rho) = K rho^(-3-2q)``;
    the force strength is ``-K`` so the force is attractive.  A ``q`` passes
    when the angular period is constant across amplitudes and across ``C`` and
    its common value is a rational multiple of ``pi``.
    """
    if not len(q_grid):
        raise ValueError("q_grid must be nonempty")
    if not K < 0:
        raise DomainError("K must be negative (attractive force)")
    k = -K

    def one(q):
        return _scan_q(float(q), list(C_grid), list(amp_grid), k, tol, qmax_commens,
                       amp_tol, C_tol, commens_tol)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            results = list(ex.map(one, q_grid))
    else:
        results = [one(q) for q in q_grid]
    return BertrandScan([r for r, _ in results], [c for _, cs in results for c in cs])
