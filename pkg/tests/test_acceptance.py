"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected into an "acceptance criteria" section at the
end of the pytest run.
"""
import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from isochron.classify import (bertrand_scan, classify_family, exclusion_scan,
                               excluded_case_equation, exponent_from_period)
from isochron.orbits import (angular_period, circular_orbit, commensurability, cross_check,
                             detect_period, integrate_cartesian, measured_angular_period,
                             state_from_apsis)
from isochron.period import is_isochronous, linear_period, period
from isochron.potentials import (clairaut_reduce, counterexample_family, ermakov,
                                 find_equilibria, harmonic_forced, hooke, kepler,
                                 plateau, polynomial, power_family, power_law_force)
from isochron.urabe import (endpoint_diagnostic, extract_S, forward_map,
                            isochronicity_by_averages, reconstruct_potential)

from oracles import ermakov_S

TWO_PI = 2 * math.pi
ERM_T = ermakov(0.5).translated(1.0)
QUARTIC = polynomial([0, 0, 0.5, 0, 0.25])
CUBIC = polynomial([0, 0, 0.5, 1 / 3], domain=(-1.0, 0.5))
Q_GRID = [-1.75, -1.5, -1.25, -1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5]


def test_criterion_01_bertrand_families_isochronous(report):
    worst = 0.0
    for lam in (0.5, 1.0, 3.0):
        p = harmonic_forced(lam, -1.0)
        x_star = lam
        for amp in (0.1, 1.0, 5.0):
            worst = max(worst, abs(period(p, x_star + amp, x_star).theta - TWO_PI) / TWO_PI)
    f = power_family(-3.0, K=-1.0)
    worst_e = 0.0
    for lam in (0.5, 1.0, 3.0):
        p = f.materialize(lam)
        x_star = lam ** 0.25
        for rel in (0.1, 1.0, 4.0):
            worst_e = max(worst_e, abs(period(p, x_star * (1 + rel), x_star).theta - math.pi) / math.pi)
    ok = worst <= 1e-8 and worst_e <= 1e-8
    report(1, ok, f"max rel dev harmonic {worst:.2e}, Ermakov {worst_e:.2e} (tol 1e-8)")
    assert ok


def test_criterion_02_exponent_law_and_classifier(report):
    exact = exponent_from_period(TWO_PI) == 0.0 and exponent_from_period(math.pi) == -3.0
    vh = classify_family(power_family(0.0, -1.0), [0.5, 1, 2], [0.05, 0.2, 0.4])
    ve = classify_family(power_family(-3.0, -1.0), [0.5, 1, 2], [0.05, 0.2, 0.4])
    kh = abs(vh.K + 1.0)
    ke = abs(ve.K + 1.0)
    ok = (exact and vh.kind == "harmonic-type" and ve.kind == "ermakov-type"
          and kh <= 1e-6 and ke <= 1e-6)
    report(2, ok, f"exact exponents {exact}; kinds {vh.kind}/{ve.kind}; K err {kh:.1e}/{ke:.1e}")
    assert ok


def _inner_error(p, rec):
    lo, hi = rec.domain
    w = hi - lo
    x = np.linspace(lo + 0.1 * w, hi - 0.1 * w, 2001)
    return float(np.max(np.abs(rec.V(x) - p.V(x))))


def test_criterion_03_urabe_roundtrip(report):
    res = {}
    for name, p, T in (("harmonic", harmonic_forced(), TWO_PI), ("ermakov", ERM_T, math.pi)):
        s = extract_S(p, T)
        rec = reconstruct_potential(s)
        res[name] = (_inner_error(p, rec), s.odd_residual, float(np.max(np.abs(s.S_samples))))
    ok = all(e < 1e-6 and o < 1e-8 and m < 1 for e, o, m in res.values())
    report(3, ok, "; ".join(f"{k}: V err {e:.1e}, odd {o:.1e}, sup|S| {m:.4f}"
                            for k, (e, o, m) in res.items()))
    assert ok


def test_criterion_04_circular_average_equals_quadrature(report):
    worst = 0.0
    for p, xs in ((harmonic_forced(), np.linspace(0.2, 4.0, 10)),
                  (ERM_T, np.linspace(-0.8, 3.0, 10)),
                  (QUARTIC, np.linspace(0.1, 2.0, 10))):
        m = forward_map(p)
        radii = [abs(float(m.X(x))) for x in xs]
        v = isochronicity_by_averages(p, radii, umap=m)
        for x0, th in zip(xs, v.theta):
            q = period(p, float(x0), 0.0).theta
            worst = max(worst, abs(th - q) / q)
    ok = worst <= 1e-6
    report(4, ok, f"max rel diff over 3 x 10 points {worst:.2e} (tol 1e-6)")
    assert ok


def test_criterion_05_endpoint_sums(report):
    dh = endpoint_diagnostic(harmonic_forced(), TWO_PI)
    de = endpoint_diagnostic(ERM_T, math.pi)
    ok = (dh.sum1 == 2.0 and dh.sum2 == 2.0
          and abs(de.sum1 - 1.0) <= 5e-3 and abs(de.sum2 - 1.0) <= 5e-3)
    report(5, ok, f"harmonic {dh.sum1!r}/{dh.sum2!r}; Ermakov {de.sum1:.6f}/{de.sum2:.6f}")
    assert ok


def test_criterion_06_negative_controls(report):
    vq = is_isochronous(QUARTIC, 0.0, [0.1, 0.5, 1.0])
    vc = is_isochronous(CUBIC, 0.0, [0.1, 0.3, 0.45])
    rows = exclusion_scan(list(np.linspace(0.05, 0.95, 10)) + list(np.linspace(-0.95, -0.05, 10)))
    scans_ok = all(r.excluded for r in rows)
    grid = np.linspace(-0.99, -0.01, 200)
    resid_ok = all(excluded_case_equation(float(a)) < 0 for a in grid)
    ok = (not vq and not vc and vq.max_deviation > 1e-3 and vc.max_deviation > 1e-3
          and scans_ok and resid_ok)
    report(6, ok, f"quartic dev {vq.max_deviation:.2e}, cubic dev {vc.max_deviation:.2e}; "
                  f"exclusion scans {scans_ok}; 200 residuals < 0 {resid_ok}")
    assert ok


def test_criterion_07_bertrand_scan(report):
    t0 = time.perf_counter()
    scan = bertrand_scan()
    dt = time.perf_counter() - t0
    drifts = {r.q: r.amp_drift for r in scan.rows}
    others_ok = all(d >= 1e-3 for q, d in drifts.items() if q not in (0.0, -1.5))
    ok = scan.passing_q == [-1.5, 0.0] and others_ok and len(scan.cells) == 100 and dt <= 300
    min_other = min(d for q, d in drifts.items() if q not in (0.0, -1.5))
    report(7, ok, f"passing_q {scan.passing_q}; min drift of others {min_other:.2e}; {dt:.2f}s")
    assert ok


def test_criterion_08_small_amplitude_apsidal_law(report):
    worst = 0.0
    for q in Q_GRID:
        V = clairaut_reduce(power_law_force(q))
        oracle = linear_period(V, 1.0)
        assert oracle == pytest.approx(TWO_PI / math.sqrt(4 + 2 * q), rel=1e-9)
        th = angular_period(V, 1.001, rho_star=1.0)
        worst = max(worst, abs(th - oracle) / oracle)
    ok = worst <= 1e-4
    report(8, ok, f"max rel diff at amplitude 1e-3: {worst:.2e} (tol 1e-4)")
    assert ok


def test_criterion_09_dynamics_consistency(report):
    dk = cross_check(kepler(), 1.0, 1.2, 2 * TWO_PI, tol=1e-12)
    dh = cross_check(hooke(), 1.0, 1.2, 2 * math.pi, tol=1e-12)
    drifts = []
    for f, r0 in ((kepler(), 1.0), (hooke(), 1.0), (kepler(), 2.0), (hooke(), 0.5)):
        s, _ = circular_orbit(f, r0)
        tr = integrate_cartesian(f, s, t_end=100.0, tol=1e-12)
        drifts += [tr.energy_drift, tr.momentum_drift]
    ok = dk < 1e-6 and dh < 1e-6 and max(drifts) < 1e-9
    report(9, ok, f"cross_check Kepler {dk:.1e}, Hooke {dh:.1e}; max circular drift {max(drifts):.1e}")
    assert ok


def test_criterion_10_periodic_orbits_commensurable(report):
    found = []
    cases = [(kepler(), rho0) for rho0 in (1.05, 1.2, 1.4, 1.6, 1.8)]
    cases += [(hooke(), rho0) for rho0 in (1.05, 1.2, 1.5, 2.0, 3.0)]
    for f, rho0 in cases:
        s = state_from_apsis(rho0, 1.0)
        T = detect_period(f, s, t_window=60.0, threshold=1e-6)
        if T is None:
            found.append((rho0, None, None))
            continue
        th = measured_angular_period(f, s, t_end=1.01 * T + 30.0)
        found.append((rho0, T, commensurability(th, qmax=16, tol=1e-4)))
    ok = all(T is not None and c is not None for _, T, c in found)
    report(10, ok, f"{sum(c is not None for *_, c in found)}/10 periodic orbits with "
                   f"commensurable Theta: {sorted({c for *_, c in found if c})}")
    assert ok


def test_criterion_11_plateau_period_blowup(report):
    p = plateau(1.0, 2.0)
    th = [period(p, 2.0 + d, 1.5).theta for d in (1e-1, 1e-2, 1e-3)]
    ok = th[0] < th[1] < th[2] and th[2] > 10 * th[0]
    report(11, ok, f"Theta at distances 1e-1,1e-2,1e-3: {[round(t, 3) for t in th]}")
    assert ok


def test_criterion_12_counterexample(report):
    f = counterexample_family()
    local_ok = True
    details = []
    for lam in (1.5, 3.0, 6.0):
        n = {1.5: 0, 3.0: 1, 6.0: 2}[lam]
        x = lam * 3.0 ** n
        p = f.materialize(lam)
        th = period(p, x * (1 + 1e-3), x).theta
        good = abs(float(p.dV(x))) < 1e-12 * x and float(p.d2V(x)) == 1.0 and abs(th - TWO_PI) < 1e-6
        local_ok &= good
        details.append(f"x({lam})={x}")
    counts = {}
    for lam in (1.5, 2.0, 3.0, 4.0, 6.0):
        eq = find_equilibria(f.materialize(lam), scan=f.scan, n_seeds=4096, geometric=True)
        counts[lam] = len(eq.roots)
    ok = local_ok and max(counts.values()) >= 2
    report(12, ok, f"{', '.join(details)} local period 2pi: {local_ok}; equilibria per lambda {counts}")
    assert ok


CLI_RUNS = [
    (["period", "--format", "csv"], {"potential": {"kind": "ermakov", "centered": True},
                                     "amplitudes": [0.1, 0.5, 2.0]}),
    (["urabe", "--mode", "roundtrip", "--format", "json"],
     {"potential": {"kind": "ermakov", "centered": True}, "T": math.pi}),
    (["urabe", "--format", "json"], {"potential": {"kind": "harmonic"}, "T": TWO_PI, "n": 101}),
    (["classify", "--format", "json"], {"family": {"a": -3, "K": -1}}),
    (["bertrand", "--format", "csv", "--jobs", "4"], {}),
    (["bertrand", "--format", "json"], {}),
    (["orbit", "--format", "json"], {"force": {"kind": "kepler"}}),
    (["orbit", "--format", "csv"], {"force": {"kind": "hooke"}}),
    (["counterexample", "--format", "csv"], {}),
    (["period", "--format", "json", "--seed", "11"], {"potential": {"kind": "harmonic"},
                                                     "random_amplitudes": 5}),
]


def test_criterion_13_cli_determinism(report, tmp_path):
    same = []
    for i, (args, cfg) in enumerate(CLI_RUNS):
        path = tmp_path / f"cfg{i}.json"
        path.write_text(json.dumps(cfg))
        outs = []
        for k in range(2):
            out = tmp_path / f"out{i}_{k}"
            r = subprocess.run([sys.executable, "-m", "isochron.cli", *args, "--config", str(path),
                                "--out", str(out)], capture_output=True)
            outs.append((r.returncode, out.read_bytes() if out.exists() else None))
        same.append(outs[0] == outs[1] and outs[0][0] == 0 and outs[0][1])
    ok = all(same)
    report(13, ok, f"{sum(map(bool, same))}/{len(same)} subcommand configs byte-identical across runs")
    assert ok
