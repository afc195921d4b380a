import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isochron.errors import CollisionApproach, DomainEscape, NotAttractiveHere
from isochron.orbits import (OrbitState, angular_period, apsidal_report, circular_orbit,
                             commensurability, cross_check, detect_period,
                             integrate_cartesian, integrate_reduced,
                             measured_angular_period, state_from_apsis)
from isochron.potentials import (CentralForce, clairaut_reduce, hooke, kepler,
                                 power_law_force)

from oracles import kepler_rho

TWO_PI = 2 * math.pi


def kepler_radial_period(force, s0):
    # 2 pi a^(3/2) with a from the vis-viva energy (k = 1)
    E = s0.energy(force)
    a = -1.0 / (2.0 * E)
    return TWO_PI * a ** 1.5


def test_circular_orbit_examples():
    s, w = circular_orbit(kepler(), 1.0)
    assert w == pytest.approx(1.0) and s.angular_momentum == pytest.approx(1.0)
    s, w = circular_orbit(hooke(), 2.0)
    assert w == pytest.approx(1.0) and s.angular_momentum == pytest.approx(4.0)
    assert (s.x, s.y, s.vx, s.vy) == (2.0, 0.0, 0.0, 2.0)
    repulsive = CentralForce(phi=lambda eta: -np.ones_like(np.asarray(eta, float)))
    with pytest.raises(NotAttractiveHere):
        circular_orbit(repulsive, 1.0)


def test_kepler_circular_returns():
    f = kepler()
    s, w = circular_orbit(f, 1.0)
    tr = integrate_cartesian(f, s, t_end=TWO_PI, tol=1e-12)
    assert np.linalg.norm(tr.y[:4, -1] - s.as_array()) < 1e-8
    assert tr.energy_drift < 1e-9 and tr.momentum_drift < 1e-9


def test_kepler_ellipse_closes():
    f = kepler()
    s, w = circular_orbit(f, 1.0)
    s = OrbitState(s.x, s.y, 0.1, s.vy)
    T = kepler_radial_period(f, s)
    tr = integrate_cartesian(f, s, t_end=T, tol=1e-12)
    assert np.linalg.norm(tr.y[:4, -1] - s.as_array()) < 1e-6


def test_hooke_apsidal_advance():
    f = hooke()
    s = state_from_apsis(1.0 / 1.3, 1.0)
    # Cartesian motion is harmonic with period 2 pi, r has period pi
    tr = integrate_cartesian(f, s, t_end=TWO_PI, tol=1e-12)
    assert np.linalg.norm(tr.y[:4, -1] - s.as_array()) < 1e-8
    # polar angle advances pi/2 between apsides
    assert measured_angular_period(f, s, t_end=2 * TWO_PI) / 2 == pytest.approx(math.pi / 2, abs=1e-6)


def test_collision_guard():
    f = kepler()
    with pytest.raises(CollisionApproach):
        integrate_cartesian(f, state_from_apsis(1.0, 1e-4), t_end=10.0)
    with pytest.raises(ValueError):
        integrate_cartesian(f, OrbitState(0, 0, 1, 0), t_end=1.0)


@pytest.mark.parametrize("force,T", [(kepler(), 6.68), (hooke(), math.pi)])
def test_conservation_over_100_radial_periods(force, T):
    tol = 1e-10
    s = state_from_apsis(1.2, 1.0)
    tr = integrate_cartesian(force, s, t_end=100 * T, tol=tol)
    assert tr.energy_drift <= 10 * tol
    assert tr.momentum_drift <= 10 * tol


def test_trajectory_csv():
    f = hooke()
    s, _ = circular_orbit(f, 1.0)
    text = integrate_cartesian(f, s, t_end=1.0).to_csv()
    assert text.splitlines()[0] == "t,x,y,vx,vy,E,C"
    assert "\r" not in text


def test_reduced_kepler_is_exact_harmonic():
    V = clairaut_reduce(kepler())
    th = np.linspace(0, 4 * math.pi, 50)
    tr = integrate_reduced(V, 1.3, 4 * math.pi, theta_eval=th)
    assert np.max(np.abs(tr.rho - kepler_rho(th, 1.3, 1.0))) < 1e-10
    assert tr.energy_drift < 1e-10
    assert tr.to_csv().splitlines()[0] == "theta,rho,drho"


def test_reduced_hooke_period_and_equilibrium():
    V = clairaut_reduce(hooke())
    assert angular_period(V, 1.05) == pytest.approx(math.pi, abs=1e-6)
    tr = integrate_reduced(V, 1.0, 3.0)
    assert np.max(np.abs(tr.rho - 1.0)) < 1e-12


def test_reduced_escape():
    # energy above the cap of the reduced q = -1.9 well: rho runs off to 0
    V = clairaut_reduce(power_law_force(-1.9))
    with pytest.raises(DomainEscape):
        integrate_reduced(V, 30.0, 50.0)


def test_angular_period_examples():
    Vk = clairaut_reduce(kepler())
    assert angular_period(Vk, 1.4) == pytest.approx(TWO_PI, rel=1e-10)
    Vh = clairaut_reduce(hooke())
    assert angular_period(Vh, 2.0) == pytest.approx(math.pi, rel=1e-10)
    Vq = clairaut_reduce(power_law_force(-1.0))
    a, b = angular_period(Vq, 1.01), angular_period(Vq, 1.5)
    assert abs(a - b) / a > 1e-3


@pytest.mark.parametrize("q", [-1.75, -1.25, -1.0, -0.5, 0.25, 0.5])
def test_small_amplitude_apsidal_law(q):
    V = clairaut_reduce(power_law_force(q))
    th = angular_period(V, 1.001, rho_star=1.0)
    assert th == pytest.approx(TWO_PI / math.sqrt(4 + 2 * q), rel=1e-4)


def test_commensurability_examples():
    assert commensurability(math.pi) == (1, 1)
    assert commensurability(TWO_PI) == (2, 1)
    assert commensurability(1.0, qmax=10, tol=1e-9) is None
    with pytest.raises(ValueError):
        commensurability(0.0)


@given(p=st.integers(1, 40), q=st.integers(1, 8))
def test_commensurability_recovers_rationals(p, q):
    g = math.gcd(p, q)
    assert commensurability(p / q * math.pi, qmax=8) == (p // g, q // g)


@pytest.mark.parametrize("force,theta_end", [(kepler(), 4 * math.pi), (hooke(), TWO_PI)])
def test_cross_check(force, theta_end):
    assert cross_check(force, 1.0, 1.2, theta_end, tol=1e-12) < 1e-6
    assert cross_check(force, 1.0, 1.0, theta_end, tol=1e-12) < 1e-9


def test_cross_check_scales_with_tolerance():
    coarse = cross_check(kepler(), 1.0, 1.2, 4 * math.pi, tol=1e-7)
    fine = cross_check(kepler(), 1.0, 1.2, 4 * math.pi, tol=1e-9)
    assert fine <= coarse / 2


def test_detect_period_kepler():
    f = kepler()
    s = state_from_apsis(1.25, 1.0)
    T = detect_period(f, s, t_window=3 * kepler_radial_period(f, s))
    assert T == pytest.approx(kepler_radial_period(f, s), rel=1e-8)
    # q = -1 orbits near circular do not close inside a short window
    g = power_law_force(-1.0)
    assert detect_period(g, state_from_apsis(1.1, 1.0), t_window=20.0) is None


def test_apsidal_reports():
    r = apsidal_report(kepler(), 1.0, [0.01, 0.1, 0.3])
    assert r.angular_periods == pytest.approx([TWO_PI] * 3, rel=1e-9)
    assert r.commensurable == (2, 1)
    assert r.apsidal_angles == [t / 2 for t in r.angular_periods]
    r = apsidal_report(hooke(), 2.0, [0.01, 0.1, 0.3])
    assert r.angular_periods == pytest.approx([math.pi] * 3, rel=1e-9)
    assert r.commensurable == (1, 1)
    r = apsidal_report(power_law_force(-1.0), 1.0, [0.01, 0.2, 0.5])
    assert r.constancy > 1e-3 and r.commensurable is None
    assert len(r.angular_periods) == 3
    doc = json.loads(r.to_json())
    assert doc["commensurable"] is None and len(doc["apsidal_angles"]) == 3
