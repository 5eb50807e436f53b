import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from vnslimit.characteristics import (EgcQuery, PhasePoint, StaticField, VelocitySeries,
                                      crossing_time, egc_bounds, egc_check,
                                      egc_transfer_eps_bound, exit_time_free, free_fall_horizon,
                                      free_flow, push_exponential, velocity_jacobian)
from vnslimit.grid import Grid, VectorField

# root of 1 + 0.5 (1 - exp(-2t)) - t, from scipy.optimize.brentq (xtol 1e-15)
EXIT_1_0_HALF = 1.4737654512711427


def test_phase_point_rejects_bad_input():
    with pytest.raises(ValueError):
        PhasePoint(np.array([0.0, 1.0]), np.array([0.0]))
    with pytest.raises(ValueError):
        PhasePoint(np.array([0.0, np.nan]), np.array([0.0, 0.0]))


def test_free_flow_terminal_velocity_is_equilibrium():
    p = free_flow(PhasePoint(np.array([1.0, 3.0]), np.array([0.0, -1.0])), 0.3, 0.7)
    assert np.array_equal(p.v, [0.0, -1.0])
    assert np.array_equal(p.x, [1.0, 3.0 - 0.7])


def test_free_flow_closed_form_values():
    p = free_flow(PhasePoint(np.array([0.0, 5.0]), np.array([0.0, 0.0])), 0.5, 1.0)
    assert p.v[1] == pytest.approx(math.exp(-2) - 1, abs=1e-15)
    assert p.x[1] == pytest.approx(5 + 0.5 * (1 - math.exp(-2)) - 1, abs=1e-14)
    assert p.x[1] == pytest.approx(4.43233, abs=1e-5)


def test_free_flow_frictionless_limit():
    x, v = np.array([0.0, 2.0]), np.array([0.3, 0.4])
    p = free_flow(PhasePoint(x, v), 1e8, 1.0)
    assert np.allclose(p.x, x + v, atol=1e-7)
    assert np.allclose(p.v, v, atol=1e-7)


def test_push_with_zero_u_is_free_flow():
    p = PhasePoint(np.array([0.2, 1.0]), np.array([0.5, -0.3]))
    a = push_exponential(p, np.zeros(2), 0.4, 0.25)
    b = free_flow(p, 0.4, 0.25)
    assert np.allclose(a.x, b.x, atol=1e-15) and np.allclose(a.v, b.v, atol=1e-15)


def test_push_ap_limit():
    p = PhasePoint(np.array([0.2, 1.0]), np.array([3.0, 2.0]))
    q = push_exponential(p, np.array([1.0, 0.0]), 1e-8, 0.1)
    assert np.allclose(q.v, [1.0, -1.0], atol=1e-7)
    assert np.allclose(q.x, p.x + 0.1 * np.array([1.0, -1.0]), atol=1e-7)


def test_push_hand_value():
    q = push_exponential(PhasePoint(np.array([0.0, 2.0]), np.array([0.0, 1.0])), np.zeros(2), 1.0, 1.0)
    assert q.v[1] == pytest.approx(2 * math.exp(-1) - 1, abs=1e-15)
    assert q.x[1] == pytest.approx(2 + (1 - math.exp(-1)) - math.exp(-1), abs=1e-14)


@pytest.mark.parametrize("eps", [1e-3, 1.0, 1e3])
def test_push_matches_ode_oracle(eps):
    u = np.array([0.4, 0.1])
    y0 = np.array([0.5, 2.0, -0.2, 0.6])

    def rhs(_, y):
        return np.concatenate([y[2:], (u - np.array([0.0, 1.0]) - y[2:]) / eps])

    ref = solve_ivp(rhs, (0, 0.2), y0, method="Radau" if eps < 0.01 else "DOP853",
                    rtol=1e-13, atol=1e-14).y[:, -1]
    q = push_exponential(PhasePoint(y0[:2], y0[2:]), u, eps, 0.2)
    assert np.abs(np.concatenate([q.x, q.v]) - ref).max() < 1e-10


def test_push_rejects_nonpositive_eps():
    with pytest.raises(ValueError):
        push_exponential(PhasePoint(np.zeros(2), np.zeros(2)), np.zeros(2), 0.0, 1.0)


def test_velocity_jacobian_values():
    assert velocity_jacobian(0.7, 0.0) == 1.0
    assert velocity_jacobian(0.3, 0.3, dim=3) == pytest.approx(math.e ** 3, rel=1e-15)
    assert velocity_jacobian(0.5, 1.0, dim=2) == pytest.approx(math.exp(4), rel=1e-15)
    assert velocity_jacobian(1e-6, 1.0) == math.inf


def test_exit_time_free():
    assert exit_time_free(0.8, -1.0, 0.3) == 0.8
    t = exit_time_free(1.0, 0.0, 0.5)
    assert t == pytest.approx(EXIT_1_0_HALF, abs=1e-11)
    assert t < free_fall_horizon(1.0, 0.0, 0.5) == 1.5
    with pytest.raises(ValueError):
        exit_time_free(0.0, 0.0, 1.0)


def test_egc_bounds_values():
    ell, r = egc_bounds(0.5, 1.0, 1.0, 2.0)
    assert ell == pytest.approx(0.5 * (2 - 0.5 * (1 - math.exp(-4))) - 1, abs=1e-15)
    assert ell == pytest.approx(-0.24542, abs=1e-5)
    assert r == pytest.approx(0.5 * (2 / (0.5 * (1 - math.exp(-4))) - 1) - 1, abs=1e-15)
    assert r == pytest.approx(0.537315, abs=1e-6)


def test_egc_bounds_growth():
    s = 1e6
    ell, _ = egc_bounds(0.5, 1.0, 1.0, s)
    assert ell / s == pytest.approx(0.5, abs=1e-5)


def test_transfer_bound():
    assert egc_transfer_eps_bound(0.5) == 0.25
    assert egc_transfer_eps_bound(1.0) == pytest.approx(1 / 3, abs=1e-16)
    assert egc_transfer_eps_bound(math.inf) == 0.5
    assert egc_transfer_eps_bound(1e12) == pytest.approx(0.5, rel=1e-11)


def test_crossing_time_matches_free_exit():
    z, vz, eps = 0.05, -0.2, 0.3
    t = crossing_time(np.array([z]), np.array([vz]), np.array([0.0]), eps, 0.5)[0]
    assert t == pytest.approx(exit_time_free(z, vz, eps), abs=1e-12)


def test_egc_trivial_field_verdicts():
    ok = egc_check(None, EgcQuery(1.0, 1.0, 2.01, 0.5))
    assert ok.satisfied and ok.worst_exit_time < 2.0
    bad = egc_check(None, EgcQuery(1.0, 1.0, 1.0, 0.5))
    assert not bad.satisfied
    d = bad.to_dict()
    assert set(d) == {"satisfied", "worst_exit_time", "worst_sample", "samples", "epsilon", "L", "R", "T"}
    assert d["worst_exit_time"] is None


def test_egc_with_horizon_just_above_free_fall_bound():
    for eps, L, R in [(0.5, 1.0, 1.0), (0.25, 2.0, 0.5), (0.1, 0.5, 2.0)]:
        assert egc_check(None, EgcQuery(L, R, free_fall_horizon(L, R, eps) + 0.01, eps)).satisfied


def test_egc_agrees_with_exit_time_free():
    q = EgcQuery(1.0, 1.0, 1.6, 0.5, resolution=7)
    res = egc_check(None, q)
    from vnslimit.characteristics import _egc_samples
    X, V = _egc_samples(q, 2)
    times = np.array([exit_time_free(x[1], v[1], q.eps) for x, v in zip(X, V)])
    assert res.satisfied == bool(times.max() < q.T)
    assert res.worst_exit_time == pytest.approx(times.max(), abs=1e-9) or not res.satisfied


def test_velocity_series_validation():
    g = Grid.uniform(4)
    f = VectorField.zeros(g)
    with pytest.raises(ValueError):
        VelocitySeries([0.0, 0.0], [f, f])
    with pytest.raises(ValueError):
        VelocitySeries([0.0, 1.0, 5.0], [f, f, f], max_gap=2.0)
    s = VelocitySeries([0.0, 1.0], [f, f])
    with pytest.raises(ValueError):
        egc_check(s, EgcQuery(1.0, 1.0, 3.0, 0.5))
    assert egc_check(VelocitySeries([0.0, 1.0], [f, f], hold_last=True),
                     EgcQuery(1.0, 1.0, 3.0, 0.5)).satisfied


def test_static_field_source_matches_trivial():
    g = Grid.uniform(8)
    a = egc_check(StaticField(VectorField.zeros(g)), EgcQuery(1.0, 1.0, 2.01, 0.5, 9))
    b = egc_check(None, EgcQuery(1.0, 1.0, 2.01, 0.5, 9))
    assert a.satisfied and b.satisfied
    assert a.worst_exit_time == pytest.approx(b.worst_exit_time, abs=1e-9)
