"""Acceptance suite: one verdict line per criterion (see the terminal summary).

The long scenarios run once per session and are shared between criteria.
"""
import math
import time

import numpy as np
import pytest

from vnslimit.characteristics import (EgcQuery, PhasePoint, egc_bounds, egc_check,
                                      egc_transfer_eps_bound, exit_time_free, push_exponential,
                                      velocity_jacobian)
from vnslimit.diagnostics import decay_fit, delta_star
from vnslimit.kinetic import InitialKineticSpec, advance_particles, monokinetic_functional, sample_initial
from vnslimit.grid import Grid
from vnslimit.scenario import ScenarioConfig, simulate_limit, simulate_vns, sweep
from vnslimit.validation import channel_errors, eigenmode_error, push_error

pytestmark = pytest.mark.slow


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="session")
def default_run():
    return timed(simulate_vns, ScenarioConfig())


@pytest.fixture(scope="session")
def concentration_run():
    cfg = ScenarioConfig({"physics": {"eps": 0.05}, "time": {"T": 1.0, "checkpoints": 10}})
    return timed(simulate_vns, cfg)


@pytest.fixture(scope="session")
def eps_sweep():
    return timed(sweep, ScenarioConfig())


@pytest.fixture(scope="session")
def decay_run():
    return timed(simulate_vns, ScenarioConfig.preset("decay"))


@pytest.fixture(scope="session")
def limit_default_run():
    return timed(simulate_limit, ScenarioConfig())


def test_criterion_01_free_field_exit_bound(report_line):
    t0 = time.perf_counter()
    worst_margin = math.inf
    for eps in (0.5, 0.25, 0.1):
        for L in (0.5, 1.0, 2.0):
            for R in (0.5, 1.0, 2.0):
                bound = L + eps * (1 + R)
                for z0 in L * np.arange(1, 22) / 21:
                    for vz in np.linspace(-R, R, 21):
                        worst_margin = min(worst_margin, bound - exit_time_free(z0, vz, eps))
    elapsed = time.perf_counter() - t0
    ok = worst_margin > 0 and elapsed < 1.0
    report_line(1, "free-field exit time < L + eps(1+R)", ok,
                f"min margin {worst_margin:.3e}, {elapsed:.2f}s")
    assert ok


def test_criterion_02_enlarged_egc(report_line):
    t0 = time.perf_counter()
    verdicts, worst = [], []
    for t in (2.5, 4.0, 8.0):
        ell, r = egc_bounds(0.5, 1.0, 1.0, t)
        res = egc_check(None, EgcQuery(1.0 + ell, 1.0 + r, t, 0.5, resolution=21))
        verdicts.append(res.satisfied)
        worst.append(f"t={t}: {res.worst_exit_time:.4f}")
    elapsed = time.perf_counter() - t0
    ok = all(verdicts) and elapsed < 5.0
    report_line(2, "enlarged-box EGC at t in {2.5, 4, 8}", ok, "; ".join(worst) + f", {elapsed:.2f}s")
    assert ok


def test_criterion_03_push_exactness(report_line):
    t0 = time.perf_counter()
    errs = {eps: push_error(eps) for eps in (1e-3, 1.0, 1e3)}
    elapsed = time.perf_counter() - t0
    worst = max(errs.values())
    ok = worst < 1e-10 and elapsed < 1.0
    report_line(3, "exponential push vs adaptive ODE oracle", ok, f"max error {worst:.2e}, {elapsed:.2f}s")
    assert ok


def test_criterion_04_ap_limit(report_line):
    t0 = time.perf_counter()
    u, dt = np.array([0.3, -0.2]), 0.1
    x, v = np.array([1.0, 2.0]), np.array([4.0, -3.0])
    q = push_exponential(PhasePoint(x, v), u, 1e-8, dt)
    target = u - np.array([0.0, 1.0])
    err = max(np.abs(q.v - target).max(), np.abs(q.x - (x + dt * target)).max())
    elapsed = time.perf_counter() - t0
    ok = err <= 1e-7 and elapsed < 1.0
    report_line(4, "asymptotic-preserving limit at eps=1e-8", ok, f"error {err:.2e}")
    assert ok


def test_criterion_05_energy_inequality(default_run, report_line):
    res, elapsed = default_run
    E0 = res.energy.initial_energy
    tol = max(1e-3, 10 * res.dt) * E0
    worst = res.energy.worst_residual
    ok = worst <= tol and elapsed <= 180
    report_line(5, "energy-dissipation inequality, all checkpoint pairs", ok,
                f"worst residual {worst:.3e} <= {tol:.3e}, {elapsed:.0f}s")
    assert ok


def test_criterion_06_monokinetic_concentration(concentration_run, report_line):
    res, elapsed = concentration_run
    mono = res.series["monokinetic"]
    ratio = mono[-1] / mono[0]
    # frozen zero field: exact per-step decay factor
    g = Grid.uniform(16)
    ens = sample_initial(InitialKineticSpec(n_particles=2000, temperature=0.2), g, seed=1)
    eps, dt = 0.05, 0.004
    before = monokinetic_functional(ens, None)
    after = monokinetic_functional(advance_particles(ens, None, eps, dt, grid=g), None)
    exact = abs(after / before - math.exp(-2 * dt / eps)) <= 1e-12
    ok = ratio <= 0.1 and exact and elapsed <= 180
    report_line(6, "monokinetic concentration at eps=0.05, T=1", ok,
                f"ratio {ratio:.2e}, frozen-field decay exact={exact}, {elapsed:.0f}s")
    assert ok


def test_criterion_07_eps_rate(eps_sweep, report_line):
    sw, elapsed = eps_sweep
    rep = sw.report
    tot = rep.total_error
    decreasing = all(b < a for a, b in zip(tot, tot[1:]))
    ok = decreasing and rep.slope is not None and 0.3 <= rep.slope <= 1.2 and elapsed <= 900
    report_line(7, "eps-sweep error decreasing, slope in [0.3, 1.2]", ok,
                "errors " + ", ".join(f"{e:.3e}" for e in tot) + f", slope {rep.slope:.3f}, {elapsed:.0f}s")
    assert ok


def test_criterion_08_brinkman_gap(eps_sweep, report_line):
    rep = eps_sweep[0].report
    gaps = rep.brinkman_gravity_gap
    ok = all(b < a for a, b in zip(gaps, gaps[1:]))
    report_line(8, "Brinkman-gravity gap decreasing in eps", ok,
                "gaps " + ", ".join(f"{g:.3e}" for g in gaps))
    assert ok


def test_criterion_09_decay_fits(decay_run, report_line):
    res, elapsed = decay_run
    s = res.series
    u_slope = decay_fit(np.column_stack([s["t"], s["u_l2_sq"]]), (5, 20))
    f_slope = decay_fit(np.column_stack([s["t"], s["brinkman_l2"]]), (5, 20))
    ok = u_slope <= -0.5 and f_slope <= -1.0 and elapsed <= 300
    report_line(9, "decay fits on [5, 20]", ok,
                f"|u|^2 slope {u_slope:.2f}, |F| slope {f_slope:.2f}, {elapsed:.0f}s")
    assert ok


def test_criterion_10_fluid_oracles(report_line):
    t0 = time.perf_counter()
    h, errs = channel_errors()
    slope = float(np.polyfit(np.log(h), np.log(errs), 1)[0])
    from vnslimit.fluid import FluidState, ns_step
    from vnslimit.grid import ScalarField, VectorField
    g = Grid.uniform(64, extent=1.0, periodic_z=True)
    k = 2 * np.pi
    ux = np.sin(k * g.mesh(0)[1])
    st = FluidState(VectorField(g, (ux, np.zeros(g.cells))), ScalarField.zeros(g))
    steps = round(0.1 / (g.spacing[0] ** 2 / 6))
    for _ in range(steps):
        st = ns_step(st, None, 0.1 / steps, advection=None)
    mode_err = float(np.abs(st.u.components[0] - math.exp(-k * k * 0.1) * ux).max())
    elapsed = time.perf_counter() - t0
    ok = abs(slope - 2.0) <= 0.2 and mode_err <= 1e-6 and elapsed < 30
    report_line(10, "channel order 2 +- 0.2 and periodic Stokes mode", ok,
                f"slope {slope:.3f}, mode error {mode_err:.2e}, {elapsed:.1f}s")
    assert ok


def test_criterion_11_ledgers(default_run, concentration_run, eps_sweep, decay_run,
                              limit_default_run, report_line):
    runs = [default_run[0], concentration_run[0], decay_run[0], limit_default_run[0],
            eps_sweep[0].limit, *eps_sweep[0].runs.values()]
    worst = max(r.max_ledger_error for r in runs)
    absorbed = limit_default_run[0].series["absorbed_mass"]
    monotone = bool(np.all(np.diff(absorbed) >= 0))
    ok = worst <= 1e-12 and monotone
    report_line(11, "particle and limit-density mass ledgers", ok,
                f"worst relative error {worst:.1e} over {len(runs)} runs, absorbed monotone={monotone}")
    assert ok


def test_criterion_12_formulas(report_line):
    t0 = time.perf_counter()
    checks = {
        "jacobian": all(velocity_jacobian(e, e, d) == pytest.approx(math.exp(d), rel=1e-15)
                        for e in (0.1, 1.0) for d in (2, 3)),
        "delta": abs(delta_star() * math.exp(delta_star()) - 1 / 9) < 1e-12,
        "transfer": egc_transfer_eps_bound(0.5) == 0.25,
        "eigenmode": eigenmode_error() < 1e-10,
    }
    elapsed = time.perf_counter() - t0
    ok = all(checks.values()) and elapsed < 1.0
    report_line(12, "formula unit checks", ok, ", ".join(f"{k}={v}" for k, v in checks.items()))
    assert ok
