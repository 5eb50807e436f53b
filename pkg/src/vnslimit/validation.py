"""Oracle suite: each check compares a solver against an independent reference."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .characteristics import PhasePoint, free_flow, push_exponential, velocity_jacobian
from .diagnostics import delta_star, fit_loglog, hminus1_norm
from .fluid import FluidState, LimitState, limit_step, stokes_solve
from .grid import Grid, ScalarField, VectorField


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""


def channel_errors(ns=(16, 32, 64)):
    """Max error of the steady channel profile ``z - z^2/2`` per resolution."""
    errs = []
    for n in ns:
        g = Grid.uniform(n, extent=1.0, height=1.0)
        f = VectorField(g, (np.ones(g.face_shape(0)), np.zeros(g.face_shape(1))))
        u = stokes_solve(f).u.components[0]
        z = g.centers(1)
        errs.append(float(np.abs(u - (z - 0.5 * z * z)[None, :]).max()))
    return [1.0 / n for n in ns], errs


def check_channel() -> CheckResult:
    h, e = channel_errors()
    slope = fit_loglog(h, e)
    return CheckResult("channel flow order", abs(slope - 2.0) <= 0.2, slope, 0.2,
                       "errors " + ", ".join(f"{v:.3e}" for v in e))


def translation_error(n=64, T=0.5):
    """Frozen-fluid transport of the layer ``1 < z < 2``: L1 distance to the exact
    shifted layer, normalised by the layer mass."""
    g = Grid.uniform(n)
    rho0 = ScalarField(g, np.where((g.mesh()[1] > 1.0) & (g.mesh()[1] < 2.0), 1.0, 0.0))
    st = LimitState.from_density(FluidState.rest(g), rho0)
    steps = int(round(T / (0.5 * g.spacing[-1])))
    dt = T / steps
    for _ in range(steps):
        st = limit_step(st, dt, frozen_u=True)
    z = g.mesh()[1]
    exact = np.where((z > 1.0 - T) & (z < 2.0 - T), 1.0, 0.0)
    l1 = float(np.abs(st.rho.values - exact).sum() * g.cell_volume)
    return l1 / rho0.integral(), st


def check_translation() -> CheckResult:
    err, st = translation_error()
    h = st.grid.spacing[-1]
    ledger = abs(st.mass + st.absorbed_mass - st.initial_mass) / st.initial_mass
    ok = err <= h and ledger <= 1e-12
    return CheckResult("exact translation", ok, err, h, f"ledger {ledger:.1e}")


def push_error(eps, dt=0.1, u=(0.3, -0.2), x=(0.5, 1.5), v=(0.7, 0.4)):
    """Max phase-space deviation of one closed-form push from an adaptive RK oracle."""
    u = np.asarray(u)
    g = np.array([0.0, 1.0])

    def rhs(_, y):
        return np.concatenate([y[2:], (u - g - y[2:]) / eps])

    y0 = np.concatenate([x, v])
    sol = solve_ivp(rhs, (0.0, dt), y0, method="Radau" if eps < 1e-2 else "DOP853",
                    rtol=1e-13, atol=1e-14)
    ref = sol.y[:, -1]
    p = push_exponential(PhasePoint(np.array(x), np.array(v)), u, eps, dt)
    return float(np.abs(np.concatenate([p.x, p.v]) - ref).max())


def check_push() -> CheckResult:
    err = max(push_error(e) for e in (1e-3, 1.0, 1e3))
    return CheckResult("exponential push", err < 1e-10, err, 1e-10)


def jacobian_error(eps=0.5, dt=0.3, dim=2):
    """Finite-difference phase-space Jacobian of the free flow vs ``exp(-d dt/eps)``."""
    p = PhasePoint(np.full(dim, 1.0), np.linspace(-0.3, 0.2, dim))
    y = np.concatenate([p.x, p.v])
    J = np.zeros((2 * dim, 2 * dim))
    step = 1e-6
    for k in range(2 * dim):
        dy = np.zeros(2 * dim)
        dy[k] = step
        a = free_flow(PhasePoint((y + dy)[:dim], (y + dy)[dim:]), eps, dt)
        b = free_flow(PhasePoint((y - dy)[:dim], (y - dy)[dim:]), eps, dt)
        J[:, k] = (np.concatenate([a.x, a.v]) - np.concatenate([b.x, b.v])) / (2 * step)
    det = float(np.linalg.det(J))
    return abs(det * velocity_jacobian(eps, dt, dim) - 1.0)


def check_jacobian() -> CheckResult:
    err = jacobian_error()
    return CheckResult("Jacobian formula", err < 1e-8, err, 1e-8)


def eigenmode_error(n=32, m=3, kx=2):
    g = Grid.uniform(n)
    X, Z = g.mesh()
    Lx, Lz = g.domain.extents
    theta = ScalarField(g, np.sin(2 * np.pi * kx * X / Lx) * np.sin(np.pi * m * Z / Lz))
    k2 = (2 * np.pi * kx / Lx) ** 2 + (np.pi * m / Lz) ** 2
    return abs(hminus1_norm(theta) - theta.l2_norm() / math.sqrt(1 + k2))


def check_eigenmode() -> CheckResult:
    err = eigenmode_error()
    return CheckResult("H^-1 eigenmode", err < 1e-10, err, 1e-10)


def check_delta() -> CheckResult:
    d = delta_star()
    err = abs(d * math.exp(d) - 1.0 / 9.0)
    return CheckResult("delta* root", err < 1e-12, err, 1e-12, f"delta*={d:.15f}")


CHECKS = (check_channel, check_translation, check_push, check_jacobian, check_eigenmode,
          check_delta)


def run_all() -> list[CheckResult]:
    return [c() for c in CHECKS]
