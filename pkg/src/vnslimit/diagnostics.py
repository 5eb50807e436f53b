"""Energies, monitors, negative Sobolev norms and rate fits."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import fft as sfft

from .characteristics import _interp_extended
from .fluid import FluidState, grad_max, grad_norm_sq
from .grid import ScalarField, VectorField
from .kinetic import ParticleEnsemble


@dataclass(frozen=True)
class EnergyReport:
    t: float
    kinetic: float
    potential: float
    total: float
    dissipation: float
    cumulative_dissipation: float
    inequality_residual: float

    def to_dict(self):
        return asdict(self)


def energy_terms(ens: ParticleEnsemble | None, fluid: FluidState, eps: float):
    """Return ``(kinetic, potential, dissipation)`` at one instant."""
    u = fluid.u
    kin = 0.5 * u.l2_norm_sq()
    diss = grad_norm_sq(u)
    pot = 0.0
    if ens is not None and len(ens) and ens.alive.any():
        m = ens.alive
        x, v, w = ens.positions[m], ens.velocities[m], ens.weights[m]
        kin += 0.5 * eps * float(np.sum(w * np.sum(v * v, axis=1)))
        pot = float(np.sum(w * x[:, -1]))
        slip = v - _interp_extended(u, x)
        diss += float(np.sum(w * np.sum(slip * slip, axis=1)))
    return kin, pot, diss


class EnergyTracker:
    """Time history of the total energy and the trapezoidal dissipation integral.

    The reported residual is the worst ``E(t) + int_s^t D - E(s)`` over all
    recorded pairs ``s < t``.
    """

    def __init__(self):
        self.times: list[float] = []
        self.totals: list[float] = []
        self.dissipation: list[float] = []
        self.cumulative: list[float] = []
        self._min_level = math.inf
        self.worst_residual = -math.inf

    def record(self, t, kin, pot, diss) -> EnergyReport:
        total = kin + pot
        if self.times:
            dt = t - self.times[-1]
            cum = self.cumulative[-1] + 0.5 * dt * (diss + self.dissipation[-1])
        else:
            cum = 0.0
        level = total + cum
        if self.times:
            self.worst_residual = max(self.worst_residual, level - self._min_level)
        self._min_level = min(self._min_level, level)
        self.times.append(t)
        self.totals.append(total)
        self.dissipation.append(diss)
        self.cumulative.append(cum)
        resid0 = total + cum - self.totals[0]
        return EnergyReport(t, kin, pot, total, diss, cum, resid0)

    @property
    def initial_energy(self) -> float:
        return self.totals[0] if self.totals else 0.0


def energy_report(ens: ParticleEnsemble | None, fluid: FluidState, eps: float,
                  history: EnergyTracker | None = None) -> EnergyReport:
    """Energy snapshot; with a ``history`` the snapshot is appended and the
    residual is measured from the first recorded time."""
    kin, pot, diss = energy_terms(ens, fluid, eps)
    if history is None:
        return EnergyReport(fluid.t, kin, pot, kin + pot, diss, 0.0, 0.0)
    return history.record(fluid.t, kin, pot, diss)


def delta_star(tol: float = 1e-14) -> float:
    """Positive root of ``d exp(d) = 1/9`` by Newton's method."""
    d = 0.1
    for _ in range(50):
        f = d * math.exp(d) - 1.0 / 9.0
        step = f / ((1.0 + d) * math.exp(d))
        d -= step
        if abs(step) < tol:
            break
    return d


def hminus1_norm(theta: ScalarField) -> float:
    """Dual norm of H^1_0 computed spectrally.

    Horizontal axes use Fourier modes; on a walled grid the vertical axis
    uses the Dirichlet sine modes ``sin(pi m z / Lz)`` (a type-II DST on cell
    centres).  Each mode is weighted by ``1/(1 + |k|^2)``.
    """
    g = theta.grid
    a = np.asarray(theta.values, dtype=float)
    d = g.dim
    if g.walls:
        a = sfft.dst(a, type=2, axis=-1, norm="ortho")
        hat = sfft.fftn(a, axes=tuple(range(d - 1)), norm="ortho")
    else:
        hat = sfft.fftn(a, norm="ortho")
    k2 = 0.0
    for ax in range(d):
        n, L = g.cells[ax], g.domain.extents[ax]
        if ax == d - 1 and g.walls:
            k = np.pi * np.arange(1, n + 1) / L
        else:
            k = 2 * np.pi * np.fft.fftfreq(n, d=1.0 / n) / L
        shape = [1] * d
        shape[ax] = n
        k2 = k2 + (k ** 2).reshape(shape)
    return float(math.sqrt(g.cell_volume * np.sum(np.abs(hat) ** 2 / (1.0 + k2))))


def fit_loglog(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def decay_fit(series, window, floor: bool = False) -> float:
    """Slope of ``log(value)`` against ``log(1 + t)`` over ``window``.

    Nonpositive values are rejected unless ``floor`` is set, in which case they
    are raised to machine epsilon.
    """
    arr = np.asarray(series, dtype=float).reshape(-1, 2)
    ta, tb = window
    sel = arr[(arr[:, 0] >= ta) & (arr[:, 0] <= tb)]
    if len(sel) < 5:
        raise ValueError(f"decay_fit needs at least 5 samples in window, got {len(sel)}")
    vals = sel[:, 1]
    if np.any(vals <= 0):
        if not floor:
            raise ValueError("decay_fit needs positive values (pass floor=True to clamp)")
        vals = np.maximum(vals, np.finfo(float).eps)
    return fit_loglog(1.0 + sel[:, 0], vals)


# --- monitors -------------------------------------------------------------------

@dataclass(frozen=True)
class MonitorReport:
    t: float
    nabla_u_L1Linf: float
    u_L1Linf: float
    upsilon: float
    delta_star: float

    @property
    def regime(self) -> str:
        return "change-of-variable" if self.nabla_u_L1Linf < self.delta_star else "warning"

    def to_dict(self):
        d = asdict(self)
        d["regime"] = self.regime
        return d


class MonitorTracker:
    """Running trapezoidal integrals of the smallness monitors."""

    def __init__(self, u0: VectorField):
        self.h1_sq = u0.l2_norm_sq() + grad_norm_sq(u0)
        self.delta = delta_star()
        self._last = None
        self.nabla = self.uinf = self.f2 = self.f1 = 0.0

    def record(self, t, u: VectorField, brinkman_l2: float = 0.0) -> MonitorReport:
        cur = (t, grad_max(u), u.max_abs(), brinkman_l2)
        if self._last is not None:
            t0, g0, u0, b0 = self._last
            dt = t - t0
            self.nabla += 0.5 * dt * (g0 + cur[1])
            self.uinf += 0.5 * dt * (u0 + cur[2])
            self.f2 += 0.5 * dt * (b0 ** 2 + brinkman_l2 ** 2)
            self.f1 += 0.5 * dt * (b0 + brinkman_l2)
        self._last = cur
        return MonitorReport(t, self.nabla, self.uinf, self.h1_sq + self.f2 + self.f1, self.delta)


def monitor_report(history) -> MonitorReport:
    """Monitors from a history of ``(t, u, brinkman_l2)`` triples."""
    history = list(history)
    if not history:
        raise ValueError("empty history")
    tr = MonitorTracker(history[0][1])
    rep = None
    for t, u, b in history:
        rep = tr.record(t, u, b)
    return rep


# --- convergence ------------------------------------------------------------------

@dataclass(frozen=True)
class Snapshot:
    t: float
    u: VectorField
    rho: ScalarField
    gap_sq: float = 0.0  # running int_0^t ||F + rho e_z||^2


@dataclass(frozen=True)
class ConvergenceReport:
    eps: tuple[float, ...]
    u_err_L2: tuple[float, ...]
    rho_err_Hm1: tuple[float, ...]
    brinkman_gravity_gap: tuple[float, ...]
    slope: float | None
    gap_slope: float | None = None

    @property
    def total_error(self) -> tuple[float, ...]:
        return tuple(a + b for a, b in zip(self.u_err_L2, self.rho_err_Hm1))

    def rows(self):
        for i, e in enumerate(self.eps):
            yield {"eps": e, "u_err_L2": self.u_err_L2[i], "rho_err_Hm1": self.rho_err_Hm1[i],
                   "total_error": self.total_error[i],
                   "brinkman_gravity_gap": self.brinkman_gravity_gap[i]}

    def to_dict(self):
        return {"rows": list(self.rows()), "slope": self.slope, "gap_slope": self.gap_slope}


def _safe_slope(x, y):
    if len(x) < 3 or any(v <= 0 for v in y):
        return None
    return fit_loglog(x, y)


def convergence_report(vns_runs: dict, limit_run, checkpoints=None) -> ConvergenceReport:
    """Compare per-eps snapshot series with the limit series at common times.

    ``vns_runs`` maps eps to a list of :class:`Snapshot`; ``limit_run`` is a
    list of snapshots at the same times and on the same grid.
    """
    lim = {round(s.t, 12): s for s in limit_run}
    eps_list = sorted(vns_runs, reverse=True)
    ue, re, gaps = [], [], []
    for e in eps_list:
        series = vns_runs[e]
        if checkpoints is not None:
            want = {round(t, 12) for t in checkpoints}
            series = [s for s in series if round(s.t, 12) in want]
        if not series:
            raise ValueError(f"no snapshots for eps={e}")
        worst_u = worst_r = 0.0
        for s in series:
            ref = lim.get(round(s.t, 12))
            if ref is None:
                raise ValueError(f"limit run has no snapshot at t={s.t}")
            if ref.u.grid != s.u.grid:
                raise ValueError("VNS and limit runs use different grids")
            worst_u = max(worst_u, math.sqrt((s.u - ref.u).l2_norm_sq()))
            diff = ScalarField(s.rho.grid, s.rho.values - ref.rho.values)
            worst_r = max(worst_r, hminus1_norm(diff))
        ue.append(worst_u)
        re.append(worst_r)
        gaps.append(math.sqrt(vns_runs[e][-1].gap_sq))
    total = [a + b for a, b in zip(ue, re)]
    return ConvergenceReport(tuple(eps_list), tuple(ue), tuple(re), tuple(gaps),
                             _safe_slope(eps_list, total), _safe_slope(eps_list, gaps))
