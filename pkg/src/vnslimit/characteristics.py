"""Particle characteristics of the friction-gravity Vlasov equation.

Along a characteristic ``dX/ds = V`` and ``eps dV/ds = u(X) - e_z - V``.  For a
velocity ``u`` frozen over a step the system integrates in closed form, which
gives an update that is exact for constant ``u`` and stays stable and
consistent as ``eps -> 0`` (the velocity collapses onto ``u - e_z``).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, VectorField, interpolate_many

__all__ = [
    "PhasePoint", "ExitTimes", "EgcQuery", "EgcResult", "free_flow", "push_exponential",
    "push_arrays", "velocity_jacobian", "exit_time_free", "free_fall_horizon", "egc_check",
    "egc_bounds", "egc_transfer_eps_bound", "crossing_time", "StaticField", "VelocitySeries",
]


@dataclass(frozen=True)
class PhasePoint:
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if x.shape != v.shape or not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise ValueError("phase point needs finite x and v of equal length")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)


@dataclass(frozen=True)
class ExitTimes:
    backward: float
    forward: float  # math.inf when the trajectory never leaves


def _gravity(dim):
    g = np.zeros(dim)
    g[-1] = 1.0
    return g


def _relax(eps, dt):
    """Return ``(e^{-dt/eps}, 1 - e^{-dt/eps}, eps (1 - e^{-dt/eps}))`` without cancellation."""
    a = -math.expm1(-dt / eps)
    return 1.0 - a, a, eps * a


def push_arrays(x, v, u, eps, dt):
    """Vectorised exponential push; ``u`` broadcasts against ``x``."""
    decay, a, ea = _relax(eps, dt)
    target = np.asarray(u, dtype=float) - _gravity(np.shape(x)[-1])
    x_new = x + ea * v + (dt - ea) * target
    v_new = decay * v + a * target
    return x_new, v_new


def push_exponential(p: PhasePoint, u_at_p, eps: float, dt: float) -> PhasePoint:
    """Advance ``p`` by ``dt`` with the fluid velocity frozen at ``u_at_p``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x, v = push_arrays(p.x, p.v, u_at_p, eps, dt)
    return PhasePoint(x, v)


def free_flow(p: PhasePoint, eps: float, dt: float) -> PhasePoint:
    """Closed-form motion under drag and gravity only (fluid at rest)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    decay, _, ea = _relax(eps, dt)
    g = _gravity(p.x.size)
    x = p.x + ea * (p.v + g) - dt * g
    v = decay * (p.v + g) - g
    return PhasePoint(x, v)


def velocity_jacobian(eps: float, dt: float, dim: int = 3) -> float:
    """Phase-space Jacobian ``exp(dim * dt / eps)`` of the characteristic flow."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    expo = dim * dt / eps
    if expo > 709.0:
        return math.inf
    return math.exp(expo)


def _free_height(t, z0, c, eps):
    return z0 + eps * (-np.expm1(-t / eps)) * c - t


def exit_time_free(z0: float, vz0: float, eps: float, tol: float = 1e-12) -> float:
    """First time the free-fall height ``z0 + eps(1-e^{-t/eps})(vz0+1) - t`` hits zero."""
    if z0 <= 0:
        raise ValueError("z0 must be positive")
    c = vz0 + 1.0
    if c == 0.0:
        return float(z0)
    lo, hi = 0.0, z0 + eps * max(c, 0.0)
    while _free_height(hi, z0, c, eps) > 0.0:
        hi *= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _free_height(mid, z0, c, eps) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def free_fall_horizon(L: float, R: float, eps: float) -> float:
    """Time by which every free trajectory from height < L with speed < R has left."""
    return L + eps * (1.0 + R)


def egc_bounds(eps: float, L: float, R: float, s: float) -> tuple[float, float]:
    """Box enlargements ``(l, r)`` such that the rest field satisfies the exit
    condition on heights ``< L + l`` and speeds ``< R + r`` at horizon ``s``."""
    if s <= 0 or eps <= 0:
        raise ValueError("s and eps must be positive")
    ea = eps * (-math.expm1(-s / eps))
    ell = 0.5 * (s - ea) - L
    r = 0.5 * (s / ea - 1.0) - R
    return ell, r


def egc_transfer_eps_bound(eps0: float) -> float:
    """Friction parameters below ``eps0 / (2 eps0 + 1)`` inherit the enlarged-box
    exit condition established at ``eps0``."""
    if eps0 <= 0:
        raise ValueError("eps0 must be positive")
    if math.isinf(eps0):
        return 0.5
    return eps0 / (2.0 * eps0 + 1.0)


def crossing_time(z, vz, uz, eps, dt, iters=60):
    """Time in ``[0, dt]`` at which the closed-form in-step height reaches 0.

    Arrays are assumed to start above the wall and end at or below it.
    """
    z = np.asarray(z, dtype=float)
    lo = np.zeros_like(z)
    hi = np.full_like(z, dt)
    target = np.asarray(uz, dtype=float) - 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        ea = eps * (-np.expm1(-mid / eps))
        h = z + ea * vz + (mid - ea) * target
        above = h > 0.0
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return 0.5 * (lo + hi)


# --- exit geometric condition --------------------------------------------------

@dataclass(frozen=True)
class EgcQuery:
    L: float
    R: float
    T: float
    eps: float
    resolution: int = 21

    def __post_init__(self):
        if min(self.L, self.R, self.T, self.eps) <= 0:
            raise ValueError("L, R, T and eps must be positive")
        if self.resolution < 2:
            raise ValueError("need at least 2 samples per axis")


@dataclass(frozen=True)
class EgcResult:
    satisfied: bool
    worst_exit_time: float
    worst_sample: PhasePoint
    samples: int
    query: EgcQuery = field(repr=False)

    def to_dict(self) -> dict:
        wt = self.worst_exit_time
        return {
            "satisfied": bool(self.satisfied),
            "worst_exit_time": None if math.isinf(wt) else wt,
            "worst_sample": {"x": self.worst_sample.x.tolist(), "v": self.worst_sample.v.tolist()},
            "samples": self.samples,
            "epsilon": self.query.eps,
            "L": self.query.L,
            "R": self.query.R,
            "T": self.query.T,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class StaticField:
    """Time-independent velocity source; ``None`` means the fluid at rest."""

    def __init__(self, field: VectorField | None = None, dim: int = 2):
        self.field = field
        self.dim = field.grid.dim if field is not None else dim
        self.t0, self.t1 = 0.0, math.inf

    @property
    def spacing(self):
        return None if self.field is None else min(self.field.grid.spacing)

    def max_speed(self):
        return 0.0 if self.field is None else self.field.max_abs()

    def at(self, t, positions):
        if self.field is None:
            return np.zeros_like(positions)
        return _interp_extended(self.field, positions)


class VelocitySeries:
    """Piecewise-constant-in-time velocity record ``[(t_k, u_k)]``; ``u_k`` holds on
    ``[t_k, t_{k+1})``.  With ``hold_last`` the final field is held forever,
    otherwise the record ends one spacing after the last time."""

    def __init__(self, times, fields, max_gap=None, hold_last=False):
        times = np.asarray(times, dtype=float)
        if len(times) == 0 or len(times) != len(fields):
            raise ValueError("need matching, non-empty times and fields")
        if np.any(np.diff(times) <= 0):
            raise ValueError("velocity series times must be strictly increasing")
        gaps = np.diff(times)
        if max_gap is not None and len(gaps) and gaps.max() > max_gap:
            raise ValueError(f"velocity series has a gap of {gaps.max():g} > {max_gap:g}")
        self.times = times
        self.fields = list(fields)
        self.dim = self.fields[0].grid.dim
        self.t0 = float(times[0])
        self.t1 = float(times[-1] + (gaps[-1] if len(gaps) else math.inf))
        if hold_last:
            self.t1 = math.inf

    @property
    def spacing(self):
        return min(self.fields[0].grid.spacing)

    def max_speed(self):
        return max(f.max_abs() for f in self.fields)

    def at(self, t, positions):
        k = int(np.searchsorted(self.times, t, side="right") - 1)
        return _interp_extended(self.fields[max(k, 0)], positions)


def _interp_extended(field, positions):
    """Interpolate with the field extended by zero outside ``0 <= z <= Lz``."""
    out = np.zeros_like(positions)
    inside = field.grid.is_inside(positions)
    if np.any(inside):
        out[inside] = interpolate_many(field, positions[inside])
    return out


def _egc_samples(q: EgcQuery, dim: int, horizontal=None):
    """Tensor grid over ``(0, L] x B(0, R)`` (open velocity ball)."""
    n = q.resolution
    zs = q.L * np.arange(1, n + 1) / n
    axis = q.R * (2.0 * np.arange(1, n + 1) / (n + 1) - 1.0)
    vs = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    vs = vs[np.linalg.norm(vs, axis=1) < q.R]
    if horizontal is None:
        horizontal = np.zeros((1, dim - 1))
    horizontal = np.atleast_2d(horizontal)
    xs = np.array([np.concatenate([h, [z]]) for h in horizontal for z in zs])
    X = np.repeat(xs, len(vs), axis=0)
    V = np.tile(vs, (len(xs), 1))
    return X, V


def egc_check(source, q: EgcQuery, horizontal=None, max_steps: int = 2_000_000) -> EgcResult:
    """Decide whether every sampled trajectory leaves through ``z = 0`` before ``q.T``.

    ``source`` is a :class:`StaticField`, a :class:`VelocitySeries`, a bare
    :class:`VectorField` (held constant) or ``None`` (fluid at rest).
    """
    if source is None or isinstance(source, VectorField):
        source = StaticField(source, dim=2 if source is None else source.grid.dim)
    if source.t0 > 0.0 or source.t1 < q.T:
        raise ValueError("velocity series does not span [0, T]")
    X, V = _egc_samples(q, source.dim, horizontal)
    n = len(X)
    exit_t = np.full(n, math.inf)
    alive = np.ones(n, dtype=bool)
    vmax = max(q.R, 1.0) + 2.0 * source.max_speed() + 1.0
    dt = min(q.eps, q.T / 64.0)
    if source.spacing is not None:
        dt = min(dt, source.spacing / vmax)
    t = 0.0
    steps = 0
    while t < q.T and alive.any():
        step = min(dt, q.T - t)
        idx = np.flatnonzero(alive)
        u = source.at(t, X[idx])
        xn, vn = push_arrays(X[idx], V[idx], u, q.eps, step)
        hit = xn[:, -1] <= 0.0
        if hit.any():
            h = idx[hit]
            exit_t[h] = t + crossing_time(X[h, -1], V[h, -1], u[hit, -1], q.eps, step)
            alive[h] = False
        X[idx], V[idx] = xn, vn
        t += step
        steps += 1
        if steps > max_steps:
            raise RuntimeError("egc_check exceeded its step budget")
    worst = int(np.argmax(exit_t))  # first index among ties
    X0, V0 = _egc_samples(q, source.dim, horizontal)
    wt = float(exit_t[worst])
    return EgcResult(bool(wt < q.T), wt, PhasePoint(X0[worst], V0[worst]), n, q)
