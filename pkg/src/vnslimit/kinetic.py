"""Particle representation of the droplet distribution.

Each particle carries a fixed mass (weight).  Weights never change along the
flow even though the velocity-space volume contracts; removal at the
absorbing wall moves the mass to a ledger so the total is always accounted for.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.special import ndtri

from .characteristics import _interp_extended, crossing_time, push_arrays
from .grid import (Grid, ScalarField, VectorField, cell_average, deposit_component,
                   interpolate_many)

ALIVE, ABSORBED, TRUNCATED = 0, 1, 2


@dataclass(frozen=True)
class InitialKineticSpec:
    """Initial droplet data.

    ``density`` is either ``"blob"`` (a compactly supported cos^2 bump of the
    given ``center`` and ``radius``) or a callable ``rho0(*coords)`` evaluated on
    the grid; it is rescaled to total ``mass``.  Velocities are Gaussian with
    temperature ``temperature`` around ``mean_velocity`` (a constant vector) or,
    when that is ``None``, around ``u0 - e_z``.
    """

    n_particles: int = 20_000
    mass: float = 1.0
    density: str | Callable = "blob"
    center: tuple[float, ...] = (2.0, 2.5)
    radius: float = 0.75
    temperature: float = 0.0
    mean_velocity: tuple[float, ...] | None = None
    refine: int = 4

    def __post_init__(self):
        if self.n_particles < 0 or self.mass < 0 or self.temperature < 0:
            raise ValueError("particle count, mass and temperature must be nonnegative")
        if self.radius <= 0 or self.refine < 1:
            raise ValueError("radius and refine must be positive")


def blob_density(center, radius):
    """cos^2 bump supported in the ball of ``radius`` around ``center``."""
    center = np.asarray(center, dtype=float)

    def rho(*coords):
        r2 = sum((c - x0) ** 2 for c, x0 in zip(coords, center))
        r = np.sqrt(r2) / radius
        return np.where(r < 1.0, np.cos(0.5 * np.pi * np.minimum(r, 1.0)) ** 2, 0.0)

    return rho


@dataclass
class ParticleEnsemble:
    positions: np.ndarray
    velocities: np.ndarray
    weights: np.ndarray
    status: np.ndarray
    absorbed_mass: float = 0.0
    truncated_mass: float = 0.0
    initial_mass: float = 0.0
    exit_times: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.velocities = np.asarray(self.velocities, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.status = np.asarray(self.status, dtype=np.int8)
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        if self.exit_times is None:
            self.exit_times = np.full(len(self.weights), np.nan)

    @classmethod
    def empty(cls, dim=2):
        z = np.zeros((0, dim))
        return cls(z, z.copy(), np.zeros(0), np.zeros(0, dtype=np.int8))

    @classmethod
    def from_arrays(cls, positions, velocities, weights):
        w = np.asarray(weights, dtype=float)
        return cls(positions, velocities, w, np.zeros(len(w), dtype=np.int8), 0.0, 0.0,
                   math.fsum(w))

    @property
    def alive(self) -> np.ndarray:
        return self.status == ALIVE

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def __len__(self):
        return len(self.weights)

    @property
    def alive_mass(self) -> float:
        return math.fsum(self.weights[self.alive])

    def ledger_error(self) -> float:
        """Relative mismatch of alive + absorbed + truncated against the initial mass."""
        total = math.fsum([self.alive_mass, self.absorbed_mass, self.truncated_mass])
        if self.initial_mass == 0:
            return abs(total)
        return abs(total - self.initial_mass) / self.initial_mass

    def copy(self) -> "ParticleEnsemble":
        return ParticleEnsemble(self.positions.copy(), self.velocities.copy(), self.weights.copy(),
                                self.status.copy(), self.absorbed_mass, self.truncated_mass,
                                self.initial_mass, self.exit_times.copy())


@dataclass(frozen=True)
class KineticMoments:
    rho: ScalarField
    j: VectorField
    brinkman: VectorField
    fluid_force: VectorField = field(repr=False, default=None)


def _stratified_positions(grid: Grid, rho_fn, n, refine, rng):
    d = grid.dim
    cells = tuple(c * refine for c in grid.cells)
    h = tuple(s / refine for s in grid.spacing)
    axes = [(np.arange(c) + 0.5) * hh for c, hh in zip(cells, h)]
    mesh = np.meshgrid(*axes, indexing="ij")
    dens = np.asarray(rho_fn(*mesh), dtype=float)
    if np.any(dens < 0) or not np.all(np.isfinite(dens)):
        raise ValueError("initial density must be finite and nonnegative")
    if grid.walls and (dens[..., 0].any() or dens[..., -1].any()):
        raise ValueError("initial density support touches z=0 or z=Lz")
    cdf = np.cumsum(dens.ravel())
    if cdf[-1] <= 0:
        raise ValueError("initial density has zero mass")
    cdf /= cdf[-1]
    u = (np.arange(n) + rng.random(n)) / n
    k = np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)
    idx = np.unravel_index(k, cells)
    jitter = rng.random((n, d))
    return np.stack([(idx[a] + jitter[:, a]) * h[a] for a in range(d)], axis=1)


def sample_initial(spec: InitialKineticSpec, grid: Grid, seed: int = 0,
                   u0: VectorField | None = None) -> ParticleEnsemble:
    """Equal-weight particles: stratified positions, inverse-CDF Gaussian velocities.

    Positions are drawn before velocities, so two specs differing only in the
    velocity law share the same particle positions for a given seed.
    """
    d = grid.dim
    n = spec.n_particles
    if spec.density == "blob":
        c = np.asarray(spec.center, dtype=float)
        if c.size != d:
            raise ValueError(f"blob center needs {d} coordinates")
        if grid.walls and (c[-1] - spec.radius <= 0 or c[-1] + spec.radius >= grid.domain.vertical_extent):
            raise ValueError("blob support touches z=0 or z=Lz")
        rho_fn = blob_density(c, spec.radius)
    elif callable(spec.density):
        rho_fn = spec.density
    else:
        raise ValueError(f"unknown density {spec.density!r}")
    if n == 0:
        return ParticleEnsemble.empty(d)
    rng = np.random.default_rng(seed)
    x = _stratified_positions(grid, rho_fn, n, spec.refine, rng)
    if spec.mean_velocity is not None:
        vbar = np.broadcast_to(np.asarray(spec.mean_velocity, dtype=float), (n, d)).copy()
    else:
        vbar = np.zeros((n, d)) if u0 is None else interpolate_many(u0, x)
        vbar[:, -1] -= 1.0
    ug = rng.random((n, d))
    v = vbar
    if spec.temperature > 0:
        v = vbar + math.sqrt(spec.temperature) * ndtri(ug)
    w = np.full(n, spec.mass / n)
    return ParticleEnsemble.from_arrays(x, v, w)


def deposit(ens: ParticleEnsemble, u: VectorField) -> KineticMoments:
    """Cloud-in-cell moments at cell centres, plus the MAC drag force on the fluid.

    ``brinkman`` is ``j - rho * u_c`` with ``u_c`` the cell average of ``u``.
    ``fluid_force`` is the particle drag ``w (v - u(x))`` scattered with the
    exact transpose of the velocity interpolation, which keeps the discrete
    energy exchange between particles and fluid balanced.
    """
    g = u.grid
    d = g.dim
    vol = g.cell_volume
    m = ens.alive if len(ens) else np.zeros(0, dtype=bool)
    x, v, w = ens.positions[m], ens.velocities[m], ens.weights[m]
    rho = deposit_component(g, None, x, w) / vol
    j = [deposit_component(g, None, x, w * v[:, a]) / vol for a in range(d)]
    uc = cell_average(u).components
    brink = [j[a] - rho * uc[a] for a in range(d)]
    force = [np.zeros(g.face_shape(a)) for a in range(d)]
    if len(x):
        slip = v - interpolate_many(u, x)
        for a in range(d):
            force[a] = deposit_component(g, a, x, w * slip[:, a], mode="adjoint") / vol
        if g.walls:
            force[-1][..., 0] = 0.0
            force[-1][..., -1] = 0.0
    return KineticMoments(ScalarField(g, rho), VectorField(g, tuple(j), "cell"),
                          VectorField(g, tuple(brink), "cell"), VectorField(g, tuple(force)))


def advance_particles(ens: ParticleEnsemble, u: VectorField | None, eps: float, dt: float,
                      t0: float = 0.0, grid: Grid | None = None) -> ParticleEnsemble:
    """Push every alive particle through ``dt`` with the fluid velocity frozen.

    The closed-form push is exact in ``eps`` for constant ``u``, so sub-steps
    only resolve the grid: each moves a particle at most one cell.  Crossing
    ``z = 0`` absorbs the particle; crossing the lid removes it as truncation.
    """
    if eps <= 0 or dt <= 0:
        raise ValueError("eps and dt must be positive")
    grid = u.grid if u is not None else grid
    out = ens.copy()
    if len(out) == 0 or not out.alive.any():
        return out
    idx = np.flatnonzero(out.alive)
    x, v = out.positions[idx], out.velocities[idx]
    d = x.shape[1]
    umax = 0.0 if u is None else u.max_abs()
    n_sub = 1
    if grid is not None:
        vmax = max(float(np.abs(v).max()), umax + 1.0)
        n_sub = max(1, math.ceil(dt * vmax / min(grid.spacing)))
    step = dt / n_sub
    absorbed, truncated = [out.absorbed_mass], [out.truncated_mass]
    live = np.ones(len(idx), dtype=bool)
    for s in range(n_sub):
        k = np.flatnonzero(live)
        if k.size == 0:
            break
        uk = np.zeros((k.size, d)) if u is None else _interp_extended(u, x[k])
        xn, vn = push_arrays(x[k], v[k], uk, eps, step)
        if grid is not None:
            for a in range(d - 1):
                xn[:, a] = np.mod(xn[:, a], grid.domain.extents[a])
        bottom = xn[:, -1] <= 0.0
        if bottom.any():
            b = k[bottom]
            tc = crossing_time(x[b, -1], v[b, -1], uk[bottom, -1], eps, step)
            out.exit_times[idx[b]] = t0 + s * step + tc
            out.status[idx[b]] = ABSORBED
            absorbed.extend(out.weights[idx[b]])
            live[b] = False
        if grid is not None and grid.walls:
            top = (xn[:, -1] >= grid.domain.vertical_extent) & ~bottom
            if top.any():
                tp = k[top]
                out.status[idx[tp]] = TRUNCATED
                truncated.extend(out.weights[idx[tp]])
                live[tp] = False
        x[k], v[k] = xn, vn
    out.positions[idx], out.velocities[idx] = x, v
    out.absorbed_mass = math.fsum(absorbed)
    out.truncated_mass = math.fsum(truncated)
    return out


def monokinetic_functional(ens: ParticleEnsemble, u: VectorField | None) -> float:
    """``sum w |v - (u(x) - e_z)|^2`` over alive particles."""
    m = ens.alive
    if not m.any():
        return 0.0
    x, v, w = ens.positions[m], ens.velocities[m], ens.weights[m]
    target = np.zeros_like(v) if u is None else _interp_extended(u, x)
    target[:, -1] -= 1.0
    return float(np.sum(w * np.sum((v - target) ** 2, axis=1)))
