"""Incompressible flow on the strip and the limit Boussinesq-type system.

The Navier-Stokes step is a non-incremental projection method on the MAC grid:
advection (energy-conserving skew-symmetric form, or second-order upwind),
diffusion (explicit, or backward Euler), a body force, then an exact discrete
Helmholtz projection.  All elliptic solves are diagonalised by fast transforms:
FFT along the periodic axes and the sine/cosine transform matching each
component's wall conditions along z.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft as sfft
from scipy.sparse.linalg import LinearOperator, cg

from .grid import (
    Grid, ScalarField, VectorField, center_to_face, deposit_component, diff_center_to_face,
    diff_face_to_center, discrete_div, discrete_grad, face_to_center, interpolate_many,
    wall_rows_zero,
)

NU = 1.0


class CFLError(RuntimeError):
    """Time step above the stability bound; ``suggested_dt`` satisfies it."""

    def __init__(self, dt, bound):
        self.dt = dt
        self.suggested_dt = 0.9 * bound
        super().__init__(f"dt={dt:.6g} exceeds stability bound {bound:.6g}; "
                         f"try dt={self.suggested_dt:.6g}")


class StokesError(RuntimeError):
    def __init__(self, residual, iterations):
        self.residual = residual
        super().__init__(f"Stokes solve did not converge: residual {residual:.3e} "
                         f"after {iterations} iterations")


@dataclass(frozen=True)
class FluidState:
    u: VectorField
    p: ScalarField
    t: float = 0.0

    @classmethod
    def rest(cls, grid, t=0.0):
        return cls(VectorField.zeros(grid), ScalarField.zeros(grid), t)


# --- fast elliptic solvers ------------------------------------------------------

class _Spectral:
    """Diagonalisation of the MAC Laplacians on one grid."""

    def __init__(self, grid: Grid):
        self.grid = grid
        d = grid.dim
        self.hax = tuple(range(d - 1)) if grid.walls else tuple(range(d))
        lam_h = 0.0
        for k, a in enumerate(self.hax):
            n, h = grid.cells[a], grid.spacing[a]
            m = np.fft.rfftfreq(n) * n if k == len(self.hax) - 1 else np.fft.fftfreq(n) * n
            lam = (2.0 - 2.0 * np.cos(2.0 * np.pi * m / n)) / h ** 2
            shape = [1] * d
            shape[a] = lam.size
            lam_h = lam_h + lam.reshape(shape)
        self.lam_h = lam_h
        if grid.walls:
            nz, hz = grid.cells[-1], grid.spacing[-1]
            shape = [1] * (d - 1) + [-1]
            k = np.arange(nz)
            self.lam_p = (2 - 2 * np.cos(np.pi * k / nz)).reshape(shape) / hz ** 2
            self.lam_t = (2 - 2 * np.cos(np.pi * (k + 0.5) / nz)).reshape(shape) / hz ** 2
            k1 = np.arange(1, nz)
            self.lam_n = (2 - 2 * np.cos(np.pi * k1 / nz)).reshape(shape) / hz ** 2

    # forward/backward transforms for the three boundary-condition families
    def _fwd(self, a, kind):
        if self.grid.walls:
            if kind == "p":
                a = sfft.dct(a, type=2, axis=-1, norm="ortho")
            elif kind == "t":
                a = sfft.dst(a, type=4, axis=-1, norm="ortho")
            else:
                a = sfft.dst(a[..., 1:-1], type=1, axis=-1, norm="ortho")
        return sfft.rfftn(a, axes=self.hax)

    def _bwd(self, a, kind):
        shape = list(self.grid.cells)
        if self.grid.walls and kind == "n":
            shape[-1] -= 1
        a = sfft.irfftn(a, s=[shape[ax] for ax in self.hax], axes=self.hax)
        if not self.grid.walls:
            return a
        if kind == "p":
            return sfft.idct(a, type=2, axis=-1, norm="ortho")
        if kind == "t":
            return sfft.idst(a, type=4, axis=-1, norm="ortho")
        out = np.zeros(a.shape[:-1] + (a.shape[-1] + 2,))
        out[..., 1:-1] = sfft.idst(a, type=1, axis=-1, norm="ortho")
        return out

    def _lam(self, kind):
        if not self.grid.walls:
            return self.lam_h
        return self.lam_h + {"p": self.lam_p, "t": self.lam_t, "n": self.lam_n}[kind]

    def poisson(self, rhs):
        """Mean-zero solution of the Neumann problem ``lap p = rhs``."""
        lam = self._lam("p")
        hat = self._fwd(rhs, "p")
        with np.errstate(divide="ignore", invalid="ignore"):
            hat = np.where(lam > 0, -hat / np.where(lam > 0, lam, 1.0), 0.0)
        return self._bwd(hat, "p")

    def helmholtz(self, comps, alpha, beta):
        """Solve ``(alpha - beta lap) u = rhs`` componentwise with the velocity BCs."""
        out = []
        d = self.grid.dim
        for a, rhs in enumerate(comps):
            kind = "n" if (a == d - 1) else "t"
            lam = self._lam(kind)
            denom = alpha + beta * lam
            hat = self._fwd(rhs, kind)
            with np.errstate(divide="ignore", invalid="ignore"):
                hat = np.where(denom != 0, hat / np.where(denom != 0, denom, 1.0), 0.0)
            out.append(self._bwd(hat, kind))
        return out


@functools.lru_cache(maxsize=32)
def spectral(grid: Grid) -> _Spectral:
    return _Spectral(grid)


# --- MAC operators on raw component arrays -----------------------------------

_TANGENT = (-1.0, 1.0)  # ghost signs: no-slip bottom, free-slip top


def _zsigns(grid, comp, axis):
    """Ghost signs when moving component ``comp`` from centres to faces along ``axis``."""
    return _TANGENT if (axis == grid.dim - 1 and comp != axis) else (1.0, 1.0)


def vector_laplacian(comps, grid):
    out = []
    for i, ui in enumerate(comps):
        acc = np.zeros_like(ui)
        for j in range(grid.dim):
            if i == j:
                acc = acc + diff_center_to_face(diff_face_to_center(ui, j, grid), j, grid)
            else:
                b, t = _zsigns(grid, i, j)
                acc = acc + diff_face_to_center(diff_center_to_face(ui, j, grid, b, t), j, grid)
        out.append(wall_rows_zero(acc, grid) if i == grid.dim - 1 else acc)
    return out


def grad_norm_sq(u: VectorField) -> float:
    """``||grad u||^2`` with the weights that make ``-<u, lap u> = ||grad u||^2`` exact."""
    g = u.grid
    total = 0.0
    for i, ui in enumerate(u.components):
        for j in range(g.dim):
            if i == j:
                d = diff_face_to_center(ui, j, g)
                total += float((d ** 2).sum())
            else:
                b, t = _zsigns(g, i, j)
                d = diff_center_to_face(ui, j, g, b, t)
                sq = d ** 2
                if j == g.dim - 1 and g.walls:
                    sq[..., 0] *= 0.5
                    sq[..., -1] *= 0.5
                total += float(sq.sum())
    return total * g.cell_volume


def grad_max(u: VectorField) -> float:
    """Grid maximum of all first differences of ``u``."""
    g = u.grid
    m = 0.0
    for i, ui in enumerate(u.components):
        for j in range(g.dim):
            if i == j:
                d = diff_face_to_center(ui, j, g)
            else:
                b, t = _zsigns(g, i, j)
                d = diff_center_to_face(ui, j, g, b, t)
            m = max(m, float(np.abs(d).max()))
    return m


def advection_skew(comps, grid):
    """``(u . grad) u`` in the skew-symmetric form: ``sum_i u_i N_i = 0`` exactly."""
    d = grid.dim
    out = []
    for i in range(d):
        acc = np.zeros_like(comps[i])
        for j in range(d):
            if i == j:
                q = face_to_center(comps[j], j, grid)
                r = q
                div = diff_center_to_face(q * r, j, grid)
                dd = diff_face_to_center(comps[i], j, grid)
                adv = center_to_face(q * dd, j, grid)
            else:
                bi, ti = _zsigns(grid, j, i)
                q = center_to_face(comps[j], i, grid, bi, ti)
                bj, tj = _zsigns(grid, i, j)
                r = center_to_face(comps[i], j, grid, bj, tj)
                div = diff_face_to_center(q * r, j, grid)
                dd = diff_center_to_face(comps[i], j, grid, bj, tj)
                adv = face_to_center(q * dd, j, grid)
            acc = acc + 0.5 * (div + adv)
        out.append(wall_rows_zero(acc, grid) if i == d - 1 else acc)
    return out


def _pad2(a, axis, grid, signs):
    """Two ghost layers along ``axis`` (periodic wrap or signed reflection)."""
    if axis == grid.dim - 1 and grid.walls:
        b, t = signs
        n = a.shape[axis]
        lo = np.take(a, [1, 0], axis=axis) * b
        hi = np.take(a, [n - 1, n - 2], axis=axis) * t
        return np.concatenate([lo, a, hi], axis=axis)
    return np.concatenate([np.take(a, [-2, -1], axis=axis), a, np.take(a, [0, 1], axis=axis)],
                          axis=axis)


def advection_upwind(comps, grid):
    """Second-order upwind ``(u . grad) u`` (robust fallback)."""
    d = grid.dim
    out = []
    for i in range(d):
        ui = comps[i]
        acc = np.zeros_like(ui)
        for j in range(d):
            if j == i:
                a = ui
            else:
                b, t = _zsigns(grid, j, i)
                a = center_to_face(face_to_center(comps[j], j, grid), i, grid, b, t)
            if j == d - 1 and grid.walls and i == j:
                # wall-normal velocity: odd reflection about the wall faces
                m = ui.shape[j]
                lo = -np.take(ui, [2, 1], axis=j)
                hi = -np.take(ui, [m - 2, m - 3], axis=j)
                p = np.concatenate([lo, ui, hi], axis=j)
            elif j == d - 1 and grid.walls:
                p = _pad2(ui, j, grid, _TANGENT)
            else:
                p = _pad2(ui, j, grid, (1.0, 1.0))
            n = ui.shape[j]
            h = grid.spacing[j]

            def s(k):
                idx = [slice(None)] * ui.ndim
                idx[j] = slice(2 + k, 2 + k + n)
                return p[tuple(idx)]

            back = (3 * s(0) - 4 * s(-1) + s(-2)) / (2 * h)
            fwd = (-3 * s(0) + 4 * s(1) - s(2)) / (2 * h)
            acc = acc + np.where(a > 0, a * back, a * fwd)
        out.append(wall_rows_zero(acc, grid) if i == d - 1 else acc)
    return out


def project(comps, grid, dt=1.0):
    """Exact discrete Helmholtz projection; returns ``(u, phi)`` with ``u = u* - grad phi``."""
    comps = [np.array(c) for c in comps]
    if grid.walls:
        comps[-1] = wall_rows_zero(comps[-1], grid)
    div = sum(diff_face_to_center(c, a, grid) for a, c in enumerate(comps))
    phi = spectral(grid).poisson(div)
    grad = discrete_grad(ScalarField(grid, phi)).components
    return [c - gphi for c, gphi in zip(comps, grad)], phi


def cfl_bound(u: VectorField, implicit=False, nu=NU) -> float:
    g = u.grid
    h = min(g.spacing)
    umax = u.max_abs()
    bound = math.inf if umax == 0 else h / umax
    if not implicit:
        bound = min(bound, h * h / (2 * g.dim * nu))
    return bound


def ns_step(state: FluidState, force: VectorField | None, dt: float, *, advection="skew",
            implicit=False, nu=NU, proj_tol=1e-10, check_cfl=True) -> FluidState:
    """One projection step of ``du/dt + (u.grad)u - nu lap u + grad p = force``.

    ``advection`` is ``"skew"``, ``"upwind"`` or ``None`` (unsteady Stokes).
    """
    g = state.u.grid
    if check_cfl:
        bound = cfl_bound(state.u, implicit, nu)
        if dt > bound * (1 + 1e-12):
            raise CFLError(dt, bound)
    u = state.u.components
    rhs = [np.array(c) for c in u]
    if force is not None:
        if force.staggering != "mac":
            raise ValueError("ns_step expects a MAC force")
        for a in range(g.dim):
            rhs[a] += dt * force.components[a]
    if advection == "skew":
        adv = advection_skew(u, g)
    elif advection == "upwind":
        adv = advection_upwind(u, g)
    elif advection is None:
        adv = None
    else:
        raise ValueError(f"unknown advection scheme {advection!r}")
    if adv is not None:
        for a in range(g.dim):
            rhs[a] -= dt * adv[a]
    if implicit:
        ustar = spectral(g).helmholtz(rhs, 1.0, dt * nu)
    else:
        lap = vector_laplacian(u, g)
        ustar = [r + dt * nu * l for r, l in zip(rhs, lap)]
    unew, phi = project(ustar, g)
    return FluidState(VectorField(g, tuple(unew), div_tol=proj_tol),
                      ScalarField(g, phi / dt), state.t + dt)


def stokes_solve(force: VectorField, tol=1e-8, maxiter=500, nu=NU) -> FluidState:
    """Steady ``-nu lap u + grad p = force``, ``div u = 0``.

    Conjugate gradients on the pressure Schur complement; every inner velocity
    solve is an exact transform-diagonalised Helmholtz inversion.
    """
    g = force.grid
    sp = spectral(g)
    f = [np.array(c) for c in force.components]
    if g.walls:
        f[-1] = wall_rows_zero(f[-1], g)
    n = int(np.prod(g.cells))

    def ainv(comps):
        return sp.helmholtz(comps, 0.0, nu)

    def div(comps):
        return sum(diff_face_to_center(c, a, g) for a, c in enumerate(comps))

    def grad(p):
        return discrete_grad(ScalarField(g, p.reshape(g.cells))).components

    def schur(pflat):
        p = pflat - pflat.mean()
        out = -div(ainv(grad(p))).ravel()
        return out - out.mean()

    rhs = -div(ainv(f)).ravel()
    rhs -= rhs.mean()
    scale = max(float(np.abs(rhs).max()), 1e-300)
    op = LinearOperator((n, n), matvec=schur, dtype=float)
    p, info = cg(op, rhs, rtol=0.0, atol=1e-3 * tol * scale * 1e-3, maxiter=maxiter)
    p = (p - p.mean()).reshape(g.cells)
    gp = grad(p.ravel())
    u = ainv([fc - gc for fc, gc in zip(f, gp)])
    lap = vector_laplacian(u, g)
    mom = [nu * l + fc - gc for l, fc, gc in zip(lap, f, gp)]
    if g.walls:
        mom[-1] = wall_rows_zero(mom[-1], g)
    res = max(max(float(np.abs(m).max()) for m in mom), float(np.abs(div(u)).max()))
    ref = max(1.0, max(float(np.abs(c).max()) for c in f))
    if res > tol * ref:
        raise StokesError(res, maxiter)
    uf = VectorField(g, tuple(u), div_tol=max(tol * ref, 1e-10))
    return FluidState(uf, ScalarField(g, p), 0.0)


# --- limit system -----------------------------------------------------------------

@dataclass(frozen=True)
class LimitState:
    """Fluid plus the limit density.

    The density is carried by Lagrangian mass parcels (positions, masses) that
    move along ``u - e_z``; ``rho`` is their cloud-in-cell deposit.  Nothing
    enters through the lid, so the inflow value at the top is zero.
    """

    fluid: FluidState
    rho: ScalarField
    positions: np.ndarray
    masses: np.ndarray
    absorbed_mass: float = 0.0
    truncated_mass: float = 0.0
    initial_mass: float = 0.0
    steps: int = 0

    @property
    def grid(self):
        return self.fluid.u.grid

    @property
    def mass(self) -> float:
        return math.fsum(self.masses)

    @classmethod
    def from_parcels(cls, fluid: FluidState, positions, masses):
        g = fluid.u.grid
        positions = np.array(positions, dtype=float).reshape(-1, g.dim)
        masses = np.array(masses, dtype=float)
        if np.any(masses < 0):
            raise ValueError("parcel masses must be nonnegative")
        rho = deposit_density(g, positions, masses)
        return cls(fluid, rho, positions, masses, 0.0, 0.0, math.fsum(masses))

    @classmethod
    def from_density(cls, fluid: FluidState, rho0: ScalarField, n_sub: int = 2):
        pos, m = parcels_from_density(rho0, n_sub)
        return cls.from_parcels(fluid, pos, m)


def parcels_from_density(rho: ScalarField, n_sub: int = 2):
    """Split every cell into ``n_sub**d`` parcels at sub-cell centres."""
    g = rho.grid
    if np.any(rho.values < 0):
        raise ValueError("density must be nonnegative")
    axes = []
    for a in range(g.dim):
        h = g.spacing[a]
        sub = (np.arange(g.cells[a] * n_sub) + 0.5) * h / n_sub
        axes.append(sub)
    mesh = np.meshgrid(*axes, indexing="ij")
    pos = np.stack([m.ravel() for m in mesh], axis=1)
    vals = rho.values
    for a in range(g.dim):
        vals = np.repeat(vals, n_sub, axis=a)
    m = vals.ravel() * g.cell_volume / n_sub ** g.dim
    keep = m > 0
    return pos[keep], m[keep]


def deposit_density(grid, positions, masses) -> ScalarField:
    """Cell-centred CIC density; mass on the wall ghost layers folds inward."""
    sums = deposit_component(grid, None, positions, masses, mode="clip")
    return ScalarField(grid, sums / grid.cell_volume)


def gravity_force(grid, positions, masses) -> VectorField:
    """``-rho e_z`` deposited directly on the vertical faces (adjoint kernel)."""
    comps = [np.zeros(grid.face_shape(a)) for a in range(grid.dim)]
    fz = deposit_component(grid, grid.dim - 1, positions, -np.asarray(masses), mode="adjoint")
    comps[-1] = wall_rows_zero(fz / grid.cell_volume, grid)
    return VectorField(grid, tuple(comps))


def limit_step(state: LimitState, dt: float, *, frozen_u=False, advection="skew",
               implicit=False, remap_every: int | None = None, check_cfl=True) -> LimitState:
    """Advance the limit system by ``dt``.

    Parcels move with ``u^n - e_z``; parcels reaching ``z <= 0`` leave through
    the bottom (outflow) and are booked as absorbed mass; the fluid feels
    ``-rho^n e_z``.  With ``frozen_u`` the fluid is held fixed (transport-only
    mode).  ``remap_every=k`` re-seeds the parcels from the deposited density
    every ``k`` steps (a classical grid-based remap, more diffusive).
    """
    g = state.grid
    d = g.dim
    pos, m = state.positions, state.masses
    if frozen_u:
        fluid = replace(state.fluid, t=state.fluid.t + dt)
    else:
        force = gravity_force(g, pos, m)
        fluid = ns_step(state.fluid, force, dt, advection=advection, implicit=implicit,
                        check_cfl=check_cfl)
    if len(pos):
        vel = interpolate_many(state.fluid.u, pos)
        vel[:, -1] -= 1.0
        if check_cfl and not frozen_u:
            vmax = float(np.abs(vel).max())
            if vmax * dt > min(g.spacing) * (1 + 1e-12):
                raise CFLError(dt, min(g.spacing) / vmax)
        new = pos + dt * vel
    else:
        new = pos
    for a in range(d - 1):
        new[:, a] = np.mod(new[:, a], g.domain.extents[a])
    absorbed = truncated = 0.0
    if g.walls and len(new):
        out_bot = new[:, -1] <= 0.0
        out_top = new[:, -1] >= g.domain.vertical_extent
        absorbed = math.fsum(m[out_bot])
        truncated = math.fsum(m[out_top])
        keep = ~(out_bot | out_top)
        new, m = new[keep], m[keep]
    elif len(new):
        new[:, -1] = np.mod(new[:, -1], g.domain.vertical_extent)
    rho = deposit_density(g, new, m)
    steps = state.steps + 1
    if remap_every and steps % remap_every == 0:
        new, m = parcels_from_density(rho)
        rho = deposit_density(g, new, m)
    return LimitState(fluid, rho, new, m, state.absorbed_mass + absorbed,
                      state.truncated_mass + truncated, state.initial_mass, steps)
