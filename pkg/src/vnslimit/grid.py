"""Strip domain, MAC grid, fields and the stencil helpers shared by every solver.

Coordinates are ``(x, z)`` in 2D and ``(x, y, z)`` in 3D; the last axis is
always vertical.  Horizontal axes are periodic.  The vertical axis carries a
no-slip, absorbing wall at ``z = 0`` and an impermeable free-slip lid at
``z = Lz`` (unless the grid is built in the wall-free ``periodic_z`` test mode).

MAC layout
----------
* scalars (pressure, densities) live at cell centres, array shape ``cells``;
* velocity component ``a`` lives on the faces normal to axis ``a``.  Along a
  periodic axis a face array has ``n`` entries (face ``i`` is the left face of
  cell ``i``); along the walled vertical axis it has ``nz + 1`` entries, the
  first and last rows being the walls.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DomainError(ValueError):
    """A position lies outside the computational strip."""


@dataclass(frozen=True)
class StripDomain:
    """Truncated half-space: periodic horizontally, ``0 < z < Lz`` vertically."""

    dim: int = 2
    horizontal_extent: tuple[float, ...] = (4.0,)
    vertical_extent: float = 4.0
    periodic_z: bool = False

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        ext = tuple(float(e) for e in np.atleast_1d(self.horizontal_extent))
        if len(ext) == 1 and self.dim == 3:
            ext = ext * 2
        if len(ext) != self.dim - 1:
            raise ValueError("need one horizontal extent per horizontal axis")
        object.__setattr__(self, "horizontal_extent", ext)
        if min(ext) <= 0 or self.vertical_extent <= 0:
            raise ValueError("all extents must be positive")

    @property
    def extents(self) -> tuple[float, ...]:
        return self.horizontal_extent + (float(self.vertical_extent),)

    @property
    def wall_normal(self) -> np.ndarray:
        """Outward normal of the absorbing wall."""
        n = np.zeros(self.dim)
        n[-1] = -1.0
        return n


@dataclass(frozen=True)
class Grid:
    domain: StripDomain
    cells: tuple[int, ...]

    def __post_init__(self):
        cells = tuple(int(c) for c in np.atleast_1d(self.cells))
        if len(cells) == 1:
            cells = cells * self.domain.dim
        if len(cells) != self.domain.dim or min(cells) < 2:
            raise ValueError(f"bad cell counts {cells} for dim={self.domain.dim}")
        object.__setattr__(self, "cells", cells)

    @classmethod
    def uniform(cls, n: int | Sequence[int], extent=4.0, height=None, dim=2, periodic_z=False):
        height = extent if height is None else height
        dom = StripDomain(dim=dim, horizontal_extent=(extent,), vertical_extent=height,
                          periodic_z=periodic_z)
        return cls(dom, tuple(np.broadcast_to(n, (dim,))))

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / n for e, n in zip(self.domain.extents, self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def walls(self) -> bool:
        return not self.domain.periodic_z

    @property
    def horizontal_axes(self) -> tuple[int, ...]:
        return tuple(range(self.dim - 1))

    def face_shape(self, comp: int) -> tuple[int, ...]:
        shape = list(self.cells)
        if comp == self.dim - 1 and self.walls:
            shape[-1] += 1
        return tuple(shape)

    def centers(self, axis: int) -> np.ndarray:
        return (np.arange(self.cells[axis]) + 0.5) * self.spacing[axis]

    def faces(self, axis: int) -> np.ndarray:
        n = self.face_shape(axis)[axis]
        return np.arange(n) * self.spacing[axis]

    def mesh(self, comp: int | None = None) -> list[np.ndarray]:
        """Node coordinates of the cell centres (``comp=None``) or of face set ``comp``."""
        axes = [self.faces(a) if a == comp else self.centers(a) for a in range(self.dim)]
        return np.meshgrid(*axes, indexing="ij")

    def is_inside(self, positions) -> np.ndarray:
        z = np.asarray(positions)[..., -1]
        return (z >= 0.0) & (z <= self.domain.vertical_extent)


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ScalarField:
    """Cell-centred scalar."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = _readonly(self.values)
        if v.shape != self.grid.cells:
            raise ValueError(f"scalar shape {v.shape} != {self.grid.cells}")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.cells))

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def l2_norm(self) -> float:
        return float(np.sqrt((self.values ** 2).sum() * self.grid.cell_volume))


@dataclass(frozen=True)
class VectorField:
    """Vector field either on the MAC faces (``staggering="mac"``) or collocated
    at cell centres (``staggering="cell"``).

    ``div_tol`` is set when the field is declared divergence-free.
    """

    grid: Grid
    components: tuple[np.ndarray, ...]
    staggering: str = "mac"
    div_tol: float | None = field(default=None, compare=False)

    def __post_init__(self):
        comps = tuple(_readonly(c) for c in self.components)
        if len(comps) != self.grid.dim:
            raise ValueError("need one component per axis")
        for a, c in enumerate(comps):
            want = self.grid.face_shape(a) if self.staggering == "mac" else self.grid.cells
            if c.shape != want:
                raise ValueError(f"component {a} has shape {c.shape}, expected {want}")
        if self.staggering not in ("mac", "cell"):
            raise ValueError(f"unknown staggering {self.staggering!r}")
        object.__setattr__(self, "components", comps)

    @classmethod
    def zeros(cls, grid, staggering="mac"):
        shapes = [grid.face_shape(a) if staggering == "mac" else grid.cells
                  for a in range(grid.dim)]
        return cls(grid, tuple(np.zeros(s) for s in shapes), staggering)

    @property
    def divergence_free(self) -> bool:
        if self.div_tol is None or self.staggering != "mac":
            return False
        return float(np.abs(discrete_div(self).values).max()) <= self.div_tol

    def max_abs(self) -> float:
        return max(float(np.abs(c).max()) for c in self.components)

    def l2_norm_sq(self) -> float:
        return float(sum((c ** 2).sum() for c in self.components) * self.grid.cell_volume)

    def __sub__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.grid, tuple(a - b for a, b in zip(self.components, other.components)),
                           self.staggering)


# --- one-dimensional staggered stencils -------------------------------------
# ``bottom``/``top`` are ghost signs used when a cell-centred quantity is
# carried onto the vertical walls: -1 for a no-slip tangential velocity, +1
# for a Neumann quantity.

def _walled(grid: Grid, axis: int) -> bool:
    return axis == grid.dim - 1 and grid.walls


def _pad_ghosts(a, axis, bottom, top):
    lo = bottom * np.take(a, [0], axis=axis)
    hi = top * np.take(a, [-1], axis=axis)
    return np.concatenate([lo, a, hi], axis=axis)


def _slice(a, axis, sl):
    idx = [slice(None)] * a.ndim
    idx[axis] = sl
    return a[tuple(idx)]


def center_to_face(a, axis, grid, bottom=1.0, top=1.0):
    if _walled(grid, axis):
        p = _pad_ghosts(a, axis, bottom, top)
        return 0.5 * (_slice(p, axis, slice(1, None)) + _slice(p, axis, slice(None, -1)))
    return 0.5 * (a + np.roll(a, 1, axis=axis))


def face_to_center(a, axis, grid):
    if _walled(grid, axis):
        return 0.5 * (_slice(a, axis, slice(1, None)) + _slice(a, axis, slice(None, -1)))
    return 0.5 * (a + np.roll(a, -1, axis=axis))


def diff_center_to_face(a, axis, grid, bottom=1.0, top=1.0):
    h = grid.spacing[axis]
    if _walled(grid, axis):
        p = _pad_ghosts(a, axis, bottom, top)
        return (_slice(p, axis, slice(1, None)) - _slice(p, axis, slice(None, -1))) / h
    return (a - np.roll(a, 1, axis=axis)) / h


def diff_face_to_center(a, axis, grid):
    h = grid.spacing[axis]
    if _walled(grid, axis):
        return (_slice(a, axis, slice(1, None)) - _slice(a, axis, slice(None, -1))) / h
    return (np.roll(a, -1, axis=axis) - a) / h


def wall_rows_zero(a, grid):
    """Zero the two wall rows of a vertical-face array (copy)."""
    a = np.array(a)
    if grid.walls:
        a[..., 0] = 0.0
        a[..., -1] = 0.0
    return a


# --- field operators ----------------------------------------------------------

def discrete_div(field: VectorField) -> ScalarField:
    """Cell-centred MAC divergence (centred, second order)."""
    if field.staggering != "mac":
        raise ValueError("discrete_div expects a MAC field")
    g = field.grid
    out = sum(diff_face_to_center(c, a, g) for a, c in enumerate(field.components))
    return ScalarField(g, out)


def discrete_grad(s: ScalarField) -> VectorField:
    """Face gradient of a cell-centred scalar; zero normal derivative on the walls."""
    g = s.grid
    comps = []
    for a in range(g.dim):
        d = diff_center_to_face(s.values, a, g)
        comps.append(wall_rows_zero(d, g) if a == g.dim - 1 else d)
    return VectorField(g, tuple(comps))


def scalar_laplacian(s: ScalarField) -> ScalarField:
    """Neumann 5/7-point Laplacian; equals ``discrete_div(discrete_grad(s))``."""
    return discrete_div(discrete_grad(s))


def cell_average(field: VectorField) -> VectorField:
    """MAC field averaged onto cell centres."""
    if field.staggering == "cell":
        return field
    g = field.grid
    return VectorField(g, tuple(face_to_center(c, a, g) for a, c in enumerate(field.components)),
                       "cell")


def faces_from_cells(field: VectorField) -> VectorField:
    """Collocated field averaged onto MAC faces (wall rows of the normal component zeroed)."""
    if field.staggering == "mac":
        return field
    g = field.grid
    comps = []
    for a, c in enumerate(field.components):
        f = center_to_face(c, a, g)
        comps.append(wall_rows_zero(f, g) if a == g.dim - 1 else f)
    return VectorField(g, tuple(comps))


# --- cloud-in-cell stencils ---------------------------------------------------

def _axis_stencil(grid, axis, centred, coord, mode):
    """Two-node linear stencil along one axis.

    Returns ``(i0, i1, f)`` with weights ``1-f`` and ``f``.  For a walled,
    cell-centred axis the indices point into the ghost-padded array
    (``mode="pad"``) or are clipped into the interior (``mode="clip"``).
    """
    h = grid.spacing[axis]
    n = grid.cells[axis]
    s = coord / h - (0.5 if centred else 0.0)
    i0 = np.floor(s)
    f = s - i0
    i0 = i0.astype(np.int64)
    if not _walled(grid, axis):
        i0 %= n
        return i0, (i0 + 1) % n, f
    if not centred:
        top = i0 >= n
        i0 = np.minimum(i0, n - 1)
        f = np.where(top, s - i0, f)
        return i0, i0 + 1, f
    if mode == "pad":
        return i0 + 1, i0 + 2, f
    return np.clip(i0, 0, n - 1), np.clip(i0 + 1, 0, n - 1), f


def _corners(stencils):
    d = len(stencils)
    for bits in range(2 ** d):
        idx, w = [], 1.0
        for a, (i0, i1, f) in enumerate(stencils):
            if (bits >> a) & 1:
                idx.append(i1)
                w = w * f
            else:
                idx.append(i0)
                w = w * (1.0 - f)
        yield tuple(idx), w


def _check_inside(grid, positions):
    z = positions[:, -1]
    if grid.walls and (np.any(z < 0.0) or np.any(z > grid.domain.vertical_extent)):
        raise DomainError("position outside 0 <= z <= Lz")


def interpolate_component(values, grid, comp, positions, bottom=-1.0, top=1.0):
    """Linear interpolation of one staggered array at ``positions`` (N, d).

    ``comp`` is the face-normal axis of the array, or ``None`` for a
    cell-centred array.  Ghost signs apply to the walled vertical axis.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    _check_inside(grid, positions)
    stencils = []
    for a in range(grid.dim):
        centred = a != comp
        stencils.append(_axis_stencil(grid, a, centred, positions[:, a], "pad"))
    arr = values
    if grid.walls and comp != grid.dim - 1:
        arr = _pad_ghosts(values, grid.dim - 1, bottom, top)
    out = np.zeros(len(positions))
    for idx, w in _corners(stencils):
        out += w * arr[idx]
    return out


def interpolate_many(field: VectorField, positions) -> np.ndarray:
    """Velocity at many points, shape (N, d).  Zero (to rounding) on the wall ``z=0``."""
    g = field.grid
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    cols = []
    for a, c in enumerate(field.components):
        comp = a if field.staggering == "mac" else None
        bottom = -1.0 if field.staggering == "mac" else 1.0
        cols.append(interpolate_component(c, g, comp, positions, bottom=bottom, top=1.0))
    return np.stack(cols, axis=1) if cols else np.zeros((len(positions), 0))


def interpolate(field: VectorField, x) -> np.ndarray:
    """Value of ``field`` at a single position ``x`` (horizontal coordinates wrap)."""
    return interpolate_many(field, np.asarray(x, dtype=float)[None, :])[0]


def deposit_component(grid, comp, positions, values, mode="clip", bottom=-1.0, top=1.0):
    """Scatter ``values`` (N,) onto one staggered array with the CIC kernel.

    ``mode="clip"`` (densities): mass falling on the ghost layers is folded
    into the first/last interior layer, so the total is conserved exactly.
    ``mode="adjoint"``: the exact transpose of :func:`interpolate_component`
    (ghost contributions folded with their ghost signs).  Returned array holds
    sums, not densities.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    shape = grid.cells if comp is None else grid.face_shape(comp)
    if len(positions) == 0:
        return np.zeros(shape)
    padded = grid.walls and comp != grid.dim - 1 and mode == "adjoint"
    stencils = []
    for a in range(grid.dim):
        centred = a != comp
        stencils.append(_axis_stencil(grid, a, centred, positions[:, a],
                                      "pad" if padded else "clip"))
    work_shape = list(shape)
    if padded:
        work_shape[-1] += 2
    flat = np.zeros(int(np.prod(work_shape)))
    for idx, w in _corners(stencils):
        lin = np.ravel_multi_index(idx, work_shape)
        flat += np.bincount(lin, weights=w * values, minlength=flat.size)
    out = flat.reshape(work_shape)
    if padded:
        core = out[..., 1:-1].copy()
        core[..., 0] += bottom * out[..., 0]
        core[..., -1] += top * out[..., -1]
        out = core
    return out
