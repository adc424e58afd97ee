"""Uniform Cartesian grids, trilinear sampling, and field serialization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import ConfigError, DomainError

if TYPE_CHECKING:
    from .molecule import AtomSet

MIN_NODES = 4
"""Fewest nodes per axis that still leave a 2-node interior."""

_EXTENT_TOL = 1e-9
"""Relative tolerance when checking that a box extent is a multiple of h."""


@dataclass(frozen=True)
class Grid:
    """Uniform node-centered grid: origin, spacing h, node counts per axis."""

    origin: tuple[float, float, float]
    h: float
    shape: tuple[int, int, int]

    def __post_init__(self):
        if self.h <= 0 or not np.isfinite(self.h):
            raise ConfigError(f"grid spacing must be positive, got {self.h}")
        if any(n < MIN_NODES for n in self.shape):
            raise ConfigError(
                f"need at least {MIN_NODES} nodes per axis, got {self.shape}"
            )

    @property
    def upper(self) -> tuple[float, float, float]:
        return tuple(o + self.h * (n - 1) for o, n in zip(self.origin, self.shape))

    def axis_coords(self, axis: int) -> np.ndarray:
        """Node coordinates along one axis (0=x, 1=y, 2=z)."""
        return self.origin[axis] + self.h * np.arange(self.shape[axis])

    def node(self, i: int, j: int, k: int) -> np.ndarray:
        return np.array(
            [
                self.origin[0] + self.h * i,
                self.origin[1] + self.h * j,
                self.origin[2] + self.h * k,
            ]
        )

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape (Nx, Ny, Nz, 3), C order."""
        x, y, z = (self.axis_coords(a) for a in range(3))
        return np.stack(np.meshgrid(x, y, z, indexing="ij"), axis=-1)


@dataclass
class Field:
    """Nodal scalar values on a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ConfigError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


def build_grid(
    atoms: "AtomSet",
    h: float,
    probe_radius: float = 1.4,
    box: tuple[float, float, float, float, float, float] | None = None,
) -> Grid:
    """Build the computational grid around a solute.

    Without an explicit box, each axis spans the atom spheres padded by
    floor(2 * probe_radius) on both sides, then widens symmetrically to the
    nearest multiple of h.  With box = (x0, y0, z0, x1, y1, z1) the extents
    must already be multiples of h.
    """
    if h <= 0 or not np.isfinite(h):
        raise ConfigError(f"grid spacing must be positive, got {h}")
    if box is not None:
        lo = np.array(box[:3], dtype=float)
        hi = np.array(box[3:], dtype=float)
        if np.any(hi <= lo):
            raise ConfigError(f"box upper corner must exceed lower corner: {box}")
        cells = (hi - lo) / h
        n_cells = np.round(cells).astype(int)
        if np.any(np.abs(cells - n_cells) > _EXTENT_TOL * np.maximum(cells, 1.0)):
            raise ConfigError(f"box extents {tuple(hi - lo)} are not multiples of h={h}")
        return Grid(tuple(float(v) for v in lo), h, tuple(int(v) + 1 for v in n_cells))

    if probe_radius < 0:
        raise ConfigError(f"probe radius must be nonnegative, got {probe_radius}")
    pad = float(np.floor(2.0 * probe_radius))
    lo = (atoms.centers - atoms.radii[:, None]).min(axis=0) - pad
    hi = (atoms.centers + atoms.radii[:, None]).max(axis=0) + pad
    # Widen each axis symmetrically so the extent is an exact cell multiple.
    extent = hi - lo
    n_cells = np.ceil(extent / h - 1e-12).astype(int)
    n_cells = np.maximum(n_cells, MIN_NODES - 1)
    slack = n_cells * h - extent
    lo = lo - 0.5 * slack
    return Grid(tuple(float(v) for v in lo), h, tuple(int(v) + 1 for v in n_cells))


def trilinear(field: Field, p):
    """Trilinear interpolation of a nodal field at (3,) or (m, 3) points.

    Points must lie inside the grid box (a 1e-9*h overhang is forgiven and
    clamped).  Raises DomainError otherwise.
    """
    g = field.grid
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    rel = (pts - np.asarray(g.origin)) / g.h
    n = np.array(g.shape)
    tol = 1e-9
    if np.any(rel < -tol) or np.any(rel > (n - 1) + tol):
        bad = pts[np.any((rel < -tol) | (rel > (n - 1) + tol), axis=1)][0]
        raise DomainError(f"point {tuple(bad)} lies outside the grid box")
    cell = np.clip(np.floor(rel).astype(int), 0, n - 2)
    frac = np.clip(rel - cell, 0.0, 1.0)
    i, j, k = cell[:, 0], cell[:, 1], cell[:, 2]
    fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]
    v = field.values
    c00 = v[i, j, k] * (1 - fx) + v[i + 1, j, k] * fx
    c10 = v[i, j + 1, k] * (1 - fx) + v[i + 1, j + 1, k] * fx
    c01 = v[i, j, k + 1] * (1 - fx) + v[i + 1, j, k + 1] * fx
    c11 = v[i, j + 1, k + 1] * (1 - fx) + v[i + 1, j + 1, k + 1] * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    out = c0 * (1 - fz) + c1 * fz
    return float(out[0]) if single else out


def write_field_csv(field: Field, path) -> None:
    """Write nodal values as `i,j,k,value` rows in C order."""
    nx, ny, nz = field.grid.shape
    idx = np.indices((nx, ny, nz)).reshape(3, -1).T
    with open(path, "w") as f:
        f.write("i,j,k,value\n")
        flat = field.values.reshape(-1)
        for (i, j, k), val in zip(idx, flat):
            f.write(f"{i},{j},{k},{float(val)!r}\n")


def write_field_binary(field: Field, path) -> None:
    """Write a field as little-endian binary.

    Layout: Nx,Ny,Nz as int64; h as float64; origin as 3 float64; then the
    nodal values as C-order float64.
    """
    with open(path, "wb") as f:
        np.asarray(field.grid.shape, dtype="<i8").tofile(f)
        np.asarray([field.grid.h], dtype="<f8").tofile(f)
        np.asarray(field.grid.origin, dtype="<f8").tofile(f)
        np.ascontiguousarray(field.values, dtype="<f8").tofile(f)


def read_field_binary(path) -> Field:
    """Inverse of write_field_binary."""
    with open(path, "rb") as f:
        shape = tuple(int(n) for n in np.fromfile(f, dtype="<i8", count=3))
        h = float(np.fromfile(f, dtype="<f8", count=1)[0])
        origin = tuple(float(c) for c in np.fromfile(f, dtype="<f8", count=3))
        n_vals = shape[0] * shape[1] * shape[2]
        values = np.fromfile(f, dtype="<f8", count=n_vals).reshape(shape)
    return Field(Grid(origin, h, shape), values)
