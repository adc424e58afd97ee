"""One pseudo-time step: analytic sinh substep plus ADI or LOD line sweeps.

The 3D operator splits into per-axis modified second differences (gfm
module).  Each axis's line systems are assembled once and stored batched,
so a sweep is one vectorized Thomas solve over all lines.  Both schemes
keep the six box faces pinned at the Dirichlet values through every stage.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import AssemblyError, ConfigError
from .gfm import JumpData, assemble_line
from .grid import Field
from .molecule import AtomSet, PhysicalParams, green_gradient, green_potential
from .surface import InterfaceData

_FACTOR_CACHE_SIZE = 4


def nonlinear_substep(w: np.ndarray, kappa_sq, dt: float, strength: float) -> np.ndarray:
    """Exact solution of dw/dt = -strength * kappa^2 * sinh(w) over dt.

    Closed form tanh(w/2) = tanh(w0/2) * exp(-strength*kappa^2*dt), evaluated
    in a log form that neither overflows for large |w0| nor loses the sign.
    Nodes with kappa^2 = 0 are returned bit-identical.
    """
    w = np.asarray(w, dtype=float)
    lam = np.asarray(strength * np.asarray(kappa_sq, dtype=float) * dt)
    if dt < 0 or strength < 0 or np.any(lam < 0):
        raise ConfigError("substep requires dt, strength, kappa^2 all nonnegative")
    if not np.all(np.isfinite(w)):
        raise ConfigError("non-finite field entering nonlinear substep")
    m = np.abs(w)
    em = np.exp(-m)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        g = np.exp(-lam)
        omg = -np.expm1(-lam)
        mag = np.log1p(g + em * omg) - np.log(omg + em * (1.0 + g))
        # roundoff can push mag a ulp below zero for |w| near eps
        out = np.sign(w) * np.maximum(mag, 0.0)
    return np.where(lam > 0, out, w)


class AxisOperator:
    """Batched line systems along one axis, over interior transverse indices.

    Arrays are stacked line-wise: diag/corr are (n-2, L), off is (n-3, L),
    and the Dirichlet couplings/values are (L,), with L the number of
    interior lines in C order of the transverse axes.
    """

    def __init__(self, axis: int, shape: tuple[int, int, int], systems: list):
        self.axis = axis
        self.shape = shape
        n = shape[axis]
        self.n = n
        self.diag = np.stack([s.diag for s in systems], axis=1)
        self.off = np.stack([s.off for s in systems], axis=1)
        self.corr = np.stack([s.corr for s in systems], axis=1)
        self.w_lo = np.array([s.w_lo for s in systems])
        self.w_hi = np.array([s.w_hi for s in systems])
        self.bc_lo = np.array([s.bc_lo for s in systems])
        self.bc_hi = np.array([s.bc_hi for s in systems])
        self._factors: OrderedDict[float, tuple] = OrderedDict()

    def _full_lines(self, v: np.ndarray) -> np.ndarray:
        sl = [slice(1, -1)] * 3
        sl[self.axis] = slice(None)
        arr = np.moveaxis(v[tuple(sl)], self.axis, 0)
        return np.ascontiguousarray(arr.reshape(arr.shape[0], -1))

    def _interior_lines(self, v: np.ndarray) -> np.ndarray:
        arr = np.moveaxis(v[1:-1, 1:-1, 1:-1], self.axis, 0)
        return np.ascontiguousarray(arr.reshape(arr.shape[0], -1))

    def _scatter(self, lines: np.ndarray, out: np.ndarray) -> None:
        """Write interior-line values (n-2, L) into out's interior block."""
        tshape = tuple(
            s - 2 for a, s in enumerate(self.shape) if a != self.axis
        )
        blk = lines.reshape((self.n - 2,) + tshape)
        out[1:-1, 1:-1, 1:-1] = np.moveaxis(blk, 0, self.axis)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """delta2(v) = A v + c on every interior node; zeros elsewhere."""
        lines = self._full_lines(v)
        vi = lines[1:-1]
        out = -self.diag * vi + self.corr
        w = -self.off
        out[1:] += w * vi[:-1]
        out[:-1] += w * vi[1:]
        out[0] += self.w_lo * lines[0]
        out[-1] += self.w_hi * lines[-1]
        full = np.zeros_like(v)
        self._scatter(out, full)
        return full

    def _factor(self, tau: float):
        cached = self._factors.get(tau)
        if cached is not None:
            self._factors.move_to_end(tau)
            return cached
        d = 1.0 + tau * self.diag
        o = tau * self.off
        m = d.shape[0]
        inv = np.empty_like(d)
        cp = np.empty_like(o)
        inv[0] = 1.0 / d[0]
        cp[0] = o[0] * inv[0]
        for i in range(1, m):
            piv = d[i] - o[i - 1] * cp[i - 1]
            inv[i] = 1.0 / piv
            if i < m - 1:
                cp[i] = o[i] * inv[i]
        self._factors[tau] = (o, cp, inv)
        if len(self._factors) > _FACTOR_CACHE_SIZE:
            self._factors.popitem(last=False)
        return self._factors[tau]

    def solve_lines(self, tau: float, rhs: np.ndarray) -> np.ndarray:
        """Solve (I - tau*A) x = rhs + tau*(c + Dirichlet fold), batched."""
        b = rhs + tau * self.corr
        b[0] += tau * self.w_lo * self.bc_lo
        b[-1] += tau * self.w_hi * self.bc_hi
        if tau == 0.0:
            return b
        o, cp, inv = self._factor(tau)
        m = b.shape[0]
        y = np.empty_like(b)
        y[0] = b[0] * inv[0]
        for i in range(1, m):
            y[i] = (b[i] - o[i - 1] * y[i - 1]) * inv[i]
        x = y
        for i in range(m - 2, -1, -1):
            x[i] -= cp[i] * x[i + 1]
        return x

    def solve(self, tau: float, rhs: np.ndarray, boundary: np.ndarray) -> np.ndarray:
        """Implicit sweep: rhs read at interior nodes, faces set from boundary."""
        lines = self._interior_lines(rhs)
        solved = self.solve_lines(tau, lines)
        out = boundary.copy()
        self._scatter(solved, out)
        return out


@dataclass
class SplitOperators:
    """Assembled axis operators plus the nodal screening and boundary data."""

    ops: tuple[AxisOperator, AxisOperator, AxisOperator]
    kappa_sq: np.ndarray
    boundary: np.ndarray

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.ops[0].shape


def compute_jumps(
    data: InterfaceData, atoms: AtomSet, params: PhysicalParams
) -> dict[tuple[int, int, int, int], JumpData]:
    """Jump data at every crossing: a = G, b = eps_in * dG/dxi, at the cut."""
    keys = sorted(data.crossings)
    if not keys:
        return {}
    locs = np.array([data.crossings[k].location for k in keys])
    a_vals = green_potential(atoms, locs, params)
    grads = green_gradient(atoms, locs, params)
    jumps = {}
    for key, a, grad in zip(keys, a_vals, grads):
        axis = key[0]
        jumps[key] = JumpData(a=float(a), b=float(params.eps_in * grad[axis]))
    return jumps


def build_axis_operator(
    data: InterfaceData,
    params: PhysicalParams,
    jumps: Mapping[tuple[int, int, int, int], JumpData],
    boundary: np.ndarray,
    axis: int,
) -> AxisOperator:
    """Assemble all interior lines along one axis into a batched operator."""
    g = data.grid
    shape = g.shape
    t1, t2 = (a for a in range(3) if a != axis)
    cuts_by_line: dict[tuple[int, int], dict] = {}
    for key, c in data.crossings.items():
        if c.axis != axis:
            continue
        tv = (c.index[t1], c.index[t2])
        pos = c.index[axis]
        jump = jumps.get(key)
        if jump is None:
            raise AssemblyError(f"crossing {key} has no jump data")
        cuts_by_line.setdefault(tv, {})[pos] = (c.theta, jump)
    eps = (params.eps_in, params.eps_out)
    systems = []
    line_sl: list = [0, 0, 0]
    for a_t1 in range(1, shape[t1] - 1):
        for a_t2 in range(1, shape[t2] - 1):
            line_sl[axis] = slice(None)
            line_sl[t1] = a_t1
            line_sl[t2] = a_t2
            inside_line = data.inside[tuple(line_sl)]
            line_sl[axis] = 0
            bc_lo = boundary[tuple(line_sl)]
            line_sl[axis] = shape[axis] - 1
            bc_hi = boundary[tuple(line_sl)]
            systems.append(
                assemble_line(
                    axis,
                    inside_line,
                    eps,
                    cuts_by_line.get((a_t1, a_t2), {}),
                    (float(bc_lo), float(bc_hi)),
                    g.h,
                )
            )
    return AxisOperator(axis, shape, systems)


def build_split_operators(
    data: InterfaceData,
    atoms: AtomSet,
    params: PhysicalParams,
    boundary: Field,
) -> SplitOperators:
    """Assemble the three axis operators and the nodal kappa^2 field.

    boundary must be a field on the same grid whose face values hold the
    Dirichlet data; interior values are ignored.
    """
    if boundary.grid != data.grid:
        raise ConfigError("boundary field grid does not match interface grid")
    data.validate()
    jumps = compute_jumps(data, atoms, params)
    bvals = boundary.values
    ops = tuple(
        build_axis_operator(data, params, jumps, bvals, axis) for axis in range(3)
    )
    kappa_sq = np.where(data.inside, 0.0, params.kappa_sq)
    return SplitOperators(ops=ops, kappa_sq=kappa_sq, boundary=bvals.copy())


def _reset_faces(v: np.ndarray, boundary: np.ndarray) -> None:
    v[0, :, :] = boundary[0, :, :]
    v[-1, :, :] = boundary[-1, :, :]
    v[:, 0, :] = boundary[:, 0, :]
    v[:, -1, :] = boundary[:, -1, :]
    v[:, :, 0] = boundary[:, :, 0]
    v[:, :, -1] = boundary[:, :, -1]


def adi_step(
    u: np.ndarray, dt: float, split: SplitOperators, linearized: bool = False
) -> np.ndarray:
    """One Douglas ADI step preceded by the full-strength nonlinear substep.

    Stage 1: (1 - dt*d2x) v*   = [1 + dt*(d2y + d2z)] v0
    Stage 2: (1 - dt*d2y) v**  = v* - dt * d2y(v0)
    Stage 3: (1 - dt*d2z) v''' = v** - dt * d2z(v0)
    with v0 the post-substep field and every d2 including its corrections.
    """
    if dt <= 0:
        raise ConfigError(f"time step must be positive, got {dt}")
    ox, oy, oz = split.ops
    v0 = _substep(u, split, dt, 1.0, linearized)
    dy = oy.apply(v0)
    dz = oz.apply(v0)
    v1 = ox.solve(dt, v0 + dt * (dy + dz), split.boundary)
    v2 = oy.solve(dt, v1 - dt * dy, split.boundary)
    v3 = oz.solve(dt, v2 - dt * dz, split.boundary)
    return v3


def lod_step(
    u: np.ndarray, dt: float, split: SplitOperators, linearized: bool = False
) -> np.ndarray:
    """One LOD step: half-strength substep, three CN sweeps, half substep."""
    if dt <= 0:
        raise ConfigError(f"time step must be positive, got {dt}")
    v = _substep(u, split, dt, 0.5, linearized)
    half = 0.5 * dt
    for op in split.ops:
        d = op.apply(v)
        v = op.solve(half, v + half * d, split.boundary)
    return _substep(v, split, dt, 0.5, linearized)


def _substep(
    u: np.ndarray, split: SplitOperators, dt: float, strength: float, linearized: bool
) -> np.ndarray:
    if linearized:
        v = u * np.exp(-strength * split.kappa_sq * dt)
    else:
        v = nonlinear_substep(u, split.kappa_sq, dt, strength)
    _reset_faces(v, split.boundary)
    return v
