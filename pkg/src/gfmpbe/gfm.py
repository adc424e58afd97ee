"""Ghost-fluid modification of 1D variable-coefficient second differences.

Each grid line yields a tridiagonal operator A acting on its interior nodes
plus a correction vector c, so that the modified second difference is
delta2(v) = A v + c.  On an uncut edge the coefficient is eps/h^2 with the
sharp nodal eps; on a cut edge the ghost-node elimination under the jump
conditions [u] = a and [eps u_xi] = b produces the theta-weighted harmonic
coefficient and routes the jump data into c.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import AssemblyError, ConfigError, NumericalError
from .surface import THETA_MIN


@dataclass(frozen=True)
class JumpData:
    """Decomposed jump values at one crossing.

    a is the potential jump [u] (outside minus inside); b is the jump of
    eps times the derivative along the crossing's axis, [eps u_xi].
    """

    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise AssemblyError(f"jump data must be finite, got {self.a}, {self.b}")


@dataclass(frozen=True)
class LineSystem:
    """Interior-node tridiagonal system for one grid line.

    diag and off store the negated operator -A, which keeps the documented
    sign invariants literal: diag[i] = W_left + W_right >= 0 and
    off[i] = -W(edge) <= 0, where W is the (positive) edge coefficient.
    The first and last interior nodes couple to the Dirichlet ends through
    w_lo and w_hi; bc_lo and bc_hi hold the end values themselves.  corr is
    the jump-correction vector c restricted to interior nodes.
    """

    diag: np.ndarray
    off: np.ndarray
    corr: np.ndarray
    bc_lo: float
    bc_hi: float
    w_lo: float
    w_hi: float
    h: float

    @property
    def n_interior(self) -> int:
        return len(self.diag)


def assemble_line(
    axis: int,
    inside: np.ndarray,
    eps: tuple[float, float],
    cuts: Mapping[int, tuple[float, JumpData]],
    bc: tuple[float, float],
    h: float,
) -> LineSystem:
    """Assemble one line's operator.

    inside flags the nodes along the line; eps = (eps_in, eps_out) are the
    sharp dielectric values; cuts maps a cut edge's low node position to
    (theta, JumpData); bc holds the Dirichlet values at the two ends.
    """
    eps_in, eps_out = eps
    if eps_in <= 0 or eps_out <= 0:
        raise AssemblyError(f"dielectric values must be positive, got {eps}")
    inside = np.asarray(inside, dtype=bool)
    n = len(inside)
    if n < 4:
        raise AssemblyError(f"line must have at least 4 nodes, got {n}")
    if h <= 0:
        raise AssemblyError(f"spacing must be positive, got {h}")
    weights = np.empty(n - 1)
    corr_full = np.zeros(n)
    inv_h2 = 1.0 / (h * h)
    for e in range(n - 1):
        lo_in = inside[e]
        hi_in = inside[e + 1]
        cut = cuts.get(e)
        if cut is None:
            if lo_in != hi_in:
                raise AssemblyError(
                    f"edge {e} on axis {axis} changes side but has no crossing"
                )
            weights[e] = (eps_in if lo_in else eps_out) * inv_h2
            continue
        if lo_in == hi_in:
            raise AssemblyError(
                f"edge {e} on axis {axis} has a crossing but no side change"
            )
        theta, jump = cut
        if not (THETA_MIN <= theta <= 1.0 - THETA_MIN):
            raise AssemblyError(f"theta {theta} outside clamp range on edge {e}")
        eps_lo = eps_in if lo_in else eps_out
        eps_hi = eps_in if hi_in else eps_out
        denom = eps_hi * theta + eps_lo * (1.0 - theta)
        w = (eps_lo * eps_hi / denom) * inv_h2
        weights[e] = w
        f_lo = eps_lo * (1.0 - theta) / denom
        f_hi = eps_hi * theta / denom
        # Jump data are outside-minus-inside; orient them to this edge.
        sign = 1.0 if lo_in else -1.0
        ju = sign * jump.a
        jf = sign * jump.b
        corr_full[e] += -w * ju - (f_lo / h) * jf
        corr_full[e + 1] += w * ju - (f_hi / h) * jf
    diag = weights[:-1] + weights[1:]
    off = -weights[1:-1]
    return LineSystem(
        diag=diag,
        off=off,
        corr=corr_full[1:-1].copy(),
        bc_lo=float(bc[0]),
        bc_hi=float(bc[1]),
        w_lo=float(weights[0]),
        w_hi=float(weights[-1]),
        h=h,
    )


def apply_operator(sys: LineSystem, v: np.ndarray) -> np.ndarray:
    """Explicit action delta2(v) = A v + c on a full line of values.

    The end entries of v supply the Dirichlet contributions; the returned
    array has zeros at the end positions (those rows are not unknowns).
    """
    v = np.asarray(v, dtype=float)
    m = sys.n_interior
    if len(v) != m + 2:
        raise ConfigError(f"line length {len(v)} does not match system ({m + 2})")
    vi = v[1:-1]
    out = -sys.diag * vi + sys.corr
    w = -sys.off
    out[1:] += w * vi[:-1]
    out[:-1] += w * vi[1:]
    out[0] += sys.w_lo * v[0]
    out[-1] += sys.w_hi * v[-1]
    full = np.zeros_like(v)
    full[1:-1] = out
    return full


def thomas_solve(sys: LineSystem, dt: float, rhs: np.ndarray) -> np.ndarray:
    """Solve (I - dt*A) x = rhs + dt*(c + Dirichlet fold) for interior nodes.

    rhs holds the explicit right-hand side at the interior nodes only; the
    correction vector and the boundary couplings times bc_lo/bc_hi are folded
    in here, scaled by dt.  dt = 0 returns rhs unchanged.
    """
    rhs = np.asarray(rhs, dtype=float)
    m = sys.n_interior
    if len(rhs) != m:
        raise ConfigError(f"rhs length {len(rhs)} does not match interior count {m}")
    if dt < 0:
        raise ConfigError(f"time step must be nonnegative, got {dt}")
    b = rhs + dt * sys.corr
    b[0] += dt * sys.w_lo * sys.bc_lo
    b[-1] += dt * sys.w_hi * sys.bc_hi
    if dt == 0.0:
        return b
    # I - dt*A = I + dt*M with M the stored negated operator.
    diag = 1.0 + dt * sys.diag
    off = dt * sys.off
    return _thomas(diag, off, b)


def _thomas(diag: np.ndarray, off: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Symmetric tridiagonal solve; diag dominance makes pivots safe."""
    m = len(diag)
    cp = np.empty(m - 1)
    dp = np.empty(m)
    piv = diag[0]
    if abs(piv) < 1e-300:
        raise NumericalError("zero pivot in tridiagonal solve")
    cp[0] = off[0] / piv
    dp[0] = rhs[0] / piv
    for i in range(1, m):
        piv = diag[i] - off[i - 1] * cp[i - 1]
        if abs(piv) < 1e-300:
            raise NumericalError("zero pivot in tridiagonal solve")
        if i < m - 1:
            cp[i] = off[i] / piv
        dp[i] = (rhs[i] - off[i - 1] * dp[i - 1]) / piv
    x = np.empty(m)
    x[-1] = dp[-1]
    for i in range(m - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x
