"""Interface classification on Cartesian grids, plus a text interchange format.

An interface is represented discretely: every grid node carries an
inside/outside flag, and every grid edge whose endpoints disagree carries
exactly one crossing record (the fraction theta measured from the low-index
node, plus the Cartesian location of the cut).  Three generators are
provided: an analytic sphere, a union of atom spheres (van der Waals), and
a probe-rolled molecular surface built from a signed distance to the
solvent-accessible surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.spatial import cKDTree

from .errors import AssemblyError, ConfigError, FormatError
from .grid import Grid
from .molecule import AtomSet

AXIS_NAMES = ("x", "y", "z")

THETA_MIN = 1e-6
"""Crossing fractions are clamped to [THETA_MIN, 1 - THETA_MIN]."""

CLASSIFY_TOL = 1e-12
"""Nodes within this signed distance of the surface count as inside."""

_T_TOL = 1e-9
"""Tolerance in edge-fraction units when chaining coverage intervals."""

_BISECT_ITERS = 48


@dataclass(frozen=True)
class Crossing:
    """One interface cut on a grid edge.

    axis is 0/1/2; index is the low node of the edge; theta in (0, 1) is the
    cut fraction from that node; location is the Cartesian cut point.
    """

    axis: int
    index: tuple[int, int, int]
    theta: float
    location: tuple[float, float, float]

    @property
    def key(self) -> tuple[int, int, int, int]:
        return (self.axis, *self.index)


class InterfaceData:
    """Node classification plus crossing records for one grid."""

    def __init__(self, grid: Grid, inside: np.ndarray, crossings):
        inside = np.asarray(inside, dtype=bool)
        if inside.shape != grid.shape:
            raise ConfigError(
                f"inside mask shape {inside.shape} does not match grid {grid.shape}"
            )
        if isinstance(crossings, dict):
            crossings = crossings.values()
        self.grid = grid
        self.inside = inside
        self.crossings: dict[tuple[int, int, int, int], Crossing] = {}
        for c in crossings:
            if c.key in self.crossings:
                raise ConfigError(f"duplicate crossing on edge {c.key}")
            self.crossings[c.key] = c

    def __eq__(self, other) -> bool:
        if not isinstance(other, InterfaceData):
            return NotImplemented
        return (
            self.grid == other.grid
            and bool(np.array_equal(self.inside, other.inside))
            and self.crossings == other.crossings
        )

    def validate(self) -> None:
        """Check one-crossing-per-mixed-edge consistency; raise AssemblyError."""
        g = self.grid
        expected = set()
        for axis in range(3):
            for i, j, k in _mixed_edges(self.inside, axis):
                expected.add((axis, int(i), int(j), int(k)))
        got = set(self.crossings)
        missing = expected - got
        if missing:
            raise AssemblyError(f"mixed edge without crossing record: {sorted(missing)[0]}")
        extra = got - expected
        if extra:
            raise AssemblyError(f"crossing on uniform edge: {sorted(extra)[0]}")
        for c in self.crossings.values():
            if not (0.0 < c.theta < 1.0):
                raise AssemblyError(f"theta out of (0,1) on edge {c.key}: {c.theta}")
            lo = np.asarray(g.node(*c.index))
            loc = np.asarray(c.location)
            if not np.all(np.isfinite(loc)):
                raise AssemblyError(f"non-finite location on edge {c.key}")
            off = np.delete(loc - lo, c.axis)
            if np.max(np.abs(off)) > 1e-9 * max(1.0, g.h):
                raise AssemblyError(f"location off the edge line for {c.key}")
            t = (loc[c.axis] - lo[c.axis]) / g.h
            if not (-1e-3 < t < 1.0 + 1e-3):
                raise AssemblyError(f"location outside the edge for {c.key}")


def _mixed_edges(inside: np.ndarray, axis: int) -> np.ndarray:
    """Low-node indices (m, 3) of edges whose endpoints disagree."""
    sl_lo = [slice(None)] * 3
    sl_hi = [slice(None)] * 3
    sl_lo[axis] = slice(0, -1)
    sl_hi[axis] = slice(1, None)
    mixed = inside[tuple(sl_lo)] != inside[tuple(sl_hi)]
    return np.argwhere(mixed)


def _stable_roots(a: float, b: np.ndarray, c: np.ndarray):
    """Real roots of a*t^2 + b*t + c, paired stably; returns (lo, hi)."""
    disc = b * b - 4.0 * a * c
    disc = np.maximum(disc, 0.0)
    sq = np.sqrt(disc)
    q = -0.5 * (b + np.copysign(sq, b))
    r1 = q / a
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(q != 0.0, c / np.where(q != 0.0, q, 1.0), r1)
    return np.minimum(r1, r2), np.maximum(r1, r2)


def classify_sphere(grid: Grid, center, radius: float) -> InterfaceData:
    """Classify a single sphere; crossings from the exact quadratic roots."""
    if radius <= 0:
        raise ConfigError(f"sphere radius must be positive, got {radius}")
    c = np.asarray(center, dtype=float)
    nodes = grid.nodes()
    dist = np.sqrt(((nodes - c) ** 2).sum(axis=-1))
    inside = dist - radius < CLASSIFY_TOL
    h = grid.h
    crossings = []
    for axis in range(3):
        idx = _mixed_edges(inside, axis)
        if idx.size == 0:
            continue
        p0 = np.asarray(grid.origin) + idx * h
        d0 = p0 - c
        a = h * h
        b = 2.0 * h * d0[:, axis]
        c0 = (d0**2).sum(axis=1) - radius * radius
        t_lo, t_hi = _stable_roots(a, b, c0)
        low_inside = inside[idx[:, 0], idx[:, 1], idx[:, 2]]
        # Going out of the sphere the quadratic rises through its larger root.
        t = np.where(low_inside, t_hi, t_lo)
        locs = p0.copy()
        locs[:, axis] += t * h
        theta = np.clip(t, THETA_MIN, 1.0 - THETA_MIN)
        for row, th, loc in zip(idx, theta, locs):
            crossings.append(
                Crossing(axis, tuple(int(v) for v in row), float(th), tuple(loc))
            )
    return InterfaceData(grid, inside, crossings)


def _sphere_intervals(p0, axis, h, centers, radii):
    """Edge-parameter intervals [t1, t2] where the edge is inside some sphere."""
    d0 = p0 - centers
    a = h * h
    b = 2.0 * h * d0[:, axis]
    c0 = (d0**2).sum(axis=1) - radii**2
    t_lo, t_hi = _stable_roots(a, b, c0)
    real = (b * b - 4.0 * a * c0) > 0.0
    return [(float(lo), float(hi)) for lo, hi in zip(t_lo[real], t_hi[real])]


def _cover_from_low(intervals) -> float:
    """Greedy endpoint of the interval union component containing t = 0."""
    cov = 0.0
    changed = True
    while changed:
        changed = False
        for t1, t2 in intervals:
            if t1 <= cov + _T_TOL and t2 > cov:
                cov = t2
                changed = True
    return cov


def _cover_from_high(intervals) -> float:
    """Greedy endpoint of the interval union component containing t = 1."""
    cov = 1.0
    changed = True
    while changed:
        changed = False
        for t1, t2 in intervals:
            if t2 >= cov - _T_TOL and t1 < cov:
                cov = t1
                changed = True
    return cov


def classify_union(grid: Grid, atoms: AtomSet) -> InterfaceData:
    """Classify the union of the atom spheres (van der Waals surface)."""
    nodes = grid.nodes()
    signed = np.full(grid.shape, np.inf)
    for center, radius in zip(atoms.centers, atoms.radii):
        d = np.sqrt(((nodes - center) ** 2).sum(axis=-1))
        np.minimum(signed, d - radius, out=signed)
    inside = signed < CLASSIFY_TOL
    h = grid.h
    origin = np.asarray(grid.origin)
    crossings = []
    for axis in range(3):
        for i, j, k in _mixed_edges(inside, axis):
            p0 = origin + np.array([i, j, k]) * h
            intervals = _sphere_intervals(p0, axis, h, atoms.centers, atoms.radii)
            if inside[i, j, k]:
                t = _cover_from_low(intervals)
            else:
                t = _cover_from_high(intervals)
            loc = p0.copy()
            loc[axis] += t * h
            crossings.append(
                Crossing(
                    axis,
                    (int(i), int(j), int(k)),
                    float(np.clip(t, THETA_MIN, 1.0 - THETA_MIN)),
                    tuple(loc),
                )
            )
    return InterfaceData(grid, inside, crossings)


class _SesDistance:
    """Signed distance to the solvent-accessible surface, probe-sharpened.

    Positive values are depths inside the union of probe-inflated atom
    spheres.  Where the inward radial ray from the deepest sphere exits into
    free space the depth is exact; where that exit is blocked by another
    inflated sphere it falls back to the lattice distance to the nearest
    exterior node (an upper bound on the true depth).
    """

    def __init__(self, grid: Grid, atoms: AtomSet, probe_radius: float):
        self.centers = atoms.centers
        self.sas_r = atoms.radii + probe_radius
        self.probe_radius = probe_radius
        nodes = grid.nodes()
        depth = np.full(grid.shape, -np.inf)
        deepest = np.zeros(grid.shape, dtype=int)
        vdw = np.full(grid.shape, np.inf)
        for ia, (center, radius) in enumerate(zip(atoms.centers, atoms.radii)):
            d = np.sqrt(((nodes - center) ** 2).sum(axis=-1))
            np.minimum(vdw, d - radius, out=vdw)
            v = (radius + probe_radius) - d
            upd = v > depth
            depth[upd] = v[upd]
            deepest[upd] = ia
        self.vdw_signed = vdw
        sas_inside = depth > -CLASSIFY_TOL
        self.sas_inside = sas_inside
        edt = distance_transform_edt(sas_inside, sampling=(grid.h,) * 3)
        covered = nodes[sas_inside]
        ia = deepest[sas_inside]
        exact = self._radial_exit_clear(covered, ia)
        dist = depth.copy()
        dist_cov = np.where(exact, depth[sas_inside], edt[sas_inside])
        dist[sas_inside] = dist_cov
        self.node_signed = dist
        outside_pts = nodes[~sas_inside].reshape(-1, 3)
        self._tree = cKDTree(outside_pts) if len(outside_pts) else None

    def _radial_exit_clear(self, points: np.ndarray, ia: np.ndarray) -> np.ndarray:
        """True where the radial exit point of the deepest sphere is uncovered."""
        ca = self.centers[ia]
        ra = self.sas_r[ia]
        dvec = points - ca
        dn = np.sqrt((dvec**2).sum(axis=1))
        safe = np.where(dn > CLASSIFY_TOL, dn, 1.0)
        unit = dvec / safe[:, None]
        unit[dn <= CLASSIFY_TOL] = (1.0, 0.0, 0.0)
        exit_pts = ca + ra[:, None] * unit
        blocked = np.zeros(len(points), dtype=bool)
        for k in range(len(self.centers)):
            dk = np.sqrt(((exit_pts - self.centers[k]) ** 2).sum(axis=1))
            blocked |= (dk < self.sas_r[k] - CLASSIFY_TOL) & (ia != k)
        return ~blocked

    def psi_nodes(self) -> np.ndarray:
        """Level values on the lattice; inside the surface where psi >= 0."""
        return self.node_signed - self.probe_radius

    def psi_point(self, x: np.ndarray) -> float:
        """Level value at an arbitrary point, consistent with psi_nodes."""
        d = np.sqrt(((self.centers - x) ** 2).sum(axis=1))
        vals = self.sas_r - d
        i = int(np.argmax(vals))
        depth = float(vals[i])
        if depth <= -CLASSIFY_TOL:
            return depth - self.probe_radius
        exact = self._radial_exit_clear(x[None, :], np.array([i]))[0]
        if exact:
            s = depth
        else:
            s = float(self._tree.query(x)[0]) if self._tree is not None else depth
        return s - self.probe_radius


def _bisect_flip(p0, axis, h, low_inside, indicator) -> float:
    """Bisect for the fraction where a boolean indicator flips along an edge."""
    t_lo, t_hi = 0.0, 1.0
    p = np.array(p0, dtype=float)
    for _ in range(_BISECT_ITERS):
        tm = 0.5 * (t_lo + t_hi)
        p[axis] = p0[axis] + tm * h
        if indicator(p) == low_inside:
            t_lo = tm
        else:
            t_hi = tm
    return 0.5 * (t_lo + t_hi)


def classify_ses_grid(
    grid: Grid,
    atoms: AtomSet,
    probe_radius: float = 1.4,
    refine: bool = False,
) -> InterfaceData:
    """Classify the probe-rolled molecular surface of a solute.

    A node is inside when it lies inside an atom sphere or at depth at least
    probe_radius inside the probe-inflated union.  With refine=False crossing
    fractions come from linear interpolation of the level values; with
    refine=True each mixed edge is bisected on the continuous level function.
    """
    if probe_radius < 0:
        raise ConfigError(f"probe radius must be nonnegative, got {probe_radius}")
    if probe_radius == 0.0:
        return classify_union(grid, atoms)
    dist = _SesDistance(grid, atoms, probe_radius)
    psi = dist.psi_nodes()
    inside = (dist.vdw_signed < CLASSIFY_TOL) | (psi > -CLASSIFY_TOL)
    h = grid.h
    origin = np.asarray(grid.origin)
    crossings = []
    indicator = None
    if refine:
        indicator = lambda x: dist.psi_point(x) > -CLASSIFY_TOL
    for axis in range(3):
        idx = _mixed_edges(inside, axis)
        if idx.size == 0:
            continue
        hi = idx.copy()
        hi[:, axis] += 1
        psi_lo = psi[idx[:, 0], idx[:, 1], idx[:, 2]]
        psi_hi = psi[hi[:, 0], hi[:, 1], hi[:, 2]]
        denom = psi_lo - psi_hi
        with np.errstate(divide="ignore", invalid="ignore"):
            t_lin = np.where(denom != 0.0, psi_lo / np.where(denom != 0.0, denom, 1.0), 0.5)
        low_inside = inside[idx[:, 0], idx[:, 1], idx[:, 2]]
        for row, t0, lo_in in zip(idx, t_lin, low_inside):
            p0 = origin + row * h
            t = float(t0)
            if refine:
                t = _bisect_flip(p0, axis, h, bool(lo_in), indicator)
            loc = p0.copy()
            loc[axis] += t * h
            crossings.append(
                Crossing(
                    axis,
                    tuple(int(v) for v in row),
                    float(np.clip(t, THETA_MIN, 1.0 - THETA_MIN)),
                    tuple(loc),
                )
            )
    return InterfaceData(grid, inside, crossings)


def _fmt(x: float) -> str:
    return repr(float(x))


def export_interface(data: InterfaceData, path) -> None:
    """Write an interface as the text interchange format.

    Header lines give the box corners, node counts, spacing, and the sign
    convention (native: -1 inside, +1 outside).  Node rows are run-length
    encoded along x; crossings follow with theta and the cut location.
    """
    g = data.grid
    nx, ny, nz = g.shape
    upper = g.upper
    lines = [
        "# interface interchange",
        "box "
        + " ".join(_fmt(v) for v in g.origin)
        + " "
        + " ".join(_fmt(v) for v in upper),
        f"n {nx} {ny} {nz}",
        f"h {_fmt(g.h)}",
        "convention native",
    ]
    signs = np.where(data.inside, -1, 1)
    for k in range(nz):
        for j in range(ny):
            row = signs[:, j, k]
            runs = []
            count, cur = 1, row[0]
            for v in row[1:]:
                if v == cur:
                    count += 1
                else:
                    runs.append(f"{count}*{cur}")
                    count, cur = 1, v
            runs.append(f"{count}*{cur}")
            lines.append(f"row {j} {k} " + " ".join(runs))
    for key in sorted(data.crossings):
        c = data.crossings[key]
        lines.append(
            f"cross {AXIS_NAMES[c.axis]} {c.index[0]} {c.index[1]} {c.index[2]} "
            + _fmt(c.theta)
            + " "
            + " ".join(_fmt(v) for v in c.location)
        )
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def _parse_floats(parts, count, lineno, what):
    if len(parts) != count:
        raise FormatError(f"{what} expects {count} numbers, got {len(parts)}", lineno)
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise FormatError(f"malformed number in {what}", lineno) from exc


def import_interface(path) -> InterfaceData:
    """Read the text interchange format back into an InterfaceData.

    The eses sign convention (+1 inside) is accepted and negated on import.
    Consistency between box, node counts, and spacing is enforced to 1e-9,
    and every crossing must sit on a mixed edge.
    """
    with open(path) as f:
        text = f.read()
    box = shape = hval = None
    convention = "native"
    rows: dict[tuple[int, int], np.ndarray] = {}
    crosses: list[tuple[int, tuple[int, int, int], float, tuple | None, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kw, args = parts[0], parts[1:]
        if kw == "box":
            vals = _parse_floats(args, 6, lineno, "box")
            box = (tuple(vals[:3]), tuple(vals[3:]))
        elif kw == "n":
            if len(args) != 3:
                raise FormatError(f"n expects 3 integers, got {len(args)}", lineno)
            try:
                shape = tuple(int(a) for a in args)
            except ValueError as exc:
                raise FormatError("malformed integer in n", lineno) from exc
            if any(v < 2 for v in shape):
                raise FormatError(f"node counts must be at least 2, got {shape}", lineno)
        elif kw == "h":
            hval = _parse_floats(args, 1, lineno, "h")[0]
            if hval <= 0:
                raise FormatError(f"h must be positive, got {hval}", lineno)
        elif kw == "convention":
            if len(args) != 1 or args[0] not in ("native", "eses"):
                raise FormatError("convention must be `native` or `eses`", lineno)
            convention = args[0]
        elif kw == "row":
            if shape is None:
                raise FormatError("row before n directive", lineno)
            if len(args) < 3:
                raise FormatError("row expects j k and at least one run", lineno)
            try:
                j, k = int(args[0]), int(args[1])
            except ValueError as exc:
                raise FormatError("malformed row indices", lineno) from exc
            if not (0 <= j < shape[1] and 0 <= k < shape[2]):
                raise FormatError(f"row indices ({j}, {k}) out of range", lineno)
            if (j, k) in rows:
                raise FormatError(f"duplicate row ({j}, {k})", lineno)
            vals = []
            for tok in args[2:]:
                try:
                    cnt_s, sign_s = tok.split("*")
                    cnt, sign = int(cnt_s), int(sign_s)
                except ValueError as exc:
                    raise FormatError(f"malformed run {tok!r}", lineno) from exc
                if cnt < 1 or sign not in (-1, 1):
                    raise FormatError(f"run must be count*(-1|1), got {tok!r}", lineno)
                vals.extend([sign] * cnt)
            if len(vals) != shape[0]:
                raise FormatError(
                    f"row covers {len(vals)} nodes, expected {shape[0]}", lineno
                )
            rows[(j, k)] = np.array(vals, dtype=int)
        elif kw == "cross":
            if len(args) not in (5, 8, 11):
                raise FormatError(
                    "cross expects axis, i j k, theta, then optional location"
                    " and normal", lineno
                )
            if args[0] not in AXIS_NAMES:
                raise FormatError(f"unknown axis {args[0]!r}", lineno)
            axis = AXIS_NAMES.index(args[0])
            try:
                index = tuple(int(a) for a in args[1:4])
            except ValueError as exc:
                raise FormatError("malformed crossing indices", lineno) from exc
            theta = _parse_floats(args[4:5], 1, lineno, "theta")[0]
            if not (0.0 < theta < 1.0):
                raise FormatError(f"theta must be in (0, 1), got {theta}", lineno)
            loc = None
            if len(args) >= 8:
                loc = tuple(_parse_floats(args[5:8], 3, lineno, "location"))
            if len(args) == 11:
                _parse_floats(args[8:11], 3, lineno, "normal")  # reserved, ignored
            crosses.append((axis, index, theta, loc, lineno))
        else:
            raise FormatError(f"unknown directive {kw!r}", lineno)
    if box is None or shape is None or hval is None:
        raise FormatError("missing required directive (box, n, or h)", None)
    lo, hi = box
    for a in range(3):
        want = lo[a] + hval * (shape[a] - 1)
        if abs(hi[a] - want) > 1e-9 * max(1.0, abs(hi[a] - lo[a])):
            raise FormatError(
                f"box extent on axis {AXIS_NAMES[a]} inconsistent with n and h", None
            )
    if len(rows) != shape[1] * shape[2]:
        raise FormatError(
            f"expected {shape[1] * shape[2]} rows, got {len(rows)}", None
        )
    grid = Grid(lo, hval, shape)
    inside = np.empty(shape, dtype=bool)
    flip = -1 if convention == "eses" else 1
    for (j, k), vals in rows.items():
        inside[:, j, k] = (flip * vals) == -1
    crossings = []
    seen = set()
    for axis, index, theta, loc, lineno in crosses:
        i, j, k = index
        hi_idx = list(index)
        hi_idx[axis] += 1
        n = shape
        if not (0 <= i < n[0] and 0 <= j < n[1] and 0 <= k < n[2] and hi_idx[axis] < n[axis]):
            raise FormatError(f"crossing edge {index} out of range", lineno)
        if inside[i, j, k] == inside[tuple(hi_idx)]:
            raise FormatError(
                f"crossing on a uniform edge at {index} along {AXIS_NAMES[axis]}",
                lineno,
            )
        key = (axis, i, j, k)
        if key in seen:
            raise FormatError(f"duplicate crossing on edge {index}", lineno)
        seen.add(key)
        if loc is None:
            p = grid.node(i, j, k)
            p[axis] += theta * grid.h
            loc = tuple(p)
        crossings.append(Crossing(axis, index, theta, loc))
    data = InterfaceData(grid, inside, crossings)
    try:
        data.validate()
    except AssemblyError as exc:
        raise FormatError(str(exc), None) from exc
    return data
