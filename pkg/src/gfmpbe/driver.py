"""Problem assembly, the pseudo-time loop, schedules, studies, and exports."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .control import Controller, ControllerConfig, ControllerState, should_stop
from .errors import ConfigError, DivergenceError, InitializationError
from .gfm import JumpData  # noqa: F401  (re-exported for callers building jumps)
from .grid import Field, Grid, build_grid, write_field_binary, write_field_csv
from .molecule import (
    AtomSet,
    PhysicalParams,
    SINGULARITY_GUARD,
    dirichlet_boundary,
    solvation_energy,
)
from .stepping import SplitOperators, adi_step, build_split_operators, lod_step
from .surface import (
    InterfaceData,
    classify_sphere,
    classify_ses_grid,
    classify_union,
    import_interface,
)

ENERGY_GUARD = 1e8
"""Absolute energies beyond this abort the run as divergent."""

_T_EPS = 1e-12

LPB_DT = 0.01
LPB_TOL = 1e-3
LPB_T_END = 10.0


@dataclass
class RunConfig:
    """Everything needed to assemble and run one problem."""

    atoms: AtomSet
    h: float
    surface: str = "ses-grid"  # sphere | vdw | ses-grid | import:PATH
    probe_radius: float = 1.4
    scheme: str = "ADI"  # ADI | LOD
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    ic: str = "lpb"  # zero | lpb
    params: PhysicalParams = field(default_factory=PhysicalParams)
    box: tuple[float, float, float, float, float, float] | None = None
    trace_path: str | None = None
    field_path: str | None = None
    field_mode: str = "u"  # u | phi

    def __post_init__(self):
        if self.scheme not in ("ADI", "LOD"):
            raise ConfigError(f"scheme must be ADI or LOD, got {self.scheme!r}")
        if self.ic not in ("zero", "lpb"):
            raise ConfigError(f"ic must be zero or lpb, got {self.ic!r}")
        if self.field_mode not in ("u", "phi"):
            raise ConfigError(f"field mode must be u or phi, got {self.field_mode!r}")
        ok = self.surface in ("sphere", "vdw", "ses-grid") or self.surface.startswith(
            "import:"
        )
        if not ok:
            raise ConfigError(f"unknown surface kind {self.surface!r}")


@dataclass
class Problem:
    """Assembled discrete problem ready to step."""

    grid: Grid
    data: InterfaceData
    atoms: AtomSet
    params: PhysicalParams
    split: SplitOperators
    boundary: Field


@dataclass(frozen=True)
class TraceRow:
    step: int
    t: float
    dt: float
    err: float
    factor: float
    energy: float
    de: float


@dataclass
class EnergyTrace:
    """Per-step history of one run plus the final state."""

    rows: list[TraceRow]
    final_energy: float
    steps: int
    wall_time: float
    final_field: Field | None = None

    def write_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("step,t,dt,e_n,F,E_sol,dE\n")
            for r in self.rows:
                f.write(
                    f"{r.step},{r.t!r},{r.dt!r},{r.err!r},{r.factor!r},"
                    f"{r.energy!r},{r.de!r}\n"
                )

    @property
    def dts(self) -> np.ndarray:
        return np.array([r.dt for r in self.rows[1:]])


def build_problem(cfg: RunConfig) -> Problem:
    """Build grid, classify the surface, and assemble the axis operators."""
    if cfg.surface.startswith("import:"):
        data = import_interface(cfg.surface[len("import:") :])
        grid = data.grid
    else:
        grid = build_grid(cfg.atoms, cfg.h, cfg.probe_radius, box=cfg.box)
        if cfg.surface == "sphere":
            if len(cfg.atoms) != 1:
                raise ConfigError("sphere surface requires exactly one atom")
            data = classify_sphere(grid, cfg.atoms.centers[0], cfg.atoms.radii[0])
        elif cfg.surface == "vdw":
            data = classify_union(grid, cfg.atoms)
        else:
            data = classify_ses_grid(grid, cfg.atoms, cfg.probe_radius)
    boundary = _boundary_field(grid, cfg.atoms, cfg.params)
    split = build_split_operators(data, cfg.atoms, cfg.params, boundary)
    return Problem(grid, data, cfg.atoms, cfg.params, split, boundary)


def _boundary_field(grid: Grid, atoms: AtomSet, params: PhysicalParams) -> Field:
    """Field holding the far-field Dirichlet values on the six box faces."""
    mask = np.zeros(grid.shape, dtype=bool)
    mask[0, :, :] = mask[-1, :, :] = True
    mask[:, 0, :] = mask[:, -1, :] = True
    mask[:, :, 0] = mask[:, :, -1] = True
    pts = grid.nodes()[mask]
    values = np.zeros(grid.shape)
    values[mask] = dirichlet_boundary(atoms, pts, params)
    return Field(grid, values)


def _step_once(
    u: np.ndarray,
    dt: float,
    split: SplitOperators,
    scheme: str,
    linearized: bool = False,
) -> np.ndarray:
    if scheme == "ADI":
        return adi_step(u, dt, split, linearized=linearized)
    return lod_step(u, dt, split, linearized=linearized)


def _check_field(u: np.ndarray, step: int) -> None:
    if not np.all(np.isfinite(u)):
        raise DivergenceError("non-finite field value", step)


def _check_energy(e: float, step: int) -> None:
    if not math.isfinite(e) or abs(e) > ENERGY_GUARD:
        raise DivergenceError(f"runaway energy {e}", step)


def initial_condition(kind: str, problem: Problem, scheme: str = "ADI") -> Field:
    """Starting field: zeros, or the steady state of the linearized problem.

    The linearized pre-solve runs the same splitting scheme with the sinh
    substep replaced by exact exponential decay, at constant dt = 0.01,
    until the energy change drops below 1e-3 or t reaches 10.
    """
    u0 = problem.boundary.values.copy()
    if kind == "zero":
        return Field(problem.grid, u0)
    if kind != "lpb":
        raise ConfigError(f"unknown initial condition kind {kind!r}")
    u = u0
    energy = solvation_energy(Field(problem.grid, u), problem.atoms, problem.params)
    t = 0.0
    step = 0
    try:
        while t < LPB_T_END - _T_EPS:
            u = _step_once(u, LPB_DT, problem.split, scheme, linearized=True)
            step += 1
            t += LPB_DT
            _check_field(u, step)
            e_new = solvation_energy(
                Field(problem.grid, u), problem.atoms, problem.params
            )
            _check_energy(e_new, step)
            de = abs(e_new - energy)
            energy = e_new
            if de < LPB_TOL:
                break
    except DivergenceError as exc:
        raise InitializationError(
            "linearized pre-solve diverged", exc.step
        ) from exc
    return Field(problem.grid, u)


def run(cfg: RunConfig, problem: Problem | None = None) -> EnergyTrace:
    """Pseudo-time iteration under cfg's controller until the stop predicate.

    Reuses a prebuilt Problem when given (the assembly is the expensive
    part of parameter studies).  Writes the trace CSV and the field dump
    when cfg carries output paths.
    """
    if problem is None:
        problem = build_problem(cfg)
    u_field = initial_condition(cfg.ic, problem, cfg.scheme)
    u = u_field.values
    controller = Controller(cfg.controller)
    energy = solvation_energy(Field(problem.grid, u), problem.atoms, problem.params)
    rows = [TraceRow(0, 0.0, controller.dt, math.nan, math.nan, energy, math.nan)]
    t = 0.0
    step = 0
    t_end = cfg.controller.t_end
    start = time.perf_counter()
    while t < t_end - _T_EPS:
        dt = controller.dt
        u_new = _step_once(u, dt, problem.split, cfg.scheme)
        step += 1
        t += dt
        _check_field(u_new, step)
        e_new = solvation_energy(
            Field(problem.grid, u_new), problem.atoms, problem.params
        )
        _check_energy(e_new, step)
        de = abs(e_new - energy)
        controller.observe(u_new, u, e_new, energy)
        rows.append(
            TraceRow(
                step,
                t,
                dt,
                controller.state.last_error,
                controller.state.last_factor,
                e_new,
                de,
            )
        )
        u, energy = u_new, e_new
        if controller.should_stop(t, de):
            break
    wall = time.perf_counter() - start
    trace = EnergyTrace(
        rows=rows,
        final_energy=energy,
        steps=step,
        wall_time=wall,
        final_field=Field(problem.grid, u),
    )
    _write_outputs(cfg, problem, trace)
    return trace


def run_schedule(
    cfg: RunConfig,
    switches: list[tuple[float, float]],
    problem: Problem | None = None,
) -> EnergyTrace:
    """Run with a piecewise-constant dt schedule.

    switches is a list of (t_switch, dt) with strictly increasing times
    starting at 0; each dt applies from the first step whose start time
    has reached its switch point.  Stopping follows cfg.controller's
    horizon, tolerance, and guard.
    """
    if not switches:
        raise ConfigError("schedule needs at least one (t, dt) switch")
    times = [s[0] for s in switches]
    if times[0] > _T_EPS:
        raise ConfigError("first switch must start at t = 0")
    if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
        raise ConfigError("switch times must be strictly increasing")
    if any(dt <= 0 for _, dt in switches):
        raise ConfigError("schedule time steps must be positive")
    if problem is None:
        problem = build_problem(cfg)
    u_field = initial_condition(cfg.ic, problem, cfg.scheme)
    u = u_field.values
    energy = solvation_energy(Field(problem.grid, u), problem.atoms, problem.params)
    ctrl_cfg = cfg.controller
    dummy = ControllerState(dt=switches[0][1])
    rows = [TraceRow(0, 0.0, switches[0][1], math.nan, math.nan, energy, math.nan)]
    t = 0.0
    step = 0
    start = time.perf_counter()
    while t < ctrl_cfg.t_end - _T_EPS:
        dt = switches[0][1]
        for t_sw, dt_sw in switches:
            if t >= t_sw - 1e-9:
                dt = dt_sw
        u_new = _step_once(u, dt, problem.split, cfg.scheme)
        step += 1
        t += dt
        _check_field(u_new, step)
        e_new = solvation_energy(
            Field(problem.grid, u_new), problem.atoms, problem.params
        )
        _check_energy(e_new, step)
        de = abs(e_new - energy)
        rows.append(TraceRow(step, t, dt, math.nan, math.nan, e_new, de))
        u, energy = u_new, e_new
        if should_stop("Constant", t, de, dummy, ctrl_cfg):
            break
    wall = time.perf_counter() - start
    trace = EnergyTrace(
        rows=rows,
        final_energy=energy,
        steps=step,
        wall_time=wall,
        final_field=Field(problem.grid, u),
    )
    _write_outputs(cfg, problem, trace)
    return trace


@dataclass(frozen=True)
class ConvergenceRow:
    value: float
    energy: float
    error: float
    diverged: bool


@dataclass
class ConvergenceResult:
    rows: list[ConvergenceRow]
    rate: float
    message: str


def convergence_study(
    cfg: RunConfig, vary: str, values: list[float]
) -> ConvergenceResult:
    """Self-convergence: rerun at each resolution, fit log error vs log value.

    The finest value (smallest h or dt) serves as the reference; its row
    carries a NaN error.  Divergent members are flagged and excluded from
    the fit.  Not available for imported surfaces when varying h.
    """
    if vary not in ("h", "dt"):
        raise ConfigError(f"vary must be h or dt, got {vary!r}")
    if len(values) < 3:
        raise ConfigError("need at least three resolutions")
    if vary == "h" and cfg.surface.startswith("import:"):
        raise ConfigError("cannot vary h with an imported surface")
    order = sorted(values, reverse=True)
    energies: dict[float, float | None] = {}
    for v in order:
        member = _member_config(cfg, vary, v)
        try:
            energies[v] = run(member).final_energy
        except DivergenceError:
            energies[v] = None
    ref_value = order[-1]
    e_ref = energies[ref_value]
    if e_ref is None:
        return ConvergenceResult([], math.nan, "reference run diverged")
    rows = []
    pts = []
    for v in order:
        e = energies[v]
        if e is None:
            rows.append(ConvergenceRow(v, math.nan, math.nan, True))
            continue
        if v == ref_value:
            rows.append(ConvergenceRow(v, e, math.nan, False))
            continue
        err = abs(e - e_ref)
        rows.append(ConvergenceRow(v, e, err, False))
        if err > 0:
            pts.append((math.log(v), math.log(err)))
    if len(pts) < 2:
        return ConvergenceResult(
            rows, math.nan, "degenerate fit: fewer than two nonzero errors"
        )
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    slope = float(np.polyfit(xs, ys, 1)[0])
    return ConvergenceResult(rows, slope, "")


def _member_config(cfg: RunConfig, vary: str, value: float) -> RunConfig:
    if vary == "h":
        return replace(cfg, h=value)
    ctrl = replace(
        cfg.controller,
        kind="Constant",
        dt0=value,
        dt_min=min(value, cfg.controller.dt_min),
        dt_max=max(value, cfg.controller.dt_max),
    )
    return replace(cfg, controller=ctrl)


def export_potential(
    u: Field,
    atoms: AtomSet,
    params: PhysicalParams,
    mode: str,
    path,
    inside: np.ndarray | None = None,
) -> None:
    """Dump the field; mode phi adds the Coulomb part on inside nodes.

    Nodes within the singularity guard of an atom center receive inf in
    phi mode.  The format follows the file extension: .csv is the text
    dump, anything else the binary layout.
    """
    if mode == "u":
        out = u
    elif mode == "phi":
        if inside is None:
            raise ConfigError("phi mode needs the inside mask")
        values = u.values.copy()
        pts = u.grid.nodes()[inside]
        if len(pts):
            g = np.zeros(len(pts))
            for center, charge in zip(atoms.centers, atoms.charges):
                d = np.sqrt(((pts - center) ** 2).sum(axis=1))
                with np.errstate(divide="ignore"):
                    g += np.where(
                        d < SINGULARITY_GUARD,
                        np.inf,
                        charge / np.where(d < SINGULARITY_GUARD, 1.0, d),
                    )
            values[inside] += (params.charge_factor / params.eps_in) * g
        out = Field(u.grid, values)
    else:
        raise ConfigError(f"potential mode must be u or phi, got {mode!r}")
    if str(path).endswith(".csv"):
        write_field_csv(out, path)
    else:
        write_field_binary(out, path)


def _write_outputs(cfg: RunConfig, problem: Problem, trace: EnergyTrace) -> None:
    if cfg.trace_path:
        trace.write_csv(cfg.trace_path)
    if cfg.field_path:
        export_potential(
            trace.final_field,
            problem.atoms,
            problem.params,
            cfg.field_mode,
            cfg.field_path,
            inside=problem.data.inside,
        )


def kirkwood_config(
    h: float = 0.25,
    scheme: str = "ADI",
    controller: ControllerConfig | None = None,
    ic: str = "lpb",
    box_half: float = 8.0,
) -> RunConfig:
    """Built-in benchmark: unit charge in a radius-2 sphere, kappa^2 = 1."""
    from .molecule import Atom

    atoms = AtomSet([Atom((0.0, 0.0, 0.0), 1.0, 2.0)])
    params = PhysicalParams(eps_in=1.0, eps_out=80.0, kappa_sq=1.0)
    if controller is None:
        controller = ControllerConfig(
            kind="Constant", dt0=0.001, tol=1e-4, t_min_stop=1.0
        )
    return RunConfig(
        atoms=atoms,
        h=h,
        surface="sphere",
        scheme=scheme,
        controller=controller,
        ic=ic,
        params=params,
        box=(-box_half,) * 3 + (box_half,) * 3,
    )


def reference_config(cfg: RunConfig) -> RunConfig:
    """The fixed protocol used as E_ref: constant dt = 0.01, LPB start."""
    ctrl = ControllerConfig(
        kind="Constant",
        dt0=0.01,
        dt_min=min(0.01, cfg.controller.dt_min),
        dt_max=max(0.01, cfg.controller.dt_max),
        tol=1e-4,
        t_end=50.0,
        t_min_stop=5.0,
    )
    return replace(cfg, controller=ctrl, ic="lpb", trace_path=None, field_path=None)


def scaling_study(
    sizes: list[int],
    scheme: str = "ADI",
    steps: int = 6,
    box_half: float = 8.0,
) -> tuple[list[tuple[int, float]], float]:
    """Median per-step wall time across grid sizes; returns rows and slope.

    Each size n runs the built-in benchmark on an n^3 grid; the first step
    (cache warm-up) is excluded from the median.  The slope is fitted on
    log(time) vs log(total nodes).
    """
    if len(sizes) < 2:
        raise ConfigError("scaling study needs at least two sizes")
    if steps < 3:
        raise ConfigError("scaling study needs at least three steps per size")
    rows = []
    for n in sizes:
        if n < 5:
            raise ConfigError(f"grid size too small for scaling: {n}")
        h = 2.0 * box_half / (n - 1)
        cfg = kirkwood_config(h=h, scheme=scheme, ic="zero", box_half=box_half)
        problem = build_problem(cfg)
        u = initial_condition("zero", problem, scheme).values
        times = []
        for _ in range(steps):
            t0 = time.perf_counter()
            u = _step_once(u, 0.01, problem.split, scheme)
            times.append(time.perf_counter() - t0)
        rows.append((n, float(np.median(times[1:]))))
    xs = np.log([float(n) ** 3 for n, _ in rows])
    ys = np.log([t for _, t in rows])
    slope = float(np.polyfit(xs, ys, 1)[0])
    return rows, slope
