"""Adaptive time-step controllers and stopping predicates.

Seven kinds are supported.  Constant keeps dt fixed.  Manual1/Manual2 halve
dt and a threshold delta whenever the step's change measure drops below
delta.  PID1/PID2 scale dt by a three-term factor built from the last three
relative changes of the field (PID1) or the energy (PID2); FastPID is PID1
with a step-count stop after dt_min is first reached; NonincreasingPID is
PID1 with the factor floored at one so dt never grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

KINDS = (
    "Constant",
    "Manual1",
    "Manual2",
    "PID1",
    "PID2",
    "FastPID",
    "NonincreasingPID",
)

_PID_KINDS = ("PID1", "PID2", "FastPID", "NonincreasingPID")

_T_EPS = 1e-12
"""Slack when comparing times against the horizon or switch points."""


@dataclass(frozen=True)
class ControllerConfig:
    """Controller kind plus its numeric parameters."""

    kind: str = "Constant"
    dt_max: float = 1.0
    dt_min: float = 0.001
    dt0: float | None = None
    k_p: float = 0.075
    k_i: float = 0.175
    k_d: float = 0.01
    eps_p: float = 0.0025
    f_lo: float = 0.2
    f_hi: float = 5.0
    tol: float = 1e-4
    t_end: float = 50.0
    t_min_stop: float = 5.0
    post_min_steps: int = 100

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown controller kind {self.kind!r}")
        if not (0 < self.dt_min <= self.dt_max):
            raise ConfigError(
                f"need 0 < dt_min <= dt_max, got {self.dt_min}, {self.dt_max}"
            )
        if not (self.f_lo <= 1.0 <= self.f_hi):
            raise ConfigError(f"need f_lo <= 1 <= f_hi, got {self.f_lo}, {self.f_hi}")
        if self.tol <= 0:
            raise ConfigError(f"tolerance must be positive, got {self.tol}")
        if self.eps_p <= 0:
            raise ConfigError(f"eps_p must be positive, got {self.eps_p}")
        if self.t_end < 0 or self.t_min_stop < 0:
            raise ConfigError("time horizon and stop guard must be nonnegative")
        if self.dt0 is not None and not (
            self.dt_min <= self.dt0 <= self.dt_max
        ):
            raise ConfigError(
                f"dt0 must lie in [dt_min, dt_max], got {self.dt0}"
            )

    @staticmethod
    def for_kind(kind: str, **overrides) -> "ControllerConfig":
        """Config with the per-kind defaults (NonincreasingPID uses the
        recommended dt_max=1.0, dt_min=0.01, tol=0.01 triple)."""
        base: dict = {"kind": kind}
        if kind == "NonincreasingPID":
            base.update(dt_max=1.0, dt_min=0.01, tol=0.01)
        base.update(overrides)
        return ControllerConfig(**base)


@dataclass
class ControllerState:
    """Mutable per-run controller memory."""

    dt: float
    delta: float = 1.0
    errors: list = field(default_factory=list)
    reached_min: bool = False
    steps_at_min: int = 0
    last_factor: float = float("nan")
    last_error: float = float("nan")


def error_norm(kind: str, u_n, u_nm1, e_n: float, e_nm1: float) -> float:
    """Relative change measure: kind U compares fields, kind E energies.

    U: ||u_n - u_nm1||_2 / ||u_n||_2;  E: |e_n - e_nm1| / |e_n|.
    A zero denominator yields inf; callers substitute their setpoint.
    """
    if kind == "U":
        a = np.asarray(getattr(u_n, "values", u_n), dtype=float)
        b = np.asarray(getattr(u_nm1, "values", u_nm1), dtype=float)
        denom = float(np.linalg.norm(a.ravel()))
        num = float(np.linalg.norm((a - b).ravel()))
    elif kind == "E":
        denom = abs(float(e_n))
        num = abs(float(e_n) - float(e_nm1))
    else:
        raise ConfigError(f"unknown error norm kind {kind!r}")
    if denom == 0.0:
        return float("inf")
    return num / denom


def _sanitize(e: float, eps_p: float) -> float:
    if not np.isfinite(e) or e <= 0.0:
        return eps_p
    return e


def pid_factor(state: ControllerState, cfg: ControllerConfig) -> float:
    """Three-term scaling factor from the last three errors, clamped.

    F = (e_{n-1}/e_n)^k_p * (eps_p/e_n)^k_i * (e_{n-1}^2/(e_n e_{n-2}))^k_d.
    With fewer than three observations F = 1.  NonincreasingPID floors the
    clamped factor at one.
    """
    if len(state.errors) < 3:
        f = 1.0
    else:
        e0 = _sanitize(state.errors[-1], cfg.eps_p)
        e1 = _sanitize(state.errors[-2], cfg.eps_p)
        e2 = _sanitize(state.errors[-3], cfg.eps_p)
        f = (
            (e1 / e0) ** cfg.k_p
            * (cfg.eps_p / e0) ** cfg.k_i
            * (e1 * e1 / (e0 * e2)) ** cfg.k_d
        )
        f = min(max(f, cfg.f_lo), cfg.f_hi)
    if cfg.kind == "NonincreasingPID":
        f = max(f, 1.0)
    return f


def manual_update(
    state: ControllerState, cfg: ControllerConfig, e: float
) -> tuple[float, float]:
    """Halve dt (floored at dt_min) and delta whenever e < delta."""
    if e < state.delta:
        return max(state.dt / 2.0, cfg.dt_min), state.delta / 2.0
    return state.dt, state.delta


def should_stop(
    kind: str, t: float, de: float | None, state: ControllerState, cfg: ControllerConfig
) -> bool:
    """Stopping predicate; the horizon applies always, the rest after
    t_min_stop."""
    if t >= cfg.t_end - _T_EPS:
        return True
    if t < cfg.t_min_stop - _T_EPS:
        return False
    if de is None or not np.isfinite(de):
        return False
    if kind == "FastPID" and state.steps_at_min >= cfg.post_min_steps:
        return True
    if de < cfg.tol:
        if kind == "NonincreasingPID":
            return state.reached_min
        return True
    return False


class Controller:
    """Stateful wrapper: observe one executed step, expose the next dt."""

    def __init__(self, cfg: ControllerConfig):
        self.cfg = cfg
        dt0 = cfg.dt0 if cfg.dt0 is not None else cfg.dt_max
        self.state = ControllerState(dt=dt0)

    @property
    def dt(self) -> float:
        return self.state.dt

    def observe(self, u_n, u_nm1, e_n: float, e_nm1: float) -> None:
        """Record the step just executed and update dt for the next one."""
        cfg = self.cfg
        st = self.state
        if st.dt <= cfg.dt_min * (1.0 + 1e-12):
            st.reached_min = True
            st.steps_at_min += 1
        if cfg.kind == "Constant":
            st.last_factor = float("nan")
            st.last_error = float("nan")
            return
        if cfg.kind == "Manual1":
            a = np.asarray(getattr(u_n, "values", u_n), dtype=float)
            b = np.asarray(getattr(u_nm1, "values", u_nm1), dtype=float)
            e = float(np.linalg.norm((a - b).ravel()))
        elif cfg.kind == "Manual2":
            e = abs(float(e_n) - float(e_nm1))
        elif cfg.kind == "PID2":
            e = error_norm("E", u_n, u_nm1, e_n, e_nm1)
        else:
            e = error_norm("U", u_n, u_nm1, e_n, e_nm1)
        st.last_error = e
        if cfg.kind in ("Manual1", "Manual2"):
            st.dt, st.delta = manual_update(st, cfg, e)
            st.last_factor = float("nan")
            return
        st.errors.append(e)
        f = pid_factor(st, cfg)
        st.last_factor = f
        st.dt = min(max(st.dt / f, cfg.dt_min), cfg.dt_max)

    def should_stop(self, t: float, de: float | None) -> bool:
        return should_stop(self.cfg.kind, t, de, self.state, self.cfg)
