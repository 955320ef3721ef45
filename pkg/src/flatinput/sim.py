"""Fixed-step multi-rate closed-loop simulation of the pendulum.

The plant is integrated with classical RK4 at ``sim_dt``; the controller and
compensator run every ``ctrl_dt`` and their output is held in between.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .control import (
    FLAG_DEN_GUARD,
    FLAG_FAULT,
    FLAG_JET_RANGE,
    FLAG_PF_GUARD,
    DEFAULT_GAINS,
    CompensatorState,
    ControllerGains,
    ReferenceTrajectory,
    feedback_linearize,
    feedforward_flat_input,
    reference_jet,
)
from .errors import CompensatorSingularError, DomainError, NumericsError, PfSingularError
from .pendulum import (
    compensator_step,
    continuous_compensator_residual,
    flat_input_pendulum,
    in_observable_domain,
    output_jet,
    pendulum_dynamics,
)

COLUMNS = ("t", "x1", "x2", "x3", "y", "yref", "dy", "ddy", "u", "uf", "e", "flags")
TICK_COLUMNS = ("t", "y", "dy", "ddy", "u_prev", "u", "uf")
MODES = ("feedback", "feedforward")


def rk4_step(deriv: Callable, x, u: float, h: float) -> np.ndarray:
    """One classical Runge-Kutta step of ``x' = deriv(x, u)`` with ``u`` held."""
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    x = np.asarray(x, dtype=float)
    k1 = np.asarray(deriv(x, u), dtype=float)
    k2 = np.asarray(deriv(x + 0.5 * h * k1, u), dtype=float)
    k3 = np.asarray(deriv(x + 0.5 * h * k2, u), dtype=float)
    k4 = np.asarray(deriv(x + h * k3, u), dtype=float)
    x_new = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_new)):
        raise NumericsError(f"RK4 step produced {x_new.tolist()}", last_valid=x)
    return x_new


@dataclass(frozen=True)
class SimConfig:
    sim_dt: float = 0.01
    ctrl_dt: float = 0.1
    duration: float = 20.0
    x0: Sequence[float] = (1.0, 0.0, math.pi / 2)
    gains: ControllerGains = field(default_factory=lambda: ControllerGains(DEFAULT_GAINS))
    mode: str = "feedback"
    trajectory: Optional[ReferenceTrajectory] = None

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if len(self.x0) != 3:
            raise ValueError("x0 must have three entries")
        if not self.sim_dt > 0:
            raise ValueError("sim_dt must be positive")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not self.ctrl_dt >= self.sim_dt:
            raise ValueError("ctrl_dt must not be shorter than sim_dt")
        ratio = round(self.ctrl_dt / self.sim_dt)
        if abs(ratio * self.sim_dt - self.ctrl_dt) > 1e-9 * self.ctrl_dt:
            raise ValueError(f"ctrl_dt={self.ctrl_dt} is not an integer multiple of sim_dt={self.sim_dt}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.gains.n != 3:
            raise ValueError("the pendulum needs three gains")
        if self.trajectory is None:
            object.__setattr__(self, "trajectory", ReferenceTrajectory.hold(self.x0[0], self.duration))

    @property
    def steps_per_tick(self) -> int:
        return round(self.ctrl_dt / self.sim_dt)

    @property
    def n_steps(self) -> int:
        return round(self.duration / self.sim_dt)


@dataclass
class SimulationTrace:
    """Per fine step rows (see ``COLUMNS``) plus one record per controller tick.

    ``dy`` and ``ddy`` are the plant's output derivatives under the input
    applied on that row. ``ticks`` holds what the compensator saw: the
    measured jet, ``u[k-1]``, ``u[k]`` and ``u_f``.
    """

    data: np.ndarray
    ticks: np.ndarray = field(default_factory=lambda: np.empty((0, len(TICK_COLUMNS))))
    fault: Optional[str] = None
    fault_time: Optional[float] = None

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[:, COLUMNS.index(name)]

    def tick(self, name: str) -> np.ndarray:
        return self.ticks[:, TICK_COLUMNS.index(name)]

    @property
    def flags(self) -> np.ndarray:
        return self["flags"].astype(int)

    @property
    def max_abs_error(self) -> float:
        return float(np.max(np.abs(self["e"])))

    @property
    def final_abs_error(self) -> float:
        return float(abs(self["e"][-1]))


def _row(t, x, yref, u, u_f, flags):
    jet = output_jet(x, u)
    return (t, x[0], x[1], x[2], jet.y, yref, jet.dy, jet.ddy, u, u_f, yref - jet.y, float(flags))


def run_closed_loop(cfg: SimConfig) -> SimulationTrace:
    """Simulate the compensated pendulum under feedback or feedforward control.

    Leaving ``0 < x3 < pi`` (or a non-finite RK4 step) halts the run; the
    returned trace then ends with a row flagged ``FLAG_FAULT``.
    """
    x = np.array(cfg.x0)
    if not in_observable_domain(x):
        raise DomainError(f"initial state {cfg.x0} is outside 0 < x3 < pi")
    flat = flat_input_pendulum()
    state = CompensatorState(dt=cfg.ctrl_dt)
    u = 0.0
    u_f = 0.0
    rows, ticks = [], []
    fault = fault_time = None
    ratio, n_steps = cfg.steps_per_tick, cfg.n_steps

    for i in range(n_steps + 1):
        t = i * cfg.sim_dt
        ref = reference_jet(cfg.trajectory, t, 3)
        flags = 0
        if i % ratio == 0:
            jet = output_jet(x, state.u_prev)
            comp_jet = jet if cfg.mode == "feedback" else tuple(ref.derivs[:3])
            try:
                if cfg.mode == "feedback":
                    u_f = feedback_linearize(flat, jet, ref, cfg.gains)
                else:
                    u_f = feedforward_flat_input(flat, ref)
            except PfSingularError:
                flags |= FLAG_PF_GUARD
            if not abs(jet.ddy) < 1.0:
                flags |= FLAG_JET_RANGE
            u_prev = state.u_prev
            try:
                u, state = compensator_step(comp_jet, u_f, state)
            except CompensatorSingularError:
                state = CompensatorState(dt=state.dt, u_prev=state.u_prev, k=state.k + 1, flags=FLAG_DEN_GUARD)
            flags |= state.flags
            ticks.append((t, comp_jet[0], comp_jet[1], comp_jet[2], u_prev, u, u_f))
        rows.append(_row(t, x, ref.derivs[0], u, u_f, flags))
        if i == n_steps:
            break
        try:
            x_next = rk4_step(pendulum_dynamics, x, u, cfg.sim_dt)
        except NumericsError as exc:
            fault, fault_time = str(exc), t
            rows[-1] = rows[-1][:-1] + (float(flags | FLAG_FAULT),)
            break
        x = x_next
        if not in_observable_domain(x):
            t_next = (i + 1) * cfg.sim_dt
            ref = reference_jet(cfg.trajectory, t_next, 3)
            fault, fault_time = f"rod angle x3={x[2]:.6g} left (0, pi)", t_next
            rows.append(_row(t_next, x, ref.derivs[0], u, u_f, FLAG_FAULT))
            break

    return SimulationTrace(
        data=np.array(rows, dtype=float),
        ticks=np.array(ticks, dtype=float).reshape(-1, len(TICK_COLUMNS)),
        fault=fault,
        fault_time=fault_time,
    )


def compensator_residuals(trace: SimulationTrace) -> np.ndarray:
    """Continuous compensator equation evaluated at every tick with
    ``u = u[k]`` and ``u' = (u[k] - u[k-1]) / ctrl_dt``.
    """
    t = trace.tick("t")
    if t.size < 2:
        return np.zeros(t.size)
    dt = t[1] - t[0]
    out = []
    for row in trace.ticks:
        _, y, dy, ddy, u_prev, u, u_f = row
        out.append(continuous_compensator_residual((y, dy, ddy), u, (u - u_prev) / dt, u_f))
    return np.array(out)


@dataclass
class IoEquivalenceResult:
    """Paired runs of the compensated pendulum and the flat-input pendulum.

    In both traces ``yref`` holds the flat-input plant output, so ``e`` is the
    output deviation. The flat trace stores ``u_f`` in its ``u`` column.
    """

    original: SimulationTrace
    flat: SimulationTrace
    max_deviation: float


def io_equivalence_run(cfg: SimConfig, u_f_profile: Callable[[float], float]) -> IoEquivalenceResult:
    """Drive both plants with the same sampled-and-held ``u_f`` sequence."""
    x = np.array(cfg.x0)
    xb = np.array(cfg.x0)
    if not in_observable_domain(x):
        raise DomainError(f"initial state {cfg.x0} is outside 0 < x3 < pi")
    flat = flat_input_pendulum()
    flat_rhs = flat.dynamics
    state = CompensatorState(dt=cfg.ctrl_dt)
    u = u_f = 0.0
    rows, flat_rows, ticks = [], [], []
    fault = fault_time = None

    for i in range(cfg.n_steps + 1):
        t = i * cfg.sim_dt
        flags = 0
        if i % cfg.steps_per_tick == 0:
            u_f = float(u_f_profile(t))
            jet = output_jet(x, state.u_prev)
            u_prev = state.u_prev
            try:
                u, state = compensator_step(jet, u_f, state)
            except CompensatorSingularError:
                state = CompensatorState(dt=state.dt, u_prev=state.u_prev, k=state.k + 1, flags=FLAG_DEN_GUARD)
            flags |= state.flags
            ticks.append((t, jet.y, jet.dy, jet.ddy, u_prev, u, u_f))
        y_flat = xb[0]
        rows.append(_row(t, x, y_flat, u, u_f, flags))
        flat_rows.append((t, xb[0], xb[1], xb[2], xb[0], y_flat, xb[1], -math.cos(xb[2]), u_f, u_f, 0.0, 0.0))
        if i == cfg.n_steps:
            break
        try:
            x = rk4_step(pendulum_dynamics, x, u, cfg.sim_dt)
            xb = rk4_step(flat_rhs, xb, u_f, cfg.sim_dt)
        except NumericsError as exc:
            fault, fault_time = str(exc), t
            break
        if not (in_observable_domain(x) and in_observable_domain(xb)):
            fault, fault_time = "rod angle left (0, pi)", (i + 1) * cfg.sim_dt
            break

    original = SimulationTrace(np.array(rows), np.array(ticks).reshape(-1, len(TICK_COLUMNS)), fault, fault_time)
    flat_trace = SimulationTrace(np.array(flat_rows), fault=fault, fault_time=fault_time)
    return IoEquivalenceResult(original, flat_trace, float(np.max(np.abs(original["e"]))))
