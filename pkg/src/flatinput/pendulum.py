"""The variable-length pendulum in normed units (g = 1).

    x1' = x2
    x2' = -cos(x3) + x1 u^2
    x3' = u

``x1`` is the ball distance from the pivot, ``x2`` its speed and ``x3`` the
rod angle from the vertical; the output is ``y = x1``. The relative degree is
2 for ``x1 != 0`` and 3 at ``x1 = 0``. With the flat input
``gamma(x) = (0, 0, sin x3)`` the output becomes flat and
``y''' = (1 - y''^2) u_f``; the discrete compensator below turns ``u_f`` into
the physical rod rate ``u``.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence, Tuple

import numpy as np

from .control import (
    EPS_PF,
    FLAG_JET_RANGE,
    FLAG_SQRT_CLAMP,
    CompensatorState,
)
from .core import FlatInputSystem, SmoothSisoSystem
from .errors import CompensatorSingularError, DomainError, PfSingularError

EPS_DEN = 1e-8


class PendulumState(NamedTuple):
    x1: float
    x2: float
    x3: float


class PendulumJet(NamedTuple):
    """Output and its first two derivatives rebuilt from state feedback."""

    y: float
    dy: float
    ddy: float


def in_observable_domain(x) -> bool:
    return 0.0 < x[2] < math.pi


def pendulum_dynamics(x, u: float) -> np.ndarray:
    x1, x2, x3 = x
    return np.array([x2, -math.cos(x3) + x1 * u * u, u])


def flat_pendulum_dynamics(x, u_f: float) -> np.ndarray:
    """The pendulum with its actuator replaced by the flat input."""
    x1, x2, x3 = x
    return np.array([x2, -math.cos(x3), math.sin(x3) * u_f])


def _jet(x) -> np.ndarray:
    return np.array([x[0], x[1], -math.cos(x[2])])


def _jet_jacobian(x) -> np.ndarray:
    return np.diag([1.0, 1.0, math.sin(x[2])])


def pendulum_alpha(x) -> float:
    return math.sin(x[2]) ** 2


def pendulum_system() -> SmoothSisoSystem:
    return SmoothSisoSystem(
        n=3,
        f=pendulum_dynamics,
        h=lambda x: x[0],
        jet=_jet,
        jet_jacobian=_jet_jacobian,
        domain_obs=in_observable_domain,
        domain_ctrl=in_observable_domain,
        m=1,
    )


def flat_input_pendulum() -> FlatInputSystem:
    """Flat-input companion with ``alpha = sin^2 x3``; gamma is built by LU solve."""
    return FlatInputSystem(
        base=pendulum_system(),
        alpha=pendulum_alpha,
        q=lambda jet: 0.0,
        p_f=lambda jet: 1.0 - jet[2] ** 2,
    )


def to_canonical(x) -> np.ndarray:
    return _jet(x)


def from_canonical(xi) -> PendulumState:
    xi1, xi2, xi3 = xi
    if not abs(xi3) < 1.0:
        raise DomainError(f"|xi3| = {abs(xi3)} >= 1 has no rod angle in (0, pi)")
    return PendulumState(float(xi1), float(xi2), math.acos(-xi3))


def output_jet(x, u_applied: float) -> PendulumJet:
    """``(y, y', y'')`` from the state and the control currently held."""
    x1, x2, x3 = x
    return PendulumJet(float(x1), float(x2), -math.cos(x3) + x1 * u_applied * u_applied)


def sin_term(jet: Sequence[float], u: float) -> Tuple[float, bool]:
    """``sqrt(1 - (y'' - y u^2)^2)``, which equals ``sin x3`` on the domain.

    The root argument is clamped to ``[0, 1]``; the flag reports clamping.
    """
    y, _, ddy = jet
    arg = 1.0 - (ddy - y * u * u) ** 2
    clamped = arg < 0.0
    return math.sqrt(min(max(arg, 0.0), 1.0)), clamped


def compensator_step(
    jet: Sequence[float], u_f: float, state: CompensatorState, eps_den: float = EPS_DEN
) -> Tuple[float, CompensatorState]:
    """One sample of the backward-difference compensator.

    Solves the compensator equation with ``u' ~ (u[k] - u[k-1]) / dt`` and
    ``u^2 ~ u[k] u[k-1]``, which makes it linear in ``u[k]``. Guard events are
    recorded in ``next.flags``.
    """
    y, dy, ddy = jet
    up, dt = state.u_prev, state.dt
    s, clamped = sin_term(jet, up)
    num = (1.0 - ddy * ddy) * u_f + 2.0 * y * up * up / dt
    den = dy * up + 2.0 * y * up / dt + s
    if not abs(den) > eps_den:
        raise CompensatorSingularError(f"compensator denominator {den:.3e} at jet {tuple(jet)}", den)
    flags = 0
    if clamped:
        flags |= FLAG_SQRT_CLAMP
    if not abs(ddy) < 1.0:
        flags |= FLAG_JET_RANGE
    u = num / den
    return u, CompensatorState(dt=dt, u_prev=u, k=state.k + 1, flags=flags)


def continuous_compensator_residual(jet: Sequence[float], u: float, du: float, u_f: float) -> float:
    """Left minus right side of the continuous compensator equation

        y' u^2 + 2 y u u' + sqrt(1 - (y'' - y u^2)^2) u = (1 - y''^2) u_f
    """
    y, dy, ddy = jet
    s, _ = sin_term(jet, u)
    return dy * u * u + 2.0 * y * u * du + s * u - (1.0 - ddy * ddy) * u_f


def flat_parameterization(jet4: Sequence[float], eps_pf: float = EPS_PF) -> Tuple[PendulumState, float]:
    """States of the flat-input pendulum and its flat input from ``(y, y', y'', y''')``."""
    y, dy, ddy, dddy = jet4
    x_bar = from_canonical((y, dy, ddy))
    pf = 1.0 - ddy * ddy
    if not abs(pf) > eps_pf:
        raise PfSingularError(f"1 - y''^2 = {pf:.3e} is too small", pf)
    return x_bar, dddy / pf
