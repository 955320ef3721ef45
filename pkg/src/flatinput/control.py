"""Reference trajectories, gains and the system-agnostic tracking laws.

The tracking law works on the input-output form of the flat-input system,
``y^(n) = q(jet) + p_f(jet) u_f``, and imposes the linear error dynamics

    e^(n) + lambda_{n-1} e^(n-1) + ... + lambda_0 e = 0,   e = y* - y.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial

from .core import FlatInputSystem
from .errors import GainsError, PfSingularError

EPS_PF = 1e-6

# Event bits recorded by compensators and the simulator.
FLAG_SQRT_CLAMP = 1
FLAG_PF_GUARD = 2
FLAG_DEN_GUARD = 4
FLAG_JET_RANGE = 8
FLAG_FAULT = 16

# 35 s^4 - 84 s^5 + 70 s^6 - 20 s^7: zero slope, curvature and jerk at s = 0 and s = 1.
_BLEND = Polynomial([0, 0, 0, 0, 35, -84, 70, -20])
_BLEND_DERIVS = [_BLEND.deriv(k) for k in range(8)]


@dataclass(frozen=True)
class Hold:
    t_start: float
    t_end: float
    value: float

    def derivs(self, t: float, n: int) -> np.ndarray:
        out = np.zeros(n + 1)
        out[0] = self.value
        return out

    @property
    def y_start(self) -> float:
        return self.value

    @property
    def y_end(self) -> float:
        return self.value


@dataclass(frozen=True)
class Poly7:
    """Degree-7 rest-to-rest transition from ``y_from`` to ``y_to``."""

    t_start: float
    t_end: float
    y_from: float
    y_to: float

    def derivs(self, t: float, n: int) -> np.ndarray:
        T = self.t_end - self.t_start
        s = (t - self.t_start) / T
        out = np.zeros(n + 1)
        p = _BLEND(s)
        # blended form keeps both endpoints exact in floating point
        out[0] = self.y_from * (1.0 - p) + self.y_to * p
        delta = self.y_to - self.y_from
        for k in range(1, min(n, 7) + 1):
            out[k] = delta * _BLEND_DERIVS[k](s) / T**k
        return out

    @property
    def y_start(self) -> float:
        return self.y_from

    @property
    def y_end(self) -> float:
        return self.y_to


Segment = Union[Hold, Poly7]


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Contiguous piecewise reference built from hold and poly7 segments."""

    segments: Tuple[Segment, ...]

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError("a trajectory needs at least one segment")
        for seg in segs:
            if not seg.t_end > seg.t_start:
                raise ValueError(f"segment {seg} has non-positive duration")
        for a, b in zip(segs, segs[1:]):
            if a.t_end != b.t_start:
                raise ValueError(f"segments are not contiguous: {a.t_end} != {b.t_start}")
            if a.y_end != b.y_start:
                raise ValueError(f"reference jumps at t={a.t_end}: {a.y_end} -> {b.y_start}")

    @classmethod
    def hold(cls, value: float, t_end: float, t_start: float = 0.0) -> "ReferenceTrajectory":
        return cls((Hold(t_start, t_end, value),))

    @property
    def t_start(self) -> float:
        return self.segments[0].t_start

    @property
    def t_end(self) -> float:
        return self.segments[-1].t_end

    def segment_at(self, t: float) -> Segment:
        for seg in self.segments:
            if t < seg.t_end:
                return seg
        return self.segments[-1]


@dataclass(frozen=True)
class ReferenceJet:
    t: float
    derivs: np.ndarray

    @property
    def n(self) -> int:
        return self.derivs.size - 1


def reference_jet(traj: ReferenceTrajectory, t: float, n: int) -> ReferenceJet:
    """Return ``(y*, y*', ..., y*^(n))`` at ``t``.

    Times outside the horizon are clamped to the nearest endpoint.
    """
    tc = min(max(t, traj.t_start), traj.t_end)
    return ReferenceJet(t=t, derivs=traj.segment_at(tc).derivs(tc, n))


def routh_first_column(coeffs: Sequence[float]) -> np.ndarray:
    """First column of the Routh array for ``coeffs`` (highest power first).

    A zero pivot ends the table early; the column is then shorter than
    ``len(coeffs)``.
    """
    c = [float(v) for v in coeffs]
    width = (len(c) + 1) // 2
    upper = c[0::2] + [0.0] * (width - len(c[0::2]))
    lower = c[1::2] + [0.0] * (width - len(c[1::2]))
    column = [upper[0]]
    for _ in range(len(c) - 1):
        column.append(lower[0])
        if lower[0] == 0.0:
            break
        nxt = [(lower[0] * upper[j + 1] - upper[0] * lower[j + 1]) / lower[0] for j in range(width - 1)]
        upper, lower = lower, nxt + [0.0]
    return np.array(column)


def hurwitz_check(gains) -> bool:
    """True iff ``s^n + lambda_{n-1} s^{n-1} + ... + lambda_0`` is Hurwitz.

    ``gains`` is a :class:`ControllerGains` or the sequence
    ``(lambda_0, ..., lambda_{n-1})``.
    """
    lambdas = gains.lambdas if isinstance(gains, ControllerGains) else tuple(gains)
    if not lambdas:
        return False
    coeffs = [1.0] + [float(v) for v in reversed(lambdas)]
    if not np.all(np.isfinite(coeffs)):
        return False
    column = routh_first_column(coeffs)
    return column.size == len(coeffs) and bool(np.all(column > 0))


@dataclass(frozen=True)
class ControllerGains:
    """Error-dynamics coefficients ``(lambda_0, ..., lambda_{n-1})``."""

    lambdas: Tuple[float, ...]

    def __post_init__(self):
        lambdas = tuple(float(v) for v in self.lambdas)
        object.__setattr__(self, "lambdas", lambdas)
        if not hurwitz_check(lambdas):
            raise GainsError(f"gains {lambdas} do not give a Hurwitz error polynomial")

    @property
    def n(self) -> int:
        return len(self.lambdas)

    def characteristic_polynomial(self) -> np.ndarray:
        """Coefficients of the error polynomial, highest power first."""
        return np.array([1.0] + list(reversed(self.lambdas)))


DEFAULT_GAINS = (2.0, 6.0, 4.0)


def tracking_input(jet_meas: Sequence[float], ref: ReferenceJet, gains: ControllerGains) -> float:
    """New input ``v = y*^(n) + sum_i lambda_i (y*^(i) - y^(i))``."""
    n = gains.n
    jet = np.asarray(jet_meas, dtype=float)
    if jet.size != n or ref.n != n:
        raise ValueError(f"expected a measured jet of length {n} and a reference of order {n}")
    err = ref.derivs[:n] - jet
    return float(ref.derivs[n] + np.dot(gains.lambdas, err))


def _checked_pf(flat: FlatInputSystem, jet, eps_pf: float) -> float:
    pf = float(flat.p_f(jet))
    if not abs(pf) > eps_pf:
        raise PfSingularError(f"|p_f| = {abs(pf):.3e} <= {eps_pf:.1e} at jet {list(jet)}", pf)
    return pf


def feedback_linearize(
    flat: FlatInputSystem,
    jet_meas: Sequence[float],
    ref: ReferenceJet,
    gains: ControllerGains,
    eps_pf: float = EPS_PF,
) -> float:
    """Flat input ``u_f = (v - q(jet)) / p_f(jet)`` for the measured jet."""
    jet = np.asarray(jet_meas, dtype=float)
    pf = _checked_pf(flat, jet, eps_pf)
    v = tracking_input(jet, ref, gains)
    return (v - float(flat.q(jet))) / pf


def feedforward_flat_input(flat: FlatInputSystem, ref: ReferenceJet, eps_pf: float = EPS_PF) -> float:
    """Open-loop flat input ``u_f* = (y*^(n) - q(ref)) / p_f(ref)``."""
    n = flat.n
    if ref.n != n:
        raise ValueError(f"reference must carry {n + 1} entries, got {ref.derivs.size}")
    jet = ref.derivs[:n]
    pf = _checked_pf(flat, jet, eps_pf)
    return (ref.derivs[n] - float(flat.q(jet))) / pf


@dataclass(frozen=True)
class CompensatorState:
    """Memory of a discrete compensator.

    ``flags`` holds the guard events raised by the step that produced this
    state.
    """

    dt: float
    u_prev: float = 0.0
    k: int = 0
    flags: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"sampling interval must be positive, got {self.dt}")
        if not np.isfinite(self.u_prev):
            raise ValueError("u_prev must be finite")


class Compensator(Protocol):
    """Maps a flat input sample to a plant input sample, advancing its state."""

    def __call__(self, jet: Sequence[float], u_f: float, state: CompensatorState) -> Tuple[float, CompensatorState]:
        ...
