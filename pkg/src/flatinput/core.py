"""Smooth SISO systems, observability analysis and flat-input construction.

A system ``xdot = f(x, u), y = h(x)`` with state dimension ``n`` is observable
at ``x`` when the Jacobian ``Q`` of the stacked Lie derivatives
``(h, L_f h, ..., L_f^{n-1} h)`` (taken along the drift ``f(x, 0)``) is regular.
At such points the vector field

    gamma(x) = alpha(x) * Q(x)^{-1} e_n

replaces the original input and turns ``y`` into a flat output of

    xdot = f(x, 0) + gamma(x) u_f .
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .errors import (
    DomainError,
    InvalidFactorError,
    NumericsError,
    SingularityError,
    VerificationFailure,
)

EPS_REG = 1e-9
_MACHINE_EPS = np.finfo(float).eps


def _everywhere(x) -> bool:
    return True


@dataclass(frozen=True)
class SmoothSisoSystem:
    """A smooth single-input single-output plant.

    ``jet`` optionally returns the analytic Lie derivatives
    ``(h, L_f h, ..., L_f^{n-1} h)`` at ``u = 0``; ``jet_jacobian`` optionally
    returns their analytic Jacobian (the observability matrix). Whatever is
    missing is obtained by central finite differences.
    """

    n: int
    f: Callable[[np.ndarray, float], np.ndarray]
    h: Callable[[np.ndarray], float]
    jet: Optional[Callable[[np.ndarray], np.ndarray]] = None
    jet_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    domain_obs: Callable[[np.ndarray], bool] = _everywhere
    domain_ctrl: Callable[[np.ndarray], bool] = _everywhere
    m: int = 0
    eps_reg: float = EPS_REG

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"state dimension must be positive, got {self.n}")
        if not 0 <= self.m < self.n:
            raise ValueError(f"internal dynamics order must satisfy 0 <= m < n, got m={self.m}")
        if self.eps_reg < 0:
            raise ValueError("eps_reg must be nonnegative")

    def drift(self, x) -> np.ndarray:
        return np.asarray(self.f(np.asarray(x, dtype=float), 0.0), dtype=float)


@dataclass(frozen=True)
class ObservabilityData:
    Q: np.ndarray
    det_q: float
    regular: bool


@dataclass(frozen=True)
class FlatInputSystem:
    """The companion system ``xdot = f(x, 0) + gamma(x) u_f`` of a plant.

    ``q`` and ``p_f`` take the output jet ``(y, ..., y^(n-1))`` and define the
    input-output form ``y^(n) = q(jet) + p_f(jet) u_f``. When ``gamma`` is
    omitted it is built pointwise by :func:`construct_flat_input`.
    """

    base: SmoothSisoSystem
    alpha: Callable[[np.ndarray], float]
    q: Callable[[Sequence[float]], float]
    p_f: Callable[[Sequence[float]], float]
    gamma: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None)

    def __post_init__(self):
        if self.gamma is None:
            base, alpha = self.base, self.alpha
            object.__setattr__(self, "gamma", lambda x: construct_flat_input(base, x, alpha))

    @property
    def n(self) -> int:
        return self.base.n

    def dynamics(self, x, u_f: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.base.drift(x) + np.asarray(self.gamma(x), dtype=float) * u_f


def _check_domain(sys: SmoothSisoSystem, x: np.ndarray) -> None:
    if not sys.domain_obs(x):
        raise DomainError(f"state {x.tolist()} is outside the observability domain")


def _fd_scale(depth: int) -> float:
    # depth 1 gives cbrt(eps); each extra nesting level widens the step so
    # that round-off (eps/h^depth) and truncation (h^2) stay balanced.
    return _MACHINE_EPS ** (1.0 / (depth + 2))


def _gradient(g: Callable[[np.ndarray], float], x: np.ndarray, scale: float) -> np.ndarray:
    grad = np.empty(x.size)
    for i in range(x.size):
        step = scale * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        grad[i] = (g(xp) - g(xm)) / (xp[i] - xm[i])
    return grad


def _jacobian(g: Callable[[np.ndarray], np.ndarray], x: np.ndarray, scale: float) -> np.ndarray:
    cols = []
    for i in range(x.size):
        step = scale * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        cols.append((np.asarray(g(xp), dtype=float) - np.asarray(g(xm), dtype=float)) / (xp[i] - xm[i]))
    return np.column_stack(cols)


def _lie_fd(sys: SmoothSisoSystem, x: np.ndarray, k: int, scale: float) -> float:
    if k == 0:
        return float(sys.h(x))
    grad = _gradient(lambda z: _lie_fd(sys, z, k - 1, scale), x, scale)
    return float(grad @ sys.drift(x))


def numeric_lie_derivatives(sys: SmoothSisoSystem, x) -> np.ndarray:
    """Lie derivatives by nested central differences, ignoring any analytic jet."""
    x = np.asarray(x, dtype=float)
    return np.array([_lie_fd(sys, x, k, _fd_scale(k)) for k in range(sys.n)])


def lie_derivatives(sys: SmoothSisoSystem, x) -> np.ndarray:
    """Return ``(h, L_f h, ..., L_f^{n-1} h)`` at ``x`` with ``u = 0``."""
    x = np.asarray(x, dtype=float)
    _check_domain(sys, x)
    if sys.jet is not None:
        values = np.asarray(sys.jet(x), dtype=float)
    else:
        values = numeric_lie_derivatives(sys, x)
    if values.shape != (sys.n,):
        raise ValueError(f"jet must have length {sys.n}, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise NumericsError(f"non-finite Lie derivative at {x.tolist()}")
    return values


def _observability_q(sys: SmoothSisoSystem, x: np.ndarray) -> np.ndarray:
    if sys.jet_jacobian is not None:
        return np.asarray(sys.jet_jacobian(x), dtype=float)
    if sys.jet is not None:
        return _jacobian(lambda z: np.asarray(sys.jet(z), dtype=float), x, _fd_scale(1))
    rows = []
    for k in range(sys.n):
        scale = _fd_scale(k + 1)
        rows.append(_gradient(lambda z, k=k, s=scale: _lie_fd(sys, z, k, s), x, scale))
    return np.vstack(rows)


def _factor(Q: np.ndarray):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(Q, check_finite=False)
    swaps = np.count_nonzero(piv != np.arange(piv.size))
    det = float(np.prod(np.diag(lu))) * (-1.0 if swaps % 2 else 1.0)
    return (lu, piv), det


def observability_matrix(sys: SmoothSisoSystem, x, eps_reg: Optional[float] = None) -> ObservabilityData:
    """Observability matrix, its determinant (via LU) and the regularity flag.

    No domain check is made here: regularity is what delimits the
    observability domain.
    """
    x = np.asarray(x, dtype=float)
    Q = _observability_q(sys, x)
    if Q.shape != (sys.n, sys.n):
        raise ValueError(f"observability matrix must be {sys.n}x{sys.n}, got {Q.shape}")
    if not np.all(np.isfinite(Q)):
        raise NumericsError(f"non-finite observability matrix at {x.tolist()}")
    _, det = _factor(Q)
    threshold = sys.eps_reg if eps_reg is None else eps_reg
    return ObservabilityData(Q=Q, det_q=det, regular=abs(det) > threshold)


def det_alpha(sys: SmoothSisoSystem) -> Callable[[np.ndarray], float]:
    """The customary choice ``alpha(x) = det Q(x)``."""
    return lambda x: observability_matrix(sys, x).det_q


def construct_flat_input(sys: SmoothSisoSystem, x, alpha=None) -> np.ndarray:
    """Evaluate ``gamma(x) = alpha(x) Q(x)^{-1} e_n`` by an LU solve.

    ``alpha`` is a callable of the state or a constant; it defaults to
    ``det Q(x)``.
    """
    x = np.asarray(x, dtype=float)
    obs = observability_matrix(sys, x)
    if not obs.regular:
        raise SingularityError(
            f"observability matrix is singular at {x.tolist()} (det Q = {obs.det_q:.3e})", obs.det_q
        )
    if alpha is None:
        a = obs.det_q
    elif callable(alpha):
        a = float(alpha(x))
    else:
        a = float(alpha)
    if a == 0.0 or not np.isfinite(a):
        raise InvalidFactorError(f"alpha(x) = {a} at {x.tolist()}; the factor must be finite and nonzero")
    lu_piv, _ = _factor(obs.Q)
    e_n = np.zeros(sys.n)
    e_n[-1] = 1.0
    return a * lu_solve(lu_piv, e_n, check_finite=False)


@dataclass(frozen=True)
class VerificationReport:
    """Worst-case residuals of the flat-input defining property.

    ``worst[k]`` is the largest residual of order ``k`` over the grid and
    ``worst_points[k]`` the state where it occurred.
    """

    tol: float
    n_points: int
    worst: np.ndarray
    worst_points: tuple

    @property
    def max_residual(self) -> float:
        return float(np.max(self.worst)) if self.worst.size else 0.0


def flat_input_residuals(sys: SmoothSisoSystem, gamma, alpha, x) -> np.ndarray:
    """Residuals ``<row_k(Q), gamma>`` for ``k < n-1`` and ``<row_{n-1}(Q), gamma> - alpha``."""
    x = np.asarray(x, dtype=float)
    Q = observability_matrix(sys, x).Q
    g = np.asarray(gamma(x) if callable(gamma) else gamma, dtype=float)
    a = float(alpha(x) if callable(alpha) else alpha)
    res = Q @ g
    res[-1] -= a
    return np.abs(res)


def verify_flat_input(sys: SmoothSisoSystem, gamma, alpha, grid, tol: float = 1e-10) -> VerificationReport:
    """Check that ``gamma`` annihilates the first ``n-1`` observability rows
    and meets the last one with value ``alpha`` at every grid point.

    Raises :class:`VerificationFailure` naming the lowest failing order and
    its worst point.
    """
    grid = [np.asarray(p, dtype=float) for p in grid]
    for p in grid:
        _check_domain(sys, p)
    worst = np.zeros(sys.n)
    worst_points = [None] * sys.n
    for p in grid:
        res = flat_input_residuals(sys, gamma, alpha, p)
        if not np.all(np.isfinite(res)):
            raise NumericsError(f"non-finite flat-input residual at {p.tolist()}")
        for k in range(sys.n):
            if worst_points[k] is None or res[k] > worst[k]:
                worst[k] = res[k]
                worst_points[k] = p
    report = VerificationReport(tol=tol, n_points=len(grid), worst=worst, worst_points=tuple(worst_points))
    failing = [k for k in range(sys.n) if worst[k] > tol]
    if failing:
        k = failing[0]
        raise VerificationFailure(
            f"flat-input property violated at order k={k}: residual {worst[k]:.3e} > {tol:.1e} "
            f"at x={worst_points[k].tolist()} (failing orders: {failing})",
            point=worst_points[k],
            order=k,
            residual=float(worst[k]),
        )
    return report
