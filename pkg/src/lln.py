"""Deterministic large-graph limit of the SI counts.

State vector ``(x_S, x_SI, x_SS, theta)``; ``theta`` is the probability that a
degree-one initially susceptible node has not been reached yet, and closes the
system through the excess-degree factor ``kappa(theta)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .degree import DegreeDistribution
from .logging_setup import get_logger

logger = get_logger(__name__)

SINGULARITY_EPS = 1e-12
DEFAULT_STEPS = 2000
REFINEMENT_TOL = 1e-6
LLN_HEADER = ("t", "xS", "xSI", "xSS", "theta", "infected_fraction")


class SingularityError(ArithmeticError):
    """The state left the region where the drift is defined."""


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t0: float, h: float, y0: np.ndarray) -> np.ndarray:
    """Classic 4th order method."""
    k0 = f(t0, y0)
    k1 = f(t0 + 0.5 * h, y0 + 0.5 * h * k0)
    k2 = f(t0 + 0.5 * h, y0 + 0.5 * h * k1)
    k3 = f(t0 + h, y0 + h * k2)
    return y0 + h * (k0 / 6.0 + k1 / 3.0 + k2 / 3.0 + k3 / 6.0)


def initial_alpha(dist: DegreeDistribution, alpha_s: float) -> Tuple[float, float, float]:
    if not 0.0 < alpha_s <= 1.0:
        raise ValueError(f"alpha_s must lie in (0, 1], got {alpha_s!r}")
    mean = dist.pgf_deriv(1.0, 1)
    return alpha_s, alpha_s * (1.0 - alpha_s) * mean, alpha_s * alpha_s * mean


def _checked_theta(theta: float) -> float:
    if not theta > 0.0 or theta > 1.0 + 1e-9 or math.isnan(theta):
        raise SingularityError(f"theta={theta!r} left (0, 1]")
    return min(theta, 1.0)


def pgf_terms(dist: DegreeDistribution, theta: float) -> Tuple[float, float, float, float]:
    """psi and its first three derivatives at theta, with the singularity guard on psi'."""
    theta = _checked_theta(theta)
    psi = dist.pgf(theta)
    d1 = dist.pgf_deriv(theta, 1)
    if d1 <= SINGULARITY_EPS:
        raise SingularityError(f"psi'(theta) = {d1!r} at theta={theta!r}")
    return psi, d1, dist.pgf_deriv(theta, 2), dist.pgf_deriv(theta, 3)


def h_drift(
    x: Sequence[float], theta: float, dist: DegreeDistribution, beta: float, alpha_s: float
) -> np.ndarray:
    """(H_S, H_SI, H_SS, H_theta) at state x = (x_S, x_SI, x_SS)."""
    x_s, x_si, x_ss = (float(v) for v in x)
    if not x_s > SINGULARITY_EPS:
        raise SingularityError(f"x_S = {x_s!r} at or below {SINGULARITY_EPS}")
    psi, d1, d2, _ = pgf_terms(dist, theta)
    kappa = psi * d2 / (d1 * d1)
    return np.array(
        [
            -beta * x_si,
            beta * kappa * (x_si / x_s) * (x_ss - x_si) - beta * x_si,
            -2.0 * beta * kappa * x_si * x_ss / x_s,
            -beta * x_si / (alpha_s * d1),
        ]
    )


@dataclass(frozen=True, eq=False)
class LlnSolution:
    dist: DegreeDistribution = field(repr=False)
    beta: float
    alpha_s: float
    h: float
    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    drift: np.ndarray = field(repr=False)
    T: float = 0.0
    stopped_early: bool = False
    stop_time: Optional[float] = None
    refinement_error: Optional[float] = None

    @property
    def x_s(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def x_si(self) -> np.ndarray:
        return self.values[:, 1]

    @property
    def x_ss(self) -> np.ndarray:
        return self.values[:, 2]

    @property
    def theta(self) -> np.ndarray:
        return self.values[:, 3]

    @property
    def end_time(self) -> float:
        return float(self.times[-1])

    def _check_time(self, t: float | np.ndarray) -> np.ndarray:
        arr = np.asarray(t, dtype=float)
        if np.any(arr < 0.0) or np.any(arr > self.end_time + 1e-12):
            raise ValueError(f"t outside solved range [0, {self.end_time}]")
        return arr

    def state_at(self, t: float) -> np.ndarray:
        """Linear interpolation of (x_S, x_SI, x_SS, theta) at t."""
        arr = self._check_time(t)
        return np.array([np.interp(arr, self.times, self.values[:, j]) for j in range(4)])

    @cached_property
    def _spline(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.times, self.values, self.drift, axis=0)

    def smooth_state_at(self, t: float) -> np.ndarray:
        """Cubic Hermite interpolation with the drift as derivative (O(h^4))."""
        return np.asarray(self._spline(float(self._check_time(t))))

    def rows(self) -> np.ndarray:
        fraction = 1.0 - self.alpha_s * self.dist.pgf(np.clip(self.theta, 0.0, 1.0))
        return np.column_stack([self.times, self.values, fraction])


def solve_lln(
    dist: DegreeDistribution,
    beta: float,
    alpha_s: float,
    T: float,
    h: Optional[float] = None,
    strict: bool = True,
    self_check: bool = True,
) -> LlnSolution:
    """Fixed-step RK4 on the limit ODE; the grid step is T / ceil(T / h)."""
    if not T > 0:
        raise ValueError(f"time horizon must be positive, got {T!r}")
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta!r}")
    if h is None:
        h = T / DEFAULT_STEPS
    if not h > 0:
        raise ValueError(f"step must be positive, got {h!r}")
    steps = max(1, int(math.ceil(T / h - 1e-9)))
    h = T / steps
    times = np.linspace(0.0, T, steps + 1)

    def rhs(_: float, y: np.ndarray) -> np.ndarray:
        return h_drift(y[:3], y[3], dist, beta, alpha_s)

    values = np.empty((steps + 1, 4))
    drift = np.empty((steps + 1, 4))
    values[0] = (*initial_alpha(dist, alpha_s), 1.0)
    drift[0] = rhs(0.0, values[0])
    last = steps
    stop_time: Optional[float] = None
    for k in range(steps):
        try:
            values[k + 1] = rk4_step(rhs, times[k], h, values[k])
            drift[k + 1] = rhs(times[k + 1], values[k + 1])
        except SingularityError as exc:
            if strict:
                raise SingularityError(f"singular state before T at t={times[k]:.6g}: {exc}") from exc
            last = k
            stop_time = float(times[k])
            logger.warning("lln_stopped_early", t=stop_time, beta=beta, error=str(exc))
            break

    solution = LlnSolution(
        dist=dist,
        beta=float(beta),
        alpha_s=float(alpha_s),
        h=h,
        times=times[: last + 1],
        values=values[: last + 1],
        drift=drift[: last + 1],
        T=float(T),
        stopped_early=stop_time is not None,
        stop_time=stop_time,
    )
    if not self_check:
        return solution

    fine = solve_lln(dist, beta, alpha_s, T, h=h / 2.0, strict=False, self_check=False)
    common = min(solution.values.shape[0], (fine.values.shape[0] + 1) // 2)
    error = float(np.max(np.abs(solution.values[:common] - fine.values[: 2 * common : 2]))) if common else 0.0
    if error > REFINEMENT_TOL:
        logger.warning("lln_refinement_check_failed", h=h, error=error, tolerance=REFINEMENT_TOL)
    logger.debug("lln_solved", beta=beta, alpha_s=alpha_s, T=T, steps=steps, refinement_error=error)
    return replace(solution, refinement_error=error)


def infected_fraction(solution: LlnSolution, t: float | np.ndarray) -> float | np.ndarray:
    """1 - alpha_S psi(theta(t)), theta linearly interpolated."""
    arr = solution._check_time(t)
    theta = np.clip(np.interp(arr, solution.times, solution.theta), 0.0, 1.0)
    value = 1.0 - solution.alpha_s * solution.dist.pgf(theta)
    return float(value) if np.ndim(value) == 0 else value


def consistency_residual(solution: LlnSolution) -> float:
    """sup |x_S - alpha_S psi(theta)|."""
    return float(np.max(np.abs(solution.x_s - solution.alpha_s * solution.dist.pgf(np.clip(solution.theta, 0.0, 1.0)))))


def edge_mass_residual(solution: LlnSolution) -> float:
    """sup |x_SI + x_SS - alpha_S theta psi'(theta)|."""
    expected = solution.alpha_s * solution.theta * solution.dist.pgf_deriv(np.clip(solution.theta, 0.0, 1.0), 1)
    return float(np.max(np.abs(solution.x_si + solution.x_ss - expected)))
