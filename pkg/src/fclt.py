"""Gaussian fluctuation theory around the deterministic limit.

Coordinates are ordered (S, SI, SS) everywhere. ``v`` is the rate of the
predictable quadratic variation of the count jumps, ``V`` its time integral,
``A`` the Jacobian of the drift in x with theta frozen, and ``Sigma`` the
covariance of the limiting fluctuation ``U`` solving dU = A U dt + dG, which
obeys dSigma/dt = A Sigma + Sigma A^T + v.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .degree import DegreeDistribution
from .gillespie import Trajectory, counts_at
from .lln import SINGULARITY_EPS, LlnSolution, SingularityError, pgf_terms, rk4_step
from .logging_setup import get_logger

logger = get_logger(__name__)

LABELS = ("S", "SI", "SS")
UPPER = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
JITTER = 1e-12
PSD_FLOOR = 1e-9
ELLIPSE_HEADER = ("t", "cx", "cy", "a", "b", "angle_rad")


class FcltError(ValueError):
    """Raised for degenerate inputs to the fluctuation machinery."""


def _guarded(x: Sequence[float], theta: float, dist: DegreeDistribution) -> Tuple[float, float, float, float, float]:
    x_s, x_si, x_ss = (float(v) for v in x)
    if not x_s > SINGULARITY_EPS:
        raise SingularityError(f"x_S = {x_s!r} at or below {SINGULARITY_EPS}")
    psi, d1, d2, d3 = pgf_terms(dist, theta)
    kappa = psi * d2 / (d1 * d1)
    d_three = psi * psi * d3 / (d1 * d1 * d1)
    return x_s, x_si, x_ss, kappa, d_three


def v_matrix(x: Sequence[float], theta: float, dist: DegreeDistribution, beta: float) -> np.ndarray:
    x_s, x_si, x_ss, d2, d3 = _guarded(x, theta, dist)
    excess = x_ss - x_si
    v_s = beta * x_si
    v_si = beta * (x_si * excess**2 / x_s**2 * d3 - x_si * (x_ss - 3.0 * x_si) / x_s * d2 + x_si)
    v_ss = 4.0 * beta * (x_si * x_ss / x_s) * ((x_ss / x_s) * d3 + d2)
    v_s_si = -beta * (x_si * excess / x_s * d2 - x_si)
    v_s_ss = 2.0 * beta * x_si * x_ss / x_s * d2
    v_si_ss = -2.0 * beta * x_si * x_ss * excess / x_s**2 * d3
    return np.array(
        [
            [v_s, v_s_si, v_s_ss],
            [v_s_si, v_si, v_si_ss],
            [v_s_ss, v_si_ss, v_ss],
        ]
    )


def jacobian(x: Sequence[float], theta: float, dist: DegreeDistribution, beta: float) -> np.ndarray:
    """Partial derivatives of (H_S, H_SI, H_SS) in (x_S, x_SI, x_SS), theta held fixed."""
    x_s, x_si, x_ss, kappa, _ = _guarded(x, theta, dist)
    bk = beta * kappa
    return np.array(
        [
            [0.0, -beta, 0.0],
            [-bk * x_si * (x_ss - x_si) / x_s**2, bk * (x_ss - 2.0 * x_si) / x_s - beta, bk * x_si / x_s],
            [2.0 * bk * x_si * x_ss / x_s**2, -2.0 * bk * x_ss / x_s, -2.0 * bk * x_si / x_s],
        ]
    )


def v_path(lln: LlnSolution) -> np.ndarray:
    return np.stack([v_matrix(row[:3], row[3], lln.dist, lln.beta) for row in lln.values])


def big_v(lln: LlnSolution, v: Optional[np.ndarray] = None) -> np.ndarray:
    """V(t) = int_0^t v ds by cumulative trapezoid on the solution grid."""
    if v is None:
        v = v_path(lln)
    if lln.times.size == 1:
        return np.zeros_like(v)
    return cumulative_trapezoid(v, lln.times, axis=0, initial=0.0)


def solve_sigma(
    lln: LlnSolution, sigma0: Optional[np.ndarray] = None, with_drift: bool = True
) -> np.ndarray:
    """RK4 for dSigma/dt = A Sigma + Sigma A^T + v along the solved path.

    Stage points between grid nodes are evaluated on the cubic Hermite
    interpolant of the path so the scheme stays fourth order.
    """
    sigma = np.zeros((3, 3)) if sigma0 is None else np.array(sigma0, dtype=float)
    if sigma.shape != (3, 3) or not np.allclose(sigma, sigma.T):
        raise FcltError("initial covariance must be a symmetric 3x3 matrix")
    if np.linalg.eigvalsh(sigma).min() < -PSD_FLOOR:
        raise FcltError("initial covariance is not positive semi-definite")

    dist, beta = lln.dist, lln.beta

    def rhs(t: float, s: np.ndarray) -> np.ndarray:
        state = lln.smooth_state_at(min(t, lln.end_time))
        v = v_matrix(state[:3], state[3], dist, beta)
        if not with_drift:
            return v
        a = jacobian(state[:3], state[3], dist, beta)
        return a @ s + s @ a.T + v

    out = np.empty((lln.times.size, 3, 3))
    out[0] = sigma
    for k in range(lln.times.size - 1):
        h = lln.times[k + 1] - lln.times[k]
        nxt = rk4_step(rhs, lln.times[k], h, out[k])
        out[k + 1] = 0.5 * (nxt + nxt.T)
    return out


@dataclass(frozen=True, eq=False)
class FcltSolution:
    lln: LlnSolution = field(repr=False)
    times: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    V: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)

    def _interp(self, stack: np.ndarray, t: float) -> np.ndarray:
        if not 0.0 <= t <= self.times[-1] + 1e-12:
            raise FcltError(f"t={t!r} outside [0, {self.times[-1]}]")
        flat = stack.reshape(stack.shape[0], -1)
        return np.array([np.interp(t, self.times, flat[:, j]) for j in range(flat.shape[1])]).reshape(3, 3)

    def sigma_at(self, t: float) -> np.ndarray:
        return self._interp(self.sigma, t)

    def v_at(self, t: float) -> np.ndarray:
        return self._interp(self.v, t)

    def header(self) -> List[str]:
        names = ["t"]
        for prefix in ("v", "V", "Sigma"):
            names.extend(f"{prefix}_{LABELS[i]}_{LABELS[j]}" for i, j in UPPER)
        return names

    def rows(self) -> np.ndarray:
        columns = [self.times]
        for stack in (self.v, self.V, self.sigma):
            columns.extend(stack[:, i, j] for i, j in UPPER)
        return np.column_stack(columns)


def solve_fclt(lln: LlnSolution, sigma0: Optional[np.ndarray] = None) -> FcltSolution:
    v = v_path(lln)
    jac = np.stack([jacobian(row[:3], row[3], lln.dist, lln.beta) for row in lln.values])
    solution = FcltSolution(lln=lln, times=lln.times, v=v, V=big_v(lln, v), A=jac, sigma=solve_sigma(lln, sigma0))
    logger.debug("fclt_solved", steps=lln.times.size - 1, sigma_end=solution.sigma[-1].tolist())
    return solution


def fluctuation_samples(trajectories: Sequence[Trajectory], lln: LlnSolution, t: float) -> np.ndarray:
    """Y(t) = n^{-1/2} (X(t) - n x(t)) per replica, coordinates (S, SI, SS)."""
    if not trajectories:
        raise FcltError("no trajectories supplied")
    n = trajectories[0].n
    for traj in trajectories:
        if traj.n != n or abs(traj.beta - lln.beta) > 1e-12 or abs(traj.alpha_s - lln.alpha_s) > 1e-12:
            raise FcltError("trajectories do not share n, beta and alpha_s with the limit solution")
    x = lln.state_at(t)[:3]
    counts = np.array([counts_at(traj, t)[:3] for traj in trajectories], dtype=float)
    return (counts - n * x) / math.sqrt(n)


def increment_factor(v: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of v with roundoff-level negative eigenvalues removed and a trace-scaled jitter."""
    sym = 0.5 * (v + v.T)
    trace = float(np.trace(sym))
    if trace <= 0.0:
        if np.any(np.abs(sym) > 0.0):
            raise FcltError("increment covariance has non-positive trace")
        return np.zeros((3, 3))
    eigenvalues, vectors = np.linalg.eigh(sym)
    if eigenvalues.min() < -PSD_FLOOR * trace:
        raise FcltError(f"increment covariance is not positive semi-definite (min eigenvalue {eigenvalues.min():.3g})")
    repaired = (vectors * np.clip(eigenvalues, 0.0, None)) @ vectors.T
    try:
        return np.linalg.cholesky(repaired + JITTER * trace * np.eye(3))
    except np.linalg.LinAlgError as exc:
        raise FcltError(f"Cholesky factorization failed after jitter: {exc}") from exc


@dataclass(frozen=True, eq=False)
class DiffusionPaths:
    n: int
    times: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)

    @property
    def count(self) -> int:
        return int(self.counts.shape[0])


def diffusion_sample_paths(
    lln: LlnSolution,
    fclt: FcltSolution,
    n: int,
    rng: np.random.Generator,
    count: int = 1,
    u0: Optional[np.ndarray] = None,
    stride: int = 1,
) -> DiffusionPaths:
    """Euler-Maruyama for dU = A U dt + dG; returns clamped n x + sqrt(n) U.

    Only every ``stride``-th grid point is recorded; the final point always is.
    """
    if fclt.times.shape != lln.times.shape or not np.array_equal(fclt.times, lln.times):
        raise FcltError("fluctuation and limit solutions are on different grids")
    if stride < 1:
        raise FcltError("stride must be positive")
    steps = lln.times.size - 1
    record = np.arange(0, steps + 1, stride)
    if record[-1] != steps:
        record = np.append(record, steps)
    slot = {int(k): i for i, k in enumerate(record)}
    root_n = math.sqrt(n)
    u = np.zeros((count, 3)) if u0 is None else np.broadcast_to(np.asarray(u0, dtype=float), (count, 3)).copy()
    counts = np.empty((count, record.size, 3))
    x = lln.values[:, :3]
    counts[:, 0] = n * x[0] + root_n * u
    for k in range(steps):
        h = lln.times[k + 1] - lln.times[k]
        factor = increment_factor(fclt.v[k])
        noise = rng.standard_normal((count, 3)) @ factor.T
        u = u + h * (u @ fclt.A[k].T) + math.sqrt(h) * noise
        if k + 1 in slot:
            counts[:, slot[k + 1]] = n * x[k + 1] + root_n * u
    counts[..., 0] = np.clip(counts[..., 0], 0.0, float(n))
    counts[..., 1:] = np.clip(counts[..., 1:], 0.0, None)
    return DiffusionPaths(n=n, times=lln.times[record], counts=counts)


def diffusion_sample_path(lln: LlnSolution, fclt: FcltSolution, n: int, rng: np.random.Generator) -> np.ndarray:
    return diffusion_sample_paths(lln, fclt, n, rng, count=1).counts[0]


@dataclass(frozen=True)
class Ellipse:
    t: float
    cx: float
    cy: float
    a: float
    b: float
    angle: float

    def row(self) -> Tuple[float, float, float, float, float, float]:
        return (self.t, self.cx, self.cy, self.a, self.b, self.angle)


def chi2_2_quantile(level: float) -> float:
    return -2.0 * math.log1p(-level)


def confidence_ellipse(
    sigma_sub: np.ndarray, center: Sequence[float], level: float = 0.95, t: float = 0.0
) -> Ellipse:
    """Semi-axes sqrt(q * eigenvalues) with q the chi-square(2) quantile; angle of the major axis."""
    if not 0.0 < level < 1.0:
        raise FcltError(f"confidence level must lie in (0, 1), got {level!r}")
    cov = np.asarray(sigma_sub, dtype=float)
    if cov.shape != (2, 2) or not np.allclose(cov, cov.T):
        raise FcltError("ellipse covariance must be a symmetric 2x2 matrix")
    eigenvalues, vectors = np.linalg.eigh(cov)
    scale = max(1.0, float(np.abs(eigenvalues).max()))
    if eigenvalues.min() < -PSD_FLOOR * scale:
        raise FcltError("ellipse covariance is not positive semi-definite")
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    q = chi2_2_quantile(level)
    major, minor = eigenvalues[1], eigenvalues[0]
    if math.isclose(major, minor, rel_tol=1e-12, abs_tol=0.0) or major == minor:
        angle = 0.0
    else:
        lead = vectors[:, 1]
        angle = math.atan2(lead[1], lead[0])
        # axis direction is defined up to sign
        if angle <= -math.pi / 2:
            angle += math.pi
        elif angle > math.pi / 2:
            angle -= math.pi
    return Ellipse(t=float(t), cx=float(center[0]), cy=float(center[1]), a=math.sqrt(q * major), b=math.sqrt(q * minor), angle=angle)


def ellipse_track(
    lln: LlnSolution, fclt: FcltSolution, n: int, times: Sequence[float], level: float = 0.95
) -> List[Ellipse]:
    """Confidence ellipses for (X_S, X_SI) around n x(t) with covariance n Sigma(t)."""
    track = []
    for t in times:
        x = lln.state_at(t)
        block = n * fclt.sigma_at(t)[:2, :2]
        track.append(confidence_ellipse(block, (n * x[0], n * x[1]), level=level, t=t))
    return track


def jump_correlation_theory(lln: LlnSolution, fclt: FcltSolution, t: float) -> float:
    """rho(t) = v_{S,SI} / sqrt(v_S v_SI)."""
    state = lln.smooth_state_at(t)
    v = v_matrix(state[:3], state[3], lln.dist, lln.beta)
    return correlation_from(v)


def correlation_from(v: np.ndarray, i: int = 0, j: int = 1) -> float:
    denominator = v[i, i] * v[j, j]
    if not denominator > 0.0:
        raise FcltError("degenerate jump variances, correlation undefined")
    return float(v[i, j] / math.sqrt(denominator))
