"""Applications built on the limit theory: percolation profiles, the giant
component, discounted infection costs and the Monte-Carlo comparison harness."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, stats
from scipy.special import logsumexp

from .degree import DegreeDistribution, with_mean
from .fclt import FcltSolution, correlation_from, increment_factor, jump_correlation_theory, solve_fclt, v_matrix
from .gillespie import (
    Trajectory,
    TrajectoryError,
    counts_at,
    jump_correlation_empirical,
    run_initial_state,
    run_replica,
)
from .graph import DEFAULT_MODE
from .lln import LlnSolution, infected_fraction, solve_lln
from .logging_setup import get_logger
from .parallel import map_ordered, run_replicas

logger = get_logger(__name__)

METHODS = ("monte_carlo", "gaussian")
DEFAULT_LEVEL = 0.99
MONOTONE_TOL = 1e-9
GIANT_TOL = 1e-12
KS_SIGNIFICANCE = 0.01
Z_LIMIT = 3.0
COV_RELATIVE_TOL = 0.10
# X/n - x carries an O(1/n) bias; allowance per coordinate is MEAN_BIAS_PER_N * max(1, |x|) / n
MEAN_BIAS_PER_N = 8.0
INITIAL_COVARIANCES = ("independent", "empirical", "zero")
LABELS = ("S", "SI", "SS")


class ExperimentError(ValueError):
    pass


# --- percolation profiles -------------------------------------------------


@dataclass(frozen=True, eq=False)
class PercolationProfile:
    betas: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)
    fractions: np.ndarray = field(repr=False)
    valid: np.ndarray = field(repr=False)
    distribution: Dict[str, Any] = field(default_factory=dict)
    alpha_s: float = 1.0
    T: float = 0.0

    def header(self) -> List[str]:
        return ["beta", *(f"t={t:.6g}" for t in self.times)]

    def rows(self) -> List[List[float]]:
        table = np.where(self.valid, self.fractions, np.nan)
        return [[float(beta), *row.tolist()] for beta, row in zip(self.betas, table)]

    def row_index(self, beta: float) -> int:
        if beta < self.betas[0] - 1e-12 or beta > self.betas[-1] + 1e-12:
            raise ExperimentError(f"beta={beta!r} outside profile grid [{self.betas[0]}, {self.betas[-1]}]")
        return int(np.argmin(np.abs(self.betas - beta)))

    def monotone(self, tol: float = MONOTONE_TOL) -> bool:
        """Non-decreasing along time and along beta; cells past an early stop are ignored."""
        table = np.where(self.valid, self.fractions, np.nan)
        steps = np.concatenate([np.diff(table, axis=1).ravel(), np.diff(table, axis=0).ravel()])
        steps = steps[~np.isnan(steps)]
        return bool(np.all(steps >= -tol))


def _profile_row(item: Tuple[DegreeDistribution, float, float, float, np.ndarray, Optional[float]]) -> Tuple[np.ndarray, np.ndarray]:
    dist, beta, alpha_s, T, times, h = item
    solution = solve_lln(dist, beta, alpha_s, T, h=h, strict=False)
    reachable = times <= solution.end_time + 1e-12
    row = np.full(times.size, np.nan)
    if reachable.any():
        row[reachable] = infected_fraction(solution, np.minimum(times[reachable], solution.end_time))
    return row, reachable


def percolation_profile(
    dist: DegreeDistribution,
    alpha_s: float,
    betas: Sequence[float],
    T: float,
    m_times: int,
    h: Optional[float] = None,
    threads: Optional[int] = None,
) -> PercolationProfile:
    """Infected fraction 1 - alpha_S psi(theta_beta(t)) on a beta x time grid, one limit solve per beta."""
    grid = np.asarray(betas, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ExperimentError("beta grid is empty")
    if np.any(grid < 0) or np.any(np.diff(grid) <= 0):
        raise ExperimentError("beta grid must be non-negative and strictly ascending")
    if m_times < 2:
        raise ExperimentError(f"need at least two time points, got {m_times}")
    times = np.linspace(0.0, T, m_times)
    rows = map_ordered(_profile_row, [(dist, float(b), alpha_s, T, times, h) for b in grid], threads)
    fractions = np.vstack([row for row, _ in rows])
    valid = np.vstack([mask for _, mask in rows])
    if not valid.all():
        logger.warning("profile_cells_invalid", count=int((~valid).sum()), total=int(valid.size))
    logger.info("profile_done", betas=int(grid.size), times=m_times)
    return PercolationProfile(
        betas=grid, times=times, fractions=fractions, valid=valid,
        distribution=dist.describe(), alpha_s=float(alpha_s), T=float(T),
    )


def percolates(profile: PercolationProfile, beta: float, level: float = DEFAULT_LEVEL, deadline: Optional[float] = None) -> bool:
    """True iff the fraction at the nearest grid beta reaches ``level`` by ``deadline``."""
    deadline = profile.T if deadline is None else deadline
    row = profile.row_index(beta)
    window = (profile.times <= deadline + 1e-12) & profile.valid[row]
    return bool(np.any(profile.fractions[row, window] >= level))


def critical_beta(profile: PercolationProfile, level: float = DEFAULT_LEVEL, deadline: Optional[float] = None) -> Optional[float]:
    for beta in profile.betas:
        if percolates(profile, float(beta), level, deadline):
            return float(beta)
    return None


def infected_fraction_curves(
    dists: Mapping[str, DegreeDistribution],
    alpha_s: float,
    beta: float,
    T: float,
    m_times: int,
    h: Optional[float] = None,
) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    times = np.linspace(0.0, T, m_times)
    curves = {}
    for label, dist in dists.items():
        row, _ = _profile_row((dist, beta, alpha_s, T, times, h))
        curves[label] = row
    return times, curves


# --- giant component ------------------------------------------------------


def giant_component_fraction(dist: DegreeDistribution) -> Tuple[float, float]:
    """Root theta of psi'(1) theta = psi'(theta) in [0, 1) and the fraction 1 - psi(theta)."""
    slope = dist.pgf_deriv(1.0, 1)

    def g(theta: float) -> float:
        return slope * theta - dist.pgf_deriv(theta, 1)

    if not dist.pgf_deriv(1.0, 2) > slope:
        return 1.0, 0.0
    if g(0.0) == 0.0:
        return 0.0, 1.0 - dist.pgf(0.0)
    upper = None
    for exponent in range(1, 13):
        candidate = 1.0 - 10.0**-exponent
        if g(candidate) > 0.0:
            upper = candidate
            break
    if upper is None:
        logger.warning("giant_component_bracket_failed", distribution=dist.describe())
        return 1.0, 0.0
    theta = optimize.bisect(g, 0.0, upper, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(g(theta)) >= GIANT_TOL:
        logger.warning("giant_component_residual", residual=abs(g(theta)))
    return float(theta), float(1.0 - dist.pgf(theta))


# --- discounted cost ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CostReport:
    params: Dict[str, Any]
    times: np.ndarray = field(repr=False)
    log_integrand: np.ndarray = field(repr=False)
    log_value: float = 0.0
    std_error: Optional[float] = None

    def as_dict(self) -> Dict[str, Any]:
        return {
            "params": dict(self.params),
            "log_value": self.log_value,
            "value": math.exp(self.log_value) if self.log_value < 700 else math.inf,
            "std_error_log": self.std_error,
            "times": self.times.tolist(),
            "log_integrand": self.log_integrand.tolist(),
        }


def _log_segment_integrals(times: np.ndarray, levels: np.ndarray, gamma: float, c: float, T: float) -> float:
    """log of int_0^T exp(-gamma t + c X_I(t)) dt for a piecewise-constant X_I."""
    starts = np.concatenate([[0.0], times])
    ends = np.concatenate([times, [T]])
    widths = ends - starts
    keep = widths > 0
    terms = (
        c * levels[keep]
        - gamma * starts[keep]
        + np.log(-np.expm1(-gamma * widths[keep]))
        - math.log(gamma)
    )
    return float(logsumexp(terms))


def _cost_monte_carlo(
    dist: DegreeDistribution, beta: float, alpha_s: float, gamma: float, c: float, n: int, T: float,
    seed: int, replicas: int, grid: np.ndarray, mode: str, threads: Optional[int],
) -> Tuple[float, float, np.ndarray]:
    trajectories = run_replicas(
        run_replica, replicas, seed, threads,
        distribution=dist.describe(), n=n, beta=beta, alpha_s=alpha_s, T=T, mode=mode,
    )
    logs = np.array([
        _log_segment_integrals(traj.times, traj.path[:, 3].astype(float), gamma, c, T) for traj in trajectories
    ])
    log_mean = float(logsumexp(logs) - math.log(replicas))
    weights = np.exp(logs - log_mean)
    std_error = float(np.std(weights, ddof=1) / math.sqrt(replicas)) if replicas > 1 else math.nan
    infected = np.array([[counts_at(traj, t)[3] for t in grid] for traj in trajectories], dtype=float)
    log_integrand = logsumexp(c * infected, axis=0) - math.log(replicas) - gamma * grid
    return log_mean, std_error, log_integrand


def _cost_gaussian(
    dist: DegreeDistribution, beta: float, alpha_s: float, gamma: float, c: float, n: int, T: float, h: Optional[float],
) -> Tuple[float, np.ndarray, np.ndarray]:
    lln = solve_lln(dist, beta, alpha_s, T, h=h)
    fclt = solve_fclt(lln)
    times = lln.times
    log_integrand = -gamma * times + c * n * (1.0 - lln.x_s) + 0.5 * c * c * n * fclt.sigma[:, 0, 0]
    widths = np.full(times.size, lln.h)
    widths[0] = widths[-1] = 0.5 * lln.h
    return float(logsumexp(log_integrand + np.log(widths))), times, log_integrand


def discounted_cost(
    dist: DegreeDistribution,
    beta: float,
    alpha_s: float,
    gamma: float,
    n: int,
    T: float,
    method: str = "gaussian",
    c: Optional[float] = None,
    seed: Optional[int] = None,
    replicas: int = 100,
    h: Optional[float] = None,
    mode: str = DEFAULT_MODE,
    threads: Optional[int] = None,
    grid_points: int = 101,
) -> CostReport:
    """log of int_0^T exp(-gamma t) E[exp(c X_I(t))] dt; c defaults to 1/n."""
    if method not in METHODS:
        raise ExperimentError(f"unknown cost method {method!r}; expected one of {', '.join(METHODS)}")
    c = 1.0 / n if c is None else c
    if not gamma > 0 or not c > 0:
        raise ExperimentError(f"gamma and c must be positive, got gamma={gamma!r}, c={c!r}")
    if n < 1 or not T > 0:
        raise ExperimentError(f"need n >= 1 and T > 0, got n={n}, T={T}")
    params = {
        "distribution": dist.describe(), "n": n, "beta": beta, "alpha_s": alpha_s,
        "gamma": gamma, "c": c, "T": T, "method": method,
    }
    if method == "monte_carlo":
        if seed is None:
            raise ExperimentError("Monte-Carlo cost needs an explicit seed")
        grid = np.linspace(0.0, T, grid_points)
        log_value, std_error, log_integrand = _cost_monte_carlo(
            dist, beta, alpha_s, gamma, c, n, T, seed, replicas, grid, mode, threads
        )
        params.update(seed=seed, replicas=replicas, mode=mode)
        report = CostReport(params=params, times=grid, log_integrand=log_integrand, log_value=log_value, std_error=std_error)
    else:
        log_value, times, log_integrand = _cost_gaussian(dist, beta, alpha_s, gamma, c, n, T, h)
        report = CostReport(params=params, times=times, log_integrand=log_integrand, log_value=log_value)
    logger.info("cost_done", method=method, log_value=report.log_value)
    return report


def cost_vs_mean_degree(
    kind: str,
    means: Sequence[float],
    beta: float,
    alpha_s: float,
    gamma: float,
    n: int,
    T: float,
    c: Optional[float] = None,
    r: int = 2,
    h: Optional[float] = None,
) -> List[CostReport]:
    return [
        discounted_cost(with_mean(kind, mean, r=r), beta, alpha_s, gamma, n, T, method="gaussian", c=c, h=h)
        for mean in means
    ]


# --- Monte-Carlo versus theory --------------------------------------------


def _z_score(diff: float, se: float, n: int) -> float:
    if se > 0:
        return diff / se
    return 0.0 if abs(diff) <= 1.0 / n else math.inf


@dataclass
class CheckpointComparison:
    t: float
    n: int
    mean_empirical: np.ndarray
    mean_theory: np.ndarray
    mean_se: np.ndarray
    z: np.ndarray
    cov_empirical: np.ndarray
    cov_theory: np.ndarray
    cov_se: np.ndarray
    ks: Dict[str, Any]
    jump_correlation: Dict[str, Any]

    @property
    def mean_within_se(self) -> np.ndarray:
        return np.abs(self.z) < Z_LIMIT

    @property
    def bias_allowance(self) -> np.ndarray:
        return MEAN_BIAS_PER_N * np.maximum(1.0, np.abs(self.mean_theory)) / self.n

    @property
    def mean_ok(self) -> np.ndarray:
        """Within Z_LIMIT standard errors plus the finite-size bias allowance."""
        gap = np.abs(self.mean_empirical - self.mean_theory)
        return gap <= Z_LIMIT * self.mean_se + self.bias_allowance

    @property
    def cov_ok(self) -> np.ndarray:
        allowed = np.maximum(COV_RELATIVE_TOL * np.abs(self.cov_theory), Z_LIMIT * self.cov_se)
        return np.abs(self.cov_empirical - self.cov_theory) <= allowed + 1e-15

    @property
    def passed(self) -> bool:
        return bool(
            self.mean_ok.all() and self.cov_ok.all() and self.ks["ok"] and self.jump_correlation.get("ok", True)
        )

    def as_dict(self) -> Dict[str, Any]:
        return {
            "t": self.t,
            "mean_empirical": self.mean_empirical.tolist(),
            "mean_theory": self.mean_theory.tolist(),
            "mean_se": self.mean_se.tolist(),
            "z": [z if math.isfinite(z) else None for z in self.z.tolist()],
            "mean_within_se": self.mean_within_se.tolist(),
            "bias_allowance": self.bias_allowance.tolist(),
            "mean_ok": self.mean_ok.tolist(),
            "cov_empirical": self.cov_empirical.tolist(),
            "cov_theory": self.cov_theory.tolist(),
            "cov_se": self.cov_se.tolist(),
            "cov_ok": self.cov_ok.tolist(),
            "ks": self.ks,
            "jump_correlation": self.jump_correlation,
            "passed": self.passed,
        }


@dataclass
class ComparisonReport:
    params: Dict[str, Any]
    sigma0: np.ndarray
    checkpoints: List[CheckpointComparison]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checkpoints)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "params": dict(self.params),
            "tolerances": {
                "z_limit": Z_LIMIT,
                "mean_bias_per_n": MEAN_BIAS_PER_N,
                "cov_relative": COV_RELATIVE_TOL,
                "cov_standard_errors": Z_LIMIT,
                "ks_significance": KS_SIGNIFICANCE,
                "jump_correlation_standard_errors": Z_LIMIT,
            },
            "sigma0": self.sigma0.tolist(),
            "sigma0_source": self.params.get("initial_covariance"),
            "checkpoints": [check.as_dict() for check in self.checkpoints],
            "passed": self.passed,
        }


def _fluctuations(trajectories: Sequence[Trajectory], lln: LlnSolution, n: int, t: float) -> Tuple[np.ndarray, np.ndarray]:
    counts = np.array([counts_at(traj, t)[:3] for traj in trajectories], dtype=float)
    return counts, (counts - n * lln.state_at(t)[:3]) / math.sqrt(n)


def _ks_check(y: np.ndarray) -> Dict[str, Any]:
    spread = float(np.std(y, ddof=1))
    if not spread > 0:
        return {"statistic": None, "pvalue": None, "ok": True, "skipped": "degenerate sample"}
    result = stats.kstest((y - y.mean()) / spread, "norm")
    return {"statistic": float(result.statistic), "pvalue": float(result.pvalue), "ok": bool(result.pvalue >= KS_SIGNIFICANCE)}


def _jump_check(
    trajectories: Sequence[Trajectory], lln: LlnSolution, fclt: FcltSolution, t: float, half_width: float
) -> Dict[str, Any]:
    try:
        rho_hat, se, count = jump_correlation_empirical(trajectories, t, half_width)
        rho = jump_correlation_theory(lln, fclt, t)
    except (TrajectoryError, ValueError) as exc:
        return {"ok": True, "skipped": str(exc)}
    state = lln.smooth_state_at(t)
    factor = increment_factor(v_matrix(state[:3], state[3], lln.dist, lln.beta))
    rho_factor = correlation_from(factor @ factor.T)
    return {
        "empirical": rho_hat,
        "se": se,
        "count": count,
        "theory": rho,
        "theory_from_factor": rho_factor,
        "ok": bool(abs(rho_hat - rho) <= Z_LIMIT * se),
    }


def compare_mc_theory(
    dist: DegreeDistribution,
    beta: float,
    alpha_s: float,
    n: int,
    T: float,
    replicas: int,
    checkpoints: Sequence[float],
    seed: int,
    h: Optional[float] = None,
    mode: str = "multigraph",
    threads: Optional[int] = None,
    half_width: float = 0.05,
    initial_covariance: str = "independent",
    trajectories: Optional[Sequence[Trajectory]] = None,
) -> ComparisonReport:
    """Gillespie replicas against the limit mean x(t) and covariance Sigma(t).

    The random initial infection makes Y_SI(0) and Y_SS(0) genuinely random, so
    Sigma(0) is estimated by default: ``"independent"`` samples ``replicas``
    fresh initial states from streams disjoint from the replicas',
    ``"empirical"`` reuses the replicas' own Y(0), ``"zero"`` uses Sigma(0) = 0.
    """
    if replicas < 2:
        raise ExperimentError(f"need at least two replicas, got {replicas}")
    if initial_covariance not in INITIAL_COVARIANCES:
        raise ExperimentError(
            f"initial_covariance must be one of {', '.join(INITIAL_COVARIANCES)}, got {initial_covariance!r}"
        )
    for t in checkpoints:
        if not 0.0 <= t <= T:
            raise ExperimentError(f"checkpoint t={t!r} outside [0, {T}]")

    lln = solve_lln(dist, beta, alpha_s, T, h=h)
    if trajectories is None:
        trajectories = run_replicas(
            run_replica, replicas, seed, threads,
            distribution=dist.describe(), n=n, beta=beta, alpha_s=alpha_s, T=T, mode=mode,
        )
    if initial_covariance == "independent":
        initial = run_replicas(
            run_initial_state, replicas, seed, threads,
            distribution=dist.describe(), n=n, alpha_s=alpha_s, mode=mode,
        )
        y0 = (np.asarray(initial, dtype=float) - n * lln.state_at(0.0)[:3]) / math.sqrt(n)
        sigma0 = np.cov(y0, rowvar=False)
    elif initial_covariance == "empirical":
        _, y0 = _fluctuations(trajectories, lln, n, 0.0)
        sigma0 = np.cov(y0, rowvar=False)
    else:
        sigma0 = np.zeros((3, 3))
    fclt = solve_fclt(lln, sigma0=sigma0)

    results = []
    for t in checkpoints:
        counts, y = _fluctuations(trajectories, lln, n, t)
        sigma = fclt.sigma_at(t)
        mean_theory = lln.state_at(t)[:3]
        mean_empirical = counts.mean(axis=0) / n
        mean_se = np.sqrt(np.clip(np.diag(sigma), 0.0, None) / n) / math.sqrt(replicas)
        z = np.array([_z_score(d, s, n) for d, s in zip(mean_empirical - mean_theory, mean_se)])
        centred = y - y.mean(axis=0)
        products = centred[:, :, None] * centred[:, None, :]
        cov_se = products.std(axis=0, ddof=1) / math.sqrt(replicas)
        check = CheckpointComparison(
            t=float(t),
            n=n,
            mean_empirical=mean_empirical,
            mean_theory=mean_theory,
            mean_se=mean_se,
            z=z,
            cov_empirical=np.cov(y, rowvar=False),
            cov_theory=sigma,
            cov_se=cov_se,
            ks=_ks_check(y[:, 0]),
            jump_correlation=_jump_check(trajectories, lln, fclt, float(t), half_width),
        )
        if not check.passed:
            logger.warning("comparison_checkpoint_failed", t=t, z=z.tolist())
        results.append(check)

    params = {
        "distribution": dist.describe(), "beta": beta, "alpha_s": alpha_s, "n": n, "T": T,
        "replicas": replicas, "seed": seed, "mode": mode, "h": lln.h,
        "checkpoints": [float(t) for t in checkpoints], "initial_covariance": initial_covariance,
        "half_width": half_width,
    }
    return ComparisonReport(params=params, sigma0=sigma0, checkpoints=results)


# --- plot scripts ---------------------------------------------------------


def gnuplot_isolines(profile: PercolationProfile, data_file: str, level: float = DEFAULT_LEVEL) -> str:
    """Heat map of the profile CSV (beta rows, time columns) with the percolation level as contour."""
    t_end = float(profile.times[-1])
    columns = profile.times.size
    return "\n".join(
        [
            "set datafile separator ','",
            "set xlabel 'time'",
            "set ylabel 'beta'",
            "set cblabel 'infected fraction'",
            f"set xrange [0:{t_end:.6g}]",
            "set view map",
            "set contour base",
            f"set cntrparam levels discrete {level:.6g}",
            f"dt = {t_end / max(1, columns - 1):.17g}",
            f"splot for [j=2:{columns + 1}] '{data_file}' skip 1 using ((j-2)*dt):1:j with pm3d notitle",
            "",
        ]
    )


def errorbar_rows(report: ComparisonReport) -> List[Tuple[float, str, float, float, float]]:
    rows = []
    n = report.params["n"]
    for check in report.checkpoints:
        for index, label in enumerate(LABELS):
            band = Z_LIMIT * math.sqrt(max(0.0, check.cov_theory[index, index]) / n)
            rows.append((check.t, label, float(check.mean_empirical[index]), float(check.mean_theory[index]), band))
    return rows


def gnuplot_errorbars(report: ComparisonReport, data_file: str) -> str:
    """Empirical means with theory bands per coordinate from the rows of :func:`errorbar_rows`."""
    lines = ["set datafile separator ','", "set xlabel 'time'", "set ylabel 'scaled count'", "set key left"]
    plots = []
    for label in LABELS:
        selector = f"(strcol(2) eq '{label}' ? $1 : 1/0)"
        plots.append(f"'{data_file}' skip 1 using {selector}:4:5 with yerrorbars title 'theory {label}'")
        plots.append(f"'{data_file}' skip 1 using {selector}:3 with points title 'simulated {label}'")
    lines.append("plot " + ", \\\n     ".join(plots))
    lines.append("")
    return "\n".join(lines)
