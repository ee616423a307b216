"""Degree distributions and probability-generating-function calculus.

A :class:`DegreeDistribution` stores a finite pmf array indexed by degree.
Infinite-support families are truncated at the smallest degree ``K`` where
both the probability tail and the third-moment tail fall below ``1e-12``
(relative for the third moment), then renormalized. Everything downstream
uses PGF derivatives up to order three, which is why the third moment must
converge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Any, Dict, Iterable, Mapping, Tuple, Union

import numpy as np
import ujson
from numpy.polynomial import polynomial as P
from scipy import stats
from tenacity import RetryError, Retrying, retry_if_result, stop_after_attempt

from .logging_setup import get_logger

logger = get_logger(__name__)

KINDS = ("poisson", "negative_binomial", "regular", "table")
TAIL_MASS = 1e-12
THIRD_MOMENT_TAIL = 1e-9
NORMALIZATION_TOL = 1e-9
MAX_ORDER = 3
MAX_PARITY_RETRIES = 1000

Real = Union[float, np.ndarray]


class DistributionError(ValueError):
    """Raised for invalid parameters or evaluation points of a degree distribution."""


@dataclass(frozen=True, eq=False)
class DegreeDistribution:
    kind: str
    params: Dict[str, Any]
    pmf: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        pmf = np.asarray(self.pmf, dtype=float)
        if pmf.ndim != 1 or pmf.size == 0:
            raise DistributionError("pmf must be a non-empty 1-d array")
        if np.any(pmf < 0):
            raise DistributionError("pmf has negative mass")
        pmf = pmf / pmf.sum()
        pmf.setflags(write=False)
        object.__setattr__(self, "pmf", pmf)

    @property
    def truncation_degree(self) -> int:
        return int(self.pmf.size - 1)

    @cached_property
    def _derivative_coefficients(self) -> Tuple[np.ndarray, ...]:
        return tuple(P.polyder(self.pmf, order) if order else self.pmf for order in range(MAX_ORDER + 1))

    def _check_point(self, x: Real) -> np.ndarray:
        arr = np.asarray(x, dtype=float)
        if np.any(arr < 0.0) or np.any(arr > 1.0) or np.any(np.isnan(arr)):
            raise DistributionError(f"PGF argument must lie in [0, 1], got {x!r}")
        return arr

    def pgf(self, x: Real) -> Real:
        """psi(x) = sum_k x^k p_k."""
        return self.pgf_deriv(x, 0)

    def pgf_deriv(self, x: Real, order: int) -> Real:
        """Order-``order`` derivative sum_k (k)_r x^(k-r) p_k, 0 <= r <= 3."""
        if not 0 <= order <= MAX_ORDER:
            raise DistributionError(f"derivative order {order} unsupported (max {MAX_ORDER})")
        arr = self._check_point(x)
        value = P.polyval(arr, self._derivative_coefficients[order])
        return float(value) if np.ndim(value) == 0 else value

    def d_operator(self, x: Real, order: int) -> Real:
        """D_r psi(x) = psi^(r-1) * d^r psi / (d psi)^r for r in {2, 3}."""
        if order not in (2, 3):
            raise DistributionError(f"D operator order must be 2 or 3, got {order}")
        first = np.asarray(self.pgf_deriv(x, 1), dtype=float)
        if np.any(first <= 0.0):
            raise DistributionError(f"first PGF derivative vanishes at x={x!r}")
        value = np.asarray(self.pgf(x)) ** (order - 1) * np.asarray(self.pgf_deriv(x, order)) / first**order
        return float(value) if np.ndim(value) == 0 else value

    def kappa(self, theta: Real) -> Real:
        """Excess-degree factor psi * psi'' / psi'^2."""
        return self.d_operator(theta, 2)

    def moment(self, order: int) -> float:
        if not 1 <= order <= MAX_ORDER:
            raise DistributionError(f"moment order {order} unsupported")
        k = np.arange(self.pmf.size, dtype=float)
        return float(np.dot(k**order, self.pmf))

    @property
    def mean(self) -> float:
        return self.moment(1)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.pmf > 0)

    def describe(self) -> Dict[str, Any]:
        descriptor: Dict[str, Any] = {"kind": self.kind}
        descriptor.update(self.params)
        return descriptor

    def same_as(self, other: "DegreeDistribution", tol: float = 0.0) -> bool:
        if self.pmf.size != other.pmf.size:
            return False
        return bool(np.all(np.abs(self.pmf - other.pmf) <= tol))


def _truncate(kind: str, params: Dict[str, Any], full_pmf: np.ndarray) -> DegreeDistribution:
    full_pmf = np.asarray(full_pmf, dtype=float)
    k = np.arange(full_pmf.size, dtype=float)
    weighted = k**3 * full_pmf
    total_third = weighted.sum()
    # tails[K] = mass strictly above K
    mass_tail = np.concatenate([np.cumsum(full_pmf[::-1])[::-1][1:], [0.0]])
    third_tail = np.concatenate([np.cumsum(weighted[::-1])[::-1][1:], [0.0]])
    ok = (mass_tail < TAIL_MASS) & (third_tail <= TAIL_MASS * total_third)
    # the last entries have no mass above them on this grid; look for the
    # cut before the final tenth so a diverging tail cannot pass unnoticed
    horizon = max(1, int(0.9 * full_pmf.size))
    candidates = np.flatnonzero(ok[:horizon])
    if candidates.size == 0:
        relative = third_tail[horizon - 1] / total_third if total_third > 0 else 0.0
        if relative > THIRD_MOMENT_TAIL or mass_tail[horizon - 1] >= TAIL_MASS:
            raise DistributionError(
                f"third moment of {kind} distribution does not converge within truncation "
                f"(relative tail {relative:.3g})"
            )
        cut = full_pmf.size - 1
    else:
        cut = int(candidates[0])
    logger.debug("degree_truncated", kind=kind, truncation_degree=cut)
    return DegreeDistribution(kind=kind, params=params, pmf=full_pmf[: cut + 1])


def _grid_limit(mean: float, std: float) -> int:
    return int(math.ceil(mean + 40.0 * std + 60.0))


def make_poisson(lam: float) -> DegreeDistribution:
    if not lam > 0 or not math.isfinite(lam):
        raise DistributionError(f"Poisson rate must be positive, got {lam!r}")
    grid = np.arange(_grid_limit(lam, math.sqrt(lam)) + 1)
    return _truncate("poisson", {"lam": float(lam)}, stats.poisson.pmf(grid, lam))


def make_negative_binomial(r: int, p: float) -> DegreeDistribution:
    """Number-of-failures form: p_k = C(k+r-1, k) (1-p)^k p^r."""
    if int(r) != r or r < 1:
        raise DistributionError(f"negative binomial r must be a positive integer, got {r!r}")
    if not 0.0 < p < 1.0:
        raise DistributionError(f"negative binomial p must lie in (0, 1), got {p!r}")
    r = int(r)
    mean = r * (1.0 - p) / p
    std = math.sqrt(r * (1.0 - p)) / p
    grid = np.arange(_grid_limit(mean, std) + 1)
    return _truncate("negative_binomial", {"r": r, "p": float(p)}, stats.nbinom.pmf(grid, r, p))


def make_regular(r: int) -> DegreeDistribution:
    if int(r) != r or r < 0:
        raise DistributionError(f"regular degree must be a non-negative integer, got {r!r}")
    pmf = np.zeros(int(r) + 1)
    pmf[int(r)] = 1.0
    return DegreeDistribution(kind="regular", params={"r": int(r)}, pmf=pmf)


def make_table(entries: Union[Mapping[int, float], Iterable[Tuple[int, float]]]) -> DegreeDistribution:
    items = list(entries.items()) if isinstance(entries, Mapping) else list(entries)
    if not items:
        raise DistributionError("degree table is empty")
    table: Dict[int, float] = {}
    for key, value in items:
        degree = int(key)
        if degree != float(key) or degree < 0:
            raise DistributionError(f"degree {key!r} is not a non-negative integer")
        if value < 0:
            raise DistributionError(f"negative mass {value!r} at degree {degree}")
        table[degree] = table.get(degree, 0.0) + float(value)
    total = sum(table.values())
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise DistributionError(f"degree table sums to {total!r}, expected 1")
    pmf = np.zeros(max(table) + 1)
    for degree, value in table.items():
        pmf[degree] = value
    params = {"table": {str(k): table[k] for k in sorted(table)}}
    return DegreeDistribution(kind="table", params=params, pmf=pmf)


def from_descriptor(descriptor: Mapping[str, Any]) -> DegreeDistribution:
    kind = descriptor.get("kind")
    if kind == "poisson":
        return make_poisson(float(descriptor["lam"]))
    if kind == "negative_binomial":
        return make_negative_binomial(int(descriptor["r"]), float(descriptor["p"]))
    if kind == "regular":
        return make_regular(int(descriptor["r"]))
    if kind == "table":
        return make_table({int(k): float(v) for k, v in descriptor["table"].items()})
    raise DistributionError(f"unknown distribution kind {kind!r}; expected one of {', '.join(KINDS)}")


def with_mean(kind: str, mean: float, r: int = 2) -> DegreeDistribution:
    """Member of a family with the requested mean degree."""
    if mean <= 0:
        raise DistributionError(f"mean degree must be positive, got {mean!r}")
    if kind == "poisson":
        return make_poisson(mean)
    if kind == "regular":
        if int(round(mean)) != mean:
            raise DistributionError(f"regular graphs need an integer mean, got {mean!r}")
        return make_regular(int(round(mean)))
    if kind == "negative_binomial":
        return make_negative_binomial(r, r / (r + mean))
    raise DistributionError(f"no mean-parametrized family for kind {kind!r}")


def sample_degree_sequence(dist: DegreeDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n i.i.d. degrees; an odd total is repaired by redrawing the last entry."""
    if n < 1:
        raise DistributionError(f"need at least one node, got n={n}")
    support = dist.support
    probs = dist.pmf[support] / dist.pmf[support].sum()
    degrees = rng.choice(support, size=n, p=probs).astype(np.int64)
    if degrees.sum() % 2 == 0:
        return degrees
    if len({int(k) % 2 for k in support}) < 2:
        raise DistributionError(f"odd total unavoidable: every degree in the support has the same parity (n={n})")

    partial = int(degrees[:-1].sum())
    retrying = Retrying(
        stop=stop_after_attempt(MAX_PARITY_RETRIES),
        retry=retry_if_result(lambda last: (partial + last) % 2 == 1),
    )
    try:
        degrees[-1] = retrying(lambda: int(rng.choice(support, p=probs)))
    except RetryError as exc:
        raise DistributionError(f"could not repair odd degree sum after {MAX_PARITY_RETRIES} draws") from exc
    return degrees


@lru_cache(maxsize=32)
def _from_descriptor_key(key: str) -> DegreeDistribution:
    return from_descriptor(ujson.loads(key))


def cached_from_descriptor(descriptor: Mapping[str, Any]) -> DegreeDistribution:
    """Memoized :func:`from_descriptor`; replicas in one worker share the pmf."""
    return _from_descriptor_key(ujson.dumps(dict(descriptor), sort_keys=True))
