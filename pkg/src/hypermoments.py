"""Exact conditional moments of a susceptible node's neighbourhood.

Given the global pools of SI half-edges (``X_SI``) and susceptible half-edges
(``X_Sdot``), the ``k`` stubs of a susceptible node split into ``n_SI`` stubs
drawn from the SI pool and ``n_SS`` from the rest, hypergeometrically. The
functions here evaluate the falling-factorial moments in closed form with
exact integer arithmetic and enumerate the pmf as an independent oracle.

Kinds name the raw expectations that enter the v-operators
(``a = n_SI``, ``b = n_SS``)::

    S_quadvar   E[a]
    SI_quadvar  E[a (b - a)^2]
    SS_quadvar  E[a b^2]
    S_SI_cov    E[a (b - a)]        == SI_drift
    S_SS_cov    E[a b]              == SS_drift
    SI_SS_cov   E[a b (b - a)]

``V_ENTRY_FACTORS`` holds the signed constant and the matrix slot that turn a
kind into its contribution to ``v``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, Tuple, Union

import numpy as np

from .logging_setup import get_logger

logger = get_logger(__name__)

Number = Union[Fraction, float]

Z_GUARD = 1e-9
MAX_TOTAL_ORDER = 3

# Stirling numbers of the second kind: m^i = sum_j S(i, j) (m)_j
_STIRLING2 = {
    0: ((0, 1),),
    1: ((1, 1),),
    2: ((1, 1), (2, 1)),
    3: ((1, 1), (2, 3), (3, 1)),
}

# kind -> polynomial in (a, b) as {(i, j): coefficient} of raw monomials a^i b^j
KIND_POLYNOMIALS: Dict[str, Dict[Tuple[int, int], int]] = {
    "S_quadvar": {(1, 0): 1},
    "SI_quadvar": {(1, 2): 1, (2, 1): -2, (3, 0): 1},
    "SS_quadvar": {(1, 2): 1},
    "S_SI_cov": {(1, 1): 1, (2, 0): -1},
    "S_SS_cov": {(1, 1): 1},
    "SI_SS_cov": {(1, 2): 1, (2, 1): -1},
    "SI_drift": {(1, 1): 1, (2, 0): -1},
    "SS_drift": {(1, 1): 1},
}
KINDS = tuple(KIND_POLYNOMIALS)

V_ENTRY_FACTORS: Dict[str, Tuple[int, Tuple[int, int]]] = {
    "S_quadvar": (1, (0, 0)),
    "SI_quadvar": (1, (1, 1)),
    "SS_quadvar": (4, (2, 2)),
    "S_SI_cov": (-1, (0, 1)),
    "S_SS_cov": (2, (0, 2)),
    "SI_SS_cov": (-2, (1, 2)),
}


class HypergeometricError(ValueError):
    pass


@dataclass(frozen=True)
class NeighborhoodLaw:
    k: int
    x_si: int
    x_sdot: int

    def __post_init__(self) -> None:
        for name in ("k", "x_si", "x_sdot"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise HypergeometricError(f"{name} must be a non-negative integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.x_si > self.x_sdot:
            raise HypergeometricError(f"X_SI={self.x_si} exceeds X_Sdot={self.x_sdot}")

    @property
    def ss_mass(self) -> int:
        return self.x_sdot - self.x_si

    def require_feasible(self) -> None:
        if self.k > self.x_sdot:
            raise HypergeometricError(f"degree k={self.k} exceeds the susceptible half-edge total {self.x_sdot}")


def _finish(value: Fraction, exact: bool) -> Number:
    return value if exact else float(value)


def neighborhood_pmf(law: NeighborhoodLaw, exact: bool = False) -> Dict[Tuple[int, int], Number]:
    """P(n_SI = a, n_SS = k - a) = C(X_SI, a) C(X_Sdot - X_SI, k - a) / C(X_Sdot, k)."""
    law.require_feasible()
    total = math.comb(law.x_sdot, law.k)
    pmf: Dict[Tuple[int, int], Number] = {}
    for a in range(max(0, law.k - law.ss_mass), min(law.k, law.x_si) + 1):
        b = law.k - a
        weight = math.comb(law.x_si, a) * math.comb(law.ss_mass, b)
        pmf[(a, b)] = _finish(Fraction(weight, total), exact)
    return pmf


def _check_orders(a: int, b: int) -> None:
    if a < 0 or b < 0 or a + b > MAX_TOTAL_ORDER:
        raise HypergeometricError(f"moment order ({a}, {b}) outside a, b >= 0, a + b <= {MAX_TOTAL_ORDER}")


def _falling_exact(law: NeighborhoodLaw, a: int, b: int) -> Fraction:
    _check_orders(a, b)
    law.require_feasible()
    numerator = math.perm(law.k, a + b) * math.perm(law.x_si, a) * math.perm(law.ss_mass, b)
    if numerator == 0:
        return Fraction(0)
    return Fraction(numerator, math.perm(law.x_sdot, a + b))


def falling_factorial_moment(law: NeighborhoodLaw, a: int, b: int, exact: bool = False) -> Number:
    """E[(n_SI)_a (n_SS)_b] = (k)_{a+b} (X_SI)_a (X_SS)_b / (X_Sdot)_{a+b}."""
    return _finish(_falling_exact(law, a, b), exact)


def _raw_moment(falling: Callable[[int, int], Number], i: int, j: int) -> Number:
    total: Number = 0
    for m, s_im in _STIRLING2[i]:
        for l, s_jl in _STIRLING2[j]:
            if m == 0 and l == 0:
                total += s_im * s_jl
            else:
                total += s_im * s_jl * falling(m, l)
    return total


def _assemble(kind: str, falling: Callable[[int, int], Number]) -> Number:
    try:
        polynomial = KIND_POLYNOMIALS[kind]
    except KeyError:
        raise HypergeometricError(f"unknown moment kind {kind!r}; expected one of {', '.join(KINDS)}") from None
    return sum((coefficient * _raw_moment(falling, i, j) for (i, j), coefficient in polynomial.items()), Fraction(0))


def drift_moment_exact(law: NeighborhoodLaw, kind: str, exact: bool = False) -> Number:
    """Conditional expectation for ``kind`` assembled from the closed-form falling moments."""
    value = _assemble(kind, lambda a, b: _falling_exact(law, a, b))
    return _finish(Fraction(value), exact)


def drift_moment_enumerated(law: NeighborhoodLaw, kind: str, exact: bool = False) -> Number:
    """Same expectation by direct summation over :func:`neighborhood_pmf`."""
    try:
        polynomial = KIND_POLYNOMIALS[kind]
    except KeyError:
        raise HypergeometricError(f"unknown moment kind {kind!r}; expected one of {', '.join(KINDS)}") from None
    total = Fraction(0)
    for (a, b), prob in neighborhood_pmf(law, exact=True).items():
        integrand = sum(coefficient * a**i * b**j for (i, j), coefficient in polynomial.items())
        total += integrand * prob
    return _finish(total, exact)


def multinomial_compensator(k: int, n: int, x_si: float, x_ss: float, z: float, kind: str) -> float:
    """Large-pool approximation of the kind's expectation.

    Stubs are drawn with replacement: (n_SI, n_SS) ~ Multinomial(k; p_SI, p_SS)
    with p_SI = X_SI / (n z), p_SS = X_SS / (n z) and z the scaled susceptible
    half-edge mass.
    """
    if not z >= Z_GUARD:
        raise HypergeometricError(f"z={z!r} below guard {Z_GUARD}")
    if n < 1 or k < 0:
        raise HypergeometricError(f"need n >= 1 and k >= 0, got n={n}, k={k}")
    scale = n * z
    p_si, p_ss = x_si / scale, x_ss / scale

    def falling(a: int, b: int) -> float:
        _check_orders(a, b)
        return math.perm(k, a + b) * p_si**a * p_ss**b

    return float(_assemble(kind, falling))


def microscopic_v(state, beta: float, n: int | None = None) -> np.ndarray:
    """(1/n) sum over susceptible i of beta times the exact conditional jump moments.

    ``state`` is a frozen :class:`~src.gillespie.EpidemicState`; nodes are
    grouped by degree since the conditional law depends on ``k`` only.
    """
    n = int(n if n is not None else state.graph.n)
    degrees = np.asarray(state.degrees, dtype=np.int64)
    susceptible = ~np.asarray(state.infected, dtype=bool)
    by_degree = np.bincount(degrees[susceptible]) if susceptible.any() else np.zeros(0, dtype=np.int64)
    v = np.zeros((3, 3))
    for k in np.flatnonzero(by_degree):
        law = NeighborhoodLaw(int(k), state.x_si, state.x_sdot)
        for kind, (factor, (i, j)) in V_ENTRY_FACTORS.items():
            v[i, j] += by_degree[k] * factor * float(drift_moment_exact(law, kind))
    v *= beta / n
    upper = np.triu(v)
    return upper + np.triu(v, 1).T
