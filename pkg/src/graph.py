"""Configuration-model graphs built by uniform half-edge matching."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Sequence, Tuple

import numpy as np
from tenacity import RetryError, Retrying, retry_if_exception_type, stop_after_attempt

from .logging_setup import get_logger
from .normalization import array_fingerprint

logger = get_logger(__name__)

MODES = ("multigraph", "erased", "rejection_simple")
DEFAULT_MODE = "erased"


class GraphError(ValueError):
    """Raised when a configuration-model graph cannot be built."""


class NonSimpleGraphError(GraphError):
    """A pairing produced a self-loop or a parallel edge."""


@dataclass(frozen=True, eq=False)
class GraphStats:
    edge_count: int
    max_degree: int
    self_loops: int
    multi_edge_pairs: int
    degree_pmf: Dict[int, float]

    def as_dict(self) -> Dict[str, object]:
        return {
            "edge_count": self.edge_count,
            "max_degree": self.max_degree,
            "self_loops": self.self_loops,
            "multi_edge_pairs": self.multi_edge_pairs,
            "degree_pmf": {str(k): v for k, v in self.degree_pmf.items()},
        }


@dataclass(frozen=True, eq=False)
class Graph:
    """Edge list over nodes 0..n-1; a self-loop appears twice in its node's neighbour list."""

    n: int
    edges: np.ndarray = field(repr=False)
    mode: str = DEFAULT_MODE
    self_loops: int = 0
    multi_edge_pairs: int = 0

    @cached_property
    def degrees(self) -> np.ndarray:
        counts = np.bincount(self.edges.ravel(), minlength=self.n) if self.edges.size else np.zeros(self.n, dtype=np.int64)
        return counts.astype(np.int64)

    @cached_property
    def adjacency(self) -> List[List[int]]:
        neighbours: List[List[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges.tolist():
            neighbours[u].append(v)
            neighbours[v].append(u)
        return neighbours

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    @cached_property
    def fingerprint(self) -> str:
        canonical = np.sort(self.edges, axis=1) if self.edges.size else self.edges.reshape(0, 2)
        if canonical.size:
            canonical = canonical[np.lexsort((canonical[:, 1], canonical[:, 0]))]
        return array_fingerprint(np.concatenate([[self.n], canonical.ravel()]))


def _pair_half_edges(degrees: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    stubs = np.repeat(np.arange(degrees.size, dtype=np.int64), degrees)
    rng.shuffle(stubs)
    return stubs.reshape(-1, 2)


def _loops_and_repeats(pairs: np.ndarray) -> Tuple[np.ndarray, int, np.ndarray]:
    """Return (loop mask, extra parallel copies, unique non-loop edges)."""
    loops = pairs[:, 0] == pairs[:, 1]
    proper = np.sort(pairs[~loops], axis=1)
    if proper.size == 0:
        return loops, 0, proper.reshape(0, 2)
    unique = np.unique(proper, axis=0)
    return loops, int(proper.shape[0] - unique.shape[0]), unique


def _check_degrees(degrees: Sequence[int]) -> np.ndarray:
    arr = np.asarray(degrees, dtype=np.int64)
    if arr.ndim != 1:
        raise GraphError("degree sequence must be one-dimensional")
    if np.any(arr < 0):
        raise GraphError("degrees must be non-negative")
    if int(arr.sum()) % 2:
        raise GraphError(f"degree sum {int(arr.sum())} is odd")
    return arr


def build_configuration_model(
    degrees: Sequence[int], rng: np.random.Generator, mode: str = DEFAULT_MODE
) -> Graph:
    arr = _check_degrees(degrees)
    n = int(arr.size)
    if mode not in MODES:
        raise GraphError(f"unknown construction mode {mode!r}; expected one of {', '.join(MODES)}")

    if mode == "multigraph":
        pairs = _pair_half_edges(arr, rng)
        loops, repeats, _ = _loops_and_repeats(pairs)
        graph = Graph(n=n, edges=pairs, mode=mode, self_loops=int(loops.sum()), multi_edge_pairs=repeats)
    elif mode == "erased":
        pairs = _pair_half_edges(arr, rng)
        loops, repeats, unique = _loops_and_repeats(pairs)
        graph = Graph(n=n, edges=unique, mode=mode, self_loops=int(loops.sum()), multi_edge_pairs=repeats)
    else:
        graph = _build_simple_by_rejection(arr, rng)

    logger.debug(
        "graph_built",
        n=n,
        mode=mode,
        edges=graph.edge_count,
        self_loops=graph.self_loops,
        multi_edge_pairs=graph.multi_edge_pairs,
    )
    return graph


def _build_simple_by_rejection(degrees: np.ndarray, rng: np.random.Generator) -> Graph:
    n = int(degrees.size)
    max_attempts = max(1, 10 * n)

    def attempt() -> Graph:
        pairs = _pair_half_edges(degrees, rng)
        loops, repeats, _ = _loops_and_repeats(pairs)
        if loops.any() or repeats:
            raise NonSimpleGraphError("pairing is not simple")
        return Graph(n=n, edges=pairs, mode="rejection_simple")

    retrying = Retrying(
        stop=stop_after_attempt(max_attempts),
        retry=retry_if_exception_type(NonSimpleGraphError),
    )
    try:
        return retrying(attempt)
    except RetryError as exc:
        raise GraphError(f"no simple pairing found within {max_attempts} attempts") from exc


def graph_stats(graph: Graph) -> GraphStats:
    degrees = graph.degrees
    counts = Counter(int(d) for d in degrees)
    total = max(1, graph.n)
    return GraphStats(
        edge_count=graph.edge_count,
        max_degree=int(degrees.max()) if degrees.size else 0,
        self_loops=graph.self_loops,
        multi_edge_pairs=graph.multi_edge_pairs,
        degree_pmf={k: counts[k] / total for k in sorted(counts)},
    )


def export_edges(graph: Graph) -> List[Tuple[int, int]]:
    return [(int(u), int(v)) for u, v in graph.edges.tolist()]
