"""Exact continuous-time simulation of the SI process on a static graph.

Each susceptible node ``i`` carries the number ``X_{SI,i}`` of infected
neighbours. Infections happen at aggregate rate ``beta * X_SI`` and the
infected node is chosen with probability ``X_{SI,i} / X_SI``; selection uses a
Fenwick tree over the per-node weights, so one event costs O(d_i log n).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .degree import cached_from_descriptor, sample_degree_sequence
from .graph import DEFAULT_MODE, Graph, build_configuration_model, graph_stats
from .logging_setup import get_logger, run_context
from .parallel import initial_state_rng, replica_rng

logger = get_logger(__name__)

TRAJECTORY_HEADER = ("t", "node", "dXS", "dXSI", "dXSS")


class TrajectoryError(ValueError):
    """Raised for invalid simulation inputs or out-of-range path queries."""


class StateInconsistencyError(RuntimeError):
    """Incremental counters disagree with a recount from the adjacency."""


class Event(NamedTuple):
    t: float
    node: int
    d_s: int
    d_si: int
    d_ss: int


class _WeightTree:
    """Fenwick tree over non-negative integer weights with prefix search."""

    def __init__(self, weights: Sequence[int]) -> None:
        size = len(weights)
        tree = [0] * (size + 1)
        for i, weight in enumerate(weights, 1):
            tree[i] += weight
            parent = i + (i & -i)
            if parent <= size:
                tree[parent] += tree[i]
        self._size = size
        self._tree = tree
        self._top = 1 << (size.bit_length() - 1) if size else 0
        self.total = int(sum(weights))

    def add(self, index: int, delta: int) -> None:
        self.total += delta
        i = index + 1
        tree = self._tree
        while i <= self._size:
            tree[i] += delta
            i += i & -i

    def find(self, target: float) -> int:
        """Index whose cumulative weight interval contains ``target``."""
        pos = 0
        step = self._top
        tree = self._tree
        while step:
            nxt = pos + step
            if nxt <= self._size and tree[nxt] <= target:
                pos = nxt
                target -= tree[nxt]
            step >>= 1
        return pos


class EpidemicState:
    """Mutable SI state; the totals are kept consistent incrementally."""

    def __init__(self, graph: Graph, beta: float, infected: np.ndarray) -> None:
        self.graph = graph
        self.beta = float(beta)
        self.degrees: List[int] = graph.degrees.tolist()
        self.infected: List[bool] = infected.astype(bool).tolist()
        counts = np.zeros(graph.n, dtype=np.int64)
        if graph.edge_count:
            u, v = graph.edges[:, 0], graph.edges[:, 1]
            proper = u != v
            np.add.at(counts, v[proper], infected[u[proper]].astype(np.int64))
            np.add.at(counts, u[proper], infected[v[proper]].astype(np.int64))
        counts[infected] = 0
        self.nbr_inf: List[int] = counts.tolist()
        self._tree = _WeightTree(self.nbr_inf)
        self.t = 0.0

        susceptible = ~infected
        self.x_s = int(susceptible.sum())
        self.x_i = graph.n - self.x_s
        self.x_si = int(counts.sum())
        self.x_sdot = int(graph.degrees[susceptible].sum())
        self.x_ss = self.x_sdot - self.x_si

    @property
    def exhausted(self) -> bool:
        return self.x_si == 0 or self.beta == 0.0

    def counts(self) -> Tuple[int, int, int, int]:
        return self.x_s, self.x_si, self.x_ss, self.x_i

    def nbr_ss(self, node: int) -> int:
        return self.degrees[node] - self.nbr_inf[node]

    def recount(self) -> Dict[str, int]:
        """Recompute every total from the adjacency in O(sum of degrees)."""
        adjacency = self.graph.adjacency
        x_si = 0
        x_sdot = 0
        per_node: Dict[int, int] = {}
        for node, neighbours in enumerate(adjacency):
            if self.infected[node]:
                continue
            count = sum(1 for j in neighbours if j != node and self.infected[j])
            per_node[node] = count
            x_si += count
            x_sdot += self.degrees[node]
        x_s = self.graph.n - sum(self.infected)
        mismatched = [node for node, count in per_node.items() if count != self.nbr_inf[node]]
        if mismatched:
            raise StateInconsistencyError(f"infected-neighbour counters wrong at nodes {mismatched[:10]}")
        return {"x_s": x_s, "x_si": x_si, "x_ss": x_sdot - x_si, "x_sdot": x_sdot, "x_i": self.graph.n - x_s}

    def check_invariants(self) -> None:
        recount = self.recount()
        current = {"x_s": self.x_s, "x_si": self.x_si, "x_ss": self.x_ss, "x_sdot": self.x_sdot, "x_i": self.x_i}
        if recount != current:
            raise StateInconsistencyError(f"incremental totals {current} differ from recount {recount}")
        if self.x_ss % 2:
            raise StateInconsistencyError(f"X_SS={self.x_ss} is odd")
        if self.x_s + self.x_i != self.graph.n:
            raise StateInconsistencyError("X_S + X_I != n")


def init_epidemic(graph: Graph, alpha_s: float, rng: np.random.Generator, beta: float = 1.0) -> EpidemicState:
    """Infect round((1 - alpha_s) n) nodes chosen uniformly without replacement."""
    if not 0.0 < alpha_s <= 1.0:
        raise TrajectoryError(f"alpha_s must lie in (0, 1], got {alpha_s!r}")
    if beta < 0:
        raise TrajectoryError(f"beta must be non-negative, got {beta!r}")
    n_infected = int(math.floor((1.0 - alpha_s) * graph.n + 0.5))
    infected = np.zeros(graph.n, dtype=bool)
    if n_infected:
        infected[rng.choice(graph.n, size=n_infected, replace=False)] = True
    return EpidemicState(graph, beta, infected)


def step(state: EpidemicState, rng: np.random.Generator, horizon: float = math.inf) -> Optional[Event]:
    """Fire the next infection; ``None`` when exhausted or the next event lies past ``horizon``."""
    if state.exhausted:
        return None
    wait = rng.exponential(1.0 / (state.beta * state.x_si))
    if state.t + wait > horizon:
        state.t = horizon
        return None
    state.t += wait
    node = state._tree.find(rng.random() * state.x_si)

    nbr_inf = state.nbr_inf
    infected = state.infected
    tree = state._tree
    si_before = nbr_inf[node]
    tree.add(node, -si_before)
    infected[node] = True
    new_si = 0
    loop_half_edges = 0
    for j in state.graph.adjacency[node]:
        if j == node:
            loop_half_edges += 1
        elif not infected[j]:
            nbr_inf[j] += 1
            tree.add(j, 1)
            new_si += 1
    nbr_inf[node] = 0

    d_si = new_si - si_before
    d_ss = -2 * new_si - loop_half_edges
    state.x_s -= 1
    state.x_i += 1
    state.x_si += d_si
    state.x_ss += d_ss
    state.x_sdot -= state.degrees[node]
    return Event(state.t, node, -1, d_si, d_ss)


@dataclass(frozen=True, eq=False)
class Trajectory:
    n: int
    beta: float
    alpha_s: float
    T: float
    initial: Tuple[int, int, int, int]
    times: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    jumps: np.ndarray = field(repr=False)
    seed: Optional[int] = None
    stream: Optional[int] = None
    graph_fingerprint: str = ""
    distribution: Optional[Dict[str, Any]] = None
    graph_summary: Optional[Dict[str, Any]] = None

    @property
    def event_count(self) -> int:
        return int(self.times.size)

    @cached_property
    def path(self) -> np.ndarray:
        """Counts (X_S, X_SI, X_SS, X_I) before the first and after every event."""
        deltas = np.zeros((self.event_count, 4), dtype=np.int64)
        if self.event_count:
            deltas[:, :3] = self.jumps
            deltas[:, 3] = -self.jumps[:, 0]
        start = np.asarray(self.initial, dtype=np.int64)[None, :]
        return np.concatenate([start, start + np.cumsum(deltas, axis=0)])

    def metadata(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "stream": self.stream,
            "n": self.n,
            "beta": self.beta,
            "alpha_s": self.alpha_s,
            "T": self.T,
            "distribution": self.distribution,
            "graph_fingerprint": self.graph_fingerprint,
            "graph": self.graph_summary,
            "initial": {"XS": self.initial[0], "XSI": self.initial[1], "XSS": self.initial[2], "XI": self.initial[3]},
            "events": self.event_count,
        }

    def rows(self) -> List[Tuple[float, int, int, int, int]]:
        return [
            (float(t), int(node), int(j[0]), int(j[1]), int(j[2]))
            for t, node, j in zip(self.times.tolist(), self.nodes.tolist(), self.jumps.tolist())
        ]


def simulate(
    graph: Graph,
    beta: float,
    alpha_s: float,
    T: float,
    rng: np.random.Generator,
    seed: Optional[int] = None,
    stream: Optional[int] = None,
    distribution: Optional[Dict[str, Any]] = None,
    validate: bool = False,
) -> Trajectory:
    if not T > 0:
        raise TrajectoryError(f"time horizon must be positive, got {T!r}")
    state = init_epidemic(graph, alpha_s, rng, beta=beta)
    if validate:
        state.check_invariants()
    initial = state.counts()
    times: List[float] = []
    nodes: List[int] = []
    jumps: List[Tuple[int, int, int]] = []
    while True:
        event = step(state, rng, horizon=T)
        if event is None:
            break
        times.append(event.t)
        nodes.append(event.node)
        jumps.append((event.d_s, event.d_si, event.d_ss))
        if validate:
            state.check_invariants()

    logger.debug("simulation_done", n=graph.n, events=len(times), final_t=state.t, seed=seed, stream=stream)
    return Trajectory(
        n=graph.n,
        beta=float(beta),
        alpha_s=float(alpha_s),
        T=float(T),
        initial=initial,
        times=np.asarray(times, dtype=float),
        nodes=np.asarray(nodes, dtype=np.int64),
        jumps=np.asarray(jumps, dtype=np.int64).reshape(-1, 3),
        seed=seed,
        stream=stream,
        graph_fingerprint=graph.fingerprint,
        distribution=distribution,
        graph_summary=graph_stats(graph).as_dict(),
    )


def counts_at(trajectory: Trajectory, t: float) -> Tuple[int, int, int, int]:
    """Right-continuous value (X_S, X_SI, X_SS, X_I) of the path at time t."""
    if not 0.0 <= t <= trajectory.T:
        raise TrajectoryError(f"t={t!r} outside [0, {trajectory.T}]")
    index = int(np.searchsorted(trajectory.times, t, side="right"))
    return tuple(int(v) for v in trajectory.path[index])  # type: ignore[return-value]


def counts_on_grid(trajectory: Trajectory, times: Sequence[float]) -> np.ndarray:
    grid = np.asarray(times, dtype=float)
    if grid.size and (grid.min() < 0.0 or grid.max() > trajectory.T):
        raise TrajectoryError(f"time grid leaves [0, {trajectory.T}]")
    return trajectory.path[np.searchsorted(trajectory.times, grid, side="right")]


def jump_series(trajectory: Trajectory, window: Tuple[float, float]) -> List[Tuple[float, int, int, int]]:
    start, end = window
    mask = (trajectory.times >= start) & (trajectory.times <= end)
    return [
        (float(t), int(j[0]), int(j[1]), int(j[2]))
        for t, j in zip(trajectory.times[mask].tolist(), trajectory.jumps[mask].tolist())
    ]


def jump_correlation_empirical(
    trajectories: Sequence[Trajectory], t: float, half_width: float
) -> Tuple[float, float, int]:
    """Uncentred correlation of (dX_S, dX_SI) jumps near ``t`` with a delta-method standard error."""
    pooled = [
        np.asarray([(j[1], j[2]) for j in jump_series(traj, (t - half_width, t + half_width))], dtype=float).reshape(-1, 2)
        for traj in trajectories
    ]
    jumps = np.concatenate(pooled) if pooled else np.zeros((0, 2))
    count = int(jumps.shape[0])
    if count < 2:
        raise TrajectoryError(f"only {count} jumps in window around t={t}")
    s, q = jumps[:, 0], jumps[:, 1]
    samples = np.column_stack([s * q, s * s, q * q])
    m_sq, m_ss, m_qq = samples.mean(axis=0)
    if m_ss <= 0 or m_qq <= 0:
        raise TrajectoryError("degenerate jump second moments")
    rho = m_sq / math.sqrt(m_ss * m_qq)
    gradient = np.array([1.0 / math.sqrt(m_ss * m_qq), -rho / (2.0 * m_ss), -rho / (2.0 * m_qq)])
    cov = np.cov(samples, rowvar=False) / count
    se = float(math.sqrt(max(0.0, gradient @ cov @ gradient)))
    return float(rho), se, count


def replica_graph(rng: np.random.Generator, distribution: Dict[str, Any], n: int, mode: str = DEFAULT_MODE) -> Graph:
    degrees = sample_degree_sequence(cached_from_descriptor(distribution), n, rng)
    return build_configuration_model(degrees, rng, mode=mode)


def run_replica(
    index: int,
    seed: int,
    distribution: Dict[str, Any],
    n: int,
    beta: float,
    alpha_s: float,
    T: float,
    mode: str = DEFAULT_MODE,
    validate: bool = False,
) -> Trajectory:
    """One replica on a fresh graph; picklable entry point for the worker pool."""
    rng = replica_rng(seed, index)
    with run_context(seed=seed, stream=index):
        graph = replica_graph(rng, distribution, n, mode)
        return simulate(
            graph, beta, alpha_s, T, rng, seed=seed, stream=index, distribution=dict(distribution), validate=validate
        )


def run_initial_state(
    index: int, seed: int, distribution: Dict[str, Any], n: int, alpha_s: float, mode: str = DEFAULT_MODE
) -> Tuple[int, int, int]:
    """(X_S, X_SI, X_SS) at time 0 on a fresh graph, without running the dynamics."""
    rng = initial_state_rng(seed, index)
    state = init_epidemic(replica_graph(rng, distribution, n, mode), alpha_s, rng)
    return state.x_s, state.x_si, state.x_ss
