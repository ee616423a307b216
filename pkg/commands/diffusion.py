"""Diffusion sample paths next to Gillespie paths for the same setting."""
from __future__ import annotations

from typing import Any, Dict, List, Tuple

from src.cli_utils import BaseCommand, store_for
from src.fclt import diffusion_sample_paths, solve_fclt
from src.gillespie import counts_on_grid, run_replica
from src.lln import solve_lln
from src.parallel import replica_rng, run_replicas
from src.schemas import DiffusionConfig

PATH_HEADER = ("source", "path", "t", "XS", "XSI", "XSS")


def run_diffusion(payload: Dict[str, Any]) -> Dict[str, Any]:
    config = DiffusionConfig(**payload)
    dist = config.dist.build()
    lln = solve_lln(dist, config.beta, config.alpha_s, config.T, h=config.h)
    fclt = solve_fclt(lln)
    last = lln.times.size - 1
    stride = max(1, last // max(1, config.output_points - 1))
    # stream indices 0..R-1 drive the replicas, index R the diffusion
    paths = diffusion_sample_paths(
        lln, fclt, config.n, replica_rng(config.seed, config.replicas), count=config.replicas, stride=stride
    )
    trajectories = run_replicas(
        run_replica,
        config.replicas,
        config.seed,
        config.threads,
        distribution=dist.describe(),
        n=config.n,
        beta=config.beta,
        alpha_s=config.alpha_s,
        T=config.T,
        mode=config.mode,
    )

    times = paths.times
    rows: List[Tuple[Any, ...]] = []
    for path in range(paths.count):
        for t, counts in zip(times, paths.counts[path]):
            rows.append(("diffusion", path, t, *counts))
    for trajectory in trajectories:
        for t, counts in zip(times, counts_on_grid(trajectory, times)):
            rows.append(("gillespie", trajectory.stream, t, *counts[:3]))

    store = store_for(config)
    store.put_csv("diffusion.csv", PATH_HEADER, rows)
    store.put_json("diffusion.json", {"config": config.resolved(), "points": int(times.size)})
    return {"command": "diffusion", "files": ["diffusion.csv", "diffusion.json"]}


class handler(BaseCommand):
    name = "diffusion"
    summary = "Euler-Maruyama diffusion paths alongside simulated paths"
    extra_flags = {"--output-points": {"dest": "output_points", "type": int}}

    def run(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        return run_diffusion(payload)
