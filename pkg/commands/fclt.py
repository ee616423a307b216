"""Fluctuation covariances and confidence ellipses along the limit path."""
from __future__ import annotations

from typing import Any, Dict, List, Optional

import numpy as np

from src.cli_utils import BaseCommand, store_for
from src.fclt import ELLIPSE_HEADER, FcltError, ellipse_track, jump_correlation_theory, solve_fclt
from src.lln import solve_lln
from src.schemas import FcltConfig

DEFAULT_ELLIPSES = 11


def run_fclt(payload: Dict[str, Any]) -> Dict[str, Any]:
    config = FcltConfig(**payload)
    dist = config.dist.build()
    lln = solve_lln(dist, config.beta, config.alpha_s, config.T, h=config.h)
    solution = solve_fclt(lln)
    times = config.ellipse_times or np.linspace(0.0, config.T, DEFAULT_ELLIPSES).tolist()
    track = ellipse_track(lln, solution, config.n, times, level=config.level)

    correlations: List[Optional[float]] = []
    for t in times:
        try:
            correlations.append(jump_correlation_theory(lln, solution, t))
        except FcltError:
            correlations.append(None)

    store = store_for(config)
    store.put_csv("fclt.csv", solution.header(), solution.rows())
    store.put_csv("ellipses.csv", ELLIPSE_HEADER, [ellipse.row() for ellipse in track])
    store.put_json(
        "fclt.json",
        {
            "config": config.resolved(),
            "sigma_T": solution.sigma[-1],
            "V_T": solution.V[-1],
            "jump_correlation": {"t": times, "rho": correlations},
        },
    )
    return {"command": "fclt", "files": ["fclt.csv", "ellipses.csv", "fclt.json"]}


class handler(BaseCommand):
    name = "fclt"
    summary = "solve for v, V and Sigma and write confidence ellipses"
    extra_flags = {
        "--ellipse-times": {"dest": "ellipse_times", "help": "comma list or start:stop:count"},
        "--level": {"type": float},
    }

    def run(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        return run_fclt(payload)
