"""Deterministic limit trajectory."""
from __future__ import annotations

from typing import Any, Dict

from src.cli_utils import BaseCommand, store_for
from src.lln import LLN_HEADER, consistency_residual, edge_mass_residual, solve_lln
from src.schemas import LlnConfig


def run_lln(payload: Dict[str, Any]) -> Dict[str, Any]:
    config = LlnConfig(**payload)
    dist = config.dist.build()
    solution = solve_lln(dist, config.beta, config.alpha_s, config.T, h=config.h)
    store = store_for(config)
    store.put_csv("lln.csv", LLN_HEADER, solution.rows())
    store.put_json(
        "lln.json",
        {
            "config": config.resolved(),
            "distribution": dist.describe(),
            "truncation_degree": dist.truncation_degree,
            "h": solution.h,
            "steps": solution.times.size - 1,
            "refinement_error": solution.refinement_error,
            "consistency_residual": consistency_residual(solution),
            "edge_mass_residual": edge_mass_residual(solution),
            "final_state": solution.values[-1],
        },
    )
    return {"command": "lln", "files": ["lln.csv", "lln.json"], "refinement_error": solution.refinement_error}


class handler(BaseCommand):
    name = "lln"
    summary = "solve the limit ODE and write x(t), theta(t)"

    def run(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        return run_lln(payload)
