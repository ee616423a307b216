"""Discounted exponential infection cost."""
from __future__ import annotations

from typing import Any, Dict

from src.cli_utils import BaseCommand, store_for
from src.experiments import discounted_cost
from src.schemas import CostConfig


def run_cost(payload: Dict[str, Any]) -> Dict[str, Any]:
    config = CostConfig(**payload)
    dist = config.dist.build()
    report = discounted_cost(
        dist,
        config.beta,
        config.alpha_s,
        config.gamma,
        config.n,
        config.T,
        method=config.method,
        c=config.c,
        seed=config.seed,
        replicas=config.replicas,
        h=config.h,
        mode=config.mode,
        threads=config.threads,
    )
    key = f"cost_{config.method}.json"
    store_for(config).put_json(key, {"config": config.resolved(), **report.as_dict()})
    return {"command": "cost", "files": [key], "log_value": report.log_value}


class handler(BaseCommand):
    name = "cost"
    summary = "log discounted cost by Monte Carlo or the Gaussian approximation"
    extra_flags = {
        "--gamma": {"type": float},
        "--c": {"type": float},
        "--method": {"choices": ("monte_carlo", "gaussian")},
    }

    def run(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        return run_cost(payload)
