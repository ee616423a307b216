"""Monte-Carlo replicas against the limit theory; exit status 2 when a tolerance fails."""
from __future__ import annotations

from typing import Any, Dict

from src.cli_utils import BaseCommand, store_for
from src.experiments import compare_mc_theory, errorbar_rows, gnuplot_errorbars
from src.schemas import CompareConfig

ERRORBAR_HEADER = ("t", "coordinate", "empirical", "theory", "band")


def run_compare(payload: Dict[str, Any]) -> Dict[str, Any]:
    config = CompareConfig(**payload)
    dist = config.dist.build()
    report = compare_mc_theory(
        dist,
        config.beta,
        config.alpha_s,
        config.n,
        config.T,
        config.replicas,
        config.checkpoints,
        config.seed,
        h=config.h,
        mode=config.mode,
        threads=config.threads,
        half_width=config.half_width,
        initial_covariance=config.initial_covariance,
    )
    store = store_for(config)
    store.put_json("compare.json", {"config": config.resolved(), **report.as_dict()})
    store.put_csv("errorbars.csv", ERRORBAR_HEADER, errorbar_rows(report))
    store.put_text("errorbars.gp", gnuplot_errorbars(report, "errorbars.csv"))
    return {"command": "compare", "files": ["compare.json", "errorbars.csv", "errorbars.gp"], "passed": report.passed}


class handler(BaseCommand):
    name = "compare"
    summary = "compare Gillespie replicas with x(t) and Sigma(t)"
    extra_flags = {
        "--checkpoints": {"help": "comma list or start:stop:count"},
        "--half-width": {"dest": "half_width", "type": float},
        "--initial-covariance": {"dest": "initial_covariance", "choices": ("independent", "empirical", "zero")},
    }

    def run(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        return run_compare(payload)
