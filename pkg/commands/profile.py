"""Percolation profile over a grid of infection rates."""
from __future__ import annotations

from typing import Any, Dict

from src.cli_utils import BaseCommand, store_for
from src.experiments import critical_beta, giant_component_fraction, gnuplot_isolines, percolation_profile
from src.logging_setup import get_logger
from src.schemas import ProfileConfig

logger = get_logger(__name__)


def run_profile(payload: Dict[str, Any]) -> Dict[str, Any]:
    config = ProfileConfig(**payload)
    dist = config.dist.build()
    profile = percolation_profile(
        dist, config.alpha_s, config.betas, config.T, config.time_points, h=config.h, threads=config.threads
    )
    theta, fraction = giant_component_fraction(dist)
    critical = critical_beta(profile, config.level, config.deadline)
    store = store_for(config)
    store.put_csv("profile.csv", profile.header(), profile.rows())
    store.put_text("profile.gp", gnuplot_isolines(profile, "profile.csv", level=config.level))
    store.put_json(
        "profile.json",
        {
            "config": config.resolved(),
            "giant_component": {"theta": theta, "fraction": fraction},
            "critical_beta": critical,
            "invalid_cells": int((~profile.valid).sum()),
            "monotone": profile.monotone(),
        },
    )
    logger.info("profile_written", critical_beta=critical, giant_fraction=fraction)
    return {"command": "profile", "files": ["profile.csv", "profile.gp", "profile.json"], "critical_beta": critical}


class handler(BaseCommand):
    name = "profile"
    summary = "infected-fraction profile over beta and time"
    extra_flags = {
        "--betas": {"help": "comma list or start:stop:count"},
        "--time-points": {"dest": "time_points", "type": int},
        "--level": {"type": float},
        "--deadline": {"type": float},
    }

    def run(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        return run_profile(payload)
