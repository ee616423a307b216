from __future__ import annotations

import numpy as np
import pytest

from src.degree import make_poisson, make_regular
from src.experiments import compare_mc_theory, discounted_cost
from src.gillespie import counts_on_grid, run_initial_state, run_replica
from src.lln import solve_lln

pytestmark = pytest.mark.slow

GRID = np.linspace(0.0, 2.0, 401)


def _sup_errors(n, seeds, lln):
    limit = np.array([lln.state_at(t)[:3] for t in GRID])
    descriptor = lln.dist.describe()
    errors = []
    for seed in seeds:
        trajectory = run_replica(0, seed=seed, distribution=descriptor, n=n, beta=0.5, alpha_s=0.9, T=2.0)
        counts = counts_on_grid(trajectory, GRID)[:, :3] / n
        errors.append(np.abs(counts - limit).max())
    return float(np.median(errors))


def test_limit_error_shrinks_with_graph_size():
    lln = solve_lln(make_poisson(5.0), 0.5, 0.9, 2.0)
    small = _sup_errors(500, range(50), lln)
    large = _sup_errors(4000, range(50), lln)
    assert large <= 0.6 * small


def test_initial_edge_counts_concentrate():
    n = 5000
    descriptor = make_poisson(5.0).describe()
    fractions = np.array([run_initial_state(0, seed, descriptor, n, 0.9)[1] / n for seed in range(200)])
    spread = float(np.std(fractions, ddof=1))
    assert abs(fractions.mean() - 0.9 * 0.1 * 5.0) < 3 * spread / np.sqrt(fractions.size)
    assert 0.0 < spread * np.sqrt(n) < 5.0


@pytest.mark.parametrize("dist", [make_poisson(5.0), make_regular(3)], ids=["poisson5", "regular3"])
def test_fluctuations_match_covariance_theory(dist):
    report = compare_mc_theory(dist, 0.5, 0.9, 2000, 2.0, 2000, [0.5, 1.0, 1.5], seed=11)
    assert report.params["initial_covariance"] == "independent"
    for check in report.checkpoints:
        assert check.mean_ok.all(), check.as_dict()
        assert check.cov_ok.all(), check.as_dict()
        assert check.jump_correlation["ok"], check.jump_correlation
        assert "skipped" not in check.jump_correlation
    at_one = report.checkpoints[1]
    assert at_one.t == 1.0
    assert at_one.ks["ok"], at_one.ks
    assert report.passed


def _covariance_discrepancy(n, seed):
    check = compare_mc_theory(make_poisson(5.0), 0.5, 0.9, n, 1.0, 400, [1.0], seed=seed).checkpoints[0]
    return float(np.abs(check.cov_empirical - check.cov_theory).max() / np.abs(check.cov_theory).max())


def test_covariance_error_does_not_grow_with_graph_size():
    small = [_covariance_discrepancy(500, seed) for seed in range(5)]
    large = [_covariance_discrepancy(4000, seed) for seed in range(5)]
    # 400 replicas leave a few percent of sampling noise in every batch
    slack = 2 * np.std(small + large, ddof=1) / np.sqrt(len(small))
    assert np.median(large) <= np.median(small) + slack


def test_cost_methods_agree():
    dist = make_poisson(5.0)
    gaussian = discounted_cost(dist, 0.5, 0.9, 1.0, 1000, 3.0)
    monte_carlo = discounted_cost(dist, 0.5, 0.9, 1.0, 1000, 3.0, method="monte_carlo", seed=21, replicas=200)
    assert monte_carlo.log_value == pytest.approx(gaussian.log_value, rel=0.05)
