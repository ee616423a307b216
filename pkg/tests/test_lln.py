from __future__ import annotations

import numpy as np
import pytest
from scipy.integrate import cumulative_trapezoid

import src.lln as lln_module
from src.degree import make_negative_binomial, make_poisson, make_table
from src.lln import (
    SingularityError,
    consistency_residual,
    edge_mass_residual,
    h_drift,
    infected_fraction,
    initial_alpha,
    solve_lln,
)


def test_initial_state(poisson5, regular3):
    assert initial_alpha(poisson5, 0.9) == pytest.approx((0.9, 0.45, 4.05), abs=1e-9)
    assert initial_alpha(regular3, 0.5) == pytest.approx((0.5, 0.75, 0.75))
    with pytest.raises(ValueError):
        initial_alpha(poisson5, 0.0)


def test_drift_at_start(poisson5):
    drift = h_drift((0.9, 0.45, 4.05), 1.0, poisson5, 0.5, 0.9)
    np.testing.assert_allclose(drift, [-0.225, 0.675, -2.025, -0.05], atol=1e-9)


def test_drift_vanishes_without_si_edges(poisson5):
    np.testing.assert_array_equal(h_drift((0.5, 0.0, 2.0), 0.7, poisson5, 0.5, 0.9), np.zeros(4))


def test_drift_guards(poisson5, regular3):
    with pytest.raises(SingularityError):
        h_drift((0.0, 0.1, 0.1), 0.5, poisson5, 0.5, 0.9)
    with pytest.raises(SingularityError):
        h_drift((0.5, 0.1, 0.1), 0.0, poisson5, 0.5, 0.9)
    with pytest.raises(SingularityError):
        h_drift((0.5, 0.1, 0.1), 1e-7, regular3, 0.5, 0.9)


def test_zero_rate_is_constant(poisson5):
    solution = solve_lln(poisson5, 0.0, 0.9, 1.0)
    np.testing.assert_allclose(solution.values, np.tile([0.9, 0.45, 4.05, 1.0], (solution.times.size, 1)), atol=1e-9)
    assert solution.refinement_error == pytest.approx(0.0, abs=1e-15)


def test_grid_step_divides_horizon(poisson5):
    solution = solve_lln(poisson5, 0.5, 0.9, 1.0, h=0.3)
    assert solution.h == pytest.approx(0.25)
    assert solution.times.tolist() == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])


@pytest.mark.parametrize(
    "dist",
    [make_poisson(5.0), make_negative_binomial(2, 0.75), make_table({1: 0.7, 4: 0.2, 45: 0.1})],
    ids=["poisson", "negbin", "table"],
)
def test_solution_invariants(dist):
    solution = solve_lln(dist, 0.5, 0.9, 2.0)
    assert solution.refinement_error < (1e-8 if dist.kind == "poisson" else 1e-6)
    assert consistency_residual(solution) < 1e-6
    assert edge_mass_residual(solution) < 1e-6
    assert np.all(np.diff(solution.theta) <= 1e-12)
    assert np.all(np.diff(solution.x_s) <= 1e-12)
    assert np.all(np.diff(solution.x_ss) <= 1e-12)
    assert np.all(solution.x_si >= -1e-12)
    assert not solution.stopped_early


def test_theta_closed_form(poisson5):
    solution = solve_lln(poisson5, 0.5, 0.9, 2.0)
    rate = 0.5 * solution.x_si / (0.9 * solution.theta * poisson5.pgf_deriv(solution.theta, 1))
    closed = np.exp(-cumulative_trapezoid(rate, solution.times, initial=0.0))
    np.testing.assert_allclose(solution.theta, closed, atol=1e-6)


def test_infected_fraction(poisson5):
    solution = solve_lln(poisson5, 0.5, 0.9, 2.0)
    assert infected_fraction(solution, 0.0) == pytest.approx(0.1, abs=1e-12)
    fractions = infected_fraction(solution, np.linspace(0.0, 2.0, 41))
    assert np.all(np.diff(fractions) >= -1e-12)
    with pytest.raises(ValueError):
        infected_fraction(solution, 2.5)


def test_interpolation_agrees_at_nodes(poisson5):
    solution = solve_lln(poisson5, 0.5, 0.9, 1.0, h=0.01)
    for t in (0.0, 0.37, 1.0):
        np.testing.assert_allclose(solution.smooth_state_at(t), solution.values[round(t / 0.01)], atol=1e-12)
        np.testing.assert_allclose(solution.state_at(t), solution.values[round(t / 0.01)], atol=1e-12)
    halfway = solution.smooth_state_at(0.005)
    assert solution.values[1, 0] < halfway[0] < solution.values[0, 0]


def test_singular_state_is_strict_or_truncated(poisson5, monkeypatch):
    real = lln_module.h_drift

    def guarded(x, theta, dist, beta, alpha_s):
        if x[0] < 0.85:
            raise SingularityError("below test floor")
        return real(x, theta, dist, beta, alpha_s)

    monkeypatch.setattr(lln_module, "h_drift", guarded)
    with pytest.raises(SingularityError):
        solve_lln(poisson5, 0.5, 0.9, 2.0)
    solution = solve_lln(poisson5, 0.5, 0.9, 2.0, strict=False)
    assert solution.stopped_early
    assert solution.stop_time < 2.0
    assert solution.end_time == pytest.approx(solution.stop_time)
    assert np.all(solution.x_s >= 0.85)


def test_invalid_arguments(poisson5):
    with pytest.raises(ValueError):
        solve_lln(poisson5, 0.5, 0.9, 0.0)
    with pytest.raises(ValueError):
        solve_lln(poisson5, -0.5, 0.9, 1.0)
