from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.degree import (
    DistributionError,
    cached_from_descriptor,
    from_descriptor,
    make_negative_binomial,
    make_poisson,
    make_regular,
    make_table,
    sample_degree_sequence,
    with_mean,
)


@st.composite
def tables(draw):
    weights = draw(
        st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=12).filter(lambda w: sum(w) > 0.1)
    )
    total = sum(weights)
    return make_table({k: w / total for k, w in enumerate(weights)})


@pytest.mark.parametrize("lam", [1.5, 5.0, 6.0])
def test_poisson_normalized_with_requested_mean(lam):
    dist = make_poisson(lam)
    assert dist.pmf.sum() == pytest.approx(1.0, abs=1e-12)
    assert dist.mean == pytest.approx(lam, abs=1e-9)
    assert dist.pgf_deriv(1.0, 1) == pytest.approx(lam, abs=1e-9)


def test_poisson_closed_forms(poisson5):
    for x in np.linspace(0.0, 1.0, 11):
        assert poisson5.pgf(x) == pytest.approx(math.exp(5.0 * (x - 1.0)), rel=1e-10)
    assert poisson5.pgf_deriv(0.8, 3) == pytest.approx(125.0 * math.exp(-1.0), rel=1e-10)


def test_poisson_vanishing_rate_is_all_mass_at_zero():
    dist = make_poisson(1e-8)
    assert dist.pmf[0] > 1.0 - 1e-7


@pytest.mark.parametrize("lam", [0.0, -1.0, float("inf")])
def test_poisson_rejects_bad_rate(lam):
    with pytest.raises(DistributionError):
        make_poisson(lam)


def test_negative_binomial_counts_failures():
    dist = make_negative_binomial(2, 0.75)
    assert dist.mean == pytest.approx(2.0 / 3.0, abs=1e-9)
    assert dist.pmf.sum() == pytest.approx(1.0, abs=1e-12)

    geometric = make_negative_binomial(1, 0.5)
    k = np.arange(10)
    np.testing.assert_allclose(geometric.pmf[:10], 0.5 ** (k + 1), rtol=1e-10)


@pytest.mark.parametrize("r, p", [(0, 0.5), (2, 1.0), (2, 0.0), (1.5, 0.5)])
def test_negative_binomial_rejects_bad_parameters(r, p):
    with pytest.raises(DistributionError):
        make_negative_binomial(r, p)


def test_regular_generating_function(regular3):
    assert regular3.pgf(0.5) == pytest.approx(0.125)
    assert regular3.pgf_deriv(1.0, 2) == pytest.approx(6.0)
    assert regular3.mean == 3.0
    assert make_regular(0).pgf(0.3) == 1.0
    assert make_regular(5).mean == 5.0


def test_tables_and_their_means():
    assert make_table({1: 0.7, 4: 0.2, 45: 0.1}).mean == pytest.approx(6.0)
    assert make_table({1: 0.5, 9: 0.5}).mean == pytest.approx(5.0)
    assert make_table({3: 1.0}).same_as(make_regular(3))


@pytest.mark.parametrize("entries", [{1: -0.1, 2: 1.1}, {1: 0.5, 2: 0.4}, {}, {-1: 1.0}])
def test_table_rejects_invalid_entries(entries):
    with pytest.raises(DistributionError):
        make_table(entries)


@pytest.mark.parametrize("x", [-0.1, 1.5, float("nan")])
def test_pgf_domain_is_unit_interval(poisson5, x):
    with pytest.raises(DistributionError):
        poisson5.pgf(x)


def test_derivative_order_limited(poisson5):
    with pytest.raises(DistributionError):
        poisson5.pgf_deriv(0.5, 4)
    with pytest.raises(DistributionError):
        poisson5.d_operator(0.5, 4)


@pytest.mark.parametrize("lam", [1.5, 5.0, 6.0])
def test_poisson_excess_factors_are_one(lam):
    dist = make_poisson(lam)
    grid = np.linspace(0.05, 1.0, 20)
    np.testing.assert_allclose(dist.kappa(grid), 1.0, atol=1e-9)
    np.testing.assert_allclose(dist.d_operator(grid, 3), 1.0, atol=1e-9)


def test_regular_and_degree_one_excess_factors(regular3):
    np.testing.assert_allclose(regular3.kappa(np.linspace(0.1, 1.0, 10)), 2.0 / 3.0, rtol=1e-12)
    assert make_table({1: 1.0}).kappa(0.5) == 0.0


def test_d_operator_needs_positive_first_derivative(regular3):
    with pytest.raises(DistributionError):
        regular3.kappa(0.0)


@settings(max_examples=60, deadline=None)
@given(tables())
def test_pgf_is_monotone_and_convex(dist):
    grid = np.linspace(0.0, 1.0, 100)
    values = dist.pgf(grid)
    assert dist.pgf(1.0) == pytest.approx(1.0, abs=1e-9)
    assert np.all(np.diff(values) >= -1e-12)
    assert np.all(np.diff(values, 2) >= -1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=0.05, max_value=0.95), st.integers(min_value=0, max_value=2))
def test_pgf_derivatives_match_finite_differences(x, order):
    dist = make_poisson(5.0)
    step = 1e-5
    numeric = (dist.pgf_deriv(x + step, order) - dist.pgf_deriv(x - step, order)) / (2 * step)
    assert dist.pgf_deriv(x, order + 1) == pytest.approx(numeric, rel=1e-6)


def test_sampling_regular_parity():
    rng = np.random.default_rng(0)
    assert np.all(sample_degree_sequence(make_regular(3), 4, rng) == 3)
    with pytest.raises(DistributionError, match="odd total unavoidable"):
        sample_degree_sequence(make_regular(3), 5, rng)


def test_sampling_is_seeded_and_even(poisson5):
    first = sample_degree_sequence(poisson5, 10_000, np.random.default_rng(42))
    second = sample_degree_sequence(poisson5, 10_000, np.random.default_rng(42))
    np.testing.assert_array_equal(first, second)
    assert first.sum() % 2 == 0
    assert abs(first.mean() - 5.0) < 3 * math.sqrt(5.0 / 10_000)


def test_descriptors_rebuild_the_same_distribution(poisson5, regular3):
    for dist in (poisson5, regular3, make_negative_binomial(2, 0.75), make_table({1: 0.5, 9: 0.5})):
        assert from_descriptor(dist.describe()).same_as(dist)
    with pytest.raises(DistributionError):
        from_descriptor({"kind": "zipf"})


def test_with_mean_families():
    assert with_mean("poisson", 4.0).mean == pytest.approx(4.0, abs=1e-9)
    assert with_mean("negative_binomial", 4.0, r=2).mean == pytest.approx(4.0, abs=1e-9)
    assert with_mean("regular", 4.0).same_as(make_regular(4))
    with pytest.raises(DistributionError):
        with_mean("regular", 2.5)


def test_cached_descriptor_lookup_reuses_instances():
    first = cached_from_descriptor({"kind": "poisson", "lam": 5.0})
    second = cached_from_descriptor({"lam": 5.0, "kind": "poisson"})
    assert first is second
