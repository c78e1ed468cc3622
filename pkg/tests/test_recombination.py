import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import loop_blocks, loop_coeff_a, loop_recombine, product_measure, random_rates, random_space
from recodyn.measure import Cylinder, Measure, SignedMeasure, marginal, product, random_measure
from recodyn.recombination import (
    RecombinationFlow,
    RecombinationRates,
    coeff_a,
    coeff_b,
    coefficient_table,
    decay_check,
    kpoint_function,
    ld_basis,
    linkage_disequilibria,
    recombine_link,
    recombine_set,
    recombined_stack,
    solve_recombination,
    span_links,
    t_operator,
    t_operators,
)
from recodyn.type_space import TypeSpace, links_of, subsets_of

TWO = TypeSpace((2, 2))
LINKED = Measure(TWO, [0.5, 0, 0, 0.5])

seeds = st.integers(0, 2**32 - 1)


def test_rates_must_be_positive():
    with pytest.raises(ValueError, match="merge sites 0 and 1"):
        RecombinationRates((0.0, 1.0))
    with pytest.raises(ValueError, match="rho_alpha > 0"):
        RecombinationRates((1.0, -2.0))


def test_recombine_link_examples(rng):
    np.testing.assert_allclose(recombine_link(LINKED, 0).flat, [0.25] * 4)
    prod = product([random_measure(TypeSpace((2,)), rng), random_measure(TypeSpace((3, 2)), rng)])
    np.testing.assert_allclose(recombine_link(prod, 0).flat, prod.flat, atol=1e-15)
    zero = SignedMeasure(TWO, np.zeros(4))
    np.testing.assert_array_equal(recombine_link(zero, 0).flat, 0.0)


def test_recombine_set_examples(rng):
    space = TypeSpace((2, 3, 2))
    omega = random_measure(space, rng)
    np.testing.assert_array_equal(recombine_set(omega, 0).flat, omega.flat)
    full = product([marginal(omega, [i]) for i in range(3)])
    np.testing.assert_allclose(recombine_set(omega, space.full_mask).flat, full.flat, atol=1e-15)
    np.testing.assert_allclose(recombine_set(LINKED, 1).flat, recombine_link(LINKED, 0).flat)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_recombine_set_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    space = random_space(rng, sites=(1, 4))
    w = rng.normal(size=space.total_size)
    omega = SignedMeasure(space, w)
    for g in range(1 << space.n_links):
        expected = loop_recombine(space, w, loop_blocks(space, links_of(g)))
        np.testing.assert_allclose(recombine_set(omega, g).flat, expected, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_recombinator_contracts_norm_and_is_lipschitz(seed):
    rng = np.random.default_rng(seed)
    space = random_space(rng, sites=(2, 4))
    a = SignedMeasure(space, rng.normal(size=space.total_size))
    b = SignedMeasure(space, rng.normal(size=space.total_size))
    for link in range(space.n_links):
        ra, rb = recombine_link(a, link), recombine_link(b, link)
        assert ra.variation_norm() <= a.variation_norm() * (1 + 1e-12)
        assert (ra - rb).variation_norm() <= 3 * (a - b).variation_norm() * (1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(2, 4))
def test_remainder_of_convex_combination(seed, k):
    rng = np.random.default_rng(seed)
    space = random_space(rng, sites=(2, 3))
    nus = [random_measure(space, rng, total=1.7) for _ in range(k)]
    a = rng.dirichlet(np.ones(k))
    omega = Measure(space, sum(ai * nu.weights for ai, nu in zip(a, nus)))
    for link in range(space.n_links):
        lhs = recombine_link(omega, link).flat
        linear = sum(ai * recombine_link(nu, link).flat for ai, nu in zip(a, nus))
        remainder = np.zeros(space.total_size)
        for i in range(k):
            for j in range(i + 1, k):
                delta = nus[i] - nus[j]
                r = recombine_link(delta, link).flat * delta.variation_norm()
                remainder -= a[i] * a[j] * r / omega.variation_norm()
        np.testing.assert_allclose(lhs, linear + remainder, atol=1e-13)


def test_coefficient_examples():
    rates = RecombinationRates((1.0, 2.0))
    t = math.log(2)
    np.testing.assert_allclose(coefficient_table(t, rates).a, [1 / 8, 1 / 8, 3 / 8, 3 / 8], rtol=1e-14)
    table = coefficient_table(0.0, rates)
    np.testing.assert_array_equal(table.a, [1, 0, 0, 0])
    np.testing.assert_array_equal(table.b, [1, 1, 1, 1])
    assert coeff_b(0b11, 3.7, rates) == 1.0
    assert coeff_b(0, 0.4, rates) == pytest.approx(coeff_a(0, 0.4, rates), rel=1e-15)
    with pytest.raises(ValueError):
        coeff_a(0, -1.0, rates)


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(1, 6), st.floats(0, 10))
def test_coefficients_match_poisson_oracle(seed, n, t):
    rng = np.random.default_rng(seed)
    rates = random_rates(rng, n, 0.05, 3.0)
    table = coefficient_table(t, rates)
    for g in range(1 << n):
        expected = loop_coeff_a(links_of(g), t, rates.rho)
        assert table.a[g] == pytest.approx(expected, rel=1e-12, abs=1e-15)
        assert table.a[g] == pytest.approx(coeff_a(g, t, rates), rel=1e-12, abs=1e-300)
        assert table.b[g] == pytest.approx(sum(table.a[h] for h in subsets_of(g)), abs=1e-13)
    assert table.a.sum() == pytest.approx(1.0, abs=1e-13)


def test_two_locus_flow_matches_mixing_law():
    flow = RecombinationFlow(LINKED, RecombinationRates((1.0,)))
    for t in (0.0, 0.3, math.log(2), 2.0):
        expected = math.exp(-t) / 2 + (1 - math.exp(-t)) / 4
        assert flow(t).flat[0] == pytest.approx(expected, abs=1e-15)
    assert flow(math.log(2)).flat[0] == pytest.approx(0.375, abs=1e-15)


def test_product_measure_is_stationary(rng):
    space = TypeSpace((2, 3, 2))
    nu = product_measure(space, rng)
    rates = RecombinationRates((0.4, 1.3))
    np.testing.assert_allclose(solve_recombination(nu, 2.0, rates).flat, nu.flat, atol=1e-15)


def test_flow_converges_within_bound(rng):
    space = TypeSpace((2, 2, 3))
    omega0 = random_measure(space, rng)
    rates = RecombinationRates((0.5, 1.2))
    limit = recombine_set(omega0, space.full_mask).flat
    tnorms = [np.abs(row).sum() for row in t_operators(omega0)]
    for t in (0.5, 2.0, 8.0, 30.0):
        gap = np.abs(solve_recombination(omega0, t, rates).flat - limit).sum()
        b = coefficient_table(t, rates).b
        bound = sum(b[k] * tnorms[k] for k in range(space.full_mask))
        assert gap <= bound + 1e-14
    assert np.abs(solve_recombination(omega0, 60.0, rates).flat - limit).sum() < 1e-10


def test_t_operator_examples(rng):
    space = TypeSpace((2, 3, 2))
    omega = random_measure(space, rng, total=1.5)
    np.testing.assert_allclose(t_operator(omega, space.full_mask).flat, recombine_set(omega, space.full_mask).flat)
    stack = t_operators(omega)
    for g in range(1 << space.n_links):
        np.testing.assert_allclose(stack[g], t_operator(omega, g).flat, atol=1e-15)
        expected_mass = 1.5 if g == space.full_mask else 0.0
        assert stack[g].sum() == pytest.approx(expected_mass, abs=1e-14)
    nu = product_measure(space, rng)
    for g in range(space.full_mask):
        np.testing.assert_allclose(t_operator(nu, g).flat, 0.0, atol=1e-15)


def test_t_operators_resum_to_recombinators(rng):
    # R_G = sum over H containing G of T_H
    space = TypeSpace((2, 2, 2, 2))
    omega = random_measure(space, rng)
    stack, rec = t_operators(omega), recombined_stack(omega)
    for g in range(1 << space.n_links):
        total = sum(stack[h] for h in range(1 << space.n_links) if g & ~h == 0)
        np.testing.assert_allclose(total, rec[g], atol=1e-15)


def test_kpoint_function_examples(rng):
    assert kpoint_function(LINKED, 0, Cylinder.of({0: 1, 1: 1})) == pytest.approx(0.25)
    space = TypeSpace((2, 2, 2))
    nu = product_measure(space, rng)
    assert abs(kpoint_function(nu, 0b01, Cylinder.of({0: 1, 2: 1}))) < 1e-15


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_zero_rule(seed):
    rng = np.random.default_rng(seed)
    space = random_space(rng, sites=(2, 4))
    nu = random_measure(space, rng)
    n = space.n_sites
    for _ in range(5):
        sites = sorted(rng.choice(n, size=rng.integers(1, n + 1), replace=False).tolist())
        outside = [i for i in range(space.n_links) if i < sites[0] or i >= sites[-1]]
        if not outside:
            continue
        kept_out = int(rng.choice(outside))
        g = int(rng.integers(0, 1 << space.n_links)) & ~(1 << kept_out)
        cyl = Cylinder.of({s: int(rng.integers(space.cardinalities[s])) for s in sites})
        assert abs(kpoint_function(nu, g, cyl)) < 1e-12


def test_linkage_disequilibria_examples(rng):
    space = TypeSpace((2, 3, 2))
    omega = random_measure(space, rng)
    single = linkage_disequilibria(omega, [1])
    m1 = marginal(omega, [1]).flat
    assert single == {(1,): pytest.approx(m1[1]), (2,): pytest.approx(m1[2])}
    p = np.array([0.1, 0.2, 0.3, 0.4])
    pair = linkage_disequilibria(Measure(TWO, p), [0, 1])
    assert pair[(1, 1)] == pytest.approx(0.4 - (0.3 + 0.4) * (0.2 + 0.4), abs=1e-15)
    with pytest.raises(ValueError, match="gaps"):
        linkage_disequilibria(omega, [0, 2])


def test_ld_basis_counts_every_state(rng):
    for cards in [(2, 3, 2), (2, 2), (3, 2, 4), (2, 2, 2, 2)]:
        space = TypeSpace(cards)
        basis = ld_basis(random_measure(space, rng))
        assert len(basis) == space.total_size
        assert basis[((), ())] == pytest.approx(1.0)


def test_ld_basis_vanishes_on_products_beyond_single_sites(rng):
    space = TypeSpace((3, 2, 2))
    basis = ld_basis(product_measure(space, rng))
    for (sites, _), value in basis.items():
        if len(sites) >= 2:
            assert abs(value) < 1e-15


@settings(max_examples=25, deadline=None)
@given(seeds, st.floats(0, 5))
def test_t_operators_decay_with_b(seed, t):
    rng = np.random.default_rng(seed)
    space = random_space(rng, sites=(2, 4))
    omega0 = random_measure(space, rng)
    rates = random_rates(rng, space.n_links)
    for g in range(1 << space.n_links):
        lhs, rhs = decay_check(omega0, g, t, rates)
        np.testing.assert_allclose(lhs.flat, rhs.flat, atol=1e-12)
    lhs, rhs = decay_check(omega0, 0, 0.0, rates)
    np.testing.assert_allclose(lhs.flat, t_operator(omega0, 0).flat, atol=1e-15)


def test_span_links():
    space = TypeSpace((2,) * 5)
    assert links_of(span_links(space, 1, 3)) == [0, 3]
    assert span_links(space, 0, 4) == 0
    assert span_links(space, 2, 2) == space.full_mask
