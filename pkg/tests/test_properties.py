"""Hypothesis property tests for the structural invariants."""
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import loop_blocks, loop_recombine, random_fitness, random_mutation
from recodyn import Measure, RecombinationRates, TypeSpace
from recodyn.correlations import MomentTable, correlations_from_moments, moments_from_correlations
from recodyn.dynamics import ModelSpec, full_rhs
from recodyn.mutation import apply_semigroup
from recodyn.recombination import coefficient_table, recombine_link, recombine_set
from recodyn.selection import diploid_rhs, selection_rhs

cards = st.lists(st.integers(2, 3), min_size=1, max_size=4)
seeds = st.integers(0, 2**32 - 1)


def positive(space, seed, total=1.0):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.01, 1.0, space.shape)
    return Measure(space, total * w / w.sum())


@settings(max_examples=60, deadline=None)
@given(cards, seeds)
def test_recombinators_are_commuting_projections(c, seed):
    space = TypeSpace(tuple(c))
    nu = positive(space, seed)
    for a in range(space.n_links):
        ra = recombine_link(nu, a)
        np.testing.assert_allclose(recombine_link(ra, a).weights, ra.weights, atol=1e-14)
        for b in range(space.n_links):
            np.testing.assert_allclose(recombine_link(ra, b).weights,
                                       recombine_link(recombine_link(nu, b), a).weights, atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(cards, seeds, st.floats(0.1, 10.0))
def test_recombine_set_matches_loop_oracle(c, seed, total):
    space = TypeSpace(tuple(c))
    nu = positive(space, seed, total)
    for g in range(space.full_mask + 1):
        links = {i for i in range(space.n_links) if g >> i & 1}
        expect = loop_recombine(space, nu.weights, loop_blocks(space, links))
        np.testing.assert_allclose(recombine_set(nu, g).weights.reshape(-1), expect, rtol=1e-12)
        assert abs(recombine_set(nu, g).mass() - nu.mass()) < 1e-12 * total


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(0.01, 5.0), min_size=1, max_size=6), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_coefficients_form_a_convolution_semigroup(rho, t, s):
    rates = RecombinationRates(tuple(rho))
    at, as_, ats = (coefficient_table(x, rates).a for x in (t, s, t + s))
    assert abs(at.sum() - 1.0) < 1e-12
    assert (at >= 0).all()
    conv = np.zeros_like(at)
    for h in range(len(at)):
        for k in range(len(at)):
            conv[h | k] += at[h] * as_[k]
    np.testing.assert_allclose(conv, ats, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(cards, seeds, st.floats(0.0, 4.0))
def test_mutation_semigroup_keeps_mass_and_positivity(c, seed, t):
    space = TypeSpace(tuple(c))
    rng = np.random.default_rng(seed)
    out = apply_semigroup(random_mutation(rng, space), t, positive(space, seed))
    assert abs(out.mass() - 1.0) < 1e-12
    assert out.weights.min() >= 0.0


@settings(max_examples=40, deadline=None)
@given(cards, seeds)
def test_full_rhs_is_mass_free_without_selection(c, seed):
    space = TypeSpace(tuple(c))
    rng = np.random.default_rng(seed)
    rates = RecombinationRates(tuple(rng.uniform(0.1, 2.0, space.n_links)))
    nu = positive(space, seed)
    model = ModelSpec(space, rates, nu, random_mutation(rng, space))
    assert abs(full_rhs(model, nu).mass()) < 1e-12


@settings(max_examples=40, deadline=None)
@given(cards, seeds, st.floats(0.1, 5.0))
def test_diploid_and_haploid_selection_agree(c, seed, total):
    space = TypeSpace(tuple(c))
    rng = np.random.default_rng(seed)
    fitness = random_fitness(rng, space)
    nu = positive(space, seed, total)
    np.testing.assert_allclose(diploid_rhs(fitness, nu).weights, selection_rhs(fitness, nu).weights, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), seeds)
def test_moment_correlation_roundtrip(k, seed):
    rng = np.random.default_rng(seed)
    table = MomentTable(k, {m: float(rng.uniform(-1, 1)) for m in range(1, 1 << k)})
    back = moments_from_correlations(correlations_from_moments(table))
    for m in range(1, 1 << k):
        assert abs(back[m] - table[m]) < 1e-12
