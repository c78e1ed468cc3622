"""Random model builders and loop-based oracles shared by the tests."""
from __future__ import annotations

import itertools
import math

import numpy as np

from recodyn import FitnessModel, Measure, MutationModel, RecombinationRates, TypeSpace, random_measure
from recodyn.dynamics import ModelSpec


def random_space(rng, sites=(2, 4), cards=(2, 3)) -> TypeSpace:
    n = int(rng.integers(sites[0], sites[1] + 1))
    return TypeSpace(tuple(int(rng.choice(cards)) for _ in range(n)))


def random_rates(rng, n_links: int, low=0.1, high=2.0) -> RecombinationRates:
    return RecombinationRates(tuple(rng.uniform(low, high, n_links)))


def random_generator(rng, m: int, low=0.5, high=2.0) -> np.ndarray:
    """Column-convention generator with every off-diagonal rate positive."""
    q = rng.uniform(low, high, (m, m))
    np.fill_diagonal(q, 0.0)
    q[np.diag_indices(m)] = -q.sum(axis=0)
    return q


def random_mutation(rng, space: TypeSpace, **kw) -> MutationModel:
    return MutationModel.from_matrices([random_generator(rng, m, **kw) for m in space.cardinalities])


def random_fitness(rng, space: TypeSpace, low=0.0, high=1.0) -> FitnessModel:
    return FitnessModel(tuple(rng.uniform(low, high, m) for m in space.cardinalities))


def recombination_model(rng, space: TypeSpace | None = None) -> ModelSpec:
    space = space or random_space(rng)
    return ModelSpec(space, random_rates(rng, space.n_links), random_measure(space, rng))


def product_measure(space: TypeSpace, rng) -> Measure:
    w = np.ones(())
    for m in space.cardinalities:
        w = np.multiply.outer(w, rng.dirichlet(np.ones(m)))
    return Measure(space, w)


# -- loop oracles -------------------------------------------------------------

def _table(space: TypeSpace, w) -> dict:
    flat = np.asarray(w, dtype=float).reshape(-1)
    return {x: flat[i] for i, x in enumerate(itertools.product(*map(range, space.cardinalities)))}


def loop_marginal(space: TypeSpace, w, block) -> dict:
    out: dict = {}
    for x, v in _table(space, w).items():
        key = tuple(x[s] for s in block)
        out[key] = out.get(key, 0.0) + v
    return out


def loop_recombine(space: TypeSpace, w, blocks) -> np.ndarray:
    """Product of block marginals over ``blocks`` divided by norm^(len(blocks)-1)."""
    norm = float(np.abs(np.asarray(w)).sum())
    if norm == 0.0:
        return np.zeros(space.total_size)
    margs = [loop_marginal(space, w, b) for b in blocks]
    out = []
    for x in itertools.product(*map(range, space.cardinalities)):
        out.append(math.prod(m[tuple(x[s] for s in b)] for m, b in zip(margs, blocks)) / norm ** (len(blocks) - 1))
    return np.array(out)


def loop_blocks(space: TypeSpace, links) -> list[list[int]]:
    blocks, cur = [], [0]
    for i in range(space.n_links):
        if i in links:
            blocks.append(cur)
            cur = []
        cur.append(i + 1)
    blocks.append(cur)
    return blocks


def loop_coeff_a(links, t: float, rho) -> float:
    """Probability that exactly ``links`` were hit by independent Poisson clocks."""
    p = 1.0
    for i, r in enumerate(rho):
        hit = 1.0 - math.exp(-r * t)
        p *= hit if i in links else 1.0 - hit
    return p


def bell_numbers(n: int) -> list[int]:
    """B_0..B_n from the recurrence B_{m+1} = sum_k C(m, k) B_k."""
    b = [1]
    for m in range(n):
        b.append(sum(math.comb(m, k) * b[k] for k in range(m + 1)))
    return b
