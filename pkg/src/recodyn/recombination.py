"""
Single-crossover recombination: recombinators, their closed-form flow, and
the T-operators whose cylinder values are the linkage disequilibria.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .measure import Cylinder, Measure, SignedMeasure, cylinder_value
from .type_space import (
    TypeSpace,
    links_of,
    mask_of,
    moebius_subset,
    partition_of,
    popcount,
    supersets_of,
)


@dataclass(frozen=True)
class RecombinationRates:
    """Crossover rate per link (1/time).  Every rate must be positive."""

    rho: tuple[float, ...]

    def __post_init__(self):
        rho = tuple(float(r) for r in self.rho)
        for i, r in enumerate(rho):
            if not math.isfinite(r) or r <= 0:
                raise ValueError(
                    f"rho[{i}] = {r}: recombination rates must satisfy rho_alpha > 0; "
                    f"if a link never recombines, merge sites {i} and {i + 1} into one site"
                )
        object.__setattr__(self, "rho", rho)

    @property
    def n_links(self) -> int:
        return len(self.rho)

    def outside(self, mask: int) -> float:
        """Sum of the rates of links not in ``mask``."""
        return sum(r for i, r in enumerate(self.rho) if not mask >> i & 1)


# -- recombinators ------------------------------------------------------------

def _norm(w: np.ndarray) -> float:
    return float(np.abs(w).sum())


def recombine_link_array(w: np.ndarray, link: int) -> np.ndarray:
    """R_alpha on a raw tensor; alpha is the link after site ``link``."""
    shape = w.shape
    left = math.prod(shape[: link + 1])
    w2 = w.reshape(left, -1)
    norm = _norm(w)
    if norm == 0.0:
        return np.zeros(shape)
    head = w2.sum(axis=1)
    tail = w2.sum(axis=0)
    return (np.outer(head, tail) / norm).reshape(shape)


def block_marginals(w: np.ndarray, blocks: Sequence[Sequence[int]]) -> list[np.ndarray]:
    """Marginals of ``w`` on contiguous site blocks, each flattened."""
    shape = w.shape
    out = []
    for block in blocks:
        a, b = block[0], block[-1] + 1
        w3 = w.reshape(math.prod(shape[:a]), math.prod(shape[a:b]), math.prod(shape[b:]))
        out.append(w3.sum(axis=(0, 2)))
    return out


def recombine_set_array(w: np.ndarray, cuts: int, space: TypeSpace) -> np.ndarray:
    blocks = partition_of(space, cuts)
    if len(blocks) == 1:
        return w.copy()
    norm = _norm(w)
    if norm == 0.0:
        return np.zeros(w.shape)
    parts = block_marginals(w, blocks)
    out = parts[0]
    for p in parts[1:]:
        out = np.outer(out, p).reshape(-1)
    return out.reshape(w.shape) / norm ** (len(blocks) - 1)


def recombine_link(omega: SignedMeasure, link: int) -> SignedMeasure:
    """
    Elementary recombinator: product of the marginals left and right of the
    link, divided by the norm.  The zero measure maps to zero.
    """
    omega.space.check_link(link)
    w = recombine_link_array(omega.weights, link)
    return (Measure if isinstance(omega, Measure) else SignedMeasure)(omega.space, w)


def recombine_set(omega: SignedMeasure, cuts: int) -> SignedMeasure:
    """
    Composite recombinator R_G: factorize ``omega`` over the blocks cut out
    by the links in ``cuts``.  R_0 is the identity.
    """
    omega.space.check_mask(cuts)
    w = recombine_set_array(omega.weights, cuts, omega.space)
    return (Measure if isinstance(omega, Measure) else SignedMeasure)(omega.space, w)


def recombined_stack(omega: SignedMeasure) -> np.ndarray:
    """Array of shape (2**n_links, |X|) whose row G is R_G(omega), flattened."""
    space = omega.space
    rows = np.empty((1 << space.n_links, space.total_size))
    for g in range(1 << space.n_links):
        rows[g] = recombine_set_array(omega.weights, g, space).reshape(-1)
    return rows


def superset_moebius(stack: np.ndarray) -> np.ndarray:
    """
    Row-wise transform T[G] = sum over H containing G of (-1)^|H-G| R[H].

    ``stack`` is indexed by link bitmask along axis 0.
    """
    out = np.array(stack, dtype=float, copy=True)
    size = out.shape[0]
    bit = 1
    while bit < size:
        for g in range(size):
            if not g & bit:
                out[g] -= out[g | bit]
        bit <<= 1
    return out


# -- coefficient functions ----------------------------------------------------

def _check_time(t: float) -> float:
    t = float(t)
    if not t >= 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    return t


def coeff_a(cuts: int, t: float, rates: RecombinationRates) -> float:
    """Probability that the set of links hit by a crossover up to time t is exactly ``cuts``."""
    t = _check_time(t)
    value = math.exp(-rates.outside(cuts) * t)
    for i in links_of(cuts):
        value *= -math.expm1(-rates.rho[i] * t)
    return value


def coeff_b(cuts: int, t: float, rates: RecombinationRates) -> float:
    """exp(-t * sum of rates outside ``cuts``); equals the sum of a_G over G inside ``cuts``."""
    t = _check_time(t)
    return math.exp(-rates.outside(cuts) * t)


@dataclass(frozen=True)
class CoefficientTable:
    t: float
    a: np.ndarray
    b: np.ndarray


def coefficient_table(t: float, rates: RecombinationRates) -> CoefficientTable:
    """All a_G(t) and b_G(t), indexed by link bitmask."""
    t = _check_time(t)
    n = rates.n_links
    hit = -np.expm1(-np.asarray(rates.rho) * t)
    spared = np.exp(-np.asarray(rates.rho) * t)
    a = np.ones(1 << n)
    b = np.ones(1 << n)
    for g in range(1 << n):
        for i in range(n):
            if g >> i & 1:
                a[g] *= hit[i]
            else:
                a[g] *= spared[i]
                b[g] *= spared[i]
    return CoefficientTable(t, a, b)


# -- the flow -----------------------------------------------------------------

class RecombinationFlow:
    """
    Closed-form solution of the pure recombination equation from ``omega0``.

    All R_G(omega0) are built once; evaluating at a new time only recomputes
    the 2**n mixing weights.
    """

    def __init__(self, omega0: Measure, rates: RecombinationRates):
        if rates.n_links != omega0.space.n_links:
            raise ValueError(f"{rates.n_links} rates for {omega0.space.n_links} links")
        if not isinstance(omega0, Measure):
            omega0 = Measure(omega0.space, omega0.weights)
        self.omega0 = omega0
        self.rates = rates
        self.recombined = recombined_stack(omega0)

    def at(self, t: float) -> Measure:
        a = coefficient_table(t, self.rates).a
        return Measure(self.omega0.space, a @ self.recombined)

    __call__ = at


def solve_recombination(omega0: Measure, t: float, rates: RecombinationRates) -> Measure:
    return RecombinationFlow(omega0, rates).at(t)


# -- T-operators and k-point functions ---------------------------------------

def t_operator(omega: SignedMeasure, cuts: int) -> SignedMeasure:
    """T_G(omega) = sum over H containing G of (-1)^|H-G| R_H(omega)."""
    space = omega.space
    space.check_mask(cuts)
    acc = np.zeros(space.shape)
    for h in supersets_of(cuts, space.full_mask):
        acc += moebius_subset(cuts, h) * recombine_set_array(omega.weights, h, space)
    return SignedMeasure(space, acc)


def t_operators(omega: SignedMeasure) -> np.ndarray:
    """All T_G(omega) at once, shape (2**n_links, |X|)."""
    return superset_moebius(recombined_stack(omega))


def span_links(space: TypeSpace, first: int, last: int) -> int:
    """Links strictly outside the site span first..last."""
    outer = [i for i in range(space.n_links) if i < first or i >= last]
    return mask_of(outer)


def kpoint_function(omega: SignedMeasure, cuts: int, c: Cylinder) -> float:
    """Value of T_G(omega) on a cylinder set."""
    return cylinder_value(t_operator(omega, cuts), c)


def _check_contiguous(space: TypeSpace, sites: Sequence[int]) -> list[int]:
    sites = sorted(int(s) for s in sites)
    if not sites:
        raise ValueError("need at least one site")
    for s in sites:
        space.check_site(s)
    if sites != list(range(sites[0], sites[-1] + 1)):
        raise ValueError(
            f"sites {sites} have gaps; only spans without gaps give linkage disequilibria "
            "that are non-vanishing and polynomially independent for the span's outer links"
        )
    return sites


def _span_values(space: TypeSpace, sites: Sequence[int], t_weights: np.ndarray) -> dict:
    marg = t_weights.sum(axis=tuple(i for i in range(space.n_sites) if i not in sites))
    ranges = [range(1, space.cardinalities[s]) for s in sites]
    out = {}
    for values in np.ndindex(*[len(r) for r in ranges]):
        vals = tuple(v + 1 for v in values)
        out[vals] = float(marg[vals])
    return out


def linkage_disequilibria(omega: SignedMeasure, sites: Sequence[int]) -> dict[tuple[int, ...], float]:
    """
    Linkage disequilibria for a gap-free span of sites.

    Returns F_G on every cylinder over ``sites`` whose values are all nonzero;
    value 0 at each site is the dependent choice and is dropped.  G is the set
    of links outside the span.
    """
    space = omega.space
    sites = _check_contiguous(space, sites)
    cuts = span_links(space, sites[0], sites[-1])
    return _span_values(space, sites, t_operator(omega, cuts).weights)


def ld_basis(omega: SignedMeasure) -> dict[tuple[tuple[int, ...], tuple[int, ...]], float]:
    """
    The full set of independent k-point functions, keyed by (sites, values).

    Covers every subset of sites (gaps allowed, G fixed by the endpoints);
    the empty subset contributes the total mass.  Exactly |X| entries.
    """
    space = omega.space
    tstack = t_operators(omega)
    out = {((), ()): float(tstack[space.full_mask].sum())}
    for r in range(1, space.n_sites + 1):
        for mask in range(1 << space.n_sites):
            if popcount(mask) != r:
                continue
            sites = [i for i in range(space.n_sites) if mask >> i & 1]
            cuts = span_links(space, sites[0], sites[-1])
            vals = _span_values(space, sites, tstack[cuts].reshape(space.shape))
            for v, x in vals.items():
                out[(tuple(sites), v)] = x
    return out


def decay_check(omega0: Measure, cuts: int, t: float, rates: RecombinationRates):
    """Return (T_G(omega_t), b_G(t) T_G(omega0)) for comparison."""
    lhs = t_operator(solve_recombination(omega0, t, rates), cuts)
    rhs = coeff_b(cuts, t, rates) * t_operator(omega0, cuts)
    return lhs, rhs


__all__ = [
    "CoefficientTable",
    "RecombinationFlow",
    "RecombinationRates",
    "coeff_a",
    "coeff_b",
    "coefficient_table",
    "decay_check",
    "kpoint_function",
    "ld_basis",
    "linkage_disequilibria",
    "recombine_link",
    "recombine_set",
    "recombined_stack",
    "solve_recombination",
    "span_links",
    "superset_moebius",
    "t_operator",
    "t_operators",
]
