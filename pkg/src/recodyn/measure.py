"""Dense (signed) measures on a finite product space."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .type_space import TypeSpace

NEGATIVE_TOL = 1e-12


class SignedMeasure:
    """
    A real tensor over X.  ``weights`` has shape ``space.shape``.

    Instances are treated as immutable: the stored array is a private copy
    with the write flag cleared.
    """

    __slots__ = ("space", "weights")

    def __init__(self, space: TypeSpace, weights):
        w = np.array(weights, dtype=float)
        if w.size != space.total_size:
            raise ValueError(f"got {w.size} weights for a space of size {space.total_size}")
        w = w.reshape(space.shape)
        if not np.all(np.isfinite(w)):
            raise ValueError("measure weights must be finite")
        self._validate(w)
        w.flags.writeable = False
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "weights", w)

    def _validate(self, w: np.ndarray) -> None:
        pass

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    @property
    def flat(self) -> np.ndarray:
        return self.weights.reshape(-1)

    def mass(self) -> float:
        return float(self.weights.sum())

    def variation_norm(self) -> float:
        return float(np.abs(self.weights).sum())

    def signed(self) -> "SignedMeasure":
        return SignedMeasure(self.space, self.weights)

    def _wrap(self, w):
        return SignedMeasure(self.space, w)

    def __add__(self, other: "SignedMeasure") -> "SignedMeasure":
        _same_space(self, other)
        return SignedMeasure(self.space, self.weights + other.weights)

    def __sub__(self, other: "SignedMeasure") -> "SignedMeasure":
        _same_space(self, other)
        return SignedMeasure(self.space, self.weights - other.weights)

    def __neg__(self) -> "SignedMeasure":
        return SignedMeasure(self.space, -self.weights)

    def __mul__(self, c: float) -> "SignedMeasure":
        return SignedMeasure(self.space, float(c) * self.weights)

    __rmul__ = __mul__

    def __repr__(self):
        return f"{type(self).__name__}({self.space.cardinalities}, mass={self.mass():.6g})"


class Measure(SignedMeasure):
    """A positive measure; entries down to -1e-12 are clamped to zero."""

    __slots__ = ()

    def _validate(self, w: np.ndarray) -> None:
        lowest = w.min()
        if lowest < -NEGATIVE_TOL:
            raise ValueError(f"positive measure has entry {lowest:.3g} < 0")
        np.maximum(w, 0.0, out=w)

    def __mul__(self, c: float):
        if c >= 0:
            return Measure(self.space, float(c) * self.weights)
        return SignedMeasure(self.space, float(c) * self.weights)

    __rmul__ = __mul__


def _same_space(a: SignedMeasure, b: SignedMeasure) -> None:
    if a.space.cardinalities != b.space.cardinalities:
        raise ValueError("measures live on different type spaces")


def mass(omega: SignedMeasure) -> float:
    return omega.mass()


def variation_norm(omega: SignedMeasure) -> float:
    return omega.variation_norm()


def uniform(space: TypeSpace, total: float = 1.0) -> Measure:
    return Measure(space, np.full(space.shape, total / space.total_size))


def point_mass(space: TypeSpace, coords: Sequence[int], total: float = 1.0) -> Measure:
    w = np.zeros(space.shape)
    w[tuple(coords)] = total
    return Measure(space, w)


def random_measure(space: TypeSpace, rng: np.random.Generator, total: float = 1.0) -> Measure:
    """Random strictly positive measure of the given mass (flat Dirichlet)."""
    w = rng.dirichlet(np.ones(space.total_size))
    return Measure(space, total * w)


# -- marginals and products -------------------------------------------------

def marginal_array(w: np.ndarray, block: Sequence[int]) -> np.ndarray:
    """Sum a tensor over every axis not in ``block`` (kept in ascending order)."""
    keep = sorted(set(block))
    drop = tuple(i for i in range(w.ndim) if i not in keep)
    return w.sum(axis=drop) if drop else w.copy()


def marginal(omega: SignedMeasure, block: Sequence[int]) -> SignedMeasure:
    """Projection of ``omega`` onto the sites in ``block``."""
    sites = sorted(set(int(s) for s in block))
    if not sites:
        raise ValueError("marginal needs a nonempty block of sites")
    for s in sites:
        omega.space.check_site(s)
    sub = TypeSpace(tuple(omega.space.cardinalities[s] for s in sites))
    w = marginal_array(omega.weights, sites)
    cls = Measure if isinstance(omega, Measure) else SignedMeasure
    return cls(sub, w)


def outer_blocks(factors: Sequence[np.ndarray]) -> np.ndarray:
    """Tensor product of block tensors laid out consecutively."""
    out = np.asarray(factors[0], dtype=float)
    for f in factors[1:]:
        f = np.asarray(f, dtype=float)
        out = np.multiply.outer(out, f)
    return out


def product(factors: Sequence[SignedMeasure], blocks: Sequence[Sequence[int]] | None = None) -> SignedMeasure:
    """
    Product measure of factors living on consecutive blocks of sites.

    ``blocks`` (optional) names the sites of each factor; it must tile
    0..n in order and agree with the factors' cardinalities.
    """
    if not factors:
        raise ValueError("product needs at least one factor")
    cards = []
    for f in factors:
        cards.extend(f.space.cardinalities)
    if blocks is not None:
        expected = 0
        for f, block in zip(factors, blocks, strict=True):
            block = list(block)
            if block != list(range(expected, expected + len(block))):
                raise ValueError(f"block {block} does not continue the tiling at site {expected}")
            if len(block) != f.space.n_sites:
                raise ValueError(f"block {block} does not match a factor with {f.space.n_sites} sites")
            expected += len(block)
    space = TypeSpace(tuple(cards))
    w = outer_blocks([f.weights for f in factors])
    positive = all(isinstance(f, Measure) for f in factors)
    return (Measure if positive else SignedMeasure)(space, w)


@dataclass(frozen=True)
class Cylinder:
    """Values prescribed at some sites; the other sites are free."""

    assignments: tuple[tuple[int, int], ...] = ()

    @classmethod
    def of(cls, assignments: Mapping[int, int] | None = None) -> "Cylinder":
        items = sorted((int(s), int(v)) for s, v in (assignments or {}).items())
        return cls(tuple(items))

    @property
    def sites(self) -> tuple[int, ...]:
        return tuple(s for s, _ in self.assignments)

    @property
    def values(self) -> tuple[int, ...]:
        return tuple(v for _, v in self.assignments)

    def index(self, space: TypeSpace) -> tuple:
        idx: list = [slice(None)] * space.n_sites
        for s, v in self.assignments:
            space.check_site(s)
            if not 0 <= v < space.cardinalities[s]:
                raise ValueError(f"value {v} invalid at site {s} with {space.cardinalities[s]} states")
            idx[s] = v
        return tuple(idx)


def cylinder_value(omega: SignedMeasure, c: Cylinder) -> float:
    return float(np.sum(omega.weights[c.index(omega.space)]))
