"""
Product type spaces X = X_0 x ... x X_n.

Sites are numbered 0..n, links 0..n-1; link i sits between sites i and i+1.
A set of links is an int bitmask (bit i <-> link i).  Dense tensors over X
use C order, so site 0 is the most significant digit of the flat index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

DEFAULT_MAX_SIZE = 2 ** 20
MAX_LINKS = 16


@dataclass(frozen=True)
class TypeSpace:
    """Site cardinalities (M_0, ..., M_n) of a finite product space."""

    cardinalities: tuple[int, ...]
    max_size: int = DEFAULT_MAX_SIZE

    def __post_init__(self):
        cards = tuple(int(m) for m in self.cardinalities)
        if not cards:
            raise ValueError("a type space needs at least one site")
        for i, m in enumerate(cards):
            if m < 2:
                raise ValueError(f"site {i} has {m} states; every site needs at least 2")
        if len(cards) - 1 > MAX_LINKS:
            raise ValueError(f"{len(cards) - 1} links exceeds the cap of {MAX_LINKS}")
        size = math.prod(cards)
        if size > self.max_size:
            raise ValueError(f"|X| = {size} exceeds the configured cap {self.max_size}")
        object.__setattr__(self, "cardinalities", cards)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cardinalities

    @property
    def n_sites(self) -> int:
        return len(self.cardinalities)

    @property
    def n_links(self) -> int:
        return self.n_sites - 1

    @property
    def total_size(self) -> int:
        return math.prod(self.cardinalities)

    @property
    def full_mask(self) -> int:
        return (1 << self.n_links) - 1

    def complement(self, mask: int) -> int:
        return self.full_mask ^ mask

    def check_mask(self, mask: int) -> int:
        if not 0 <= mask <= self.full_mask:
            raise ValueError(f"link set {mask:#b} is not a subset of the {self.n_links} links")
        return mask

    def check_link(self, link: int) -> int:
        if not 0 <= link < self.n_links:
            raise ValueError(f"link {link} out of range 0..{self.n_links - 1}")
        return link

    def check_site(self, site: int) -> int:
        if not 0 <= site < self.n_sites:
            raise ValueError(f"site {site} out of range 0..{self.n_sites - 1}")
        return site

    def coordinates(self) -> Iterator[tuple[int, ...]]:
        """All tuples of X in ascending flat-index order."""
        return np.ndindex(*self.cardinalities)

    def label(self, flat: int) -> str:
        return "(" + ",".join(str(c) for c in unflat_index(self, flat)) + ")"


def flat_index(space: TypeSpace, coords: Sequence[int]) -> int:
    if len(coords) != space.n_sites:
        raise IndexError(f"expected {space.n_sites} coordinates, got {len(coords)}")
    rank = 0
    for i, (c, m) in enumerate(zip(coords, space.cardinalities)):
        if not 0 <= c < m:
            raise IndexError(f"coordinate {c} at site {i} outside 0..{m - 1}")
        rank = rank * m + int(c)
    return rank


def unflat_index(space: TypeSpace, flat: int) -> tuple[int, ...]:
    if not 0 <= flat < space.total_size:
        raise IndexError(f"flat index {flat} outside 0..{space.total_size - 1}")
    coords = []
    for m in reversed(space.cardinalities):
        flat, c = divmod(flat, m)
        coords.append(c)
    return tuple(reversed(coords))


def links_of(mask: int) -> list[int]:
    """Link indices contained in a bitmask, ascending."""
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def mask_of(links: Sequence[int]) -> int:
    mask = 0
    for i in links:
        mask |= 1 << int(i)
    return mask


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def partition_of(space: TypeSpace, cuts: int) -> tuple[tuple[int, ...], ...]:
    """
    Ordered partition of the sites induced by cutting at the given links.

    Cutting at link i separates site i from site i+1, so the result has
    popcount(cuts) + 1 contiguous blocks.
    """
    space.check_mask(cuts)
    blocks = []
    start = 0
    for link in links_of(cuts):
        blocks.append(tuple(range(start, link + 1)))
        start = link + 1
    blocks.append(tuple(range(start, space.n_sites)))
    return tuple(blocks)


def refines(fine: Sequence[Sequence[int]], coarse: Sequence[Sequence[int]]) -> bool:
    """True if every block of ``fine`` lies inside a block of ``coarse``."""
    owner = {}
    for j, block in enumerate(coarse):
        for s in block:
            owner[s] = j
    return all(len({owner[s] for s in block}) == 1 for block in fine)


def subsets_of(mask: int) -> Iterator[int]:
    """All submasks of ``mask`` in ascending numeric order."""
    bits = links_of(mask)
    for k in range(1 << len(bits)):
        sub = 0
        for j, b in enumerate(bits):
            if k >> j & 1:
                sub |= 1 << b
        yield sub


def supersets_of(mask: int, full_mask: int) -> Iterator[int]:
    """All H with mask <= H <= full_mask, ascending."""
    for extra in subsets_of(full_mask & ~mask):
        yield mask | extra


def moebius_subset(b: int, a: int) -> int:
    """Moebius function of the Boolean lattice: (-1)^|A-B| if B is a subset of A, else 0."""
    if b & ~a:
        return 0
    return -1 if popcount(a & ~b) % 2 else 1
