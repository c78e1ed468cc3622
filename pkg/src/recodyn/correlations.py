"""
Set partitions, the Moebius function of the partition lattice, and the
moment <-> correlation transforms built on it.

Elements of the ground set are 0..k-1; subsets are bitmasks.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

from .measure import Cylinder, SignedMeasure, cylinder_value
from .recombination import span_links, t_operator

MAX_K = 10


@dataclass(frozen=True)
class SetPartition:
    """Unordered partition, stored with blocks sorted by their smallest element."""

    blocks: tuple[tuple[int, ...], ...]

    @classmethod
    def of(cls, blocks) -> "SetPartition":
        canon = sorted((tuple(sorted(b)) for b in blocks), key=lambda b: b[0])
        seen = [x for b in canon for x in b]
        if any(len(b) == 0 for b in canon) or len(seen) != len(set(seen)):
            raise ValueError(f"blocks {blocks} are not disjoint and nonempty")
        return cls(tuple(canon))

    @property
    def ground(self) -> frozenset:
        return frozenset(x for b in self.blocks for x in b)

    def __len__(self):
        return len(self.blocks)

    def masks(self) -> tuple[int, ...]:
        return tuple(sum(1 << x for x in b) for b in self.blocks)

    def refines(self, other: "SetPartition") -> bool:
        """self <= other: every block of self lies inside a block of other."""
        if self.ground != other.ground:
            return False
        outer = other.masks()
        return all(any(m & ~o == 0 for o in outer) for m in self.masks())


def _restricted_growth(elements: Sequence[int]) -> Iterator[tuple[tuple[int, ...], ...]]:
    n = len(elements)
    if n == 0:
        yield ()
        return
    codes = [0] * n
    while True:
        blocks: list[list[int]] = []
        for e, c in zip(elements, codes):
            if c == len(blocks):
                blocks.append([])
            blocks[c].append(e)
        yield tuple(tuple(b) for b in blocks)
        # next restricted growth string: codes[i] <= 1 + max(codes[:i])
        i = n - 1
        while i > 0:
            if codes[i] <= max(codes[:i]):
                codes[i] += 1
                for j in range(i + 1, n):
                    codes[j] = 0
                break
            i -= 1
        else:
            return


def partitions_of(k: int) -> Iterator[SetPartition]:
    """Every partition of {0, ..., k-1} once, in restricted-growth-string order."""
    if not 1 <= k <= MAX_K:
        raise ValueError(f"k must be in 1..{MAX_K}, got {k}")
    for blocks in _restricted_growth(list(range(k))):
        yield SetPartition(blocks)


def mask_partitions(mask: int) -> Iterator[tuple[int, ...]]:
    """Partitions of the elements of ``mask``, each as a tuple of block masks."""
    elements = [i for i in range(mask.bit_length()) if mask >> i & 1]
    for blocks in _restricted_growth(elements):
        yield tuple(sum(1 << x for x in b) for b in blocks)


def moebius_partition(b: SetPartition, a: SetPartition) -> int:
    """
    mu(B, A) = prod_i (-1)^(n_i - 1) (n_i - 1)!, where n_i counts the blocks
    of B inside the i-th block of A; zero unless B refines A.
    """
    if not b.refines(a):
        return 0
    inner = b.masks()
    value = 1
    for outer in a.masks():
        n = sum(1 for m in inner if m & ~outer == 0)
        value *= (-1) ** (n - 1) * math.factorial(n - 1)
    return value


@dataclass(frozen=True)
class MomentTable:
    """
    A value for every nonempty subset of {0, ..., k-1}, keyed by bitmask.

    Values are stored as given, so any ring elements (floats, fractions,
    symbols) go through the transforms unchanged.
    """

    k: int
    values: Mapping[int, float]

    def __post_init__(self):
        if not 1 <= self.k <= MAX_K:
            raise ValueError(f"k must be in 1..{MAX_K}, got {self.k}")
        missing = [m for m in range(1, 1 << self.k) if m not in self.values]
        if missing:
            raise ValueError(f"table lacks {len(missing)} subsets, e.g. {missing[0]:#b}")
        object.__setattr__(self, "values", {m: self.values[m] for m in range(1, 1 << self.k)})

    def __getitem__(self, mask: int):
        return self.values[mask]

    @property
    def full(self) -> int:
        return (1 << self.k) - 1


def correlations_from_moments(moments: MomentTable) -> MomentTable:
    out = {}
    for a in range(1, 1 << moments.k):
        total = 0.0
        for blocks in mask_partitions(a):
            p = len(blocks)
            total += (-1) ** (p - 1) * math.factorial(p - 1) * math.prod(moments[m] for m in blocks)
        out[a] = total
    return MomentTable(moments.k, out)


def moments_from_correlations(corr: MomentTable) -> MomentTable:
    out = {}
    for a in range(1, 1 << corr.k):
        out[a] = sum(math.prod(corr[m] for m in blocks) for blocks in mask_partitions(a))
    return MomentTable(corr.k, out)


def _sorted_sites(omega: SignedMeasure, sites: Sequence[int], values: Sequence[int], allow_gaps: bool):
    pairs = sorted(zip((int(s) for s in sites), (int(v) for v in values), strict=True))
    if not pairs:
        raise ValueError("need at least one site")
    site_list = [s for s, _ in pairs]
    if len(set(site_list)) != len(site_list):
        raise ValueError(f"repeated site in {site_list}")
    for s in site_list:
        omega.space.check_site(s)
    if site_list != list(range(site_list[0], site_list[-1] + 1)):
        if not allow_gaps:
            raise ValueError(
                f"sites {site_list} have gaps; the correlation equals the linkage "
                "disequilibrium only for gap-free spans"
            )
        warnings.warn(f"sites {site_list} have gaps; no linkage-disequilibrium identity applies", stacklevel=3)
    return pairs


def site_moments(omega: SignedMeasure, sites: Sequence[int], values: Sequence[int],
                 kind: str = "kpoint", allow_gaps: bool = False) -> MomentTable:
    """
    Moment table over the chosen (site, value) pairs.

    ``kind="kpoint"`` uses T_G(omega) on each sub-cylinder, G being the
    links outside the whole span; ``kind="cylinder"`` uses the plain cylinder
    masses omega(<S'>).
    """
    pairs = _sorted_sites(omega, sites, values, allow_gaps)
    k = len(pairs)
    if kind == "kpoint":
        cuts = span_links(omega.space, pairs[0][0], pairs[-1][0])
        source = t_operator(omega, cuts)
    elif kind == "cylinder":
        source = omega
    else:
        raise ValueError(f"unknown moment kind {kind!r}")
    table = {}
    for mask in range(1, 1 << k):
        chosen = {pairs[i][0]: pairs[i][1] for i in range(k) if mask >> i & 1}
        table[mask] = cylinder_value(source, Cylinder.of(chosen))
    return MomentTable(k, table)


def site_correlation(omega: SignedMeasure, sites: Sequence[int], values: Sequence[int],
                     kind: str = "kpoint", allow_gaps: bool = False) -> float:
    """k-point correlation of the cylinder with ``values`` at ``sites``."""
    table = site_moments(omega, sites, values, kind, allow_gaps)
    return correlations_from_moments(table)[table.full]
