"""
Per-site mutation generators and the tensor-product Markov semigroup.

Generators follow the column convention: ``q[k, l]`` is the rate l -> k,
so columns sum to zero and the matrix acts on column probability vectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .measure import Measure, SignedMeasure
from .type_space import TypeSpace

OFFDIAG_TOL = 1e-12
COLSUM_TOL = 1e-10


class GeneratorError(ValueError):
    pass


def expm(a: np.ndarray) -> np.ndarray:
    """
    Matrix exponential by scaling and squaring with a Taylor series.

    The matrix is scaled by 2**-s until its 1-norm is at most 0.5, the
    series is summed until terms stop contributing, and the result is
    squared s times.
    """
    a = np.asarray(a, dtype=float)
    norm = np.abs(a).sum(axis=0).max() if a.size else 0.0
    s = 0
    if norm > 0.5:
        s = int(math.ceil(math.log2(norm / 0.5)))
    scaled = a / 2.0 ** s
    result = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, 40):
        term = term @ scaled / k
        result = result + term
        if np.abs(term).max() <= 1e-17 * max(1.0, np.abs(result).max()):
            break
    for _ in range(s):
        result = result @ result
    return result


def is_irreducible(matrix: np.ndarray) -> bool:
    """Strong connectivity of the digraph of positive off-diagonal entries."""
    m = matrix.shape[0]
    adj = (np.asarray(matrix) > 0).astype(int)
    np.fill_diagonal(adj, 1)
    reach = adj.copy()
    for _ in range(max(1, math.ceil(math.log2(m)))):
        reach = np.minimum(reach @ reach, 1)
    return bool(reach.all())


@dataclass(frozen=True)
class SiteGenerator:
    site: int
    matrix: np.ndarray = field(repr=False)
    scale: float = 1.0
    irreducible: bool = False

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def rate_matrix(self) -> np.ndarray:
        return self.scale * self.matrix


def validate_generator(matrix, site: int = 0, scale: float = 1.0) -> SiteGenerator:
    """
    Check and normalize a rate matrix.

    Off-diagonal entries down to -1e-12 are clamped to zero; column sums off
    by at most 1e-10 are absorbed into the diagonal.
    """
    q = np.array(matrix, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise GeneratorError(f"site {site}: generator must be square, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise GeneratorError(f"site {site}: generator has non-finite entries")
    scale = float(scale)
    if not scale >= 0:
        raise GeneratorError(f"site {site}: mutation scale must be nonnegative, got {scale}")
    m = q.shape[0]
    off = ~np.eye(m, dtype=bool)
    for col in range(m):
        bad = [row for row in range(m) if row != col and q[row, col] < -OFFDIAG_TOL]
        if bad:
            raise GeneratorError(
                f"site {site}: column {col} has negative off-diagonal rate {q[bad[0], col]:.3g} "
                f"at row {bad[0]}"
            )
    q[off & (q < 0)] = 0.0
    sums = q.sum(axis=0)
    for col in range(m):
        if abs(sums[col]) > COLSUM_TOL:
            raise GeneratorError(f"site {site}: column {col} sums to {sums[col]:.3g}, not 0")
    q[np.diag_indices(m)] -= sums
    q.flags.writeable = False
    return SiteGenerator(site, q, scale, is_irreducible(q))


def site_semigroup(g: SiteGenerator, t: float) -> np.ndarray:
    """exp(t * scale * q) for one site; tiny negative round-off is clamped to 0."""
    t = float(t)
    if not t >= 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    p = expm(t * g.rate_matrix)
    p[(p < 0) & (p >= -1e-12)] = 0.0
    return p


def stationary_vector(matrix: np.ndarray) -> np.ndarray:
    """Normalized kernel vector of a generator (irreducible case)."""
    m = matrix.shape[0]
    # replace one balance equation by the normalization constraint
    a = np.array(matrix, dtype=float)
    a[-1, :] = 1.0
    rhs = np.zeros(m)
    rhs[-1] = 1.0
    v = np.linalg.solve(a, rhs)
    return np.clip(v, 0.0, None) / np.clip(v, 0.0, None).sum()


@dataclass(frozen=True)
class MutationModel:
    generators: tuple[SiteGenerator, ...]

    @classmethod
    def from_matrices(cls, matrices: Sequence, scales: Sequence[float] | None = None) -> "MutationModel":
        if scales is None:
            scales = [1.0] * len(matrices)
        return cls(tuple(validate_generator(q, i, mu) for i, (q, mu) in enumerate(zip(matrices, scales, strict=True))))

    @classmethod
    def zero(cls, space: TypeSpace) -> "MutationModel":
        return cls(tuple(validate_generator(np.zeros((m, m)), i) for i, m in enumerate(space.cardinalities)))

    def check_space(self, space: TypeSpace) -> None:
        if tuple(g.size for g in self.generators) != space.cardinalities:
            raise ValueError(
                f"mutation generators of sizes {[g.size for g in self.generators]} "
                f"do not match site cardinalities {list(space.cardinalities)}"
            )


def apply_axis(w: np.ndarray, mat: np.ndarray, axis: int) -> np.ndarray:
    """Multiply a tensor by ``mat`` along one axis."""
    return np.moveaxis(np.tensordot(mat, w, axes=([1], [axis])), 0, axis)


def apply_site_matrices(w: np.ndarray, mats: Sequence[np.ndarray]) -> np.ndarray:
    """Apply the Kronecker product of per-site matrices without forming it."""
    for axis, mat in enumerate(mats):
        w = apply_axis(w, mat, axis)
    return w


def sum_site_matrices(w: np.ndarray, mats: Sequence[np.ndarray]) -> np.ndarray:
    """Apply sum_i (1 x ... x mats[i] x ... x 1)."""
    out = np.zeros_like(w)
    for axis, mat in enumerate(mats):
        out += apply_axis(w, mat, axis)
    return out


def apply_semigroup(model: MutationModel, t: float, omega: SignedMeasure) -> SignedMeasure:
    model.check_space(omega.space)
    w = apply_site_matrices(omega.weights, [site_semigroup(g, t) for g in model.generators])
    return (Measure if isinstance(omega, Measure) else SignedMeasure)(omega.space, w)


def mutation_rhs(model: MutationModel, omega: SignedMeasure) -> SignedMeasure:
    model.check_space(omega.space)
    w = sum_site_matrices(omega.weights, [g.rate_matrix for g in model.generators])
    return SignedMeasure(omega.space, w)
