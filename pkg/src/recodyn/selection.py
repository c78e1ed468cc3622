"""
Additive selection: P = sum_i P_i with each p_i = diag(r_i).

The haploid right-hand side is P w - (P w(X) / |w|) w; the diploid form
without dominance gives the same flow on positive measures.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .measure import Measure, SignedMeasure
from .type_space import TypeSpace


@dataclass(frozen=True)
class FitnessModel:
    """Per-site reproduction rates r_i (length M_i each)."""

    site_fitness: tuple[np.ndarray, ...]
    fitness: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rates = []
        for i, r in enumerate(self.site_fitness):
            r = np.array(r, dtype=float).reshape(-1)
            if not np.all(np.isfinite(r)):
                raise ValueError(f"site {i}: fitness values must be finite")
            r.flags.writeable = False
            rates.append(r)
        object.__setattr__(self, "site_fitness", tuple(rates))
        total = np.zeros(tuple(len(r) for r in rates))
        for axis, r in enumerate(rates):
            shape = [1] * len(rates)
            shape[axis] = len(r)
            total = total + r.reshape(shape)
        total.flags.writeable = False
        object.__setattr__(self, "fitness", total)

    @classmethod
    def zero(cls, space: TypeSpace) -> "FitnessModel":
        return cls(tuple(np.zeros(m) for m in space.cardinalities))

    @property
    def strictly_positive(self) -> bool:
        """Whether every p_i is strictly positive (needed for the Lyapunov guarantee)."""
        return all(bool(np.all(r > 0)) for r in self.site_fitness)

    def check_space(self, space: TypeSpace) -> None:
        if self.fitness.shape != space.shape:
            raise ValueError(
                f"fitness vectors of lengths {[len(r) for r in self.site_fitness]} "
                f"do not match site cardinalities {list(space.cardinalities)}"
            )

    def site_diagonals(self) -> list[np.ndarray]:
        return [np.diag(r) for r in self.site_fitness]


def apply_fitness(model: FitnessModel, omega: SignedMeasure) -> SignedMeasure:
    model.check_space(omega.space)
    return SignedMeasure(omega.space, model.fitness * omega.weights)


def selection_rhs_array(fitness: np.ndarray, w: np.ndarray) -> np.ndarray:
    norm = np.abs(w).sum()
    if norm == 0.0:
        return np.zeros_like(w)
    pw = fitness * w
    return pw - (pw.sum() / norm) * w


def selection_rhs(model: FitnessModel, omega: SignedMeasure) -> SignedMeasure:
    model.check_space(omega.space)
    return SignedMeasure(omega.space, selection_rhs_array(model.fitness, omega.weights))


def marginalize_second(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """M(mu x nu) = nu(X) mu."""
    return second.sum() * first


def diploid_rhs(model: FitnessModel, omega: SignedMeasure) -> SignedMeasure:
    """Diploid selection without dominance, built from the marginalization M."""
    model.check_space(omega.space)
    w = omega.weights
    norm = np.abs(w).sum()
    if norm == 0.0:
        raise ValueError("the diploid equation is undefined at the zero measure")
    pw = model.fitness * w
    paired = marginalize_second(w, pw) + marginalize_second(pw, w)
    return SignedMeasure(omega.space, paired / norm - (paired.sum() / norm ** 2) * w)


def mean_fitness(model: FitnessModel, omega: SignedMeasure) -> float:
    """P w(X) / |w|."""
    model.check_space(omega.space)
    norm = omega.variation_norm()
    if norm == 0.0:
        raise ValueError("mean fitness is undefined at the zero measure")
    return float((model.fitness * omega.weights).sum() / norm)


def fitness_variance(model: FitnessModel, omega: SignedMeasure) -> float:
    """P^2 p(X) - (P p(X))^2 with p = w / |w|; the time derivative of the mean fitness."""
    model.check_space(omega.space)
    p = omega.weights / omega.variation_norm()
    first = float((model.fitness * p).sum())
    second = float((model.fitness ** 2 * p).sum())
    return second - first ** 2


@dataclass(frozen=True)
class MeanFitnessTrace:
    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise ValueError("times and values differ in length")
        if not all(np.isfinite(self.values)):
            raise ValueError("mean fitness trace has non-finite values")

    def worst_drop(self) -> float:
        """Largest decrease between consecutive samples (0 if nondecreasing)."""
        v = np.asarray(self.values)
        if len(v) < 2:
            return 0.0
        return float(max(0.0, -(np.diff(v).min())))

    def is_nondecreasing(self, tol: float = 1e-10) -> bool:
        return self.worst_drop() <= tol


def mean_fitness_trace(model: FitnessModel, times: Sequence[float], states: Sequence[SignedMeasure]) -> MeanFitnessTrace:
    return MeanFitnessTrace(tuple(float(t) for t in times), tuple(mean_fitness(model, s) for s in states))


def thompson_factor(model: FitnessModel, times: Sequence[float], states: Sequence[Measure]) -> float:
    """
    exp((1/|w_0|) * integral of P w_tau(X) dtau) over the stored grid.

    The integral uses the trapezoid rule, so accuracy follows the grid.
    """
    if len(states) == 0 or len(times) != len(states):
        raise ValueError("thompson_factor needs a nonempty trajectory with matching times")
    norm0 = states[0].variation_norm()
    if norm0 == 0.0:
        raise ValueError("initial state has zero norm")
    values = np.array([(model.fitness * s.weights).sum() for s in states])
    integral = float(np.trapezoid(values, np.asarray(times, dtype=float))) if len(states) > 1 else 0.0
    return float(np.exp(integral / norm0))
