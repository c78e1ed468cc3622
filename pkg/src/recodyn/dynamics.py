"""
The full mutation-recombination-selection equation: closed-form solver,
fixed-step RK4 reference integrator, equilibria and the discrete-time
complete-interference map.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .measure import Measure, SignedMeasure
from .mutation import MutationModel, apply_axis, expm, is_irreducible, sum_site_matrices
from .recombination import (
    CoefficientTable,
    RecombinationRates,
    coefficient_table,
    recombined_stack,
    superset_moebius,
)
from .selection import FitnessModel, MeanFitnessTrace, selection_rhs_array
from .type_space import TypeSpace

CLAMP_TOL = 1e-10


class IntegrationError(RuntimeError):
    def __init__(self, message: str, time: float):
        super().__init__(f"{message} at t = {time:.6g}")
        self.time = time


class NumericalError(RuntimeError):
    pass


class ClosedFormWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """
    Everything that determines a run.  ``crossover_probs`` holds
    per-generation crossover probabilities for the discrete-time map and is
    kept apart from the continuous rates in ``rates``.
    """

    space: TypeSpace
    rates: RecombinationRates
    initial: Measure
    mutation: MutationModel | None = None
    fitness: FitnessModel | None = None
    crossover_probs: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.rates.n_links != self.space.n_links:
            raise ValueError(f"{self.rates.n_links} recombination rates for {self.space.n_links} links")
        if self.initial.space.cardinalities != self.space.cardinalities:
            raise ValueError("initial measure lives on a different type space")
        if not isinstance(self.initial, Measure):
            raise ValueError("initial measure must be positive")
        if not self.initial.mass() > 0:
            raise ValueError("initial measure must have positive mass")
        if self.mutation is not None:
            self.mutation.check_space(self.space)
        if self.fitness is not None:
            self.fitness.check_space(self.space)
        if self.crossover_probs is not None:
            probs = tuple(float(p) for p in self.crossover_probs)
            if len(probs) != self.space.n_links:
                raise ValueError(f"{len(probs)} crossover probabilities for {self.space.n_links} links")
            object.__setattr__(self, "crossover_probs", probs)

    def mutation_matrices(self) -> list[np.ndarray]:
        if self.mutation is None:
            return [np.zeros((m, m)) for m in self.space.cardinalities]
        return [g.rate_matrix for g in self.mutation.generators]

    def site_operators(self) -> list[np.ndarray]:
        """s_i = mu_i q_i + diag(r_i) for every site."""
        ops = self.mutation_matrices()
        if self.fitness is not None:
            ops = [q + np.diag(r) for q, r in zip(ops, self.fitness.site_fitness)]
        return ops

    def with_initial(self, initial: Measure) -> "ModelSpec":
        return ModelSpec(self.space, self.rates, initial, self.mutation, self.fitness, self.crossover_probs)


@dataclass
class Trajectory:
    space: TypeSpace
    times: np.ndarray
    weights: np.ndarray  # shape (len(times), |X|)
    coefficients: list[CoefficientTable] | None = None
    mean_fitness: MeanFitnessTrace | None = None
    eta_norms: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.times)

    def state(self, i: int) -> Measure:
        return Measure(self.space, self.weights[i])

    @property
    def states(self) -> list[Measure]:
        return [self.state(i) for i in range(len(self))]

    def masses(self) -> np.ndarray:
        return self.weights.sum(axis=1)


# -- right-hand side ---------------------------------------------------------

DENSE_LIMIT = 1024


class _FullRHS:
    """
    Array-level right-hand side with the bookkeeping done once.

    For spaces up to DENSE_LIMIT states the linear part and all link
    marginals are precomputed as dense matrices, which keeps the number of
    numpy calls per evaluation independent of the number of links.
    """

    def __init__(self, model: ModelSpec):
        shape = model.space.shape
        size = model.space.total_size
        self.shape = shape
        self.splits = [math.prod(shape[: i + 1]) for i in range(model.space.n_links)]
        self.rho = np.asarray(model.rates.rho, dtype=float)
        self.mats = None if model.mutation is None else model.mutation_matrices()
        self.fitness = None if model.fitness is None else model.fitness.fitness.reshape(-1)
        self.dense = size <= DENSE_LIMIT
        if self.dense:
            self._build_dense(size)

    def _build_dense(self, size: int) -> None:
        linear = -self.rho.sum() * np.eye(size)
        if self.mats is not None:
            for j in range(size):
                e = np.zeros(size)
                e[j] = 1.0
                linear[:, j] += sum_site_matrices(e.reshape(self.shape), self.mats).reshape(-1)
        self.linear = linear
        rows, left_idx, right_idx = [], [], []
        flat = np.arange(size)
        offset = 0
        for left in self.splits:
            right = size // left
            rows.append(np.kron(np.eye(left), np.ones(right)))
            rows.append(np.kron(np.ones(left), np.eye(right)))
            left_idx.append(offset + flat // right)
            right_idx.append(offset + left + flat % right)
            offset += left + right
        if rows:
            self.marginals = np.vstack(rows)
            self.left_idx = np.array(left_idx)
            self.right_idx = np.array(right_idx)

    def __call__(self, w: np.ndarray) -> np.ndarray:
        """``w`` is flat."""
        norm = np.abs(w).sum()
        if self.dense:
            out = self.linear @ w
            if self.rho.size and norm > 0.0:
                m = self.marginals @ w
                out += self.rho @ (m[self.left_idx] * m[self.right_idx]) / norm
        else:
            out = np.zeros_like(w)
            if norm > 0.0:
                for rho, left in zip(self.rho, self.splits):
                    w2 = w.reshape(left, -1)
                    rec = np.outer(w2.sum(axis=1), w2.sum(axis=0)).reshape(-1) / norm
                    out += rho * (rec - w)
            if self.mats is not None:
                out += sum_site_matrices(w.reshape(self.shape), self.mats).reshape(-1)
        if self.fitness is not None:
            out += selection_rhs_array(self.fitness, w)
        return out


def full_rhs(model: ModelSpec, omega: SignedMeasure) -> SignedMeasure:
    """Mutation + sum_alpha rho_alpha (R_alpha - 1) + selection, evaluated at ``omega``."""
    return SignedMeasure(model.space, _FullRHS(model)(omega.weights.reshape(-1)))


def _time_grid(times) -> np.ndarray:
    grid = np.asarray(times, dtype=float).reshape(-1)
    if grid.size == 0:
        raise ValueError("time grid is empty")
    if grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be nonnegative and strictly increasing")
    return grid


def integrate_rk4(model: ModelSpec, t_end: float, dt: float = 1e-3, times: Sequence[float] | None = None) -> Trajectory:
    """
    Classical RK4 with a fixed step, starting from ``model.initial`` at t = 0.

    Without ``times`` every step is recorded.  With ``times`` the states are
    recorded at those instants; each gap between samples is split into equal
    steps no longer than ``dt``.  Mass is not renormalized; negative entries
    down to -1e-10 are zeroed.
    """
    dt = float(dt)
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    t_end = float(t_end)
    if not t_end >= 0:
        raise ValueError(f"t_end must be nonnegative, got {t_end}")
    if times is None:
        n = int(math.ceil(t_end / dt - 1e-9))
        grid = np.linspace(0.0, t_end, n + 1) if n else np.array([0.0])
    else:
        grid = _time_grid(times)
        if grid[-1] > t_end + 1e-12:
            raise ValueError("sample times extend beyond t_end")
    f = _FullRHS(model)
    w = model.initial.weights.reshape(-1).astype(float)
    out = np.empty((len(grid), w.size))
    t = 0.0
    # overflow shows up as a non-finite state and is reported below
    with np.errstate(over="ignore", invalid="ignore"):
        for k, target in enumerate(grid):
            gap = target - t
            n = int(math.ceil(gap / dt - 1e-9)) if gap > 0 else 0
            h = gap / n if n else 0.0
            for _ in range(n):
                k1 = f(w)
                k2 = f(w + 0.5 * h * k1)
                k3 = f(w + 0.5 * h * k2)
                k4 = f(w + h * k3)
                w = w + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                t += h
                if not np.all(np.isfinite(w)):
                    raise IntegrationError("non-finite state", t)
                w[(w < 0) & (w >= -CLAMP_TOL)] = 0.0
            t = target
            out[k] = w
    return Trajectory(model.space, grid, out)


# -- closed form -------------------------------------------------------------

def closed_form_exact(model: ModelSpec, recombined: np.ndarray | None = None, tol: float = 1e-12) -> bool:
    """
    Whether the combined closed form solves the full equation for this model:
    no selection, constant fitness at every site, or a complete product
    initial measure.
    """
    if model.fitness is None or all(np.ptp(r) == 0 for r in model.fitness.site_fitness):
        return True
    if recombined is None:
        recombined = recombined_stack(model.initial)
    w0 = model.initial.weights.reshape(-1)
    return bool(np.abs(recombined[-1] - w0).max() <= tol * np.abs(w0).sum())


class CombinedFlow:
    """
    Closed-form solution of the full equation.

    eta_t = exp(tS) sum_G a_G(t) R_G(omega_0) with S acting site by site, and
    omega_t = |omega_0| eta_t / |eta_t|.

    The formula needs exp(tS) to commute with every R_alpha.  That holds when
    each site factor has constant column sums, i.e. when every fitness vector
    is constant, and trivially when omega_0 is a complete product measure.
    Otherwise selection and recombination do not commute and the result is
    only an approximation; ``exact`` is False and a warning is issued.
    """

    def __init__(self, model: ModelSpec):
        self.model = model
        self.norm0 = model.initial.variation_norm()
        self.recombined = recombined_stack(model.initial)
        self.site_ops = model.site_operators()
        self.trivial_sites = all(not np.any(s) for s in self.site_ops)
        self.exact = closed_form_exact(model, self.recombined)
        if not self.exact:
            warnings.warn(
                "non-constant fitness with a linked initial measure: exp(tS) does not commute "
                "with recombination, so the closed form is not an exact solution",
                ClosedFormWarning,
                stacklevel=2,
            )

    def eta(self, t: float) -> tuple[np.ndarray, CoefficientTable]:
        table = coefficient_table(t, self.model.rates)
        mix = (table.a @ self.recombined).reshape(self.model.space.shape)
        if not self.trivial_sites:
            for axis, s in enumerate(self.site_ops):
                mix = apply_axis(mix, expm(t * s), axis)
        return mix.reshape(-1), table

    def at(self, t: float) -> Measure:
        return Measure(self.model.space, self._normalized(t)[0])

    def _normalized(self, t: float):
        eta, table = self.eta(t)
        eta_norm = float(np.abs(eta).sum())
        if not eta_norm > 0:
            raise NumericalError(f"|eta_t| = {eta_norm} at t = {t}")
        if self.trivial_sites:
            # pure recombination preserves the norm; skip the round-off of rescaling
            return eta, table, eta_norm
        return eta * (self.norm0 / eta_norm), table, eta_norm

    def trajectory(self, times: Sequence[float]) -> Trajectory:
        grid = _time_grid(times)
        weights = np.empty((len(grid), self.model.space.total_size))
        tables = []
        norms = np.empty(len(grid))
        for k, t in enumerate(grid):
            weights[k], table, norms[k] = self._normalized(t)
            tables.append(table)
        trace = None
        if self.model.fitness is not None:
            fit = self.model.fitness.fitness.reshape(-1)
            trace = MeanFitnessTrace(
                tuple(grid.tolist()),
                tuple(float(fit @ w / np.abs(w).sum()) for w in weights),
            )
        return Trajectory(self.model.space, grid, weights, tables, trace, norms)


def solve_combined(model: ModelSpec, times: Sequence[float]) -> Trajectory:
    return CombinedFlow(model).trajectory(times)


# -- decay of the T-operators ------------------------------------------------

@dataclass(frozen=True)
class DecayReport:
    cuts: int
    times: np.ndarray
    residuals: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max()) if self.residuals.size else 0.0


def t_decay_rate(model: ModelSpec, cuts: int, trajectory: Trajectory) -> DecayReport:
    """
    Compare a central-difference derivative of T_G(omega_t) with
    (S - L(t) - sum of rates outside G) T_G(omega_t) at interior grid points.
    """
    if len(trajectory) < 3:
        raise ValueError("t_decay_rate needs at least 3 time points")
    space = model.space
    space.check_mask(cuts)
    tvals = np.array([_t_row(w, space, cuts) for w in trajectory.weights])
    mats = model.mutation_matrices()
    fit = None if model.fitness is None else model.fitness.fitness
    decay = model.rates.outside(cuts)
    times = trajectory.times
    residuals = []
    for i in range(1, len(times) - 1):
        deriv = (tvals[i + 1] - tvals[i - 1]) / (times[i + 1] - times[i - 1])
        tg = tvals[i].reshape(space.shape)
        pred = sum_site_matrices(tg, mats) - decay * tg
        if fit is not None:
            w = trajectory.weights[i]
            mean = float(fit.reshape(-1) @ w / np.abs(w).sum())
            pred = pred + (fit - mean) * tg
        residuals.append(np.abs(deriv - pred.reshape(-1)).max())
    return DecayReport(cuts, times[1:-1], np.asarray(residuals))


def _t_row(w: np.ndarray, space: TypeSpace, cuts: int) -> np.ndarray:
    stack = recombined_stack(SignedMeasure(space, w))
    return superset_moebius(stack)[cuts]


# -- equilibria --------------------------------------------------------------

def perron_vector(op: np.ndarray, tau: float = 1.0, tol: float = 1e-12, max_iter: int = 100_000) -> np.ndarray:
    """Normalized dominant positive eigenvector via power iteration on exp(tau * op)."""
    step = expm(tau * np.asarray(op, dtype=float))
    v = np.full(step.shape[0], 1.0 / step.shape[0])
    for _ in range(max_iter):
        nxt = step @ v
        nxt /= nxt.sum()
        if np.abs(nxt - v).max() < tol:
            return nxt
        v = nxt
    raise NumericalError(f"power iteration did not converge in {max_iter} iterations")


def site_equilibria(model: ModelSpec) -> list[np.ndarray]:
    out = []
    for i, s in enumerate(model.site_operators()):
        if not is_irreducible(s):
            warnings.warn(
                f"site {i} operator is reducible; the limit may depend on the initial measure",
                RuntimeWarning,
                stacklevel=3,
            )
        out.append(perron_vector(s))
    return out


def equilibrium(model: ModelSpec) -> Measure:
    """
    Complete product of the per-site Perron vectors, scaled to the mass of
    the initial measure.
    """
    factors = site_equilibria(model)
    w = factors[0]
    for f in factors[1:]:
        w = np.multiply.outer(w, f)
    return Measure(model.space, model.initial.mass() * w)


# -- discrete time -----------------------------------------------------------

def discrete_interference_step(model: ModelSpec, omega: Measure) -> Measure:
    """
    One generation of single crossover with complete interference:
    w' = sum_alpha p_alpha R_alpha(w) + (1 - sum_alpha p_alpha) w.
    """
    probs = model.crossover_probs
    if probs is None:
        raise ValueError("model has no per-generation crossover probabilities")
    if any(p < 0 for p in probs) or sum(probs) > 1.0 + 1e-12:
        raise ValueError(f"crossover probabilities {probs} must be nonnegative with sum <= 1")
    w = omega.weights.reshape(-1)
    shape = omega.space.shape
    norm = np.abs(w).sum()
    out = (1.0 - sum(probs)) * w
    if norm > 0:
        for i, p in enumerate(probs):
            left = math.prod(shape[: i + 1])
            w2 = w.reshape(left, -1)
            out = out + p * np.outer(w2.sum(axis=1), w2.sum(axis=0)).reshape(-1) / norm
    return Measure(omega.space, out)


def iterate_interference(model: ModelSpec, generations: int) -> np.ndarray:
    """States after 0..generations steps, shape (generations + 1, |X|)."""
    omega = model.initial
    out = [omega.weights.reshape(-1).copy()]
    for _ in range(int(generations)):
        omega = discrete_interference_step(model, omega)
        out.append(omega.weights.reshape(-1).copy())
    return np.array(out)
