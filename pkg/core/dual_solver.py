"""
Exact solver for the penalized inner maximization

    max_{q ∈ P(σ)}  qᵀl − ν D_f(q ‖ 1/n)

over the permutahedron P(σ), by sorting the losses, running pool adjacent
violators on the isotonic dual, and converting the dual solution back to q.
The sorted order is maintained incrementally by bubbling a single changed entry.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import xlogy

from . import constants as const
from .errors import (
    DataError,
    IndexOutOfRangeError,
    NumericalError,
    ParameterError,
    PreconditionError,
    SizeError,
)
from .models import Spectrum


class Divergence(ABC):
    """An f-divergence D_f(q‖1/n) = (1/n) Σ f(nqᵢ) together with its PAV pooling rule."""

    name: str

    @abstractmethod
    def conjugate(self, y: np.ndarray) -> np.ndarray:
        """f*(y)."""

    @abstractmethod
    def conjugate_grad(self, y: np.ndarray) -> np.ndarray:
        """[f*]′(y); nondecreasing."""

    @abstractmethod
    def penalty(self, q: np.ndarray) -> float:
        """D_f(q‖1/n)."""

    @abstractmethod
    def penalty_grad(self, q: np.ndarray) -> np.ndarray:
        """Gradient of D_f(·‖1/n) at q."""

    @abstractmethod
    def strong_convexity(self, n: int) -> float:
        """Modulus αₙ of f on [0, n]."""

    @abstractmethod
    def pool(self, losses: Sequence[float], sigma: Sequence[float], nu: float) -> Tuple[List[float], List[int]]:
        """Runs PAV over sorted losses, returning block values and block sizes."""

    def exact_step(self, q, direction, grad, losses, nu) -> float:
        """Step in [0, 1] maximizing the penalized objective along q + γ·direction."""
        result = minimize_scalar(
            lambda gamma: -primal_value(q + gamma * direction, losses, nu, self),
            bounds=(0.0, 1.0),
            method="bounded",
            options={"xatol": 1e-12},
        )
        return float(result.x)

    def __repr__(self) -> str:
        return f"Divergence({self.name!r})"


class Chi2Divergence(Divergence):
    """f(x) = x² − 1, f*(y) = y²/4 + 1."""

    name = "chi2"

    def conjugate(self, y):
        return y ** 2 / 4.0 + 1.0

    def conjugate_grad(self, y):
        return y / 2.0

    def penalty(self, q):
        n = q.size
        return float(n * np.dot(q, q) - 1.0)

    def penalty_grad(self, q):
        return 2.0 * q.size * q

    def strong_convexity(self, n):
        return 2.0

    def pool(self, losses, sigma, nu):
        n = len(losses)
        scale = 2.0 * n * nu
        values, sizes, loss_sums, sigma_sums = [], [], [], []
        for loss, weight in zip(losses, sigma):
            loss_sum, sigma_sum, size = loss, weight, 1
            value = loss - scale * weight
            while values and values[-1] >= value:
                values.pop()
                loss_sum += loss_sums.pop()
                sigma_sum += sigma_sums.pop()
                size += sizes.pop()
                value = (loss_sum - scale * sigma_sum) / size
            values.append(value)
            sizes.append(size)
            loss_sums.append(loss_sum)
            sigma_sums.append(sigma_sum)
        return values, sizes

    def exact_step(self, q, direction, grad, losses, nu):
        curvature = 2.0 * nu * q.size * float(np.dot(direction, direction))
        if curvature <= 0.0:
            return 0.0
        return min(1.0, max(0.0, float(np.dot(direction, grad)) / curvature))


class KLDivergence(Divergence):
    """f(x) = x ln x, f*(y) = exp(y − 1)."""

    name = "kl"

    def conjugate(self, y):
        return np.exp(y - 1.0)

    def conjugate_grad(self, y):
        return np.exp(y - 1.0)

    def penalty(self, q):
        return float(np.sum(xlogy(q, q.size * q)))

    def penalty_grad(self, q):
        with np.errstate(divide="ignore"):
            return np.log(q.size * q) + 1.0

    def strong_convexity(self, n):
        return 1.0 / n

    def pool(self, losses, sigma, nu):
        log_n = math.log(len(losses))
        values, sizes, log_masses, log_weights = [], [], [], []
        for loss, weight in zip(losses, sigma):
            # a zero-weight block has log-weight -inf, so its value is +inf and it always pools upward
            log_mass = loss / nu
            log_weight = math.log(weight) if weight > 0.0 else -math.inf
            size = 1
            value = nu * (log_mass - log_weight - log_n - 1.0)
            while values and values[-1] >= value:
                values.pop()
                log_mass = float(np.logaddexp(log_masses.pop(), log_mass))
                log_weight = float(np.logaddexp(log_weights.pop(), log_weight))
                size += sizes.pop()
                value = nu * (log_mass - log_weight - log_n - 1.0)
            values.append(value)
            sizes.append(size)
            log_masses.append(log_mass)
            log_weights.append(log_weight)
        return values, sizes


CHI2 = Chi2Divergence()
KL = KLDivergence()
DIVERGENCES = {CHI2.name: CHI2, KL.name: KL}


def get_divergence(name: str) -> Divergence:
    try:
        return DIVERGENCES[name]
    except KeyError:
        raise ParameterError(f"Unknown divergence '{name}'. Must be one of {sorted(DIVERGENCES)}.") from None


@dataclass
class SortedLossTable:
    """Loss values with a maintained stable argsort `perm` and its inverse `rank`."""

    values: np.ndarray
    perm: np.ndarray
    rank: np.ndarray

    @property
    def n(self) -> int:
        return int(self.values.size)

    def sorted_values(self) -> np.ndarray:
        return self.values[self.perm]


def build_sorted_table(losses: Sequence[float]) -> SortedLossTable:
    """Builds a table with a stable full sort; ties are ordered by original index."""
    values = np.array(losses, dtype=float).reshape(-1)
    if values.size == 0:
        raise SizeError("Loss table needs at least one entry.")
    if not np.all(np.isfinite(values)):
        raise DataError("Loss table entries must be finite.")
    perm = np.argsort(values, kind="stable")
    rank = np.empty_like(perm)
    rank[perm] = np.arange(values.size)
    return SortedLossTable(values=values, perm=perm, rank=rank)


def update_entry(table: SortedLossTable, j: int, value: float) -> int:
    """
    Sets values[j] = value and restores the sort by bubbling entry j only.

    Returns:
        The number of adjacent transpositions performed.

    Raises:
        IndexOutOfRangeError: If j is not a valid index.
    """
    n = table.n
    if not 0 <= j < n:
        raise IndexOutOfRangeError(f"Index {j} out of range for a table of size {n}.")
    value = float(value)
    values, perm, rank = table.values, table.perm, table.rank
    values[j] = value
    pos = int(rank[j])
    swaps = 0

    while pos > 0:
        k = perm[pos - 1]
        if values[k] > value or (values[k] == value and k > j):
            perm[pos] = k
            rank[k] = pos
            pos -= 1
            swaps += 1
        else:
            break

    while pos < n - 1:
        k = perm[pos + 1]
        if values[k] < value or (values[k] == value and k < j):
            perm[pos] = k
            rank[k] = pos
            pos += 1
            swaps += 1
        else:
            break

    perm[pos] = j
    rank[j] = pos
    return swaps


def _check_shift_cost(nu: float) -> None:
    if not nu > 0:
        raise ParameterError(f"Shift cost ν must be positive, got {nu}.")


def pav(sorted_losses: Sequence[float], spectrum: Spectrum, nu: float, divergence: Divergence) -> np.ndarray:
    """
    Solves min Σᵢ σᵢcᵢ + (ν/n) f*((lᵢ − cᵢ)/ν) subject to c₁ ≤ … ≤ cₙ by pool adjacent violators.

    Raises:
        ParameterError: If ν ≤ 0.
        PreconditionError: If the losses are not sorted.
    """
    _check_shift_cost(nu)
    losses = np.asarray(sorted_losses, dtype=float).reshape(-1)
    if losses.size != spectrum.n:
        raise SizeError(f"{losses.size} losses for a spectrum of size {spectrum.n}.")
    scale = const.SORTED_REL_TOL * max(1.0, float(np.max(np.abs(losses))))
    if not np.all(np.diff(losses) >= -scale):
        raise PreconditionError("PAV input must be sorted in nondecreasing order.")
    return _pav(losses, spectrum, nu, divergence)


def _pav(losses: np.ndarray, spectrum: Spectrum, nu: float, divergence: Divergence) -> np.ndarray:
    values, sizes = divergence.pool(losses.tolist(), spectrum.weights.tolist(), nu)
    return np.repeat(np.asarray(values, dtype=float), sizes)


def most_adverse_weights(
    table: SortedLossTable, spectrum: Spectrum, nu: float, divergence: Divergence
) -> np.ndarray:
    """
    Returns q = argmax_{q ∈ P(σ)} qᵀl − νD_f(q‖1/n) for the losses in the table.

    Raises:
        ParameterError: If ν ≤ 0.
        NumericalError: If the converted weights come out negative beyond round-off.
    """
    _check_shift_cost(nu)
    n = table.n
    if spectrum.n != n:
        raise SizeError(f"Table of size {n} against a spectrum of size {spectrum.n}.")
    if spectrum.is_uniform:
        # P(σ) is the single point σ
        return spectrum.weights.copy()

    losses = table.sorted_values()
    c = _pav(losses, spectrum, nu, divergence)
    weights = np.empty(n)
    weights[table.perm] = divergence.conjugate_grad((losses - c) / nu) / n
    if weights.min() < -const.WEIGHTS_NEGATIVE_TOL:
        raise NumericalError(f"Converted weights are negative (min {weights.min():.3e}).")
    return weights


def primal_value(weights: np.ndarray, losses: np.ndarray, nu: float, divergence: Divergence) -> float:
    """qᵀl − νD_f(q‖1/n)."""
    return float(np.dot(weights, losses) - nu * divergence.penalty(weights))


def dual_objective(
    sorted_losses: np.ndarray, c: np.ndarray, spectrum: Spectrum, nu: float, divergence: Divergence
) -> float:
    """Σᵢ σᵢcᵢ + (ν/n) f*((l₍ᵢ₎ − cᵢ)/ν); blocks at c = +∞ contribute zero."""
    n = spectrum.n
    finite = np.isfinite(c)
    sigma = spectrum.weights[finite]
    c = c[finite]
    losses = np.asarray(sorted_losses, dtype=float)[finite]
    terms = sigma * c + (nu / n) * divergence.conjugate((losses - c) / nu)
    return float(terms.sum())


def risk_value(table: SortedLossTable, spectrum: Spectrum, nu: float, divergence: Divergence) -> float:
    """Penalized spectral risk of the tabled losses; the plain L-estimator Σσᵢl₍ᵢ₎ when ν = 0."""
    if nu < 0:
        raise ParameterError(f"Shift cost ν must be nonnegative, got {nu}.")
    if nu == 0:
        return float(np.dot(spectrum.weights, table.sorted_values()))
    weights = most_adverse_weights(table, spectrum, nu, divergence)
    return primal_value(weights, table.values, nu, divergence)


def check_adversarial_weights(weights: np.ndarray, spectrum: Spectrum, atol: float = const.WEIGHTS_SUM_TOL) -> None:
    """Raises NumericalError unless q is a probability vector inside P(σ)."""
    weights = np.asarray(weights, dtype=float)
    if abs(weights.sum() - 1.0) > atol:
        raise NumericalError(f"Weights sum to {weights.sum()!r}, not one.")
    if weights.min() < -const.WEIGHTS_NEGATIVE_TOL:
        raise NumericalError(f"Weights have a negative entry {weights.min()!r}.")
    top_weights = np.cumsum(np.sort(weights)[::-1])
    top_sigma = np.cumsum(spectrum.weights[::-1])
    if np.any(top_weights > top_sigma + atol):
        raise NumericalError("Weights lie outside the permutahedron P(σ).")


def _linear_maximizer(direction: np.ndarray, spectrum: Spectrum) -> np.ndarray:
    """argmax_{q ∈ P(σ)} qᵀg: σ sorted against g, averaged over tied entries of g."""
    n = spectrum.n
    order = np.argsort(direction, kind="stable")
    ordered = direction[order]
    starts = np.concatenate(([0], np.flatnonzero(np.diff(ordered) != 0) + 1))
    counts = np.diff(np.append(starts, n))
    means = np.add.reduceat(spectrum.weights, starts) / counts
    vertex = np.empty(n)
    vertex[order] = np.repeat(means, counts)
    return vertex


def fw_reference_weights(
    losses: Sequence[float],
    spectrum: Spectrum,
    nu: float,
    divergence: Divergence,
    iters: int,
    step_rule: str = "open_loop",
) -> np.ndarray:
    """
    Frank-Wolfe on the penalized objective over P(σ), started at the uniform vector.

    A brute-force reference for tests. `step_rule` is "open_loop" (γₜ = 2/(t+2),
    t starting at one so iterates stay in the relative interior) or "line_search".
    """
    _check_shift_cost(nu)
    if iters < 1:
        raise ParameterError(f"Frank-Wolfe needs at least one iteration, got {iters}.")
    if step_rule not in ("open_loop", "line_search"):
        raise ParameterError(f"Unknown step rule '{step_rule}'.")
    losses = np.asarray(losses, dtype=float)
    n = spectrum.n
    weights = np.full(n, 1.0 / n)
    for t in range(1, iters + 1):
        grad = losses - nu * divergence.penalty_grad(weights)
        direction = _linear_maximizer(grad, spectrum) - weights
        if step_rule == "open_loop":
            gamma = 2.0 / (t + 2.0)
        else:
            gamma = divergence.exact_step(weights, direction, grad, losses, nu)
        weights = weights + gamma * direction
    return weights


def frank_wolfe_gap(
    weights: np.ndarray, losses: Sequence[float], spectrum: Spectrum, nu: float, divergence: Divergence
) -> float:
    """max_{p ∈ P(σ)} ⟨∇h(q), p − q⟩, an upper bound on the optimality gap of q."""
    losses = np.asarray(losses, dtype=float)
    grad = losses - nu * divergence.penalty_grad(weights)
    return float(np.dot(grad, _linear_maximizer(grad, spectrum) - weights))


def penalized_euclidean_projection(z: Sequence[float], spectrum: Spectrum, strength: float) -> np.ndarray:
    """
    argmin_{q ∈ P(σ)} (strength/2)‖q − 1/n‖² + (1/2)‖q − z‖².

    Completing the square reduces this to the Euclidean projection of
    u = (z + strength/n)/(1 + strength) onto P(σ), which is the χ² inner
    problem with losses u and shift cost 1/(2n).
    """
    if not strength > 0:
        raise ParameterError(f"Projection strength must be positive, got {strength}.")
    n = spectrum.n
    target = (np.asarray(z, dtype=float) + strength / n) / (1.0 + strength)
    return most_adverse_weights(build_sorted_table(target), spectrum, 1.0 / (2.0 * n), CHI2)
