"""
Full-batch evaluation of F_σ(w) = R_σ(ℓ(w)) + (μ/2)‖w‖², its Danskin gradient,
and the high-precision reference minimizer used to measure suboptimality.
"""

import logging
import math
from typing import Optional, Tuple, Union

import numpy as np
from scipy.optimize import minimize

from . import constants as const
from .dual_solver import Divergence, build_sorted_table, get_divergence, most_adverse_weights, risk_value
from .errors import ConvergenceError, DegenerateError, NonSmoothError, ParameterError, SizeError
from .losses import LossOracle
from .models import Spectrum

logger = logging.getLogger(__name__)


class Objective:
    """
    Spectral risk objective over a fixed loss oracle.

    `oracle_calls` counts every (ℓᵢ, ∇ℓᵢ) evaluation made through the full-batch
    functions below; optimizers keep their own counters.
    """

    def __init__(
        self,
        oracle: LossOracle,
        spectrum: Spectrum,
        shift_cost: float = const.DEFAULT_SHIFT_COST,
        penalty: Optional[float] = None,
        divergence: Union[str, Divergence] = "chi2",
    ):
        if spectrum.n != oracle.n:
            raise SizeError(f"Spectrum of size {spectrum.n} for {oracle.n} examples.")
        if shift_cost < 0:
            raise ParameterError(f"Shift cost ν must be nonnegative, got {shift_cost}.")
        penalty = 1.0 / oracle.n if penalty is None else penalty
        if penalty < 0:
            raise ParameterError(f"Regularization μ must be nonnegative, got {penalty}.")
        self.oracle = oracle
        self.spectrum = spectrum
        self.shift_cost = float(shift_cost)
        self.penalty = float(penalty)
        self.divergence = get_divergence(divergence) if isinstance(divergence, str) else divergence
        self.oracle_calls = 0

    @property
    def n(self) -> int:
        return self.oracle.n

    @property
    def dim(self) -> int:
        return self.oracle.dim

    def zeros(self) -> np.ndarray:
        return np.zeros(self.dim)

    def __repr__(self) -> str:
        return (
            f"Objective(n={self.n}, dim={self.dim}, spectrum={self.spectrum.family}({self.spectrum.param}), "
            f"shift_cost={self.shift_cost}, penalty={self.penalty}, divergence={self.divergence.name})"
        )


def full_objective(obj: Objective, w: np.ndarray) -> float:
    """F_σ(w); costs n oracle calls."""
    losses = obj.oracle.values(w)
    obj.oracle_calls += obj.n
    risk = risk_value(build_sorted_table(losses), obj.spectrum, obj.shift_cost, obj.divergence)
    return risk + 0.5 * obj.penalty * float(w @ w)


def objective_and_gradient(obj: Objective, w: np.ndarray) -> Tuple[float, np.ndarray]:
    """F_σ(w) and ∇F_σ(w) = Σᵢ qᵢ∇ℓᵢ(w) + μw from one pass over the data."""
    if obj.shift_cost == 0:
        raise NonSmoothError("F_σ is not differentiable without a shift penalty (ν = 0).")
    losses = obj.oracle.values(w)
    obj.oracle_calls += obj.n
    table = build_sorted_table(losses)
    weights = most_adverse_weights(table, obj.spectrum, obj.shift_cost, obj.divergence)
    risk = float(weights @ losses) - obj.shift_cost * obj.divergence.penalty(weights)
    value = risk + 0.5 * obj.penalty * float(w @ w)
    gradient = obj.oracle.weighted_gradient(w, weights) + obj.penalty * w
    return value, gradient


def full_gradient(obj: Objective, w: np.ndarray) -> np.ndarray:
    """
    Danskin gradient of F_σ at w; costs n oracle calls.

    Raises:
        NonSmoothError: If the objective has no shift penalty.
    """
    return objective_and_gradient(obj, w)[1]


def reference_minimizer(
    obj: Objective,
    tol: float = const.REFERENCE_TOL,
    w0: Optional[np.ndarray] = None,
    max_iter: int = const.REFERENCE_MAX_ITER,
) -> np.ndarray:
    """
    Minimizes F_σ to gradient norm `tol`.

    L-BFGS does the bulk of the work; gradient descent with a gradient-norm
    backtracking rule polishes the result when L-BFGS stops on a line-search
    failure before reaching the tolerance.

    Raises:
        ParameterError: If ν or μ is not positive.
        ConvergenceError: If `max_iter` iterations do not reach the tolerance.
    """
    if obj.shift_cost <= 0 or obj.penalty <= 0:
        raise ParameterError("The reference solve needs a positive shift cost and a positive regularization.")
    w = obj.zeros() if w0 is None else np.array(w0, dtype=float)
    value, grad = objective_and_gradient(obj, w)
    if np.linalg.norm(grad) <= tol:
        return w

    result = minimize(
        lambda x: objective_and_gradient(obj, x),
        w,
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iter, "gtol": tol / math.sqrt(obj.dim), "ftol": 0.0, "maxcor": 20},
    )
    w = result.x
    value, grad = objective_and_gradient(obj, w)
    grad_norm = float(np.linalg.norm(grad))
    iterations = int(result.nit)
    logger.debug("L-BFGS stopped after %d iterations at gradient norm %.3e: %s", iterations, grad_norm, result.message)

    step = 1.0
    previous = None
    while grad_norm > tol:
        if iterations >= max_iter:
            raise ConvergenceError(
                f"Reference solve stopped at gradient norm {grad_norm:.3e} > {tol:.1e} after {iterations} iterations."
            )
        if previous is not None:
            # Barzilai-Borwein initial step
            dw, dg = w - previous[0], grad - previous[1]
            curvature = float(dw @ dg)
            if curvature > 0:
                step = float(dw @ dw) / curvature
        while True:
            candidate = w - step * grad
            cand_value, cand_grad = objective_and_gradient(obj, candidate)
            cand_norm = float(np.linalg.norm(cand_grad))
            if cand_norm < grad_norm:
                break
            step *= 0.5
            if step < 1e-20:
                raise ConvergenceError(f"Reference solve stalled at gradient norm {grad_norm:.3e}.")
        previous = (w, grad)
        w, value, grad, grad_norm = candidate, cand_value, cand_grad, cand_norm
        iterations += 1

    logger.info("Reference solve finished: F*=%.17g, gradient norm %.3e, %d iterations", value, grad_norm, iterations)
    return w


def suboptimality(value: float, initial_value: float, optimal_value: float) -> float:
    """
    (F(w) − F*)/(F(w⁰) − F*), reported as-is even when slightly negative.

    Raises:
        DegenerateError: If F(w⁰) ≤ F*, where the ratio is meaningless.
    """
    gap = initial_value - optimal_value
    if not gap > 0:
        raise DegenerateError(f"Initial objective {initial_value!r} does not exceed the optimum {optimal_value!r}.")
    return (value - optimal_value) / gap
