"""
Stochastic optimizers for spectral risk objectives.

Every optimizer is a pair of functions: `<name>_init(obj, w0, lr, seed, ...)`
returns a state that owns its iterate, tables and random stream, and
`<name>_step(state)` advances it by one iteration in place. `state.oracle_calls`
counts every (ℓᵢ, ∇ℓᵢ) or prox evaluation, initialization included, so
`state.passes` is the x-axis of every convergence curve.
"""

import logging
import zlib
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from . import constants as const
from .dual_solver import (
    CHI2,
    SortedLossTable,
    build_sorted_table,
    most_adverse_weights,
    penalized_euclidean_projection,
    update_entry,
)
from .errors import CapabilityError, ParameterError
from .losses import LossOracle, regularize
from .models import Spectrum
from .objective import Objective, full_gradient
from .spectra import make_spectrum

logger = logging.getLogger(__name__)

STORAGE_MODES = ("auto", "dense", "glm")
DUAL_RULES = ("equal", "search_dual", "heuristic")


def make_rng(seed: int, stream: str) -> np.random.Generator:
    """Independent, reproducible generator for one (seed, stream name) pair."""
    key = zlib.crc32(stream.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


# --- Gradient tables ---


class GradientTable(ABC):
    """n stored gradient records g₁ … gₙ."""

    n: int

    @abstractmethod
    def row(self, i: int) -> np.ndarray:
        """The stored gradient gᵢ (may be a view; do not mutate)."""

    @abstractmethod
    def store(self, i: int, gradient: np.ndarray, scalar, w: np.ndarray) -> None:
        """Replaces gᵢ by `gradient`, the gradient with GLM scalar `scalar` taken at `w`."""

    @abstractmethod
    def weighted_sum(self, weights: np.ndarray) -> np.ndarray:
        """Σᵢ weightsᵢ gᵢ."""

    def rows(self) -> np.ndarray:
        return np.stack([self.row(i) for i in range(self.n)])


class DenseGradientTable(GradientTable):
    def __init__(self, rows: np.ndarray):
        self.data = np.array(rows, dtype=float)
        self.n = self.data.shape[0]

    def row(self, i):
        return self.data[i]

    def store(self, i, gradient, scalar, w):
        self.data[i] = gradient

    def weighted_sum(self, weights):
        return self.data.T @ weights

    def rows(self):
        return self.data.copy()


class GLMGradientTable(GradientTable):
    """
    Compact records gᵢ = xᵢ ⊗ sᵢ + μ zᵢ for generalized linear losses.

    Only the scalar (or C-vector) sᵢ is kept per example; the iterate snapshots zᵢ
    carrying the ridge term are kept only when μ > 0.
    """

    def __init__(self, oracle: LossOracle, scalars: np.ndarray, penalty: float, w: np.ndarray):
        self.oracle = oracle
        self.features = oracle.features
        self.scalars = np.array(scalars, dtype=float)
        self.n = self.scalars.shape[0]
        self.penalty = penalty
        self.snapshots = np.tile(w, (self.n, 1)) if penalty > 0 else None

    def row(self, i):
        gradient = self.oracle.expand(self.features[i], self.scalars[i])
        if self.snapshots is None:
            return gradient
        return gradient + self.penalty * self.snapshots[i]

    def store(self, i, gradient, scalar, w):
        self.scalars[i] = scalar
        if self.snapshots is not None:
            self.snapshots[i] = w

    def weighted_sum(self, weights):
        if self.scalars.ndim == 1:
            total = self.features.T @ (weights * self.scalars)
        else:
            total = ((self.scalars * weights[:, None]).T @ self.features).reshape(-1)
        if self.snapshots is not None:
            total = total + self.penalty * (self.snapshots.T @ weights)
        return total


def build_gradient_table(oracle: LossOracle, w: np.ndarray, penalty: float, storage: str = "auto") -> GradientTable:
    """Table of ∇ℓᵢ(w) + μw for every i; "auto" picks the compact form when the loss is a GLM."""
    if storage not in STORAGE_MODES:
        raise ParameterError(f"Unknown gradient storage '{storage}'. Must be one of {STORAGE_MODES}.")
    if storage == "glm" and not oracle.has_glm:
        raise CapabilityError(f"{type(oracle).__name__} has no GLM form for compact storage.")
    if storage == "glm" or (storage == "auto" and oracle.has_glm):
        return GLMGradientTable(oracle, oracle.glm_scalars(w), penalty, w)
    return DenseGradientTable(oracle.gradients(w) + penalty * w)


# --- States ---


@dataclass(kw_only=True)
class OptimizerState:
    objective: Objective
    w: np.ndarray
    lr: float
    rng: np.random.Generator
    oracle_calls: int = 0
    steps: int = 0
    last_direction: Optional[np.ndarray] = None

    @property
    def passes(self) -> float:
        return self.oracle_calls / self.objective.n


@dataclass(kw_only=True)
class ProspectState(OptimizerState):
    table: SortedLossTable
    grads: GradientTable
    weights: np.ndarray
    rho: np.ndarray
    gbar: np.ndarray
    decoupled: bool = False
    variance_reduction: bool = True


@dataclass(kw_only=True)
class MoreauState(OptimizerState):
    oracle: LossOracle
    table: SortedLossTable
    grads: DenseGradientTable
    weights: np.ndarray
    gbar: np.ndarray
    decoupled: bool = False


@dataclass(kw_only=True)
class SGDState(OptimizerState):
    batch_size: int
    batch_spectrum: Spectrum


@dataclass(kw_only=True)
class SRDAState(SGDState):
    mean_gradient: np.ndarray


@dataclass(kw_only=True)
class LSVRGState(OptimizerState):
    checkpoint: np.ndarray
    anchors: GradientTable
    checkpoint_weights: np.ndarray
    checkpoint_gradient: np.ndarray
    epoch_length: int
    storage: str = "auto"
    since_checkpoint: int = 0


@dataclass(kw_only=True)
class SaddleSAGAState(OptimizerState):
    losses: np.ndarray
    grads: GradientTable
    weights: np.ndarray
    rho: np.ndarray
    gbar: np.ndarray
    dual_lr: float
    dual_rule: str


def _check_stochastic(obj: Objective, lr: float) -> None:
    if not obj.shift_cost > 0:
        raise ParameterError("Stochastic optimizers need a positive shift cost ν.")
    if lr < 0:
        raise ParameterError(f"Learning rate must be nonnegative, got {lr}.")


def _adverse_weights(obj: Objective, table: SortedLossTable) -> np.ndarray:
    return most_adverse_weights(table, obj.spectrum, obj.shift_cost, obj.divergence)


def aggregate_error(state) -> float:
    """max |ḡ − Σᵢ ρᵢgᵢ|, with ρ = q for the Moreau variant; a debug check on table maintenance."""
    rho = getattr(state, "rho", None)
    rho = state.weights if rho is None else rho
    return float(np.max(np.abs(state.gbar - state.grads.weighted_sum(rho))))


# --- Prospect ---


def prospect_init(
    obj: Objective,
    w0: np.ndarray,
    lr: float,
    seed: int,
    decoupled: bool = False,
    storage: str = "auto",
    variance_reduction: bool = True,
) -> ProspectState:
    """Fills the loss and gradient tables at w₀ and sets q = ρ = q^opt(ℓ(w₀)); n oracle calls."""
    _check_stochastic(obj, lr)
    w = np.array(w0, dtype=float)
    table = build_sorted_table(obj.oracle.values(w))
    grads = build_gradient_table(obj.oracle, w, obj.penalty, storage)
    weights = _adverse_weights(obj, table)
    rho = weights.copy()
    logger.debug("Prospect initialized: %r, lr=%g, seed=%d, %s", obj, lr, seed, type(grads).__name__)
    return ProspectState(
        objective=obj,
        w=w,
        lr=lr,
        rng=make_rng(seed, "prospect"),
        oracle_calls=obj.n,
        table=table,
        grads=grads,
        weights=weights,
        rho=rho,
        gbar=grads.weighted_sum(rho),
        decoupled=decoupled,
        variance_reduction=variance_reduction,
    )


def prospect_step(state: ProspectState) -> ProspectState:
    """
    One Prospect iteration.

    The shared index i drives the iterate update, the loss-table refresh and the
    gradient-table refresh (one oracle call); its loss and gradient are recorded
    at the iterate the step started from. In decoupled mode a second, independent
    index j refreshes the loss table at the new iterate instead (two oracle calls).
    The direction uses the weights from before the refresh; ḡ and ρᵢ take the
    refreshed qᵢ.
    """
    obj = state.objective
    n = obj.n
    w = state.w
    i = int(state.rng.integers(n))
    value, grad, scalar = obj.oracle.evaluate(i, w)
    state.oracle_calls += 1
    reg = grad + obj.penalty * w
    q_i = state.weights[i]

    if state.variance_reduction:
        direction = n * q_i * reg - n * state.rho[i] * state.grads.row(i) + state.gbar
    else:
        direction = n * q_i * reg
    state.w = w - state.lr * direction

    # bias reducer
    if state.decoupled:
        j = int(state.rng.integers(n))
        update_entry(state.table, j, obj.oracle.value(j, state.w))
        state.oracle_calls += 1
    else:
        update_entry(state.table, i, value)
    state.weights = _adverse_weights(obj, state.table)

    # variance reducer
    if state.variance_reduction:
        q_new = state.weights[i]
        state.gbar = state.gbar - state.rho[i] * state.grads.row(i) + q_new * reg
        state.grads.store(i, reg, scalar, w)
        state.rho[i] = q_new

    state.last_direction = direction
    state.steps += 1
    return state


# --- Prospect-Moreau ---


def _sample_index(rng: np.random.Generator, weights: np.ndarray) -> int:
    """Draws i with probability weightsᵢ by inverting the prefix sums; one uniform draw."""
    cumulative = np.cumsum(weights)
    index = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
    return min(index, weights.size - 1)


def prospect_moreau_init(
    obj: Objective, w0: np.ndarray, lr: float, seed: int, decoupled: bool = False
) -> MoreauState:
    """Prospect on the Moreau envelopes of the regularized losses; needs a prox oracle and η > 0."""
    _check_stochastic(obj, lr)
    if not lr > 0:
        raise ParameterError(f"Prospect-Moreau needs a positive learning rate, got {lr}.")
    if not obj.oracle.has_prox:
        raise CapabilityError(f"{type(obj.oracle).__name__} has no proximal operator.")
    w = np.array(w0, dtype=float)
    table = build_sorted_table(obj.oracle.values(w))
    grads = DenseGradientTable(obj.oracle.gradients(w) + obj.penalty * w)
    weights = _adverse_weights(obj, table)
    return MoreauState(
        objective=obj,
        w=w,
        lr=lr,
        rng=make_rng(seed, "prospect_moreau"),
        oracle_calls=obj.n,
        oracle=regularize(obj.oracle, obj.penalty),
        table=table,
        grads=grads,
        weights=weights,
        gbar=grads.weighted_sum(weights),
        decoupled=decoupled,
    )


def _moreau_refresh(state: MoreauState, j: int, anchor: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Prox of η·rⱼ at anchor = w + η(gⱼ − ḡ); stores the envelope gradient (anchor − prox)/η
    in gⱼ and ℓⱼ at the prox point in lⱼ. One prox-oracle call.
    """
    obj = state.objective
    point, value = state.oracle.prox_with_value(j, anchor, state.lr)
    state.oracle_calls += 1
    state.grads.store(j, (anchor - point) / state.lr, None, point)
    update_entry(state.table, j, value - 0.5 * obj.penalty * float(point @ point))
    return point, value


def prospect_moreau_step(state: MoreauState) -> MoreauState:
    """
    w ← prox_{ηrᵢ}(w + η(gᵢ − ḡ)) with i ∼ q.

    By default the sampled i also refreshes gᵢ and lᵢ at the new iterate (one prox
    call). With decoupled=True the step is taken with i alone and an independent
    j ∼ q refreshes gⱼ and lⱼ from its own anchor (two prox calls).
    """
    w = state.w
    i = _sample_index(state.rng, state.weights)
    anchor = w + state.lr * (state.grads.row(i) - state.gbar)
    if state.decoupled:
        new_w, _ = state.oracle.prox_with_value(i, anchor, state.lr)
        state.oracle_calls += 1
        j = _sample_index(state.rng, state.weights)
        _moreau_refresh(state, j, w + state.lr * (state.grads.row(j) - state.gbar))
    else:
        new_w, _ = _moreau_refresh(state, i, anchor)

    state.last_direction = (w - new_w) / state.lr
    state.w = new_w
    state.weights = _adverse_weights(state.objective, state.table)
    state.gbar = state.grads.weighted_sum(state.weights)
    state.steps += 1
    return state


# --- Minibatch baselines ---


def _batch_state_args(obj: Objective, lr: float, batch_size: int) -> Spectrum:
    _check_stochastic(obj, lr)
    if not 1 <= batch_size <= obj.n:
        raise ParameterError(f"Batch size must lie in [1, n={obj.n}], got {batch_size}.")
    return make_spectrum(obj.spectrum.family, obj.spectrum.param, batch_size)


def _batch_risk_gradient(state: SGDState) -> np.ndarray:
    """Plug-in gradient Σ_{i∈B} q̂ᵢ∇ℓᵢ(w) of the spectral risk of a sampled batch (no ridge)."""
    obj = state.objective
    batch = state.rng.choice(obj.n, size=state.batch_size, replace=False)
    losses = obj.oracle.values(state.w, batch)
    state.oracle_calls += state.batch_size
    weights = most_adverse_weights(
        build_sorted_table(losses), state.batch_spectrum, obj.shift_cost, obj.divergence
    )
    return obj.oracle.weighted_gradient(state.w, weights, batch)


def sgd_init(
    obj: Objective, w0: np.ndarray, lr: float, seed: int, batch_size: int = const.DEFAULT_BATCH_SIZE
) -> SGDState:
    batch_spectrum = _batch_state_args(obj, lr, batch_size)
    return SGDState(
        objective=obj,
        w=np.array(w0, dtype=float),
        lr=lr,
        rng=make_rng(seed, "sgd"),
        batch_size=batch_size,
        batch_spectrum=batch_spectrum,
    )


def sgd_step(state: SGDState) -> SGDState:
    """w ← w − η(Σ_{i∈B} q̂ᵢ∇ℓᵢ(w) + μw); biased for any skewed spectrum when m < n."""
    direction = _batch_risk_gradient(state) + state.objective.penalty * state.w
    state.w = state.w - state.lr * direction
    state.last_direction = direction
    state.steps += 1
    return state


def srda_update(mean_gradient: np.ndarray, penalty: float, lr: float, t: int) -> np.ndarray:
    """Dual-averaging iterate −ḡₜ/(μ + 1/(ηt))."""
    return -mean_gradient / (penalty + 1.0 / (lr * t))


def srda_init(
    obj: Objective, w0: np.ndarray, lr: float, seed: int, batch_size: int = const.DEFAULT_BATCH_SIZE
) -> SRDAState:
    batch_spectrum = _batch_state_args(obj, lr, batch_size)
    if not obj.penalty > 0:
        raise ParameterError("SRDA needs a positive regularization μ.")
    if not lr > 0:
        raise ParameterError(f"SRDA needs a positive learning rate, got {lr}.")
    return SRDAState(
        objective=obj,
        w=np.array(w0, dtype=float),
        lr=lr,
        rng=make_rng(seed, "srda"),
        batch_size=batch_size,
        batch_spectrum=batch_spectrum,
        mean_gradient=np.zeros(obj.dim),
    )


def srda_step(state: SRDAState) -> SRDAState:
    gradient = _batch_risk_gradient(state)
    t = state.steps + 1
    state.mean_gradient = state.mean_gradient + (gradient - state.mean_gradient) / t
    state.w = srda_update(state.mean_gradient, state.objective.penalty, state.lr, t)
    state.last_direction = gradient
    state.steps = t
    return state


# --- LSVRG ---


def _refresh_checkpoint(state: LSVRGState) -> None:
    obj = state.objective
    w = state.w
    table = build_sorted_table(obj.oracle.values(w))
    state.checkpoint = w.copy()
    state.checkpoint_weights = _adverse_weights(obj, table)
    state.anchors = build_gradient_table(obj.oracle, w, 0.0, state.storage)
    state.checkpoint_gradient = state.anchors.weighted_sum(state.checkpoint_weights)
    state.oracle_calls += obj.n
    state.since_checkpoint = 0


def lsvrg_init(
    obj: Objective,
    w0: np.ndarray,
    lr: float,
    seed: int,
    epoch_length: Optional[int] = None,
    storage: str = "auto",
) -> LSVRGState:
    """SVRG with the weights q̄ frozen at the checkpoint; the checkpoint moves every `epoch_length` steps (n by default)."""
    _check_stochastic(obj, lr)
    epoch_length = obj.n if epoch_length is None else epoch_length
    if epoch_length < 1:
        raise ParameterError(f"Epoch length must be positive, got {epoch_length}.")
    w = np.array(w0, dtype=float)
    state = LSVRGState(
        objective=obj,
        w=w,
        lr=lr,
        rng=make_rng(seed, "lsvrg"),
        checkpoint=w.copy(),
        anchors=DenseGradientTable(np.zeros((obj.n, obj.dim))),
        checkpoint_weights=np.full(obj.n, 1.0 / obj.n),
        checkpoint_gradient=np.zeros(obj.dim),
        epoch_length=epoch_length,
        storage=storage,
    )
    _refresh_checkpoint(state)
    return state


def lsvrg_step(state: LSVRGState) -> LSVRGState:
    obj = state.objective
    n = obj.n
    i = int(state.rng.integers(n))
    _, grad, _ = obj.oracle.evaluate(i, state.w)
    state.oracle_calls += 1
    direction = (
        n * state.checkpoint_weights[i] * (grad - state.anchors.row(i))
        + state.checkpoint_gradient
        + obj.penalty * state.w
    )
    state.w = state.w - state.lr * direction
    state.last_direction = direction
    state.steps += 1
    state.since_checkpoint += 1
    if state.since_checkpoint >= state.epoch_length:
        _refresh_checkpoint(state)
    return state


# --- SaddleSAGA ---


def saddle_saga_init(
    obj: Objective,
    w0: np.ndarray,
    lr: float,
    seed: int,
    dual_rule: str = "heuristic",
    dual_lr: Optional[float] = None,
    storage: str = "auto",
) -> SaddleSAGAState:
    """
    Primal-dual SAGA on min_w max_q qᵀℓ(w) + (μ/2)‖w‖² − νD_χ²(q‖1/n).

    The dual step δ is η under "equal", the given `dual_lr` under "search_dual",
    and η/(10n) under "heuristic".
    """
    _check_stochastic(obj, lr)
    if obj.divergence is not CHI2:
        raise ParameterError("SaddleSAGA supports only the chi2 divergence.")
    n = obj.n
    if dual_rule == "equal":
        dual_lr = lr
    elif dual_rule == "search_dual":
        if dual_lr is None or not dual_lr > 0:
            raise ParameterError("The search_dual rule needs a positive dual_lr.")
    elif dual_rule == "heuristic":
        dual_lr = lr / (const.DUAL_RATE_DIVISOR * n)
    else:
        raise ParameterError(f"Unknown dual learning-rate rule '{dual_rule}'. Must be one of {DUAL_RULES}.")

    w = np.array(w0, dtype=float)
    losses = obj.oracle.values(w)
    grads = build_gradient_table(obj.oracle, w, 0.0, storage)
    weights = _adverse_weights(obj, build_sorted_table(losses))
    rho = weights.copy()
    return SaddleSAGAState(
        objective=obj,
        w=w,
        lr=lr,
        rng=make_rng(seed, "saddlesaga"),
        oracle_calls=n,
        losses=losses,
        grads=grads,
        weights=weights,
        rho=rho,
        gbar=grads.weighted_sum(rho),
        dual_lr=float(dual_lr),
        dual_rule=dual_rule,
    )


def saddle_saga_step(state: SaddleSAGAState) -> SaddleSAGAState:
    """
    Primal SAGA step followed by the ridge prox, then a projected ascent step on q
    along π = l + n(ℓᵢ(w) − lᵢ)eᵢ, an unbiased estimate of ℓ(w).
    """
    obj = state.objective
    n = obj.n
    w = state.w
    i = int(state.rng.integers(n))
    value, grad, scalar = obj.oracle.evaluate(i, w)
    state.oracle_calls += 1
    q_i = state.weights[i]

    direction = n * q_i * grad - n * state.rho[i] * state.grads.row(i) + state.gbar
    state.w = (w - state.lr * direction) / (1.0 + state.lr * obj.penalty)

    ascent = state.losses.copy()
    ascent[i] += n * (value - state.losses[i])
    strength = state.dual_lr * 2.0 * n * obj.shift_cost
    new_weights = penalized_euclidean_projection(state.weights + state.dual_lr * ascent, obj.spectrum, strength)

    state.gbar = state.gbar - state.rho[i] * state.grads.row(i) + q_i * grad
    state.grads.store(i, grad, scalar, w)
    state.rho[i] = q_i
    state.losses[i] = value
    state.weights = new_weights
    state.last_direction = direction
    state.steps += 1
    return state


# --- Full-batch gradient descent ---


def gd_init(obj: Objective, w0: np.ndarray, lr: float, seed: int) -> OptimizerState:
    _check_stochastic(obj, lr)
    return OptimizerState(objective=obj, w=np.array(w0, dtype=float), lr=lr, rng=make_rng(seed, "gd"))


def gd_step(state: OptimizerState) -> OptimizerState:
    """w ← w − η∇F_σ(w); n oracle calls."""
    direction = full_gradient(state.objective, state.w)
    state.oracle_calls += state.objective.n
    state.w = state.w - state.lr * direction
    state.last_direction = direction
    state.steps += 1
    return state


OPTIMIZERS: Dict[str, Tuple[Callable, Callable]] = {
    "prospect": (prospect_init, prospect_step),
    "prospect_moreau": (prospect_moreau_init, prospect_moreau_step),
    "sgd": (sgd_init, sgd_step),
    "srda": (srda_init, srda_step),
    "lsvrg": (lsvrg_init, lsvrg_step),
    "saddlesaga": (saddle_saga_init, saddle_saga_step),
    "gd": (gd_init, gd_step),
}
