from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import constants as const

SpectrumFamily = Literal["cvar", "extremile", "esrm", "erm"]
Task = Literal["regression", "binary", "multiclass"]
DivergenceName = Literal["chi2", "kl"]
SpectrumPreset = Literal["default", "hard"]


class ArrayModel(BaseModel):
    """Frozen model holding numpy arrays; arrays are copied and made read-only."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @staticmethod
    def _freeze(array: np.ndarray) -> np.ndarray:
        array = np.array(array, copy=True)
        array.setflags(write=False)
        return array


class Spectrum(ArrayModel):
    """Sorted nonnegative weights σ₁ ≤ … ≤ σₙ summing to one."""

    family: SpectrumFamily = Field(..., description="Spectral risk family")
    param: Optional[float] = Field(None, description="Family parameter (p, b or γ); unused for erm")
    weights: np.ndarray = Field(..., description="Spectrum σ, one entry per order statistic")

    @field_validator("weights", mode="before")
    @classmethod
    def _as_vector(cls, value):
        return cls._freeze(np.asarray(value, dtype=float).reshape(-1))

    @model_validator(mode="after")
    def _check_invariants(self):
        sigma = self.weights
        if sigma.size == 0:
            raise ValueError("spectrum must have at least one entry")
        if not np.all(np.isfinite(sigma)):
            raise ValueError("spectrum entries must be finite")
        if np.any(sigma < 0):
            raise ValueError("spectrum entries must be nonnegative")
        if np.any(np.diff(sigma) < -const.SPECTRUM_SUM_TOL):
            raise ValueError("spectrum must be nondecreasing")
        if abs(sigma.sum() - 1.0) > const.SPECTRUM_SUM_TOL:
            raise ValueError(f"spectrum must sum to one, got {sigma.sum()!r}")
        return self

    @property
    def n(self) -> int:
        return int(self.weights.size)

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))


class SpectrumSpec(BaseModel):
    """Family and parameter of a spectrum, without its size."""

    model_config = ConfigDict(extra="forbid")

    family: SpectrumFamily = Field("cvar", description="cvar, extremile, esrm or erm")
    param: Optional[float] = Field(None, description="Family parameter; taken from the preset when omitted")
    preset: SpectrumPreset = Field("default", description="Parameter table used when param is omitted")

    def resolved_param(self) -> Optional[float]:
        if self.family == "erm":
            return None
        if self.param is None:
            table = const.HARD_SPECTRUM_PARAMS if self.preset == "hard" else const.DEFAULT_SPECTRUM_PARAMS
            return table[self.family]
        return self.param


class CsvSchema(BaseModel):
    """Column layout of a dataset CSV file."""

    model_config = ConfigDict(extra="forbid")

    label_column: str = Field("label", description="Name of the label column")
    group_column: Optional[str] = Field(None, description="Optional protected-attribute column")
    task: Task = Field("regression", description="regression, binary or multiclass")


class Dataset(ArrayModel):
    """Design matrix and labels of a supervised learning problem."""

    features: np.ndarray = Field(..., description="n×d feature matrix")
    labels: np.ndarray = Field(..., description="Length-n labels (real, {0,1} or class index)")
    task: Task = "regression"
    num_classes: int = Field(1, ge=1, description="C for multiclass, 1 otherwise")
    feature_names: List[str] = Field(default_factory=list)
    groups: Optional[np.ndarray] = Field(None, description="Optional group label per row")
    ground_truth: Optional[np.ndarray] = Field(None, description="Generating parameter of synthetic data")

    @field_validator("features", mode="before")
    @classmethod
    def _as_matrix(cls, value):
        value = np.asarray(value, dtype=float)
        if value.ndim == 1:
            value = value.reshape(-1, 1)
        return cls._freeze(value)

    @field_validator("labels", mode="before")
    @classmethod
    def _as_labels(cls, value):
        return cls._freeze(np.asarray(value, dtype=float).reshape(-1))

    @field_validator("groups", mode="before")
    @classmethod
    def _as_groups(cls, value):
        if value is None:
            return None
        return cls._freeze(np.asarray(value, dtype=object).reshape(-1))

    @field_validator("ground_truth", mode="before")
    @classmethod
    def _as_truth(cls, value):
        if value is None:
            return None
        return cls._freeze(np.asarray(value, dtype=float))

    @model_validator(mode="after")
    def _check_consistency(self):
        n = self.features.shape[0]
        if self.features.ndim != 2 or n == 0:
            raise ValueError("features must be a non-empty 2-D matrix")
        if self.labels.shape[0] != n:
            raise ValueError(f"{self.labels.shape[0]} labels for {n} rows")
        if self.groups is not None and self.groups.shape[0] != n:
            raise ValueError(f"{self.groups.shape[0]} groups for {n} rows")
        if not np.all(np.isfinite(self.features)) or not np.all(np.isfinite(self.labels)):
            raise ValueError("features and labels must be finite")
        if self.task == "binary" and not np.all(np.isin(self.labels, (0.0, 1.0))):
            raise ValueError("binary labels must be 0 or 1")
        if self.task == "multiclass":
            if self.num_classes < 2:
                raise ValueError("multiclass data needs at least two classes")
            valid = (self.labels == np.round(self.labels)) & (self.labels >= 0) & (self.labels < self.num_classes)
            if not np.all(valid):
                raise ValueError(f"class labels must be integers in [0, {self.num_classes - 1}]")
        return self

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def d(self) -> int:
        return int(self.features.shape[1])


class StandardizationStats(ArrayModel):
    """Per-column mean and population standard deviation of the training features."""

    mean: np.ndarray
    std: np.ndarray

    @model_validator(mode="after")
    def _check_positive(self):
        if np.any(self.std <= 0):
            raise ValueError("standard deviations must be positive")
        return self


class MetricsRow(BaseModel):
    """One sampled point of an optimization trajectory."""

    passes: float = Field(..., description="Cumulative oracle calls divided by n")
    objective: float = Field(..., description="F_σ at the current iterate")
    suboptimality: float = Field(..., description="Normalized objective gap")
    wall_time_s: float = Field(..., ge=0, description="Seconds since the run started")


class RunRecord(BaseModel):
    """Trajectory of one (optimizer, seed) run."""

    optimizer: str
    seed: int
    status: Literal["ok", "diverged"] = "ok"
    rows: List[MetricsRow] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_passes_increase(self):
        passes = [row.passes for row in self.rows]
        if any(b <= a for a, b in zip(passes, passes[1:])):
            raise ValueError("pass column must be strictly increasing")
        return self


class SpectrumRequest(SpectrumSpec):
    """Request body for building a spectrum."""

    n: int = Field(..., gt=0, description="Number of samples")

    model_config = {
        "extra": "forbid",
        "json_schema_extra": {
            "examples": [
                {"family": "cvar", "param": 0.5, "n": 4},
                {"family": "extremile", "param": 2.0, "n": 2},
            ]
        },
    }


class SpectrumResult(BaseModel):
    weights: List[float] = Field(..., description="Spectrum σ in nondecreasing order")
    kappa_sigma: float = Field(..., description="Skewness nσₙ of the spectrum")


class WeightsRequest(BaseModel):
    """Request body for the most adverse reweighting of a loss vector."""

    losses: List[float] = Field(..., min_length=1, description="Loss value of every sample")
    spectrum: SpectrumSpec = Field(default_factory=SpectrumSpec)
    shift_cost: float = Field(const.DEFAULT_SHIFT_COST, gt=0, description="Penalty ν on the f-divergence")
    divergence: DivergenceName = "chi2"

    model_config = {
        "extra": "forbid",
        "json_schema_extra": {
            "examples": [
                {
                    "losses": [0.0, 1.0],
                    "spectrum": {"family": "cvar", "param": 0.5},
                    "shift_cost": 1.0,
                    "divergence": "chi2",
                }
            ]
        },
    }


class WeightsResult(BaseModel):
    weights: List[float] = Field(..., description="Adversarial distribution q over the samples")
    risk: float = Field(..., description="Penalized spectral risk qᵀl − νD(q‖1/n)")
