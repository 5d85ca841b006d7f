"""Experiment configuration: a single JSON document validated by pydantic."""

import difflib
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core import constants as const
from core.errors import ConfigError
from core.models import CsvSchema, DivergenceName, SpectrumSpec, Task

OptimizerKind = Literal["prospect", "prospect_moreau", "sgd", "srda", "lsvrg", "saddlesaga", "gd"]

# Common spellings of configuration keys, checked before fuzzy matching.
KEY_ALIASES = {
    "learningrate": "lr",
    "learning_rate": "lr",
    "eta": "lr",
    "step_size": "lr",
    "stepsize": "lr",
    "nu": "shift_cost",
    "mu": "penalty",
    "batchsize": "batch_size",
    "seed": "seeds",
    "passes": "max_passes",
}


class ConfigModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SyntheticSpec(ConfigModel):
    kind: Task = Field("regression", description="regression, binary or multiclass")
    n: int = Field(200, ge=2)
    d: int = Field(10, ge=1)
    seed: int = 0
    noise: float = Field(0.0, ge=0)
    num_classes: int = Field(3, ge=2, description="Classes of a multiclass instance")
    num_groups: int = Field(0, ge=0, description="Random group labels for the parity metric")


class DatasetConfig(ConfigModel):
    path: Optional[Path] = Field(None, description="Training CSV; relative to the config file")
    synthetic: Optional[SyntheticSpec] = None
    label_column: str = "label"
    group_column: Optional[str] = None
    task: Task = "regression"
    test_path: Optional[Path] = Field(None, description="Optional test CSV with the same columns")
    standardize: bool = True

    @model_validator(mode="after")
    def _one_source(self):
        if (self.path is None) == (self.synthetic is None):
            raise ValueError("dataset needs exactly one of 'path' or 'synthetic'")
        if self.synthetic is not None and self.test_path is not None:
            raise ValueError("'test_path' applies only to CSV datasets")
        return self

    def schema(self) -> CsvSchema:
        return CsvSchema(label_column=self.label_column, group_column=self.group_column, task=self.task)


class ObjectiveConfig(ConfigModel):
    spectrum: SpectrumSpec = Field(default_factory=SpectrumSpec)
    shift_cost: float = Field(const.DEFAULT_SHIFT_COST, ge=0, description="ν")
    penalty: Optional[float] = Field(None, ge=0, description="μ; 1/n when omitted")
    divergence: DivergenceName = "chi2"


class OptimizerConfig(ConfigModel):
    kind: OptimizerKind
    name: Optional[str] = Field(None, description="Label in the outputs; the kind when omitted")
    lr: float = Field(..., gt=0)
    batch_size: int = Field(const.DEFAULT_BATCH_SIZE, ge=1)
    epoch_length: Optional[int] = Field(None, ge=1, description="LSVRG checkpoint period; n when omitted")
    dual_rule: Literal["equal", "search_dual", "heuristic"] = "heuristic"
    dual_lr: Optional[float] = Field(None, gt=0)
    decoupled: bool = False
    storage: Literal["auto", "dense", "glm"] = "auto"
    variance_reduction: bool = True

    @property
    def label(self) -> str:
        return self.name or self.kind

    def init_options(self) -> Dict[str, Any]:
        """Keyword arguments of this optimizer's init function."""
        if self.kind == "prospect":
            return {"decoupled": self.decoupled, "storage": self.storage, "variance_reduction": self.variance_reduction}
        if self.kind == "prospect_moreau":
            return {"decoupled": self.decoupled}
        if self.kind in ("sgd", "srda"):
            return {"batch_size": self.batch_size}
        if self.kind == "lsvrg":
            return {"epoch_length": self.epoch_length, "storage": self.storage}
        if self.kind == "saddlesaga":
            return {"dual_rule": self.dual_rule, "dual_lr": self.dual_lr, "storage": self.storage}
        return {}


class TrainingConfig(ConfigModel):
    max_passes: float = Field(const.DEFAULT_MAX_PASSES, ge=1)
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1)
    log_interval: float = Field(const.DEFAULT_LOG_INTERVAL, gt=0, description="Passes between metric rows")
    workers: int = Field(1, ge=1)


class ExperimentConfig(ConfigModel):
    dataset: DatasetConfig
    objective: ObjectiveConfig = Field(default_factory=ObjectiveConfig)
    optimizers: List[OptimizerConfig] = Field(..., min_length=1)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    output_dir: Path = Path("out")
    reference_tol: float = Field(const.REFERENCE_TOL, gt=0)
    plot: bool = False

    @model_validator(mode="after")
    def _unique_labels(self):
        labels = [opt.label for opt in self.optimizers]
        duplicates = sorted({label for label in labels if labels.count(label) > 1})
        if duplicates:
            raise ValueError(f"optimizer labels must be unique; set 'name' for {duplicates}")
        return self

    def with_seed_offset(self, offset: int) -> "ExperimentConfig":
        training = self.training.model_copy(update={"seeds": [seed + offset for seed in self.training.seeds]})
        return self.model_copy(update={"training": training})


_CONFIG_MODELS = (SyntheticSpec, DatasetConfig, ObjectiveConfig, SpectrumSpec, OptimizerConfig, TrainingConfig, ExperimentConfig)
VALID_KEYS = sorted({name for model in _CONFIG_MODELS for name in model.model_fields})


def suggest_key(key: str) -> Optional[str]:
    """Closest valid configuration key to a misspelled one."""
    alias = KEY_ALIASES.get(key.lower())
    if alias is not None:
        return alias
    matches = difflib.get_close_matches(key, VALID_KEYS, n=1, cutoff=0.6)
    return matches[0] if matches else None


def _translate(error: ValidationError) -> ConfigError:
    errors = error.errors()
    # a misspelled key also leaves its field missing; report the spelling
    first = next((e for e in errors if e["type"] == "extra_forbidden"), errors[0])
    location = ".".join(str(part) for part in first["loc"])
    if first["type"] == "extra_forbidden":
        key = str(first["loc"][-1])
        return ConfigError(f"Unknown configuration key '{location}'", key=key, suggestion=suggest_key(key))
    if first["type"] == "json_invalid":
        return ConfigError(f"Configuration is not valid JSON: {first['msg']}")
    return ConfigError(f"Invalid value for '{location or 'config'}': {first['msg']}", key=location or None)


def _resolve(path: Optional[Path], base: Path) -> Optional[Path]:
    if path is None or path.is_absolute():
        return path
    return base / path


def parse_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Reads and validates an experiment config.

    Raises:
        ConfigError: If the file is unreadable, is not JSON, has an unknown key or an invalid value.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config '{path}': {e}") from e
    try:
        config = ExperimentConfig.model_validate_json(text)
    except ValidationError as e:
        raise _translate(e) from e

    base = path.parent
    dataset = config.dataset.model_copy(
        update={"path": _resolve(config.dataset.path, base), "test_path": _resolve(config.dataset.test_path, base)}
    )
    return config.model_copy(update={"dataset": dataset})
