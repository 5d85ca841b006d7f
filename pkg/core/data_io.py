"""Dataset loading, standardization and synthetic instances."""

import logging
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError
from scipy.special import expit

from . import constants as const
from .errors import DataError, ParameterError, ParseError, SchemaError, ShapeError, SizeError
from .models import CsvSchema, Dataset, StandardizationStats, Task

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _build_dataset(**fields) -> Dataset:
    try:
        return Dataset(**fields)
    except ValidationError as e:
        raise DataError(f"Invalid dataset: {e.errors()[0]['msg']}") from e


def _parse_column(frame: pd.DataFrame, column: str) -> np.ndarray:
    numeric = pd.to_numeric(frame[column].str.strip(), errors="coerce")
    values = numeric.to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        position = int(np.flatnonzero(bad)[0])
        cell = frame[column].iloc[position]
        raise ParseError(
            f"Non-numeric value {cell!r} in column '{column}' at data row {position + 1}.",
            row=position + 1,
            column=column,
        )
    return values


def _encode_labels(labels: np.ndarray, task: Task) -> Tuple[np.ndarray, int]:
    if task == "regression":
        return labels, 1
    if task == "binary":
        values = set(np.unique(labels).tolist())
        if values <= {-1.0, 1.0}:
            return (labels > 0).astype(float), 1
        if values <= {0.0, 1.0}:
            return labels, 1
        raise DataError(f"Binary labels must be 0/1 or -1/+1, found {sorted(values)[:5]}.")
    if np.any(labels != np.round(labels)) or labels.min() < 0:
        raise DataError("Multiclass labels must be nonnegative integers.")
    return labels, max(2, int(labels.max()) + 1)


def load_csv(path: PathLike, schema: Optional[CsvSchema] = None) -> Dataset:
    """
    Reads a comma-separated file with a header row into a Dataset.

    Every column other than the label and group columns is a numeric feature.

    Raises:
        DataError: If the file cannot be read.
        SchemaError: If the label or group column is missing, or there are no features.
        ParseError: If a cell is not a finite number; carries the 1-based data row and the column.
    """
    schema = schema or CsvSchema()
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"Cannot read dataset '{path}': {e}") from e

    frame.columns = [str(column).strip() for column in frame.columns]
    for column in (schema.label_column, schema.group_column):
        if column is not None and column not in frame.columns:
            raise SchemaError(f"Column '{column}' not found in '{path}'; columns are {list(frame.columns)}.")
    feature_names = [c for c in frame.columns if c not in (schema.label_column, schema.group_column)]
    if not feature_names:
        raise SchemaError(f"'{path}' has no feature columns.")
    if frame.empty:
        raise SizeError(f"'{path}' has no data rows.")

    features = np.column_stack([_parse_column(frame, column) for column in feature_names])
    labels, num_classes = _encode_labels(_parse_column(frame, schema.label_column), schema.task)
    groups = None
    if schema.group_column is not None:
        groups = frame[schema.group_column].str.strip().to_numpy(dtype=object)

    logger.debug("Loaded %s: n=%d, d=%d, task=%s", path, features.shape[0], features.shape[1], schema.task)
    return _build_dataset(
        features=features,
        labels=labels,
        task=schema.task,
        num_classes=num_classes,
        feature_names=feature_names,
        groups=groups,
    )


def write_csv(data: Dataset, path: PathLike, label_column: str = "label", group_column: str = "group") -> None:
    """Writes a Dataset back in the format `load_csv` reads, with 17 significant digits."""
    names = data.feature_names or [f"x{k}" for k in range(data.d)]
    frame = pd.DataFrame(data.features, columns=names)
    frame[label_column] = data.labels
    if data.groups is not None:
        frame[group_column] = data.groups
    frame.to_csv(path, index=False, float_format=const.FLOAT_FORMAT)


def _with_features(data: Dataset, features: np.ndarray) -> Dataset:
    return _build_dataset(
        features=features,
        labels=data.labels,
        task=data.task,
        num_classes=data.num_classes,
        feature_names=data.feature_names,
        groups=data.groups,
        ground_truth=data.ground_truth,
    )


def standardize(
    train: Dataset, test: Optional[Dataset] = None
) -> Tuple[Dataset, Optional[Dataset], StandardizationStats]:
    """
    Centers and scales features by the training mean and population standard deviation.

    Constant training columns keep a standard deviation of one, so they map to zero.

    Raises:
        ShapeError: If the test set has a different number of features.
    """
    if test is not None and test.d != train.d:
        raise ShapeError(f"Test set has {test.d} features, training set has {train.d}.")
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    std = np.where(std > 1e-12 * np.maximum(1.0, np.abs(mean)), std, 1.0)
    stats = StandardizationStats(mean=mean, std=std)

    scaled_train = _with_features(train, (train.features - mean) / std)
    scaled_test = None if test is None else _with_features(test, (test.features - mean) / std)
    return scaled_train, scaled_test, stats


def make_synthetic(
    kind: Task,
    n: int,
    d: int,
    seed: int,
    noise: float = 0.0,
    weights: Optional[np.ndarray] = None,
    num_classes: int = 3,
    num_groups: int = 0,
) -> Dataset:
    """
    Gaussian design with labels from a seeded linear model w†.

    Regression labels are xᵀw† + noise·ε; binary labels are Bernoulli(sigmoid(xᵀw† + noise·ε));
    multiclass labels are drawn from the softmax of W†x + noise·ε. With `num_groups` > 0
    every row also gets a uniformly drawn group label "g0", "g1", ….

    Args:
        weights: Optional w† (d-vector, or C×d matrix for multiclass); drawn from N(0, I) when omitted.
    """
    if n < 2:
        raise SizeError(f"Synthetic data needs n >= 2, got {n}.")
    if d < 1:
        raise SizeError(f"Synthetic data needs d >= 1, got {d}.")
    if noise < 0:
        raise ParameterError(f"Noise level must be nonnegative, got {noise}.")

    rng = np.random.default_rng(seed)
    features = rng.standard_normal((n, d))
    classes = 1
    if kind == "regression":
        truth = rng.standard_normal(d) if weights is None else np.asarray(weights, dtype=float)
        labels = features @ truth + noise * rng.standard_normal(n)
    elif kind == "binary":
        truth = rng.standard_normal(d) if weights is None else np.asarray(weights, dtype=float)
        logits = features @ truth + noise * rng.standard_normal(n)
        labels = (rng.random(n) < expit(logits)).astype(float)
    elif kind == "multiclass":
        if num_classes < 2:
            raise ParameterError(f"Multiclass data needs at least two classes, got {num_classes}.")
        classes = num_classes
        truth = rng.standard_normal((classes, d)) if weights is None else np.asarray(weights, dtype=float)
        logits = features @ truth.T + noise * rng.standard_normal((n, classes))
        # Gumbel-max draws a class from the softmax of the logits
        labels = np.argmax(logits + rng.gumbel(size=(n, classes)), axis=1).astype(float)
    else:
        raise ParameterError(f"Unknown synthetic task '{kind}'.")

    groups = None
    if num_groups > 0:
        groups = np.array([f"g{k}" for k in rng.integers(num_groups, size=n)], dtype=object)

    return _build_dataset(
        features=features,
        labels=labels,
        task=kind,
        num_classes=classes,
        feature_names=[f"x{k}" for k in range(d)],
        groups=groups,
        ground_truth=truth,
    )
