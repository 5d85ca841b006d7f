"""Trajectory CSVs, the statistical parity metric, and the optional suboptimality plot."""

import itertools
import logging
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
import pandas as pd
from scipy.stats import ks_2samp

from core import constants as const
from core.errors import DegenerateError, ParameterError, SizeError
from core.models import MetricsRow, RunRecord, Task

logger = logging.getLogger(__name__)


def statistical_parity_gap(predictions: Sequence, groups: Sequence, task: Task) -> float:
    """
    Largest deviation between the prediction distributions of any two groups.

    Binary: difference of positive-prediction rates. Multiclass: difference of
    predicted-class rates, maximized over classes. Regression: Kolmogorov-Smirnov
    distance between the empirical prediction CDFs.

    Raises:
        SizeError: If predictions and groups differ in length.
        DegenerateError: If fewer than two groups are present.
    """
    predictions = np.asarray(predictions)
    groups = np.asarray(groups, dtype=object).astype(str)
    if predictions.shape[0] != groups.shape[0]:
        raise SizeError(f"{predictions.shape[0]} predictions for {groups.shape[0]} group labels.")
    names = np.unique(groups)
    if names.size < 2:
        raise DegenerateError("Statistical parity needs at least two groups.")
    members = [predictions[groups == name] for name in names]

    if task == "regression":
        return max(float(ks_2samp(a, b).statistic) for a, b in itertools.combinations(members, 2))
    if task == "binary":
        rates = [float(np.mean(m == 1)) for m in members]
        return max(rates) - min(rates)
    if task == "multiclass":
        gap = 0.0
        for label in np.unique(predictions):
            rates = [float(np.mean(m == label)) for m in members]
            gap = max(gap, max(rates) - min(rates))
        return gap
    raise ParameterError(f"Unknown task '{task}'.")


def records_frame(records: Sequence[RunRecord]) -> pd.DataFrame:
    rows = [
        (record.optimizer, record.seed, row.passes, row.objective, row.suboptimality, row.wall_time_s)
        for record in records
        for row in record.rows
    ]
    return pd.DataFrame(rows, columns=const.METRICS_COLUMNS)


def write_metrics(records: Sequence[RunRecord], path: Union[str, Path]) -> None:
    """Writes trajectories as a metrics CSV, one row per logged point, 17 significant digits."""
    if not records:
        raise SizeError("No run records to write.")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records_frame(records).to_csv(path, index=False, float_format=const.FLOAT_FORMAT)


def read_metrics(path: Union[str, Path]) -> List[RunRecord]:
    """Parses a metrics CSV back into one RunRecord per (optimizer, seed), in file order."""
    frame = pd.read_csv(path, float_precision="round_trip", dtype={"optimizer": str})
    records = []
    for (optimizer, seed), block in frame.groupby(["optimizer", "seed"], sort=False):
        rows = [
            MetricsRow(passes=p, objective=f, suboptimality=s, wall_time_s=t)
            for p, f, s, t in block[["pass", "objective", "suboptimality", "wall_time_s"]].itertuples(index=False)
        ]
        records.append(RunRecord(optimizer=optimizer, seed=int(seed), rows=rows))
    return records


def plot_suboptimality(records: Sequence[RunRecord], path: Union[str, Path], title: str = "") -> None:
    """SVG of suboptimality (log scale) against passes, one line per run."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for record in records:
        passes = [row.passes for row in record.rows]
        values = [max(row.suboptimality, 1e-16) for row in record.rows]
        ax.semilogy(passes, values, label=f"{record.optimizer} (seed {record.seed})")
    ax.set_xlabel("passes")
    ax.set_ylabel("suboptimality")
    if title:
        ax.set_title(title)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
