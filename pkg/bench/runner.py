"""
Runs an experiment: one shared reference solve, then every (optimizer, seed)
trajectory, logged in passes over the data and written as CSV.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from core import constants as const
from core.data_io import load_csv, make_synthetic, standardize
from core.losses import oracle_for
from core.models import Dataset, MetricsRow, RunRecord
from core.objective import Objective, full_objective, objective_and_gradient, reference_minimizer, suboptimality
from core.optimizers import OPTIMIZERS
from core.spectra import make_spectrum

from .config import ExperimentConfig, OptimizerConfig
from .metrics import plot_suboptimality, statistical_parity_gap, write_metrics

logger = logging.getLogger(__name__)


class ReferenceSolution(BaseModel):
    """Reference minimizer w* of the experiment objective and the values suboptimality is measured against."""

    initial_objective: float = Field(..., description="F_σ(w⁰) at w⁰ = 0")
    optimal_objective: float = Field(..., description="F_σ(w*)")
    gradient_norm: float = Field(..., description="‖∇F_σ(w*)‖")
    w_star: List[float]


@dataclass
class RunResult:
    record: RunRecord
    w: np.ndarray
    parity_gap: Optional[float] = None


def load_data(cfg: ExperimentConfig) -> Tuple[Dataset, Optional[Dataset]]:
    """Training set (and test set, if configured), standardized with training statistics."""
    spec = cfg.dataset
    if spec.synthetic is not None:
        s = spec.synthetic
        train = make_synthetic(s.kind, s.n, s.d, s.seed, s.noise, num_classes=s.num_classes, num_groups=s.num_groups)
        test = None
    else:
        train = load_csv(spec.path, spec.schema())
        test = load_csv(spec.test_path, spec.schema()) if spec.test_path is not None else None
    if spec.standardize:
        train, test, _ = standardize(train, test)
    return train, test


def build_objective(cfg: ExperimentConfig, data: Dataset) -> Objective:
    spec = cfg.objective
    spectrum = make_spectrum(spec.spectrum.family, spec.spectrum.resolved_param(), data.n)
    return Objective(oracle_for(data), spectrum, spec.shift_cost, spec.penalty, spec.divergence)


def solve_reference(cfg: ExperimentConfig, data: Optional[Dataset] = None) -> ReferenceSolution:
    """
    Raises:
        ConvergenceError: If the reference solve does not reach `cfg.reference_tol`.
    """
    data = data if data is not None else load_data(cfg)[0]
    obj = build_objective(cfg, data)
    logger.info("Solving reference: %r", obj)
    initial = full_objective(obj, obj.zeros())
    w_star = reference_minimizer(obj, tol=cfg.reference_tol)
    optimal, gradient = objective_and_gradient(obj, w_star)
    return ReferenceSolution(
        initial_objective=initial,
        optimal_objective=optimal,
        gradient_norm=float(np.linalg.norm(gradient)),
        w_star=w_star.tolist(),
    )


def _parity(data: Dataset, test: Optional[Dataset], w: np.ndarray, oracle) -> Optional[float]:
    evaluation = test if test is not None else data
    if evaluation.groups is None or len(set(evaluation.groups.tolist())) < 2:
        return None
    predictions = oracle.predict(w, evaluation.features)
    return statistical_parity_gap(predictions, evaluation.groups, evaluation.task)


def run_single(
    cfg: ExperimentConfig,
    opt: OptimizerConfig,
    seed: int,
    data: Dataset,
    reference: ReferenceSolution,
    test: Optional[Dataset] = None,
) -> RunResult:
    """
    One trajectory from w⁰ = 0, logged every `log_interval` passes up to `max_passes`.

    Metric evaluations use their own objective so they never count as optimizer work.
    A run whose objective leaves the finite range, exceeds the divergence factor times
    its initial value, or whose step fails numerically is marked "diverged" and stopped.
    """
    training = cfg.training
    train_obj = build_objective(cfg, data)
    eval_obj = build_objective(cfg, data)
    init, step = OPTIMIZERS[opt.kind]
    f0, f_star = reference.initial_objective, reference.optimal_objective

    start = time.perf_counter()
    state = init(train_obj, train_obj.zeros(), opt.lr, seed, **opt.init_options())
    rows: List[MetricsRow] = []
    status = "ok"

    def log_point() -> bool:
        value = full_objective(eval_obj, state.w)
        if not math.isfinite(value):
            return False
        rows.append(
            MetricsRow(
                passes=state.passes,
                objective=value,
                suboptimality=suboptimality(value, f0, f_star),
                wall_time_s=time.perf_counter() - start,
            )
        )
        return value <= const.DIVERGENCE_FACTOR * abs(f0)

    healthy = log_point()
    next_mark = state.passes + training.log_interval
    with np.errstate(over="raise", invalid="raise"):
        while healthy and state.passes < training.max_passes:
            try:
                step(state)
            except (ValueError, ArithmeticError) as e:
                logger.warning("%s seed %d failed at pass %.2f: %s", opt.label, seed, state.passes, e)
                healthy = False
                break
            if state.passes >= next_mark or state.passes >= training.max_passes:
                healthy = log_point()
                while next_mark <= state.passes:
                    next_mark += training.log_interval
    if not healthy:
        status = "diverged"

    record = RunRecord(optimizer=opt.label, seed=seed, status=status, rows=rows)
    logger.info(
        "%s seed %d: %s after %.2f passes, suboptimality %.3e",
        opt.label, seed, status, state.passes, rows[-1].suboptimality if rows else float("nan"),
    )
    return RunResult(record=record, w=state.w, parity_gap=_parity(data, test, state.w, train_obj.oracle))


def _summary_frame(results: List[RunResult]) -> pd.DataFrame:
    rows = []
    for result in results:
        record = result.record
        last = record.rows[-1] if record.rows else None
        rows.append(
            {
                "optimizer": record.optimizer,
                "seed": record.seed,
                "status": record.status,
                "final_pass": last.passes if last else float("nan"),
                "final_suboptimality": last.suboptimality if last else float("nan"),
                "parity_gap": result.parity_gap if result.parity_gap is not None else float("nan"),
            }
        )
    return pd.DataFrame(rows)


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[Path] = None, plot: Optional[bool] = None) -> List[RunRecord]:
    """
    Runs every configured optimizer on every seed and writes into the output directory:
    `metrics.csv` (all trajectories, in config order), `runs/<optimizer>_seed<k>.csv`,
    `summary.csv` (status, final suboptimality and parity gap per run), `reference.json`,
    and `suboptimality.svg` when plotting is on.
    """
    out_dir = Path(out_dir) if out_dir is not None else cfg.output_dir
    plot = cfg.plot if plot is None else plot
    (out_dir / "runs").mkdir(parents=True, exist_ok=True)

    train, test = load_data(cfg)
    reference = solve_reference(cfg, train)
    (out_dir / "reference.json").write_text(reference.model_dump_json(indent=2), encoding="utf-8")

    jobs = [(opt, seed) for opt in cfg.optimizers for seed in cfg.training.seeds]
    logger.info("Running %d trajectories on %d worker(s)", len(jobs), cfg.training.workers)
    with ThreadPoolExecutor(max_workers=cfg.training.workers) as pool:
        futures = [pool.submit(run_single, cfg, opt, seed, train, reference, test) for opt, seed in jobs]
        results = [future.result() for future in futures]

    for result in results:
        record = result.record
        write_metrics([record], out_dir / "runs" / f"{record.optimizer}_seed{record.seed}.csv")
    records = [result.record for result in results]
    write_metrics(records, out_dir / "metrics.csv")
    _summary_frame(results).to_csv(out_dir / "summary.csv", index=False, float_format=const.FLOAT_FORMAT)

    if plot:
        try:
            plot_suboptimality(records, out_dir / "suboptimality.svg", title=cfg.objective.spectrum.family)
        except ImportError:
            logger.warning("matplotlib is not installed; skipping the plot (install the 'plot' extra).")
    return records
