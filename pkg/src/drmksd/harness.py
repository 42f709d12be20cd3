"""Experiment workflows behind the command line: fit, replicate and grid scans.

BLAS is pinned to one thread inside every workflow so that results do not
depend on the worker count; parallelism is across replications only.
"""

from __future__ import annotations

import csv
import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .config import ExperimentConfig
from .dgp import TRUE_PROPENSITY, Dataset, DGPKind, DGPSpec, child_seed
from .errors import (DRMKSDError, EstimationImpossibleError, InferenceUnavailableError,
                     InvalidArgumentError)
from .estimator import (FitResult, Objective, OptimizerSettings, Variant, assemble, cross_fit,
                        minimize)
from .inference import SandwichEstimate, confidence_interval, sandwich_at
from .kernels import KernelConfig, KernelFamily
from .nuisance import (CMEWeights, ConstantPropensity, CorruptedPropensity, KNNWeights,
                       LogisticPropensity, OraclePropensity, OutcomeWeights, PropensityModel,
                       ZeroWeights)
from .score_models import GaussianLocation, RBMMarginal, ScoreModel, intractable5d


# --------------------------------------------------------------------------
# component construction
# --------------------------------------------------------------------------

def build_model(config: ExperimentConfig) -> ScoreModel:
    family = config.model.family
    if family == "gaussian_location":
        return GaussianLocation(config.model.dim)
    if family == "intractable5d":
        return intractable5d()
    return RBMMarginal()


def build_kernel(config: ExperimentConfig) -> KernelConfig:
    k = config.kernel
    return KernelConfig(KernelFamily(k.family), k.c, k.lengthscale, k.beta)


def build_propensity(config: ExperimentConfig) -> PropensityModel:
    p = config.propensity
    if p.kind == "logistic":
        return LogisticPropensity(p.features, p.l2, p.max_iter, p.tol, p.clip)
    if p.kind == "constant":
        return ConstantPropensity(p.value, p.clip)
    oracle = OraclePropensity(TRUE_PROPENSITY[DGPKind(config.dgp.kind)], p.clip)
    if p.kind == "oracle":
        return oracle
    return CorruptedPropensity(oracle, p.distortion, p.clip)


def build_outcome(config: ExperimentConfig) -> OutcomeWeights:
    o = config.outcome
    if o.kind == "cme":
        return CMEWeights(o.ridge, o.bandwidth)
    if o.kind == "knn":
        return KNNWeights(o.k)
    return ZeroWeights()


def build_settings(config: ExperimentConfig) -> OptimizerSettings:
    o = config.optimizer
    theta0 = None if o.theta0 is None else tuple(o.theta0)
    return OptimizerSettings(o.method, o.steps, o.step_size, theta0, config.model.box)


def sample_dataset(config: ExperimentConfig, seed: int) -> Dataset:
    d = config.dgp
    return DGPSpec(DGPKind(d.kind), d.n, seed, tuple(d.theta_true), d.burn_in).sample()


def check_dimensions(model: ScoreModel, dataset: Dataset):
    if dataset.Y.shape[1] != model.dim_y:
        raise InvalidArgumentError(
            f"model expects outcomes of dimension {model.dim_y}, data has {dataset.Y.shape[1]}")


def build_objective(config: ExperimentConfig, dataset: Dataset, seed: int) -> Objective:
    model = build_model(config)
    check_dimensions(model, dataset)
    plan = cross_fit(dataset, build_propensity(config), build_outcome(config),
                     split=config.split, seed=seed)
    return Objective(model, build_kernel(config), dataset, assemble(dataset, plan), config.variant)


# --------------------------------------------------------------------------
# single fit
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FitReport:
    fit: FitResult
    sandwich: SandwichEstimate | None
    ci: np.ndarray | None
    warning: str | None

    def to_json(self) -> dict:
        s = self.sandwich
        return {
            "theta_n": self.fit.theta.tolist(),
            "g_n": self.fit.objective,
            "ci": None if self.ci is None else self.ci.tolist(),
            "gamma_condition_number": None if s is None else s.condition_number,
            "variant": Variant(self.fit.variant).value,
            "converged": self.fit.converged,
            "warning": self.warning,
        }


def fit_dataset(config: ExperimentConfig, dataset: Dataset, seed: int | None = None) -> FitReport:
    """Cross-fit, minimize and attach a sandwich interval; ``seed`` drives the fold split."""
    seed = config.seed if seed is None else seed
    with threadpool_limits(1):
        obj = build_objective(config, dataset, seed)
        fit = minimize(obj.model, obj.cfg, dataset, None, build_settings(config), objective=obj)
        warning = None
        if fit.singular:
            warning = "quadratic form is singular; pseudo-inverse minimizer reported"
        try:
            est = sandwich_at(obj, fit.theta)
            ci = confidence_interval(fit, est, config.level)
        except InferenceUnavailableError as err:
            est, ci = None, None
            warning = f"inference unavailable: {err}"
    return FitReport(fit, est, ci, warning)


# --------------------------------------------------------------------------
# replications
# --------------------------------------------------------------------------

def result_header(p: int) -> list[str]:
    return (["rep", "seed", "status"] + [f"theta_{k + 1}" for k in range(p)] + ["g_n"]
            + [f"ci_lo_{k + 1}" for k in range(p)] + [f"ci_hi_{k + 1}" for k in range(p)]
            + ["converged", "ms"])


def _status(err: Exception) -> str:
    if isinstance(err, EstimationImpossibleError):
        return "estimation_impossible"
    if isinstance(err, InvalidArgumentError):
        return "invalid_argument"
    return "numerical_error"


def run_replication(config: ExperimentConfig, rep: int) -> dict:
    """One DGP draw and fit; failures become a status, never an exception."""
    seed = child_seed(config.seed, rep)
    p = build_model(config).dim_theta
    row = {"rep": rep, "seed": seed, "status": "ok", "theta": [math.nan] * p, "g_n": math.nan,
           "ci_lo": [math.nan] * p, "ci_hi": [math.nan] * p, "converged": False}
    start = time.perf_counter()
    try:
        report = fit_dataset(config, sample_dataset(config, seed), seed)
        row.update(theta=report.fit.theta.tolist(), g_n=report.fit.objective,
                   converged=report.fit.converged)
        if report.ci is None:
            row["status"] = "inference_unavailable"
        else:
            row.update(ci_lo=report.ci[:, 0].tolist(), ci_hi=report.ci[:, 1].tolist())
    except (DRMKSDError, ArithmeticError, np.linalg.LinAlgError) as err:
        row["status"] = _status(err)
    row["ms"] = (time.perf_counter() - start) * 1e3
    return row


def _run_one(args):
    return run_replication(*args)


def replicate(config: ExperimentConfig, workers: int = 1) -> list[dict]:
    """Rows ordered by replication index whatever the completion order."""
    jobs = [(config, r) for r in range(config.replications)]
    if workers <= 1 or len(jobs) == 1:
        rows = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_one, jobs))
    return sorted(rows, key=lambda r: r["rep"])


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def write_results(rows: list[dict], path, p: int) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(result_header(p))
        for r in rows:
            writer.writerow([r["rep"], r["seed"], r["status"]]
                            + [_fmt(v) for v in r["theta"]] + [_fmt(r["g_n"])]
                            + [_fmt(v) for v in r["ci_lo"]] + [_fmt(v) for v in r["ci_hi"]]
                            + [_fmt(r["converged"]), f"{r['ms']:.3f}"])


def read_results(path) -> list[dict]:
    """Parse a results CSV back into row dicts (the inverse of ``write_results``)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        p = sum(1 for h in header if h.startswith("theta_"))
        rows = []
        for rec in reader:
            rows.append({
                "rep": int(rec[0]), "seed": int(rec[1]), "status": rec[2],
                "theta": [float(v) for v in rec[3:3 + p]], "g_n": float(rec[3 + p]),
                "ci_lo": [float(v) for v in rec[4 + p:4 + 2 * p]],
                "ci_hi": [float(v) for v in rec[4 + 2 * p:4 + 3 * p]],
                "converged": rec[4 + 3 * p] == "1", "ms": float(rec[5 + 3 * p]),
            })
    return rows


def summarize(rows: list[dict], theta_true) -> dict:
    """MSE, median absolute error and coverage over rows that produced an estimate.

    Coverage is computed over rows with an interval; ``n_with_ci`` reports how
    many that is.
    """
    estimated = [r for r in rows if r["status"] in ("ok", "inference_unavailable")]
    summary = {"replications": len(rows), "n_estimated": len(estimated),
               "status_counts": {s: sum(r["status"] == s for r in rows)
                                 for s in sorted({r["status"] for r in rows})}}
    if theta_true is None or not estimated:
        return summary
    truth = np.asarray(theta_true, dtype=float)
    err = np.array([r["theta"] for r in estimated]) - truth
    summary.update(theta_true=truth.tolist(),
                   mse=np.mean(err**2, axis=0).tolist(),
                   total_mse=float(np.mean(np.sum(err**2, axis=1))),
                   median_abs_error=np.median(np.abs(err), axis=0).tolist())
    with_ci = [r for r in estimated if r["status"] == "ok"]
    summary["n_with_ci"] = len(with_ci)
    if with_ci:
        lo = np.array([r["ci_lo"] for r in with_ci])
        hi = np.array([r["ci_hi"] for r in with_ci])
        summary["coverage"] = np.mean((lo <= truth) & (truth <= hi), axis=0).tolist()
    return summary


def theta_true_for(config: ExperimentConfig):
    kind = DGPKind(config.dgp.kind)
    if kind is DGPKind.RBM2D:
        return list(config.dgp.theta_true)
    return [0.0] if kind is DGPKind.GAUSSIAN1D else [0.0, 0.0]


# --------------------------------------------------------------------------
# grid scan
# --------------------------------------------------------------------------

def grid_points(config: ExperimentConfig) -> np.ndarray:
    """Cartesian product of the axes, first axis varying slowest."""
    model = build_model(config)
    axes = config.grid
    if not axes:
        raise InvalidArgumentError("gridscan needs a 'grid' section")
    if len(axes) != model.dim_theta:
        raise InvalidArgumentError(f"grid has {len(axes)} axes, model has {model.dim_theta} parameters")
    values = []
    for ax in axes:
        count = int(math.floor((ax.max - ax.min) / ax.step + 1e-9)) + 1
        pts = ax.min + ax.step * np.arange(count)
        box = config.model.box
        if pts[0] < -box or pts[-1] > box:
            raise InvalidArgumentError(f"grid axis [{ax.min}, {ax.max}] leaves the box [-{box}, {box}]")
        values.append(pts)
    return np.array(list(itertools.product(*values)), dtype=float)


def gridscan(config: ExperimentConfig, dataset: Dataset, seed: int | None = None):
    """``(points, values, argmin index)``; ties go to the first point."""
    seed = config.seed if seed is None else seed
    points = grid_points(config)
    with threadpool_limits(1):
        obj = build_objective(config, dataset, seed)
        values = obj.values_on(points)
    return points, values, int(np.argmin(values))


def write_grid(points, values, best, path) -> None:
    p = points.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"theta_{k + 1}" for k in range(p)] + ["g_n", "argmin"])
        for i, (pt, v) in enumerate(zip(points, values)):
            writer.writerow([_fmt(x) for x in pt] + [_fmt(v), int(i == best)])
