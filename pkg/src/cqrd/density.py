"""Density-calibrated CQR (CQR-d).

Each point gets a local score quantile from its k nearest calibration
neighbors, blended with the global CQR quantile. The blend leans local where
neighbors are close::

    density   = 1 / mean neighbor distance
    w_local   = density / (1 + density)
    blend     = w_local * Q_local + (1 - w_local) * Q_global
    interval  = [q_lo - lam * blend, q_hi + lam * blend]

``lam`` is tuned once so calibration coverage hits 1 - alpha.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .calibrate import LambdaObjective, LambdaResult, coverage_at, optimize_lambda
from .conformal_core import ConformityScores, GlobalQuantile, conformal_level, fit_cqr, repair_empty
from .dataset import ColumnMeta, Dataset, SplitIndices, Standardizer, fit_standardizer
from .neighbors import NeighborIndex, NeighborSet, build_index, knn_query, knn_query_batch
from .quantile_regression import LearnerSpec, QuantileModel, fit_quantile_model, predict_pairs
from .utils import clamp_rank

DISTANCE_FLOOR = 1e-12


def local_density(distances) -> float:
    d = np.asarray(distances, dtype=float).reshape(-1)
    if d.size == 0:
        raise ValueError("local density needs at least one distance")
    return 1.0 / max(float(d.mean()), DISTANCE_FLOOR)


def local_weight(rho):
    """rho / (1 + rho), the share given to the local quantile."""
    r = np.asarray(rho, dtype=float)
    if np.any(r < 0):
        raise ValueError("density must be nonnegative")
    w = r / (1.0 + r)
    return float(w) if w.ndim == 0 else w


def combined_quantile(ctx: "LocalContext", q_global: float, lam: float) -> float:
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return _blend(ctx.local_quantile, ctx.w_local, q_global) * lam


@dataclass(frozen=True)
class LocalContext:
    neighbor_set: NeighborSet
    local_quantile: float
    density: float
    w_local: float
    w_global: float


@dataclass(frozen=True)
class CqrdModel:
    quantile_model: QuantileModel
    standardizer: Standardizer
    neighbor_index: NeighborIndex
    scores: ConformityScores
    global_quantile: GlobalQuantile
    k: int
    alpha: float
    lambda_star: float
    epsilon_achieved: float
    lambda_bounds: tuple[float, float] = (0.5, 1.5)
    columns: tuple[ColumnMeta, ...] = ()
    calibration: Optional[LambdaResult] = field(default=None, compare=False)

    @property
    def m(self) -> int:
        return len(self.scores)

    @property
    def local_level(self) -> float:
        return conformal_level(self.alpha, self.m)

    def scores_for(self, ids) -> np.ndarray:
        order = np.argsort(self.scores.cal_ids, kind="stable")
        pos = np.searchsorted(self.scores.cal_ids[order], ids)
        return self.scores.scores[order][pos]


def _local_quantiles(neighbor_scores: np.ndarray, level: float) -> np.ndarray:
    k = neighbor_scores.shape[1]
    r = clamp_rank(level, k)
    return np.partition(neighbor_scores, r - 1, axis=1)[:, r - 1]


def local_context(model: CqrdModel, x, exclude_id: Optional[int] = None) -> LocalContext:
    """Neighborhood diagnostics for one raw feature vector."""
    z = model.standardizer.transform(np.asarray(x, dtype=float).reshape(-1))
    ns = knn_query(model.neighbor_index, z, model.k, exclude_id=exclude_id)
    s = model.scores_for(ns.ids)
    q_loc = _local_quantiles(s[None, :], model.local_level)[0]
    rho = local_density(ns.distances)
    w = local_weight(rho)
    return LocalContext(ns, float(q_loc), rho, w, 1.0 - w)


def _batch_context(model: CqrdModel, xs, exclude_ids=None):
    """Vectorized local quantile, density and local weight for many points."""
    z = model.standardizer.transform(xs)
    ids, dist = knn_query_batch(model.neighbor_index, z, model.k, exclude_ids=exclude_ids)
    q_loc = _local_quantiles(model.scores_for(ids), model.local_level)
    rho = 1.0 / np.maximum(dist.mean(axis=1), DISTANCE_FLOOR)
    return q_loc, rho, local_weight(rho)


def _blend(q_loc, w_loc, q_global):
    # offset form: exactly q_global when the local quantile agrees with it
    return q_global + w_loc * (q_loc - q_global)


def fit_cqrd(
    ds: Dataset,
    splits: SplitIndices,
    learner: Optional[LearnerSpec] = None,
    alpha: float = 0.1,
    k: Optional[int] = None,
    lambda_bounds=(0.5, 1.5),
    tol: float = 1e-6,
    quantile_model: Optional[QuantileModel] = None,
) -> CqrdModel:
    """Fit CQR-d: quantile model on train rows, scores and lambda on calibration rows.

    A prefit `quantile_model` can be passed so CQR and CQR-d share one base learner.
    """
    cal = np.asarray(splits.calibration, dtype=np.int64)
    m = cal.size
    if k is None:
        k = default_k(m)
    if k < 1 or k > m - 1:
        raise ValueError(f"k={k} exceeds calibration size {m} (need 1 <= k <= {m - 1})")
    qm = quantile_model or fit_quantile_model(ds, splits.train, alpha, learner)
    scores, gq = fit_cqr(qm, ds, cal, alpha)
    st = fit_standardizer(ds, splits.train)
    index = build_index(st.transform(ds.features[cal]), cal)

    draft = CqrdModel(qm, st, index, scores, gq, int(k), float(alpha), 1.0, 0.0,
                      tuple(lambda_bounds), ds.columns)
    q_loc, _, w_loc = _batch_context(draft, ds.features[cal], exclude_ids=cal)
    obj = LambdaObjective(scores.scores, _blend(q_loc, w_loc, gq.value), alpha)
    res = optimize_lambda(obj, lambda_bounds, tol)
    return CqrdModel(qm, st, index, scores, gq, int(k), float(alpha), res.lambda_star,
                     res.objective_value, tuple(float(b) for b in lambda_bounds), ds.columns, res)


def default_k(m: int) -> int:
    return max(1, min(math.ceil(math.sqrt(m)), m - 1))


def calibration_objective(model: CqrdModel, ds: Dataset) -> LambdaObjective:
    """Rebuild the lambda objective from a fitted model and its source data."""
    cal = model.scores.cal_ids
    q_loc, _, w_loc = _batch_context(model, ds.features[cal], exclude_ids=cal)
    return LambdaObjective(model.scores.scores, _blend(q_loc, w_loc, model.global_quantile.value),
                           model.alpha)


@dataclass(frozen=True)
class IntervalBatch:
    lo: np.ndarray
    hi: np.ndarray
    local_quantile: np.ndarray
    density: np.ndarray
    w_local: np.ndarray
    combined_quantile: np.ndarray
    n_repaired: int = 0

    COLUMNS = ("lo", "hi", "width", "local_quantile", "density", "w_local", "combined_quantile")

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def __len__(self):
        return self.lo.shape[0]

    def covers(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return (self.lo <= y) & (y <= self.hi)

    def to_csv(self, path) -> None:
        cols = [self.lo, self.hi, self.width, self.local_quantile, self.density,
                self.w_local, self.combined_quantile]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for row in zip(*cols):
                w.writerow([repr(float(v)) for v in row])


def predict_intervals(model: CqrdModel, xs, lam: Optional[float] = None) -> IntervalBatch:
    """CQR-d intervals for raw feature rows; `lam` overrides the calibrated factor."""
    lam = model.lambda_star if lam is None else lam
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs.reshape(1, -1)
    q_lo, q_hi = predict_pairs(model.quantile_model, xs)
    q_loc, rho, w_loc = _batch_context(model, xs)
    qc = _blend(q_loc, w_loc, model.global_quantile.value) * lam
    lo, hi, n_bad = repair_empty(q_lo - qc, q_hi + qc)
    return IntervalBatch(lo, hi, q_loc, rho, w_loc, qc, n_bad)


def calibration_coverage(model: CqrdModel, ds: Dataset, lam: Optional[float] = None) -> float:
    lam = model.lambda_star if lam is None else lam
    return coverage_at(calibration_objective(model, ds), lam)
