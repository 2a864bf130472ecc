"""Split conformal quantile regression (the baseline CQR procedure)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .quantile_regression import QuantileModel, predict_pairs
from .utils import clamp_rank


@dataclass(frozen=True)
class ConformityScores:
    scores: np.ndarray
    cal_ids: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float).reshape(-1)
        ids = np.asarray(self.cal_ids, dtype=np.int64).reshape(-1)
        if s.shape != ids.shape:
            raise ValueError("scores and calibration ids differ in length")
        if not np.all(np.isfinite(s)):
            raise ValueError("conformity scores must be finite")
        s.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "cal_ids", ids)

    def __len__(self):
        return self.scores.shape[0]


@dataclass(frozen=True)
class GlobalQuantile:
    value: float
    level: float
    clamped: bool = False


def conformal_level(alpha: float, m: int) -> float:
    """(1 - alpha)(1 + 1/m)"""
    return (1 - alpha) * (1 + 1 / m)


def conformity_score(lo, hi, y):
    """max(lo - y, y - hi); negative strictly inside the interval."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo > hi):
        raise ValueError("conformity score needs lo <= hi")
    s = np.maximum(lo - np.asarray(y, dtype=float), np.asarray(y, dtype=float) - hi)
    return float(s) if s.ndim == 0 else s


def empirical_quantile(scores, level: float, warn: bool = True) -> float:
    """The ceil(level * m)-th smallest score, clamped to the maximum when that rank exceeds m."""
    s = np.asarray(scores, dtype=float).reshape(-1)
    if s.size == 0:
        raise ValueError("empirical quantile of an empty score vector")
    if not level > 0:
        raise ValueError(f"quantile level must be positive, got {level}")
    r = clamp_rank(level, s.size, warn=warn)
    return float(np.partition(s, r - 1)[r - 1])


def fit_cqr(qm: QuantileModel, ds: Dataset, cal_rows, alpha: float | None = None):
    cal_rows = np.asarray(cal_rows, dtype=np.int64)
    if cal_rows.size == 0:
        raise ValueError("calibration set is empty")
    alpha = qm.alpha if alpha is None else alpha
    lo, hi = predict_pairs(qm, ds.features[cal_rows])
    cs = ConformityScores(conformity_score(lo, hi, ds.response[cal_rows]), cal_rows)
    level = conformal_level(alpha, len(cs))
    clamped = clamp_rank(level, len(cs)) < level * len(cs) - 1e-9
    gq = GlobalQuantile(empirical_quantile(cs.scores, level), level, clamped)
    return cs, gq


def repair_empty(lo: np.ndarray, hi: np.ndarray):
    """Collapse lo > hi to the midpoint; returns (lo, hi, number repaired)."""
    bad = lo > hi
    n_bad = int(np.count_nonzero(bad))
    if n_bad:
        mid = 0.5 * (lo[bad] + hi[bad])
        lo = lo.copy()
        hi = hi.copy()
        lo[bad] = mid
        hi[bad] = mid
    return lo, hi, n_bad


def cqr_intervals(qm: QuantileModel, gq: GlobalQuantile, xs) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = predict_pairs(qm, xs)
    lo, hi, _ = repair_empty(lo - gq.value, hi + gq.value)
    return lo, hi


def cqr_interval(qm: QuantileModel, gq: GlobalQuantile, x) -> tuple[float, float]:
    lo, hi = cqr_intervals(qm, gq, np.asarray(x, dtype=float).reshape(1, -1))
    return float(lo[0]), float(hi[0])
