"""Conditional quantile learners.

Any object with ``predict(X) -> ndarray`` can serve as a quantile predictor.
Two are built in: an affine model trained by subgradient descent on the
pinball loss, and a k-nearest-neighbor order-statistic model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional, Protocol

import numpy as np

from .dataset import DataError, Dataset, Standardizer, fit_standardizer
from .neighbors import NeighborIndex, build_index, knn_query_batch
from .utils import NumericalError, ceil_rank

LINEAR = "linear_pinball"
KNN = "knn_quantile"


class QuantilePredictor(Protocol):
    tau: float

    def predict(self, x) -> np.ndarray: ...


@dataclass(frozen=True)
class LearnerSpec:
    kind: str = LINEAR
    hyperparameters: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in (LINEAR, KNN):
            raise ValueError(f"unknown learner kind {self.kind!r}")
        for key, val in self.hyperparameters.items():
            if val is not None and key != "seed" and not val > 0:
                raise ValueError(f"hyperparameter {key} must be positive, got {val}")

    def get(self, key, default=None):
        val = self.hyperparameters.get(key)
        return default if val is None else val

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hyperparameters": dict(self.hyperparameters)}

    @classmethod
    def from_dict(cls, d: dict) -> "LearnerSpec":
        return cls(d.get("kind", KNN), dict(d.get("hyperparameters", {})))


def pinball_loss(tau: float, y, y_hat):
    if not 0 < tau < 1:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    r = np.asarray(y, dtype=float) - np.asarray(y_hat, dtype=float)
    loss = np.where(r >= 0, tau * r, (tau - 1) * r)
    return float(loss) if loss.ndim == 0 else loss


def _as_2d(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim <= 1:
        x = x.reshape(-1, d) if d > 0 else x.reshape(-1, 0)
    if x.shape[1] != d:
        raise DataError(f"expected {d} features, got {x.shape[1]}")
    return x


@dataclass(frozen=True)
class LinearQuantile:
    """x -> weights . x + intercept"""

    tau: float
    weights: np.ndarray
    intercept: float

    def predict(self, x) -> np.ndarray:
        x = _as_2d(x, self.weights.shape[0])
        return x @ self.weights + self.intercept

    def to_dict(self) -> dict:
        return {"kind": LINEAR, "tau": self.tau, "weights": self.weights.tolist(),
                "intercept": self.intercept}


@dataclass(frozen=True)
class KnnQuantile:
    """ceil(tau * k)-th smallest response among the k nearest training rows."""

    tau: float
    k: int
    standardizer: Standardizer
    index: NeighborIndex
    responses: np.ndarray

    def predict(self, x) -> np.ndarray:
        x = _as_2d(x, self.standardizer.d)
        ids, _ = knn_query_batch(self.index, self.standardizer.transform(x), self.k)
        vals = np.sort(self.responses[ids], axis=1)
        return vals[:, ceil_rank(self.tau, self.k) - 1]

    def to_dict(self) -> dict:
        return {"kind": KNN, "tau": self.tau, "k": self.k,
                "means": self.standardizer.means.tolist(),
                "scales": self.standardizer.scales.tolist(),
                "points": self.index.points.tolist(),
                "responses": self.responses.tolist()}


def predictor_from_dict(d: dict):
    if d["kind"] == LINEAR:
        return LinearQuantile(d["tau"], np.asarray(d["weights"], dtype=float), float(d["intercept"]))
    if d["kind"] == KNN:
        st = Standardizer(np.asarray(d["means"]), np.asarray(d["scales"]))
        pts = np.asarray(d["points"], dtype=float).reshape(-1, st.d)
        return KnnQuantile(d["tau"], int(d["k"]), st, build_index(pts), np.asarray(d["responses"], dtype=float))
    raise ValueError(f"unknown predictor kind {d['kind']!r}")


def fit_linear_pinball(ds: Dataset, rows, tau: float, spec: Optional[LearnerSpec] = None) -> LinearQuantile:
    """Mini-batch subgradient descent on the mean pinball loss.

    Features and response are standardized on `rows` for the optimization and
    the solution is mapped back to raw units. Step size is
    ``learning_rate / sqrt(t)`` with t counting updates; the iterate with the
    lowest full-data loss at any epoch end is returned.
    """
    spec = spec or LearnerSpec(LINEAR)
    if not 0 < tau < 1:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise DataError("cannot fit on an empty row set")
    eta0 = float(spec.get("learning_rate", 0.1))
    epochs = int(spec.get("epochs", 200))
    batch = int(spec.get("batch_size", 32))
    rng = np.random.default_rng(spec.get("seed", 0))

    x = ds.features[rows]
    y = ds.response[rows]
    n, d = x.shape
    if d:
        xs = fit_standardizer(ds, rows)
        z = xs.transform(x)
    else:
        z = x
    y_mu = float(y.mean())
    y_sd = float(y.std())
    y_sd = y_sd if y_sd > 0 else 1.0
    t_y = (y - y_mu) / y_sd

    w = np.zeros(d)
    b = 0.0

    def loss(w, b):
        return float(np.mean(pinball_loss(tau, t_y, z @ w + b)))

    initial = loss(w, b)
    best = (initial, w.copy(), b)
    limit = 1e6 * max(initial, 1e-12)
    t = 0
    for _ in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch):
            idx = perm[start:start + batch]
            t += 1
            r = t_y[idx] - (z[idx] @ w + b)
            # d/dpred of the pinball loss: -tau above the fit, (1 - tau) below
            g = np.where(r > 0, -tau, np.where(r < 0, 1 - tau, 0.0))
            eta = eta0 / math.sqrt(t)
            w = w - eta * (z[idx].T @ g) / idx.size
            b = b - eta * float(g.mean())
        cur = loss(w, b)
        if not math.isfinite(cur) or cur > limit:
            raise NumericalError(f"pinball descent diverged: loss {cur:.3g} vs initial {initial:.3g}")
        if cur < best[0]:
            best = (cur, w.copy(), b)

    _, w, b = best
    if d:
        raw_w = y_sd * w / xs.scales
        raw_b = y_mu + y_sd * (b - float(np.dot(w, xs.means / xs.scales)))
    else:
        raw_w = np.zeros(0)
        raw_b = y_mu + y_sd * b
    return LinearQuantile(tau, raw_w, raw_b)


def fit_knn_quantile(ds: Dataset, rows, tau: float, spec: Optional[LearnerSpec] = None) -> KnnQuantile:
    spec = spec or LearnerSpec(KNN)
    if not 0 < tau < 1:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise DataError("cannot fit on an empty row set")
    k = int(spec.get("k_q", math.ceil(math.sqrt(rows.size))))
    if k > rows.size:
        raise ValueError(f"k_q={k} exceeds the {rows.size} training rows")
    st = fit_standardizer(ds, rows)
    index = build_index(st.transform(ds.features[rows]))
    return KnnQuantile(tau, k, st, index, ds.response[rows].copy())


_FITTERS = {LINEAR: fit_linear_pinball, KNN: fit_knn_quantile}


@dataclass(frozen=True)
class QuantileModel:
    lower: Any
    upper: Any
    alpha: float

    @property
    def d(self) -> Optional[int]:
        for p in (self.lower, self.upper):
            if isinstance(p, LinearQuantile):
                return p.weights.shape[0]
            if isinstance(p, KnnQuantile):
                return p.standardizer.d
        return None

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "lower": self.lower.to_dict(), "upper": self.upper.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "QuantileModel":
        return cls(predictor_from_dict(d["lower"]), predictor_from_dict(d["upper"]), float(d["alpha"]))


def fit_quantile_model(ds: Dataset, rows, alpha: float, spec: Optional[LearnerSpec] = None) -> QuantileModel:
    """Fit the alpha/2 and 1 - alpha/2 conditional quantiles on `rows`."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    spec = spec or LearnerSpec()
    fit = _FITTERS[spec.kind]
    return QuantileModel(fit(ds, rows, alpha / 2, spec), fit(ds, rows, 1 - alpha / 2, spec), alpha)


def predict_pairs(qm: QuantileModel, xs) -> tuple[np.ndarray, np.ndarray]:
    """Lower/upper quantile predictions; crossed pairs collapse to their midpoint."""
    d = qm.d
    if d is not None:
        xs = _as_2d(xs, d)
    lo = np.asarray(qm.lower.predict(xs), dtype=float).reshape(-1)
    hi = np.asarray(qm.upper.predict(xs), dtype=float).reshape(-1)
    crossed = lo > hi
    if np.any(crossed):
        mid = 0.5 * (lo[crossed] + hi[crossed])
        lo = lo.copy()
        hi = hi.copy()
        lo[crossed] = mid
        hi[crossed] = mid
    return lo, hi


def predict_pair(qm: QuantileModel, x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float).reshape(1, -1)
    lo, hi = predict_pairs(qm, x)
    return float(lo[0]), float(hi[0])
