"""Synthetic heteroscedastic benchmark and the replication runner."""
from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from .conformal_core import cqr_intervals, fit_cqr
from .dataset import ColumnMeta, Dataset, split_dataset
from .density import CqrdModel, fit_cqrd, predict_intervals
from .quantile_regression import LINEAR, LearnerSpec, fit_quantile_model

RNG_ALGORITHM = "numpy.random.Generator(PCG64)"
SWEEP_SIZES = (500, 1000, 2500, 5000, 7500, 10000)


@dataclass(frozen=True)
class SimConfig:
    n: int = 1000
    mix_centers: tuple[float, float] = (-1.0, 1.0)
    mix_sd: float = 0.5
    noise_base: float = 0.1
    noise_slope: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.n < 10:
            raise ValueError(f"n must be at least 10, got {self.n}")
        if not self.mix_sd > 0:
            raise ValueError("mixture SD must be positive")
        if self.noise_base < 0 or self.noise_slope < 0:
            raise ValueError("noise parameters must be nonnegative")


def mean_function(x):
    return np.sin(2 * np.pi * np.asarray(x)) + 0.5 * np.asarray(x) ** 2


def noise_sd(x, cfg: SimConfig):
    return cfg.noise_base + cfg.noise_slope * np.abs(np.asarray(x))


def sample_response(x, cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return mean_function(x) + rng.normal(0.0, 1.0, size=x.shape) * noise_sd(x, cfg)


def sample_features(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    """Exactly half the points around each center (extra point to the second), shuffled."""
    n_left = cfg.n // 2
    centers = np.repeat(np.asarray(cfg.mix_centers, dtype=float), [n_left, cfg.n - n_left])
    return rng.permutation(centers + rng.normal(0.0, cfg.mix_sd, size=cfg.n))


def generate(cfg: SimConfig) -> Dataset:
    rng = np.random.default_rng(cfg.seed)
    x = sample_features(cfg, rng)
    y = sample_response(x, cfg, rng)
    return Dataset(x.reshape(-1, 1), y, (ColumnMeta("x"),), "y")


@dataclass(frozen=True)
class Replication:
    n: int
    seed: int
    cqr_coverage: float
    cqr_width: float
    cqrd_coverage: float
    cqrd_width: float
    lambda_star: float
    epsilon_achieved: float
    calibration_size: int
    model: Optional[CqrdModel] = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class BenchRow:
    sample_size: int
    method: str
    coverage_mean: float
    coverage_sd: float
    width_mean: float
    width_sd: float
    replications: int

    CSV_COLUMNS = ("sample_size", "method", "coverage_mean", "coverage_sd", "width_mean", "width_sd")

    def as_csv_row(self) -> list:
        return [self.sample_size, self.method] + [repr(float(getattr(self, c)))
                                                   for c in self.CSV_COLUMNS[2:]]

    def to_dict(self) -> dict:
        return asdict(self)


def default_learner(n_train: Optional[int] = None) -> LearnerSpec:
    # the affine learner misfits the sinusoid, leaving locally structured
    # residuals; the kNN learner absorbs them and leaves nothing to localize
    return LearnerSpec(LINEAR)


def compare_methods(ds: Dataset, splits, alpha: float = 0.1, learner: Optional[LearnerSpec] = None,
                    k: Optional[int] = None, lambda_bounds=(0.5, 1.5)):
    """Fit CQR and CQR-d on the same split and base learner; score both on the test rows.

    Returns ``(cqr_coverage, cqr_width, cqrd_coverage, cqrd_width, model)``.
    """
    learner = learner or default_learner(len(splits.train))
    qm = fit_quantile_model(ds, splits.train, alpha, learner)
    _, gq = fit_cqr(qm, ds, splits.calibration, alpha)
    model = fit_cqrd(ds, splits, learner, alpha, k, lambda_bounds, quantile_model=qm)

    x_test = ds.features[splits.test]
    y_test = ds.response[splits.test]
    lo, hi = cqr_intervals(qm, gq, x_test)
    batch = predict_intervals(model, x_test)
    return (
        interval_coverage(lo, hi, y_test),
        float(np.mean(hi - lo)),
        interval_coverage(batch.lo, batch.hi, y_test),
        float(np.mean(batch.width)),
        model,
    )


def interval_coverage(lo, hi, y) -> float:
    y = np.asarray(y, dtype=float)
    return float(np.mean((np.asarray(lo) <= y) & (y <= np.asarray(hi))))


def run_replication(n: int, seed: int, alpha: float = 0.1, learner: Optional[LearnerSpec] = None,
                    k: Optional[int] = None, lambda_bounds=(0.5, 1.5),
                    fractions=(0.6, 0.2, 0.2), keep_model: bool = False) -> Replication:
    ds = generate(SimConfig(n=n, seed=seed))
    splits = split_dataset(ds, fractions, seed)
    c_cov, c_w, d_cov, d_w, model = compare_methods(ds, splits, alpha, learner, k, lambda_bounds)
    return Replication(n, seed, c_cov, c_w, d_cov, d_w, model.lambda_star, model.epsilon_achieved,
                       model.m, model if keep_model else None)


def summarize(reps: Sequence[Replication]) -> list[BenchRow]:
    """Mean and sample SD (ddof=1) per (size, method), sizes in first-seen order."""
    rows = []
    for n in dict.fromkeys(r.n for r in reps):
        group = [r for r in reps if r.n == n]
        for method, cov_attr, w_attr in (("CQR", "cqr_coverage", "cqr_width"),
                                         ("CQR-d", "cqrd_coverage", "cqrd_width")):
            cov = np.array([getattr(r, cov_attr) for r in group])
            wid = np.array([getattr(r, w_attr) for r in group])
            rows.append(BenchRow(n, method, float(cov.mean()), sample_sd(cov),
                                 float(wid.mean()), sample_sd(wid), len(group)))
    return rows


def sample_sd(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(v.std(ddof=1)) if v.size > 1 else float("nan")


def run_replications(sizes: Sequence[int], reps: int = 30, alpha: float = 0.1,
                     learner: Optional[LearnerSpec] = None, k: Optional[int] = None,
                     base_seed: int = 0, lambda_bounds=(0.5, 1.5),
                     details: bool = False, progress=None):
    """Replicate the CQR vs CQR-d comparison; replication r of every size uses seed base_seed + r.

    With ``details=True`` returns ``(rows, replications)``.
    """
    if reps < 2:
        raise ValueError("need at least 2 replications")
    out = []
    for n in sizes:
        for r in range(reps):
            out.append(run_replication(int(n), base_seed + r, alpha, learner, k, lambda_bounds,
                                       keep_model=details))
            if progress is not None:
                progress(out[-1])
    rows = summarize(out)
    return (rows, out) if details else rows


DIAMOND_LEVELS = {
    "cut": ("Fair", "Good", "Very Good", "Premium", "Ideal"),
    "color": ("J", "I", "H", "G", "F", "E", "D"),
    "clarity": ("I1", "SI2", "SI1", "VS2", "VS1", "VVS2", "VVS1", "IF"),
}


def generate_diamonds_like(n: int = 2000, seed: int = 0) -> Dataset:
    """Price-like response over carat plus three ordered grades.

    Log-price is linear in log-carat and the grade indices; the multiplicative
    noise makes price spread grow with carat.
    """
    rng = np.random.default_rng(seed)
    carat = np.round(np.exp(rng.normal(-0.45, 0.55, n)).clip(0.2, 3.0), 2)
    cut = rng.choice(5, n, p=[0.03, 0.09, 0.22, 0.26, 0.40])
    color = rng.choice(7, n, p=[0.05, 0.10, 0.15, 0.21, 0.18, 0.18, 0.13])
    clarity = rng.choice(8, n, p=[0.02, 0.17, 0.24, 0.23, 0.15, 0.09, 0.07, 0.03])
    log_price = (8.35 + 1.75 * np.log(carat) + 0.03 * cut + 0.07 * color + 0.09 * clarity
                 + rng.normal(0, 0.12 + 0.06 * carat, n))
    price = np.round(np.exp(log_price))
    cols = (ColumnMeta("carat"),) + tuple(ColumnMeta(c, lv) for c, lv in DIAMOND_LEVELS.items())
    x = np.column_stack([carat, cut, color, clarity]).astype(float)
    return Dataset(x, price, cols, "price")
