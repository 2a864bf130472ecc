"""Calibration of the interval scale factor lambda.

Coverage on the calibration set is the fraction of points with
``score <= lambda * blend``, a step function of lambda. It is minimized in
three passes: a uniform grid, Brent refinement around the best grid cell,
and an exact scan over the step locations so that no plateau is missed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .utils import NumericalError

GOLDEN = 0.5 * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class LambdaObjective:
    scores: np.ndarray
    blends: np.ndarray
    alpha: float

    def __post_init__(self):
        e = np.asarray(self.scores, dtype=float).reshape(-1)
        b = np.asarray(self.blends, dtype=float).reshape(-1)
        if e.shape != b.shape:
            raise ValueError("scores and blends differ in length")
        if e.size == 0:
            raise ValueError("empty calibration objective")
        object.__setattr__(self, "scores", e)
        object.__setattr__(self, "blends", b)

    @property
    def target(self) -> float:
        return 1.0 - self.alpha

    def __call__(self, lam: float) -> float:
        return abs(coverage_at(self, lam) - self.target)


@dataclass(frozen=True)
class LambdaResult:
    lambda_star: float
    objective_value: float
    evaluations: int
    method: str  # "brent" or "grid_refined"


def coverage_at(obj: LambdaObjective, lam: float) -> float:
    return float(np.count_nonzero(obj.scores <= lam * obj.blends)) / obj.scores.size


def coverage_many(obj: LambdaObjective, lams, chunk: int = 1 << 22) -> np.ndarray:
    """coverage_at for an array of lambdas (same comparison, vectorized)."""
    lams = np.asarray(lams, dtype=float).reshape(-1)
    out = np.empty(lams.size)
    step = max(1, chunk // obj.scores.size)
    for s in range(0, lams.size, step):
        block = lams[s:s + step, None] * obj.blends[None, :]
        out[s:s + step] = np.count_nonzero(obj.scores[None, :] <= block, axis=1)
    return out / obj.scores.size


def brent_minimize(f: Callable[[float], float], lo: float, hi: float,
                   tol: float = 1e-8, max_iter: int = 500) -> tuple[float, float]:
    """Bounded Brent minimization (golden section + parabolic steps).

    Stops once the bracket is within ``tol * |x| + tol`` of its midpoint
    on both sides, or after `max_iter` iterations. Returns the best point seen.
    """
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    if not tol > 0:
        raise ValueError("tol must be positive")

    def call(x):
        v = float(f(x))
        if not math.isfinite(v):
            raise NumericalError(f"objective returned {v} at x={x}")
        return v

    a, b = lo, hi
    x = w = v = a + GOLDEN * (b - a)
    fx = fw = fv = call(x)
    best_x, best_f = x, fx
    d = e = 0.0
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        tol1 = tol * abs(x) + tol
        tol2 = 2.0 * tol1
        if abs(x - m) <= tol2 - 0.5 * (b - a):
            break
        golden = True
        if abs(e) > tol1:
            # parabola through (x, fx), (w, fw), (v, fv)
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2.0 * (q - r)
            if q > 0:
                p = -p
            q = abs(q)
            if abs(p) < abs(0.5 * q * e) and q * (a - x) < p < q * (b - x):
                e, d = d, p / q
                u = x + d
                if u - a < tol2 or b - u < tol2:
                    d = tol1 if x < m else -tol1
                golden = False
        if golden:
            e = (b - x) if x < m else (a - x)
            d = GOLDEN * e
        u = x + (d if abs(d) >= tol1 else (tol1 if d > 0 else -tol1))
        fu = call(u)
        if fu < best_f:
            best_x, best_f = u, fu
        if fu <= fx:
            if u < x:
                b = x
            else:
                a = x
            v, fv, w, fw, x, fx = w, fw, x, fx, u, fu
        else:
            if u < x:
                a = u
            else:
                b = u
            if fu <= fw or w == x:
                v, fv, w, fw = w, fw, u, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu
    return best_x, best_f


def _step_candidates(obj: LambdaObjective, lo: float, hi: float) -> np.ndarray:
    nz = obj.blends != 0
    bp = obj.scores[nz] / obj.blends[nz]
    bp = bp[np.isfinite(bp) & (bp >= lo) & (bp <= hi)]
    pts = np.unique(np.concatenate([[lo, hi], bp]))
    mids = 0.5 * (pts[:-1] + pts[1:])
    near = np.concatenate([np.nextafter(bp, -np.inf), np.nextafter(bp, np.inf)])
    cand = np.unique(np.concatenate([pts, mids, near]))
    return cand[(cand >= lo) & (cand <= hi)]


def _pick(lams: np.ndarray, vals: np.ndarray) -> int:
    """Index of the minimal objective, smallest lambda on ties."""
    best = vals.min()
    hits = np.nonzero(vals == best)[0]
    return int(hits[np.argmin(lams[hits])])


def optimize_lambda(obj: LambdaObjective, bounds=(0.5, 1.5), tol: float = 1e-6,
                    grid_points: int = 512) -> LambdaResult:
    lo, hi = (float(v) for v in bounds)
    if not (0 < lo < 1 < hi):
        raise ValueError(f"lambda bounds must be positive and straddle 1, got {bounds}")

    grid = np.linspace(lo, hi, grid_points)
    gvals = np.abs(coverage_many(obj, grid) - obj.target)
    i = _pick(grid, gvals)
    evals = grid_points

    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid_points - 1)]
    counter = [0]

    def f(lam):
        counter[0] += 1
        return obj(lam)

    xb, fb = brent_minimize(f, a, b, tol=tol)
    evals += counter[0]

    cand = _step_candidates(obj, lo, hi)
    cvals = np.abs(coverage_many(obj, cand) - obj.target)
    evals += cand.size
    j = _pick(cand, cvals)

    lams = np.array([grid[i], xb, cand[j]])
    vals = np.array([gvals[i], fb, cvals[j]])
    pick = _pick(lams, vals)
    lam = float(lams[pick])
    return LambdaResult(lam, obj(lam), evals, "brent" if pick == 1 else "grid_refined")
