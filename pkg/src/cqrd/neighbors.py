"""Exact k-nearest-neighbor search with deterministic tie-breaking.

Neighbors are ordered by (Euclidean distance, row id). The single-query path
is a plain linear scan; the batch path partitions distance rows and falls back
to a full stable sort whenever ties straddle the k-th position, so both return
identical results.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class NeighborSet:
    ids: np.ndarray
    distances: np.ndarray

    def __len__(self):
        return len(self.ids)


@dataclass(frozen=True)
class NeighborIndex:
    points: np.ndarray
    row_ids: np.ndarray

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


def build_index(points, row_ids=None) -> NeighborIndex:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points.reshape(-1, 1)
    if points.shape[0] == 0:
        raise ValueError("cannot index an empty point set")
    if row_ids is None:
        row_ids = np.arange(points.shape[0])
    row_ids = np.asarray(row_ids, dtype=np.int64).reshape(-1)
    if row_ids.shape[0] != points.shape[0]:
        raise ValueError(f"{row_ids.shape[0]} row ids for {points.shape[0]} points")
    if np.unique(row_ids).shape[0] != row_ids.shape[0]:
        raise ValueError("row ids must be unique")
    # store sorted by row id so a stable sort on distance breaks ties by id
    order = np.argsort(row_ids, kind="stable")
    pts = np.ascontiguousarray(points[order])
    ids = row_ids[order]
    pts.setflags(write=False)
    ids.setflags(write=False)
    return NeighborIndex(pts, ids)


def _distances(points: np.ndarray, x: np.ndarray) -> np.ndarray:
    # fixed left-to-right accumulation so every query path is bit-identical
    diff = points - x
    if diff.shape[-1] == 0:
        return np.zeros(diff.shape[:-1])
    acc = diff[..., 0] ** 2
    for j in range(1, diff.shape[-1]):
        acc += diff[..., j] ** 2
    return np.sqrt(acc)


def _check_k(idx: NeighborIndex, k: int, excluding: bool) -> None:
    limit = idx.m - (1 if excluding else 0)
    if k < 1 or k > limit:
        raise ValueError(f"k={k} exceeds the {limit} available neighbors" if k > limit
                         else f"k must be >= 1, got {k}")


def knn_query(idx: NeighborIndex, x, k: int, exclude_id: Optional[int] = None) -> NeighborSet:
    """Linear-scan reference query."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != idx.d:
        raise ValueError(f"query has dimension {x.shape[0]}, index has {idx.d}")
    excluding = exclude_id is not None and bool(np.any(idx.row_ids == exclude_id))
    _check_k(idx, k, excluding)
    dist = _distances(idx.points, x)
    order = np.lexsort((idx.row_ids, dist))
    if excluding:
        order = order[idx.row_ids[order] != exclude_id]
    order = order[:k]
    return NeighborSet(idx.row_ids[order].copy(), dist[order])


def knn_query_batch(idx: NeighborIndex, xs, k: int, exclude_ids=None,
                    chunk_size: int = 2048) -> tuple[np.ndarray, np.ndarray]:
    """Query many points at once.

    Returns ``(ids, distances)`` arrays of shape (q, k). ``exclude_ids`` is an
    optional per-query id to leave out (self-exclusion for calibration points).
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs.reshape(-1, idx.d)
    if xs.shape[1] != idx.d:
        raise ValueError(f"queries have dimension {xs.shape[1]}, index has {idx.d}")
    q = xs.shape[0]
    if exclude_ids is not None:
        exclude_ids = np.asarray(exclude_ids, dtype=np.int64).reshape(-1)
        if exclude_ids.shape[0] != q:
            raise ValueError("need one exclude id per query")
        pos = np.searchsorted(idx.row_ids, exclude_ids)
        pos_c = np.minimum(pos, idx.m - 1)
        present = idx.row_ids[pos_c] == exclude_ids
        _check_k(idx, k, bool(np.any(present)))
    else:
        _check_k(idx, k, False)

    out_ids = np.empty((q, k), dtype=np.int64)
    out_dist = np.empty((q, k))
    step = max(1, chunk_size * 256 // max(idx.m, 1))
    for start in range(0, q, step):
        stop = min(q, start + step)
        dist = _distances(idx.points[None, :, :], xs[start:stop, None, :])
        if exclude_ids is not None:
            rows = np.nonzero(present[start:stop])[0]
            dist[rows, pos_c[start:stop][rows]] = np.inf
        order = _smallest_k(dist, k)
        out_ids[start:stop] = idx.row_ids[order]
        out_dist[start:stop] = np.take_along_axis(dist, order, axis=1)
    return out_ids, out_dist


def _smallest_k(dist: np.ndarray, k: int) -> np.ndarray:
    """Column positions of the k smallest entries per row, ordered by (value, position)."""
    m = dist.shape[1]
    if k >= m or m <= 4 * k:
        return np.argsort(dist, axis=1, kind="stable")[:, :k]
    part = np.argpartition(dist, k - 1, axis=1)[:, :k]
    kth = np.take_along_axis(dist, part, axis=1).max(axis=1)
    part.sort(axis=1)  # position order first, then stable sort by value
    vals = np.take_along_axis(dist, part, axis=1)
    order = np.take_along_axis(part, np.argsort(vals, axis=1, kind="stable"), axis=1)
    # ties at the k-th value may have excluded a smaller position; redo those rows
    tied = np.count_nonzero(dist <= kth[:, None], axis=1) > k
    if np.any(tied):
        rows = np.nonzero(tied)[0]
        order[rows] = np.argsort(dist[rows], axis=1, kind="stable")[:, :k]
    return order

