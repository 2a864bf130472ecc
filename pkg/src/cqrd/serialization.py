"""Versioned JSON persistence for fitted CQR-d models.

Floats go through ``repr`` (Python's json default), which round-trips exactly,
so a reloaded model predicts bit-identically.
"""
from __future__ import annotations

import json
from typing import Any, Optional

import numpy as np

from . import __version__
from .calibrate import LambdaResult
from .conformal_core import ConformityScores, GlobalQuantile
from .dataset import ColumnMeta, DataError, Standardizer
from .density import CqrdModel
from .neighbors import build_index
from .quantile_regression import QuantileModel

FORMAT = "cqrd-model"
FORMAT_VERSION = 1


def model_to_dict(model: CqrdModel, metadata: Optional[dict] = None) -> dict:
    idx = model.neighbor_index
    gq = model.global_quantile
    lr = model.calibration
    return {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "artifact_version": __version__,
        "alpha": model.alpha,
        "k": model.k,
        "lambda_star": model.lambda_star,
        "epsilon_achieved": model.epsilon_achieved,
        "lambda_bounds": list(model.lambda_bounds),
        "columns": [{"name": c.name, "levels": list(c.levels) if c.is_ordinal else None}
                    for c in model.columns],
        "standardizer": {"means": model.standardizer.means.tolist(),
                         "scales": model.standardizer.scales.tolist()},
        "quantile_model": model.quantile_model.to_dict(),
        "calibration": {
            "ids": model.scores.cal_ids.tolist(),
            "scores": model.scores.scores.tolist(),
            "index_ids": idx.row_ids.tolist(),
            "index_points": idx.points.tolist(),
        },
        "global_quantile": {"value": gq.value, "level": gq.level, "clamped": gq.clamped},
        "lambda_search": None if lr is None else {
            "lambda_star": lr.lambda_star, "objective_value": lr.objective_value,
            "evaluations": lr.evaluations, "method": lr.method},
        "metadata": metadata or {},
    }


def model_from_dict(d: dict) -> CqrdModel:
    if d.get("format") != FORMAT:
        raise DataError(f"not a {FORMAT} file")
    if d.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported model format version {d.get('format_version')}")
    cols = tuple(ColumnMeta(c["name"], tuple(c["levels"]) if c["levels"] is not None else None)
                 for c in d["columns"])
    st = Standardizer(np.asarray(d["standardizer"]["means"], dtype=float),
                      np.asarray(d["standardizer"]["scales"], dtype=float))
    cal = d["calibration"]
    pts = np.asarray(cal["index_points"], dtype=float).reshape(len(cal["index_ids"]), st.d)
    gq = GlobalQuantile(float(d["global_quantile"]["value"]), float(d["global_quantile"]["level"]),
                        bool(d["global_quantile"]["clamped"]))
    ls = d.get("lambda_search")
    lr = None if ls is None else LambdaResult(float(ls["lambda_star"]), float(ls["objective_value"]),
                                              int(ls["evaluations"]), ls["method"])
    return CqrdModel(
        quantile_model=QuantileModel.from_dict(d["quantile_model"]),
        standardizer=st,
        neighbor_index=build_index(pts, cal["index_ids"]),
        scores=ConformityScores(np.asarray(cal["scores"], dtype=float), cal["ids"]),
        global_quantile=gq,
        k=int(d["k"]),
        alpha=float(d["alpha"]),
        lambda_star=float(d["lambda_star"]),
        epsilon_achieved=float(d["epsilon_achieved"]),
        lambda_bounds=tuple(float(b) for b in d["lambda_bounds"]),
        columns=cols,
        calibration=lr,
    )


def save_model(model: CqrdModel, path, metadata: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, metadata), fh, indent=1, allow_nan=False)


def load_model(path) -> CqrdModel:
    return model_from_dict(read_json(path))


def read_json(path) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
