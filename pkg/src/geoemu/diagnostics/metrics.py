"""Pooled scalar metrics and per-cell skill maps."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

# relative tolerance under which a spread counts as exactly zero
DEGENERATE_RTOL = 1e-12


def _degenerate(std, scale):
    return std <= DEGENERATE_RTOL * np.maximum(scale, 1e-300)


@dataclass
class MetricReport:
    r2: float
    rmse: float
    slope: float
    mae: float
    n_samples: int
    scope: str = "global"

    def to_dict(self) -> dict:
        return asdict(self)


def _pairs(pred, obs, mask):
    pred = np.asarray(pred, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    if pred.shape != obs.shape:
        raise ValueError(f"pred shape {pred.shape} != obs shape {obs.shape}")
    sel = np.isfinite(pred) & np.isfinite(obs)
    if mask is not None:
        sel &= np.broadcast_to(np.asarray(mask, bool), pred.shape)
    return pred[sel], obs[sel]


def compute_metrics(pred, obs, mask=None, scope: str = "global") -> MetricReport:
    """R2 (squared Pearson), RMSE, regression slope of pred on obs, MAE.

    Pools every (time, cell) pair under ``mask`` where both values are finite.
    A constant series makes R2 0 by convention; a constant ``obs`` leaves the
    slope undefined (NaN).
    """
    p, o = _pairs(pred, obs, mask)
    if p.size < 2:
        raise ValueError(f"compute_metrics needs >= 2 pooled pairs, got {p.size}")
    err = p - o
    rmse = float(np.sqrt(np.mean(err * err)))
    mae = float(np.mean(np.abs(err)))
    dp, do = p - p.mean(), o - o.mean()
    var_p, var_o = np.mean(dp * dp), np.mean(do * do)
    cov = np.mean(dp * do)
    scale_p, scale_o = np.max(np.abs(p)), np.max(np.abs(o))
    flat_p = _degenerate(np.sqrt(var_p), scale_p)
    flat_o = _degenerate(np.sqrt(var_o), scale_o)
    slope = np.nan if flat_o else (0.0 if flat_p else float(cov / var_o))
    r2 = 0.0 if (flat_p or flat_o) else float(cov * cov / (var_p * var_o))
    return MetricReport(r2=r2, rmse=rmse, slope=slope, mae=mae, n_samples=int(p.size), scope=scope)


def _cellwise(pred, obs, mask):
    pred = np.asarray(pred, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    if pred.shape != obs.shape or pred.ndim != 3:
        raise ValueError(f"expected matching (T, L, W) series, got {pred.shape} and {obs.shape}")
    sel = np.isfinite(pred) & np.isfinite(obs)
    if mask is not None:
        sel &= np.broadcast_to(np.asarray(mask, bool), pred.shape)
    n = sel.sum(axis=0)
    p = np.where(sel, pred, 0.0)
    o = np.where(sel, obs, 0.0)
    return p, o, sel, n


def correlation_map(pred, obs, mask=None, min_len: int = 3) -> np.ndarray:
    """Per-cell Pearson correlation over commonly observed months.

    NaN marks invalid cells, cells with fewer than ``min_len`` months and
    cells where either series has zero variance.
    """
    p, o, sel, n = _cellwise(pred, obs, mask)
    nn = np.maximum(n, 1)
    dp = np.where(sel, p - p.sum(0) / nn, 0.0)
    do = np.where(sel, o - o.sum(0) / nn, 0.0)
    sp = np.sqrt((dp * dp).sum(0) / nn)
    so = np.sqrt((do * do).sum(0) / nn)
    bad = (n < min_len) | _degenerate(sp, np.abs(p).max(0)) | _degenerate(so, np.abs(o).max(0))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (dp * do).sum(0) / nn / (sp * so)
    return np.where(bad, np.nan, r)


def nrmse_map(pred, obs, mask=None, min_len: int = 3) -> np.ndarray:
    """Per-cell RMSE over time divided by the temporal std of ``obs``."""
    p, o, sel, n = _cellwise(pred, obs, mask)
    nn = np.maximum(n, 1)
    do = np.where(sel, o - o.sum(0) / nn, 0.0)
    so = np.sqrt((do * do).sum(0) / nn)
    err = np.where(sel, p - o, 0.0)
    rmse = np.sqrt((err * err).sum(0) / nn)
    bad = (n < min_len) | _degenerate(so, np.abs(o).max(0))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(bad, np.nan, rmse / so)


def pc_compare(pc_a, pc_b) -> tuple[float, float]:
    """Pearson correlation (NaN if either is flat) and RMSE of two PC series."""
    a = np.asarray(pc_a, dtype=np.float64)
    b = np.asarray(pc_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 3:
        raise ValueError("pc_compare needs two equal-length series of >= 3 values")
    rmse = float(np.sqrt(np.mean((a - b) ** 2)))
    da, db = a - a.mean(), b - b.mean()
    sa, sb = np.sqrt(np.mean(da * da)), np.sqrt(np.mean(db * db))
    if _degenerate(sa, np.abs(a).max()) or _degenerate(sb, np.abs(b).max()):
        return float("nan"), rmse
    return float(np.clip(np.mean(da * db) / (sa * sb), -1.0, 1.0)), rmse


def reports_to_csv(path, reports: list[MetricReport], extra_cols: dict | None = None) -> None:
    rows = [r.to_dict() for r in reports]
    fields = list(rows[0]) if rows else list(MetricReport.__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def reports_to_json(path, reports: list[MetricReport]) -> None:
    with open(path, "w") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=2, sort_keys=True)
