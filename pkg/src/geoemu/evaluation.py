"""Scoring of reconstructions and forecasts against observations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diagnostics import (EOFResult, MetricReport, compute_anomalies, compute_metrics, eof,
                          pc_compare, project)
from .forecast import ForecastRun
from .preprocess import PreparedData


@dataclass
class EOFContext:
    """EOFs of the observed test-period target, one per anomaly kind."""

    times: np.ndarray
    results: dict[str, EOFResult]
    obs_pcs: dict[str, np.ndarray]
    annual_mean: str = "per_year"


def eof_context(data: PreparedData, times, n_modes: int = 2, kinds=("seasonal", "nonseasonal"),
                annual_mean: str = "per_year") -> EOFContext:
    times = np.asarray(times, dtype=int)
    obs = data.y_log()[times]
    results, pcs = {}, {}
    for kind in kinds:
        anom = compute_anomalies(obs, kind, data.year[times], data.month[times],
                                 data.obs[times], annual_mean)
        usable = data.valid & np.isfinite(anom).any(axis=0)
        if not usable.any():
            continue
        k = min(n_modes, len(times), int(usable.sum()))
        res = eof(anom, k, data.valid, kind)
        results[kind] = res
        pcs[kind] = res.pcs
    return EOFContext(times, results, pcs, annual_mean)


def pc_scores(pred, data: PreparedData, ctx: EOFContext, mode: int = 0) -> dict[str, float]:
    """Correlation/RMSE between projected prediction PCs and observed PCs."""
    out = {}
    times = ctx.times
    for kind, res in ctx.results.items():
        anom = compute_anomalies(pred, kind, data.year[times], data.month[times],
                                 np.isfinite(pred), ctx.annual_mean)
        pc = project(anom, res.spatial_patterns, res.mask)[mode]
        corr, rmse = pc_compare(ctx.obs_pcs[kind][mode], pc)
        out[f"corr_{kind}_pc"] = corr
        out[f"rmse_{kind}_pc"] = rmse
    return out


def score(pred, data: PreparedData, times, ctx: EOFContext | None = None,
          basins: dict | None = None) -> dict:
    """Global metrics, optional per-basin metrics and PC scores for a
    (len(times), L, W) log-space prediction."""
    times = np.asarray(times, dtype=int)
    obs = data.y_log()[times]
    mask = data.obs[times]
    row = {"global": compute_metrics(pred, obs, mask, "global")}
    for name, bmask in (basins or {}).items():
        if (mask & bmask[None]).sum() >= 2:
            row[name] = compute_metrics(pred, obs, mask & bmask[None], name)
    if ctx is not None and np.isfinite(pred).all(axis=(1, 2)).any():
        row["pc"] = pc_scores(pred, data, ctx) if np.isfinite(pred[:, data.valid]).all() else {}
    return row


def lead_table(run: ForecastRun, data: PreparedData, ctx: EOFContext | None = None,
               model_name: str | None = None) -> list[dict]:
    """One row per lead: pooled metrics plus (when every month is forecast)
    PC scores."""
    rows = []
    for k in run.lead_times:
        pred = run.at_lead(int(k))
        have = np.isfinite(pred).all(axis=(1, 2))
        obs = data.y_log()[run.target_times]
        rep: MetricReport = compute_metrics(pred, obs, data.obs[run.target_times], "global")
        row = {"model": model_name or run.mode, "lead": int(k), **rep.to_dict()}
        row["n_months"] = int(have.sum())
        if ctx is not None and have.all() and np.array_equal(ctx.times, run.target_times):
            row.update(pc_scores(pred, data, ctx))
        rows.append(row)
    return rows
