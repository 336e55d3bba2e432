"""Benchmark matrix on synthetic data: architectures, predictor windows and
forecast lead times, written as one consolidated report."""

from __future__ import annotations

import logging
from importlib import resources
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .config import RunConfig, apply_overrides, read_tree
from .evaluation import eof_context, lead_table, score
from .forecast import forecast_run
from . import pipeline as pl

log = logging.getLogger(__name__)


class SuiteSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seeds: list[int] = [0]
    static_archs: list[Literal["cnn", "convlstm", "afno", "unet"]] = ["cnn", "convlstm", "afno", "unet"]
    static_window: tuple[int, int] = (0, 0)
    unet_windows: list[tuple[int, int]] = [(0, 0), (1, 0), (6, 0), (3, 3)]
    ar_window: tuple[int, int] = (1, 0)
    ar_K: list[int] = [1, 6]
    # each AR model after the first starts from the previous one's weights
    ar_warm_start: bool = True
    H: int = Field(11, ge=1)


class SuiteConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    base: RunConfig = RunConfig()
    suite: SuiteSection = SuiteSection()


def bundled_config_path() -> Path:
    return Path(str(resources.files("geoemu") / "configs" / "benchmark_suite.yaml"))


def load_suite_config(path=None, overrides: list[str] | None = None) -> SuiteConfig:
    tree = read_tree(path if path is not None else bundled_config_path())
    return SuiteConfig.model_validate(apply_overrides(tree, overrides or []))


def _variant(base: RunConfig, seed: int, **model) -> RunConfig:
    tree = base.model_dump()
    tree["seed"] = seed
    tree["model"].update(model)
    if model.get("mode") != "ar":
        tree["training"]["rollout_K"] = None
    return RunConfig.model_validate(tree)


def _wname(w) -> str:
    return f"Z(t-{w[0]}..t+{w[1]})"


def run_suite(cfg: SuiteConfig, out: Path) -> list[dict]:
    """Train and score every cell of the matrix; returns the report rows."""
    s = cfg.suite
    out.mkdir(parents=True, exist_ok=True)
    rows: list[dict] = []
    for seed in s.seeds:
        base = cfg.base.model_copy(update={"seed": seed})
        ds = pl.load_data(base)
        splits = pl.make_splits(base, ds.grid.n_steps)
        data = pl.prepared(base, ds, splits)
        test = splits.test
        dg = base.diagnostics
        ctx = eof_context(data, test, dg.n_modes, tuple(dg.kinds), dg.annual_mean) \
            if len(test) % 12 == 0 else None
        basins = pl.basins_for(base, ds.grid)
        static_cache: dict = {}

        def static_cell(arch, window):
            key = (arch, tuple(window))
            if key not in static_cache:
                rc = _variant(base, seed, arch=arch, mode="static", window=tuple(window))
                log.info("suite seed %d: static %s %s", seed, arch, _wname(window))
                model = pl.new_model(rc, ds.stack.n_channels, ds.grid)
                model, hist = pl.fit(rc, model, data, splits)
                pred = pl.test_predictions(model, data, test)
                static_cache[key] = (model, hist, pl.flat_scores(score(pred, data, test, ctx, basins)))
            return static_cache[key]

        for arch in s.static_archs:
            _, hist, sc = static_cell(arch, s.static_window)
            rows.append({"table": "architectures", "seed": seed, "model": arch,
                         "window": _wname(s.static_window), "best_epoch": hist.best_epoch, **sc})
        for w in s.unet_windows:
            _, hist, sc = static_cell("unet", w)
            rows.append({"table": "windows", "seed": seed, "model": "unet", "window": _wname(w),
                         "best_epoch": hist.best_epoch, **sc})

        runs = [("persistence", None)]
        static_model, _, _ = static_cell("unet", s.ar_window)
        runs.append(("unet_static", static_model))
        prev = None
        for K in s.ar_K:
            rc = _variant(base, seed, arch="unet", mode="ar", window=tuple(s.ar_window))
            rc = rc.model_copy(update={"training": rc.training.model_copy(update={"rollout_K": K})})
            log.info("suite seed %d: unet AR-%d", seed, K)
            model = pl.new_model(rc, ds.stack.n_channels, ds.grid)
            if s.ar_warm_start and prev is not None:
                pl.warm_start(model, prev)
            model, _ = pl.fit(rc, model, data, splits)
            prev = model
            runs.append((f"unet_ar{K}", model))
        for name, model in runs:
            mode = "persistence" if model is None else (
                "autoregressive" if model.autoregressive else "static")
            run = forecast_run(model, data, test, s.H, mode)
            for r in lead_table(run, data, ctx, name):
                rows.append({"table": "leads", "seed": seed, **r})

    pl.write_json(out / "report.json", {"rows": rows})
    pl.write_csv(out / "report.csv", rows)
    return rows


def lead_means(rows: list[dict], model: str, metric: str = "rmse") -> dict[int, float]:
    """Seed-mean of a lead-table metric, keyed by lead."""
    sel = [r for r in rows if r["table"] == "leads" and r["model"] == model]
    leads = sorted({r["lead"] for r in sel})
    return {k: float(np.mean([r[metric] for r in sel if r["lead"] == k])) for k in leads}
