"""Stage functions shared by the CLI commands and the benchmark suite."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .container import load_dataset, read_container, write_container
from .diagnostics import basin_masks, compute_anomalies, correlation_map, nrmse_map, pc_compare, project
from .evaluation import eof_context, lead_table, score
from .forecast import forecast_run, static_reconstruct
from .grid import GridSpec, PredictorStack, SplitSpec, TargetSeries, split_dataset, year_aligned_split
from .models import EmulatorModel, build_model, load_checkpoint, save_checkpoint
from .preprocess import PreparedData, WindowSpec, prepare
from .synthetic import generate_synthetic
from .training import train_autoregressive, train_static

log = logging.getLogger(__name__)


@dataclass
class Dataset:
    grid: GridSpec
    stack: PredictorStack
    target: TargetSeries
    truth: object = None


@dataclass
class Splits:
    spec: SplitSpec
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def load_data(cfg: RunConfig) -> Dataset:
    if cfg.data.path:
        return Dataset(*load_dataset(cfg.data.path, cfg.data.channel_names, cfg.data.target_name))
    return Dataset(*generate_synthetic(cfg.data.synthetic, cfg.seed))


def make_splits(cfg: RunConfig, n_steps: int) -> Splits:
    sc = cfg.data.split
    if sc.train_range is None or sc.test_range is None:
        default = year_aligned_split(n_steps, sc.test_years, sc.gap_years, sc.val_fraction)
        spec = SplitSpec(sc.train_range or default.train_range,
                         sc.test_range or default.test_range, sc.val_fraction)
    else:
        spec = SplitSpec(tuple(sc.train_range), tuple(sc.test_range), sc.val_fraction)
    tr, va, te = split_dataset(spec, n_steps, cfg.seed)
    return Splits(spec, tr, va, te)


def prepared(cfg: RunConfig, ds: Dataset, splits: Splits, z_stats=None, y_stats=None) -> PreparedData:
    a, b = splits.spec.train_range
    return prepare(ds.grid, ds.stack, ds.target, np.arange(a, b + 1), cfg.preprocess,
                   z_stats=z_stats, y_stats=y_stats)


def new_model(cfg: RunConfig, n_channels: int, grid: GridSpec) -> EmulatorModel:
    m = cfg.model
    if m.mode == "persistence":
        raise ConfigError("persistence has no trainable model")
    window = WindowSpec(*m.window)
    ar = m.mode == "ar"
    return build_model(m.arch, n_channels * window.length + int(ar), m.arch_config(),
                       window=window, autoregressive=ar, seed=cfg.seed,
                       grid_shape=grid.shape, pad_to_fit=m.pad_to_fit)


def warm_start(model: EmulatorModel, source: EmulatorModel) -> None:
    """Copy weights from a trained model of identical structure."""
    if source.arch != model.arch or source.in_channels != model.in_channels or \
            source.autoregressive != model.autoregressive:
        raise ConfigError(f"cannot warm-start {model.arch} ({model.in_channels} channels) from "
                          f"{source.arch} ({source.in_channels} channels)")
    model.load_state_dict(source.state_dict())


def fit(cfg: RunConfig, model: EmulatorModel, data: PreparedData, splits: Splits):
    tc = cfg.training
    if model.autoregressive:
        if tc.rollout_K is None:
            tc = tc.model_copy(update={"rollout_K": 1})
        return train_autoregressive(model, data, (splits.train, splits.val), tc)
    return train_static(model, data, (splits.train, splits.val), tc)


def train_stage(cfg: RunConfig, out: Path, ds: Dataset | None = None):
    ds = ds or load_data(cfg)
    splits = make_splits(cfg, ds.grid.n_steps)
    data = prepared(cfg, ds, splits)
    model = new_model(cfg, ds.stack.n_channels, ds.grid)
    if cfg.model.init_checkpoint:
        warm_start(model, load_checkpoint(cfg.model.init_checkpoint)[0])
    model, hist = fit(cfg, model, data, splits)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.npz", model, data.z_stats, data.y_stats,
                    {"mode": cfg.model.mode, "seed": cfg.seed})
    hist.to_csv(out / "history.csv")
    return model, hist, data, splits


def restore(cfg: RunConfig, ds: Dataset, splits: Splits):
    """(model or None, prepared data) from the configured checkpoint."""
    if cfg.model.mode == "persistence":
        return None, prepared(cfg, ds, splits)
    if not cfg.model.checkpoint:
        raise ConfigError("model.checkpoint is required for this command")
    model, z_stats, y_stats, _ = load_checkpoint(cfg.model.checkpoint)
    expect = ds.stack.n_channels * model.window.length + int(model.autoregressive)
    if model.in_channels != expect:
        raise ConfigError(f"checkpoint expects {model.in_channels} input channels, data gives {expect}")
    if model.arch == "afno" and not model.pad_to_fit and tuple(model.config["grid_shape"]) != ds.grid.shape:
        raise ConfigError(f"checkpoint grid {tuple(model.config['grid_shape'])} does not match data {ds.grid.shape}")
    if z_stats.mean.shape[-1] != ds.stack.n_channels or (
            y_stats.mean.size > 1 and y_stats.mean.shape != ds.grid.shape):
        raise ConfigError("checkpoint normalization statistics do not match the data grid")
    return model, prepared(cfg, ds, splits, z_stats, y_stats)


def test_predictions(model: EmulatorModel | None, data: PreparedData, test: np.ndarray) -> np.ndarray:
    """Static reconstruction, or lead-1 forecasts for AR/persistence."""
    if len(test) == 0:
        raise ConfigError("no test samples")
    if model is not None and not model.autoregressive:
        return static_reconstruct(model, data, test)
    mode = "persistence" if model is None else "autoregressive"
    return forecast_run(model, data, test, 1, mode).at_lead(1)


def basins_for(cfg: RunConfig, grid: GridSpec):
    boxes = cfg.diagnostics.basins
    if boxes is not None:
        boxes = {k: {kk: list(vv) for kk, vv in v.items()} for k, v in boxes.items()}
    return basin_masks(grid, boxes)


def flat_scores(row: dict) -> dict:
    out = {}
    for scope, val in row.items():
        if scope == "pc":
            out.update(val)
        else:
            for k, v in val.to_dict().items():
                if k != "scope":
                    out[f"{scope}.{k}"] = v
    return out


def write_csv(path: Path, rows: list[dict]) -> None:
    keys: list[str] = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in keys})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def write_series(path: Path, grid: GridSpec, times: np.ndarray, fields: dict[str, np.ndarray],
                 attrs: dict | None = None) -> None:
    """(T', L, W) fields on the grid, with the absolute step index as time."""
    variables = {"time": (("time",), np.asarray(times, dtype=np.int64))}
    for name, arr in fields.items():
        variables[name] = (("time", "y", "x"), np.asarray(arr, dtype=np.float64))
    variables["valid_mask"] = (("y", "x"), grid.valid_mask)
    write_container(path, {"time": len(times), "y": grid.length, "x": grid.width}, variables, attrs)


def read_series(path, name: str = "prediction"):
    dims, variables, _ = read_container(path)
    if name not in variables:
        raise ConfigError(f"{path}: no variable {name!r}")
    return variables["time"][1].astype(int), variables[name][1]


def write_maps(path: Path, grid: GridSpec, maps: dict[str, np.ndarray]) -> None:
    variables = {k: (("y", "x"), v) for k, v in maps.items()}
    variables["valid_mask"] = (("y", "x"), grid.valid_mask)
    write_container(path, {"y": grid.length, "x": grid.width}, variables, {"kind": "maps"})


def _external_prediction(path, ds: Dataset, test: np.ndarray) -> np.ndarray:
    times, pred = read_series(path)
    if pred.shape[1:] != ds.grid.shape:
        raise ConfigError(f"prediction grid {pred.shape[1:]} does not match data {ds.grid.shape}")
    if not np.array_equal(times, test):
        raise ConfigError("prediction months do not match the test period")
    return pred


def evaluate_stage(cfg: RunConfig, out: Path, ds: Dataset | None = None) -> dict:
    ds = ds or load_data(cfg)
    splits = make_splits(cfg, ds.grid.n_steps)
    test = splits.test
    if cfg.diagnostics.prediction:
        # score an external prediction file instead of a checkpoint
        data = prepared(cfg, ds, splits)
        pred = _external_prediction(cfg.diagnostics.prediction, ds, test)
    else:
        model, data = restore(cfg, ds, splits)
        pred = test_predictions(model, data, test)
    obs = data.y_log()[test]
    ctx = eof_context(data, test, cfg.diagnostics.n_modes, tuple(cfg.diagnostics.kinds),
                      cfg.diagnostics.annual_mean) if len(test) % 12 == 0 else None
    row = score(pred, data, test, ctx, basins_for(cfg, ds.grid))
    mask = data.obs[test] & np.isfinite(pred)
    out.mkdir(parents=True, exist_ok=True)
    metrics = [v.to_dict() for k, v in row.items() if k != "pc"]
    write_csv(out / "metrics.csv", metrics)
    write_json(out / "metrics.json", {"metrics": metrics, "pc": row.get("pc", {})})
    write_maps(out / "maps.nc", ds.grid, {
        "correlation": correlation_map(pred, obs, mask),
        "nrmse": nrmse_map(pred, obs, mask),
    })
    sel = mask
    np.savez(out / "scatter.npz", pred=pred[sel], obs=obs[sel])
    write_series(out / "prediction.nc", ds.grid, test, {"prediction": pred},
                 {"kind": "prediction", "run_mode": cfg.model.mode})
    return row


def forecast_stage(cfg: RunConfig, out: Path, ds: Dataset | None = None) -> list[dict]:
    ds = ds or load_data(cfg)
    splits = make_splits(cfg, ds.grid.n_steps)
    model, data = restore(cfg, ds, splits)
    if model is not None and not model.autoregressive:
        mode = "static"
    else:
        mode = "persistence" if model is None else "autoregressive"
    test = splits.test
    if len(test) == 0:
        raise ConfigError("no test samples")
    run = forecast_run(model, data, test, cfg.forecast.H, mode)
    ctx = eof_context(data, test, cfg.diagnostics.n_modes, tuple(cfg.diagnostics.kinds),
                      cfg.diagnostics.annual_mean) if len(test) % 12 == 0 else None
    rows = lead_table(run, data, ctx, cfg.model.mode if model is None else
                      f"{model.arch}_{cfg.model.mode}")
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "lead_table.csv", rows)
    variables = {
        "time": (("time",), run.target_times.astype(np.int64)),
        "lead": (("lead",), run.lead_times.astype(np.int64)),
        "prediction": (("lead", "time", "y", "x"), run.predictions),
        "filled": (("lead", "time"), run.filled),
        "valid_mask": (("y", "x"), ds.grid.valid_mask),
    }
    write_container(out / "forecast.nc", {"lead": len(run.lead_times), "time": len(test),
                                          "y": ds.grid.length, "x": ds.grid.width},
                    variables, {"kind": "forecast", "run_mode": mode})
    return rows


def eof_stage(cfg: RunConfig, out: Path, ds: Dataset | None = None) -> list[dict]:
    """EOFs of the observed test period, plus projection and PC comparison of a
    prediction file when ``diagnostics.prediction`` is set."""
    ds = ds or load_data(cfg)
    splits = make_splits(cfg, ds.grid.n_steps)
    data = prepared(cfg, ds, splits)
    test = splits.test
    if len(test) % 12:
        raise ConfigError(f"EOF analysis needs whole years; the test period has {len(test)} months")
    pred = None
    if cfg.diagnostics.prediction:
        pred = _external_prediction(cfg.diagnostics.prediction, ds, test)
    dg = cfg.diagnostics
    ctx = eof_context(data, test, dg.n_modes, tuple(dg.kinds), dg.annual_mean)
    out.mkdir(parents=True, exist_ok=True)
    pcs_rows, cmp_rows = [], []
    for kind, res in ctx.results.items():
        n = len(res.explained_variance)
        write_container(out / f"eof_{kind}.nc", {"mode": n, "time": len(test), "y": ds.grid.length,
                                                  "x": ds.grid.width}, {
            "time": (("time",), test.astype(np.int64)),
            "patterns": (("mode", "y", "x"), np.nan_to_num(res.spatial_patterns)),
            "pcs": (("mode", "time"), res.pcs),
            "explained_variance": (("mode",), res.explained_variance),
            "valid_mask": (("y", "x"), res.mask),
        }, {"kind": "eof", "anomaly_kind": kind})
        sources = {"obs": res.pcs}
        if pred is not None:
            anom = compute_anomalies(pred, kind, data.year[test], data.month[test],
                                     np.isfinite(pred), dg.annual_mean)
            sources["pred"] = project(anom, res.spatial_patterns, res.mask)
            for m in range(n):
                corr, rmse = pc_compare(res.pcs[m], sources["pred"][m])
                cmp_rows.append({"kind": kind, "mode": m + 1, "corr": corr, "rmse": rmse,
                                 "explained_variance": float(res.explained_variance[m])})
        for src, pcs in sources.items():
            for m in range(n):
                for j, t in enumerate(test):
                    pcs_rows.append({"kind": kind, "source": src, "mode": m + 1, "time": int(t),
                                     "value": float(pcs[m, j])})
    write_csv(out / "pcs.csv", pcs_rows)
    if cmp_rows:
        write_csv(out / "pc_compare.csv", cmp_rows)
    return cmp_rows
