"""Basic raster/line renderings of CLI artifacts."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .config import ConfigError  # noqa: E402
from .container import read_container  # noqa: E402


def _read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def plot_leads(rows: list[dict], out: Path, metric: str = "rmse") -> list[Path]:
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in dict.fromkeys(r["model"] for r in rows):
        sel = [r for r in rows if r["model"] == name and r.get(metric, "") != ""]
        leads = sorted({int(r["lead"]) for r in sel})
        vals = [np.mean([float(r[metric]) for r in sel if int(r["lead"]) == k]) for k in leads]
        ax.plot(leads, vals, marker="o", label=name)
    ax.set_xlabel("lead (months)")
    ax.set_ylabel(metric.upper())
    ax.legend()
    path = out / f"leads_{metric}.png"
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return [path]


def plot_pcs(rows: list[dict], out: Path) -> list[Path]:
    paths = []
    for kind in dict.fromkeys(r["kind"] for r in rows):
        for mode in sorted({int(r["mode"]) for r in rows if r["kind"] == kind}):
            fig, ax = plt.subplots(figsize=(7, 3))
            for src in dict.fromkeys(r["source"] for r in rows):
                sel = [r for r in rows if r["kind"] == kind and int(r["mode"]) == mode and r["source"] == src]
                ax.plot([int(r["time"]) for r in sel], [float(r["value"]) for r in sel], label=src)
            ax.set_title(f"{kind} PC {mode}")
            ax.legend()
            path = out / f"pc_{kind}_{mode}.png"
            fig.savefig(path, dpi=100)
            plt.close(fig)
            paths.append(path)
    return paths


def plot_maps(path, out: Path) -> list[Path]:
    _, variables, _ = read_container(path)
    valid = variables.get("valid_mask", (None, None))[1]
    paths = []
    for name, (dims, arr) in variables.items():
        if dims != ("y", "x") or name == "valid_mask":
            continue
        data = np.ma.masked_invalid(np.where(valid.astype(bool), arr, np.nan) if valid is not None else arr)
        fig, ax = plt.subplots(figsize=(7, 3.5))
        im = ax.imshow(data, origin="lower", cmap="viridis")  # masked cells stay transparent
        fig.colorbar(im, ax=ax)
        ax.set_title(name)
        p = out / f"map_{name}.png"
        fig.savefig(p, dpi=100, transparent=True)
        plt.close(fig)
        paths.append(p)
    return paths


def plot_scatter(path, out: Path) -> list[Path]:
    with np.load(path) as d:
        pred, obs = d["pred"], d["obs"]
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.hist2d(obs, pred, bins=60, cmap="magma_r")
    lo, hi = float(min(obs.min(), pred.min())), float(max(obs.max(), pred.max()))
    ax.plot([lo, hi], [lo, hi], "k--", lw=0.8)
    ax.set_xlabel("observed (log)")
    ax.set_ylabel("predicted (log)")
    p = out / "scatter.png"
    fig.savefig(p, dpi=100)
    plt.close(fig)
    return [p]


def plot_artifact(path, out) -> list[Path]:
    """Render a recognized artifact; returns the written image paths."""
    path, out = Path(path), Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if not path.exists():
        raise ConfigError(f"artifact {path} does not exist")
    if path.suffix == ".csv":
        rows = _read_csv(path)
        cols = set(rows[0]) if rows else set()
        if {"lead", "model", "rmse"} <= cols:
            return plot_leads([r for r in rows if r.get("table", "leads") == "leads"], out)
        if {"kind", "source", "mode", "value"} <= cols:
            return plot_pcs(rows, out)
    elif path.suffix == ".nc":
        _, _, attrs = read_container(path)
        if attrs.get("kind") == "maps":
            return plot_maps(path, out)
    elif path.suffix == ".npz":
        with np.load(path) as d:
            if {"pred", "obs"} <= set(d.files):
                return plot_scatter(path, out)
    raise ConfigError(f"unrecognized artifact {path}")
