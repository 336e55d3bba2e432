"""Operator zoo: CNN, ConvLSTM, AFNO and UNet behind one forward contract."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from ..preprocess import NormStats, WindowSpec
from .afno import AFNOConfig, build_afno
from .base import (ARCHS, EmulatorModel, GridShapeError, count_parameters, forward,
                   parameter_breakdown)
from .cnn import CNNConfig, build_cnn
from .convlstm import ConvLSTMConfig, build_convlstm
from .unet import UNetConfig, build_unet

CONFIGS = {"cnn": CNNConfig, "convlstm": ConvLSTMConfig, "afno": AFNOConfig, "unet": UNetConfig}

__all__ = [
    "ARCHS", "EmulatorModel", "GridShapeError", "count_parameters", "parameter_breakdown",
    "forward", "build_cnn", "build_convlstm", "build_afno", "build_unet", "build_model",
    "save_checkpoint", "load_checkpoint", "CNNConfig", "ConvLSTMConfig", "AFNOConfig",
    "UNetConfig",
]


def build_model(arch: str, in_channels: int, cfg=None, *, window: WindowSpec | None = None,
                autoregressive: bool = False, seed: int = 0, grid_shape=None,
                pad_to_fit: bool = False) -> EmulatorModel:
    if arch not in CONFIGS:
        raise ValueError(f"unknown architecture {arch!r}; choose from {', '.join(ARCHS)}")
    if isinstance(cfg, dict):
        cfg = {k: v for k, v in cfg.items() if k != "grid_shape"}
        cfg = CONFIGS[arch](**cfg)
    kw = dict(window=window, autoregressive=autoregressive, seed=seed, pad_to_fit=pad_to_fit)
    if arch == "afno":
        if grid_shape is None:
            raise ValueError("AFNO needs grid_shape at build time")
        return build_afno(in_channels, cfg, grid_shape=tuple(grid_shape), **kw)
    builder = {"cnn": build_cnn, "convlstm": build_convlstm, "unet": build_unet}[arch]
    return builder(in_channels, cfg, **kw)


def save_checkpoint(path, model: EmulatorModel, z_stats: NormStats, y_stats: NormStats,
                    extra: dict | None = None) -> None:
    """Write parameters plus everything needed to rebuild and reuse the model."""
    meta = {
        "arch": model.arch,
        "in_channels": model.in_channels,
        "window": [model.window.delta_minus, model.window.delta_plus],
        "autoregressive": model.autoregressive,
        "delta": model.delta,
        "config": model.config,
        "pad_to_fit": model.pad_to_fit,
        "dtype": str(next(model.parameters()).dtype).replace("torch.", ""),
        "z_stats": z_stats.to_dict(),
        "y_stats": y_stats.to_dict(),
        "extra": extra or {},
    }
    arrays = {f"param/{k}": v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_checkpoint(path):
    """Return ``(model, z_stats, y_stats, meta)``."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        state = {k[len("param/"):]: torch.from_numpy(data[k].copy()) for k in data.files
                 if k.startswith("param/")}
    cfg = dict(meta["config"])
    model = build_model(meta["arch"], meta["in_channels"], cfg,
                        window=WindowSpec(*meta["window"]),
                        autoregressive=meta["autoregressive"],
                        grid_shape=cfg.get("grid_shape"), pad_to_fit=False)
    model.pad_to_fit = meta["pad_to_fit"]
    model.to(getattr(torch, meta["dtype"]))
    model.load_state_dict(state)
    return (model, NormStats.from_dict(meta["z_stats"]), NormStats.from_dict(meta["y_stats"]),
            meta)
