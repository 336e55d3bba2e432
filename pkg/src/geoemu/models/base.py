"""Shared emulator wrapper: shape contract, padding, init, parameter counting."""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from ..preprocess import WindowSpec

ARCHS = ("cnn", "convlstm", "afno", "unet")


class GridShapeError(ValueError):
    """Input grid is incompatible with the architecture's down-sampling."""


class EmulatorModel(nn.Module):
    """A network used as a static (F) or auto-regressive (G) emulator.

    Inputs are ``(N, in_channels, L, W)`` tensors: the flattened predictor
    window, oldest frame first, followed (auto-regressive mode only) by one
    channel holding the previous state. Output is ``(N, 1, L, W)``.
    """

    def __init__(self, arch: str, net: nn.Module, in_channels: int, window: WindowSpec,
                 autoregressive: bool = False, delta: int = 1, config: dict | None = None,
                 multiple: int = 1, pad_to_fit: bool = False):
        super().__init__()
        if arch not in ARCHS:
            raise ValueError(f"unknown architecture {arch!r}")
        self.arch = arch
        self.net = net
        self.in_channels = in_channels
        self.window = window
        self.autoregressive = autoregressive
        self.delta = delta
        self.config = dict(config or {})
        self.multiple = multiple
        self.pad_to_fit = pad_to_fit

    @property
    def n_state_channels(self) -> int:
        return 1 if self.autoregressive else 0

    def check_input(self, x: torch.Tensor) -> None:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"{self.arch}: expected input (N, {self.in_channels}, L, W), got {tuple(x.shape)}"
            )
        if not torch.isfinite(x).all():
            raise ValueError(f"{self.arch}: input contains non-finite values")

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        self.check_input(x)
        L, W = x.shape[-2:]
        m = self.multiple
        pad_l, pad_w = (-L) % m, (-W) % m
        if pad_l or pad_w:
            if not self.pad_to_fit:
                raise GridShapeError(
                    f"{self.arch}: grid {L}x{W} must be divisible by {m} (enable pad_to_fit to pad)"
                )
            x = F.pad(x, (0, pad_w, 0, pad_l))
        out = self.net(x)
        return out[..., :L, :W]


def init_weights(module: nn.Module, seed: int | None = None) -> None:
    """He (fan-in) normal init for conv/linear weights, zero biases."""
    gen = torch.Generator().manual_seed(seed) if seed is not None else None
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            fan_in = m.weight[0].numel()
            with torch.no_grad():
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen) * math.sqrt(2.0 / fan_in))
                if m.bias is not None:
                    m.bias.zero_()


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def parameter_breakdown(model: nn.Module) -> dict[str, int]:
    """Parameter count per top-level sub-group of the wrapped network."""
    net = model.net if isinstance(model, EmulatorModel) else model
    groups: dict[str, int] = {}
    for name, p in net.named_parameters():
        key = name.split(".")[0]
        groups[key] = groups.get(key, 0) + p.numel()
    return groups


def forward(model: EmulatorModel, inputs) -> np.ndarray:
    """Evaluate on channels-last arrays.

    Accepts ``(L, W, C_in)``, a batch ``(N, L, W, C_in)``, or for ConvLSTM a
    frame sequence ``(S, L, W, C)`` which is flattened oldest-first. Returns
    ``(L, W, 1)`` (or ``(N, L, W, 1)`` for batches).
    """
    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 3
    if model.arch == "convlstm" and x.ndim == 4 and x.shape[-1] != model.in_channels:
        x = np.concatenate(list(x), axis=-1)
        single = True
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[-1] != model.in_channels:
        raise ValueError(f"expected (..., L, W, {model.in_channels}) input, got {np.shape(inputs)}")
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        t = torch.as_tensor(x.transpose(0, 3, 1, 2).copy(), dtype=dtype)
        out = model(t).numpy().transpose(0, 2, 3, 1)
    return out[0] if single else out
