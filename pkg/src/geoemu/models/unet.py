"""Three-scale residual UNet with bilinear (multiplicative) blocks.

Block realization: ``relu(conv_a(x) + conv_b(x) * g(conv_c(x)))`` plus a
residual (1x1 projection when channel counts differ), with ``g = tanh`` by
default or the identity (``gate="none"``, a plain bilinear product). The
multiplicative term is one concrete reading of "bilinear block". Bounding
one factor keeps stacked blocks from compounding into a high-degree
polynomial, which otherwise blows up when outputs are fed back as inputs.
"""

import torch
import torch.nn.functional as F
from typing import Literal

from pydantic import BaseModel, ConfigDict
from torch import nn

from ..preprocess import WindowSpec
from .base import EmulatorModel, init_weights


class UNetConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    width: int = 16
    bilinear_scale: float = 0.5  # init damping of the product branch
    gate: Literal["tanh", "none"] = "tanh"
    head_scale: float = 0.1  # init damping of the output layer (keeps self-fed roll-outs bounded)


class BilinearBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, gate: str = "tanh"):
        super().__init__()
        self.gate = torch.tanh if gate == "tanh" else (lambda v: v)
        self.lin = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.left = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.right = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x):
        y = F.relu(self.lin(x) + self.left(x) * self.gate(self.right(x)))
        return y + self.skip(x)


class Up(nn.Module):
    """2x bilinear interpolation followed by a 3x3 conv."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, padding=1)

    def forward(self, x):
        return self.conv(F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False))


class UNet3(nn.Module):
    def __init__(self, in_channels: int, width: int, gate: str = "tanh"):
        super().__init__()
        w = width
        self.enc1 = BilinearBlock(in_channels, w, gate)
        self.enc2 = BilinearBlock(w, 2 * w, gate)
        self.enc3 = BilinearBlock(2 * w, 4 * w, gate)
        self.up2 = Up(4 * w, 2 * w)
        self.dec2 = BilinearBlock(4 * w, 2 * w, gate)
        self.up1 = Up(2 * w, w)
        self.dec1 = BilinearBlock(2 * w, w, gate)
        self.head = nn.Conv2d(w, 1, 1)

    def features(self, x):
        """Encoder features at the three scales (full, 1/2, 1/4)."""
        e1 = self.enc1(x)
        e2 = self.enc2(F.avg_pool2d(e1, 2))
        e3 = self.enc3(F.avg_pool2d(e2, 2))
        return e1, e2, e3

    def forward(self, x):
        e1, e2, e3 = self.features(x)
        d2 = self.dec2(torch.cat([self.up2(e3), e2], dim=1))
        d1 = self.dec1(torch.cat([self.up1(d2), e1], dim=1))
        return self.head(d1)


def build_unet(in_channels: int, cfg: UNetConfig | None = None, *, window: WindowSpec | None = None,
               autoregressive: bool = False, seed: int = 0, pad_to_fit: bool = False) -> EmulatorModel:
    cfg = cfg or UNetConfig()
    net = UNet3(in_channels, cfg.width, cfg.gate)
    init_weights(net, seed)
    with torch.no_grad():
        for m in net.modules():
            if isinstance(m, BilinearBlock):
                m.left.weight.mul_(cfg.bilinear_scale)
                m.right.weight.mul_(cfg.bilinear_scale)
        net.head.weight.mul_(cfg.head_scale)
    return EmulatorModel("unet", net, in_channels, window or WindowSpec(), autoregressive,
                         config=cfg.model_dump(), multiple=4, pad_to_fit=pad_to_fit)
