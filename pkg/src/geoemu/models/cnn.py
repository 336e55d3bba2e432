import torch
from pydantic import BaseModel, ConfigDict
from torch import nn

from ..preprocess import WindowSpec
from .base import EmulatorModel, init_weights


class CNNConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    hidden: int = 72
    depth: int = 4  # conv layers including the linear output layer


class PlainCNN(nn.Module):
    """3x3 / stride 1 / padding 1 convolutions with ReLU, linear last layer."""

    def __init__(self, in_channels: int, hidden: int, depth: int):
        super().__init__()
        if depth < 1:
            raise ValueError("CNN depth must be >= 1")
        layers = []
        ch = in_channels
        for _ in range(depth - 1):
            layers += [nn.Conv2d(ch, hidden, 3, stride=1, padding=1), nn.ReLU()]
            ch = hidden
        layers.append(nn.Conv2d(ch, 1, 3, stride=1, padding=1))
        self.body = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)


def build_cnn(in_channels: int, cfg: CNNConfig | None = None, *, window: WindowSpec | None = None,
              autoregressive: bool = False, seed: int = 0, pad_to_fit: bool = False) -> EmulatorModel:
    cfg = cfg or CNNConfig()
    net = PlainCNN(in_channels, cfg.hidden, cfg.depth)
    init_weights(net, seed)
    return EmulatorModel("cnn", net, in_channels, window or WindowSpec(), autoregressive,
                         config=cfg.model_dump(), pad_to_fit=pad_to_fit)
