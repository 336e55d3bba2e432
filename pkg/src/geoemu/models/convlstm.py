import torch
from pydantic import BaseModel, ConfigDict, field_validator
from torch import nn

from ..preprocess import WindowSpec
from .base import EmulatorModel, init_weights


class ConvLSTMConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    hidden: list[int] = [16, 16, 16]
    kernel: int = 3

    @field_validator("hidden")
    @classmethod
    def _three_layers(cls, v):
        if not v or any(h < 1 for h in v):
            raise ValueError("hidden sizes must be positive")
        return v


class ConvLSTMCell(nn.Module):
    """Convolutional LSTM cell.

    ``input_conv`` carries the input-to-gate weights and the gate biases;
    ``hidden_conv`` carries the recurrent (hidden-to-gate) weights. Gate
    order in the stacked output: input, forget, output, candidate.
    """

    def __init__(self, in_channels: int, hidden: int, kernel: int = 3):
        super().__init__()
        self.hidden = hidden
        pad = kernel // 2
        self.input_conv = nn.Conv2d(in_channels, 4 * hidden, kernel, padding=pad)
        self.hidden_conv = nn.Conv2d(hidden, 4 * hidden, kernel, padding=pad, bias=False)

    def forward(self, x, state):
        h, c = state
        gates = self.input_conv(x) + self.hidden_conv(h)
        i, f, o, g = gates.chunk(4, dim=1)
        c = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
        h = torch.sigmoid(o) * torch.tanh(c)
        return h, c


class ConvLSTMNet(nn.Module):
    """Stacked ConvLSTM over a frame sequence; last hidden state -> 1 channel.

    The flat input holds ``seq_len`` frames of ``frame_channels`` each,
    oldest first, then ``state_channels`` extra channels that are appended
    to every frame.
    """

    def __init__(self, frame_channels: int, seq_len: int, state_channels: int,
                 hidden: list[int], kernel: int = 3):
        super().__init__()
        if seq_len < 1:
            raise ValueError(f"sequence length must be >= 1, got {seq_len}")
        self.frame_channels = frame_channels
        self.seq_len = seq_len
        self.state_channels = state_channels
        cells = []
        ch = frame_channels + state_channels
        for h in hidden:
            cells.append(ConvLSTMCell(ch, h, kernel))
            ch = h
        self.cells = nn.ModuleList(cells)
        self.head = nn.Conv2d(ch, 1, kernel, padding=kernel // 2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        N, _, L, W = x.shape
        S, C = self.seq_len, self.frame_channels
        frames = x[:, : S * C].reshape(N, S, C, L, W)
        extra = x[:, S * C:]
        states = [
            (x.new_zeros(N, cell.hidden, L, W), x.new_zeros(N, cell.hidden, L, W))
            for cell in self.cells
        ]
        for s in range(S):
            inp = frames[:, s]
            if self.state_channels:
                inp = torch.cat([inp, extra], dim=1)
            for k, cell in enumerate(self.cells):
                states[k] = cell(inp, states[k])
                inp = states[k][0]
        return self.head(states[-1][0])


def build_convlstm(in_channels: int, cfg: ConvLSTMConfig | None = None, *,
                   window: WindowSpec | None = None, autoregressive: bool = False,
                   seq_len: int | None = None, seed: int = 0,
                   pad_to_fit: bool = False) -> EmulatorModel:
    """The sequence length defaults to the predictor window length."""
    cfg = cfg or ConvLSTMConfig()
    window = window or WindowSpec()
    S = window.length if seq_len is None else seq_len
    if S < 1:
        raise ValueError(f"sequence length must be >= 1, got {S}")
    n_state = 1 if autoregressive else 0
    if (in_channels - n_state) % S:
        raise ValueError(f"{in_channels - n_state} predictor channels do not split into {S} frames")
    net = ConvLSTMNet((in_channels - n_state) // S, S, n_state, list(cfg.hidden), cfg.kernel)
    init_weights(net, seed)
    return EmulatorModel("convlstm", net, in_channels, window, autoregressive,
                         config=cfg.model_dump(), pad_to_fit=pad_to_fit)
