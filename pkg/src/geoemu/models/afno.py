"""Adaptive Fourier neural operator on p x p patch tokens."""

import math

import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict
from torch import nn

from ..preprocess import WindowSpec
from .base import EmulatorModel, GridShapeError, init_weights


class AFNOConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    patch: int = 8
    embed_dim: int = 64
    depth: int = 4
    n_blocks: int = 8
    threshold: float = 0.01
    mlp_ratio: float = 2.0


def _softshrink_complex(z: torch.Tensor, lam: float) -> torch.Tensor:
    if lam == 0:
        return z
    return torch.complex(F.softshrink(z.real, lam), F.softshrink(z.imag, lam))


class SpectralMixer(nn.Module):
    """Global token mixing through a learned per-frequency response.

    Tokens ``(N, h, w, d)`` are layer-normed, taken to the 2-D Fourier domain
    over the token grid, multiplied at every frequency by a block-diagonal
    complex matrix, soft-thresholded and transformed back. ``freq_weight``
    stores the full response; its identity part is the residual connection,
    so the returned tokens are ``x + irfft(S(( W - I ) rfft(norm(x))))`` and a
    pure-identity response makes the mixer an exact pass-through.
    """

    def __init__(self, dim: int, grid: tuple[int, int], n_blocks: int, threshold: float):
        super().__init__()
        if dim % n_blocks:
            raise ValueError(f"embed_dim {dim} not divisible by n_blocks {n_blocks}")
        h, w = grid
        self.grid = grid
        self.n_blocks = n_blocks
        self.block = dim // n_blocks
        self.threshold = threshold
        self.norm = nn.LayerNorm(dim)
        eye = torch.eye(self.block).expand(h, w // 2 + 1, n_blocks, self.block, self.block)
        weight = torch.stack([eye, torch.zeros_like(eye)], dim=-1).clone()
        self.freq_weight = nn.Parameter(weight)  # (..., 2) = real, imag

    def reset_noise(self, scale: float, generator=None) -> None:
        with torch.no_grad():
            self.freq_weight.add_(scale * torch.randn(self.freq_weight.shape, generator=generator))

    def set_identity(self) -> None:
        with torch.no_grad():
            self.freq_weight.zero_()
            self.freq_weight[..., 0] = torch.eye(self.block)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        N, h, w, d = x.shape
        spec = torch.fft.rfft2(self.norm(x), dim=(1, 2), norm="ortho")
        spec = spec.reshape(N, h, w // 2 + 1, self.n_blocks, self.block)
        eye = torch.eye(self.block, dtype=self.freq_weight.dtype, device=x.device)
        delta = torch.complex(self.freq_weight[..., 0] - eye, self.freq_weight[..., 1])
        mixed = torch.einsum("nhwbi,hwbio->nhwbo", spec, delta)
        mixed = _softshrink_complex(mixed, self.threshold).reshape(N, h, w // 2 + 1, d)
        return x + torch.fft.irfft2(mixed, s=(h, w), dim=(1, 2), norm="ortho")


class FeedForward(nn.Module):
    """Token-wise MLP sub-block with pre-norm (no residual here)."""

    def __init__(self, dim: int, ratio: float):
        super().__init__()
        hidden = max(1, int(round(dim * ratio)))
        self.norm = nn.LayerNorm(dim)
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(F.gelu(self.fc1(self.norm(x))))


class AFNOBlock(nn.Module):
    def __init__(self, dim, grid, n_blocks, threshold, mlp_ratio):
        super().__init__()
        self.mixer = SpectralMixer(dim, grid, n_blocks, threshold)
        self.ff = FeedForward(dim, mlp_ratio)

    def forward(self, x):
        x = self.mixer(x)
        return x + self.ff(x)


class AFNONet(nn.Module):
    def __init__(self, in_channels: int, grid_shape: tuple[int, int], cfg: AFNOConfig):
        super().__init__()
        p = cfg.patch
        L, W = grid_shape
        if L % p or W % p:
            raise GridShapeError(f"grid {L}x{W} not divisible by patch size {p}")
        self.patch = p
        self.tokens = (L // p, W // p)
        self.embed = nn.Conv2d(in_channels, cfg.embed_dim, kernel_size=p, stride=p)
        self.pos = nn.Parameter(torch.zeros(1, *self.tokens, cfg.embed_dim))
        self.blocks = nn.ModuleList(
            AFNOBlock(cfg.embed_dim, self.tokens, cfg.n_blocks, cfg.threshold, cfg.mlp_ratio)
            for _ in range(cfg.depth)
        )
        self.head = nn.Linear(cfg.embed_dim, p * p)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if tuple(s // self.patch for s in x.shape[-2:]) != self.tokens:
            raise GridShapeError(
                f"AFNO built for a {self.tokens} token grid, got input {tuple(x.shape[-2:])}"
            )
        tok = self.embed(x).permute(0, 2, 3, 1) + self.pos
        for blk in self.blocks:
            tok = blk(tok)
        out = self.head(tok).permute(0, 3, 1, 2)  # (N, p*p, h, w)
        return F.pixel_shuffle(out, self.patch)


def token_grid(grid_shape, patch: int) -> tuple[int, int]:
    L, W = grid_shape
    if L % patch or W % patch:
        raise GridShapeError(f"grid {L}x{W} not divisible by patch size {patch}")
    return L // patch, W // patch


def build_afno(in_channels: int, cfg: AFNOConfig | None = None, *, grid_shape: tuple[int, int],
               window: WindowSpec | None = None, autoregressive: bool = False, seed: int = 0,
               pad_to_fit: bool = False) -> EmulatorModel:
    """``grid_shape`` fixes the token grid (positional encoding and per-frequency
    weights depend on it). With ``pad_to_fit`` the grid is padded up to a
    multiple of the patch size."""
    cfg = cfg or AFNOConfig()
    p = cfg.patch
    L, W = grid_shape
    if pad_to_fit:
        L, W = math.ceil(L / p) * p, math.ceil(W / p) * p
    elif L % p or W % p:
        raise GridShapeError(f"grid {L}x{W} not divisible by patch size {p}")
    net = AFNONet(in_channels, (L, W), cfg)
    init_weights(net, seed)
    gen = torch.Generator().manual_seed(seed + 1)
    with torch.no_grad():
        net.pos.copy_(0.02 * torch.randn(net.pos.shape, generator=gen))
    for blk in net.blocks:
        blk.mixer.reset_noise(0.02, gen)
    return EmulatorModel("afno", net, in_channels, window or WindowSpec(), autoregressive,
                         config={**cfg.model_dump(), "grid_shape": [L, W]}, multiple=p,
                         pad_to_fit=pad_to_fit)
