"""Deterministic synthetic predictor/target datasets with a known ground truth.

Predictors are built from a 12-month cycle, a slow multi-year oscillation,
static spatial patterns and smooth Gaussian noise. The target (log space) is

    Y(t) = offset + a * tanh(b * Z[tanh_ch](t)) + c * Z[lag_ch](t-1)**2
           + d * Z[static_ch](t) + r(t) + eps(t)

where ``r`` is an optional spatially coherent AR(1) "memory" anomaly that no
predictor carries (it is what auto-regressive emulators can exploit) and
``eps`` is white observation noise. With ``linear=True`` the tanh term is
replaced by ``a * Z[tanh_ch](t)``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.ndimage import gaussian_filter

from .grid import REFERENCE_CHANNELS, GridSpec, PredictorStack, TargetSeries, default_edges


class SyntheticConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    width: int = 32
    length: int = 16
    n_steps: int = 120
    channel_names: list[str] = Field(default_factory=lambda: list(REFERENCE_CHANNELS))
    land_fraction: float = 0.15
    seasonal_amplitude: float = 1.0
    lowfreq_amplitude: float = 0.5
    lowfreq_period: float = 48.0
    pattern_amplitude: float = 0.5
    predictor_noise: float = 0.6
    noise_sigma: float = 0.05
    memory_sigma: float = 0.0
    memory_rho: float = 0.8
    # ground-truth functional
    offset: float = -1.5
    a: float = 0.6
    b: float = 1.0
    c: float = 0.35
    d: float = 0.3
    linear: bool = False
    tanh_channel: int = 1
    lag_channel: int = 0
    static_channel: int = 7
    calendar_start: str | None = "2000-01"

    @field_validator("land_fraction")
    @classmethod
    def _land(cls, v):
        if not 0.0 <= v < 1.0:
            raise ValueError(f"land_fraction must lie in [0, 1), got {v}")
        return v

    @field_validator("memory_rho")
    @classmethod
    def _rho(cls, v):
        if not -1.0 < v < 1.0:
            raise ValueError("memory_rho must lie in (-1, 1)")
        return v

    @model_validator(mode="after")
    def _shape(self):
        if self.n_steps < 13:
            raise ValueError(f"n_steps must be >= 13 for the lag-1 functional, got {self.n_steps}")
        if self.n_steps % 12:
            raise ValueError(f"n_steps must be a multiple of 12, got {self.n_steps}")
        n = len(self.channel_names)
        for name in ("tanh_channel", "lag_channel", "static_channel"):
            if not 0 <= getattr(self, name) < n:
                raise ValueError(f"{name} out of range for {n} channels")
        return self


@dataclass
class GroundTruth:
    """The deterministic part of the synthetic target, evaluable from predictors."""

    offset: float
    a: float
    b: float
    c: float
    d: float
    linear: bool
    tanh_channel: int
    lag_channel: int
    static_channel: int
    noise_sigma: float
    memory_sigma: float
    memory_rho: float

    def __call__(self, z_t: np.ndarray, z_prev: np.ndarray) -> np.ndarray:
        """Evaluate on predictor fields with channels last, ``(..., L, W, C)``."""
        z1 = z_t[..., self.tanh_channel]
        first = self.a * z1 if self.linear else self.a * np.tanh(self.b * z1)
        return (
            self.offset
            + first
            + self.c * z_prev[..., self.lag_channel] ** 2
            + self.d * z_t[..., self.static_channel]
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        return cls(**json.loads(text))


def _smooth_field(rng, shape, n_modes=3):
    """Unit-variance field made of a few low-wavenumber cosines."""
    L, W = shape
    yy, xx = np.meshgrid(np.arange(L) / L, np.arange(W) / W, indexing="ij")
    out = np.zeros(shape)
    for k in range(n_modes + 1):
        for l in range(n_modes + 1):
            if k == l == 0:
                continue
            amp = rng.normal() / (1.0 + k * k + l * l)
            out += amp * np.cos(2 * np.pi * (k * yy + l * xx) + rng.uniform(0, 2 * np.pi))
    return (out - out.mean()) / out.std()


def _smooth_noise(rng, shape, sigma=1.0):
    """Spatially smoothed Gaussian noise, rescaled to unit variance per frame."""
    raw = rng.normal(size=shape)
    sm = gaussian_filter(raw, sigma=(0,) * (len(shape) - 2) + (sigma, sigma), mode="wrap")
    axes = (-2, -1)
    return sm / sm.std(axis=axes, keepdims=True)


def generate_synthetic(cfg: SyntheticConfig, seed: int = 0):
    """Build ``(GridSpec, PredictorStack, TargetSeries, GroundTruth)``.

    One extra spin-up step is generated before t=0 so Y(0) has a lagged
    predictor; it is not emitted.
    """
    rng = np.random.default_rng(seed)
    L, W, T, C = cfg.length, cfg.width, cfg.n_steps, len(cfg.channel_names)
    lat_edges, lon_edges = default_edges(L, W)
    lat_c = 0.5 * (lat_edges[:-1] + lat_edges[1:])

    n_cells = L * W
    n_land = min(int(round(cfg.land_fraction * n_cells)), n_cells - 1)
    order = np.argsort(_smooth_field(rng, (L, W)).ravel(), kind="stable")
    valid = np.ones(n_cells, bool)
    valid[order[:n_land]] = False
    valid = valid.reshape(L, W)

    # opposite seasonal phase in the two hemispheres
    hemi_phase = 0.5 * np.pi * (1.0 - np.tanh(lat_c / 10.0))[:, None] * np.ones((1, W))
    t = np.arange(-1, T)[:, None, None]
    Z = np.empty((T + 1, L, W, C))
    for ch in range(C):
        seas_amp = 1.0 + 0.5 * _smooth_field(rng, (L, W)) ** 2
        seas_phase = hemi_phase + 0.3 * _smooth_field(rng, (L, W)) + rng.uniform(0, 2 * np.pi)
        low_pattern = _smooth_field(rng, (L, W))
        low_phase = rng.uniform(0, 2 * np.pi)
        pattern = _smooth_field(rng, (L, W))
        noise = _smooth_noise(rng, (T + 1, L, W))
        if ch == cfg.static_channel:
            Z[..., ch] = np.broadcast_to(pattern, (T + 1, L, W))
            continue
        Z[..., ch] = (
            cfg.seasonal_amplitude * seas_amp * np.sin(2 * np.pi * t / 12.0 + seas_phase)
            + cfg.lowfreq_amplitude * low_pattern * np.sin(2 * np.pi * t / cfg.lowfreq_period + low_phase)
            + cfg.pattern_amplitude * pattern
            + cfg.predictor_noise * noise
        )

    truth = GroundTruth(
        offset=cfg.offset, a=cfg.a, b=cfg.b, c=cfg.c, d=cfg.d, linear=cfg.linear,
        tanh_channel=cfg.tanh_channel, lag_channel=cfg.lag_channel,
        static_channel=cfg.static_channel, noise_sigma=cfg.noise_sigma,
        memory_sigma=cfg.memory_sigma, memory_rho=cfg.memory_rho,
    )
    Y = truth(Z[1:], Z[:-1])

    memory_noise = _smooth_noise(rng, (T, L, W), sigma=2.0)
    if cfg.memory_sigma > 0:
        rho = cfg.memory_rho
        r = np.empty((T, L, W))
        r[0] = cfg.memory_sigma * memory_noise[0]
        innov = cfg.memory_sigma * np.sqrt(1.0 - rho * rho)
        for k in range(1, T):
            r[k] = rho * r[k - 1] + innov * memory_noise[k]
        Y = Y + r
    obs_noise = rng.normal(size=(T, L, W))
    if cfg.noise_sigma > 0:
        Y = Y + cfg.noise_sigma * obs_noise

    Zout = Z[1:].copy()
    Zout[:, ~valid, :] = np.nan
    Yout = np.where(valid[None], Y, np.nan)

    grid = GridSpec(width=W, length=L, n_steps=T, valid_mask=valid, lat_edges=lat_edges,
                    lon_edges=lon_edges, calendar_start=cfg.calendar_start)
    stack = PredictorStack(values=Zout, channel_names=list(cfg.channel_names),
                           units=["synthetic"] * C)
    target = TargetSeries(values=Yout)
    return grid, stack, target, truth
