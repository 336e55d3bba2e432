"""Log transform, standardization, zero-fill and time-lagged predictor windows."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict

from .grid import GridSpec, PredictorStack, TargetSeries

STD_FLOOR = 1e-8


class IncompleteWindowError(IndexError):
    """The requested predictor window runs off either end of the series."""


@dataclass(frozen=True)
class WindowSpec:
    delta_minus: int = 0
    delta_plus: int = 0

    def __post_init__(self):
        if self.delta_minus < 0 or self.delta_plus < 0:
            raise ValueError("window offsets must be non-negative")

    @property
    def length(self) -> int:
        return self.delta_minus + self.delta_plus + 1

    def offsets(self) -> range:
        return range(-self.delta_minus, self.delta_plus + 1)

    def is_complete(self, t: int, n_steps: int) -> bool:
        return t - self.delta_minus >= 0 and t + self.delta_plus <= n_steps - 1


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    epoch: tuple[int, int]

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        self.std = np.atleast_1d(np.asarray(self.std, dtype=np.float64))

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "epoch": list(self.epoch)}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.array(d["mean"]), np.array(d["std"]), tuple(d["epoch"]))


def log_transform(chl, direction: str = "forward", mask=None):
    """Natural log (``forward``) or exp (``inverse``).

    Only cells under ``mask`` (default: finite cells) are checked and
    transformed; the rest pass through untouched.
    """
    x = np.asarray(chl, dtype=np.float64)
    mask = np.isfinite(x) if mask is None else np.asarray(mask, bool)
    if direction == "forward":
        bad = mask & ~(x > 0)
        if bad.any():
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise ValueError(f"log_transform: non-positive value {x[idx]!r} at observed cell {idx}")
        return np.where(mask, np.log(np.where(mask, x, 1.0)), x)
    if direction == "inverse":
        return np.where(mask, np.exp(np.where(mask, x, 0.0)), x)
    raise ValueError(f"unknown direction {direction!r}")


def _epoch_bounds(epoch) -> tuple[np.ndarray, tuple[int, int]]:
    if isinstance(epoch, tuple):
        idx = np.arange(epoch[0], epoch[1] + 1)
    else:
        idx = np.asarray(epoch, dtype=int)
    if idx.size == 0:
        raise ValueError("stats epoch is empty")
    return idx, (int(idx.min()), int(idx.max()))


def compute_stats(values, epoch, mask) -> NormStats:
    """Per-channel mean and population std over masked entries of ``epoch``.

    ``values`` is (T, L, W, C) or (T, L, W); ``mask`` broadcasts against it.
    ``epoch`` is an inclusive ``(start, end)`` tuple or an explicit index array.
    """
    values = np.asarray(values, dtype=np.float64)
    squeeze = values.ndim == 3
    if squeeze:
        values = values[..., None]
    mask = np.asarray(mask, bool)
    if mask.ndim == 2:  # static (L, W) mask
        mask = mask[None, :, :, None]
    elif mask.ndim == 3:  # (T, L, W) mask shared by all channels
        mask = mask[..., None]
    mask = np.broadcast_to(mask, values.shape)
    idx, bounds = _epoch_bounds(epoch)
    v, m = values[idx], mask[idx]
    means, stds = [], []
    for c in range(values.shape[-1]):
        sample = v[..., c][m[..., c]]
        if sample.size == 0:
            raise ValueError(f"channel {c} has no valid samples in the stats epoch")
        mu = sample.sum() / sample.size
        var = ((sample - mu) ** 2).sum() / sample.size
        means.append(mu)
        stds.append(max(np.sqrt(var), STD_FLOOR))
    return NormStats(np.array(means), np.array(stds), bounds)


def standardize(field, stats: NormStats, direction: str = "forward"):
    """Per-channel (x - mean) / std, channels last. Fields without a channel
    axis are accepted when the stats hold a single channel."""
    x = np.asarray(field, dtype=np.float64)
    n = stats.mean.size
    if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        mean, std = stats.mean[0], stats.std[0]
    else:
        if x.shape[-1] != n:
            raise ValueError(f"field has {x.shape[-1]} channels, stats have {n}")
        mean, std = stats.mean, stats.std
    if direction == "forward":
        return (x - mean) / std
    if direction == "inverse":
        return x * std + mean
    raise ValueError(f"unknown direction {direction!r}")


def fill_missing(stack, valid_mask=None):
    """Zero every missing entry and every cell outside ``valid_mask``.

    Takes a PredictorStack (returns a new, fully observed one) or a raw
    (T, L, W, C) array (NaN marks missing).
    """
    if isinstance(stack, PredictorStack):
        filled = fill_missing(np.where(stack.obs_mask, stack.values, np.nan), valid_mask)
        return PredictorStack(filled, list(stack.channel_names), list(stack.units))
    values = np.asarray(stack, dtype=np.float64)
    keep = np.isfinite(values)
    if valid_mask is not None:
        keep &= np.asarray(valid_mask, bool)[None, :, :, None]
    return np.where(keep, values, 0.0)


def window_predictors(stack, t: int, w: WindowSpec) -> np.ndarray:
    """Concatenate predictor frames t-Δ⁻ .. t+Δ⁺ along channels.

    Output is (L, W, C * window length); frames go oldest to newest and the
    channel order inside each frame is the stack's.
    """
    values = stack.values if isinstance(stack, PredictorStack) else np.asarray(stack)
    T = values.shape[0]
    if not w.is_complete(t, T):
        raise IncompleteWindowError(
            f"incomplete window at t={t}: needs [{t - w.delta_minus}, {t + w.delta_plus}] in [0, {T - 1}]"
        )
    return np.concatenate([values[t + k] for k in w.offsets()], axis=-1)


class PreprocessConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    stats_epoch: str = "train-only"  # or "full-period"
    standardize_target: bool = True


@dataclass
class PreparedData:
    """Model-ready arrays in normalized space.

    ``z``: (T, C, L, W) standardized, zero-filled predictors.
    ``y``: (T, L, W) normalized log target, 0 where unobserved.
    ``obs``: (T, L, W) observed-and-valid mask.
    """

    z: np.ndarray
    y: np.ndarray
    obs: np.ndarray
    valid: np.ndarray
    z_stats: NormStats
    y_stats: NormStats
    month: np.ndarray
    year: np.ndarray
    climatology: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.z.shape[0]

    def to_log(self, y_norm):
        return standardize(y_norm, self.y_stats, "inverse")

    def to_norm(self, y_log):
        return standardize(y_log, self.y_stats, "forward")

    def y_log(self) -> np.ndarray:
        """Target in log space with NaN at unobserved cells."""
        return np.where(self.obs, self.to_log(self.y), np.nan)

    def window(self, t: int, w: WindowSpec) -> np.ndarray:
        """(C * window, L, W) predictor window for target step ``t``."""
        if not w.is_complete(t, self.n_steps):
            raise IncompleteWindowError(f"incomplete window at t={t}")
        return self.z[t - w.delta_minus: t + w.delta_plus + 1].reshape(-1, *self.z.shape[2:])

    def initial_state(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """Normalized state at ``t`` with unobserved ocean cells replaced by the
        monthly climatology; returns (state, filled-cell flags)."""
        gap = self.valid & ~self.obs[t]
        state = np.where(gap, self.climatology[self.month[t]], self.y[t])
        return np.where(self.valid, state, 0.0), gap


def prepare(grid: GridSpec, stack: PredictorStack, target: TargetSeries, stats_idx,
            cfg: PreprocessConfig | None = None, z_stats: NormStats | None = None,
            y_stats: NormStats | None = None) -> PreparedData:
    """Run the full chain: log (if needed), stats, standardize, zero-fill.

    ``stats_idx`` are the steps used for statistics in train-only mode; in
    ``full-period`` mode the whole period is used. Pre-computed stats (e.g. from a
    checkpoint) take precedence.
    """
    cfg = cfg or PreprocessConfig()
    if cfg.stats_epoch not in ("train-only", "full-period"):
        raise ValueError(f"unknown stats_epoch {cfg.stats_epoch!r}")
    epoch = np.arange(grid.n_steps) if cfg.stats_epoch == "full-period" else np.asarray(stats_idx)
    valid = grid.valid_mask

    zmask = stack.obs_mask & valid[None, :, :, None]
    if z_stats is None:
        z_stats = compute_stats(stack.values, epoch, zmask)
    zn = standardize(np.where(zmask, stack.values, 0.0), z_stats)
    zn = fill_missing(np.where(zmask, zn, np.nan), valid)

    obs = target.obs_mask & valid[None]
    ylog = target.values
    if not target.space.lower().startswith("log"):
        ylog = log_transform(ylog, "forward", obs)
    if y_stats is None:
        if cfg.standardize_target:
            y_stats = compute_stats(ylog, epoch, obs)
        else:
            y_stats = NormStats(np.zeros(1), np.ones(1), (int(epoch.min()), int(epoch.max())))
    yn = np.where(obs, standardize(np.where(obs, ylog, 0.0), y_stats), 0.0)

    year, month = grid.month_labels()
    clim = np.zeros((12, grid.length, grid.width))
    ep = np.zeros(grid.n_steps, bool)
    ep[epoch] = True
    for m in range(12):
        sel = ep & (month == m)
        cnt = obs[sel].sum(axis=0)
        tot = np.where(obs[sel], yn[sel], 0.0).sum(axis=0)
        clim[m] = np.where(cnt > 0, tot / np.maximum(cnt, 1), 0.0)

    return PreparedData(
        z=np.ascontiguousarray(zn.transpose(0, 3, 1, 2)),
        y=yn,
        obs=obs,
        valid=valid.copy(),
        z_stats=z_stats,
        y_stats=y_stats,
        month=month,
        year=year,
        climatology=clim,
    )


def stats_to_json(z_stats: NormStats, y_stats: NormStats) -> str:
    return json.dumps({"predictors": z_stats.to_dict(), "target": y_stats.to_dict()})
