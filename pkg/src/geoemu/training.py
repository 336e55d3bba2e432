"""Masked-loss training for static emulators and K-step roll-out training for
auto-regressive ones."""

from __future__ import annotations

import copy
import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, field_validator

from .models import EmulatorModel
from .preprocess import PreparedData

log = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    optimizer: str = "adam"  # adam | sgd (momentum)
    learning_rate: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 4
    max_epochs: int = 200
    early_stop_patience: int = 20
    rollout_K: int | None = None
    seed: int = 0
    clip_norm: float | None = 1.0
    dtype: str = "float32"

    @field_validator("learning_rate")
    @classmethod
    def _lr(cls, v):
        if v < 0:
            raise ValueError("learning_rate must be >= 0")
        return v

    @field_validator("rollout_K")
    @classmethod
    def _k(cls, v):
        if v is not None and v < 1:
            raise ValueError("rollout_K must be >= 1")
        return v

    @field_validator("optimizer")
    @classmethod
    def _opt(cls, v):
        if v not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        return v


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    wall_clock: list[float] = field(default_factory=list)
    best_epoch: int = -1

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss"])
            for i, (a, b) in enumerate(zip(self.train_loss, self.val_loss)):
                w.writerow([i, repr(a), repr(b)])


class NoSamplesError(ValueError):
    pass


def masked_loss(pred, target, mask):
    """Mean squared error over cells where ``mask`` is true.

    Returns ``(loss, n_cells)``. Masked-out target values never enter the
    arithmetic, so they cannot leak into the loss or its gradient.
    """
    pred = torch.as_tensor(pred)
    target = torch.as_tensor(target, dtype=pred.dtype)
    mask = torch.as_tensor(mask, dtype=torch.bool).expand(pred.shape)
    n = int(mask.sum())
    if n == 0:
        raise NoSamplesError("masked_loss: no contributing cells")
    safe_target = torch.where(mask, target, torch.zeros_like(target))
    diff = torch.where(mask, pred - safe_target, torch.zeros_like(pred))
    return (diff * diff).sum() / n, n


def per_sample_loss(pred, target, mask):
    """Masked MSE per leading index; returns (losses, counts)."""
    mask = mask.expand(pred.shape)
    safe_target = torch.where(mask, target, torch.zeros_like(target))
    diff = torch.where(mask, pred - safe_target, torch.zeros_like(pred))
    dims = tuple(range(1, pred.ndim))
    counts = mask.sum(dim=dims)
    return (diff * diff).sum(dim=dims) / counts.clamp(min=1), counts


def _dtype(name: str):
    return {"float32": torch.float32, "float64": torch.float64}[name]


def _make_optimizer(params, cfg: TrainConfig):
    if cfg.optimizer == "sgd":
        return torch.optim.SGD(params, lr=cfg.learning_rate, momentum=cfg.momentum)
    return torch.optim.Adam(params, lr=cfg.learning_rate)


class _Tensors:
    """Torch views of the prepared arrays."""

    def __init__(self, data: PreparedData, dtype):
        self.z = torch.as_tensor(data.z, dtype=dtype)
        self.y = torch.as_tensor(data.y, dtype=dtype)
        self.obs = torch.as_tensor(data.obs)
        self.valid = torch.as_tensor(data.valid)
        self.n_steps = data.n_steps

    def windows(self, t: torch.Tensor, model: EmulatorModel) -> torch.Tensor:
        """Flattened predictor windows for a batch of target steps."""
        w = model.window
        offs = torch.arange(-w.delta_minus, w.delta_plus + 1)
        frames = self.z[t[:, None] + offs[None, :]]  # (N, S, C, L, W)
        return frames.reshape(t.shape[0], -1, *frames.shape[-2:])


def static_samples(data: PreparedData, model: EmulatorModel, idx) -> np.ndarray:
    """Target steps with a complete predictor window and >= 1 observed cell."""
    idx = np.asarray(idx, dtype=int)
    keep = [t for t in idx if model.window.is_complete(int(t), data.n_steps) and data.obs[t].any()]
    return np.array(keep, dtype=int)


def static_batch_loss(model: EmulatorModel, tens: _Tensors, t: torch.Tensor) -> torch.Tensor:
    pred = model(tens.windows(t, model))[:, 0]
    losses, counts = per_sample_loss(pred, tens.y[t], tens.obs[t])
    ok = counts > 0
    return losses[ok].mean()


def rollout_sequences(data: PreparedData, model: EmulatorModel, K: int, start_idx, target_idx):
    """Sequence starts t0 whose K-step roll-out fits and scores >= 1 target.

    Starts with an unobserved ocean cell in the initial state are skipped.
    Returns (starts, counted) with ``counted[i, k]`` true when step k+1 of
    sequence i lands on a scored month.
    """
    T = data.n_steps
    target_set = np.zeros(T, bool)
    target_set[np.asarray(target_idx, dtype=int)] = True
    starts, counted = [], []
    for t0 in np.asarray(start_idx, dtype=int):
        if t0 + K > T - 1:
            continue
        if not all(model.window.is_complete(int(t0 + k), T) for k in range(1, K + 1)):
            continue
        if (data.valid & ~data.obs[t0]).any():
            continue
        steps = np.array([target_set[t0 + k] and data.obs[t0 + k].any() for k in range(1, K + 1)])
        if steps.any():
            starts.append(int(t0))
            counted.append(steps)
    if not starts:
        return np.array([], int), np.zeros((0, K), bool)
    return np.array(starts), np.array(counted)


def rollout(model: EmulatorModel, tens: _Tensors, t0: torch.Tensor, K: int,
            state: torch.Tensor | None = None) -> torch.Tensor:
    """Self-fed roll-out from observed states at ``t0``; returns (N, K, L, W).

    Step 1 consumes the observed state, later steps the model's own previous
    prediction (land cells reset to 0). The same module, hence the same
    parameter storage, is applied at every step.
    """
    if state is None:
        state = torch.where(tens.valid, tens.y[t0], torch.zeros_like(tens.y[t0]))
    preds = []
    for k in range(1, K + 1):
        inp = torch.cat([tens.windows(t0 + k, model), state[:, None]], dim=1)
        pred = model(inp)[:, 0]
        preds.append(pred)
        state = torch.where(tens.valid, pred, torch.zeros_like(pred))
    return torch.stack(preds, dim=1)


def rollout_batch_loss(model: EmulatorModel, tens: _Tensors, t0: torch.Tensor,
                       counted: torch.Tensor, K: int) -> torch.Tensor:
    """Mean over sequences of the mean masked loss over scored steps."""
    preds = rollout(model, tens, t0, K)
    tgt_t = t0[:, None] + torch.arange(1, K + 1)[None, :]
    losses, counts = per_sample_loss(
        preds.reshape(-1, *preds.shape[2:]),
        tens.y[tgt_t.reshape(-1)],
        tens.obs[tgt_t.reshape(-1)],
    )
    losses = losses.reshape(-1, K)
    use = counted & (counts.reshape(-1, K) > 0)
    seq = torch.where(use, losses, torch.zeros_like(losses)).sum(1) / use.sum(1).clamp(min=1)
    return seq.mean()


def _fit(model, cfg: TrainConfig, train_items, val_items, batch_loss):
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = _make_optimizer(model.parameters(), cfg)
    hist = TrainHistory()
    best_state, best_val, stale = None, np.inf, 0
    n = len(train_items[0])
    for epoch in range(cfg.max_epochs):
        tic = time.perf_counter()
        model.train()
        order = torch.randperm(n, generator=gen)
        tot = 0.0
        for s in range(0, n, cfg.batch_size):
            b = order[s: s + cfg.batch_size]
            loss = batch_loss(*(item[b] for item in train_items))
            opt.zero_grad()
            loss.backward()
            if cfg.clip_norm:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.clip_norm)
            opt.step()
            tot += float(loss.detach()) * len(b)
        train_loss = tot / n
        model.eval()
        if len(val_items[0]):
            with torch.no_grad():
                val_loss = float(batch_loss(*val_items))
        else:
            val_loss = train_loss
        hist.train_loss.append(train_loss)
        hist.val_loss.append(val_loss)
        hist.wall_clock.append(time.perf_counter() - tic)
        if val_loss < best_val:
            best_val, stale = val_loss, 0
            hist.best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break
    if best_state is not None:
        model.load_state_dict(best_state)
    log.info("trained %s: best epoch %d, val loss %.4g", model.arch, hist.best_epoch, best_val)
    return model, hist


def train_static(model: EmulatorModel, data: PreparedData, splits, cfg: TrainConfig | None = None):
    """Fit F_theta on (window -> month) pairs; returns (model, history)."""
    cfg = cfg or TrainConfig()
    if model.autoregressive:
        raise ValueError("train_static needs a static model")
    dtype = _dtype(cfg.dtype)
    model.to(dtype)
    train_idx, val_idx = splits[0], splits[1]
    tr = static_samples(data, model, train_idx)
    va = static_samples(data, model, val_idx)
    if tr.size == 0:
        raise NoSamplesError("no valid training samples (all windows incomplete or unobserved)")
    tens = _Tensors(data, dtype)
    return _fit(model, cfg, (torch.as_tensor(tr),), (torch.as_tensor(va),),
                lambda t: static_batch_loss(model, tens, t))


def train_autoregressive(model: EmulatorModel, data: PreparedData, splits,
                         cfg: TrainConfig | None = None):
    """Fit G_theta by minimizing the mean masked loss over K self-fed steps.

    Training sequences start at every training month (stride 1) and score
    only training months; validation sequences score only validation months.
    """
    cfg = cfg or TrainConfig(rollout_K=1)
    if not model.autoregressive:
        raise ValueError("train_autoregressive needs an auto-regressive model")
    K = cfg.rollout_K or 1
    dtype = _dtype(cfg.dtype)
    model.to(dtype)
    train_idx, val_idx = np.asarray(splits[0]), np.asarray(splits[1])
    tr_s, tr_c = rollout_sequences(data, model, K, train_idx, train_idx)
    va_s, va_c = rollout_sequences(data, model, K, np.union1d(train_idx, val_idx), val_idx)
    if tr_s.size == 0:
        raise NoSamplesError("no usable roll-out sequences in the training range")
    tens = _Tensors(data, dtype)
    return _fit(
        model, cfg,
        (torch.as_tensor(tr_s), torch.as_tensor(tr_c)),
        (torch.as_tensor(va_s), torch.as_tensor(va_c)),
        lambda t0, c: rollout_batch_loss(model, tens, t0, c, K),
    )
