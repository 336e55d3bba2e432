"""Roll-out forecasts, static reconstruction and the persistence baseline.

All public functions return fields in log space (de-standardized).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from .models import EmulatorModel
from .preprocess import PreparedData

log = logging.getLogger(__name__)

MODES = ("static", "autoregressive", "persistence")


@dataclass
class ForecastRun:
    """Lead-indexed forecasts aligned on target months.

    ``predictions[k-1, j]`` forecasts month ``target_times[j]`` from the state
    observed at ``target_times[j] - k``; NaN where no forecast exists.
    ``filled[k-1, j]`` flags initial states that needed climatology fill.
    """

    lead_times: np.ndarray
    target_times: np.ndarray
    predictions: np.ndarray
    mode: str
    filled: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)

    def start_indices(self, lead: int) -> np.ndarray:
        return self.target_times - lead

    def at_lead(self, lead: int) -> np.ndarray:
        return self.predictions[lead - 1]


def _dtype(model: EmulatorModel):
    return next(model.parameters()).dtype


def _windows(data: PreparedData, model: EmulatorModel, t: np.ndarray, dtype) -> torch.Tensor:
    w = model.window
    frames = data.z[t[:, None] + np.arange(-w.delta_minus, w.delta_plus + 1)[None, :]]
    return torch.as_tensor(frames.reshape(len(t), -1, *frames.shape[-2:]), dtype=dtype)


def _state_tensor(data: PreparedData, t0: np.ndarray, dtype):
    states, flags = zip(*(data.initial_state(int(t)) for t in t0))
    return torch.as_tensor(np.stack(states), dtype=dtype), np.array([f.any() for f in flags])


def _rollout_chains(model: EmulatorModel, data: PreparedData, starts: np.ndarray, H: int,
                    states: torch.Tensor, chunk: int = 64):
    """Roll out every start for up to H steps; returns (N, H, L, W) normalized
    predictions (NaN after a chain is truncated)."""
    T = data.n_steps
    dtype = states.dtype
    out = np.full((len(starts), H, *data.valid.shape), np.nan)
    valid = torch.as_tensor(data.valid)
    with torch.no_grad():
        for s in range(0, len(starts), chunk):
            t0 = starts[s: s + chunk]
            state = states[s: s + chunk]
            alive = np.ones(len(t0), bool)
            for k in range(1, H + 1):
                alive &= np.array([model.window.is_complete(int(t + k), T) for t in t0])
                if not alive.any():
                    break
                idx = np.flatnonzero(alive)
                inp = torch.cat([_windows(data, model, t0[idx] + k, dtype), state[idx][:, None]], 1)
                pred = model(inp)[:, 0]
                out[s + idx, k - 1] = pred.double().numpy()
                new_state = state.clone()
                new_state[idx] = torch.where(valid, pred, torch.zeros_like(pred))
                state = new_state
    return out


def rollout_forecast(model: EmulatorModel, data: PreparedData, t0: int, H: int,
                     y0: np.ndarray | None = None) -> np.ndarray:
    """Forecast months t0+1 .. t0+H from the state at t0; returns (H', L, W).

    ``y0`` overrides the initial state (log space). H is truncated, with a
    warning, where predictor windows run out.
    """
    if not model.autoregressive:
        raise ValueError("rollout_forecast needs an auto-regressive model")
    if H < 1:
        raise ValueError("H must be >= 1")
    dtype = _dtype(model)
    if y0 is None:
        state, _ = _state_tensor(data, np.array([t0]), dtype)
    else:
        s = np.where(data.valid, data.to_norm(np.asarray(y0, dtype=np.float64)), 0.0)
        state = torch.as_tensor(s[None], dtype=dtype)
    preds = _rollout_chains(model, data, np.array([t0]), H, state)[0]
    ok = np.isfinite(preds).all(axis=(1, 2))
    n = int(np.argmin(ok)) if not ok.all() else H
    if n < H:
        log.warning("roll-out from t0=%d truncated to %d steps (incomplete windows)", t0, n)
    return data.to_log(preds[:n])


def persistence_forecast(y, t0: int, H: int) -> np.ndarray:
    """Repeat the field at t0 for leads 1..H; ``y`` is a (T, L, W) array."""
    y = np.asarray(y)
    return np.repeat(y[t0][None], H, axis=0)


def static_reconstruct(model: EmulatorModel, data: PreparedData, test_idx) -> np.ndarray:
    """Independent per-month predictions (T', L, W); NaN rows mark months whose
    predictor window is incomplete."""
    if model.autoregressive:
        raise ValueError("static_reconstruct needs a static model")
    test_idx = np.asarray(test_idx, dtype=int)
    out = np.full((len(test_idx), *data.valid.shape), np.nan)
    ok = np.array([model.window.is_complete(int(t), data.n_steps) for t in test_idx], bool)
    if (~ok).any():
        log.warning("static_reconstruct: skipped months %s (incomplete window)", test_idx[~ok].tolist())
    if ok.any():
        dtype = _dtype(model)
        with torch.no_grad():
            for s in range(0, ok.sum(), 64):
                idx = np.flatnonzero(ok)[s: s + 64]
                pred = model(_windows(data, model, test_idx[idx], dtype))[:, 0]
                out[idx] = data.to_log(pred.double().numpy())
    return out


def forecast_run(model: EmulatorModel | None, data: PreparedData, target_times, H: int,
                 mode: str = "autoregressive") -> ForecastRun:
    """Forecasts of every target month at leads 1..H, pooling sliding starts.

    Starts may precede the target window (the state at ``t - k`` is the
    observation just before the forecast period).
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if H < 1:
        raise ValueError("H must be >= 1")
    target_times = np.asarray(target_times, dtype=int)
    L, W = data.valid.shape
    preds = np.full((H, len(target_times), L, W), np.nan)
    filled = np.zeros((H, len(target_times)), bool)
    run = ForecastRun(np.arange(1, H + 1), target_times, preds, mode, filled)
    if len(target_times) == 0:
        return run

    if mode == "static":
        rec = static_reconstruct(model, data, target_times)
        preds[:] = rec[None]
        return run

    starts = np.unique((target_times[None, :] - np.arange(1, H + 1)[:, None]).ravel())
    starts = starts[starts >= 0]
    dtype = _dtype(model) if model is not None else torch.float64
    states, flags = _state_tensor(data, starts, dtype)
    pos = {int(t): i for i, t in enumerate(starts)}

    if mode == "persistence":
        chains = np.repeat(states.double().numpy()[:, None], H, axis=1)
    else:
        if model is None or not model.autoregressive:
            raise ValueError("autoregressive mode needs an auto-regressive model")
        chains = _rollout_chains(model, data, starts, H, states)

    for k in range(1, H + 1):
        for j, t in enumerate(target_times):
            i = pos.get(int(t - k))
            if i is None:
                continue
            field_ = chains[i, k - 1]
            if np.isfinite(field_).all():
                preds[k - 1, j] = data.to_log(field_)
                filled[k - 1, j] = flags[i]
    missing = np.isnan(preds).all(axis=(2, 3))
    if missing.any():
        run.warnings.append(f"{int(missing.sum())} (lead, month) forecasts unavailable")
        log.warning(run.warnings[-1])
    return run
