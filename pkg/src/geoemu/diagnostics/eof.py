"""Anomaly construction, EOF decomposition and projection onto EOF patterns."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import _degenerate

KINDS = ("seasonal", "nonseasonal")


@dataclass
class EOFResult:
    """``spatial_patterns`` (modes, L, W) are unit-norm over the mask (NaN
    elsewhere); ``pcs`` (modes, T) are left singular vectors times singular
    values."""

    spatial_patterns: np.ndarray
    pcs: np.ndarray
    explained_variance: np.ndarray
    singular_values: np.ndarray
    mask: np.ndarray
    anomaly_kind: str = "seasonal"

    @property
    def n_modes(self) -> int:
        return self.pcs.shape[0]


def compute_anomalies(series, kind: str, year, month, obs=None,
                      annual_mean: str = "per_year") -> np.ndarray:
    """Normalized anomalies of a (T, L, W) series.

    ``seasonal`` removes each cell's mean over the calendar year containing t
    (``annual_mean="all_time"`` removes the whole-period mean instead);
    ``nonseasonal`` removes the cell's mean for that calendar month. The
    result is divided by the cell's temporal std. Unobserved entries and
    cells with zero anomaly variance come back as NaN.
    """
    x = np.asarray(series, dtype=np.float64)
    if kind not in KINDS:
        raise ValueError(f"unknown anomaly kind {kind!r}")
    if annual_mean not in ("per_year", "all_time"):
        raise ValueError(f"unknown annual_mean {annual_mean!r}")
    T = x.shape[0]
    if T % 12:
        raise ValueError(f"anomalies need whole years; got T={T}")
    year, month = np.asarray(year), np.asarray(month)
    sel = np.isfinite(x) if obs is None else np.asarray(obs, bool) & np.isfinite(x)
    xz = np.where(sel, x, 0.0)

    if kind == "seasonal" and annual_mean == "per_year":
        groups = year
    elif kind == "seasonal":
        groups = np.zeros(T, int)
    else:
        groups = month
    base = np.zeros_like(xz)
    for g in np.unique(groups):
        rows = groups == g
        cnt = sel[rows].sum(0)
        mean = xz[rows].sum(0) / np.maximum(cnt, 1)
        base[rows] = mean
    anom = np.where(sel, xz - base, 0.0)
    n = np.maximum(sel.sum(0), 1)
    centred = np.where(sel, anom - anom.sum(0) / n, 0.0)
    std = np.sqrt((centred * centred).sum(0) / n)
    flat = _degenerate(std, np.abs(xz).max(0)) | (sel.sum(0) == 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = anom / std
    return np.where(sel & ~flat[None], out, np.nan)


def _matrix(anomalies, mask):
    a = np.asarray(anomalies, dtype=np.float64)
    mask = np.asarray(mask, bool)
    if a.shape[1:] != mask.shape:
        raise ValueError(f"anomaly grid {a.shape[1:]} != mask grid {mask.shape}")
    cols = a[:, mask]
    return np.where(np.isfinite(cols), cols, 0.0)


def eof(anomalies, n_modes: int, mask, kind: str = "seasonal") -> EOFResult:
    """EOFs via SVD of the (T, valid cells) anomaly matrix.

    NaN anomalies inside the mask count as zero. Each pattern's largest
    absolute loading is made positive (the PC flips with it).
    """
    A = _matrix(anomalies, mask)
    T, n = A.shape
    if n_modes < 1 or n_modes > min(T, n):
        raise ValueError(f"n_modes={n_modes} outside [1, min(T={T}, cells={n})]")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    total = float(np.sum(s * s))
    U, s, Vt = U[:, :n_modes], s[:n_modes], Vt[:n_modes]
    for i in range(n_modes):
        if Vt[i, np.argmax(np.abs(Vt[i]))] < 0:
            Vt[i] *= -1
            U[:, i] *= -1
    mask = np.asarray(mask, bool)
    patterns = np.full((n_modes, *mask.shape), np.nan)
    patterns[:, mask] = Vt
    explained = s * s / total if total > 0 else np.zeros_like(s)
    return EOFResult(patterns, (U * s).T.copy(), explained, s.copy(), mask.copy(), kind)


def project(anomalies, patterns, mask=None) -> np.ndarray:
    """PCs (modes, T): inner products of each anomaly field with each pattern
    over the mask (default: where the patterns are finite)."""
    patterns = np.asarray(patterns, dtype=np.float64)
    if patterns.ndim == 2:
        patterns = patterns[None]
    if mask is None:
        mask = np.isfinite(patterns).all(axis=0)
    a = np.asarray(anomalies)
    if a.shape[1:] != patterns.shape[1:]:
        raise ValueError(f"anomaly grid {a.shape[1:]} != pattern grid {patterns.shape[1:]}")
    A = _matrix(a, mask)
    P = np.where(np.isfinite(patterns[:, mask]), patterns[:, mask], 0.0)
    return P @ A.T


def reconstruct(result: EOFResult) -> np.ndarray:
    """Sum of pc_i(t) * pattern_i on the mask, (T, valid cells)."""
    return result.pcs.T @ result.spatial_patterns[:, result.mask]
