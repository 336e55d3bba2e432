"""Gridded data model: geometry, predictor stacks, target series and splits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

REFERENCE_CHANNELS = ("SLA", "SST", "SSR", "U", "V", "U10", "V10", "MDT")


class GridError(ValueError):
    """Raised when gridded data violates its geometric contract."""


@dataclass
class GridSpec:
    width: int
    length: int
    n_steps: int
    valid_mask: np.ndarray
    lat_edges: np.ndarray | None = None
    lon_edges: np.ndarray | None = None
    calendar_start: str | None = None

    def __post_init__(self):
        self.valid_mask = np.asarray(self.valid_mask, dtype=bool)
        if self.width < 4 or self.length < 4:
            raise GridError(f"grid must be at least 4x4, got {self.length}x{self.width}")
        if self.width % 4 or self.length % 4:
            raise GridError(
                f"grid dims must be divisible by 4, got {self.length}x{self.width}"
            )
        if self.valid_mask.shape != (self.length, self.width):
            raise GridError(
                f"valid_mask shape {self.valid_mask.shape} != {(self.length, self.width)}"
            )
        if not self.valid_mask.any():
            raise GridError("valid_mask has no ocean cell")
        if self.lat_edges is not None:
            self.lat_edges = np.asarray(self.lat_edges, dtype=np.float64)
            if self.lat_edges.shape != (self.length + 1,):
                raise GridError("lat_edges must have length + 1 entries")
        if self.lon_edges is not None:
            self.lon_edges = np.asarray(self.lon_edges, dtype=np.float64)
            if self.lon_edges.shape != (self.width + 1,):
                raise GridError("lon_edges must have width + 1 entries")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.length, self.width)

    def month_labels(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (year, month) labels for every step; month is 0-based.

        Without calendar metadata, step 0 is taken as January of year 0.
        """
        year0, month0 = 0, 0
        if self.calendar_start:
            y, m = self.calendar_start.split("-")
            year0, month0 = int(y), int(m) - 1
        absolute = month0 + np.arange(self.n_steps)
        return year0 + absolute // 12, absolute % 12


@dataclass
class PredictorStack:
    """Predictor fields, ``values`` laid out as (T, L, W, C).

    ``obs_mask`` marks present (non-sentinel) entries; missing entries hold NaN.
    """

    values: np.ndarray
    channel_names: list[str]
    units: list[str] = field(default_factory=list)
    obs_mask: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 4:
            raise GridError(f"predictor values must be 4-D (T, L, W, C), got {self.values.shape}")
        if self.values.shape[-1] != len(self.channel_names):
            raise GridError(
                f"{self.values.shape[-1]} channels but {len(self.channel_names)} channel names"
            )
        if not self.units:
            self.units = [""] * len(self.channel_names)
        if self.obs_mask is None:
            self.obs_mask = np.isfinite(self.values)
        else:
            self.obs_mask = np.asarray(self.obs_mask, dtype=bool) & np.isfinite(self.values)
        self.values = np.where(self.obs_mask, self.values, np.nan)

    @property
    def n_channels(self) -> int:
        return len(self.channel_names)


@dataclass
class TargetSeries:
    """Target field in log space, ``values`` laid out as (T, L, W)."""

    values: np.ndarray
    obs_mask: np.ndarray | None = None
    name: str = "chl"
    space: str = "log(mg m-3)"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise GridError(f"target values must be 3-D (T, L, W), got {self.values.shape}")
        finite = np.isfinite(self.values)
        self.obs_mask = finite if self.obs_mask is None else np.asarray(self.obs_mask, bool) & finite
        self.values = np.where(self.obs_mask, self.values, np.nan)

    def restrict_to(self, valid_mask: np.ndarray) -> None:
        """Drop observations outside the valid (ocean) mask."""
        self.obs_mask &= valid_mask[None]
        self.values = np.where(self.obs_mask, self.values, np.nan)


@dataclass
class SplitSpec:
    train_range: tuple[int, int]
    test_range: tuple[int, int]
    val_fraction: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.val_fraction < 1.0:
            raise GridError(f"val_fraction must lie in [0, 1), got {self.val_fraction}")
        for name, (a, b) in (("train", self.train_range), ("test", self.test_range)):
            if a > b:
                raise GridError(f"{name} range [{a}, {b}] is empty")


def split_dataset(
    spec: SplitSpec, n_steps: int, seed: int = 0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split step indices into (train, val, test).

    Ranges are inclusive. Validation steps are drawn from the train range
    without replacement; whatever is left forms the train list.
    """
    (a, b), (c, d) = spec.train_range, spec.test_range
    for lo, hi in ((a, b), (c, d)):
        if lo < 0 or hi >= n_steps:
            raise GridError(f"range [{lo}, {hi}] outside [0, {n_steps})")
    if a <= d and c <= b:
        raise GridError(f"overlapping ranges: train [{a}, {b}] and test [{c}, {d}]")

    train_all = np.arange(a, b + 1)
    n_val = int(round(spec.val_fraction * train_all.size))
    rng = np.random.default_rng(seed)
    val = np.sort(rng.choice(train_all, size=n_val, replace=False)) if n_val else np.array([], int)
    train = np.setdiff1d(train_all, val)
    return train, val.astype(int), np.arange(c, d + 1)


def year_aligned_split(n_steps: int, test_years: int = 3, gap_years: int = 1,
                       val_fraction: float = 0.2) -> SplitSpec:
    """Chronological split: training first, a gap year, test years at the end."""
    if n_steps % 12:
        raise GridError("year-aligned split needs a whole number of years")
    n_years = n_steps // 12
    train_years = n_years - test_years - gap_years
    if train_years < 1:
        raise GridError(f"{n_years} years cannot hold {test_years} test + {gap_years} gap years")
    return SplitSpec(
        train_range=(0, 12 * train_years - 1),
        test_range=(n_steps - 12 * test_years, n_steps - 1),
        val_fraction=val_fraction,
    )


def default_edges(length: int, width: int, lat_span: Sequence[float] = (-50.0, 50.0)):
    """Regular lat/lon edges over a 50S-50N band and the full longitude circle."""
    lat_edges = np.linspace(lat_span[0], lat_span[1], length + 1)
    lon_edges = np.linspace(-180.0, 180.0, width + 1)
    return lat_edges, lon_edges
