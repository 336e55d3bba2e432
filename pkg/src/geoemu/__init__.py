"""Convolutional, recurrent, Fourier and UNet emulators mapping gridded physical
predictors to a log-space biogeochemical target, with static and
auto-regressive modes, roll-out training, forecasting and EOF diagnostics."""

from .grid import GridSpec, PredictorStack, SplitSpec, TargetSeries, split_dataset
from .preprocess import WindowSpec, prepare
from .synthetic import SyntheticConfig, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "GridSpec", "PredictorStack", "SplitSpec", "TargetSeries", "split_dataset",
    "WindowSpec", "prepare", "SyntheticConfig", "generate_synthetic",
]
