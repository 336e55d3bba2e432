"""Run configuration: one strict schema covering every pipeline stage."""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .models import AFNOConfig, CNNConfig, ConvLSTMConfig, UNetConfig
from .preprocess import PreprocessConfig
from .synthetic import SyntheticConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SplitConfig(_Strict):
    # inclusive step ranges; None means year-aligned defaults
    train_range: Optional[tuple[int, int]] = None
    test_range: Optional[tuple[int, int]] = None
    val_fraction: float = 0.2
    test_years: int = 3
    gap_years: int = 1


class DataConfig(_Strict):
    path: Optional[str] = None  # container file; None generates the synthetic dataset in memory
    synthetic: SyntheticConfig = SyntheticConfig()
    channel_names: Optional[list[str]] = None
    target_name: Optional[str] = None
    split: SplitConfig = SplitConfig()


class ModelSection(_Strict):
    arch: Literal["cnn", "convlstm", "afno", "unet"] = "unet"
    mode: Literal["static", "ar", "persistence"] = "static"
    window: tuple[int, int] = (1, 0)
    checkpoint: Optional[str] = None
    init_checkpoint: Optional[str] = None  # train: start from these weights
    pad_to_fit: bool = False
    cnn: CNNConfig = CNNConfig()
    convlstm: ConvLSTMConfig = ConvLSTMConfig()
    afno: AFNOConfig = AFNOConfig()
    unet: UNetConfig = UNetConfig()

    @field_validator("window")
    @classmethod
    def _nonneg(cls, v):
        if min(v) < 0:
            raise ValueError("window offsets must be >= 0")
        return v

    def arch_config(self):
        return getattr(self, self.arch)


class ForecastSection(_Strict):
    H: int = Field(11, ge=1)


class DiagnosticsSection(_Strict):
    n_modes: int = Field(2, ge=1)
    kinds: list[Literal["seasonal", "nonseasonal"]] = ["seasonal", "nonseasonal"]
    annual_mean: Literal["per_year", "all_time"] = "per_year"
    basins: Optional[dict[str, dict[str, tuple[float, float]]]] = None
    prediction: Optional[str] = None  # container written by `evaluate`


class OutputSection(_Strict):
    dir: str = "geoemu_out"
    plots: bool = False


class RunConfig(_Strict):
    seed: int = 0
    data: DataConfig = DataConfig()
    preprocess: PreprocessConfig = PreprocessConfig()
    model: ModelSection = ModelSection()
    training: TrainConfig = TrainConfig()
    forecast: ForecastSection = ForecastSection()
    diagnostics: DiagnosticsSection = DiagnosticsSection()
    output: OutputSection = OutputSection()

    @model_validator(mode="after")
    def _modes(self):
        if self.model.mode == "static" and self.training.rollout_K is not None:
            raise ValueError("training.rollout_K is only valid with model.mode='ar'")
        return self


def _set_dotted(tree: dict, key: str, value) -> None:
    parts = key.split(".")
    node = tree
    for p in parts[:-1]:
        nxt = node.get(p)
        if nxt is None:
            nxt = node[p] = {}
        elif not isinstance(nxt, dict):
            raise ConfigError(f"cannot set {key!r}: {p!r} is not a section")
        node = nxt
    node[parts[-1]] = value


def apply_overrides(tree: dict, overrides: list[str]) -> dict:
    """Apply ``key.sub=value`` strings; values are parsed as YAML scalars/lists."""
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        _set_dotted(tree, key.strip(), yaml.safe_load(raw))
    return tree


def read_tree(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        tree = yaml.safe_load(fh) or {}
    if not isinstance(tree, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return tree


def load_config(path=None, overrides: list[str] | None = None) -> RunConfig:
    return RunConfig.model_validate(apply_overrides(read_tree(path), overrides or []))


def dump_config(cfg: RunConfig, path) -> None:
    """Write the fully resolved config (defaults included)."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.model_dump(mode="json"), fh, sort_keys=True)
