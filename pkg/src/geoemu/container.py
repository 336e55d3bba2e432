"""Self-describing gridded container (netCDF classic / 64-bit offset files).

A dataset file holds dimensions (time, y, x), one (time, y, x) array per
predictor plus one for the target, a ``valid_mask`` byte array and global
attributes ``channel_names``, ``units`` and optionally ``calendar_start``.
Missing values are stored as NaN and come back as explicit mask bits.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy.io import netcdf_file

from .grid import REFERENCE_CHANNELS, GridSpec, PredictorStack, TargetSeries


class DatasetLoadError(ValueError):
    """A container is missing something or is malformed.

    ``offender`` names the missing dimension/variable (or the bad axis).
    """

    def __init__(self, message: str, offender: str | list[str] | None = None):
        super().__init__(message)
        self.offender = offender


def write_container(path, dims: dict[str, int], variables: dict, attrs: dict | None = None):
    """Write arrays to a container.

    ``variables`` maps name -> (dim names, array). Booleans are stored as bytes.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with netcdf_file(path, "w", version=2) as nc:
        for key, value in (attrs or {}).items():
            # global attributes live in the file object's namespace
            if key in vars(nc) and key != "_attributes":
                raise ValueError(f"attribute name {key!r} is reserved")
            setattr(nc, key, value)
        for name, size in dims.items():
            nc.createDimension(name, size)
        for name, (vdims, arr) in variables.items():
            arr = np.asarray(arr)
            if arr.dtype == bool:
                arr = arr.astype(np.int8)
            elif arr.dtype.kind == "i":
                arr = arr.astype(np.int32)
            elif arr.dtype.kind == "f":
                arr = arr.astype(np.float64)
            var = nc.createVariable(name, arr.dtype, tuple(vdims))
            if arr.ndim:
                var[:] = arr
            else:
                var.assignValue(arr)


def read_container(path) -> tuple[dict[str, int], dict[str, tuple[tuple[str, ...], np.ndarray]], dict]:
    """Read every variable of a container into memory."""
    path = Path(path)
    if not path.exists():
        raise DatasetLoadError(f"no such container: {path}", str(path))
    with netcdf_file(path, "r", mmap=False) as nc:
        dims = {k: int(v) for k, v in nc.dimensions.items()}
        variables = {
            name: (tuple(var.dimensions), np.array(var.data, copy=True))
            for name, var in nc.variables.items()
        }
        attrs = {k: (v.decode() if isinstance(v, bytes) else v) for k, v in nc._attributes.items()}
    return dims, variables, attrs


def save_dataset(path, grid: GridSpec, stack: PredictorStack, target: TargetSeries) -> None:
    T, L, W = grid.n_steps, grid.length, grid.width
    dims = {"time": T, "y": L, "x": W}
    variables = {"time": (("time",), np.arange(T, dtype=np.int32))}
    for c, name in enumerate(stack.channel_names):
        variables[name] = (("time", "y", "x"), stack.values[..., c])
    variables[target.name] = (("time", "y", "x"), target.values)
    variables["valid_mask"] = (("y", "x"), grid.valid_mask)
    if grid.lat_edges is not None:
        dims["y_edge"] = L + 1
        variables["lat_edges"] = (("y_edge",), grid.lat_edges)
    if grid.lon_edges is not None:
        dims["x_edge"] = W + 1
        variables["lon_edges"] = (("x_edge",), grid.lon_edges)
    attrs = {
        "channel_names": ",".join(stack.channel_names),
        "units": json.dumps(stack.units),
        "target_name": target.name,
        "target_space": target.space,
    }
    if grid.calendar_start:
        attrs["calendar_start"] = grid.calendar_start
    write_container(path, dims, variables, attrs)


def load_dataset(path, channel_names=None, target_name=None):
    """Load ``(GridSpec, PredictorStack, TargetSeries)`` from a container.

    Expected names come from the arguments, then from the file attributes,
    then from the reference channel set.
    """
    dims, variables, attrs = read_container(path)
    missing_dims = [d for d in ("time", "y", "x") if d not in dims]
    if missing_dims:
        raise DatasetLoadError(f"missing dimension(s): {', '.join(missing_dims)}", missing_dims)

    if channel_names is None:
        declared = attrs.get("channel_names")
        channel_names = declared.split(",") if declared else list(REFERENCE_CHANNELS)
    target_name = target_name or attrs.get("target_name", "chl")
    wanted = list(channel_names) + [target_name, "valid_mask"]
    absent = [v for v in wanted if v not in variables]
    if absent:
        raise DatasetLoadError(f"missing variable(s): {', '.join(absent)}", absent)

    T, L, W = dims["time"], dims["y"], dims["x"]
    for name in list(channel_names) + [target_name]:
        vdims, arr = variables[name]
        if vdims != ("time", "y", "x") or arr.shape != (T, L, W):
            raise DatasetLoadError(
                f"variable {name} has dims {vdims} {arr.shape}, expected (time, y, x) {(T, L, W)}",
                name,
            )
    if "time" in variables:
        t = variables["time"][1]
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise DatasetLoadError("time axis is not strictly increasing", "time")

    valid = variables["valid_mask"][1].astype(bool)
    if valid.shape != (L, W):
        raise DatasetLoadError(f"valid_mask shape {valid.shape} != {(L, W)}", "valid_mask")
    units = json.loads(attrs["units"]) if "units" in attrs else []
    grid = GridSpec(
        width=W,
        length=L,
        n_steps=T,
        valid_mask=valid,
        lat_edges=variables["lat_edges"][1] if "lat_edges" in variables else None,
        lon_edges=variables["lon_edges"][1] if "lon_edges" in variables else None,
        calendar_start=attrs.get("calendar_start") or None,
    )
    values = np.stack([variables[n][1] for n in channel_names], axis=-1)
    stack = PredictorStack(values=values, channel_names=list(channel_names), units=units)
    target = TargetSeries(
        values=variables[target_name][1],
        name=target_name,
        space=attrs.get("target_space", "log(mg m-3)"),
    )
    target.restrict_to(valid)
    return grid, stack, target
