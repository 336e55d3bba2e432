from __future__ import annotations

import numpy as np

from ..grid import GridSpec, default_edges

# rough rectangles standing in for basin polygons, lon in degrees east [-180, 180)
DEFAULT_BOXES = {
    "southern": {"lat": [-50.0, -35.0], "lon": [-180.0, 180.0]},
    "indian": {"lat": [-35.0, 30.0], "lon": [20.0, 120.0]},
    "pacific": {"lat": [-35.0, 50.0], "lon": [120.0, -70.0]},
    "atlantic": {"lat": [-35.0, 50.0], "lon": [-70.0, 20.0]},
}


def _in_lon(centres, west, east):
    """Half-open [west, east) test on the circle; west > east wraps the seam."""
    c = np.asarray(centres, dtype=np.float64)
    west, east = float(west), float(east)
    if east - west >= 360.0:
        return np.ones(c.shape, bool)
    return (c - west) % 360.0 < (east - west) % 360.0


def basin_masks(grid: GridSpec, boxes: dict | None = None) -> dict[str, np.ndarray]:
    """One boolean (L, W) mask per named lat/lon box, intersected with the
    valid mask. Boxes are half-open and must not overlap."""
    boxes = DEFAULT_BOXES if boxes is None else boxes
    lat_e, lon_e = grid.lat_edges, grid.lon_edges
    if lat_e is None or lon_e is None:
        lat_e, lon_e = default_edges(grid.length, grid.width)
    lat_c = 0.5 * (lat_e[:-1] + lat_e[1:])
    lon_c = 0.5 * (lon_e[:-1] + lon_e[1:])
    out, geom = {}, {}
    for name, box in boxes.items():
        (s, n), (w, e) = box["lat"], box["lon"]
        in_lat = (lat_c >= s) & (lat_c < n)
        in_lon = _in_lon(lon_c, w, e)
        geom[name] = in_lat[:, None] & in_lon[None, :]
        out[name] = geom[name] & grid.valid_mask
    names = list(geom)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            if (geom[a] & geom[b]).any():
                raise ValueError(f"basin boxes {a!r} and {b!r} overlap")
    return out
