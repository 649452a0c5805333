"""Multi-channel grid maps, pose/cell conventions and the raster container.

Convention shared by every module: row-major rasters, origin at the top-left
corner, +x east along columns, +y south along rows.  Cell ``(r, c)`` covers
``[c*res, (c+1)*res) x [r*res, (r+1)*res)`` in meters.  Headings are radians
with east = 0 and clockwise positive (which, with +y pointing south, is the
ordinary ``atan2(dy, dx)``).
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "CHANNEL_KINDS",
    "ChannelSpec",
    "GridStack",
    "Pose2D",
    "RasterFormatError",
    "normalize_angle",
    "cell_center",
    "metric_to_cell",
    "channel_name",
    "new_grid",
    "semantic_channel_specs",
    "transform",
    "write_raster",
    "read_raster",
]

CHANNEL_KINDS = ("occupancy", "explored", "object", "room", "potential", "scalar")
_BINARY_KINDS = {"occupancy", "explored", "object", "room"}
_NAME_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")
RASTER_FORMAT = "o2rnav-raster"


class RasterFormatError(ValueError):
    """A raster container on disk (or in memory) violates the format."""


def normalize_angle(theta: float) -> float:
    """Wrap to [-pi, pi)."""
    t = math.fmod(theta + math.pi, 2.0 * math.pi)
    if t < 0:
        t += 2.0 * math.pi
    t -= math.pi
    # fmod can land exactly on +pi after the shift for tiny negative inputs
    return -math.pi if t >= math.pi else t


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    def cell(self, resolution: float) -> tuple[int, int]:
        return metric_to_cell(self.x, self.y, resolution)

    def distance_to(self, other: "Pose2D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


def cell_center(row: int, col: int, resolution: float) -> tuple[float, float]:
    """Metric (x, y) of a cell center."""
    return ((col + 0.5) * resolution, (row + 0.5) * resolution)


def metric_to_cell(x: float, y: float, resolution: float) -> tuple[int, int]:
    return (int(math.floor(y / resolution)), int(math.floor(x / resolution)))


def channel_name(kind: str, category: str | None = None) -> str:
    """File-safe channel name, e.g. ``room:child's room`` -> ``room_childs_room``."""
    if category is None:
        return kind
    slug = re.sub(r"[^A-Za-z0-9]+", "_", category.replace("'", "")).strip("_").lower()
    return f"{kind}_{slug}"


@dataclass(frozen=True)
class ChannelSpec:
    kind: str
    name: str = ""
    category: str | None = None

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if not self.name:
            object.__setattr__(self, "name", channel_name(self.kind, self.category))
        if not _NAME_RE.match(self.name):
            raise ValueError(f"channel name {self.name!r} is not file-safe")

    @property
    def binary(self) -> bool:
        return self.kind in _BINARY_KINDS

    def to_json(self) -> dict:
        return {"name": self.name, "kind": self.kind, "category": self.category}

    @classmethod
    def parse(cls, spec) -> "ChannelSpec":
        """Accept a ChannelSpec, a mapping, ``"kind"`` or ``"kind:category"``."""
        if isinstance(spec, ChannelSpec):
            return spec
        if isinstance(spec, dict):
            return cls(spec["kind"], spec.get("name") or "", spec.get("category"))
        if isinstance(spec, str):
            kind, _, cat = spec.partition(":")
            return cls(kind, "", cat or None)
        if isinstance(spec, (tuple, list)):
            return cls(*spec)
        raise TypeError(f"cannot interpret channel spec {spec!r}")


def semantic_channel_specs(objects: Sequence[str]) -> list[ChannelSpec]:
    """The canonical semantic map layout: obstacle, explored, one per object."""
    specs = [ChannelSpec("occupancy", "obstacle"), ChannelSpec("explored", "explored")]
    specs += [ChannelSpec("object", category=o) for o in objects]
    return specs


@dataclass
class GridStack:
    """A stack of equally sized float32 rasters with per-channel semantics."""

    height: int
    width: int
    resolution: float
    channels: tuple[ChannelSpec, ...]
    data: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.channels = tuple(self.channels)
        names = [c.name for c in self.channels]
        if len(set(names)) != len(names):
            raise ValueError("channel names must be unique")
        if self.data.shape != (len(self.channels), self.height, self.width):
            raise ValueError(
                f"data shape {self.data.shape} does not match "
                f"({len(self.channels)}, {self.height}, {self.width})"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.channels]

    def index(self, name: str) -> int:
        for i, c in enumerate(self.channels):
            if c.name == name:
                return i
        raise KeyError(name)

    def spec(self, name: str) -> ChannelSpec:
        return self.channels[self.index(name)]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[self.index(name)]

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def set(self, name: str, values) -> None:
        self.data[self.index(name)] = np.asarray(values, dtype=np.float32)

    def find(self, kind: str, category: str | None = None) -> list[ChannelSpec]:
        return [c for c in self.channels
                if c.kind == kind and (category is None or c.category == category)]

    def copy(self) -> "GridStack":
        return GridStack(self.height, self.width, self.resolution, self.channels,
                         self.data.copy(), dict(self.meta))

    def extent_m(self) -> tuple[float, float]:
        return (self.width * self.resolution, self.height * self.resolution)

    def validate(self) -> None:
        """Raise RasterFormatError if any channel breaks its value invariant."""
        if not self.resolution > 0:
            raise RasterFormatError("resolution must be positive")
        for spec, raster in zip(self.channels, self.data):
            if spec.binary:
                bad = ~((raster == 0) | (raster == 1))
                what = "values outside {0, 1}"
            elif spec.kind == "potential":
                bad = ~((raster >= -1) & (raster <= 1))
                what = "values outside [-1, 1]"
            else:
                continue
            if bad.any():
                r, c = np.argwhere(bad)[0]
                raise RasterFormatError(
                    f"channel {spec.name!r} has {what}: {float(raster[r, c])!r} at cell ({r}, {c})"
                )


def new_grid(height: int, width: int, resolution: float, channel_spec: Iterable) -> GridStack:
    if int(height) < 1 or int(width) < 1:
        raise ValueError(f"grid dimensions must be >= 1, got {height}x{width}")
    if not resolution > 0:
        raise ValueError(f"resolution must be positive, got {resolution}")
    specs = tuple(ChannelSpec.parse(s) for s in channel_spec)
    data = np.zeros((len(specs), int(height), int(width)), dtype=np.float32)
    return GridStack(int(height), int(width), float(resolution), specs, data)


def transform(grid: GridStack, angle: float, dx: int = 0, dy: int = 0) -> GridStack:
    """Rotate by ``angle`` (clockwise on screen) about the grid center, then
    shift by ``dx`` columns east and ``dy`` rows south.

    Inverse-mapped nearest-neighbour sampling; cells that map outside the
    source are 0 in every channel.
    """
    H, W = grid.height, grid.width
    cy, cx = H / 2.0, W / 2.0
    rows, cols = np.mgrid[0:H, 0:W]
    x = cols + 0.5 - cx - dx
    y = rows + 0.5 - cy - dy
    ca, sa = math.cos(angle), math.sin(angle)
    # inverse rotation
    sx = ca * x + sa * y + cx
    sy = -sa * x + ca * y + cy
    src_c = np.floor(sx).astype(np.int64)
    src_r = np.floor(sy).astype(np.int64)
    inside = (src_r >= 0) & (src_r < H) & (src_c >= 0) & (src_c < W)
    out = np.zeros_like(grid.data)
    out[:, inside] = grid.data[:, src_r[inside], src_c[inside]]
    return GridStack(H, W, grid.resolution, grid.channels, out, dict(grid.meta))


def write_raster(grid: GridStack, path) -> None:
    """Write ``meta.json`` plus one little-endian float32 file per channel."""
    path = Path(path)
    if not path.parent.is_dir():
        raise FileNotFoundError(f"parent directory {path.parent} does not exist")
    path.mkdir(exist_ok=True)
    meta = {
        "format": RASTER_FORMAT,
        "version": 1,
        "height": grid.height,
        "width": grid.width,
        "resolution": grid.resolution,
        "byte_order": "little-endian",
        "dtype": "f32",
        "channels": [c.to_json() for c in grid.channels],
    }
    if grid.meta:
        meta["extra"] = grid.meta
    for spec, raster in zip(grid.channels, grid.data):
        np.ascontiguousarray(raster, dtype="<f4").tofile(path / f"{spec.name}.f32")
    with open(path / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _require(meta: dict, key: str, types):
    if key not in meta:
        raise RasterFormatError(f"meta.json: missing field {key!r}")
    value = meta[key]
    if not isinstance(value, types) or isinstance(value, bool):
        raise RasterFormatError(f"meta.json: field {key!r} has invalid type {type(value).__name__}")
    return value


def read_raster(path, validate: bool = True) -> GridStack:
    path = Path(path)
    try:
        with open(path / "meta.json") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise RasterFormatError(f"{path}: meta.json not found") from None
    except json.JSONDecodeError as exc:
        raise RasterFormatError(f"{path}/meta.json: malformed JSON ({exc})") from None
    if not isinstance(meta, dict):
        raise RasterFormatError("meta.json: top level must be an object")
    if meta.get("format", RASTER_FORMAT) != RASTER_FORMAT:
        raise RasterFormatError(f"meta.json: field 'format' is {meta.get('format')!r}")
    height = _require(meta, "height", int)
    width = _require(meta, "width", int)
    resolution = float(_require(meta, "resolution", (int, float)))
    if height < 1 or width < 1:
        raise RasterFormatError(f"meta.json: field 'height'/'width' must be >= 1, got {height}x{width}")
    if not resolution > 0:
        raise RasterFormatError("meta.json: field 'resolution' must be positive")
    if meta.get("byte_order", "little-endian") != "little-endian":
        raise RasterFormatError(f"meta.json: field 'byte_order' is {meta.get('byte_order')!r}")
    if meta.get("dtype", "f32") != "f32":
        raise RasterFormatError(f"meta.json: field 'dtype' is {meta.get('dtype')!r}")
    raw_channels = _require(meta, "channels", list)
    try:
        specs = tuple(ChannelSpec.parse(c) for c in raw_channels)
    except (KeyError, TypeError, ValueError) as exc:
        raise RasterFormatError(f"meta.json: field 'channels' invalid ({exc})") from None
    payload = sorted(p.name for p in path.glob("*.f32"))
    declared = sorted(f"{s.name}.f32" for s in specs)
    if payload != declared:
        missing = sorted(set(declared) - set(payload))
        extra = sorted(set(payload) - set(declared))
        raise RasterFormatError(
            f"field 'channels': header declares {len(declared)} channels, found "
            f"{len(payload)} payload rasters (missing {missing}, unexpected {extra})"
        )
    data = np.empty((len(specs), height, width), dtype=np.float32)
    expected = height * width * 4
    for i, spec in enumerate(specs):
        f = path / f"{spec.name}.f32"
        size = os.path.getsize(f)
        if size != expected:
            raise RasterFormatError(
                f"channel {spec.name!r}: payload is {size} bytes, expected {expected} "
                f"(height*width*4)"
            )
        data[i] = np.fromfile(f, dtype="<f4").reshape(height, width)
    grid = GridStack(height, width, resolution, specs, data, dict(meta.get("extra", {})))
    if validate:
        grid.validate()
    return grid
