"""Partial-map augmentation, frontier extraction and ground-truth potentials.

A training sample pairs a partial map (the union of square patches along a
shortest path through a complete map) with per-frontier-cell targets for
three tasks:

* area: share of the map's navigable area hidden behind each frontier,
* object: linear decay of the geodesic distance to the nearest success
  circle of a target category,
* o2r: object-to-room affinity of the room each frontier cell lies in.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .fmm import footprint_field, geodesic_field, shortest_path
from .grid import ChannelSpec, GridStack, RasterFormatError, channel_name, new_grid, read_raster, \
    transform, write_raster
from .knowledge.matrix import O2RMatrix

DEFAULT_PATCH_M = 0.30
DEFAULT_D_MAX = 5.0
DEFAULT_SUCCESS_RADIUS = 1.0
MIN_FRONTIER_SIZE = 4

EIGHT = np.ones((3, 3), dtype=bool)
FOUR = ndimage.generate_binary_structure(2, 1)


class SamplingError(RuntimeError):
    pass


def obstacle_mask(grid: GridStack) -> np.ndarray:
    return grid["obstacle"] > 0.5


def navigable_mask(grid: GridStack) -> np.ndarray:
    return ~obstacle_mask(grid)


@dataclass
class PartialMap:
    """Explored subset of a complete map.  Obstacles are known only where explored."""

    explored: np.ndarray
    complete: GridStack
    patch_m: float = DEFAULT_PATCH_M
    agent_centric: bool = False
    path: np.ndarray | None = field(default=None, repr=False)
    augmentation: dict | None = None

    def __post_init__(self):
        self.explored = np.asarray(self.explored, dtype=bool)
        if self.explored.shape != self.complete.shape:
            raise ValueError("explored mask shape does not match the complete map")

    @property
    def complete_id(self):
        return self.complete.meta.get("scene_id")

    @property
    def obstacle(self) -> np.ndarray:
        return obstacle_mask(self.complete) & self.explored


def trace_cells(waypoints: Sequence) -> np.ndarray:
    """Cells visited by the polyline through ``waypoints`` (every cell center
    within half a cell of the segment, sampled densely)."""
    pts = np.asarray(waypoints, dtype=np.int64).reshape(-1, 2)
    if len(pts) == 1:
        return pts.copy()
    out = [pts[:1]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = int(max(abs(b - a))) * 2
        t = np.linspace(0.0, 1.0, n + 1)[1:]
        seg = np.rint(a[None, :] + (b - a)[None, :] * t[:, None]).astype(np.int64)
        out.append(seg)
    cells = np.concatenate(out)
    keep = np.ones(len(cells), dtype=bool)
    keep[1:] = (np.diff(cells, axis=0) != 0).any(axis=1)
    return cells[keep]


def patch_union(cells: np.ndarray, shape, patch_cells: int) -> np.ndarray:
    """Union of ``patch_cells`` x ``patch_cells`` squares centered on ``cells``."""
    mask = np.zeros(shape, dtype=bool)
    mask[cells[:, 0], cells[:, 1]] = True
    if patch_cells <= 1:
        return mask
    return ndimage.maximum_filter(mask, size=patch_cells, mode="constant", cval=False)


def _augment(complete: GridStack, rng: np.random.Generator) -> tuple[GridStack, dict]:
    angle = float(rng.uniform(-math.pi, math.pi))
    dx = int(rng.integers(-complete.width // 8, complete.width // 8 + 1))
    dy = int(rng.integers(-complete.height // 8, complete.height // 8 + 1))
    probe = complete.copy()
    probe.data = np.concatenate([probe.data, np.ones((1,) + complete.shape, np.float32)])
    probe.channels = probe.channels + (ChannelSpec("scalar", "_inside"),)
    moved = transform(probe, angle, dx, dy)
    outside = moved.data[-1] < 0.5
    out = GridStack(complete.height, complete.width, complete.resolution, complete.channels,
                    moved.data[:-1].copy(), dict(complete.meta))
    # the world beyond the source raster is solid, not free floor
    out.data[out.index("obstacle"), outside] = 1.0
    return out, {"angle": angle, "dx": dx, "dy": dy}


def sample_partial_map(
    complete: GridStack,
    seed: int,
    patch_m: float = DEFAULT_PATCH_M,
    augment: bool = False,
    max_retries: int = 20,
) -> PartialMap:
    """Explored mask = union of patches centered on every cell of a shortest
    path between two random navigable cells."""
    rng = np.random.default_rng(seed)
    aug = None
    if augment:
        complete, aug = _augment(complete, rng)
    nav = navigable_mask(complete)
    free = np.argwhere(nav)
    if len(free) < 2:
        raise SamplingError("complete map has fewer than two navigable cells")
    k = max(1, int(round(patch_m / complete.resolution)))
    for _ in range(max_retries):
        start = free[rng.integers(len(free))]
        dist = geodesic_field(~nav, start, complete.resolution)
        reach = np.argwhere(dist.reachable())
        if len(reach) < 2:
            continue
        end = reach[rng.integers(len(reach))]
        waypoints = [tuple(end)] + shortest_path(dist, end)
        cells = trace_cells(waypoints)
        explored = patch_union(cells, complete.shape, k)
        return PartialMap(explored, complete, patch_m, False, cells, aug)
    raise SamplingError(f"no connected navigable pair found after {max_retries} attempts")


@dataclass
class FrontierSet:
    """Labeled frontier components.  ``labels`` holds ids 1..n (0 = none);
    ``components[i]`` lists the cells of id ``i + 1`` in row-major order."""

    labels: np.ndarray
    components: list[np.ndarray]
    scores: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.components)

    @property
    def mask(self) -> np.ndarray:
        return self.labels > 0

    def cells(self) -> np.ndarray:
        if not self.components:
            return np.zeros((0, 2), dtype=np.int64)
        return np.argwhere(self.mask)


def frontier_cells(explored: np.ndarray, obstacle: np.ndarray) -> np.ndarray:
    """Explored, non-obstacle cells with an unexplored 8-neighbour (off-grid
    neighbours do not count)."""
    explored = np.asarray(explored, dtype=bool)
    unexplored = np.pad(~explored, 1, constant_values=False)
    near = ndimage.binary_dilation(unexplored, structure=EIGHT)[1:-1, 1:-1]
    return explored & ~np.asarray(obstacle, dtype=bool) & near


def find_frontiers(explored: np.ndarray, obstacle: np.ndarray, min_size: int = MIN_FRONTIER_SIZE) -> FrontierSet:
    cand = frontier_cells(explored, obstacle)
    labels, n = ndimage.label(cand, structure=EIGHT)
    if n == 0:
        return FrontierSet(labels.astype(np.int32), [])
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    keep = np.zeros(n + 1, dtype=bool)
    keep[1:] = sizes[1:] >= min_size
    # renumber survivors in order of first appearance (row-major)
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[keep] = np.arange(1, int(keep.sum()) + 1)
    labels = remap[labels]
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat[order], np.arange(1, int(keep.sum()) + 2))
    W = labels.shape[1]
    comps = []
    for i in range(int(keep.sum())):
        idx = order[bounds[i]:bounds[i + 1]]
        comps.append(np.stack([idx // W, idx % W], axis=1))
    return FrontierSet(labels, comps)


def extract_frontiers(partial: PartialMap, min_size: int = MIN_FRONTIER_SIZE) -> FrontierSet:
    return find_frontiers(partial.explored, partial.obstacle, min_size)


def area_scores(frontiers: FrontierSet, explored: np.ndarray, navigable: np.ndarray) -> np.ndarray:
    """Per-component share of total navigable area hidden behind each frontier.

    Unexplored navigable cells are split into 4-connected regions.  A region
    belongs to a frontier if one of its cells is 4-adjacent to a cell of that
    frontier; a region touching several frontiers goes to the one with the
    most such contacts (lowest id on ties), so each region is counted once.
    """
    n = len(frontiers)
    out = np.zeros(n)
    total = int(navigable.sum())
    if n == 0 or total == 0:
        return out
    hidden = navigable & ~explored
    regions, m = ndimage.label(hidden, structure=FOUR)
    if m == 0:
        return out
    sizes = np.bincount(regions.ravel(), minlength=m + 1)
    contacts = np.zeros((m + 1, n + 1), dtype=np.int64)
    lab = frontiers.labels
    H, W = lab.shape
    for dr, dc in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        a = lab[max(0, -dr):H - max(0, dr), max(0, -dc):W - max(0, dc)]
        b = regions[max(0, dr):H - max(0, -dr), max(0, dc):W - max(0, -dc)]
        sel = (a > 0) & (b > 0)
        np.add.at(contacts, (b[sel], a[sel]), 1)
    touched = contacts[1:, 1:].sum(axis=1) > 0
    owner = np.argmax(contacts[1:, 1:], axis=1)
    for region in np.nonzero(touched)[0]:
        out[owner[region]] += sizes[region + 1]
    return out / total


def _paint(frontiers: FrontierSet, per_component: np.ndarray) -> np.ndarray:
    lut = np.concatenate([[0.0], per_component]).astype(np.float32)
    return lut[frontiers.labels]


def area_potential(partial: PartialMap, complete: GridStack | None = None,
                   frontiers: FrontierSet | None = None) -> np.ndarray:
    complete = complete or partial.complete
    frontiers = frontiers if frontiers is not None else extract_frontiers(partial)
    scores = area_scores(frontiers, partial.explored, navigable_mask(complete))
    frontiers.scores["area"] = scores
    return _paint(frontiers, scores)


def success_region(occupancy: np.ndarray, instances: np.ndarray, resolution: float,
                   radius: float = DEFAULT_SUCCESS_RADIUS, traversable=None) -> np.ndarray:
    """Traversable cells whose geodesic distance to an instance cell is below ``radius``."""
    if not np.asarray(instances).any():
        return np.zeros(np.shape(occupancy), dtype=bool)
    f = footprint_field(occupancy, instances, resolution, traversable)
    return f.values < radius


def target_distance(complete: GridStack, category: str,
                    success_radius: float = DEFAULT_SUCCESS_RADIUS, traversable=None) -> np.ndarray:
    """Geodesic distance (m) from every cell to the nearest success circle of
    ``category``; all ``inf`` when the category is absent."""
    name = channel_name("object", category)
    occ = obstacle_mask(complete)
    if name not in complete or not (complete[name] > 0.5).any():
        return np.full(complete.shape, np.inf)
    region = success_region(occ, complete[name] > 0.5, complete.resolution, success_radius, traversable)
    if not region.any():
        return np.full(complete.shape, np.inf)
    return geodesic_field(occ, region, complete.resolution, traversable).values


def object_score(d_g, d_max: float = DEFAULT_D_MAX):
    """Linear decay: 1 on the success circle, 0 at ``d_max`` and beyond."""
    if not d_max > 0:
        raise ValueError("d_max must be positive")
    d = np.asarray(d_g, dtype=np.float64)
    return np.maximum(1.0 - d / d_max, 0.0)


def object_potential(partial: PartialMap, complete: GridStack | None, category: str,
                     d_max: float = DEFAULT_D_MAX, frontiers: FrontierSet | None = None,
                     distance: np.ndarray | None = None,
                     success_radius: float = DEFAULT_SUCCESS_RADIUS) -> np.ndarray:
    complete = complete or partial.complete
    if not d_max > 0:
        raise ValueError("d_max must be positive")
    frontiers = frontiers if frontiers is not None else extract_frontiers(partial)
    if distance is None:
        distance = target_distance(complete, category, success_radius)
    out = np.zeros(complete.shape, dtype=np.float32)
    m = frontiers.mask
    out[m] = object_score(distance[m], d_max)
    return out


def room_index(grid: GridStack) -> tuple[np.ndarray, list[str]]:
    """Int raster of room-channel indices (-1 outside every room) and the
    matching category list."""
    specs = grid.find("room")
    idx = np.full(grid.shape, -1, dtype=np.int32)
    for k, spec in enumerate(specs):
        idx[grid[spec.name] > 0.5] = k
    return idx, [s.category for s in specs]


def o2r_potential(partial: PartialMap, complete: GridStack | None, matrix: O2RMatrix, category: str,
                  frontiers: FrontierSet | None = None) -> np.ndarray:
    j = matrix.object_index(category)
    complete = complete or partial.complete
    frontiers = frontiers if frontiers is not None else extract_frontiers(partial)
    idx, cats = room_index(complete)
    lut = np.array([matrix.scores[matrix.rooms.index(c), j] if c in matrix.rooms else 0.0
                    for c in cats] + [0.0], dtype=np.float32)
    out = np.zeros(complete.shape, dtype=np.float32)
    m = frontiers.mask
    out[m] = lut[idx[m]]
    return out


@dataclass
class DatasetSample:
    sample_id: str
    scene_id: str | None
    seed: int
    patch_m: float
    d_max: float
    resolution: float
    categories: list[str]
    obstacle: np.ndarray
    explored: np.ndarray
    frontier: np.ndarray
    area: np.ndarray
    objects: dict
    o2r: dict
    augmentation: dict | None = None

    def to_grid(self) -> GridStack:
        specs = [ChannelSpec("occupancy", "obstacle"), ChannelSpec("explored", "explored"),
                 ChannelSpec("scalar", "frontier"), ChannelSpec("potential", "area")]
        specs += [ChannelSpec("potential", channel_name("object", c), c) for c in self.categories]
        specs += [ChannelSpec("potential", channel_name("o2r", c), c) for c in self.categories]
        H, W = self.explored.shape
        g = new_grid(H, W, self.resolution, specs)
        rasters = [self.obstacle, self.explored, self.frontier, self.area]
        rasters += [self.objects[c] for c in self.categories] + [self.o2r[c] for c in self.categories]
        for k, r in enumerate(rasters):
            g.data[k] = np.asarray(r, dtype=np.float32)
        g.meta = {"sample": {
            "id": self.sample_id, "scene_id": self.scene_id, "seed": int(self.seed),
            "categories": list(self.categories), "patch_m": self.patch_m, "d_max": self.d_max,
            "augmentation": self.augmentation,
        }}
        return g

    @classmethod
    def from_grid(cls, g: GridStack) -> "DatasetSample":
        meta = g.meta.get("sample")
        if not isinstance(meta, dict):
            raise RasterFormatError("meta.json: missing field 'extra.sample'")
        try:
            cats = list(meta["categories"])
            return cls(
                sample_id=meta["id"], scene_id=meta.get("scene_id"), seed=int(meta["seed"]),
                patch_m=float(meta["patch_m"]), d_max=float(meta["d_max"]), resolution=g.resolution,
                categories=cats,
                obstacle=g["obstacle"] > 0.5, explored=g["explored"] > 0.5, frontier=g["frontier"] > 0.5,
                area=g["area"].copy(),
                objects={c: g[channel_name("object", c)].copy() for c in cats},
                o2r={c: g[channel_name("o2r", c)].copy() for c in cats},
                augmentation=meta.get("augmentation"),
            )
        except KeyError as exc:
            raise RasterFormatError(f"sample is missing field or channel {exc}") from None

    def validate(self) -> None:
        fr = np.asarray(self.frontier, dtype=bool)
        if (fr & ~np.asarray(self.explored, dtype=bool)).any():
            raise RasterFormatError("frontier cell outside the explored area")
        checks = [("area", self.area, 0.0, 1.0)]
        checks += [(channel_name("object", c), self.objects[c], 0.0, 1.0) for c in self.categories]
        checks += [(channel_name("o2r", c), self.o2r[c], -1.0, 1.0) for c in self.categories]
        for name, raster, lo, hi in checks:
            bad = ~((raster >= lo) & (raster <= hi))
            if bad.any():
                r, c = np.argwhere(bad)[0]
                raise RasterFormatError(f"channel {name!r}: value {float(raster[r, c])!r} at ({r}, {c}) "
                                        f"outside [{lo}, {hi}]")
            off = (raster != 0) & ~fr
            if off.any():
                r, c = np.argwhere(off)[0]
                raise RasterFormatError(f"channel {name!r}: nonzero potential at non-frontier cell ({r}, {c})")


def make_sample(complete: GridStack, matrix: O2RMatrix, categories: Sequence[str], seed: int,
                sample_id: str, patch_m: float = DEFAULT_PATCH_M, d_max: float = DEFAULT_D_MAX,
                augment: bool = False, min_size: int = MIN_FRONTIER_SIZE) -> DatasetSample:
    partial = sample_partial_map(complete, seed, patch_m, augment)
    comp = partial.complete
    fr = extract_frontiers(partial, min_size)
    sample = DatasetSample(
        sample_id=sample_id, scene_id=comp.meta.get("scene_id"), seed=int(seed), patch_m=patch_m,
        d_max=d_max, resolution=comp.resolution, categories=list(categories),
        obstacle=partial.obstacle, explored=partial.explored, frontier=fr.mask,
        area=area_potential(partial, comp, fr),
        objects={c: object_potential(partial, comp, c, d_max, fr) for c in categories},
        o2r={c: o2r_potential(partial, comp, matrix, c, fr) for c in categories},
        augmentation=partial.augmentation,
    )
    sample.validate()
    return sample


def emit_sample(sample: DatasetSample, path) -> None:
    sample.validate()
    write_raster(sample.to_grid(), path)


def load_sample(path) -> DatasetSample:
    sample = DatasetSample.from_grid(read_raster(path))
    sample.validate()
    return sample


def directory_hash(path) -> str:
    h = hashlib.sha256()
    for f in sorted(Path(path).iterdir()):
        h.update(f.name.encode())
        h.update(f.read_bytes())
    return h.hexdigest()


def sample_seed(seed: int, scene_index: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, scene_index, k]).generate_state(1)[0])


def _emit_job(args):
    complete, matrix, categories, s, name, patch_m, d_max, augment, out = args
    sample = make_sample(complete, matrix, categories, s, name, patch_m, d_max, augment)
    emit_sample(sample, Path(out) / name)
    return name, directory_hash(Path(out) / name)


def generate_dataset(completes: Sequence[GridStack], matrix: O2RMatrix, categories: Sequence[str],
                     samples_per_scene: int, seed: int, out_dir, patch_m: float = DEFAULT_PATCH_M,
                     d_max: float = DEFAULT_D_MAX, augment: bool = False, jobs: int = 1) -> dict:
    """Write one sample directory per (scene, k) plus ``manifest.json``.

    Output bytes depend only on the inputs and ``seed``, not on ``jobs``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = []
    for i, comp in enumerate(completes):
        for k in range(samples_per_scene):
            name = f"sample_{i:04d}_{k:05d}"
            tasks.append((comp, matrix, list(categories), sample_seed(seed, i, k), name,
                          patch_m, d_max, augment, str(out)))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_emit_job, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_emit_job(t) for t in tasks]
    entries = [{"dir": name, "sha256": digest} for name, digest in results]
    body = {"seed": int(seed), "categories": list(categories), "patch_m": patch_m, "d_max": d_max,
            "samples": entries}
    body["hash"] = hashlib.sha256(json.dumps(entries, sort_keys=True).encode()).hexdigest()
    with open(out / "manifest.json", "w") as fh:
        json.dump(body, fh, indent=1)
        fh.write("\n")
    return body
