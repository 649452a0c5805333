"""Procedural single-floor house layouts and their rasterization.

Layouts live on a cell lattice at their native ``resolution``: rooms are
half-open rectangles ``(r0, c0, r1, c1)`` of interior cells, walls are every
cell outside a room interior or a door opening, and object footprints are
rectangles inside one room.  Generation is a recursive rectangle split
(binary space partition) followed by door carving on shared walls and
prior-driven object placement with rejection.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .fmm import erode_traversable
from .grid import ChannelSpec, GridStack, new_grid
from .knowledge.matrix import O2RMatrix, bundled_matrix

Rect = tuple[int, int, int, int]

SCENE_FORMAT = "o2rnav-scene"

DEFAULT_SIZES_M = {
    "bed": (2.0, 1.5),
    "toilet": (0.5, 0.5),
    "chair": (0.5, 0.5),
    "couch": (2.0, 0.9),
    "potted plant": (0.4, 0.4),
    "tv": (1.0, 0.3),
    "dining table": (1.6, 0.9),
    "oven": (0.6, 0.6),
    "sink": (0.6, 0.5),
    "refrigerator": (0.8, 0.7),
    "book": (0.3, 0.2),
    "clock": (0.3, 0.3),
    "vase": (0.3, 0.3),
    "cup": (0.2, 0.2),
    "bottle": (0.2, 0.2),
}
FALLBACK_SIZE_M = (0.6, 0.6)

DEFAULT_ROOM_WEIGHTS = {
    "bedroom": 3.0,
    "bathroom": 2.0,
    "dining room": 1.5,
    "home office": 1.0,
    "child's room": 1.0,
    "television room": 0.7,
    "kitchen": 0.5,
    "living room": 0.5,
    "closet": 0.5,
    "utility room": 0.4,
    "storage room": 0.4,
    "playroom": 0.4,
    "exercise room": 0.3,
    "pantry room": 0.3,
    "lobby": 0.3,
    "garage": 0.3,
    "staircase": 0.3,
    "empty room": 0.2,
    # MP3D names
    "office": 1.0,
    "family room": 0.7,
    "laundry room": 0.4,
    "hallway": 0.5,
    "stairs": 0.3,
    "toilet": 0.5,
}
# Where household objects are found, as relative frequencies per room type.
# Written independently of the object-to-room matrix so that a policy using
# the matrix is not scored against its own knowledge.  Objects not listed are
# placed uniformly over the rooms present.
HOUSEHOLD_PLACEMENT = {
    "bed": {"bedroom": 3.0, "child's room": 1.0},
    "toilet": {"bathroom": 1.0, "toilet": 1.0},
    "chair": {"dining room": 3.0, "home office": 2.0, "office": 2.0, "kitchen": 2.0, "living room": 2.0,
              "bedroom": 1.5, "child's room": 1.0, "television room": 1.0, "family room": 1.0,
              "playroom": 1.0, "lobby": 0.5, "entryway": 0.5, "corridor": 0.5, "hallway": 0.5,
              "exercise room": 0.5, "gym": 0.5, "garage": 0.3, "meeting room": 2.0, "classroom": 2.0,
              "library": 1.0, "lounge": 1.0, "porch": 0.5, "bar": 1.0, "dining booth": 2.0},
    "couch": {"living room": 3.0, "television room": 2.0, "family room": 2.0, "lounge": 1.0,
              "playroom": 0.5, "home office": 0.3},
    "sofa": {"living room": 3.0, "family room": 2.0, "lounge": 2.0, "office": 0.3, "bedroom": 0.3},
    "tv": {"living room": 2.0, "television room": 3.0, "bedroom": 1.0, "playroom": 0.5},
    "tv_monitor": {"living room": 2.0, "family room": 2.0, "bedroom": 1.0, "office": 1.0},
    "dining table": {"dining room": 3.0, "kitchen": 1.0},
    "table": {"dining room": 2.0, "kitchen": 1.0, "living room": 1.0, "office": 1.0, "meeting room": 1.0},
    "oven": {"kitchen": 1.0},
    "refrigerator": {"kitchen": 3.0, "pantry room": 0.5, "garage": 0.3},
    "sink": {"kitchen": 1.0, "bathroom": 1.0, "utility room": 0.3, "laundry room": 0.3},
    "counter": {"kitchen": 2.0, "bathroom": 1.0, "bar": 1.0},
    "bathtub": {"bathroom": 1.0},
    "shower": {"bathroom": 1.0},
    "towel": {"bathroom": 3.0, "spa": 1.0},
    "gym_equipment": {"gym": 3.0, "exercise room": 3.0, "recroom": 0.5},
    "fireplace": {"living room": 2.0, "family room": 1.0, "lounge": 1.0},
    "clothes": {"closet": 2.0, "bedroom": 2.0, "laundry room": 1.0},
    "chest_of_drawers": {"bedroom": 3.0, "closet": 1.0},
}


DEFAULT_REQUIRED_ROOMS = ("living room", "kitchen", "bedroom", "bathroom")
CORRIDOR_NAMES = ("corridor", "hallway")
SIZE_PREFERENCE = {"living room": "largest", "bathroom": "smallest"}


class SceneError(ValueError):
    """Layout invariant violation or malformed scene file."""


class GenerationError(RuntimeError):
    """Parameters could not be satisfied within the retry budget."""


@dataclass(frozen=True, eq=False)
class PlacementPrior:
    rooms: tuple[str, ...]
    objects: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self):
        table = np.array(self.table, dtype=np.float64)
        object.__setattr__(self, "rooms", tuple(self.rooms))
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "table", table)
        if table.shape != (len(self.rooms), len(self.objects)):
            raise SceneError("placement prior table shape does not match its categories")
        if (table < 0).any() or not np.allclose(table.sum(axis=0), 1.0, atol=1e-9):
            raise SceneError("placement prior columns must be non-negative and sum to 1")

    def __eq__(self, other):
        return (isinstance(other, PlacementPrior) and self.rooms == other.rooms
                and self.objects == other.objects and np.array_equal(self.table, other.table))

    def column(self, obj: str) -> np.ndarray:
        return self.table[:, self.objects.index(obj)]

    @classmethod
    def from_matrix(cls, matrix: O2RMatrix, threshold: float = 0.3) -> "PlacementPrior":
        """Mass proportional to the affinity where it exceeds ``threshold``;
        columns with no such room fall back to uniform."""
        mass = np.where(matrix.scores > threshold, matrix.scores, 0.0)
        sums = mass.sum(axis=0)
        uniform = np.full(len(matrix.rooms), 1.0 / len(matrix.rooms))
        table = np.empty_like(mass)
        for j in range(mass.shape[1]):
            table[:, j] = mass[:, j] / sums[j] if sums[j] > 0 else uniform
        return cls(matrix.rooms, matrix.objects, table)

    @classmethod
    def household(cls, rooms, objects, placement: dict | None = None) -> "PlacementPrior":
        """Prior from a per-object frequency table (``HOUSEHOLD_PLACEMENT`` by default)."""
        placement = HOUSEHOLD_PLACEMENT if placement is None else placement
        rooms, objects = tuple(rooms), tuple(objects)
        table = np.full((len(rooms), len(objects)), 1.0 / len(rooms))
        for j, obj in enumerate(objects):
            freq = np.array([placement.get(obj, {}).get(r, 0.0) for r in rooms])
            if freq.sum() > 0:
                table[:, j] = freq / freq.sum()
        return cls(rooms, objects, table)

    @classmethod
    def fixed(cls, rooms, objects, assignment: dict[str, str]) -> "PlacementPrior":
        """Deterministic prior: each listed object goes to one room; others uniform."""
        rooms, objects = tuple(rooms), tuple(objects)
        table = np.full((len(rooms), len(objects)), 1.0 / len(rooms))
        for obj, room in assignment.items():
            j = objects.index(obj)
            table[:, j] = 0.0
            table[rooms.index(room), j] = 1.0
        return cls(rooms, objects, table)

    def to_json(self) -> dict:
        return {"rooms": list(self.rooms), "objects": list(self.objects),
                "table": self.table.tolist()}

    @classmethod
    def from_json(cls, doc) -> "PlacementPrior":
        return cls(tuple(doc["rooms"]), tuple(doc["objects"]), np.array(doc["table"], dtype=float))


@dataclass(frozen=True)
class Room:
    category: str
    rects: tuple[Rect, ...]

    def cells(self) -> int:
        return sum((r1 - r0) * (c1 - c0) for r0, c0, r1, c1 in self.rects)


@dataclass(frozen=True)
class Door:
    rect: Rect
    rooms: tuple[int, int]


@dataclass(frozen=True)
class SceneObject:
    category: str
    rect: Rect
    room: int


@dataclass(eq=True)
class SceneLayout:
    """A single-floor house on a cell lattice.  Bounds in meters are
    ``(width * resolution, height * resolution)``."""

    id: str
    height: int
    width: int
    resolution: float
    room_categories: tuple[str, ...]
    object_categories: tuple[str, ...]
    rooms: list[Room]
    doors: list[Door]
    objects: list[SceneObject]
    seed: int | None = None
    prior: PlacementPrior | None = None

    @property
    def bounds(self) -> tuple[float, float]:
        return (self.width * self.resolution, self.height * self.resolution)

    def room_mask(self) -> np.ndarray:
        """Int raster: room index per interior cell, -1 elsewhere."""
        out = np.full((self.height, self.width), -1, dtype=np.int32)
        for i, room in enumerate(self.rooms):
            for r0, c0, r1, c1 in room.rects:
                out[r0:r1, c0:c1] = i
        return out

    def wall_mask(self) -> np.ndarray:
        walls = self.room_mask() < 0
        for d in self.doors:
            r0, c0, r1, c1 = d.rect
            walls[r0:r1, c0:c1] = False
        return walls

    def object_mask(self, category: str | None = None) -> np.ndarray:
        out = np.zeros((self.height, self.width), dtype=bool)
        for o in self.objects:
            if category is None or o.category == category:
                r0, c0, r1, c1 = o.rect
                out[r0:r1, c0:c1] = True
        return out

    def occupancy(self) -> np.ndarray:
        return self.wall_mask() | self.object_mask()

    def instances(self, category: str) -> list[SceneObject]:
        return [o for o in self.objects if o.category == category]

    def validate(self) -> None:
        H, W = self.height, self.width
        if H < 1 or W < 1 or not self.resolution > 0:
            raise SceneError("scene dimensions and resolution must be positive")
        for room in self.rooms:
            if room.category not in self.room_categories:
                raise SceneError(f"unknown room category {room.category!r}")
            for r0, c0, r1, c1 in room.rects:
                if not (0 <= r0 < r1 <= H and 0 <= c0 < c1 <= W):
                    raise SceneError(f"room rectangle {(r0, c0, r1, c1)} is out of bounds")
        owner = np.full((H, W), -1, dtype=np.int32)
        for i, room in enumerate(self.rooms):
            for r0, c0, r1, c1 in room.rects:
                if (owner[r0:r1, c0:c1] >= 0).any():
                    raise SceneError(f"room {i} ({room.category!r}) overlaps another room")
                owner[r0:r1, c0:c1] = i
        for d in self.doors:
            r0, c0, r1, c1 = d.rect
            if not (0 <= r0 < r1 <= H and 0 <= c0 < c1 <= W):
                raise SceneError(f"door {d.rect} is out of bounds")
            if (owner[r0:r1, c0:c1] >= 0).any():
                raise SceneError(f"door {d.rect} overlaps a room interior")
        taken = np.zeros((H, W), dtype=bool)
        for k, o in enumerate(self.objects):
            if o.category not in self.object_categories:
                raise SceneError(f"unknown object category {o.category!r}")
            r0, c0, r1, c1 = o.rect
            if not (0 <= r0 < r1 <= H and 0 <= c0 < c1 <= W):
                raise SceneError(f"object {k} ({o.category!r}) is out of bounds")
            inside = [i for i, room in enumerate(self.rooms)
                      if any(a <= r0 and b <= c0 and r1 <= c and c1 <= d for a, b, c, d in room.rects)]
            if len(inside) != 1:
                raise SceneError(f"object {k} ({o.category!r}) is not inside exactly one room")
            if inside[0] != o.room:
                raise SceneError(f"object {k} ({o.category!r}) records room {o.room}, lies in {inside[0]}")
            if taken[r0:r1, c0:c1].any():
                raise SceneError(f"object {k} ({o.category!r}) overlaps another object")
            taken[r0:r1, c0:c1] = True
        free = ~self.occupancy()
        _, n = ndimage.label(free)
        if n != 1:
            raise SceneError(f"free space has {n} connected components, expected 1")
        if self.prior is not None and (self.prior.rooms != self.room_categories
                                       or self.prior.objects != self.object_categories):
            raise SceneError("embedded placement prior categories do not match the scene")

    def to_json(self) -> dict:
        return {
            "format": SCENE_FORMAT,
            "version": 1,
            "id": self.id,
            "seed": self.seed,
            "resolution": self.resolution,
            "height": self.height,
            "width": self.width,
            "bounds_m": list(self.bounds),
            "room_categories": list(self.room_categories),
            "object_categories": list(self.object_categories),
            "rooms": [{"category": r.category, "rects": [list(x) for x in r.rects],
                       "doors": [k for k, d in enumerate(self.doors) if i in d.rooms]}
                      for i, r in enumerate(self.rooms)],
            "doors": [{"rect": list(d.rect), "rooms": list(d.rooms)} for d in self.doors],
            "objects": [{"category": o.category, "rect": list(o.rect), "room": o.room}
                        for o in self.objects],
            "placement_prior": self.prior.to_json() if self.prior is not None else None,
        }

    @classmethod
    def from_json(cls, doc) -> "SceneLayout":
        if not isinstance(doc, dict) or doc.get("format") != SCENE_FORMAT:
            raise SceneError("not an o2rnav scene file (field 'format')")
        try:
            layout = cls(
                id=str(doc["id"]),
                height=int(doc["height"]),
                width=int(doc["width"]),
                resolution=float(doc["resolution"]),
                room_categories=tuple(doc["room_categories"]),
                object_categories=tuple(doc["object_categories"]),
                rooms=[Room(r["category"], tuple(tuple(int(v) for v in x) for x in r["rects"]))
                       for r in doc["rooms"]],
                doors=[Door(tuple(int(v) for v in d["rect"]), tuple(int(v) for v in d["rooms"]))
                       for d in doc["doors"]],
                objects=[SceneObject(o["category"], tuple(int(v) for v in o["rect"]), int(o["room"]))
                         for o in doc["objects"]],
                seed=doc.get("seed"),
                prior=(PlacementPrior.from_json(doc["placement_prior"])
                       if doc.get("placement_prior") else None),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SceneError):
                raise
            raise SceneError(f"malformed scene file: {exc!r}") from None
        layout.validate()
        return layout


def save_scene(layout: SceneLayout, path) -> None:
    Path(path).write_text(json.dumps(layout.to_json(), indent=1) + "\n")


def load_scene(path) -> SceneLayout:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: malformed JSON ({exc})") from None
    return SceneLayout.from_json(doc)


@dataclass
class SceneParams:
    bounds_m: tuple[float, float] = (10.0, 10.0)
    resolution: float = 0.05
    room_count_range: tuple[int, int] = (5, 7)
    object_counts: dict = field(default_factory=lambda: {
        "bed": 2, "toilet": 1, "chair": 3, "couch": 1, "tv": 1, "potted plant": 1,
        "dining table": 1, "sink": 1, "refrigerator": 1,
    })
    dataset: str = "gibson"
    prior: PlacementPrior | None = None
    min_room_side_m: float = 1.5
    wall_thickness_m: float = 0.1
    door_width_m: float = 0.9
    door_margin_m: float = 0.15
    agent_radius_m: float = 0.18
    object_gap_m: float = 0.1
    door_clearance_m: float = 0.6
    room_weights: dict = field(default_factory=lambda: dict(DEFAULT_ROOM_WEIGHTS))
    required_rooms: tuple[str, ...] = DEFAULT_REQUIRED_ROOMS
    corridor_aspect: float = 2.5
    corridor_max_width_m: float = 2.0
    sizes_m: dict = field(default_factory=lambda: dict(DEFAULT_SIZES_M))
    max_retries: int = 50
    object_attempts: int = 200

    def cells(self, meters: float) -> int:
        return max(1, int(round(meters / self.resolution)))


def _bsp(rng: np.random.Generator, H: int, W: int, n_rooms: int, min_side: int, wall: int) -> list[Rect]:
    leaves = [(wall, wall, H - wall, W - wall)]
    while len(leaves) < n_rooms:
        candidates = []
        for k, (r0, c0, r1, c1) in enumerate(leaves):
            h, w = r1 - r0, c1 - c0
            if h >= 2 * min_side + wall or w >= 2 * min_side + wall:
                candidates.append(k)
        if not candidates:
            break
        areas = np.array([(leaves[k][2] - leaves[k][0]) * (leaves[k][3] - leaves[k][1])
                          for k in candidates], dtype=float)
        k = candidates[int(rng.choice(len(candidates), p=areas / areas.sum()))]
        r0, c0, r1, c1 = leaves.pop(k)
        h, w = r1 - r0, c1 - c0
        can_rows = h >= 2 * min_side + wall
        can_cols = w >= 2 * min_side + wall
        if can_rows and can_cols:
            split_rows = rng.random() < h / (h + w)
        else:
            split_rows = can_rows
        if split_rows:
            s = int(rng.integers(r0 + min_side, r1 - min_side - wall + 1))
            leaves += [(r0, c0, s, c1), (s + wall, c0, r1, c1)]
        else:
            s = int(rng.integers(c0 + min_side, c1 - min_side - wall + 1))
            leaves += [(r0, c0, r1, s), (r0, s + wall, r1, c1)]
    return sorted(leaves)


def _carve_doors(rng, leaves: list[Rect], wall: int, door: int, margin: int) -> list[Door]:
    doors = []
    for i, a in enumerate(leaves):
        for j in range(i + 1, len(leaves)):
            b = leaves[j]
            for top, bot, swap in ((a, b, False), (b, a, True)):
                if top[2] + wall == bot[0]:
                    lo, hi = max(top[1], bot[1]), min(top[3], bot[3])
                    if hi - lo >= door + 2 * margin:
                        c = int(rng.integers(lo + margin, hi - margin - door + 1))
                        doors.append(Door((top[2], c, bot[0], c + door), (i, j)))
                if top[3] + wall == bot[1]:
                    lo, hi = max(top[0], bot[0]), min(top[2], bot[2])
                    if hi - lo >= door + 2 * margin:
                        r = int(rng.integers(lo + margin, hi - margin - door + 1))
                        doors.append(Door((r, top[3], r + door, bot[1]), (i, j)))
    return doors


def _assign_rooms(rng, leaves: list[Rect], params: SceneParams, categories: Sequence[str]) -> list[str]:
    res = params.resolution
    labels: list[str | None] = [None] * len(leaves)
    corridor = next((c for c in CORRIDOR_NAMES if c in categories), None)
    if corridor is not None:
        for k, (r0, c0, r1, c1) in enumerate(leaves):
            short, long_ = sorted((r1 - r0, c1 - c0))
            if long_ >= params.corridor_aspect * short and short * res <= params.corridor_max_width_m:
                labels[k] = corridor
    free = [k for k in range(len(leaves)) if labels[k] is None]
    order = [int(k) for k in rng.permutation(free)]

    def area(k):
        r0, c0, r1, c1 = leaves[k]
        return (r1 - r0) * (c1 - c0)

    for name in params.required_rooms:
        if name not in categories or not order:
            continue
        if name in SIZE_PREFERENCE:
            pick = (max if SIZE_PREFERENCE[name] == "largest" else min)(order, key=area)
            order.remove(pick)
        else:
            pick = order.pop(0)
        labels[pick] = name
    weights = {c: w for c, w in params.room_weights.items() if c in categories and w > 0}
    if not weights:
        weights = {c: 1.0 for c in categories}
    names = sorted(weights)
    p = np.array([weights[n] for n in names])
    p /= p.sum()
    for k in order:
        labels[k] = names[int(rng.choice(len(names), p=p))]
    return labels  # type: ignore[return-value]


def _place_objects(rng, layout: SceneLayout, params: SceneParams, prior: PlacementPrior) -> bool:
    res = params.resolution
    gap = params.cells(params.object_gap_m) if params.object_gap_m > 0 else 0
    clearance = params.cells(params.door_clearance_m)
    walls = layout.wall_mask()
    door_zone = np.zeros_like(walls)
    for d in layout.doors:
        r0, c0, r1, c1 = d.rect
        door_zone[max(0, r0 - clearance):r1 + clearance, max(0, c0 - clearance):c1 + clearance] = True
    blocked = door_zone.copy()
    present = np.array([r.category for r in layout.rooms])
    for category, count in sorted(params.object_counts.items()):
        if category not in layout.object_categories:
            raise GenerationError(f"unknown object category {category!r}")
        col = prior.column(category)
        weights = np.array([col[prior.rooms.index(c)] for c in present])
        if count > 0 and weights.sum() <= 0:
            return False
        size = params.sizes_m.get(category, FALLBACK_SIZE_M)
        holding = np.zeros(len(layout.rooms), dtype=bool)
        for _ in range(count):
            # spread instances: suitable rooms without one are tried first (no bedless
            # bedroom while a second bed sits next door), any suitable room after that
            fresh = (weights > 0) & ~holding
            spread = np.where(fresh, weights, 0.0) if fresh.any() else weights
            placed = False
            for attempt in range(params.object_attempts):
                p_room = spread if 2 * attempt < params.object_attempts else weights
                k = int(rng.choice(len(layout.rooms), p=p_room / p_room.sum()))
                h, w = params.cells(size[0]), params.cells(size[1])
                if rng.random() < 0.5:
                    h, w = w, h
                r0, c0, r1, c1 = layout.rooms[k].rects[0]
                if r1 - r0 < h or c1 - c0 < w:
                    continue
                rr = int(rng.integers(r0, r1 - h + 1))
                cc = int(rng.integers(c0, c1 - w + 1))
                rect = (rr, cc, rr + h, cc + w)
                if blocked[max(0, rr - gap):rr + h + gap, max(0, cc - gap):cc + w + gap].any():
                    continue
                trial = layout.occupancy()
                trial[rr:rr + h, cc:cc + w] = True
                eroded = erode_traversable(trial, params.agent_radius_m, res)
                if ndimage.label(eroded)[1] != 1 or ndimage.label(~trial)[1] != 1:
                    continue
                layout.objects.append(SceneObject(category, rect, k))
                holding[k] = True
                blocked[rr:rr + h, cc:cc + w] = True
                placed = True
                break
            if not placed:
                return False
    return True


def generate_scene(seed: int, params: SceneParams | None = None, scene_id: str | None = None) -> SceneLayout:
    """Deterministic procedural layout for ``(seed, params)``."""
    params = params or SceneParams()
    base = bundled_matrix(params.dataset)
    prior = params.prior or PlacementPrior.household(base.rooms, base.objects)
    if prior.rooms != base.rooms or prior.objects != base.objects:
        raise GenerationError("placement prior categories must match the dataset category lists")
    res = params.resolution
    H = int(round(params.bounds_m[1] / res))
    W = int(round(params.bounds_m[0] / res))
    wall = params.cells(params.wall_thickness_m)
    min_side = params.cells(params.min_room_side_m)
    door = params.cells(params.door_width_m)
    margin = params.cells(params.door_margin_m)
    total_objects = sum(params.object_counts.values())
    if H < 2 * wall + min_side or W < 2 * wall + min_side:
        raise GenerationError("bounds are too small for a single room")
    rng = np.random.default_rng(seed)
    for _ in range(params.max_retries):
        lo, hi = params.room_count_range
        n_rooms = int(rng.integers(lo, hi + 1))
        leaves = _bsp(rng, H, W, n_rooms, min_side, wall)
        doors = _carve_doors(rng, leaves, wall, door, margin)
        labels = _assign_rooms(rng, leaves, params, base.rooms)
        layout = SceneLayout(
            id=scene_id or f"scene_{seed}",
            height=H, width=W, resolution=res,
            room_categories=base.rooms, object_categories=base.objects,
            rooms=[Room(c, (r,)) for c, r in zip(labels, leaves)],
            doors=doors, objects=[], seed=int(seed), prior=prior,
        )
        if ndimage.label(~layout.wall_mask())[1] != 1:
            continue
        if total_objects > int((~layout.wall_mask()).sum()):
            raise GenerationError("object count exceeds free cells")
        if not _place_objects(rng, layout, params, prior):
            continue
        layout.validate()
        return layout
    raise GenerationError(f"could not satisfy scene parameters after {params.max_retries} attempts")


def rasterize_scene(layout: SceneLayout, resolution: float | None = None) -> GridStack:
    """Complete ground-truth map: obstacle channel, one presence channel per
    object category and one per room category."""
    specs = [ChannelSpec("occupancy", "obstacle")]
    specs += [ChannelSpec("object", category=o) for o in layout.object_categories]
    specs += [ChannelSpec("room", category=r) for r in layout.room_categories]
    native = new_grid(layout.height, layout.width, layout.resolution, specs)
    native.set("obstacle", layout.occupancy())
    for o in layout.objects:
        r0, c0, r1, c1 = o.rect
        native.data[1 + layout.object_categories.index(o.category), r0:r1, c0:c1] = 1.0
    base = 1 + len(layout.object_categories)
    for room in layout.rooms:
        k = base + layout.room_categories.index(room.category)
        for r0, c0, r1, c1 in room.rects:
            native.data[k, r0:r1, c0:c1] = 1.0
    native.meta = {"scene_id": layout.id, "seed": layout.seed}
    if resolution is None or math.isclose(resolution, layout.resolution):
        return native
    H = int(math.ceil(layout.height * layout.resolution / resolution - 1e-9))
    W = int(math.ceil(layout.width * layout.resolution / resolution - 1e-9))
    rows = np.minimum(((np.arange(H) + 0.5) * resolution / layout.resolution).astype(int), layout.height - 1)
    cols = np.minimum(((np.arange(W) + 0.5) * resolution / layout.resolution).astype(int), layout.width - 1)
    out = new_grid(H, W, resolution, specs)
    out.data[:] = native.data[:, rows[:, None], cols[None, :]]
    out.meta = dict(native.meta)
    return out
