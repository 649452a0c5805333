"""Policy core: nearest-object geometry, oracle potentials, fusion and goal selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .dataset import (DEFAULT_D_MAX, MIN_FRONTIER_SIZE, FrontierSet, PartialMap, area_potential,
                      extract_frontiers, o2r_potential, object_potential)
from .grid import GridStack
from .knowledge.matrix import O2RMatrix

EIGHT = np.ones((3, 3), dtype=bool)


@dataclass
class NearestObjectInfo:
    categories: list[str]
    direction: np.ndarray
    distance: np.ndarray
    found: np.ndarray

    def as_dict(self) -> dict:
        return {c: {"direction": float(d), "distance": float(r), "found": bool(f)}
                for c, d, r, f in zip(self.categories, self.direction, self.distance, self.found)}


def nearest_object_dirs(sem_map: GridStack, categories=None) -> NearestObjectInfo:
    """Direction and normalized distance from the map center cell ``(H//2, W//2)``
    to the closest component centroid of each object channel.

    Directions follow the east-0, clockwise-positive convention; distances
    are divided by the half-diagonal.  Empty channels get distance 1,
    direction 0 and ``found = False``.
    """
    specs = sem_map.find("object")
    if categories is not None:
        by_cat = {s.category: s for s in specs}
        specs = [by_cat[c] for c in categories]
    H, W = sem_map.shape
    cy, cx = H // 2, W // 2
    half_diag = math.hypot(H / 2.0, W / 2.0)
    n = len(specs)
    direction = np.zeros(n)
    distance = np.ones(n)
    found = np.zeros(n, dtype=bool)
    for k, spec in enumerate(specs):
        mask = sem_map[spec.name] > 0.5
        labels, m = ndimage.label(mask, structure=EIGHT)
        if m == 0:
            continue
        cents = np.array(ndimage.center_of_mass(mask, labels, range(1, m + 1)), dtype=float).reshape(m, 2)
        dy = cents[:, 0] - cy
        dx = cents[:, 1] - cx
        d = np.hypot(dx, dy)
        i = int(np.argmin(d))
        direction[k] = math.atan2(dy[i], dx[i]) if d[i] > 0 else 0.0
        if direction[k] >= math.pi:
            direction[k] -= 2 * math.pi
        distance[k] = d[i] / half_diag
        found[k] = True
    return NearestObjectInfo([s.category for s in specs], direction, distance, found)


@dataclass(frozen=True)
class FusionConfig:
    w_o: float = 1.0
    w_a: float = 1.0
    w_r: float = 1.0
    interval: int = 1
    tie_break: str = "geodesic-rowmajor"

    def __post_init__(self):
        for name in ("w_o", "w_a", "w_r"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"fusion weight {name} must be finite")
        if int(self.interval) < 1:
            raise ValueError("goal re-selection interval must be >= 1")
        if self.tie_break != "geodesic-rowmajor":
            raise ValueError(f"unknown tie-break rule {self.tie_break!r}")

    @property
    def weights(self) -> tuple[float, float, float]:
        return (self.w_o, self.w_a, self.w_r)

    def to_json(self) -> dict:
        return {"w_o": self.w_o, "w_a": self.w_a, "w_r": self.w_r, "interval": self.interval,
                "tie_break": self.tie_break}

    @classmethod
    def from_json(cls, doc) -> "FusionConfig":
        doc = dict(doc or {})
        if "weights" in doc:
            doc["w_o"], doc["w_a"], doc["w_r"] = doc.pop("weights")
        return cls(**{k: doc[k] for k in ("w_o", "w_a", "w_r", "interval", "tie_break") if k in doc})


@dataclass
class Potentials:
    object: np.ndarray
    area: np.ndarray
    o2r: np.ndarray
    frontiers: FrontierSet = field(repr=False)


def oracle_potentials(explored: np.ndarray, scene: GridStack, matrix: O2RMatrix, target: str,
                      d_max: float = DEFAULT_D_MAX, distance: np.ndarray | None = None,
                      room_map: GridStack | None = None, min_size: int = MIN_FRONTIER_SIZE) -> Potentials:
    """Ground-truth potentials for the live explored mask, computed against the
    complete scene exactly as the dataset generator does.

    ``distance`` may carry a precomputed target distance raster; ``room_map``
    substitutes observed room labels for the scene's (frontier cells are
    always explored, so with noise-free labels the result is unchanged).
    """
    partial = PartialMap(explored, scene)
    fr = extract_frontiers(partial, min_size)
    return Potentials(
        object=object_potential(partial, scene, target, d_max, fr, distance),
        area=area_potential(partial, scene, fr),
        o2r=o2r_potential(partial, room_map if room_map is not None else scene, matrix, target, fr),
        frontiers=fr,
    )


def fuse_potentials(m_o, m_a, m_r, cfg: FusionConfig, frontier_mask=None) -> np.ndarray:
    m_o, m_a, m_r = (np.asarray(m, dtype=np.float64) for m in (m_o, m_a, m_r))
    if not (m_o.shape == m_a.shape == m_r.shape):
        raise ValueError(f"potential maps differ in shape: {m_o.shape}, {m_a.shape}, {m_r.shape}")
    fused = cfg.w_o * m_o + cfg.w_a * m_a + cfg.w_r * m_r
    if frontier_mask is not None:
        mask = np.asarray(frontier_mask, dtype=bool)
        if mask.shape != fused.shape:
            raise ValueError("frontier mask shape does not match the potentials")
        fused = np.where(mask, fused, 0.0)
    return fused


def select_goal(fused: np.ndarray, frontiers, agent_distance: np.ndarray | None = None,
                cfg: FusionConfig | None = None) -> tuple[int, int] | None:
    """Frontier cell with the highest fused score, or None without frontiers.

    Ties go to the smaller geodesic distance from the agent, then row-major
    order.  With ``agent_distance`` given, unreachable frontier cells are
    skipped.
    """
    mask = frontiers.mask if isinstance(frontiers, FrontierSet) else np.asarray(frontiers, dtype=bool)
    cells = np.argwhere(mask)
    if agent_distance is not None and len(cells):
        dist = np.asarray(agent_distance)[cells[:, 0], cells[:, 1]]
        keep = np.isfinite(dist)
        cells, dist = cells[keep], dist[keep]
    else:
        dist = np.zeros(len(cells))
    if len(cells) == 0:
        return None
    scores = np.asarray(fused)[cells[:, 0], cells[:, 1]]
    best = scores == scores.max()
    cells, dist = cells[best], dist[best]
    # argwhere is row-major, lexsort is stable
    k = np.lexsort((np.arange(len(cells)), dist))[0]
    return int(cells[k, 0]), int(cells[k, 1])
