"""Object-to-room affinity matrix: validation, persistence and queries."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

BUNDLED_DATASETS = ("gibson", "mp3d")


class MatrixFormatError(ValueError):
    """Matrix file or table violates the schema or the score range."""


def combine_scores(pos: float, neg: float) -> float:
    """Signed affinity from a positive-prompt and a negative-prompt score."""
    for name, v in (("pos", pos), ("neg", neg)):
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"{name} score must lie in [0, 1], got {v!r}")
    return float(pos) - float(neg)


@dataclass(frozen=True, eq=False)
class O2RMatrix:
    rooms: tuple[str, ...]
    objects: tuple[str, ...]
    scores: np.ndarray = field(repr=False)
    provenance: dict = field(default_factory=lambda: {"kind": "bundled"})
    notes: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rooms", tuple(self.rooms))
        object.__setattr__(self, "objects", tuple(self.objects))
        scores = np.array(self.scores, dtype=np.float64)
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        self.validate()

    def validate(self) -> None:
        for label, names in (("room", self.rooms), ("object", self.objects)):
            seen = set()
            for n in names:
                if not isinstance(n, str) or not n:
                    raise MatrixFormatError(f"invalid {label} category name {n!r}")
                if n in seen:
                    raise MatrixFormatError(f"duplicate {label} category {n!r}")
                seen.add(n)
        if self.scores.shape != (len(self.rooms), len(self.objects)):
            raise MatrixFormatError(
                f"scores table is {self.scores.shape}, expected "
                f"{len(self.rooms)} rooms x {len(self.objects)} objects"
            )
        bad = ~((self.scores >= -1.0) & (self.scores <= 1.0))
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise MatrixFormatError(
                f"score {float(self.scores[i, j])!r} at ({self.rooms[i]!r}, {self.objects[j]!r}) "
                f"is outside [-1, 1]"
            )
        kind = self.provenance.get("kind") if isinstance(self.provenance, dict) else None
        if kind not in ("bundled", "llm-generated"):
            raise MatrixFormatError(f"provenance kind must be 'bundled' or 'llm-generated', got {kind!r}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, O2RMatrix):
            return NotImplemented
        return (self.rooms == other.rooms and self.objects == other.objects
                and np.array_equal(self.scores, other.scores)
                and self.provenance == other.provenance and self.notes == other.notes)

    __hash__ = None

    def score(self, room: str, obj: str) -> float:
        return float(self.scores[self.room_index(room), self.object_index(obj)])

    def room_index(self, room: str) -> int:
        try:
            return self.rooms.index(room)
        except ValueError:
            raise KeyError(f"unknown room category {room!r}") from None

    def object_index(self, obj: str) -> int:
        try:
            return self.objects.index(obj)
        except ValueError:
            raise ValueError(f"unknown object category {obj!r}") from None

    def column(self, obj: str) -> dict[str, float]:
        j = self.object_index(obj)
        return {r: float(self.scores[i, j]) for i, r in enumerate(self.rooms)}

    def to_json(self) -> dict:
        doc = {
            "rooms": list(self.rooms),
            "objects": list(self.objects),
            "scores": self.scores.tolist(),
            "provenance": self.provenance,
        }
        if self.notes:
            doc["notes"] = self.notes
        return doc

    @classmethod
    def from_json(cls, doc) -> "O2RMatrix":
        if not isinstance(doc, dict):
            raise MatrixFormatError("matrix file must hold a JSON object")
        for key in ("rooms", "objects", "scores", "provenance"):
            if key not in doc:
                raise MatrixFormatError(f"missing field {key!r}")
        rooms, objects, scores = doc["rooms"], doc["objects"], doc["scores"]
        if not isinstance(rooms, list) or not isinstance(objects, list):
            raise MatrixFormatError("'rooms' and 'objects' must be lists")
        if not isinstance(scores, list) or len(scores) != len(rooms):
            raise MatrixFormatError(f"'scores' must have one row per room ({len(rooms)})")
        for i, row in enumerate(scores):
            if not isinstance(row, list) or len(row) != len(objects):
                raise MatrixFormatError(
                    f"'scores' row {i} ({rooms[i]!r}) must have {len(objects)} entries")
            for j, v in enumerate(row):
                if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                    raise MatrixFormatError(
                        f"score at ({rooms[i]!r}, {objects[j]!r}) is not a finite number: {v!r}")
        prov = doc["provenance"]
        if isinstance(prov, str):
            prov = {"kind": prov}
        return cls(tuple(rooms), tuple(objects), np.array(scores, dtype=np.float64),
                   dict(prov), doc.get("notes", ""))


def top_rooms(matrix: O2RMatrix, obj: str, k: int) -> list[tuple[str, float]]:
    """The ``k`` best rooms for ``obj`` by descending score; ties keep room order."""
    col = matrix.scores[:, matrix.object_index(obj)]
    if not 1 <= k <= len(matrix.rooms):
        raise ValueError(f"k must lie in [1, {len(matrix.rooms)}], got {k}")
    order = np.argsort(-col, kind="stable")[:k]
    return [(matrix.rooms[i], float(col[i])) for i in order]


def save_matrix(matrix: O2RMatrix, path) -> None:
    doc = matrix.to_json()
    # one row per line keeps files diffable; floats round-trip through repr
    rows = ",\n    ".join(json.dumps(r) for r in doc["scores"])
    body = {k: v for k, v in doc.items() if k != "scores"}
    text = json.dumps(body, indent=2)
    text = text[:-2] + f',\n  "scores": [\n    {rows}\n  ]\n}}\n'
    Path(path).write_text(text)


def load_matrix(path) -> O2RMatrix:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MatrixFormatError(f"{path}: malformed JSON ({exc})") from None
    return O2RMatrix.from_json(doc)


def bundled_matrix(dataset: str = "gibson") -> O2RMatrix:
    if dataset not in BUNDLED_DATASETS:
        raise ValueError(f"no bundled matrix for dataset {dataset!r}; choose from {BUNDLED_DATASETS}")
    text = resources.files("o2rnav.knowledge").joinpath("data", f"{dataset}.json").read_text()
    return O2RMatrix.from_json(json.loads(text))


def bundled_for(rooms: Sequence[str], objects: Sequence[str]) -> O2RMatrix | None:
    """The bundled matrix whose category lists match exactly, if any."""
    for name in BUNDLED_DATASETS:
        m = bundled_matrix(name)
        if m.rooms == tuple(rooms) and m.objects == tuple(objects):
            return m
    return None
