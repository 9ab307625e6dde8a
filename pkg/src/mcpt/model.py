"""Shared domain types."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import StateError, ValidationError

UNASSIGNED = -1
NUM_KEYPOINTS = 17
LEFT_ANKLE = 15
RIGHT_ANKLE = 16

Box = Tuple[float, float, float, float]
Point = Tuple[float, float]


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def _same_optional(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return np.array_equal(a, b)


@dataclass(frozen=True, eq=False)
class Detection:
    """One per-frame, per-camera observation.

    ``box`` is (x, y, w, h) in pixels with a top-left origin. ``keypoints``
    holds 17 (x, y, confidence) rows in COCO order, or None.
    """

    camera_id: int
    frame: int
    det_id: int
    box: Box
    score: float
    embedding: np.ndarray
    keypoints: Optional[np.ndarray] = None  # (17, 3) read-only

    def __post_init__(self):
        object.__setattr__(self, "box", tuple(float(v) for v in self.box))
        object.__setattr__(self, "embedding", _frozen_array(self.embedding))
        if self.keypoints is not None:
            object.__setattr__(self, "keypoints", _frozen_array(self.keypoints))
        self.validate()

    def validate(self) -> None:
        x, y, w, h = self.box
        if not (w > 0 and h > 0):
            raise ValidationError(f"non-positive box size {self.box}")
        if not all(math.isfinite(v) for v in self.box):
            raise ValidationError(f"non-finite box {self.box}")
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score {self.score} outside [0, 1]")
        if self.frame < 0:
            raise ValidationError(f"negative frame {self.frame}")
        if self.embedding.ndim != 1:
            raise ValidationError("embedding must be a vector")
        if self.keypoints is not None:
            if self.keypoints.shape != (NUM_KEYPOINTS, 3):
                raise ValidationError(f"expected {NUM_KEYPOINTS} (x, y, c) keypoints, got shape {self.keypoints.shape}")
            c = self.keypoints[:, 2]
            if not np.all(np.isfinite(self.keypoints)) or np.any(c < 0.0) or np.any(c > 1.0):
                raise ValidationError("keypoints must be finite with confidences in [0, 1]")

    @property
    def key(self) -> Tuple[int, int, int]:
        return (self.camera_id, self.frame, self.det_id)

    def __eq__(self, other):
        if not isinstance(other, Detection):
            return NotImplemented
        return (
            self.key == other.key
            and self.box == other.box
            and self.score == other.score
            and _same_optional(self.keypoints, other.keypoints)
            and np.array_equal(self.embedding, other.embedding)
        )

    def __hash__(self):
        return hash(self.key)


@dataclass(frozen=True)
class Tracklet:
    """Per-camera detections sharing one local track id.

    ``global_ids`` and ``world_points`` are parallel to ``entries`` once the
    anchor and reprojection stages have annotated the track.
    """

    camera_id: int
    local_id: int
    entries: Tuple[Tuple[int, Detection], ...]
    global_ids: Optional[Tuple[int, ...]] = None
    world_points: Optional[Tuple[Point, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((int(f), d) for f, d in self.entries))
        if self.global_ids is not None:
            object.__setattr__(self, "global_ids", tuple(int(g) for g in self.global_ids))
        if self.world_points is not None:
            object.__setattr__(
                self, "world_points", tuple((float(x), float(y)) for x, y in self.world_points)
            )
        frames = [f for f, _ in self.entries]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValidationError(f"tracklet {self.camera_id}/{self.local_id}: frames not strictly increasing")
        for name in ("global_ids", "world_points"):
            values = getattr(self, name)
            if values is not None and len(values) != len(self.entries):
                raise ValidationError(f"tracklet {self.camera_id}/{self.local_id}: {name} length mismatch")

    @property
    def frames(self) -> list:
        return [f for f, _ in self.entries]

    @property
    def detections(self) -> list:
        return [d for _, d in self.entries]

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True, eq=False)
class Anchor:
    global_id: int
    features: np.ndarray  # (k, D)

    def __post_init__(self):
        feats = np.atleast_2d(np.array(self.features, dtype=np.float64))
        if feats.shape[0] < 1:
            raise ValidationError(f"anchor {self.global_id} has no features")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)

    @property
    def k(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class AnchorBank:
    anchors: Tuple[Anchor, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "anchors", tuple(self.anchors))
        ids = [a.global_id for a in self.anchors]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate anchor global ids")
        dims = {a.features.shape[1] for a in self.anchors}
        if len(dims) > 1:
            raise ValidationError(f"anchors disagree on feature dimension: {sorted(dims)}")

    def __len__(self):
        return len(self.anchors)

    @property
    def global_ids(self) -> list:
        return [a.global_id for a in self.anchors]


@dataclass(frozen=True)
class TrackRow:
    """One line of a tracks file."""

    camera_id: int
    global_id: int
    frame: int
    x: float
    y: float
    w: float
    h: float
    xworld: float
    yworld: float

    @property
    def box(self) -> Box:
        return (self.x, self.y, self.w, self.h)

    @property
    def world(self) -> Point:
        return (self.xworld, self.yworld)


@dataclass(frozen=True)
class WorldDetection:
    """A detection annotated with its global id and map-plane position.

    ``local_id`` and ``det_id`` tie the record back to its tracklet; they are
    not used by the consistency math.
    """

    camera_id: int
    frame: int
    global_id: int
    box: Box
    world: Point
    local_id: int = -1
    det_id: int = -1

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.world):
            raise ValidationError(f"non-finite world point {self.world}")


def tracklet_rows(tracklets: Sequence[Tracklet]) -> list:
    """Flatten annotated tracklets to tracks-file rows, dropping UNASSIGNED slots."""
    rows = []
    for t in tracklets:
        if t.global_ids is None or t.world_points is None:
            raise StateError(f"tracklet {t.camera_id}/{t.local_id} lacks global ids or world points")
        for (frame, det), gid, (wx, wy) in zip(t.entries, t.global_ids, t.world_points):
            if gid == UNASSIGNED:
                continue
            x, y, w, h = det.box
            rows.append(TrackRow(t.camera_id, gid, frame, x, y, w, h, wx, wy))
    rows.sort(key=lambda r: (r.camera_id, r.frame, r.global_id))
    return rows

