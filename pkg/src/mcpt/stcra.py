"""Spatio-temporal consistency ID re-assignment.

Detections are lifted to the shared map plane through each camera's
homography. A detection whose position disagrees with the consensus of the
other views carrying the same global id is moved to the id whose consensus it
fits much better. Passes are repeated with a tightening schedule, smoothing
each track's map positions in between.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .config import RunConfig
from .errors import ConfigError, InputError, UndefinedRatioError
from .geometry import ground_point, project
from .io import write_table
from .model import UNASSIGNED, Point, Tracklet, WorldDetection

NO_PEERS = None


@dataclass(frozen=True)
class Change:
    iteration: int
    camera_id: int
    frame: int
    old_id: int
    new_id: int
    confidence: float
    det_id: int = -1
    local_id: int = -1


def lift_to_world(
    tracklets: Sequence[Tracklet],
    homographies: Mapping[int, object],
    tau_pose: float,
) -> List[WorldDetection]:
    """Map-plane position for every tracklet entry that carries a global id."""
    out = []
    for t in tracklets:
        if t.camera_id not in homographies:
            raise ConfigError(f"no homography for camera {t.camera_id}")
        h = homographies[t.camera_id]
        gids = t.global_ids if t.global_ids is not None else (UNASSIGNED,) * len(t.entries)
        for (frame, det), gid in zip(t.entries, gids):
            if gid == UNASSIGNED:
                continue
            world = project(h, ground_point(det, tau_pose))
            out.append(WorldDetection(t.camera_id, frame, gid, det.box, world, t.local_id, det.det_id))
    out.sort(key=_order)
    return out


def _order(w: WorldDetection):
    return (w.frame, w.camera_id, w.det_id, w.local_id)


def exclude_outliers(points: Sequence[Point], outlier_thresh: float) -> List[Point]:
    """Drop points farther than ``outlier_thresh`` from the medoid.

    With fewer than three points no member can be singled out as the odd
    one, so nothing is dropped.
    """
    if len(points) < 3:
        return list(points)
    pts = np.asarray(points, dtype=np.float64)
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    medoid = int(np.argmin(d.sum(axis=1)))
    keep = d[medoid] <= outlier_thresh
    return [p for p, k in zip(points, keep) if k]


def _inconsistency(world: Point, peer_points: Sequence[Point], outlier_thresh: float) -> Optional[float]:
    kept = exclude_outliers(peer_points, outlier_thresh)
    if not kept:
        return NO_PEERS
    n = len(kept)
    mx = sum(p[0] for p in kept) / n
    my = sum(p[1] for p in kept) / n
    return (mx - world[0]) ** 2 + (my - world[1]) ** 2


def spatial_inconsistency(x: WorldDetection, peers: Sequence[WorldDetection], outlier_thresh: float) -> Optional[float]:
    """Squared distance from ``x`` to the mean of its same-id peers in other views.

    Peers must share the frame and come from other cameras. Returns
    ``NO_PEERS`` when no peer survives outlier exclusion.
    """
    for p in peers:
        if p.camera_id == x.camera_id:
            raise InputError(f"peer from the same camera {x.camera_id}")
    return _inconsistency(x.world, [p.world for p in peers], outlier_thresh)


def confidence_ratio(d_current: float, d_candidate: float) -> float:
    """Confidence that a detection should leave its current id for the candidate."""
    if d_current == 0.0:
        if d_candidate == 0.0:
            raise UndefinedRatioError("both spatial inconsistencies are zero")
        return -math.inf
    return 1.0 - d_candidate / d_current


class WorldIndex:
    """Frame -> global id -> [(camera_id, world point)] lookup over a snapshot."""

    def __init__(self, dets: Iterable[WorldDetection]):
        self._by_frame: Dict[int, Dict[int, List[Tuple[int, Point]]]] = defaultdict(lambda: defaultdict(list))
        for d in dets:
            self._by_frame[d.frame][d.global_id].append((d.camera_id, d.world))

    def peer_points(self, frame: int, global_id: int, exclude_camera: int) -> List[Point]:
        cell = self._by_frame.get(frame)
        if not cell:
            return []
        return [p for cam, p in cell.get(global_id, ()) if cam != exclude_camera]

    def ids_at(self, frame: int) -> List[int]:
        return sorted(self._by_frame.get(frame, {}))

    def inconsistency(self, x: WorldDetection, global_id: int, outlier_thresh: float) -> Optional[float]:
        return _inconsistency(x.world, self.peer_points(x.frame, global_id, x.camera_id), outlier_thresh)


def reassign_confidence(
    x: WorldDetection,
    current_id: int,
    candidate_id: int,
    state,
    outlier_thresh: float = math.inf,
) -> float:
    """``1 - D(x, candidate) / D(x, current)`` against a frame-indexed world state.

    ``state`` is a :class:`WorldIndex` or an iterable of WorldDetection.
    """
    if current_id == candidate_id:
        raise ValueError("current and candidate ids must differ")
    index = state if isinstance(state, WorldIndex) else WorldIndex(state)
    d_cur = index.inconsistency(x, current_id, outlier_thresh)
    d_cand = index.inconsistency(x, candidate_id, outlier_thresh)
    if d_cur is NO_PEERS or d_cand is NO_PEERS:
        raise InputError("both ids need surviving peers at this frame")
    return confidence_ratio(d_cur, d_cand)


def stcra_pass(
    world_dets: Sequence[WorldDetection],
    conf_thresh: float,
    outlier_thresh: float,
    iteration: int = 1,
) -> Tuple[List[WorldDetection], List[Change]]:
    """One re-assignment pass over a frozen snapshot.

    A detection is examined only when its inconsistency (a squared map
    distance) under its current id exceeds ``outlier_thresh``. Within a (camera, frame) the
    final ids stay unique: competing moves into the same id are settled by
    confidence, then by the smaller original id, and detections that keep
    their id are never displaced.
    """
    if conf_thresh <= 0 or outlier_thresh <= 0:
        raise ConfigError("thresholds must be positive")
    index = WorldIndex(world_dets)
    proposals: Dict[int, Tuple[int, float]] = {}
    for i, x in enumerate(world_dets):
        d_cur = index.inconsistency(x, x.global_id, outlier_thresh)
        if d_cur is NO_PEERS or d_cur <= outlier_thresh:
            continue
        best: Optional[Tuple[float, int]] = None
        for j in index.ids_at(x.frame):
            if j == x.global_id:
                continue
            d_j = index.inconsistency(x, j, outlier_thresh)
            if d_j is NO_PEERS:
                continue
            conf = confidence_ratio(d_cur, d_j)
            if best is None or conf > best[0]:
                best = (conf, j)
        if best is not None and best[0] >= conf_thresh:
            proposals[i] = (best[1], best[0])

    if not proposals:
        return list(world_dets), []

    cells: Dict[Tuple[int, int], List[int]] = defaultdict(list)
    for i, x in enumerate(world_dets):
        cells[(x.camera_id, x.frame)].append(i)
    accepted = set()
    for key in {(world_dets[i].camera_id, world_dets[i].frame) for i in proposals}:
        accepted |= _resolve_cell(cells[key], world_dets, proposals)

    out = list(world_dets)
    changes = []
    for i in sorted(accepted, key=lambda k: _order(world_dets[k])):
        x = world_dets[i]
        new_id, conf = proposals[i]
        out[i] = replace(x, global_id=new_id)
        changes.append(Change(iteration, x.camera_id, x.frame, x.global_id, new_id, conf, x.det_id, x.local_id))
    return out, changes


def _resolve_cell(members: List[int], dets: Sequence[WorldDetection], proposals) -> set:
    moving = {i for i in members if i in proposals}
    while True:
        holders: Dict[int, List[int]] = defaultdict(list)
        for i in members:
            label = proposals[i][0] if i in moving else dets[i].global_id
            holders[label].append(i)
        reverted = set()
        for label, who in holders.items():
            if len(who) < 2:
                continue
            movers = [i for i in who if i in moving]
            if len(movers) < len(who):
                reverted.update(movers)  # someone keeps this id already
            else:
                winner = min(movers, key=lambda i: (-proposals[i][1], dets[i].global_id, i))
                reverted.update(m for m in movers if m != winner)
        if not reverted:
            return moving
        moving -= reverted


def triangular_weights(window: int) -> np.ndarray:
    r = window // 2
    w = np.array([r + 1 - abs(o) for o in range(-r, r + 1)], dtype=np.float64)
    return w / w.sum()


def temporal_smooth(points: Sequence[Point], window: int, weights: Optional[Sequence[float]] = None) -> List[Point]:
    """Weighted centered moving average; weights are renormalized where the window is clipped."""
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"smoothing window must be odd and >= 1, got {window}")
    w = triangular_weights(window) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (window,):
        raise ConfigError(f"need {window} weights, got {len(w)}")
    if np.any(w < 0) or not math.isclose(float(w.sum()), 1.0, rel_tol=1e-9, abs_tol=1e-12):
        raise ConfigError("weights must be nonnegative and sum to 1")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if window == 1 or n == 0:
        return [tuple(p) for p in pts]
    r = window // 2
    out = []
    for i in range(n):
        lo, hi = max(0, i - r), min(n, i + r + 1)
        ww = w[lo - i + r: hi - i + r]
        total = ww.sum()
        if total <= 0:
            out.append(tuple(pts[i]))
            continue
        out.append(tuple((ww[:, None] * pts[lo:hi]).sum(axis=0) / total))
    return [(float(x), float(y)) for x, y in out]


def smooth_tracks(world_dets: Sequence[WorldDetection], window: int) -> List[WorldDetection]:
    """Smooth map positions along each (camera, tracklet, global id) run."""
    if window == 1:
        return list(world_dets)
    groups: Dict[Tuple[int, int, int], List[int]] = defaultdict(list)
    for i, d in enumerate(world_dets):
        groups[(d.camera_id, d.local_id, d.global_id)].append(i)
    out = list(world_dets)
    for idxs in groups.values():
        idxs.sort(key=lambda i: world_dets[i].frame)
        smoothed = temporal_smooth([world_dets[i].world for i in idxs], window)
        for i, p in zip(idxs, smoothed):
            out[i] = replace(world_dets[i], world=p)
    return out


def iterative_stcra(
    world_dets: Sequence[WorldDetection],
    cfg: RunConfig,
    iterations: Optional[int] = None,
) -> Tuple[List[WorldDetection], List[List[Change]]]:
    """Run up to ``iterations`` passes (default ``cfg.stcra_iterations``; 0 is a no-op).

    Returns the final detections and the change list of every pass that ran.
    Stops after the first pass with no changes.
    """
    n = cfg.stcra_iterations if iterations is None else iterations
    if not 0 <= n <= cfg.stcra_iterations:
        raise ConfigError(f"iterations must lie in 0..{cfg.stcra_iterations}")
    current = sorted(world_dets, key=_order)
    history: List[List[Change]] = []
    for r in range(n):
        if cfg.stcra_smooth_mode == "per_pass" or (cfg.stcra_smooth_mode == "between_passes" and r > 0):
            current = smooth_tracks(current, cfg.smoothing_window)
        current, changes = stcra_pass(
            current, cfg.stcra_conf_thresholds[r], cfg.stcra_outlier_thresholds[r], iteration=r + 1
        )
        history.append(changes)
        if not changes:
            break
    return current, history


CHANGE_HEADER = ["iteration", "camera_id", "frame", "old_id", "new_id", "confidence"]


def write_change_log(history: Sequence[Sequence[Change]], path) -> None:
    rows = [
        (c.iteration, c.camera_id, c.frame, c.old_id, c.new_id, float(c.confidence))
        for changes in history
        for c in changes
    ]
    write_table(Path(path), CHANGE_HEADER, rows)


def apply_to_tracklets(tracklets: Sequence[Tracklet], world_dets: Sequence[WorldDetection]) -> List[Tracklet]:
    """Copy ids and world points from world detections back onto tracklets.

    Entries without a world detection (UNASSIGNED) are dropped.
    """
    lookup = {(w.camera_id, w.local_id, w.frame): w for w in world_dets}
    out = []
    for t in tracklets:
        entries, gids, pts = [], [], []
        for frame, det in t.entries:
            w = lookup.get((t.camera_id, t.local_id, frame))
            if w is None:
                continue
            entries.append((frame, det))
            gids.append(w.global_id)
            pts.append(w.world)
        if entries:
            out.append(Tracklet(t.camera_id, t.local_id, tuple(entries), tuple(gids), tuple(pts)))
    return out
