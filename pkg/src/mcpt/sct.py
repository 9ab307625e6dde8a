"""Single-camera tracking-by-detection.

Constant-velocity Kalman filter on (cx, cy, aspect, height) with two-stage
score-gated association: high-score detections are matched on a fused
IoU/appearance cost, leftovers on IoU alone against low-score detections.
No camera-motion compensation; cameras are assumed stationary.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import replace
from typing import Dict, Iterable, List, Mapping, Sequence

import numpy as np
import scipy.linalg

from .assignment import solve_assignment
from .config import RunConfig
from .errors import InputError
from .model import Detection, Tracklet


class KalmanFilterXYAH:
    """Constant-velocity model; measurement is (cx, cy, a, h)."""

    std_weight_position = 1.0 / 20
    std_weight_velocity = 1.0 / 160

    def __init__(self):
        self._motion = np.eye(8)
        for i in range(4):
            self._motion[i, 4 + i] = 1.0
        self._update = np.eye(4, 8)

    def initiate(self, measurement: np.ndarray):
        mean = np.r_[measurement, np.zeros(4)]
        h = measurement[3]
        sp, sv = self.std_weight_position, self.std_weight_velocity
        std = [2 * sp * h, 2 * sp * h, 1e-2, 2 * sp * h, 10 * sv * h, 10 * sv * h, 1e-5, 10 * sv * h]
        return mean, np.diag(np.square(std))

    def predict(self, mean: np.ndarray, cov: np.ndarray):
        h = mean[3]
        sp, sv = self.std_weight_position, self.std_weight_velocity
        q = np.diag(np.square([sp * h, sp * h, 1e-2, sp * h, sv * h, sv * h, 1e-5, sv * h]))
        mean = self._motion @ mean
        cov = self._motion @ cov @ self._motion.T + q
        return mean, 0.5 * (cov + cov.T)

    def project(self, mean: np.ndarray, cov: np.ndarray):
        h = mean[3]
        sp = self.std_weight_position
        r = np.diag(np.square([sp * h, sp * h, 1e-1, sp * h]))
        return self._update @ mean, self._update @ cov @ self._update.T + r

    def correct(self, mean: np.ndarray, cov: np.ndarray, measurement: np.ndarray):
        proj_mean, proj_cov = self.project(mean, cov)
        chol = scipy.linalg.cho_factor(proj_cov, lower=True, check_finite=False)
        gain = scipy.linalg.cho_solve(chol, (cov @ self._update.T).T, check_finite=False).T
        mean = mean + (measurement - proj_mean) @ gain.T
        cov = cov - gain @ proj_cov @ gain.T
        cov = 0.5 * (cov + cov.T)
        mean[3] = max(mean[3], 1e-3)
        return mean, cov


def _xyah(box) -> np.ndarray:
    x, y, w, h = box
    return np.array([x + w / 2.0, y + h / 2.0, w / h, h])


def _tlwh(mean: np.ndarray) -> np.ndarray:
    cx, cy, a, h = mean[:4]
    w = a * h
    return np.array([cx - w / 2.0, cy - h / 2.0, w, h])


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between (n, 4) and (m, 4) tlwh box arrays."""
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    ax1, ay1 = a[:, 0:1], a[:, 1:2]
    ax2, ay2 = ax1 + a[:, 2:3], ay1 + a[:, 3:4]
    bx1, by1 = b[:, 0], b[:, 1]
    bx2, by2 = bx1 + b[:, 2], by1 + b[:, 3]
    iw = np.clip(np.minimum(ax2, bx2) - np.maximum(ax1, bx1), 0, None)
    ih = np.clip(np.minimum(ay2, by2) - np.maximum(ay1, by1), 0, None)
    inter = iw * ih
    union = (a[:, 2:3] * a[:, 3:4]) + (b[:, 2] * b[:, 3]) - inter
    return inter / np.maximum(union, 1e-12)


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


class _Track:
    __slots__ = ("local_id", "mean", "cov", "feature", "hits", "confirmed", "lost", "time_since_update", "entries")

    def __init__(self, local_id: int, kf: KalmanFilterXYAH, det: Detection):
        self.local_id = local_id
        self.mean, self.cov = kf.initiate(_xyah(det.box))
        self.feature = _unit(det.embedding.copy())
        self.hits = 1
        self.confirmed = False
        self.lost = False
        self.time_since_update = 0
        self.entries = [(det.frame, det)]

    def box(self) -> np.ndarray:
        return _tlwh(self.mean)


class CameraTracker:
    """Frame-by-frame tracker for one camera. Feed frames in increasing order."""

    def __init__(self, camera_id: int, cfg: RunConfig):
        self.camera_id = camera_id
        self.cfg = cfg
        self.low_thresh = cfg.low_thresh_for(camera_id)
        self.kf = KalmanFilterXYAH()
        self.tracks: List[_Track] = []
        self.finished: List[_Track] = []
        self._next_id = 1
        self._last_frame = -1

    def _fused_cost(self, tracks: Sequence[_Track], dets: Sequence[Detection]) -> np.ndarray:
        boxes_t = np.array([t.box() for t in tracks]).reshape(-1, 4)
        boxes_d = np.array([d.box for d in dets]).reshape(-1, 4)
        iou_cost = 1.0 - iou_matrix(boxes_t, boxes_d)
        feats_t = np.array([t.feature for t in tracks])
        feats_d = np.array([_unit(d.embedding) for d in dets])
        emb_cost = 1.0 - feats_t @ feats_d.T
        emb_cost = np.where(emb_cost < self.cfg.appearance_thresh, emb_cost, 1.0)
        return np.minimum(iou_cost, emb_cost)

    def _iou_cost(self, tracks, dets) -> np.ndarray:
        boxes_t = np.array([t.box() for t in tracks]).reshape(-1, 4)
        boxes_d = np.array([d.box for d in dets]).reshape(-1, 4)
        return 1.0 - iou_matrix(boxes_t, boxes_d)

    def _update(self, track: _Track, det: Detection, update_feature: bool):
        track.mean, track.cov = self.kf.correct(track.mean, track.cov, _xyah(det.box))
        if update_feature:
            m = self.cfg.feature_momentum
            track.feature = _unit(m * track.feature + (1.0 - m) * _unit(det.embedding))
        track.entries.append((det.frame, det))
        track.time_since_update = 0
        track.lost = False
        track.hits += 1
        if track.hits >= self.cfg.confirm_hits:
            track.confirmed = True

    def _match(self, tracks, dets, cost_fn, thresh):
        if not tracks or not dets:
            return [], list(range(len(tracks))), list(range(len(dets)))
        pairs = solve_assignment(cost_fn(tracks, dets), thresh)
        mt = {r for r, _ in pairs}
        md = {c for _, c in pairs}
        return (
            pairs,
            [i for i in range(len(tracks)) if i not in mt],
            [j for j in range(len(dets)) if j not in md],
        )

    def step(self, frame: int, dets: Sequence[Detection]) -> None:
        if frame <= self._last_frame:
            raise InputError(f"camera {self.camera_id}: frame {frame} not after {self._last_frame}")
        steps = frame - self._last_frame if self._last_frame >= 0 else 1
        self._last_frame = frame
        for det in dets:
            if det.camera_id != self.camera_id:
                raise InputError(f"detection from camera {det.camera_id} fed to tracker for camera {self.camera_id}")

        dets = sorted(dets, key=lambda d: d.det_id)
        high = [d for d in dets if d.score >= self.cfg.high_score_thresh]
        low = [d for d in dets if self.low_thresh <= d.score < self.cfg.high_score_thresh]

        for t in self.tracks:
            for _ in range(steps):
                if t.lost:
                    t.mean[7] = 0.0
                t.mean, t.cov = self.kf.predict(t.mean, t.cov)
            t.time_since_update += steps
        # retire expired tracks before association; frames without detections may be skipped entirely
        expired = [t for t in self.tracks if t.confirmed and t.time_since_update > self.cfg.max_age]
        self.finished.extend(expired)
        self.tracks = [t for t in self.tracks if not (t.confirmed and t.time_since_update > self.cfg.max_age)]

        self.tracks.sort(key=lambda t: t.local_id)
        confirmed = [t for t in self.tracks if t.confirmed]
        unconfirmed = [t for t in self.tracks if not t.confirmed]

        pairs, um_tracks, um_high = self._match(confirmed, high, self._fused_cost, self.cfg.match_thresh)
        for r, c in pairs:
            self._update(confirmed[r], high[c], update_feature=True)

        leftover = [confirmed[i] for i in um_tracks if not confirmed[i].lost]
        pairs, um_left, _ = self._match(leftover, low, self._iou_cost, self.cfg.low_match_thresh)
        for r, c in pairs:
            self._update(leftover[r], low[c], update_feature=False)
        for i in um_left:
            leftover[i].lost = True

        rest_high = [high[j] for j in um_high]
        pairs, um_unconf, um_rest = self._match(unconfirmed, rest_high, self._fused_cost, self.cfg.unconfirmed_match_thresh)
        for r, c in pairs:
            self._update(unconfirmed[r], rest_high[c], update_feature=True)
        dead = {id(unconfirmed[i]) for i in um_unconf}

        alive = []
        for t in self.tracks:
            if id(t) in dead:
                continue
            if t.confirmed and t.time_since_update > self.cfg.max_age:
                self.finished.append(t)
                continue
            alive.append(t)
        for j in um_rest:
            t = _Track(self._next_id, self.kf, rest_high[j])
            self._next_id += 1
            if self.cfg.confirm_hits <= 1:
                t.confirmed = True
            alive.append(t)
        self.tracks = alive

    def tracklets(self) -> List[Tracklet]:
        done = self.finished + [t for t in self.tracks if t.confirmed]
        done.sort(key=lambda t: t.local_id)
        return [Tracklet(self.camera_id, t.local_id, tuple(t.entries)) for t in done]


def track_camera(dets_by_frame: Mapping[int, Sequence[Detection]], cfg: RunConfig) -> List[Tracklet]:
    """Run the tracker over one camera's detections, keyed by frame."""
    cams = {d.camera_id for dets in dets_by_frame.values() for d in dets}
    if len(cams) > 1:
        raise InputError(f"track_camera got detections from several cameras: {sorted(cams)}")
    if not cams:
        return []
    tracker = CameraTracker(cams.pop(), cfg)
    for frame in sorted(dets_by_frame):
        tracker.step(frame, dets_by_frame[frame])
    return tracker.tracklets()


def track_all(detections: Iterable[Detection], cfg: RunConfig) -> List[Tracklet]:
    by_cam: Dict[int, Dict[int, list]] = defaultdict(lambda: defaultdict(list))
    for d in detections:
        by_cam[d.camera_id][d.frame].append(d)
    out = []
    for cam in sorted(by_cam):
        out.extend(track_camera(by_cam[cam], cfg))
    return out


def interpolate_gaps(t: Tracklet, max_gap: int) -> Tracklet:
    """Fill frame gaps of at most ``max_gap`` missing frames by linear interpolation.

    Filled entries are synthetic detections with ``det_id == -1`` and score 0.
    Global ids of filled frames copy the bounding values when they agree,
    otherwise the earlier one.
    """
    if len(t.entries) < 2 or max_gap <= 0:
        return t
    entries, gids, wpts = [], [], []
    has_g, has_w = t.global_ids is not None, t.world_points is not None
    for i, (frame, det) in enumerate(t.entries):
        if i > 0:
            f0, d0 = t.entries[i - 1]
            gap = frame - f0 - 1
            if 0 < gap <= max_gap:
                b0, b1 = np.array(d0.box), np.array(det.box)
                for f in range(f0 + 1, frame):
                    alpha = (f - f0) / (frame - f0)
                    box = b0 + (b1 - b0) * alpha
                    entries.append((f, Detection(t.camera_id, f, -1, tuple(box), 0.0, d0.embedding)))
                    if has_g:
                        # agreeing bounds and the earlier-wins rule both give the earlier id
                        gids.append(t.global_ids[i - 1])
                    if has_w:
                        w0, w1 = np.array(t.world_points[i - 1]), np.array(t.world_points[i])
                        wpts.append(tuple(w0 + (w1 - w0) * alpha))
        entries.append((frame, det))
        if has_g:
            gids.append(t.global_ids[i])
        if has_w:
            wpts.append(t.world_points[i])
    if len(entries) == len(t.entries):
        return t
    return replace(
        t,
        entries=tuple(entries),
        global_ids=tuple(gids) if has_g else None,
        world_points=tuple(wpts) if has_w else None,
    )
