"""Anchor-guided clustering and per-detection global ID assignment.

Appearance features sampled periodically from every camera are clustered
(average linkage, cosine distance); each surviving cluster becomes an anchor
whose id is a global identity. Per camera and frame, detections are matched
to anchors with the Hungarian solver, and each tracklet's per-frame ids are
cleaned by a centered sliding-window majority vote.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from .assignment import solve_assignment
from .errors import ConfigError, InputError
from .model import UNASSIGNED, Anchor, AnchorBank, Detection, Tracklet

__all__ = [
    "sample_features",
    "cluster_features",
    "build_anchors",
    "anchor_cost",
    "anchor_cost_matrix",
    "solve_assignment",
    "assign_global_ids",
    "majority_vote",
    "vote_tracklets",
]


def sample_features(tracklets: Sequence[Tracklet], period: int, span: int) -> List[np.ndarray]:
    """Embeddings of all tracked detections at frames 0, period, 2*period, ... below ``span``."""
    picked: List[Detection] = []
    for t in tracklets:
        for frame, det in t.entries:
            if frame < span and frame % period == 0 and det.det_id >= 0:
                picked.append(det)
    picked.sort(key=lambda d: d.key)
    return [d.embedding for d in picked]


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise InputError("zero-norm embedding")
    return x / norms


def _cosine_distances(x: np.ndarray) -> np.ndarray:
    u = _unit_rows(x)
    d = np.clip(1.0 - u @ u.T, 0.0, 2.0)
    np.fill_diagonal(d, 0.0)
    return 0.5 * (d + d.T)


def _spread_subset(dist: np.ndarray, k: int) -> List[int]:
    """Greedy max-min selection of ``k`` mutually distant members."""
    n = len(dist)
    if n <= k:
        return list(range(n))
    if k == 1:
        return [int(np.argmin(dist.sum(axis=1)))]
    i, j = divmod(int(np.argmax(np.triu(dist, 1))), n)
    chosen = [i] if i == j else [i, j]
    min_d = dist[chosen].min(axis=0)
    while len(chosen) < k:
        min_d[chosen] = -1.0
        nxt = int(np.argmax(min_d))
        chosen.append(nxt)
        min_d = np.minimum(min_d, dist[nxt])
    return chosen


def cluster_features(x: np.ndarray, dist_thresh: float, dist: Optional[np.ndarray] = None) -> List[List[int]]:
    """Average-linkage clusters under cosine distance, cut at ``dist_thresh``.

    Returns member index lists ordered by their first member.
    """
    if dist is None:
        dist = _cosine_distances(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    if len(dist) == 1:
        return [[0]]
    z = linkage(squareform(dist, checks=False), method="average")
    labels = fcluster(z, t=dist_thresh, criterion="distance")
    members: Dict[int, List[int]] = defaultdict(list)
    for idx, lab in enumerate(labels):
        members[int(lab)].append(idx)
    return sorted(members.values(), key=lambda m: m[0])


def build_anchors(
    features: Sequence[np.ndarray],
    dist_thresh: float,
    k: int = 5,
    rng_seed: int = 0,
    min_cluster_size: int = 3,
) -> AnchorBank:
    """Cluster sampled features into anchors.

    Global ids run 1..n by descending cluster size, ties broken by the
    earliest sample in each cluster. ``rng_seed`` is accepted for interface
    stability; the procedure is deterministic.
    """
    if len(features) == 0:
        raise InputError("cannot build anchors from an empty feature set")
    if not 0.0 < dist_thresh < 2.0:
        raise ConfigError("dist_thresh must lie in (0, 2)")
    x = np.vstack([np.asarray(f, dtype=np.float64) for f in features])
    dist = _cosine_distances(x)
    clusters = [m for m in cluster_features(x, dist_thresh, dist) if len(m) >= min_cluster_size]
    clusters.sort(key=lambda m: (-len(m), m[0]))

    anchors = []
    for gid, idxs in enumerate(clusters, start=1):
        sub = dist[np.ix_(idxs, idxs)]
        pick = _spread_subset(sub, k)
        anchors.append(Anchor(gid, x[[idxs[i] for i in pick]]))
    return AnchorBank(tuple(anchors))


def anchor_cost(d, a: Anchor) -> float:
    """One minus the mean cosine similarity between ``d`` and the anchor's features."""
    d = np.asarray(d, dtype=np.float64)
    nd = np.linalg.norm(d)
    if nd == 0:
        raise InputError("zero-norm detection embedding")
    feats = _unit_rows(a.features)
    return float(1.0 - np.mean(feats @ (d / nd)))


def _anchor_means(bank: AnchorBank) -> np.ndarray:
    # mean of normalized features: its dot with a unit detection is the mean cosine
    return np.vstack([_unit_rows(a.features).mean(axis=0) for a in bank.anchors])


def anchor_cost_matrix(embeddings: np.ndarray, bank: AnchorBank) -> np.ndarray:
    return 1.0 - _unit_rows(np.atleast_2d(embeddings)) @ _anchor_means(bank).T


def assign_global_ids(tracklets: Sequence[Tracklet], bank: AnchorBank, max_cost: float = 0.5) -> List[Tracklet]:
    """Attach raw per-frame global ids (before voting) to every tracklet."""
    if len(bank) == 0:
        raise InputError("anchor bank is empty")
    means = _anchor_means(bank)
    gids = bank.global_ids
    cells: Dict[Tuple[int, int], List[Tuple[int, int, int]]] = defaultdict(list)
    for ti, t in enumerate(tracklets):
        for ei, (frame, det) in enumerate(t.entries):
            cells[(t.camera_id, frame)].append((det.det_id, ti, ei))

    out = [[UNASSIGNED] * len(t.entries) for t in tracklets]
    for key in sorted(cells):
        slots = sorted(cells[key])
        emb = np.vstack([tracklets[ti].entries[ei][1].embedding for _, ti, ei in slots])
        cost = 1.0 - _unit_rows(emb) @ means.T
        for r, c in solve_assignment(cost, max_cost):
            _, ti, ei = slots[r]
            out[ti][ei] = gids[c]
    return [replace(t, global_ids=tuple(ids)) for t, ids in zip(tracklets, out)]


def majority_vote(global_ids: Sequence[int], window: int) -> List[int]:
    """Sliding-window mode, ignoring UNASSIGNED; ties go to the smallest id.

    The window is centered where possible; near either end it is shifted
    inward so it always spans ``min(window, len(ids))`` entries.
    """
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"vote window must be odd and >= 1, got {window}")
    ids = list(global_ids)
    if window == 1:
        return ids
    r = window // 2
    n = len(ids)
    counts: Counter = Counter()
    lo, hi = 0, 0  # current window is ids[lo:hi]
    out = []
    for i in range(n):
        new_lo = min(max(0, i - r), max(0, n - window))
        new_hi = min(n, new_lo + window)
        while hi < new_hi:
            counts[ids[hi]] += 1
            hi += 1
        while lo < new_lo:
            counts[ids[lo]] -= 1
            lo += 1
        best, best_n = UNASSIGNED, 0
        for gid, cnt in counts.items():
            if gid == UNASSIGNED or cnt <= 0:
                continue
            if cnt > best_n or (cnt == best_n and gid < best):
                best, best_n = gid, cnt
        out.append(best)
    return out


def vote_tracklets(tracklets: Sequence[Tracklet], window: int) -> List[Tracklet]:
    out = []
    for t in tracklets:
        if t.global_ids is None:
            raise InputError(f"tracklet {t.camera_id}/{t.local_id} has no global ids to vote on")
        out.append(replace(t, global_ids=tuple(majority_vote(t.global_ids, window))))
    return out
