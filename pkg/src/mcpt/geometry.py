"""Plane-to-plane geometry: ground points, homography projection and
estimation from image/map point correspondences."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ArityError, DegeneracyError, PointAtInfinityError, SingularMatrixError, ValidationError
from .model import LEFT_ANKLE, RIGHT_ANKLE, Detection, Point

METHODS = ("LS", "RANSAC", "LMEDS", "PROSAC")
_EPS_DET = 1e-12
_EPS_W = 1e-12


@dataclass(frozen=True, eq=False)
class Homography:
    """Image plane -> map plane, normalized so ``h[2, 2] == 1`` when possible."""

    h: np.ndarray
    camera_id: int = -1

    def __post_init__(self):
        h = np.array(self.h, dtype=np.float64).reshape(3, 3)
        if not np.all(np.isfinite(h)):
            raise ValidationError("homography has non-finite entries")
        if h[2, 2] != 0:
            h = h / h[2, 2]
        if abs(np.linalg.det(h)) <= _EPS_DET:
            raise SingularMatrixError(f"homography for camera {self.camera_id} is singular")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)


@dataclass(frozen=True)
class Correspondence:
    image_point: Point
    map_point: Point

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (*self.image_point, *self.map_point)):
            raise ValidationError("correspondence coordinates must be finite")


def _matrix(h: Union[Homography, np.ndarray]) -> np.ndarray:
    return h.h if isinstance(h, Homography) else np.asarray(h, dtype=np.float64).reshape(3, 3)


def ground_point(det: Detection, tau_pose: float) -> Tuple[float, float]:
    """Where the person touches the ground in the image.

    Ankle midpoint when both ankle confidences reach ``tau_pose``, otherwise
    the bottom-center of the box.
    """
    if det.keypoints is not None:
        lx, ly, lc = det.keypoints[LEFT_ANKLE]
        rx, ry, rc = det.keypoints[RIGHT_ANKLE]
        if lc >= tau_pose and rc >= tau_pose:
            return ((lx + rx) / 2.0, (ly + ry) / 2.0)
    x, y, w, h = det.box
    return (x + w / 2.0, y + h)


def project(h, p) -> Tuple[float, float]:
    m = _matrix(h)
    x, y = float(p[0]), float(p[1])
    q0 = m[0, 0] * x + m[0, 1] * y + m[0, 2]
    q1 = m[1, 0] * x + m[1, 1] * y + m[1, 2]
    q2 = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    if abs(q2) < _EPS_W:
        raise PointAtInfinityError(f"point {(x, y)} maps to infinity")
    return (q0 / q2, q1 / q2)


def project_many(h, points: np.ndarray) -> np.ndarray:
    """Vectorized :func:`project` for an (n, 2) array."""
    m = _matrix(h)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    q = pts @ m[:, :2].T + m[:, 2]
    if np.any(np.abs(q[:, 2]) < _EPS_W):
        raise PointAtInfinityError("a point maps to infinity")
    return q[:, :2] / q[:, 2:3]


def invert(h) -> Homography:
    m = _matrix(h)
    if abs(np.linalg.det(m)) <= _EPS_DET:
        raise SingularMatrixError("cannot invert a singular homography")
    cam = h.camera_id if isinstance(h, Homography) else -1
    return Homography(np.linalg.inv(m), cam)


# --- estimation -----------------------------------------------------------


def _normalizer(pts: np.ndarray) -> np.ndarray:
    centroid = pts.mean(axis=0)
    mean_dist = np.sqrt(((pts - centroid) ** 2).sum(axis=1)).mean()
    s = math.sqrt(2.0) / mean_dist if mean_dist > 0 else 1.0
    return np.array([[s, 0, -s * centroid[0]], [0, s, -s * centroid[1]], [0, 0, 1.0]])


def _dlt(src: np.ndarray, dst: np.ndarray) -> Optional[np.ndarray]:
    """Normalized DLT; returns None when the solution is singular."""
    t_src, t_dst = _normalizer(src), _normalizer(dst)
    s = src @ t_src[:2, :2].T + t_src[:2, 2]
    d = dst @ t_dst[:2, :2].T + t_dst[:2, 2]
    n = len(s)
    a = np.zeros((2 * n, 9))
    x, y, u, v = s[:, 0], s[:, 1], d[:, 0], d[:, 1]
    a[0::2, 0], a[0::2, 1], a[0::2, 2] = -x, -y, -1
    a[0::2, 6], a[0::2, 7], a[0::2, 8] = x * u, y * u, u
    a[1::2, 3], a[1::2, 4], a[1::2, 5] = -x, -y, -1
    a[1::2, 6], a[1::2, 7], a[1::2, 8] = x * v, y * v, v
    _, _, vt = np.linalg.svd(a)
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ hn @ t_src
    if abs(h[2, 2]) > 1e-15:
        h = h / h[2, 2]
    else:
        h = h / np.linalg.norm(h)
    if not np.all(np.isfinite(h)) or abs(np.linalg.det(h)) <= _EPS_DET * np.abs(h).max() ** 3:
        return None
    return h


def symmetric_errors(h: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Squared forward plus squared backward transfer error per pair."""
    def apply(m, pts):
        q = pts @ m[:, :2].T + m[:, 2]
        w = q[:, 2:3]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = q[:, :2] / w
        out[~np.isfinite(out)] = np.inf
        return out

    try:
        h_inv = np.linalg.inv(h)
    except np.linalg.LinAlgError:
        return np.full(len(src), np.inf)
    fwd = ((apply(h, src) - dst) ** 2).sum(axis=1)
    bwd = ((apply(h_inv, dst) - src) ** 2).sum(axis=1)
    err = fwd + bwd
    err[~np.isfinite(err)] = np.inf
    return err


def _collinear(pts: np.ndarray, tol: float) -> bool:
    for i, j, k in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        a, b, c = pts[i], pts[j], pts[k]
        area = abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
        if area <= tol:
            return True
    return False


def _degenerate(src4: np.ndarray, dst4: np.ndarray, tol_src: float, tol_dst: float) -> bool:
    return _collinear(src4, tol_src) or _collinear(dst4, tol_dst)


def _area_tol(pts: np.ndarray) -> float:
    extent = float(np.ptp(pts, axis=0).max()) if len(pts) else 0.0
    return 1e-9 * max(extent, 1e-12) ** 2


def _needed_iterations(inlier_ratio: float, confidence: float = 0.999) -> float:
    if inlier_ratio >= 1.0:
        return 0.0
    p_good = inlier_ratio**4
    if p_good <= 0.0:
        return math.inf
    return math.log(1.0 - confidence) / math.log(1.0 - p_good)


class _Sampler:
    """Uniform 4-point sampling, or PROSAC progressive sampling when an order is given."""

    def __init__(self, n: int, rng: np.random.Generator, max_iters: int, order: Optional[np.ndarray]):
        self.n, self.rng, self.order = n, rng, order
        if order is not None:
            m = 4
            self.subset = m
            self.t_n = float(max_iters)
            for i in range(m):
                self.t_n *= (m - i) / (n - i)
            self.t_n_prime = 1
            self.t = 0

    def draw(self) -> np.ndarray:
        if self.order is None:
            return self.rng.choice(self.n, 4, replace=False)
        self.t += 1
        if self.t == self.t_n_prime and self.subset < self.n:
            t_next = self.t_n * (self.subset + 1) / (self.subset + 1 - 4)
            self.t_n_prime += max(1, math.ceil(t_next - self.t_n))
            self.t_n = t_next
            self.subset += 1
        if self.t_n_prime < self.t:
            picks = self.rng.choice(self.subset, 4, replace=False)
        else:
            picks = np.append(self.rng.choice(self.subset - 1, 3, replace=False), self.subset - 1)
        return self.order[picks]


def estimate_homography(
    pairs: Sequence,
    method: str = "RANSAC",
    ransac_reproj_thresh: float = 3.0,
    max_iters: int = 2000,
    rng_seed: int = 0,
    prosac_quality: Optional[Sequence[float]] = None,
    camera_id: int = -1,
) -> Tuple[Homography, np.ndarray]:
    """Fit an image->map homography from point correspondences.

    ``pairs`` holds :class:`Correspondence` objects or ``((u, v), (X, Y))``
    tuples. Returns the homography and a boolean inlier mask (all True for
    LS). Robust methods score minimal 4-point samples by symmetric transfer
    error and refit by least squares on the winning inlier set.
    """
    method = method.upper()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    src = np.array([p.image_point if isinstance(p, Correspondence) else p[0] for p in pairs], dtype=np.float64)
    dst = np.array([p.map_point if isinstance(p, Correspondence) else p[1] for p in pairs], dtype=np.float64)
    n = len(src)
    if n < 4:
        raise ArityError(f"need at least 4 correspondences, got {n}")

    tol_src, tol_dst = _area_tol(src), _area_tol(dst)

    if method == "LS":
        h = _dlt(src, dst)
        if h is None or (n == 4 and _degenerate(src, dst, tol_src, tol_dst)):
            raise DegeneracyError("correspondences are degenerate")
        return Homography(h, camera_id), np.ones(n, dtype=bool)

    order = None
    if method == "PROSAC" and prosac_quality is not None:
        q = np.asarray(prosac_quality, dtype=np.float64)
        if q.shape != (n,):
            raise ArityError("prosac_quality needs one score per pair")
        order = np.argsort(-q, kind="stable")

    rng = np.random.default_rng(rng_seed)
    sampler = _Sampler(n, rng, max_iters, order)
    thresh_sq = ransac_reproj_thresh**2
    best_h, best_score, best_err = None, None, None
    needed = math.inf
    it = 0
    while it < max_iters and it < needed:
        it += 1
        idx = sampler.draw()
        if _degenerate(src[idx], dst[idx], tol_src, tol_dst):
            continue
        h = _dlt(src[idx], dst[idx])
        if h is None:
            continue
        err = symmetric_errors(h, src, dst)
        if method == "LMEDS":
            score = (-float(np.median(err)),)
        else:
            inl = err <= thresh_sq
            score = (int(inl.sum()), -float(err[inl].sum()))
        if best_score is None or score > best_score:
            best_h, best_score, best_err = h, score, err
            if method != "LMEDS":
                needed = _needed_iterations(best_score[0] / n)
    if best_h is None:
        raise DegeneracyError("every sampled 4-point subset was degenerate")

    if method == "LMEDS":
        sigma = 1.4826 * (1.0 + 5.0 / max(n - 4, 1)) * math.sqrt(-best_score[0])
        extent = max(float(np.ptp(src, axis=0).max()), float(np.ptp(dst, axis=0).max()))
        thresh_sq = max((2.5 * sigma) ** 2, (1e-6 * extent) ** 2)
    mask = best_err <= thresh_sq
    if mask.sum() < 4:
        raise DegeneracyError("fewer than 4 inliers in the best consensus set")
    refit = _dlt(src[mask], dst[mask])
    if refit is not None:
        refit_err = symmetric_errors(refit, src, dst)
        refit_mask = refit_err <= thresh_sq
        if refit_mask.sum() >= mask.sum():
            best_h, mask = refit, refit_mask
    return Homography(best_h, camera_id), mask


def reprojection_errors(h, pairs) -> np.ndarray:
    src = np.array([p.image_point if isinstance(p, Correspondence) else p[0] for p in pairs], dtype=np.float64)
    dst = np.array([p.map_point if isinstance(p, Correspondence) else p[1] for p in pairs], dtype=np.float64)
    return np.sqrt(symmetric_errors(_matrix(h), src, dst))
