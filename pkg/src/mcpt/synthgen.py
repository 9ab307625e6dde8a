"""Deterministic synthetic multi-camera scenes with ground truth.

People walk smooth spline paths on a rectangular map. Each camera is a
map->image homography (rotation, anisotropic scale, mild perspective);
a person inside a camera's view yields a box whose bottom-center is the
projected map point. Embeddings are noisy copies of a per-person unit
vector. Corruptions: misses, false positives, box jitter, occlusions (the
occluded person takes the occluder's appearance and a low score), exits
with later re-entry, and id swaps in the preliminary labels.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator

from .config import parse_kv_text
from .errors import ConfigError, InputError, ValidationError
from .geometry import Homography, ground_point, invert, project, project_many
from .io import write_correspondences, write_detections, write_homographies, write_table, write_track_rows
from .model import LEFT_ANKLE, NUM_KEYPOINTS, RIGHT_ANKLE, Detection, TrackRow, WorldDetection

IMAGE_WIDTH = 1920
IMAGE_HEIGHT = 1080
KEYPOINT_CONF = 0.9
_MARGIN = 0.5


@dataclass(frozen=True)
class Occlusion:
    camera_id: int
    start: int
    end: int  # inclusive
    occluder: int
    occluded: int


@dataclass(frozen=True)
class Swap:
    camera_id: int
    start: int
    end: int
    id_a: int
    id_b: int


@dataclass(frozen=True)
class Exit:
    identity: int
    start: int
    end: int


@dataclass(frozen=True)
class Scenario:
    map_width: float = 20.0
    map_height: float = 15.0
    n_identities: int = 4
    n_cameras: int = 3
    n_frames: int = 600
    fps: float = 30.0
    walk_speed: float = 1.2
    embedding_dim: int = 64
    embedding_noise: float = 0.0
    similar_pairs: int = 0
    similar_distance: float = 0.15
    miss_rate: float = 0.0
    fp_rate: float = 0.0
    box_noise_px: float = 0.0
    occlusion_dropout: float = 0.0
    occluded_score_low: float = 0.4
    occluded_score_high: float = 0.8
    camera_coverage: float = 1.0
    person_height: float = 1.75
    occlusions: Tuple[Occlusion, ...] = ()
    swaps: Tuple[Swap, ...] = ()
    exits: Tuple[Exit, ...] = ()
    rng_seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.map_width <= 2 * _MARGIN or self.map_height <= 2 * _MARGIN:
            raise ValidationError("map too small")
        if self.n_identities < 1 or self.n_cameras < 1 or self.n_frames < 1:
            raise ValidationError("need at least one identity, camera and frame")
        for name in ("miss_rate", "occlusion_dropout"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")
        if self.fp_rate < 0 or self.embedding_noise < 0 or self.box_noise_px < 0:
            raise ValidationError("rates and noise levels must be nonnegative")
        if not 0.0 <= self.occluded_score_low <= self.occluded_score_high <= 1.0:
            raise ValidationError("need 0 <= occluded_score_low <= occluded_score_high <= 1")
        if not 0.0 < self.camera_coverage <= 1.0:
            raise ValidationError("camera_coverage must lie in (0, 1]")
        if 2 * self.similar_pairs > self.n_identities:
            raise ValidationError("not enough identities for the similar pairs")
        if not 0.0 < self.similar_distance < 1.0:
            raise ValidationError("similar_distance must lie in (0, 1)")
        ids = range(1, self.n_identities + 1)
        cams = range(self.n_cameras)
        for o in self.occlusions:
            if o.camera_id not in cams or o.occluder not in ids or o.occluded not in ids or o.occluder == o.occluded:
                raise ValidationError(f"bad occlusion {o}")
        for s in self.swaps:
            if s.camera_id not in cams or s.id_a not in ids or s.id_b not in ids or s.id_a == s.id_b:
                raise ValidationError(f"bad swap {s}")
        for e in self.exits:
            if e.identity not in ids or e.start > e.end:
                raise ValidationError(f"bad exit {e}")

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)


def _split_events(raw: str) -> List[str]:
    return [part.strip() for part in raw.split(";") if part.strip()]


def _range(token: str) -> Tuple[int, int]:
    a, b = token.split("-")
    return int(a), int(b)


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    """Scenario from ``key = value`` text; event lists use ``;`` separators.

    ``occlusions = 0:100-160:1>2`` (camera:frames:occluder>occluded),
    ``swaps = 1:200-260:3,4`` (camera:frames:a,b), ``exits = 2:300-399``.
    """
    values = parse_kv_text(text, source)
    defaults = Scenario()
    kwargs = {}
    for key, raw in values.items():
        try:
            if key == "occlusions":
                evs = []
                for ev in _split_events(raw):
                    cam, frames, ids = ev.split(":")
                    a, b = ids.split(">")
                    evs.append(Occlusion(int(cam), *_range(frames), int(a), int(b)))
                kwargs[key] = tuple(evs)
            elif key == "swaps":
                evs = []
                for ev in _split_events(raw):
                    cam, frames, ids = ev.split(":")
                    a, b = ids.split(",")
                    evs.append(Swap(int(cam), *_range(frames), int(a), int(b)))
                kwargs[key] = tuple(evs)
            elif key == "exits":
                kwargs[key] = tuple(Exit(int(i), *_range(fr)) for i, fr in (ev.split(":") for ev in _split_events(raw)))
            elif hasattr(defaults, key):
                template = getattr(defaults, key)
                kwargs[key] = type(template)(raw)
            else:
                raise ConfigError(f"{source}: unknown scenario key {key!r}")
        except ValueError:
            raise ConfigError(f"{source}: bad value for {key}: {raw!r}") from None
    try:
        return Scenario(**kwargs)
    except ValidationError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def scenario_to_text(s: Scenario) -> str:
    lines = []
    for f in dataclasses.fields(s):
        v = getattr(s, f.name)
        if f.name == "occlusions":
            v = "; ".join(f"{o.camera_id}:{o.start}-{o.end}:{o.occluder}>{o.occluded}" for o in v)
        elif f.name == "swaps":
            v = "; ".join(f"{w.camera_id}:{w.start}-{w.end}:{w.id_a},{w.id_b}" for w in v)
        elif f.name == "exits":
            v = "; ".join(f"{e.identity}:{e.start}-{e.end}" for e in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *stream]))


# --- ground truth ----------------------------------------------------------


def _trajectory(s: Scenario, rng: np.random.Generator) -> np.ndarray:
    lo = np.array([_MARGIN, _MARGIN])
    hi = np.array([s.map_width - _MARGIN, s.map_height - _MARGIN])
    speed = s.walk_speed * rng.uniform(0.8, 1.2)
    needed = speed * s.n_frames / s.fps + 1.0
    pts = [rng.uniform(lo, hi)]
    chord = [0.0]
    while chord[-1] < needed:
        p = rng.uniform(lo, hi)
        step = float(np.linalg.norm(p - pts[-1]))
        if step < 1.0:
            continue
        pts.append(p)
        chord.append(chord[-1] + step)
    pts = np.array(pts)
    spline = PchipInterpolator(np.array(chord), pts, axis=0)
    arc = speed * np.arange(s.n_frames) / s.fps
    return np.clip(spline(arc), lo, hi)


def _true_embeddings(s: Scenario, rng: np.random.Generator) -> np.ndarray:
    e = rng.normal(size=(s.n_identities, s.embedding_dim))
    e /= np.linalg.norm(e, axis=1, keepdims=True)
    cos = 1.0 - s.similar_distance
    for p in range(s.similar_pairs):
        a, b = 2 * p, 2 * p + 1
        u = rng.normal(size=s.embedding_dim)
        u -= (u @ e[a]) * e[a]
        u /= np.linalg.norm(u)
        e[b] = cos * e[a] + math.sqrt(1.0 - cos * cos) * u
    return e


def _map_to_image(s: Scenario, k: int, rng: np.random.Generator) -> np.ndarray:
    theta = 2.0 * math.pi * k / s.n_cameras + rng.uniform(-0.2, 0.2)
    center = np.array([s.map_width / 2.0, s.map_height / 2.0])
    if s.camera_coverage < 1.0:
        center = center + rng.uniform(-0.25, 0.25, 2) * np.array([s.map_width, s.map_height]) * (1 - s.camera_coverage)
    t1 = np.array([[1, 0, -center[0]], [0, 1, -center[1]], [0, 0, 1.0]])
    c, si = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -si, 0], [si, c, 0], [0, 0, 1.0]])
    persp = np.array([[1, 0, 0], [0, 1, 0], [0, rng.uniform(0.01, 0.03), 1.0]])
    squash = rng.uniform(0.5, 0.7)
    base = persp @ rot @ t1
    corners = np.array([[0, 0], [s.map_width, 0], [s.map_width, s.map_height], [0, s.map_height]], dtype=float)
    proj = project_many(base, corners) * np.array([1.0, squash])
    half_extent = np.abs(proj).max(axis=0)
    scale = 0.45 * min(IMAGE_WIDTH / half_extent[0], IMAGE_HEIGHT / half_extent[1]) / s.camera_coverage
    t2 = np.array([[scale, 0, IMAGE_WIDTH / 2.0], [0, scale * squash, IMAGE_HEIGHT / 2.0], [0, 0, 1.0]])
    g = t2 @ base
    return g / g[2, 2]


def _in_image(u: float, v: float) -> bool:
    return 0.0 <= u < IMAGE_WIDTH and 0.0 <= v < IMAGE_HEIGHT


@dataclass
class Camera:
    camera_id: int
    map_to_image: np.ndarray
    box_scale: float  # box height in px at homogeneous depth 1
    fov: np.ndarray  # map-plane quad of the image corners

    @property
    def homography(self) -> Homography:
        return invert(Homography(self.map_to_image, self.camera_id))

    def depth(self, p) -> float:
        g = self.map_to_image
        return float(g[2, 0] * p[0] + g[2, 1] * p[1] + g[2, 2])

    def sees(self, p) -> bool:
        if self.depth(p) <= 0:
            return False
        u, v = project(self.map_to_image, p)
        return _in_image(u, v)

    def box_at(self, p) -> Tuple[float, float, float, float]:
        u, v = project(self.map_to_image, p)
        h = self.box_scale / self.depth(p)
        w = 0.4 * h
        return (u - w / 2.0, v - h, w, h)


@dataclass
class GeneratedScene:
    scenario: Scenario
    cameras: Dict[int, Camera]
    positions: np.ndarray  # (n_identities, n_frames, 2)
    present: np.ndarray  # (n_identities, n_frames) bool
    true_embeddings: np.ndarray
    detections: List[Detection]
    gt_rows: List[TrackRow]
    labels: Dict[Tuple[int, int, int], int]  # detection key -> identity, 0 for false positives
    prelim: Dict[Tuple[int, int, int], int]  # labels after swap injection
    correspondences: Dict[int, List[Tuple[Tuple[float, float], Tuple[float, float]]]]

    @property
    def homographies(self) -> Dict[int, Homography]:
        return {cam: c.homography for cam, c in self.cameras.items()}

    def gt_point(self, identity: int, frame: int) -> Tuple[float, float]:
        x, y = self.positions[identity - 1, frame]
        return (float(x), float(y))


def _cameras(s: Scenario, map_to_image: Optional[Mapping[int, np.ndarray]] = None) -> Dict[int, Camera]:
    cams = {}
    for k in range(s.n_cameras):
        if map_to_image is not None:
            g = np.asarray(map_to_image[k], dtype=np.float64)
            if g.shape != (3, 3) or abs(np.linalg.det(g)) < 1e-12:
                raise ValidationError(f"camera {k}: map_to_image must be an invertible 3x3 matrix")
        else:
            g = _map_to_image(s, k, _rng(s.rng_seed, 3, k))
        scale_px = abs(np.linalg.det(g[:2, :2])) ** 0.5
        fov = project_many(np.linalg.inv(g), np.array(
            [[0, 0], [IMAGE_WIDTH, 0], [IMAGE_WIDTH, IMAGE_HEIGHT], [0, IMAGE_HEIGHT]], dtype=float))
        cams[k] = Camera(k, g, s.person_height * scale_px, fov)
    return cams


def _keypoints(box) -> np.ndarray:
    x, y, w, h = box
    kps = [(0.0, 0.0, 0.0)] * NUM_KEYPOINTS
    kps[LEFT_ANKLE] = (x + w, y + h, KEYPOINT_CONF)
    kps[RIGHT_ANKLE] = (x, y + h, KEYPOINT_CONF)
    return np.array(kps)


def _noisy_embedding(e: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    # per-component std sigma/sqrt(D) so the noise vector has norm ~sigma
    v = e + rng.normal(scale=sigma / math.sqrt(len(e)), size=len(e))
    return v / np.linalg.norm(v)


def generate(s: Scenario, map_to_image: Optional[Mapping[int, np.ndarray]] = None) -> GeneratedScene:
    """Render detections, ground-truth tracks and calibration pairs for ``s``.

    ``map_to_image`` optionally replaces the generated cameras with given
    map-to-image matrices, one per camera id.
    """
    s.validate()
    if map_to_image is not None and set(map_to_image) != set(range(s.n_cameras)):
        raise ValidationError(f"map_to_image needs exactly camera ids 0..{s.n_cameras - 1}")
    positions = np.stack([_trajectory(s, _rng(s.rng_seed, 1, i)) for i in range(1, s.n_identities + 1)])
    present = np.ones((s.n_identities, s.n_frames), dtype=bool)
    for e in s.exits:
        present[e.identity - 1, max(e.start, 0): min(e.end, s.n_frames - 1) + 1] = False
    true_emb = _true_embeddings(s, _rng(s.rng_seed, 2))
    cameras = _cameras(s, map_to_image)

    occl: Dict[Tuple[int, int, int], int] = {}
    for o in s.occlusions:
        for f in range(max(o.start, 0), min(o.end, s.n_frames - 1) + 1):
            occl[(o.camera_id, f, o.occluded)] = o.occluder

    detections: List[Detection] = []
    gt_rows: List[TrackRow] = []
    labels: Dict[Tuple[int, int, int], int] = {}
    correspondences = {}
    for cam_id, cam in cameras.items():
        rng = _rng(s.rng_seed, 4, cam_id)
        for f in range(s.n_frames):
            frame_dets = []
            for i in range(1, s.n_identities + 1):
                if not present[i - 1, f]:
                    continue
                p = positions[i - 1, f]
                if not cam.sees(p):
                    continue
                box = cam.box_at(p)
                gt_rows.append(TrackRow(cam_id, i, f, *box, float(p[0]), float(p[1])))
                u_miss, u_drop = rng.random(2)
                jitter = rng.uniform(-1.0, 1.0, 3) * s.box_noise_px
                score = rng.uniform(0.7, 0.95)
                occluder = occl.get((cam_id, f, i))
                if u_miss < s.miss_rate:
                    continue
                appearance = true_emb[i - 1]
                if occluder is not None and present[occluder - 1, f]:
                    if u_drop < s.occlusion_dropout:
                        continue
                    appearance = true_emb[occluder - 1]
                    score = rng.uniform(s.occluded_score_low, s.occluded_score_high)
                emb = _noisy_embedding(appearance, s.embedding_noise, rng)
                x, y, w, h = box
                bu, bv = x + w / 2.0 + jitter[0], y + h + jitter[1]
                h = max(h + jitter[2], 1.0)
                w = 0.4 * h
                noisy = (bu - w / 2.0, bv - h, w, h)
                frame_dets.append((i, noisy, score, emb))
            n_fp = rng.poisson(s.fp_rate) if s.fp_rate > 0 else 0
            for _ in range(n_fp):
                h = rng.uniform(0.5, 1.5) * cam.box_scale
                w = 0.4 * h
                x = rng.uniform(0, IMAGE_WIDTH - w)
                y = rng.uniform(0, IMAGE_HEIGHT - h)
                emb = rng.normal(size=s.embedding_dim)
                frame_dets.append((0, (x, y, w, h), rng.uniform(0.1, 0.65), emb / np.linalg.norm(emb)))
            order = rng.permutation(len(frame_dets))
            for det_id, j in enumerate(order):
                ident, box, score, emb = frame_dets[j]
                kps = _keypoints(box) if ident else None
                detections.append(Detection(cam_id, f, det_id, box, float(score), emb, kps))
                labels[(cam_id, f, det_id)] = ident

        pts_rng = _rng(s.rng_seed, 5, cam_id)
        pairs = []
        tries = 0
        while len(pairs) < 8:
            tries += 1
            if tries > 100000:
                raise ValidationError(f"camera {cam_id} sees too little of the map for calibration points")
            p = pts_rng.uniform([0, 0], [s.map_width, s.map_height])
            if cam.sees(p):
                u, v = project(cam.map_to_image, p)
                pairs.append(((u, v), (float(p[0]), float(p[1]))))
        correspondences[cam_id] = pairs

    detections.sort(key=lambda d: d.key)
    gt_rows.sort(key=lambda r: (r.camera_id, r.frame, r.global_id))
    scene = GeneratedScene(
        scenario=s,
        cameras=cameras,
        positions=positions,
        present=present,
        true_embeddings=true_emb,
        detections=detections,
        gt_rows=gt_rows,
        labels=labels,
        prelim=dict(labels),
        correspondences=correspondences,
    )
    for sw in s.swaps:
        scene = inject_swap(scene, sw.camera_id, (sw.start, sw.end), sw.id_a, sw.id_b)
    return scene


def inject_swap(scene: GeneratedScene, camera: int, frame_range: Tuple[int, int], id_a: int, id_b: int) -> GeneratedScene:
    """Exchange two identities' preliminary labels on one camera over an inclusive frame range.

    Ground-truth labels and tracks are left untouched. Applying the same
    swap twice restores the original labels.
    """
    start, end = frame_range
    if end < start:
        return scene
    keys = [k for k in scene.prelim if k[0] == camera and start <= k[1] <= end]
    seen = {scene.prelim[k] for k in keys}
    for ident in (id_a, id_b):
        if ident not in seen:
            raise InputError(f"identity {ident} not present on camera {camera} in frames {start}-{end}")
    prelim = dict(scene.prelim)
    for k in keys:
        if prelim[k] == id_a:
            prelim[k] = id_b
        elif prelim[k] == id_b:
            prelim[k] = id_a
    return dataclasses.replace(scene, prelim=prelim)


def label_diff(scene: GeneratedScene) -> List[Tuple[int, int, int]]:
    """Detection keys whose preliminary label differs from ground truth."""
    return sorted(k for k, v in scene.prelim.items() if scene.labels[k] != v)


def preliminary_world_detections(
    scene: GeneratedScene,
    homographies: Optional[Dict[int, Homography]] = None,
    tau_pose: float = 0.5,
) -> List[WorldDetection]:
    """World detections labeled with the (possibly swapped) preliminary ids.

    The preliminary label doubles as the tracklet id; false positives are
    skipped.
    """
    hs = homographies if homographies is not None else scene.homographies
    out = []
    for d in scene.detections:
        ident = scene.prelim[d.key]
        if ident == 0:
            continue
        world = project(hs[d.camera_id], ground_point(d, tau_pose))
        out.append(WorldDetection(d.camera_id, d.frame, ident, d.box, world, ident, d.det_id))
    return out


LABELS_HEADER = ["camera_id", "frame", "det_id", "gt_id", "prelim_id"]


def write_scene(scene: GeneratedScene, out_dir) -> Dict[str, Path]:
    """Write every generated artifact into ``out_dir`` using the core formats."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "detections": out / "detections.csv",
        "embeddings": out / "embeddings.csv",
        "keypoints": out / "keypoints.csv",
        "correspondences": out / "correspondences.txt",
        "gt_tracks": out / "gt_tracks.txt",
        "gt_homographies": out / "homographies_gt.txt",
        "labels": out / "labels.csv",
        "scenario": out / "scenario.cfg",
        "run_config": out / "run.cfg",
    }
    write_detections(scene.detections, paths["detections"], paths["embeddings"], paths["keypoints"])
    write_correspondences(scene.correspondences, paths["correspondences"])
    write_track_rows(scene.gt_rows, paths["gt_tracks"])
    write_homographies({k: h.h for k, h in scene.homographies.items()}, paths["gt_homographies"])
    write_table(
        paths["labels"],
        LABELS_HEADER,
        [(*k, scene.labels[k], scene.prelim[k]) for k in sorted(scene.labels)],
    )
    paths["scenario"].write_text(scenario_to_text(scene.scenario))
    paths["run_config"].write_text(f"embedding_dim = {scene.scenario.embedding_dim}\n")
    return paths


def condition_number(m: np.ndarray) -> float:
    return float(np.linalg.cond(np.asarray(m, dtype=np.float64)))


def _centering(cx: float, cy: float, half_diag: float) -> np.ndarray:
    k = math.sqrt(2.0) / half_diag
    return np.array([[k, 0, -k * cx], [0, k, -k * cy], [0, 0, 1.0]])


def normalized_condition_number(map_to_image: np.ndarray, map_size: Tuple[float, float]) -> float:
    """Condition number with both planes centered and scaled to unit size.

    The raw matrix mixes pixel and map units, so its condition number mostly
    reflects the unit choice; this removes that before measuring.
    """
    w, h = map_size
    t_map = _centering(w / 2.0, h / 2.0, math.hypot(w / 2.0, h / 2.0))
    t_img = _centering(IMAGE_WIDTH / 2.0, IMAGE_HEIGHT / 2.0, math.hypot(IMAGE_WIDTH / 2.0, IMAGE_HEIGHT / 2.0))
    return condition_number(t_img @ np.asarray(map_to_image, dtype=np.float64) @ np.linalg.inv(t_map))


__all__ = [
    "Scenario", "Occlusion", "Swap", "Exit", "Camera", "GeneratedScene",
    "generate", "inject_swap", "label_diff", "preliminary_world_detections",
    "parse_scenario", "scenario_to_text", "write_scene", "condition_number", "normalized_condition_number",
    "IMAGE_WIDTH", "IMAGE_HEIGHT",
]
