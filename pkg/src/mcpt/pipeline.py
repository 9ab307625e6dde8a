"""File-based stage orchestration.

Stages run in a fixed order and hand off only through files in the output
directory, so any intermediate can be inspected or regenerated alone:

    calibrate    correspondences.txt            -> homographies.txt
    sct          detections                     -> tracklets.csv
    anchors      detections, tracklets.csv      -> anchors.csv, assignments.csv
    stcra        + assignments.csv, homographies -> stcra.csv, stcra_changes.csv
    interpolate  detections, stcra.csv          -> interpolated.csv
    write        interpolated.csv               -> tracks.txt

A ``manifest.json`` records the sha256 of every artifact.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .anchors import assign_global_ids, build_anchors, sample_features, vote_tracklets
from .config import RunConfig, load_config
from .errors import ConfigError, InvariantViolation, StageError
from .geometry import estimate_homography
from .io import (
    load_correspondences,
    load_detections,
    load_homographies,
    read_table,
    write_anchor_bank,
    write_homographies,
    write_table,
    write_tracks,
)
from .model import UNASSIGNED, Detection, Tracklet
from .sct import interpolate_gaps, track_all
from .stcra import iterative_stcra, lift_to_world, write_change_log

log = logging.getLogger("mcpt.pipeline")

STAGES = ("calibrate", "sct", "anchors", "stcra", "interpolate", "write")
MANIFEST = "manifest.json"

TRACKLET_HEADER = ["camera_id", "local_id", "frame", "det_id"]
ASSIGN_HEADER = ["camera_id", "local_id", "frame", "det_id", "raw_id", "voted_id"]
WORLD_HEADER = ["camera_id", "local_id", "frame", "det_id", "global_id", "xworld", "yworld"]
INTERP_HEADER = ["camera_id", "local_id", "frame", "det_id", "global_id", "x", "y", "w", "h", "xworld", "yworld"]


@dataclass
class PipelineRun:
    scene_dir: Path
    out_dir: Path
    config: RunConfig
    stages: List[str]
    manifest: Dict[str, str] = field(default_factory=dict)
    status: int = 0


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise StageError(f"stage {stage}: missing input {path}")
    return path


def _detections(scene: Path, cfg: RunConfig, stage: str) -> List[Detection]:
    path = _require(scene / "detections.csv", stage)
    _require(scene / "embeddings.csv", stage)
    return load_detections(path, cfg.embedding_dim)


def _group_tracklets(rows, dets_by_key, extra=None) -> List[Tracklet]:
    """Rebuild tracklets from (camera, local, frame, det_id, *extra) rows."""
    groups = defaultdict(list)
    for row in rows:
        groups[(row[0], row[1])].append(row)
    out = []
    for (cam, local), rs in sorted(groups.items()):
        rs.sort(key=lambda r: r[2])
        entries = tuple((r[2], dets_by_key[(cam, r[2], r[3])]) for r in rs)
        kwargs = extra(rs) if extra else {}
        out.append(Tracklet(cam, local, entries, **kwargs))
    return out


def _index(dets: Sequence[Detection]) -> Dict[tuple, Detection]:
    return {d.key: d for d in dets}


# --- stages ----------------------------------------------------------------


def stage_calibrate(scene: Path, out: Path, cfg: RunConfig) -> None:
    pairs = load_correspondences(_require(scene / "correspondences.txt", "calibrate"))
    hs = {}
    for cam in sorted(pairs):
        h, mask = estimate_homography(
            pairs[cam],
            method=cfg.homography_method,
            ransac_reproj_thresh=cfg.ransac_reproj_thresh,
            max_iters=cfg.ransac_max_iters,
            rng_seed=cfg.rng_seed,
            camera_id=cam,
        )
        log.info("camera %d: %d/%d inliers", cam, int(mask.sum()), len(mask))
        hs[cam] = h.h
    write_homographies(hs, out / "homographies.txt")


def stage_sct(scene: Path, out: Path, cfg: RunConfig) -> None:
    tracklets = track_all(_detections(scene, cfg, "sct"), cfg)
    rows = [(t.camera_id, t.local_id, f, d.det_id) for t in tracklets for f, d in t.entries]
    write_table(out / "tracklets.csv", TRACKLET_HEADER, rows)
    log.info("sct: %d tracklets", len(tracklets))


def stage_anchors(scene: Path, out: Path, cfg: RunConfig) -> None:
    dets = _index(_detections(scene, cfg, "anchors"))
    rows = read_table(_require(out / "tracklets.csv", "anchors"), TRACKLET_HEADER, [int] * 4)
    tracklets = _group_tracklets(rows, dets)
    feats = sample_features(tracklets, cfg.anchor_sample_period_frames, cfg.anchor_sample_span_frames)
    bank = build_anchors(feats, cfg.cluster_dist_thresh, cfg.anchor_k, cfg.rng_seed, cfg.min_cluster_size)
    log.info("anchors: %d identities from %d sampled features", len(bank), len(feats))
    raw = assign_global_ids(tracklets, bank, cfg.assign_max_cost)
    voted = vote_tracklets(raw, cfg.vote_window)
    out_rows = []
    for r, v in zip(raw, voted):
        for (frame, det), rid, vid in zip(r.entries, r.global_ids, v.global_ids):
            out_rows.append((r.camera_id, r.local_id, frame, det.det_id, rid, vid))
    write_anchor_bank(bank, out / "anchors.csv")
    write_table(out / "assignments.csv", ASSIGN_HEADER, out_rows)


def stage_stcra(scene: Path, out: Path, cfg: RunConfig) -> None:
    dets = _index(_detections(scene, cfg, "stcra"))
    hs = load_homographies(_require(out / "homographies.txt", "stcra"))
    rows = read_table(_require(out / "assignments.csv", "stcra"), ASSIGN_HEADER, [int] * 6)
    tracklets = _group_tracklets(rows, dets, lambda rs: {"global_ids": tuple(r[5] for r in rs)})
    world = lift_to_world(tracklets, hs, cfg.tau_pose)
    passes = cfg.stcra_iterations if cfg.stcra_passes < 0 else cfg.stcra_passes
    final, history = iterative_stcra(world, cfg, passes)
    log.info("stcra: %s changes per pass", [len(c) for c in history])
    write_table(
        out / "stcra.csv",
        WORLD_HEADER,
        [(w.camera_id, w.local_id, w.frame, w.det_id, w.global_id, w.world[0], w.world[1]) for w in final],
    )
    write_change_log(history, out / "stcra_changes.csv")


def stage_interpolate(scene: Path, out: Path, cfg: RunConfig) -> None:
    dets = _index(_detections(scene, cfg, "interpolate"))
    rows = read_table(_require(out / "stcra.csv", "interpolate"), WORLD_HEADER, [int] * 5 + [float] * 2)
    tracklets = _group_tracklets(
        rows,
        dets,
        lambda rs: {"global_ids": tuple(r[4] for r in rs), "world_points": tuple((r[5], r[6]) for r in rs)},
    )
    filled = [interpolate_gaps(t, cfg.interp_max_gap) for t in tracklets]
    out_rows = []
    for t in filled:
        for (frame, det), gid, (xw, yw) in zip(t.entries, t.global_ids, t.world_points):
            out_rows.append((t.camera_id, t.local_id, frame, det.det_id, gid, *map(float, det.box), xw, yw))
    write_table(out / "interpolated.csv", INTERP_HEADER, out_rows)


def stage_write(scene: Path, out: Path, cfg: RunConfig) -> None:
    rows = read_table(_require(out / "interpolated.csv", "write"), INTERP_HEADER, [int] * 5 + [float] * 6)
    groups = defaultdict(list)
    for r in rows:
        groups[(r[0], r[1])].append(r)
    tracklets = []
    for (cam, local), rs in sorted(groups.items()):
        rs.sort(key=lambda r: r[2])
        entries = tuple(
            (r[2], Detection(cam, r[2], r[3], tuple(r[5:9]), 0.0, (0.0,))) for r in rs
        )
        tracklets.append(
            Tracklet(cam, local, entries, tuple(r[4] for r in rs), tuple((r[9], r[10]) for r in rs))
        )
    if any(g == UNASSIGNED for t in tracklets for g in t.global_ids):
        raise InvariantViolation("unassigned ids reached the write stage")
    write_tracks(tracklets, out / "tracks.txt")


_RUNNERS = {
    "calibrate": stage_calibrate,
    "sct": stage_sct,
    "anchors": stage_anchors,
    "stcra": stage_stcra,
    "interpolate": stage_interpolate,
    "write": stage_write,
}


def resolve_config(scene_dir, config_path=None, seed: Optional[int] = None) -> RunConfig:
    """Explicit config file, else ``run.cfg`` in the scene, else defaults."""
    if config_path is not None:
        cfg = load_config(config_path)
    elif (Path(scene_dir) / "run.cfg").exists():
        cfg = load_config(Path(scene_dir) / "run.cfg")
    else:
        cfg = RunConfig()
    if seed is not None:
        cfg = cfg.replace(rng_seed=seed)
    return cfg


def write_manifest(run: PipelineRun) -> Dict[str, str]:
    files = sorted(p for p in run.out_dir.iterdir() if p.is_file() and p.name != MANIFEST)
    artifacts = {p.name: sha256_file(p) for p in files}
    doc = {"stages": run.stages, "config": run.config.to_text(), "artifacts": artifacts}
    (run.out_dir / MANIFEST).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return artifacts


def run_pipeline(
    scene_dir,
    config_path=None,
    stages: Optional[Sequence[str]] = None,
    out_dir=None,
    config: Optional[RunConfig] = None,
    seed: Optional[int] = None,
) -> PipelineRun:
    """Run the requested stages (default: all) in the fixed order.

    The configuration is resolved and validated before any stage runs.
    Returns the run record with the artifact hash manifest.
    """
    scene = Path(scene_dir)
    out = Path(out_dir) if out_dir is not None else scene / "out"
    requested = list(STAGES if stages is None else stages)
    unknown = [s for s in requested if s not in STAGES]
    if unknown:
        raise ConfigError(f"unknown stage(s) {unknown}; expected a subset of {list(STAGES)}")
    if config is not None:
        cfg = config if seed is None else config.replace(rng_seed=seed)
    else:
        cfg = resolve_config(scene, config_path, seed)
    if not scene.is_dir():
        raise StageError(f"scene directory not found: {scene}")
    ordered = [s for s in STAGES if s in requested]
    out.mkdir(parents=True, exist_ok=True)
    run = PipelineRun(scene, out, cfg, ordered)
    for name in ordered:
        log.info("stage %s", name)
        _RUNNERS[name](scene, out, cfg)
    run.manifest = write_manifest(run)
    return run
