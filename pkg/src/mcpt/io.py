"""Text file formats for detections, embeddings, keypoints, tracks,
homographies, correspondences and anchor banks.

Reals are written with ``%.9g`` (shortest form at 9 significant digits) so
files are stable across platforms and re-reading then re-writing a file is
byte-identical.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionError, InputError, ParseError, ValidationError
from .model import NUM_KEYPOINTS, AnchorBank, Anchor, Detection, TrackRow, Tracklet, tracklet_rows

DET_HEADER = ["camera_id", "frame", "det_id", "x", "y", "w", "h", "score"]
KEY_COLUMNS = ["camera_id", "frame", "det_id"]


def fmt(x: float) -> str:
    return format(float(x), ".9g")


def _int(token: str, path, lineno: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(path, lineno, f"{what}: expected integer, got {token!r}") from None


def _floats(tokens: Sequence[str], path, lineno: int) -> np.ndarray:
    try:
        arr = np.array(tokens, dtype=np.float64)
    except ValueError:
        raise ParseError(path, lineno, f"non-numeric value in {tokens!r}") from None
    if not np.all(np.isfinite(arr)):
        raise ParseError(path, lineno, "non-finite value")
    return arr


def _read_csv(path) -> Tuple[List[str], List[Tuple[int, List[str]]]]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"file not found: {path}")
    lines = path.read_text().splitlines()
    if not lines:
        return [], []
    header = [h.strip() for h in lines[0].split(",")]
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if line.strip():
            rows.append((lineno, [t.strip() for t in line.split(",")]))
    return header, rows


def _check_key(header, path, expected_prefix):
    if header[: len(expected_prefix)] != expected_prefix:
        raise ParseError(path, 1, f"expected header starting with {','.join(expected_prefix)}")


def _fast_matrix(path, ncols: int) -> Optional[Tuple[List[int], np.ndarray]]:
    """Whole-file numeric parse returning (line numbers, matrix).

    None when anything looks off; the per-line path then reports the error.
    """
    numbered = [(i, ln) for i, ln in enumerate(Path(path).read_text().splitlines()[1:], start=2) if ln.strip()]
    linenos = [i for i, _ in numbered]
    lines = [ln for _, ln in numbered]
    if not lines:
        return linenos, np.zeros((0, ncols))
    try:
        flat = np.array(",".join(lines).split(","), dtype=np.float64)
    except ValueError:
        return None
    if flat.size != len(lines) * ncols:
        return None
    m = flat.reshape(len(lines), ncols)
    keys = m[:, :3]
    if not np.all(np.isfinite(m)) or not np.array_equal(keys, np.round(keys)):
        return None
    return linenos, m


def _keyed_rows(path, header_tail_check, width: Optional[int], dim_error: bool):
    """Read a file keyed by (camera_id, frame, det_id); returns key -> (lineno, values)."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"file not found: {path}")
    with path.open() as fh:
        first = fh.readline()
    out: Dict[Tuple[int, int, int], Tuple[int, np.ndarray]] = {}
    if not first.strip():
        return out
    header = [h.strip() for h in first.split(",")]
    _check_key(header, path, KEY_COLUMNS)
    header_tail_check(header[3:])
    if width is not None:
        fast = _fast_matrix(path, 3 + width)
        if fast is not None:
            for lineno, row in zip(*fast):
                key = (int(row[0]), int(row[1]), int(row[2]))
                if key in out:
                    break
                out[key] = (lineno, row[3:])
            else:
                return out
            out = {}
    _, rows = _read_csv(path)
    for lineno, tokens in rows:
        if width is not None and len(tokens) != 3 + width:
            cls = DimensionError if dim_error else ParseError
            raise cls(path, lineno, f"expected {width} values after the key, got {len(tokens) - 3}")
        key = tuple(_int(t, path, lineno, n) for t, n in zip(tokens[:3], KEY_COLUMNS))
        if key in out:
            raise ParseError(path, lineno, f"duplicate key {key}")
        out[key] = (lineno, _floats(tokens[3:], path, lineno))
    return out


def load_detections(
    path,
    expected_dim: int,
    embeddings_path=None,
    keypoints_path=None,
) -> List[Detection]:
    """Load a scene's detections joined with their embeddings and keypoints.

    The embeddings file defaults to ``embeddings.csv`` beside ``path``; the
    keypoints file to ``keypoints.csv`` when it exists.
    """
    path = Path(path)
    embeddings_path = Path(embeddings_path) if embeddings_path else path.with_name("embeddings.csv")
    if keypoints_path is None and path.with_name("keypoints.csv").exists():
        keypoints_path = path.with_name("keypoints.csv")

    if not path.exists():
        raise InputError(f"file not found: {path}")
    with path.open() as fh:
        first = fh.readline()
    if not first.strip():
        return []
    header = [h.strip() for h in first.split(",")]
    if header != DET_HEADER:
        raise ParseError(path, 1, f"expected header {','.join(DET_HEADER)}")

    def emb_header(tail):
        if len(tail) != expected_dim or tail != [f"e{i}" for i in range(expected_dim)]:
            raise DimensionError(embeddings_path, 1, f"header declares {len(tail)} embedding columns, expected {expected_dim}")

    def kp_header(tail):
        if len(tail) != 3 * NUM_KEYPOINTS:
            raise ParseError(keypoints_path, 1, f"expected {3 * NUM_KEYPOINTS} keypoint columns")

    fast = _fast_matrix(path, len(DET_HEADER))
    if fast is not None:
        parsed = [(ln, int(r[0]), int(r[1]), int(r[2]), r[3:]) for ln, r in zip(*fast)]
    else:
        parsed = []
        for lineno, tokens in _read_csv(path)[1]:
            if len(tokens) != len(DET_HEADER):
                raise ParseError(path, lineno, f"expected {len(DET_HEADER)} fields, got {len(tokens)}")
            cam, frame, det_id = (_int(t, path, lineno, n) for t, n in zip(tokens[:3], KEY_COLUMNS))
            parsed.append((lineno, cam, frame, det_id, _floats(tokens[3:], path, lineno)))

    if not parsed:
        return []
    embeddings = _keyed_rows(embeddings_path, emb_header, expected_dim, dim_error=True)
    keypoints = _keyed_rows(keypoints_path, kp_header, 3 * NUM_KEYPOINTS, dim_error=False) if keypoints_path else {}

    dets = []
    seen = set()
    for lineno, cam, frame, det_id, vals in parsed:
        key = (cam, frame, det_id)
        if key in seen:
            raise ParseError(path, lineno, f"duplicate detection {key}")
        seen.add(key)
        x, y, w, h, score = (float(v) for v in vals)
        if key not in embeddings:
            raise ParseError(path, lineno, f"no embedding row for detection {key}")
        kps = None
        if key in keypoints:
            kps = keypoints[key][1].reshape(NUM_KEYPOINTS, 3)
        try:
            dets.append(Detection(cam, frame, det_id, (x, y, w, h), float(score), embeddings[key][1], kps))
        except ValidationError as exc:
            raise ParseError(path, lineno, str(exc)) from None
    extra = set(embeddings) - seen
    if extra:
        lineno = min(embeddings[k][0] for k in extra)
        raise ParseError(embeddings_path, lineno, "embedding row without a detection")
    dets.sort(key=lambda d: d.key)
    return dets


def write_detections(detections: Iterable[Detection], path, embeddings_path=None, keypoints_path=None) -> None:
    path = Path(path)
    embeddings_path = Path(embeddings_path) if embeddings_path else path.with_name("embeddings.csv")
    dets = sorted(detections, key=lambda d: d.key)
    dim = dets[0].embedding.shape[0] if dets else 0
    det_lines = [",".join(DET_HEADER)]
    emb_lines = [",".join(KEY_COLUMNS + [f"e{i}" for i in range(dim)])]
    kp_lines = [",".join(KEY_COLUMNS + [f"kp{i}_{c}" for i in range(NUM_KEYPOINTS) for c in "xyc"])]
    for d in dets:
        key = f"{d.camera_id},{d.frame},{d.det_id}"
        det_lines.append(key + "," + ",".join(fmt(v) for v in (*d.box, d.score)))
        emb_lines.append(key + "," + ",".join(map(fmt, d.embedding)))
        if d.keypoints is not None:
            kp_lines.append(key + "," + ",".join(fmt(v) for kp in d.keypoints for v in kp))
    path.write_text("\n".join(det_lines) + "\n")
    embeddings_path.write_text("\n".join(emb_lines) + "\n")
    if keypoints_path is not None:
        Path(keypoints_path).write_text("\n".join(kp_lines) + "\n")


def format_track_row(r: TrackRow) -> str:
    return " ".join(
        [str(r.camera_id), str(r.global_id), str(r.frame)]
        + [fmt(v) for v in (r.x, r.y, r.w, r.h, r.xworld, r.yworld)]
    )


def write_track_rows(rows: Iterable[TrackRow], path) -> None:
    rows = sorted(rows, key=lambda r: (r.camera_id, r.frame, r.global_id))
    Path(path).write_text("".join(format_track_row(r) + "\n" for r in rows))


def write_tracks(tracklets: Sequence[Tracklet], path) -> None:
    """Write annotated tracklets as ``camera_id global_id frame x y w h xworld yworld`` rows.

    Raises StateError when a tracklet lacks global ids or world points.
    """
    write_track_rows(tracklet_rows(tracklets), path)


def load_tracks(path) -> List[TrackRow]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"file not found: {path}")
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != 9:
            raise ParseError(path, lineno, f"expected 9 fields, got {len(tokens)}")
        cam, gid, frame = (_int(t, path, lineno, n) for t, n in zip(tokens[:3], ("camera_id", "global_id", "frame")))
        vals = _floats(tokens[3:], path, lineno)
        rows.append(TrackRow(cam, gid, frame, *map(float, vals)))
    return rows


def write_homographies(homographies: Dict[int, np.ndarray], path) -> None:
    lines = []
    for cam in sorted(homographies):
        h = np.asarray(homographies[cam], dtype=np.float64).reshape(9)
        lines.append(" ".join([str(cam)] + [fmt(v) for v in h]))
    Path(path).write_text("".join(line + "\n" for line in lines))


def load_homographies(path) -> Dict[int, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"file not found: {path}")
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != 10:
            raise ParseError(path, lineno, f"expected 10 fields, got {len(tokens)}")
        cam = _int(tokens[0], path, lineno, "camera_id")
        if cam in out:
            raise ParseError(path, lineno, f"duplicate camera {cam}")
        out[cam] = _floats(tokens[1:], path, lineno).reshape(3, 3)
    return out


def write_correspondences(pairs_by_camera: Dict[int, Sequence], path) -> None:
    lines = []
    for cam in sorted(pairs_by_camera):
        for (u, v), (X, Y) in pairs_by_camera[cam]:
            lines.append(" ".join([str(cam), fmt(u), fmt(v), fmt(X), fmt(Y)]))
    Path(path).write_text("".join(line + "\n" for line in lines))


def load_correspondences(path) -> Dict[int, List[Tuple[Tuple[float, float], Tuple[float, float]]]]:
    """Return camera_id -> [((u, v), (X, Y)), ...] in file order."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"file not found: {path}")
    out: Dict[int, list] = defaultdict(list)
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != 5:
            raise ParseError(path, lineno, f"expected 5 fields, got {len(tokens)}")
        cam = _int(tokens[0], path, lineno, "camera_id")
        u, v, X, Y = _floats(tokens[1:], path, lineno)
        out[cam].append(((float(u), float(v)), (float(X), float(Y))))
    return dict(out)


def write_anchor_bank(bank: AnchorBank, path) -> None:
    dim = bank.anchors[0].features.shape[1] if len(bank) else 0
    lines = [",".join(["global_id", "slot"] + [f"e{i}" for i in range(dim)])]
    for anchor in bank.anchors:
        for slot, feat in enumerate(anchor.features):
            lines.append(",".join([str(anchor.global_id), str(slot)] + [fmt(v) for v in feat]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_anchor_bank(path) -> AnchorBank:
    header, rows = _read_csv(path)
    if not header:
        return AnchorBank(())
    if header[:2] != ["global_id", "slot"]:
        raise ParseError(path, 1, "expected header starting with global_id,slot")
    dim = len(header) - 2
    feats: Dict[int, list] = {}
    for lineno, tokens in rows:
        if len(tokens) != dim + 2:
            raise DimensionError(path, lineno, f"expected {dim} feature values, got {len(tokens) - 2}")
        gid = _int(tokens[0], path, lineno, "global_id")
        slot = _int(tokens[1], path, lineno, "slot")
        group = feats.setdefault(gid, [])
        if slot != len(group):
            raise ParseError(path, lineno, f"anchor {gid}: slot {slot} out of order")
        group.append(_floats(tokens[2:], path, lineno))
    return AnchorBank(tuple(Anchor(gid, np.vstack(f)) for gid, f in feats.items()))


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Plain CSV with integers as-is and reals through :func:`fmt`."""
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(str(v) if isinstance(v, (int, np.integer)) else fmt(v) for v in row))
    Path(path).write_text("\n".join(out) + "\n")


def read_table(path, header: Sequence[str], types: Sequence[type]) -> List[tuple]:
    got, rows = _read_csv(path)
    if got != list(header):
        raise ParseError(path, 1, f"expected header {','.join(header)}")
    out = []
    for lineno, tokens in rows:
        if len(tokens) != len(header):
            raise ParseError(path, lineno, f"expected {len(header)} fields, got {len(tokens)}")
        values = []
        for tok, typ, name in zip(tokens, types, header):
            if typ is int:
                values.append(_int(tok, path, lineno, name))
            else:
                try:
                    values.append(float(tok))
                except ValueError:
                    raise ParseError(path, lineno, f"{name}: expected real, got {tok!r}") from None
        out.append(tuple(values))
    return out
