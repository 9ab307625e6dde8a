"""Identity metrics (IDF1, IDP, IDR) and detection precision/recall."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from .assignment import solve_assignment
from .errors import ConfigError
from .model import TrackRow
from .sct import iou_matrix

MATCH_RULES = ("iou", "world")
_BIG = 1e9


def _ratio(num: int, den: int) -> float:
    return num / den if den > 0 else 0.0


@dataclass
class EvalReport:
    idf1: float
    idp: float
    idr: float
    precision: float
    recall: float
    idtp: int
    idfp: int
    idfn: int
    tp: int
    fp: int
    fn: int
    per_scene: List[Tuple[str, "EvalReport"]] = field(default_factory=list)

    @classmethod
    def from_counts(cls, idtp, idfp, idfn, tp, fp, fn, per_scene=None) -> "EvalReport":
        return cls(
            idf1=_ratio(2 * idtp, 2 * idtp + idfp + idfn),
            idp=_ratio(idtp, idtp + idfp),
            idr=_ratio(idtp, idtp + idfn),
            precision=_ratio(tp, tp + fp),
            recall=_ratio(tp, tp + fn),
            idtp=idtp, idfp=idfp, idfn=idfn, tp=tp, fp=fp, fn=fn,
            per_scene=list(per_scene or []),
        )

    FIELDS = ("idf1", "idp", "idr", "precision", "recall", "idtp", "idfp", "idfn", "tp", "fp", "fn")

    def row(self) -> list:
        return [getattr(self, f) for f in self.FIELDS]

    def to_table(self) -> str:
        header = f"{'scene':<16}" + "".join(f"{f:>10}" for f in self.FIELDS)
        lines = [header]
        for name, rep in self.per_scene + [("TOTAL", self)]:
            cells = [f"{v * 100:10.2f}" if isinstance(v, float) else f"{v:10d}" for v in rep.row()]
            lines.append(f"{name:<16}" + "".join(cells))
        return "\n".join(lines)

    def to_csv(self) -> str:
        lines = ["scene," + ",".join(self.FIELDS)]
        for name, rep in self.per_scene + [("TOTAL", self)]:
            lines.append(name + "," + ",".join(repr(v) for v in rep.row()))
        return "\n".join(lines) + "\n"


def _cells(rows: Sequence[TrackRow]) -> Dict[Tuple[int, int], List[TrackRow]]:
    out: Dict[Tuple[int, int], List[TrackRow]] = defaultdict(list)
    for r in rows:
        out[(r.camera_id, r.frame)].append(r)
    return out


def _match_mask(gts, preds, match_rule: str, iou_thresh: float, radius: float):
    """Returns (similarity cost matrix, boolean validity mask)."""
    if match_rule == "iou":
        iou = iou_matrix(np.array([g.box for g in gts]), np.array([p.box for p in preds]))
        return 1.0 - iou, iou >= iou_thresh
    a = np.array([g.world for g in gts])
    b = np.array([p.world for p in preds])
    dist = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2))
    return dist, dist <= radius


def overlap_counts(pred, gt, match_rule: str = "iou", iou_thresh: float = 0.5, radius: float = 1.0):
    """Per (gt id, pred id) count of (camera, frame) cells where the two match.

    Also returns detection-level tp. A pair is counted at most once per cell.
    """
    if match_rule not in MATCH_RULES:
        raise ConfigError(f"unknown match rule {match_rule!r}; expected one of {MATCH_RULES}")
    gt_cells, pred_cells = _cells(gt), _cells(pred)
    counts: Dict[Tuple[int, int], int] = defaultdict(int)
    tp = 0
    for key in sorted(gt_cells.keys() & pred_cells.keys()):
        gts, preds = gt_cells[key], pred_cells[key]
        cost, valid = _match_mask(gts, preds, match_rule, iou_thresh, radius)
        pairs = set()
        for gi, pi in zip(*np.nonzero(valid)):
            pairs.add((gts[gi].global_id, preds[pi].global_id))
        for pair in pairs:
            counts[pair] += 1
        gated = np.where(valid, cost, _BIG)
        tp += sum(1 for r, c in solve_assignment(gated) if valid[r, c])
    return dict(counts), tp


def identity_match(counts: Mapping[Tuple[int, int], int]) -> Tuple[int, List[Tuple[int, int]]]:
    """One-to-one gt/pred identity matching maximizing total overlap."""
    if not counts:
        return 0, []
    gids = sorted({g for g, _ in counts})
    pids = sorted({p for _, p in counts})
    m = np.zeros((len(gids), len(pids)))
    for (g, p), c in counts.items():
        m[gids.index(g), pids.index(p)] = c
    pairs = solve_assignment(-m)
    matched = [(gids[r], pids[c]) for r, c in pairs if m[r, c] > 0]
    return int(sum(counts[pair] for pair in matched)), matched


def evaluate(
    pred: Sequence[TrackRow],
    gt: Sequence[TrackRow],
    match_rule: str = "iou",
    iou_thresh: float = 0.5,
    radius: float = 1.0,
) -> EvalReport:
    """Score predicted tracks against ground truth over all cameras of one scene.

    Ratios with an empty denominator are reported as 0.
    """
    counts, tp = overlap_counts(pred, gt, match_rule, iou_thresh, radius)
    idtp, _ = identity_match(counts)
    n_pred, n_gt = len(pred), len(gt)
    return EvalReport.from_counts(idtp, n_pred - idtp, n_gt - idtp, tp, n_pred - tp, n_gt - tp)


def evaluate_scenes(scenes: Mapping[str, Tuple[Sequence[TrackRow], Sequence[TrackRow]]], **kwargs) -> EvalReport:
    """Evaluate several scenes; identities are matched per scene and counts summed."""
    per_scene = [(name, evaluate(pred, gt, **kwargs)) for name, (pred, gt) in sorted(scenes.items())]
    sums = [sum(getattr(r, f) for _, r in per_scene) for f in ("idtp", "idfp", "idfn", "tp", "fp", "fn")]
    return EvalReport.from_counts(*sums, per_scene=per_scene)
