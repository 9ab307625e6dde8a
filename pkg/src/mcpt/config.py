"""Run configuration and the flat ``key = value`` config grammar."""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Tuple

from .errors import ConfigError

_PER_CAMERA_LOW = re.compile(r"^low_score_thresh\.camera_(\d+)$")


def parse_kv_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """Parse ``key = value`` lines. ``#`` starts a comment; blank lines are ignored."""
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _coerce(raw: str, template, key: str):
    try:
        if isinstance(template, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(template, int):
            return int(raw)
        if isinstance(template, float):
            return float(raw)
        if isinstance(template, tuple):
            return tuple(float(v) for v in raw.replace(",", " ").split())
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


@dataclass(frozen=True)
class RunConfig:
    high_score_thresh: float = 0.6
    low_score_thresh: float = 0.1
    low_score_overrides: Dict[int, float] = field(default_factory=dict)
    tau_pose: float = 0.5
    vote_window: int = 15

    # single-camera tracker
    max_age: int = 30
    confirm_hits: int = 2
    match_thresh: float = 0.8
    low_match_thresh: float = 0.5
    unconfirmed_match_thresh: float = 0.7
    appearance_thresh: float = 0.25
    feature_momentum: float = 0.9

    # anchors
    cluster_dist_thresh: float = 0.1
    min_cluster_size: int = 3
    anchor_k: int = 5
    anchor_sample_period_frames: int = 30
    anchor_sample_span_frames: int = 1800
    assign_max_cost: float = 0.5

    # spatio-temporal re-assignment, thresholds in map units
    stcra_iterations: int = 3
    stcra_conf_thresholds: Tuple[float, ...] = (0.5, 0.65, 0.8)
    stcra_outlier_thresholds: Tuple[float, ...] = (3.0, 2.0, 1.5)
    stcra_smooth_mode: str = "between_passes"
    stcra_passes: int = -1  # -1 runs every iteration, 0 skips re-assignment
    smoothing_window: int = 9

    interp_max_gap: int = 30
    embedding_dim: int = 512

    homography_method: str = "RANSAC"
    ransac_reproj_thresh: float = 3.0
    ransac_max_iters: int = 2000

    rng_seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0.0 <= self.low_score_thresh < self.high_score_thresh <= 1.0:
            raise ConfigError("need 0 <= low_score_thresh < high_score_thresh <= 1")
        for cam, low in self.low_score_overrides.items():
            if not 0.0 <= low < self.high_score_thresh:
                raise ConfigError(f"low_score_thresh.camera_{cam} must lie in [0, high_score_thresh)")
        if self.vote_window < 1 or self.vote_window % 2 == 0:
            raise ConfigError(f"vote_window must be odd and >= 1, got {self.vote_window}")
        if self.smoothing_window < 1 or self.smoothing_window % 2 == 0:
            raise ConfigError(f"smoothing_window must be odd and >= 1, got {self.smoothing_window}")
        n = self.stcra_iterations
        if n < 1:
            raise ConfigError("stcra_iterations must be >= 1")
        conf, outl = self.stcra_conf_thresholds, self.stcra_outlier_thresholds
        if len(conf) != n or len(outl) != n:
            raise ConfigError("stcra threshold schedules must have one entry per iteration")
        if any(b <= a for a, b in zip(conf, conf[1:])):
            raise ConfigError("stcra_conf_thresholds must be strictly ascending")
        if any(b >= a for a, b in zip(outl, outl[1:])):
            raise ConfigError("stcra_outlier_thresholds must be strictly descending")
        if any(v <= 0 for v in conf + outl):
            raise ConfigError("stcra thresholds must be positive")
        if not -1 <= self.stcra_passes <= n:
            raise ConfigError(f"stcra_passes must lie in -1..{n}")
        if self.stcra_smooth_mode not in ("between_passes", "per_pass", "off"):
            raise ConfigError(f"unknown stcra_smooth_mode {self.stcra_smooth_mode!r}")
        if not 0.0 < self.cluster_dist_thresh < 2.0:
            raise ConfigError("cluster_dist_thresh must lie in (0, 2)")
        if self.anchor_sample_period_frames < 1 or self.anchor_sample_span_frames < self.anchor_sample_period_frames:
            raise ConfigError("need 1 <= anchor_sample_period_frames <= anchor_sample_span_frames")
        if self.anchor_k < 1 or self.min_cluster_size < 1:
            raise ConfigError("anchor_k and min_cluster_size must be >= 1")
        if self.embedding_dim < 1:
            raise ConfigError("embedding_dim must be >= 1")
        if self.homography_method.upper() not in ("LS", "RANSAC", "LMEDS", "PROSAC"):
            raise ConfigError(f"unknown homography_method {self.homography_method!r}")
        if not 0.0 <= self.tau_pose <= 1.0:
            raise ConfigError("tau_pose must lie in [0, 1]")
        if self.max_age < 0 or self.confirm_hits < 1 or self.interp_max_gap < 0:
            raise ConfigError("max_age, interp_max_gap must be >= 0 and confirm_hits >= 1")

    def low_thresh_for(self, camera_id: int) -> float:
        return self.low_score_overrides.get(camera_id, self.low_score_thresh)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_mapping(cls, values: Dict[str, str]) -> "RunConfig":
        defaults = cls()
        known = {f.name for f in dataclasses.fields(cls)} - {"low_score_overrides"}
        kwargs = {}
        overrides: Dict[int, float] = {}
        for key, raw in values.items():
            m = _PER_CAMERA_LOW.match(key)
            if m:
                overrides[int(m.group(1))] = _coerce(raw, 0.0, key)
            elif key in known:
                kwargs[key] = _coerce(raw, getattr(defaults, key), key)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        if "homography_method" in kwargs:
            kwargs["homography_method"] = kwargs["homography_method"].upper()
        return cls(low_score_overrides=overrides, **kwargs)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name == "low_score_overrides":
                for cam in sorted(value):
                    lines.append(f"low_score_thresh.camera_{cam} = {value[cam]!r}")
            elif isinstance(value, tuple):
                lines.append(f"{f.name} = " + ", ".join(repr(v) for v in value))
            else:
                lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return RunConfig.from_mapping(parse_kv_text(path.read_text(), str(path)))
