"""Multi-camera people tracking: single-camera tracking, anchor-based global
ids, homography-based spatio-temporal id re-assignment, identity metrics and
a synthetic scene generator."""

from .config import RunConfig, load_config
from .errors import McptError
from .model import UNASSIGNED, Anchor, AnchorBank, Detection, TrackRow, Tracklet, WorldDetection

__version__ = "0.1.0"

__all__ = [
    "RunConfig",
    "load_config",
    "McptError",
    "UNASSIGNED",
    "Anchor",
    "AnchorBank",
    "Detection",
    "TrackRow",
    "Tracklet",
    "WorldDetection",
]
