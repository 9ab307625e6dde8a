import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mcpt.model import NUM_KEYPOINTS, Detection

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def make_det(camera=0, frame=0, det_id=0, box=(10.0, 20.0, 30.0, 60.0), score=0.9, emb=(1.0, 0.0, 0.0, 0.0), kps=None):
    return Detection(camera, frame, det_id, box, score, np.asarray(emb, dtype=float), kps)


def ankle_keypoints(left, right):
    """17x3 keypoints with only the two ankles filled."""
    kps = np.zeros((NUM_KEYPOINTS, 3))
    kps[15] = left
    kps[16] = right
    return kps


@pytest.fixture
def det_factory():
    return make_det


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    failed = {r.nodeid for r in terminalreporter.stats.get("failed", [])}
    ran = failed | {r.nodeid for r in terminalreporter.stats.get("passed", [])}
    lines = []
    for n, title in acceptance_log.TITLES.items():
        tag = f"test_acceptance.py::test_criterion_{n:02d}_"
        if n in acceptance_log.RESULTS:
            lines.append(acceptance_log.RESULTS[n])
        elif any(tag in node for node in failed):
            lines.append(f"criterion {n:2d} FAIL {title}: did not complete")
    if lines or any("test_acceptance" in node for node in ran):
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
