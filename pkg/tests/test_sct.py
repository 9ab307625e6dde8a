import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_det
from mcpt.config import RunConfig
from mcpt.errors import InputError
from mcpt.model import Tracklet
from mcpt.sct import KalmanFilterXYAH, CameraTracker, interpolate_gaps, iou_matrix, track_all, track_camera
from mcpt.synthgen import Scenario, generate

CFG = RunConfig(embedding_dim=4)


def _by_frame(dets):
    out = {}
    for d in dets:
        out.setdefault(d.frame, []).append(d)
    return out


def test_iou_matrix_values():
    a = np.array([[0, 0, 10, 10.0]])
    b = np.array([[0, 0, 10, 10.0], [5, 0, 10, 10.0], [20, 20, 5, 5.0]])
    assert iou_matrix(a, b)[0] == pytest.approx([1.0, 50 / 150, 0.0])
    assert iou_matrix(a, np.zeros((0, 4))).shape == (1, 0)


def test_one_detection_per_frame_gives_one_tracklet():
    dets = [make_det(frame=f, box=(100 + 3 * f, 200, 40, 100)) for f in range(10)]
    (t,) = track_camera(_by_frame(dets), CFG)
    assert len(t) == 10
    assert [f for f, _ in t.entries] == list(range(10))


def test_low_score_detection_gives_nothing():
    assert track_camera({0: [make_det(score=0.05)]}, CFG) == []


def test_mixed_cameras_rejected():
    with pytest.raises(InputError):
        track_camera({0: [make_det(camera=0), make_det(camera=1, det_id=1)]}, CFG)


def test_frames_must_increase():
    tr = CameraTracker(0, CFG)
    tr.step(3, [])
    with pytest.raises(InputError):
        tr.step(3, [])


def test_crossing_paths_with_distinct_appearance_stay_pure():
    # two people walking toward each other; boxes overlap for several frames
    e1, e2 = (1.0, 0.0, 0.0, 0.0), (0.0, 1.0, 0.0, 0.0)
    dets, truth = [], {}
    for f in range(40):
        xa, xb = 100 + 6 * f, 334 - 6 * f
        order = [(xa, e1, 1), (xb, e2, 2)] if f % 2 else [(xb, e2, 2), (xa, e1, 1)]
        for det_id, (x, e, ident) in enumerate(order):
            dets.append(make_det(frame=f, det_id=det_id, box=(x, 200, 40, 100), emb=e))
            truth[(0, f, det_id)] = ident
    ts = track_camera(_by_frame(dets), CFG)
    assert len(ts) == 2
    for t in ts:
        assert len({truth[d.key] for _, d in t.entries}) == 1
        assert len(t) == 40


def test_second_stage_keeps_a_track_through_a_low_score_frame():
    dets = [make_det(frame=f, box=(100 + 2 * f, 200, 40, 100), score=0.3 if f == 5 else 0.9) for f in range(10)]
    (t,) = track_camera(_by_frame(dets), CFG)
    assert len(t) == 10


def test_per_camera_low_threshold_override():
    dets = [make_det(frame=f, box=(100 + 2 * f, 200, 40, 100), score=0.3 if f == 5 else 0.9) for f in range(10)]
    cfg = RunConfig(embedding_dim=4, low_score_overrides={0: 0.5})
    (t,) = track_camera(_by_frame(dets), cfg)
    assert 5 not in [f for f, _ in t.entries]


def test_unconfirmed_single_frame_false_positive_is_dropped():
    dets = [make_det(frame=f, box=(100 + 2 * f, 200, 40, 100)) for f in range(10)]
    dets.append(make_det(frame=4, det_id=1, box=(900, 500, 40, 100), emb=(0, 0, 1, 0)))
    ts = track_camera(_by_frame(dets), CFG)
    assert len(ts) == 1


def test_track_terminates_after_max_age():
    cfg = RunConfig(embedding_dim=4, max_age=5)
    dets = [make_det(frame=f, box=(100, 200, 40, 100)) for f in range(5)]
    dets += [make_det(frame=f, box=(100, 200, 40, 100)) for f in range(20, 25)]
    ts = track_camera(_by_frame(dets), cfg)
    assert len(ts) == 2


def test_kalman_covariance_stays_symmetric_psd():
    kf = KalmanFilterXYAH()
    rng = np.random.default_rng(0)
    mean, cov = kf.initiate(np.array([100.0, 200.0, 0.4, 100.0]))
    for _ in range(200):
        mean, cov = kf.predict(mean, cov)
        z = np.array([100.0, 200.0, 0.4, 100.0]) + rng.normal(scale=[3, 3, 0.01, 3])
        mean, cov = kf.correct(mean, cov, z)
        assert np.array_equal(cov, cov.T)
        assert np.linalg.eigvalsh(cov).min() >= -1e-9
        assert mean[3] > 0


def _easy_scene(seed):
    return generate(Scenario(n_identities=4, n_cameras=2, n_frames=150, embedding_noise=0.05, rng_seed=seed))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_purity_on_easy_scenes(seed):
    scene = _easy_scene(seed)
    assert np.min(1 - scene.true_embeddings @ scene.true_embeddings.T + 2 * np.eye(4)) >= 0.5
    ts = track_all(scene.detections, RunConfig(embedding_dim=64))
    for t in ts:
        assert len({scene.labels[d.key] for _, d in t.entries}) == 1


def test_deterministic_and_disjoint():
    scene = _easy_scene(3)
    cfg = RunConfig(embedding_dim=64)
    a, b = track_all(scene.detections, cfg), track_all(scene.detections, cfg)
    assert a == b
    keys = [d.key for t in a for _, d in t.entries]
    assert len(keys) == len(set(keys))


# --- interpolation ----------------------------------------------------------


def _t(frames_boxes, gids=None, world=None):
    entries = tuple((f, make_det(frame=f, box=b)) for f, b in frames_boxes)
    return Tracklet(0, 1, entries, gids, world)


def test_interpolate_no_gaps_unchanged():
    t = _t([(0, (0, 0, 10, 10)), (1, (1, 1, 10, 10))])
    assert interpolate_gaps(t, 30) is t


def test_interpolate_midpoint():
    t = _t([(10, (0, 0, 10, 10)), (12, (2, 2, 10, 10))], gids=(4, 4), world=((0.0, 0.0), (2.0, 4.0)))
    out = interpolate_gaps(t, 30)
    assert [f for f, _ in out.entries] == [10, 11, 12]
    assert out.entries[1][1].box == pytest.approx((1, 1, 10, 10))
    assert out.global_ids == (4, 4, 4)
    assert out.world_points[1] == pytest.approx((1.0, 2.0))


def test_interpolate_gap_over_cap_unchanged():
    t = _t([(0, (0, 0, 10, 10)), (41, (2, 2, 10, 10))])
    assert interpolate_gaps(t, 30) is t


def test_interpolate_disagreeing_ids_take_the_earlier():
    t = _t([(0, (0, 0, 10, 10)), (3, (3, 0, 10, 10))], gids=(2, 5))
    assert interpolate_gaps(t, 30).global_ids == (2, 2, 2, 5)


@settings(max_examples=40)
@given(st.lists(st.integers(1, 12), min_size=1, max_size=8), st.integers(0, 10))
def test_interpolated_frames_are_contiguous_within_cap(steps, cap):
    frames = np.cumsum([0] + steps).tolist()
    t = _t([(f, (f, 0, 10, 10)) for f in frames])
    out = interpolate_gaps(t, cap)
    got = [f for f, _ in out.entries]
    assert got == sorted(set(got))
    expected = len(frames) + sum(s - 1 for s in steps if s - 1 <= cap)
    assert len(got) == expected
    for f, d in out.entries:
        assert d.box[0] == pytest.approx(f)
