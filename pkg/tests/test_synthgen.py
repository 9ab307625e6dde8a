import math

import numpy as np
import pytest

from mcpt.errors import ConfigError, InputError, ValidationError
from mcpt.geometry import ground_point, project
from mcpt.config import RunConfig
from mcpt.io import load_correspondences, load_detections, load_tracks, read_table
from mcpt.stcra import NO_PEERS, WorldIndex
from mcpt.synthgen import (
    LABELS_HEADER,
    Exit,
    Occlusion,
    Scenario,
    Swap,
    generate,
    inject_swap,
    label_diff,
    normalized_condition_number,
    parse_scenario,
    preliminary_world_detections,
    scenario_to_text,
    write_scene,
)


def _bottom_center(d):
    x, y, w, h = d.box
    return (x + w / 2.0, y + h)


def test_identity_camera_bottom_centers_equal_gt():
    scene = generate(Scenario(n_identities=1, n_cameras=1, n_frames=5), map_to_image={0: np.eye(3)})
    assert len(scene.detections) == 5
    for d in scene.detections:
        assert _bottom_center(d) == pytest.approx(scene.gt_point(1, d.frame), abs=1e-12)


def test_camera_override_must_cover_all_cameras():
    with pytest.raises(ValidationError):
        generate(Scenario(n_cameras=2, n_frames=5), map_to_image={0: np.eye(3)})
    with pytest.raises(ValidationError):
        generate(Scenario(n_cameras=1, n_frames=5), map_to_image={0: np.zeros((3, 3))})


def test_full_miss_rate_keeps_gt():
    scene = generate(Scenario(n_frames=50, miss_rate=1.0))
    assert scene.detections == []
    assert len(scene.gt_rows) == 4 * 3 * 50


def _same(a, b):
    assert [d.key for d in a.detections] == [d.key for d in b.detections]
    for x, y in zip(a.detections, b.detections):
        assert x == y
    assert a.gt_rows == b.gt_rows and a.labels == b.labels
    assert np.array_equal(a.positions, b.positions)


def test_seed_7_regenerates_bit_identically_and_lifts_within_noise():
    noise = 1.0
    s = Scenario(n_identities=4, n_cameras=3, n_frames=600, embedding_noise=0.05, box_noise_px=noise, rng_seed=7)
    a, b = generate(s), generate(s)
    _same(a, b)
    for d in a.detections:
        cam = a.cameras[d.camera_id]
        p = a.gt_point(a.labels[d.key], d.frame)
        # bottom-center jitter is at most noise px per axis; 2x the worst image->map stretch of that box
        u, v = project(cam.map_to_image, p)
        corners = [project(cam.homography, (u + du, v + dv)) for du in (-noise, noise) for dv in (-noise, noise)]
        bound = max(math.dist(c, p) for c in corners)
        assert math.dist(project(cam.homography, ground_point(d, 0.5)), p) <= 2 * bound


def test_different_seeds_differ():
    a = generate(Scenario(n_frames=20, rng_seed=1))
    b = generate(Scenario(n_frames=20, rng_seed=2))
    assert not np.array_equal(a.positions, b.positions)


def test_noiseless_projection_is_exact():
    scene = generate(Scenario(n_identities=4, n_cameras=3, n_frames=300, rng_seed=3))
    for d in scene.detections:
        got = project(scene.cameras[d.camera_id].homography, _bottom_center(d))
        assert math.dist(got, scene.gt_point(scene.labels[d.key], d.frame)) <= 1e-9


def test_noiseless_cross_view_inconsistency_is_zero():
    scene = generate(Scenario(n_identities=4, n_cameras=3, n_frames=200, rng_seed=4))
    dets = preliminary_world_detections(scene)
    index = WorldIndex(dets)
    checked = 0
    for w in dets:
        d = index.inconsistency(w, w.global_id, 1.0)
        if d is not NO_PEERS:
            assert d <= 1e-9
            checked += 1
    assert checked > 0


def test_scene_invariants():
    s = Scenario(n_identities=6, n_frames=200, similar_pairs=3, embedding_noise=0.1, fp_rate=0.2, rng_seed=5)
    scene = generate(s)
    assert np.all(scene.positions[..., 0] >= 0) and np.all(scene.positions[..., 0] <= s.map_width)
    assert np.all(scene.positions[..., 1] >= 0) and np.all(scene.positions[..., 1] <= s.map_height)
    assert np.allclose(np.linalg.norm(scene.true_embeddings, axis=1), 1.0)
    for d in scene.detections:
        assert np.linalg.norm(d.embedding) == pytest.approx(1.0)
    e = scene.true_embeddings
    for p in range(3):
        assert 1 - e[2 * p] @ e[2 * p + 1] == pytest.approx(0.15)
    fps = [d for d in scene.detections if scene.labels[d.key] == 0]
    assert fps and all(d.keypoints is None for d in fps)
    real = [d for d in scene.detections if scene.labels[d.key] != 0]
    for d in real[:50]:
        x, y, w, h = d.box
        assert d.keypoints[15].tolist() == [x + w, y + h, 0.9]
        assert d.keypoints[16].tolist() == [x, y + h, 0.9]
    assert all(len(pairs) == 8 for pairs in scene.correspondences.values())


def test_cameras_are_well_conditioned():
    for seed in range(10):
        s = Scenario(n_frames=2, n_cameras=4, rng_seed=seed)
        for cam in generate(s).cameras.values():
            assert normalized_condition_number(cam.map_to_image, (s.map_width, s.map_height)) < 1e4


def test_exit_removes_identity_from_every_view():
    scene = generate(Scenario(n_frames=120, exits=(Exit(2, 40, 79),), rng_seed=1))
    frames = {d.frame for d in scene.detections if scene.labels[d.key] == 2}
    assert frames.isdisjoint(range(40, 80))
    assert frames & set(range(40)) and frames & set(range(80, 120))


def test_occlusion_copies_occluder_appearance_with_lower_score():
    s = Scenario(n_identities=2, n_cameras=1, n_frames=40, occlusions=(Occlusion(0, 10, 19, 1, 2),), rng_seed=2)
    scene = generate(s)
    for d in scene.detections:
        if scene.labels[d.key] == 2 and 10 <= d.frame <= 19:
            assert d.embedding @ scene.true_embeddings[0] == pytest.approx(1.0)
            assert 0.4 <= d.score <= 0.8


def test_invalid_scenarios():
    with pytest.raises(ValidationError):
        Scenario(miss_rate=1.5)
    with pytest.raises(ValidationError):
        Scenario(n_identities=2, similar_pairs=2)
    with pytest.raises(ValidationError):
        Scenario(swaps=(Swap(0, 0, 5, 1, 1),))


# --- swaps ------------------------------------------------------------------


def _scene():
    return generate(Scenario(n_identities=4, n_cameras=3, n_frames=300, rng_seed=9))


def test_empty_swap_range_is_a_no_op():
    scene = _scene()
    assert inject_swap(scene, 0, (200, 100), 1, 2).prelim == scene.prelim


def test_swap_relabels_both_identities_over_the_range():
    scene = _scene()
    both = all(
        {1, 2} <= {scene.labels[k] for k in scene.labels if k[0] == 0 and k[1] == f} for f in range(100, 201)
    )
    assert both
    swapped = inject_swap(scene, 0, (100, 200), 1, 2)
    assert len(label_diff(swapped)) == (200 - 100 + 1) * 2
    assert swapped.labels == scene.labels and swapped.gt_rows == scene.gt_rows


def test_swap_is_an_involution():
    scene = _scene()
    twice = inject_swap(inject_swap(scene, 1, (10, 90), 3, 4), 1, (10, 90), 3, 4)
    assert twice.prelim == scene.prelim


def test_swap_with_absent_identity_fails():
    scene = generate(Scenario(n_frames=100, exits=(Exit(3, 0, 99),), rng_seed=1))
    with pytest.raises(InputError):
        inject_swap(scene, 0, (0, 10), 1, 3)


# --- files ------------------------------------------------------------------


def test_scenario_text_round_trip():
    s = Scenario(
        n_identities=5,
        embedding_noise=0.1,
        occlusions=(Occlusion(0, 10, 20, 1, 2), Occlusion(2, 30, 40, 3, 4)),
        swaps=(Swap(1, 5, 9, 2, 5),),
        exits=(Exit(4, 100, 199),),
        rng_seed=12,
    )
    assert parse_scenario(scenario_to_text(s)) == s


def test_scenario_parse_errors():
    with pytest.raises(ConfigError):
        parse_scenario("bogus = 1\n")
    with pytest.raises(ConfigError):
        parse_scenario("n_frames = many\n")
    with pytest.raises(ConfigError):
        parse_scenario("miss_rate = 2\n")


def test_written_scene_round_trips(tmp_path):
    scene = generate(Scenario(n_frames=30, fp_rate=0.2, rng_seed=3))
    paths = write_scene(scene, tmp_path)
    assert all(p.exists() for p in paths.values())
    dets = load_detections(paths["detections"], 64)
    assert [d.key for d in dets] == [d.key for d in scene.detections]
    assert np.allclose([d.box for d in dets], [d.box for d in scene.detections], atol=1e-6)
    assert len(load_tracks(paths["gt_tracks"])) == len(scene.gt_rows)
    assert set(load_correspondences(paths["correspondences"])) == {0, 1, 2}
    rows = read_table(paths["labels"], LABELS_HEADER, [int] * 5)
    assert {r[:3]: r[3] for r in rows} == scene.labels
    assert parse_scenario(paths["scenario"].read_text()) == scene.scenario
    assert RunConfig.from_mapping({"embedding_dim": "64"}).embedding_dim == 64
