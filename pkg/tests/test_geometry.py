import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import ankle_keypoints, make_det
from geom_helpers import corrupt, make_pairs, random_homography, rel_frobenius
from mcpt.errors import ArityError, DegeneracyError, PointAtInfinityError, SingularMatrixError
from mcpt.geometry import (
    Correspondence,
    Homography,
    estimate_homography,
    ground_point,
    invert,
    project,
    reprojection_errors,
)

METHODS = ["LS", "RANSAC", "LMEDS", "PROSAC"]


# --- ground_point -----------------------------------------------------------


def test_ground_point_ankle_midpoint():
    d = make_det(kps=ankle_keypoints((100, 200, 0.9), (110, 200, 0.9)))
    assert ground_point(d, 0.5) == (105, 200)


def test_ground_point_box_bottom_center():
    assert ground_point(make_det(box=(50, 60, 20, 40)), 0.5) == (60, 100)


def test_ground_point_needs_both_ankles_confident():
    d = make_det(box=(0, 0, 10, 10), kps=ankle_keypoints((100, 200, 0.9), (110, 200, 0.3)))
    assert ground_point(d, 0.5) == (5, 10)


def test_ground_point_threshold_is_inclusive():
    d = make_det(box=(0, 0, 10, 10), kps=ankle_keypoints((1, 2, 0.5), (3, 2, 0.5)))
    assert ground_point(d, 0.5) == (2, 2)


# --- project / invert -------------------------------------------------------


def test_project_examples():
    assert project(Homography(np.eye(3)), (3, 4)) == (3, 4)
    assert project(Homography(np.diag([2.0, 2.0, 1.0])), (3, 4)) == (6, 8)
    h = np.array([[1, 0, 5], [0, 1, -2], [0, 0, 0.5]])
    assert project(h, (3, 4)) == pytest.approx((16, 4), abs=1e-12)
    assert project(Homography(h), (3, 4)) == pytest.approx((16, 4), abs=1e-12)


def test_homography_normalized_and_checked():
    h = Homography(np.diag([4.0, 4.0, 2.0]))
    assert h.h[2, 2] == 1.0
    with pytest.raises(SingularMatrixError):
        Homography(np.zeros((3, 3)))
    with pytest.raises(SingularMatrixError):
        invert(np.array([[1, 2, 3], [2, 4, 6], [0, 0, 1.0]]))


def test_project_point_at_infinity():
    h = np.array([[1, 0, 0], [0, 1, 0], [1, 0, 0.0]])
    with pytest.raises(PointAtInfinityError):
        project(h, (0, 5))


@pytest.mark.parametrize("factor", [0.1, 10.0, -3.0])
def test_project_scale_invariant(factor):
    h = random_homography(np.random.default_rng(2))
    p = (400.0, 700.0)
    assert project(h * factor, p) == pytest.approx(project(h, p), rel=1e-12)


def test_invert_examples():
    assert np.allclose(invert(np.eye(3)).h, np.eye(3))
    assert np.allclose(invert(np.diag([2.0, 2.0, 1.0])).h, np.diag([0.5, 0.5, 1.0]))


@pytest.mark.parametrize("seed", range(5))
def test_invert_round_trip_100_points(seed):
    rng = np.random.default_rng(seed)
    h = Homography(random_homography(rng))
    hi = invert(h)
    for p in rng.uniform([0, 0], [1920, 1080], size=(100, 2)):
        q = project(hi, project(h, p))
        assert abs(q[0] - p[0]) <= 1e-9 * max(1.0, abs(p[0]))
        assert abs(q[1] - p[1]) <= 1e-9 * max(1.0, abs(p[1]))


# --- estimation -------------------------------------------------------------


def test_estimate_four_identity_pairs():
    pts = [(0, 0), (1, 0), (0, 1), (1, 1)]
    for method in METHODS:
        h, mask = estimate_homography([(p, p) for p in pts], method=method)
        assert np.allclose(h.h, np.eye(3), atol=1e-9), method
        assert mask.all()


def test_estimate_accepts_correspondence_objects():
    pts = [(0, 0), (1, 0), (0, 1), (1, 1)]
    h, _ = estimate_homography([Correspondence(p, (2 * p[0], 2 * p[1])) for p in pts], method="LS")
    assert np.allclose(h.h, np.diag([2.0, 2.0, 1.0]), atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_ls_recovers_from_8_noiseless_pairs(seed):
    rng = np.random.default_rng(seed)
    h_true = random_homography(rng)
    h, mask = estimate_homography(make_pairs(h_true, rng, 8), method="LS")
    assert rel_frobenius(h.h, h_true) <= 1e-6
    assert mask.all()


@pytest.mark.parametrize("method", ["RANSAC", "LMEDS", "PROSAC"])
@pytest.mark.parametrize("seed", range(4))
def test_robust_methods_reject_exactly_the_outliers(method, seed):
    rng = np.random.default_rng(100 + seed)
    h_true = random_homography(rng)
    pairs, outliers = corrupt(make_pairs(h_true, rng, 12), rng, 4)
    quality = [0.1 if i in outliers else 1.0 for i in range(len(pairs))] if method == "PROSAC" else None
    h, mask = estimate_homography(pairs, method=method, rng_seed=seed, prosac_quality=quality)
    assert {i for i, m in enumerate(mask) if not m} == outliers
    assert rel_frobenius(h.h, h_true) <= 1e-4


@pytest.mark.parametrize("method", METHODS)
def test_noiseless_inlier_reprojection_error(method):
    rng = np.random.default_rng(9)
    h_true = random_homography(rng)
    pairs = make_pairs(h_true, rng, 10)
    h, mask = estimate_homography(pairs, method=method)
    assert reprojection_errors(h, pairs)[mask].max() <= 1e-6


def test_prosac_without_scores_matches_ransac():
    rng = np.random.default_rng(5)
    pairs, _ = corrupt(make_pairs(random_homography(rng), rng, 12), rng, 3)
    a, ma = estimate_homography(pairs, method="RANSAC", rng_seed=3)
    b, mb = estimate_homography(pairs, method="PROSAC", rng_seed=3)
    assert np.array_equal(a.h, b.h) and np.array_equal(ma, mb)


@pytest.mark.parametrize("method", METHODS)
def test_estimate_is_deterministic(method):
    rng = np.random.default_rng(11)
    pairs, _ = corrupt(make_pairs(random_homography(rng), rng, 12), rng, 3)
    a, ma = estimate_homography(pairs, method=method, rng_seed=42)
    b, mb = estimate_homography(pairs, method=method, rng_seed=42)
    assert np.array_equal(a.h, b.h) and np.array_equal(ma, mb)


def test_estimate_arity_and_degeneracy():
    with pytest.raises(ArityError):
        estimate_homography([((0, 0), (0, 0))] * 3)
    collinear = [((float(i), 2.0 * i), (float(i), float(i))) for i in range(6)]
    for method in ["RANSAC", "LMEDS"]:
        with pytest.raises(DegeneracyError):
            estimate_homography(collinear, method=method, max_iters=50)
    with pytest.raises(DegeneracyError):
        estimate_homography(collinear[:4], method="LS")


@given(st.integers(0, 10_000))
def test_ls_recovery_property(seed):
    rng = np.random.default_rng(seed)
    h_true = random_homography(rng)
    h, _ = estimate_homography(make_pairs(h_true, rng, 6), method="LS")
    assert rel_frobenius(h.h, h_true) <= 1e-6
