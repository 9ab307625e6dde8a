"""Ground-truth homographies and correspondences for calibration tests."""

import numpy as np


def random_homography(rng):
    """A well-conditioned image(px) -> map(units) homography.

    Built as the inverse of a map->image composition of rotation,
    anisotropic scale, mild perspective and translation.
    """
    theta = rng.uniform(0, 2 * np.pi)
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
    persp = np.array([[1, 0, 0], [0, 1, 0], [rng.uniform(-0.02, 0.02), rng.uniform(0.005, 0.03), 1.0]])
    scale = np.diag([rng.uniform(40, 90), rng.uniform(25, 60), 1.0])
    shift = np.array([[1, 0, 960.0], [0, 1, 540.0], [0, 0, 1]])
    center = np.array([[1, 0, -10.0], [0, 1, -7.5], [0, 0, 1]])
    g = shift @ scale @ persp @ rot @ center
    h = np.linalg.inv(g)
    return h / h[2, 2]


def map_to_image(h, pts):
    g = np.linalg.inv(h)
    q = np.c_[pts, np.ones(len(pts))] @ g.T
    return q[:, :2] / q[:, 2:3]


def make_pairs(h, rng, n):
    """n exact (image, map) pairs with map points spread over a 20x15 area."""
    map_pts = rng.uniform([0, 0], [20, 15], size=(n, 2))
    img_pts = map_to_image(h, map_pts)
    return [((float(u), float(v)), (float(x), float(y))) for (u, v), (x, y) in zip(img_pts, map_pts)]


def corrupt(pairs, rng, n_out):
    """Replace the map side of n_out pairs with far-away points; returns (pairs, outlier index set)."""
    idx = rng.choice(len(pairs), n_out, replace=False)
    out = list(pairs)
    for i in idx:
        (u, v), (x, y) = out[i]
        dx, dy = rng.uniform(4, 10, 2) * rng.choice([-1, 1], 2)
        out[i] = ((u, v), (x + dx, y + dy))
    return out, set(int(i) for i in idx)


def rel_frobenius(a, b):
    a = np.asarray(a) / a[2, 2]
    b = np.asarray(b) / b[2, 2]
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))
