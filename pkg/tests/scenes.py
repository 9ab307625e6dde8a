"""Seeded synthetic scenarios shared by the acceptance and module tests."""

from mcpt.synthgen import Exit, Occlusion, Scenario, Swap

SEEDS = (0, 1, 2, 3, 4)


def noiseless(seed: int) -> Scenario:
    return Scenario(n_identities=4, n_cameras=3, n_frames=600, rng_seed=seed)


def with_swaps(seed: int) -> Scenario:
    """Three cross-camera swaps, each between the members of a similar-appearance pair."""
    return Scenario(
        n_identities=6,
        n_cameras=3,
        n_frames=600,
        similar_pairs=3,
        similar_distance=0.15,
        embedding_noise=0.05,
        swaps=(Swap(0, 60, 179, 1, 2), Swap(1, 240, 359, 3, 4), Swap(2, 420, 539, 5, 6)),
        rng_seed=seed,
    )


def corrupted(seed: int) -> Scenario:
    """Noisy embeddings, misses, false positives, nine occlusions and one exit/re-entry."""
    occl = []
    for start, pairs in ((60, ((1, 2), (3, 4), (6, 5))), (240, ((4, 3), (5, 6), (2, 1))), (420, ((6, 5), (1, 2), (3, 4)))):
        for cam, (occluder, occluded) in enumerate(pairs):
            occl.append(Occlusion(cam, start, start + 89, occluder, occluded))
    return Scenario(
        n_identities=6,
        n_cameras=3,
        n_frames=600,
        similar_pairs=3,
        embedding_noise=0.1,
        miss_rate=0.1,
        box_noise_px=2.0,
        fp_rate=0.1,
        occlusions=tuple(occl),
        exits=(Exit(5, 150, 249),),
        rng_seed=seed,
    )


def reentry(seed: int) -> Scenario:
    """Identity 2 leaves every view for 100 frames and comes back."""
    return Scenario(
        n_identities=4,
        n_cameras=3,
        n_frames=600,
        embedding_noise=0.1,
        miss_rate=0.05,
        exits=(Exit(2, 250, 349),),
        rng_seed=seed,
    )


def scale(seed: int = 0) -> Scenario:
    return Scenario(
        map_width=30.0,
        map_height=20.0,
        n_identities=10,
        n_cameras=6,
        n_frames=1000,
        embedding_noise=0.05,
        miss_rate=0.05,
        rng_seed=seed,
    )
