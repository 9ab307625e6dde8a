"""Minimum-cost bipartite assignment shared by the tracker, the anchor
assignment and the identity metrics."""

from __future__ import annotations

import math
from typing import List, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment


def solve_assignment(cost, max_cost: float = math.inf) -> List[Tuple[int, int]]:
    """Optimal matching on a rectangular cost matrix.

    The full matching is solved first, then pairs costing more than
    ``max_cost`` are dropped. Output is sorted by (row, col). Equal-cost
    optima resolve the same way on every call because rows and columns are
    scanned in index order.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError(f"cost must be 2-D, got shape {c.shape}")
    if c.size == 0:
        return []
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix has non-finite entries")
    rows, cols = linear_sum_assignment(c)
    pairs = [(int(r), int(k)) for r, k in zip(rows, cols) if c[r, k] <= max_cost]
    pairs.sort()
    return pairs


def matching_cost(cost, pairs) -> float:
    c = np.asarray(cost, dtype=np.float64)
    return float(sum(c[r, k] for r, k in pairs))
