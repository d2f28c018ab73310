"""Run metrics: top-k AUC, structural and objective diversity.

Everything here is pure post-processing over an evaluation history, so a
report can always be recomputed from the persisted record alone.
"""

from __future__ import annotations

import heapq
import math
from itertools import combinations

from .fingerprint import morgan_fingerprint, tanimoto


def topk_curve(fitnesses: list[float], k: int) -> list[float]:
    """y_i = mean of the best k fitnesses among calls 1..i (all if fewer)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    heap: list[float] = []  # min-heap of current top-k
    total = 0.0
    curve = []
    for f in fitnesses:
        if len(heap) < k:
            heapq.heappush(heap, f)
            total += f
        elif f > heap[0]:
            total += f - heapq.heappushpop(heap, f)
        curve.append(total / len(heap))
    return curve


def topk_auc(fitnesses: list[float], k: int, budget: int) -> float:
    """Step-integrated AUC of the top-k running mean over the call budget.

    The curve is held constant after the last call (early termination), and
    the sum is divided by the full budget.
    """
    if not fitnesses:
        raise ValueError("empty run record")
    if k > budget:
        raise ValueError("k must not exceed the budget")
    curve = topk_curve(fitnesses[:budget], k)
    total = sum(curve)
    if len(curve) < budget:
        total += curve[-1] * (budget - len(curve))
    return total / budget


def structural_diversity(molecules) -> float:
    """Mean pairwise Tanimoto distance over Morgan fingerprints."""
    if len(molecules) < 2:
        raise ValueError("need at least 2 molecules")
    fps = [morgan_fingerprint(m) for m in molecules]
    dists = [1.0 - tanimoto(a, b) for a, b in combinations(fps, 2)]
    return sum(dists) / len(dists)


def objective_diversity(points) -> float:
    """Mean pairwise Euclidean distance between objective vectors."""
    vecs = [p.values if hasattr(p, "values") else tuple(p) for p in points]
    if len(vecs) < 2:
        raise ValueError("need at least 2 points")
    dims = len(vecs[0])
    if any(len(v) != dims for v in vecs):
        raise ValueError("dimension mismatch")
    dists = [math.dist(a, b) for a, b in combinations(vecs, 2)]
    return sum(dists) / len(dists)
