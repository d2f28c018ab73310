"""Dominance, Pareto frontier extraction, exact hypervolume, aggregation.

All objective vectors are normalized maximized scores in [0, 1]; the
hypervolume reference point is the origin, so volumes live in [0, 1] too.
"""

from __future__ import annotations

from dataclasses import dataclass

MAX_HYPERVOLUME_DIM = 8


@dataclass(frozen=True)
class ObjectivePoint:
    values: tuple[float, ...]
    owner: str | None = None  # canonical SMILES of the owning molecule

    def __post_init__(self):
        if not all(0.0 <= v <= 1.0 for v in self.values):
            raise ValueError(f"objective values outside [0,1]: {self.values}")


def dominates(a, b) -> bool:
    """Non-strict componentwise dominance (a >= b in every objective)."""
    va = a.values if isinstance(a, ObjectivePoint) else tuple(a)
    vb = b.values if isinstance(b, ObjectivePoint) else tuple(b)
    if len(va) != len(vb):
        raise ValueError(f"dimension mismatch: {len(va)} != {len(vb)}")
    return all(x >= y for x, y in zip(va, vb))


def strictly_dominates(a, b) -> bool:
    va = a.values if isinstance(a, ObjectivePoint) else tuple(a)
    vb = b.values if isinstance(b, ObjectivePoint) else tuple(b)
    return dominates(va, vb) and va != vb


def pareto_frontier(points: list[ObjectivePoint]) -> list[ObjectivePoint]:
    """Non-dominated subset; one representative per duplicate vector
    (lowest owner key wins).  Sort-based sweep, distinct from the O(n^2)
    double loop used as the test oracle."""
    if not points:
        raise ValueError("pareto_frontier needs a nonempty point list")
    dims = len(points[0].values)
    if any(len(p.values) != dims for p in points):
        raise ValueError("inconsistent objective dimensions")

    # deduplicate by vector, keeping the lexicographically smallest owner
    best_rep: dict[tuple[float, ...], ObjectivePoint] = {}
    for p in points:
        cur = best_rep.get(p.values)
        if cur is None or (p.owner or "") < (cur.owner or ""):
            best_rep[p.values] = p
    unique = list(best_rep.values())

    # descending lexicographic sort: a point can only be dominated by one
    # sorted before it, so a single forward scan with a kept-list suffices
    unique.sort(key=lambda p: p.values, reverse=True)
    kept: list[ObjectivePoint] = []
    for p in unique:
        if not any(strictly_dominates(q, p) for q in kept):
            kept.append(p)
    return kept


def hypervolume(points: list[ObjectivePoint] | list[tuple[float, ...]]) -> float:
    """Exact Lebesgue measure of the union of boxes [0, p] by recursive
    dimension slicing."""
    vecs = [p.values if isinstance(p, ObjectivePoint) else tuple(p)
            for p in points]
    if not vecs:
        return 0.0
    dims = len(vecs[0])
    if any(len(v) != dims for v in vecs):
        raise ValueError("inconsistent objective dimensions")
    if dims > MAX_HYPERVOLUME_DIM:
        raise ValueError(f"hypervolume supports at most {MAX_HYPERVOLUME_DIM} dims")
    if any(not (0.0 <= x <= 1.0) for v in vecs for x in v):
        raise ValueError("hypervolume points must lie in [0,1]^n")
    return _hv(sorted(set(vecs), reverse=True))


def _hv(vecs: list[tuple[float, ...]]) -> float:
    dims = len(vecs[0])
    if dims == 1:
        return max(v[0] for v in vecs)
    # slice along the last dimension, descending
    levels = sorted({v[-1] for v in vecs}, reverse=True)
    total = 0.0
    prev = None
    active: list[tuple[float, ...]] = []
    for lev in levels:
        if prev is not None:
            total += (prev - lev) * _hv(active)
        active = [v[:-1] for v in vecs if v[-1] >= lev]
        prev = lev
    total += prev * _hv([v[:-1] for v in vecs])
    return total


def hypervolume_contributions(front: list[ObjectivePoint]) -> list[float]:
    full = hypervolume(front)
    out = []
    for i in range(len(front)):
        rest = front[:i] + front[i + 1:]
        out.append(full - (hypervolume(rest) if rest else 0.0))
    return out


def aggregate_sum(scores, weights) -> float:
    """Weighted sum of normalized maximized scores."""
    scores = tuple(scores)
    weights = tuple(weights)
    if len(scores) != len(weights):
        raise ValueError(f"length mismatch: {len(scores)} vs {len(weights)}")
    return sum(w * s for w, s in zip(weights, scores))


def select_pareto_survivors(points: list[ObjectivePoint], n_keep: int,
                            weights=None) -> list[ObjectivePoint]:
    """Pareto-mode survivor selection capped at n_keep.

    Oversized frontiers drop the lowest hypervolume contributors; undersized
    ones are padded with the best dominated points by weighted sum.
    """
    if n_keep <= 0:
        raise ValueError("n_keep must be positive")
    front = pareto_frontier(points)
    if len(front) > n_keep:
        front = list(front)
        while len(front) > n_keep:
            contribs = hypervolume_contributions(front)
            worst = min(range(len(front)),
                        key=lambda i: (contribs[i], front[i].values))
            front.pop(worst)
        return front
    if len(front) < n_keep:
        dims = len(points[0].values)
        w = tuple(weights) if weights is not None else (1.0,) * dims
        chosen = {id(p) for p in front}
        rest = [p for p in points if id(p) not in chosen]
        rest.sort(key=lambda p: (-aggregate_sum(p.values, w), p.values,
                                 p.owner or ""))
        seen_vecs = {p.values for p in front}
        out = list(front)
        for p in rest:
            if len(out) >= n_keep:
                break
            if p.values in seen_vecs:
                continue
            seen_vecs.add(p.values)
            out.append(p)
        return out
    return front
